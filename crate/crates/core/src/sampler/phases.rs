//! Initialization and the two reordered sweeps of one training iteration.
//!
//! The word phase walks columns: it settles each token's assignment with
//! the doc proposals stored during the previous document phase, then stores
//! fresh word proposals. The document phase walks rows and does the same
//! with the roles swapped. Each phase only ever holds one `c_w` or `c_d` in
//! memory and reads the global counts from the snapshot published at the
//! preceding phase boundary.

use thiserror::Error;

use super::mh::{acceptance_probability, ProposalKind, Smoothing};
use crate::countstore::{AliasTable, CountError, DocProposal, GlobalState, ProposalError, SparseCounts, WordProposal};
use crate::matrix::{reduce_sum, EntryView, Executor, SweepError, TokenTopicMatrix};
use crate::rng::{below, rng_at, unit_f64, Phase, PhaseStream, Purpose, RngKey};

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
}

/// Key of the initial value of `slot` (0 = assignment) for `token`.
pub fn init_key(seed: u64, token: u64, slot: usize) -> RngKey {
    RngKey {
        seed,
        iteration: 0,
        phase: Phase::Init,
        token,
        purpose: Purpose::Init(slot as u16),
        counter: 0,
    }
}

/// Draws every assignment and proposal slot uniformly from `[0, K)` and
/// returns the resulting global topic counts.
pub fn init_assignments(m: &mut TokenTopicMatrix, exec: &Executor, topics: usize, seed: u64) -> Vec<u64> {
    let parts = m
        .sweep_rows(
            exec,
            |_| vec![0u64; topics],
            |acc, row| {
                for i in 0..row.len() {
                    let token = row.token(i) as u64;
                    let slots = row.slots_mut(i);
                    for (s, v) in slots.iter_mut().enumerate() {
                        *v = below(rng_at(init_key(seed, token, s)), topics as u64) as u32;
                    }
                    acc[slots[0] as usize] += 1;
                }
                Ok::<_, PhaseError>(())
            },
        )
        .expect("initialization cannot fail");
    reduce_sum(parts, topics)
}

/// Runs the M-step MH chain of every token in `view` against the local
/// counts, keeping them exact as assignments move.
fn settle_chains<V: EntryView>(
    view: &mut V,
    counts: &mut SparseCounts,
    globals: &[u64],
    prior: f64,
    beta_bar: f64,
    stream: &PhaseStream,
) -> Result<(), CountError> {
    for i in 0..view.len() {
        let ts = stream.token(view.token(i) as u64);
        let mut s = view.assignment(i);
        for (j, &t) in view.proposals(i).iter().enumerate() {
            if t == s {
                continue;
            }
            let pi = acceptance_probability(
                counts.get(s),
                counts.get(t),
                prior,
                globals[s as usize],
                globals[t as usize],
                beta_bar,
            );
            if unit_f64(ts.value(Purpose::Accept(j as u16), 0)) < pi {
                counts.decrement(s)?;
                counts.increment(t);
                s = t;
            }
        }
        view.set_assignment(i, s);
    }
    Ok(())
}

struct WordWorker {
    counts: SparseCounts,
    pairs: Vec<(u32, u32)>,
    alias: AliasTable,
    acc: Vec<u64>,
}

/// Column sweep: accept stored doc proposals against `c_w`, then refill the
/// proposal slots from `q^word`. Returns the accumulated `c_k`.
pub fn word_phase(
    m: &mut TokenTopicMatrix,
    exec: &Executor,
    globals: &GlobalState,
    smoothing: &Smoothing,
    seed: u64,
    iteration: u32,
) -> Result<Vec<u64>, SweepError<PhaseError>> {
    let topics = globals.topics();
    let ck = globals.snapshot();
    let stream = PhaseStream::new(seed, iteration, Phase::Word);
    let prior = smoothing.local_prior(ProposalKind::Doc);
    let parts = m.sweep_columns(
        exec,
        |_| WordWorker {
            counts: SparseCounts::with_len(topics, 0),
            pairs: Vec::new(),
            alias: AliasTable::default(),
            acc: vec![0u64; topics],
        },
        |wk, col| {
            if col.is_empty() {
                return Ok(());
            }
            wk.counts.reset(topics, col.len());
            for i in 0..col.len() {
                wk.counts.try_increment(col.assignment(i))?;
            }
            settle_chains(col, &mut wk.counts, ck, prior, smoothing.beta_bar, &stream)?;

            wk.counts.sorted_into(&mut wk.pairs);
            wk.alias
                .rebuild_from_counts(&wk.pairs)
                .expect("non-empty column has positive counts");
            let q = WordProposal::new(&wk.alias, col.len() as u64, smoothing.beta, topics)?;
            for i in 0..col.len() {
                let ts = stream.token(col.token(i) as u64);
                for (j, p) in col.proposals_mut(i).iter_mut().enumerate() {
                    *p = q.draw(&mut ts.cursor(Purpose::Propose(j as u16)));
                }
            }
            for &(k, c) in &wk.pairs {
                wk.acc[k as usize] += c as u64;
            }
            Ok(())
        },
    )?;
    Ok(reduce_sum(parts.into_iter().map(|w| w.acc), topics))
}

struct DocWorker {
    counts: SparseCounts,
    row: Vec<u32>,
    acc: Vec<u64>,
}

/// Row sweep: accept stored word proposals against `c_d`, then refill the
/// proposal slots from `q^doc` by random positioning. Returns the
/// accumulated `c_k`.
pub fn document_phase(
    m: &mut TokenTopicMatrix,
    exec: &Executor,
    globals: &GlobalState,
    smoothing: &Smoothing,
    seed: u64,
    iteration: u32,
) -> Result<Vec<u64>, SweepError<PhaseError>> {
    let topics = globals.topics();
    let ck = globals.snapshot();
    let stream = PhaseStream::new(seed, iteration, Phase::Doc);
    let prior = smoothing.local_prior(ProposalKind::Word);
    let parts = m.sweep_rows(
        exec,
        |_| DocWorker {
            counts: SparseCounts::with_len(topics, 0),
            row: Vec::new(),
            acc: vec![0u64; topics],
        },
        |wk, row| {
            if row.is_empty() {
                return Ok(());
            }
            wk.counts.reset(topics, row.len());
            for i in 0..row.len() {
                wk.counts.try_increment(row.assignment(i))?;
            }
            settle_chains(row, &mut wk.counts, ck, prior, smoothing.beta_bar, &stream)?;

            wk.row.clear();
            wk.row.extend((0..row.len()).map(|i| row.assignment(i)));
            let q = DocProposal::new(&wk.row, smoothing.alpha, topics)?;
            for i in 0..row.len() {
                let ts = stream.token(row.token(i) as u64);
                for (j, p) in row.proposals_mut(i).iter_mut().enumerate() {
                    *p = q.draw(&mut ts.cursor(Purpose::Propose(j as u16)));
                }
            }
            for (k, c) in wk.counts.iter() {
                wk.acc[k as usize] += c as u64;
            }
            Ok(())
        },
    )?;
    Ok(reduce_sum(parts.into_iter().map(|w| w.acc), topics))
}
