use crate::countstore::SparseCounts;
use crate::rng::unit_f64;

/// Which proposal produced the candidate topic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProposalKind {
    /// Candidate from `q^doc`; accepted against the word's counts `c_w`.
    Doc,
    /// Candidate from `q^word`; accepted against the document's counts `c_d`.
    Word,
}

/// Smoothing constants of the per-token target
/// `q(k) ∝ (C_dk + α)(C_wk + β) / (C_k + Vβ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Smoothing {
    pub alpha: f64,
    pub beta: f64,
    /// `Vβ`
    pub beta_bar: f64,
}

impl Smoothing {
    pub fn new(alpha: f64, beta: f64, vocab_size: usize) -> Self {
        Self {
            alpha,
            beta,
            beta_bar: vocab_size as f64 * beta,
        }
    }

    /// Prior added to the local counts the acceptance test reads.
    pub fn local_prior(&self, kind: ProposalKind) -> f64 {
        match kind {
            ProposalKind::Doc => self.beta,
            ProposalKind::Word => self.alpha,
        }
    }
}

/// `min{1, (n_t + prior)/(n_s + prior) · (C_s + Vβ)/(C_t + Vβ)}` for a move
/// from `s` to `t`, where `n` are the local counts the proposal did not use.
#[inline]
pub fn acceptance_probability(
    local_current: u32,
    local_proposed: u32,
    prior: f64,
    global_current: u64,
    global_proposed: u64,
    beta_bar: f64,
) -> f64 {
    let ratio = (local_proposed as f64 + prior) / (local_current as f64 + prior) * (global_current as f64 + beta_bar)
        / (global_proposed as f64 + beta_bar);
    ratio.min(1.0)
}

/// One MH step. `counts` is `c_w` for a doc proposal and `c_d` for a word
/// proposal; `globals` is the `c_k` snapshot; `u` is the single uniform word
/// spent on the test.
#[inline]
pub fn mh_accept(
    current: u32,
    proposed: u32,
    kind: ProposalKind,
    counts: &SparseCounts,
    globals: &[u64],
    smoothing: &Smoothing,
    u: u64,
) -> u32 {
    if proposed == current {
        return current;
    }
    let pi = acceptance_probability(
        counts.get(current),
        counts.get(proposed),
        smoothing.local_prior(kind),
        globals[current as usize],
        globals[proposed as usize],
        smoothing.beta_bar,
    );
    if unit_f64(u) < pi {
        proposed
    } else {
        current
    }
}
