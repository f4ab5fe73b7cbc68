//! Reference samplers: plain collapsed Gibbs sampling and an unreordered
//! MCEM pass over dense counts. Both are slow on purpose and exist to check
//! the fast path.

use rand::Rng;
use thiserror::Error;

use crate::corpus::Corpus;
use crate::countstore::{AliasTable, DocProposal, WordProposal};
use crate::eval::TopicCounts;
use crate::matrix::TokenTopicMatrix;
use crate::rng::{below, rng_at, unit_f64, Phase, PhaseStream, Purpose};
use crate::sampler::{acceptance_probability, init_key, Smoothing};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("token {token} of document {doc} has topic {topic} but its counts are already zero")]
    Inconsistent { doc: usize, token: usize, topic: u32 },
    #[error("assignments cover {got} tokens in document {doc}, which has {expected}")]
    Shape { doc: usize, expected: usize, got: usize },
}

/// Dense `C_dk`, `C_wk` and `C_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DenseCounts {
    pub topics: usize,
    /// D x K, row-major.
    pub doc_topic: Vec<u32>,
    /// V x K, row-major.
    pub word_topic: Vec<u32>,
    pub topic_totals: Vec<u64>,
}

impl DenseCounts {
    pub fn zeros(docs: usize, words: usize, topics: usize) -> Self {
        Self {
            topics,
            doc_topic: vec![0; docs * topics],
            word_topic: vec![0; words * topics],
            topic_totals: vec![0; topics],
        }
    }

    pub fn from_assignments(corpus: &Corpus, z: &[Vec<u32>], topics: usize) -> Result<Self, BaselineError> {
        let mut c = Self::zeros(corpus.doc_count(), corpus.vocab_size(), topics);
        for (d, doc) in corpus.docs().iter().enumerate() {
            if z[d].len() != doc.len() {
                return Err(BaselineError::Shape {
                    doc: d,
                    expected: doc.len(),
                    got: z[d].len(),
                });
            }
            for (&w, &k) in doc.iter().zip(&z[d]) {
                c.add(d, w as usize, k);
            }
        }
        Ok(c)
    }

    #[inline]
    pub fn doc(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.topics..(d + 1) * self.topics]
    }

    #[inline]
    pub fn word(&self, w: usize) -> &[u32] {
        &self.word_topic[w * self.topics..(w + 1) * self.topics]
    }

    #[inline]
    fn add(&mut self, d: usize, w: usize, k: u32) {
        let k = k as usize;
        self.doc_topic[d * self.topics + k] += 1;
        self.word_topic[w * self.topics + k] += 1;
        self.topic_totals[k] += 1;
    }

    #[inline]
    fn remove(&mut self, d: usize, w: usize, k: u32) -> bool {
        let k = k as usize;
        let (dk, wk) = (d * self.topics + k, w * self.topics + k);
        if self.doc_topic[dk] == 0 || self.word_topic[wk] == 0 || self.topic_totals[k] == 0 {
            return false;
        }
        self.doc_topic[dk] -= 1;
        self.word_topic[wk] -= 1;
        self.topic_totals[k] -= 1;
        true
    }
}

impl TopicCounts for DenseCounts {
    fn topics(&self) -> usize {
        self.topics
    }
    fn doc_count(&self) -> usize {
        self.doc_topic.len() / self.topics
    }
    fn vocab_size(&self) -> usize {
        self.word_topic.len() / self.topics
    }
    fn doc_nonzeros(&self, d: usize, out: &mut Vec<u64>) {
        out.clear();
        out.extend(self.doc(d).iter().filter(|&&c| c > 0).map(|&c| c as u64));
    }
    fn word_nonzeros(&self, w: usize, out: &mut Vec<u64>) {
        out.clear();
        out.extend(self.word(w).iter().filter(|&&c| c > 0).map(|&c| c as u64));
    }
    fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }
}

/// Uniform random initial assignments for CGS.
pub fn random_assignments<R: Rng + ?Sized>(corpus: &Corpus, topics: usize, rng: &mut R) -> Vec<Vec<u32>> {
    corpus
        .docs()
        .iter()
        .map(|doc| doc.iter().map(|_| rng.random_range(0..topics as u32)).collect())
        .collect()
}

/// One collapsed Gibbs sweep in document order. Each token is removed from
/// the counts, resampled from its exact conditional by linear scan, and
/// added back.
pub fn cgs_iteration<R: Rng + ?Sized>(
    corpus: &Corpus,
    z: &mut [Vec<u32>],
    counts: &mut DenseCounts,
    smoothing: &Smoothing,
    rng: &mut R,
) -> Result<(), BaselineError> {
    let k = counts.topics;
    let (alpha, beta) = (smoothing.alpha, smoothing.beta);
    let mut inv: Vec<f64> = counts
        .topic_totals
        .iter()
        .map(|&c| 1.0 / (c as f64 + smoothing.beta_bar))
        .collect();
    let mut cdf = vec![0.0f64; k];
    for (d, doc) in corpus.docs().iter().enumerate() {
        for (n, &w) in doc.iter().enumerate() {
            let w = w as usize;
            let old = z[d][n];
            if !counts.remove(d, w, old) {
                return Err(BaselineError::Inconsistent {
                    doc: d,
                    token: n,
                    topic: old,
                });
            }
            inv[old as usize] = 1.0 / (counts.topic_totals[old as usize] as f64 + smoothing.beta_bar);

            let (cd, cw) = (d * k, w * k);
            let mut acc = 0.0;
            for t in 0..k {
                acc += (counts.doc_topic[cd + t] as f64 + alpha) * (counts.word_topic[cw + t] as f64 + beta) * inv[t];
                cdf[t] = acc;
            }
            let u = rng.random::<f64>() * acc;
            let new = cdf.partition_point(|&c| c <= u).min(k - 1) as u32;

            counts.add(d, w, new);
            inv[new as usize] = 1.0 / (counts.topic_totals[new as usize] as f64 + smoothing.beta_bar);
            z[d][n] = new;
        }
    }
    Ok(())
}

/// Exact `q(k) ∝ (C_dk + α)(C_wk + β) / (C_k + β̄)`, normalized.
pub fn enumerate_token_posterior(doc: &[u32], word: &[u32], totals: &[u64], smoothing: &Smoothing) -> Vec<f64> {
    let mut p: Vec<f64> = (0..totals.len())
        .map(|k| {
            (doc[k] as f64 + smoothing.alpha) * (word[k] as f64 + smoothing.beta)
                / (totals[k] as f64 + smoothing.beta_bar)
        })
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// WarpLDA state held in plain document order: tokens of each document are
/// sorted by word id (stable), which is the global token numbering the
/// random keys use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NaiveMcem {
    pub topics: usize,
    pub proposals: usize,
    pub seed: u64,
    vocab_size: usize,
    /// Start offset of each document in the flat token arrays.
    offsets: Vec<usize>,
    /// Word id of every token.
    words: Vec<u32>,
    /// Assignment of every token.
    pub assignments: Vec<u32>,
    /// `proposals` slots per token.
    pub proposal_slots: Vec<u32>,
    pub topic_totals: Vec<u64>,
}

impl NaiveMcem {
    /// Draws the same initial state as the fast sampler for `seed`.
    pub fn new(corpus: &Corpus, topics: usize, proposals: usize, seed: u64) -> Self {
        let mut offsets = Vec::with_capacity(corpus.doc_count() + 1);
        let mut words = Vec::with_capacity(corpus.token_total() as usize);
        offsets.push(0);
        for doc in corpus.docs() {
            let mut sorted = doc.clone();
            sorted.sort();
            words.extend(sorted);
            offsets.push(words.len());
        }
        let t = words.len();
        let draw = |tok: usize, slot: usize| below(rng_at(init_key(seed, tok as u64, slot)), topics as u64) as u32;
        let assignments: Vec<u32> = (0..t).map(|i| draw(i, 0)).collect();
        let mut proposal_slots = Vec::with_capacity(t * proposals);
        for i in 0..t {
            proposal_slots.extend((1..=proposals).map(|s| draw(i, s)));
        }
        let mut topic_totals = vec![0u64; topics];
        for &k in &assignments {
            topic_totals[k as usize] += 1;
        }
        Self {
            topics,
            proposals,
            seed,
            vocab_size: corpus.vocab_size(),
            offsets,
            words,
            assignments,
            proposal_slots,
            topic_totals,
        }
    }

    pub fn token_total(&self) -> usize {
        self.words.len()
    }

    fn docs(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.offsets.windows(2).map(|w| w[0]..w[1])
    }

    /// Runs the MH chain of token `i` against the dense local counts `local`
    /// (either `c_w` or `c_d`), updating them on every accepted move.
    fn settle(&mut self, i: usize, local: &mut [u32], prior: f64, beta_bar: f64, stream: &PhaseStream) {
        let m = self.proposals;
        let ts = stream.token(i as u64);
        let mut s = self.assignments[i];
        for j in 0..m {
            let t = self.proposal_slots[i * m + j];
            if t == s {
                continue;
            }
            let pi = acceptance_probability(
                local[s as usize],
                local[t as usize],
                prior,
                self.topic_totals[s as usize],
                self.topic_totals[t as usize],
                beta_bar,
            );
            if unit_f64(ts.value(Purpose::Accept(j as u16), 0)) < pi {
                local[s as usize] -= 1;
                local[t as usize] += 1;
                s = t;
            }
        }
        self.assignments[i] = s;
    }

    fn recount_totals(&mut self) {
        self.topic_totals.iter_mut().for_each(|c| *c = 0);
        for &k in &self.assignments {
            self.topic_totals[k as usize] += 1;
        }
    }

    /// Word phase then document phase of iteration `iteration`.
    pub fn iteration(&mut self, smoothing: &Smoothing, iteration: u32) {
        self.word_pass(smoothing, iteration);
        self.doc_pass(smoothing, iteration);
    }

    fn word_pass(&mut self, smoothing: &Smoothing, iteration: u32) {
        let (k, m) = (self.topics, self.proposals);
        let stream = PhaseStream::new(self.seed, iteration, Phase::Word);
        let mut cw = vec![0u32; self.vocab_size * k];
        for i in 0..self.token_total() {
            cw[self.words[i] as usize * k + self.assignments[i] as usize] += 1;
        }
        for i in 0..self.token_total() {
            let w = self.words[i] as usize;
            self.settle(
                i,
                &mut cw[w * k..(w + 1) * k],
                smoothing.beta,
                smoothing.beta_bar,
                &stream,
            );
        }

        let mut tables: Vec<Option<AliasTable>> = vec![None; self.vocab_size];
        for i in 0..self.token_total() {
            let w = self.words[i] as usize;
            let row = &cw[w * k..(w + 1) * k];
            let table = tables[w].get_or_insert_with(|| {
                let pairs: Vec<(u32, u32)> = row
                    .iter()
                    .enumerate()
                    .filter(|e| *e.1 > 0)
                    .map(|(t, &c)| (t as u32, c))
                    .collect();
                AliasTable::from_counts(&pairs).expect("word has tokens")
            });
            let len = row.iter().map(|&c| c as u64).sum();
            let q = WordProposal::new(table, len, smoothing.beta, k).expect("fresh table");
            let ts = stream.token(i as u64);
            for j in 0..m {
                self.proposal_slots[i * m + j] = q.draw(&mut ts.cursor(Purpose::Propose(j as u16)));
            }
        }
        self.recount_totals();
    }

    fn doc_pass(&mut self, smoothing: &Smoothing, iteration: u32) {
        let (k, m) = (self.topics, self.proposals);
        let stream = PhaseStream::new(self.seed, iteration, Phase::Doc);
        let ranges: Vec<_> = self.docs().collect();
        let mut cd = vec![0u32; ranges.len() * k];
        for (d, r) in ranges.iter().enumerate() {
            for i in r.clone() {
                cd[d * k + self.assignments[i] as usize] += 1;
            }
        }
        for (d, r) in ranges.iter().enumerate() {
            for i in r.clone() {
                self.settle(
                    i,
                    &mut cd[d * k..(d + 1) * k],
                    smoothing.alpha,
                    smoothing.beta_bar,
                    &stream,
                );
            }
        }
        for r in ranges {
            if r.is_empty() {
                continue;
            }
            let row = self.assignments[r.clone()].to_vec();
            let q = DocProposal::new(&row, smoothing.alpha, k).expect("non-empty document");
            for i in r {
                let ts = stream.token(i as u64);
                for j in 0..m {
                    self.proposal_slots[i * m + j] = q.draw(&mut ts.cursor(Purpose::Propose(j as u16)));
                }
            }
        }
        self.recount_totals();
    }

    /// Assignments in document order, comparable with
    /// `TokenTopicMatrix::slot_row_major(0)`.
    pub fn assignments_row_major(&self) -> &[u32] {
        &self.assignments
    }

    /// True when `m` holds exactly this state (assignments and proposals).
    pub fn matches(&self, m: &TokenTopicMatrix) -> bool {
        if m.entry_total() != self.token_total() || m.proposals() != self.proposals {
            return false;
        }
        if m.slot_row_major(0) != self.assignments {
            return false;
        }
        (0..self.proposals).all(|j| {
            m.slot_row_major(j + 1)
                .iter()
                .enumerate()
                .all(|(i, &p)| p == self.proposal_slots[i * self.proposals + j])
        })
    }
}

/// One naive MCEM iteration; see [`NaiveMcem::iteration`].
pub fn naive_mcem_iteration(state: &mut NaiveMcem, smoothing: &Smoothing, iteration: u32) {
    state.iteration(smoothing, iteration);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::log_joint_likelihood;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn posterior_example() {
        let s = Smoothing::new(1.0, 1.0, 3);
        let p = enumerate_token_posterior(&[1, 0], &[0, 2], &[4, 4], &s);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let u = enumerate_token_posterior(&[0; 5], &[0; 5], &[0; 5], &Smoothing::new(0.3, 0.1, 9));
        assert!(u.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn cgs_single_topic_is_fixed() {
        let c = Corpus::with_anonymous_vocab(vec![vec![0, 1, 1], vec![2]], 3).unwrap();
        let mut z = vec![vec![0; 3], vec![0]];
        let mut counts = DenseCounts::from_assignments(&c, &z, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        cgs_iteration(&c, &mut z, &mut counts, &Smoothing::new(1.0, 0.1, 3), &mut rng).unwrap();
        assert_eq!(z, vec![vec![0; 3], vec![0]]);
    }

    #[test]
    fn cgs_one_token_is_uniform() {
        let c = Corpus::with_anonymous_vocab(vec![vec![0]], 1).unwrap();
        let s = Smoothing::new(0.5, 0.5, 1);
        let mut z = vec![vec![0]];
        let mut counts = DenseCounts::from_assignments(&c, &z, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ones = 0;
        let n = 100_000;
        for _ in 0..n {
            cgs_iteration(&c, &mut z, &mut counts, &s, &mut rng).unwrap();
            ones += z[0][0];
        }
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        assert_eq!(counts, DenseCounts::from_assignments(&c, &z, 2).unwrap());
    }

    #[test]
    fn cgs_detects_inconsistent_counts() {
        let c = Corpus::with_anonymous_vocab(vec![vec![0]], 1).unwrap();
        let mut z = vec![vec![1]];
        let mut counts = DenseCounts::zeros(1, 1, 2);
        counts.add(0, 0, 0);
        let err = cgs_iteration(
            &c,
            &mut z,
            &mut counts,
            &Smoothing::new(1.0, 1.0, 1),
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert_eq!(
            err,
            Err(BaselineError::Inconsistent {
                doc: 0,
                token: 0,
                topic: 1
            })
        );
    }

    /// Two tokens, K = 2: the chain over the four joint states must match
    /// `p(Z | W) ∝ exp(log joint)`.
    #[test]
    fn cgs_stationary_distribution() {
        let c = Corpus::with_anonymous_vocab(vec![vec![0, 0]], 2).unwrap();
        let (alpha, beta) = (0.7, 0.4);
        let s = Smoothing::new(alpha, beta, 2);
        let states: Vec<Vec<Vec<u32>>> = (0..4u32).map(|b| vec![vec![b & 1, b >> 1]]).collect();
        let logp: Vec<f64> = states
            .iter()
            .map(|z| log_joint_likelihood(&DenseCounts::from_assignments(&c, z, 2).unwrap(), alpha, beta).unwrap())
            .collect();
        let mx = logp.iter().cloned().fold(f64::MIN, f64::max);
        let zsum: f64 = logp.iter().map(|l| (l - mx).exp()).sum();
        let exact: Vec<f64> = logp.iter().map(|l| (l - mx).exp() / zsum).collect();

        let mut z = states[0].clone();
        let mut counts = DenseCounts::from_assignments(&c, &z, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut hist = [0u64; 4];
        let sweeps = 1_000_000;
        for _ in 0..sweeps {
            cgs_iteration(&c, &mut z, &mut counts, &s, &mut rng).unwrap();
            hist[(z[0][0] | z[0][1] << 1) as usize] += 1;
        }
        let tv: f64 = hist
            .iter()
            .zip(&exact)
            .map(|(&h, &p)| (h as f64 / sweeps as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn naive_single_topic_is_fixed() {
        let c = Corpus::with_anonymous_vocab(vec![vec![1, 0, 1], vec![2, 2]], 3).unwrap();
        let mut st = NaiveMcem::new(&c, 1, 2, 4);
        let before = st.clone();
        naive_mcem_iteration(&mut st, &Smoothing::new(1.0, 0.1, 3), 1);
        assert_eq!(st, before);
    }

    #[test]
    fn naive_conserves_counts() {
        let c = Corpus::with_anonymous_vocab(vec![vec![1, 0, 1, 3], vec![2, 2], vec![0, 3, 3]], 4).unwrap();
        let mut st = NaiveMcem::new(&c, 3, 2, 4);
        let s = Smoothing::new(0.5, 0.1, 4);
        for it in 1..=5 {
            naive_mcem_iteration(&mut st, &s, it);
            assert_eq!(st.topic_totals.iter().sum::<u64>(), 9);
            assert!(st.assignments.iter().all(|&k| k < 3));
            assert!(st.proposal_slots.iter().all(|&k| k < 3));
        }
    }
}
