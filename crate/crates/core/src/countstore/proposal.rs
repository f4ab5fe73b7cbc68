//! The two cheap proposal distributions driving the MH chain.
//!
//! Both are mixtures of a count part and a uniform part:
//!
//! * doc proposal `q(k) ∝ C_dk + α`: with probability `L_d / (L_d + Kα)` copy
//!   the assignment at a uniformly chosen position of the document,
//!   otherwise draw a uniform topic;
//! * word proposal `q(k) ∝ C_wk + β`: with probability `L_w / (L_w + Kβ)` draw
//!   from an alias table over the word's non-zero counts, otherwise draw a
//!   uniform topic.

use thiserror::Error;

use super::alias::AliasTable;
use super::sparse::SparseCounts;
use crate::rng::{below, unit_f64, UniformSource};

#[derive(Debug, Error, PartialEq)]
pub enum ProposalError {
    #[error("cannot propose from an empty row")]
    EmptyRow,
    #[error("alias table covers {table} assignments but the word has {len}")]
    StaleAlias { table: u64, len: u64 },
}

/// Sampler for `q^doc` over one document's current assignments.
#[derive(Clone, Copy, Debug)]
pub struct DocProposal<'a> {
    assignments: &'a [u32],
    count_share: f64,
    topics: u64,
}

impl<'a> DocProposal<'a> {
    pub fn new(assignments: &'a [u32], alpha: f64, topics: usize) -> Result<Self, ProposalError> {
        if assignments.is_empty() {
            return Err(ProposalError::EmptyRow);
        }
        let len = assignments.len() as f64;
        Ok(Self {
            assignments,
            count_share: len / (len + topics as f64 * alpha),
            topics: topics as u64,
        })
    }

    /// Uses two uniform words.
    #[inline]
    pub fn draw<U: UniformSource + ?Sized>(&self, rng: &mut U) -> u32 {
        let pick = unit_f64(rng.next_u64()) < self.count_share;
        let u = rng.next_u64();
        if pick {
            self.assignments[below(u, self.assignments.len() as u64) as usize]
        } else {
            below(u, self.topics) as u32
        }
    }
}

/// Sampler for `q^word` given the word's counts and an alias table over them.
#[derive(Clone, Copy, Debug)]
pub struct WordProposal<'a> {
    alias: &'a AliasTable,
    count_share: f64,
    topics: u64,
}

impl<'a> WordProposal<'a> {
    /// `alias` must be built over the non-zero entries of the word's counts,
    /// which sum to `len`.
    pub fn new(alias: &'a AliasTable, len: u64, beta: f64, topics: usize) -> Result<Self, ProposalError> {
        if len == 0 {
            return Err(ProposalError::EmptyRow);
        }
        if alias.weight_total() != len {
            return Err(ProposalError::StaleAlias {
                table: alias.weight_total(),
                len,
            });
        }
        let l = len as f64;
        Ok(Self {
            alias,
            count_share: l / (l + topics as f64 * beta),
            topics: topics as u64,
        })
    }

    /// Uses three uniform words on the count branch, two on the uniform one.
    #[inline]
    pub fn draw<U: UniformSource + ?Sized>(&self, rng: &mut U) -> u32 {
        if unit_f64(rng.next_u64()) < self.count_share {
            self.alias.draw(rng)
        } else {
            below(rng.next_u64(), self.topics) as u32
        }
    }
}

pub fn draw_doc_proposal<U: UniformSource + ?Sized>(
    row_assignments: &[u32],
    alpha: f64,
    topics: usize,
    rng: &mut U,
) -> Result<u32, ProposalError> {
    Ok(DocProposal::new(row_assignments, alpha, topics)?.draw(rng))
}

pub fn draw_word_proposal<U: UniformSource + ?Sized>(
    word_counts: &SparseCounts,
    beta: f64,
    topics: usize,
    rng: &mut U,
    cached_alias: &AliasTable,
) -> Result<u32, ProposalError> {
    Ok(WordProposal::new(cached_alias, word_counts.total(), beta, topics)?.draw(rng))
}

/// Exact `q^doc` law, `(C_dk + α) / (L_d + Kα)`.
pub fn doc_proposal_law(counts: &[u32], alpha: f64) -> Vec<f64> {
    smoothed_law(counts, alpha)
}

/// Exact `q^word` law, `(C_wk + β) / (L_w + Kβ)`.
pub fn word_proposal_law(counts: &[u32], beta: f64) -> Vec<f64> {
    smoothed_law(counts, beta)
}

fn smoothed_law(counts: &[u32], prior: f64) -> Vec<f64> {
    let z: f64 = counts.iter().map(|&c| c as f64 + prior).sum();
    counts.iter().map(|&c| (c as f64 + prior) / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tv(hits: &[u64], law: &[f64]) -> f64 {
        let n: u64 = hits.iter().sum();
        0.5 * hits
            .iter()
            .zip(law)
            .map(|(&h, &p)| (h as f64 / n as f64 - p).abs())
            .sum::<f64>()
    }

    #[test]
    fn doc_without_prior_copies_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut src = RandSource(&mut rng);
        for _ in 0..1000 {
            assert_eq!(draw_doc_proposal(&[2, 2, 2, 2], 0.0, 5, &mut src).unwrap(), 2);
        }
    }

    #[test]
    fn doc_mixture_probability() {
        // P(0) = 1/2 * 1 + 1/2 * 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut src = RandSource(&mut rng);
        let p = DocProposal::new(&[0], 0.5, 2).unwrap();
        let n = 100_000;
        let zeros = (0..n).filter(|_| p.draw(&mut src) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn doc_large_prior_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut src = RandSource(&mut rng);
        let p = DocProposal::new(&[1, 1, 3, 0, 1], 1e6, 4).unwrap();
        let mut hits = [0u64; 4];
        for _ in 0..100_000 {
            hits[p.draw(&mut src) as usize] += 1;
        }
        assert!(tv(&hits, &[0.25; 4]) < 0.02);
    }

    #[test]
    fn empty_row_rejected() {
        assert_eq!(DocProposal::new(&[], 1.0, 3).unwrap_err(), ProposalError::EmptyRow);
    }

    #[test]
    fn word_without_prior_copies_counts() {
        let c = SparseCounts::from_assignments(&[5, 5, 5], 8).unwrap();
        let alias = AliasTable::from_counts(&[(5, 3)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut src = RandSource(&mut rng);
        for _ in 0..1000 {
            assert_eq!(draw_word_proposal(&c, 0.0, 8, &mut src, &alias).unwrap(), 5);
        }
    }

    #[test]
    fn word_mixture_probability() {
        // K=2, beta=1, c_w={0:2}: P(0) = 2/4 + 2/4 * 1/2
        let alias = AliasTable::from_counts(&[(0, 2)]).unwrap();
        let p = WordProposal::new(&alias, 2, 1.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut src = RandSource(&mut rng);
        let n = 100_000;
        let zeros = (0..n).filter(|_| p.draw(&mut src) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn stale_alias_rejected() {
        let alias = AliasTable::from_counts(&[(0, 2)]).unwrap();
        assert_eq!(
            WordProposal::new(&alias, 3, 1.0, 2).unwrap_err(),
            ProposalError::StaleAlias { table: 2, len: 3 }
        );
    }

    #[test]
    fn word_full_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let zs: Vec<u32> = (0..40).map(|_| rng.random_range(0..16)).collect();
        let c = SparseCounts::from_assignments(&zs, 16).unwrap();
        let mut pairs = Vec::new();
        c.sorted_into(&mut pairs);
        let alias = AliasTable::from_counts(&pairs).unwrap();
        let p = WordProposal::new(&alias, c.total(), 0.3, 16).unwrap();
        let mut hits = [0u64; 16];
        let mut src = RandSource(&mut rng);
        for _ in 0..1_000_000 {
            hits[p.draw(&mut src) as usize] += 1;
        }
        let law = word_proposal_law(&c.to_dense(), 0.3);
        assert!(tv(&hits, &law) <= 0.01);
    }

    #[test]
    fn laws_are_normalized() {
        let law = doc_proposal_law(&[3, 0, 1], 0.5);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((law[0] - 3.5 / 5.5).abs() < 1e-15);
    }
}
