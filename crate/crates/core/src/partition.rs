//! Load balancing of power-law sized rows and columns across workers.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PartitionError {
    #[error("worker count must be positive")]
    NoWorkers,
    #[error("imbalance index needs at least one bin with a positive total")]
    Degenerate,
}

/// Items assigned to bins, with the per-bin weight totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub owner: Vec<u32>,
    pub totals: Vec<u64>,
}

impl Partition {
    fn from_owner(weights: &[u64], owner: Vec<u32>, bins: usize) -> Self {
        let mut totals = vec![0u64; bins];
        for (&w, &b) in weights.iter().zip(&owner) {
            totals[b as usize] += w;
        }
        Self { owner, totals }
    }

    pub fn bins(&self) -> usize {
        self.totals.len()
    }

    /// Item ids per bin, each list in increasing id order.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut m = vec![Vec::new(); self.totals.len()];
        for (i, &b) in self.owner.iter().enumerate() {
            m[b as usize].push(i as u32);
        }
        m
    }

    pub fn imbalance(&self) -> Result<f64, PartitionError> {
        imbalance_index(&self.totals)
    }
}

/// Heaviest item first into the currently lightest bin.
///
/// Items are taken in decreasing weight, ties by lower item id; the target bin
/// is the one with the smallest running total, ties by lower bin id.
pub fn greedy_partition(weights: &[u64], bins: usize) -> Result<Partition, PartitionError> {
    if bins == 0 {
        return Err(PartitionError::NoWorkers);
    }
    let mut order: Vec<u32> = (0..weights.len() as u32).collect();
    order.sort_by_key(|&i| (Reverse(weights[i as usize]), i));

    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = (0..bins as u32).map(|b| Reverse((0, b))).collect();
    let mut owner = vec![0u32; weights.len()];
    for i in order {
        let Reverse((total, b)) = heap.pop().expect("bins > 0");
        owner[i as usize] = b;
        heap.push(Reverse((total + weights[i as usize], b)));
    }
    Ok(Partition::from_owner(weights, owner, bins))
}

/// Random shuffle, then equal item counts per bin.
pub fn static_partition<R: Rng + ?Sized>(
    weights: &[u64],
    bins: usize,
    rng: &mut R,
) -> Result<Partition, PartitionError> {
    if bins == 0 {
        return Err(PartitionError::NoWorkers);
    }
    let mut order: Vec<u32> = (0..weights.len() as u32).collect();
    order.shuffle(rng);
    let n = weights.len();
    let mut owner = vec![0u32; n];
    for (pos, &i) in order.iter().enumerate() {
        // bin sizes differ by at most one
        owner[i as usize] = (pos * bins / n.max(1)) as u32;
    }
    Ok(Partition::from_owner(weights, owner, bins))
}

/// Random shuffle, then contiguous slices of variable length whose
/// boundaries fall at multiples of `total / bins` of the running weight.
pub fn dynamic_partition<R: Rng + ?Sized>(
    weights: &[u64],
    bins: usize,
    rng: &mut R,
) -> Result<Partition, PartitionError> {
    if bins == 0 {
        return Err(PartitionError::NoWorkers);
    }
    let mut order: Vec<u32> = (0..weights.len() as u32).collect();
    order.shuffle(rng);
    let total: u128 = weights.iter().map(|&w| w as u128).sum::<u128>().max(1);
    let mut owner = vec![0u32; weights.len()];
    let mut before = 0u128;
    for &i in &order {
        let b = (before * bins as u128 / total).min(bins as u128 - 1);
        owner[i as usize] = b as u32;
        before += weights[i as usize] as u128;
    }
    Ok(Partition::from_owner(weights, owner, bins))
}

/// Largest bin total over the mean bin total, minus one.
pub fn imbalance_index(totals: &[u64]) -> Result<f64, PartitionError> {
    let sum: u128 = totals.iter().map(|&t| t as u128).sum();
    if totals.is_empty() || sum == 0 {
        return Err(PartitionError::Degenerate);
    }
    let max = *totals.iter().max().unwrap() as u128;
    let excess = max * totals.len() as u128 - sum;
    Ok(excess as f64 / sum as f64)
}

/// Expected term frequencies of a Zipf(`s`) vocabulary of `n` words drawn
/// over `tokens` tokens, floored at one occurrence per word.
pub fn zipf_weights(n: usize, s: f64, tokens: u64) -> Vec<u64> {
    let harmonic: f64 = (1..=n).map(|i| (i as f64).powf(-s)).sum();
    (1..=n)
        .map(|i| ((tokens as f64 * (i as f64).powf(-s) / harmonic).round() as u64).max(1))
        .collect()
}
