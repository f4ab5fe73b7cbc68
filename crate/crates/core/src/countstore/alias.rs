use thiserror::Error;

use crate::rng::{below, UniformSource};

#[derive(Debug, Error, PartialEq)]
pub enum AliasError {
    #[error("alias table needs at least one outcome")]
    Empty,
    #[error("weight of outcome {outcome} is {weight}, must be positive and finite")]
    BadWeight { outcome: u32, weight: f64 },
}

/// Walker/Vose alias table with integer thresholds.
///
/// Every bin holds `scale` units of probability mass split between its own
/// outcome (`threshold` units) and an alias. With integer weights the table
/// reproduces `weight_k / sum` exactly; real weights are first quantized to
/// 2^52 units in total.
#[derive(Clone, Debug, Default)]
pub struct AliasTable {
    outcome: Vec<u32>,
    alias: Vec<u32>,
    threshold: Vec<u64>,
    scale: u64,
    weight_total: u64,
    // construction scratch
    small: Vec<(u32, u128)>,
    large: Vec<(u32, u128)>,
}

const FLOAT_UNITS: f64 = (1u64 << 52) as f64;

impl AliasTable {
    /// Table over `(outcome, weight)` pairs with positive real weights.
    pub fn new(weights: &[(u32, f64)]) -> Result<Self, AliasError> {
        if weights.is_empty() {
            return Err(AliasError::Empty);
        }
        let mut sum = 0.0;
        for &(outcome, weight) in weights {
            if !(weight > 0.0 && weight.is_finite()) {
                return Err(AliasError::BadWeight { outcome, weight });
            }
            sum += weight;
        }
        let ints: Vec<(u32, u64)> = weights
            .iter()
            .map(|&(k, w)| (k, ((w / sum * FLOAT_UNITS).round() as u64).max(1)))
            .collect();
        let mut t = Self::default();
        t.rebuild(&ints)?;
        Ok(t)
    }

    /// Table over `(outcome, count)` pairs with positive integer weights.
    pub fn from_counts(counts: &[(u32, u32)]) -> Result<Self, AliasError> {
        let mut t = Self::default();
        t.rebuild_from_counts(counts)?;
        Ok(t)
    }

    /// Rebuilds in place from integer counts, reusing allocations.
    pub fn rebuild_from_counts(&mut self, counts: &[(u32, u32)]) -> Result<(), AliasError> {
        self.build(counts.iter().map(|&(k, c)| (k, c as u64)), counts.len())
    }

    pub fn rebuild(&mut self, weights: &[(u32, u64)]) -> Result<(), AliasError> {
        self.build(weights.iter().copied(), weights.len())
    }

    fn build(&mut self, weights: impl Iterator<Item = (u32, u64)> + Clone, bins: usize) -> Result<(), AliasError> {
        if bins == 0 {
            return Err(AliasError::Empty);
        }
        let mut total = 0u64;
        for (outcome, w) in weights.clone() {
            if w == 0 {
                return Err(AliasError::BadWeight { outcome, weight: 0.0 });
            }
            total += w;
        }
        // outcome k holds `bins * w_k` units, each bin holds `total` units
        self.outcome.clear();
        self.alias.clear();
        self.threshold.clear();
        self.outcome.resize(bins, 0);
        self.alias.resize(bins, 0);
        self.threshold.resize(bins, 0);
        self.small.clear();
        self.large.clear();
        let cap = total as u128;
        for (k, w) in weights {
            let mass = w as u128 * bins as u128;
            if mass < cap {
                self.small.push((k, mass));
            } else {
                self.large.push((k, mass));
            }
        }
        let mut bin = 0;
        while let Some((s, s_mass)) = self.small.pop() {
            let Some((l, l_mass)) = self.large.pop() else {
                // only reachable if the masses did not add up
                unreachable!("alias construction lost mass");
            };
            self.outcome[bin] = s;
            self.alias[bin] = l;
            self.threshold[bin] = s_mass as u64;
            bin += 1;
            let rest = l_mass - (cap - s_mass);
            if rest < cap {
                self.small.push((l, rest));
            } else {
                self.large.push((l, rest));
            }
        }
        // remaining large outcomes hold exactly `cap` units each
        while let Some((l, l_mass)) = self.large.pop() {
            debug_assert_eq!(l_mass, cap);
            self.outcome[bin] = l;
            self.alias[bin] = l;
            self.threshold[bin] = total;
            bin += 1;
        }
        debug_assert_eq!(bin, bins);
        self.scale = total;
        self.weight_total = total;
        debug_assert!(self.check_exact());
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.outcome.len()
    }

    /// Sum of the integer weights the table was built from.
    pub fn weight_total(&self) -> u64 {
        self.weight_total
    }

    /// Units of mass the table gives each outcome; divided by
    /// `bins * weight_total` this is the exact draw probability.
    pub fn mass(&self) -> Vec<(u32, u128)> {
        let mut m: Vec<(u32, u128)> = Vec::new();
        let mut add = |k: u32, v: u128| match m.iter_mut().find(|e| e.0 == k) {
            Some(e) => e.1 += v,
            None => m.push((k, v)),
        };
        for b in 0..self.bins() {
            add(self.outcome[b], self.threshold[b] as u128);
            add(self.alias[b], (self.scale - self.threshold[b]) as u128);
        }
        m.retain(|e| e.1 > 0);
        m.sort_unstable_by_key(|e| e.0);
        m
    }

    fn check_exact(&self) -> bool {
        let total: u128 = self.mass().iter().map(|e| e.1).sum();
        total == self.bins() as u128 * self.scale as u128
    }

    /// Draws one outcome using exactly two uniform words.
    #[inline]
    pub fn draw<U: UniformSource + ?Sized>(&self, rng: &mut U) -> u32 {
        let bin = below(rng.next_u64(), self.bins() as u64) as usize;
        let y = below(rng.next_u64(), self.scale);
        if y < self.threshold[bin] {
            self.outcome[bin]
        } else {
            self.alias[bin]
        }
    }
}

/// Free-function form of [`AliasTable::new`].
pub fn build_alias(weights: &[(u32, f64)]) -> Result<AliasTable, AliasError> {
    AliasTable::new(weights)
}

/// Free-function form of [`AliasTable::draw`].
pub fn alias_draw<U: UniformSource + ?Sized>(t: &AliasTable, rng: &mut U) -> u32 {
    t.draw(rng)
}
