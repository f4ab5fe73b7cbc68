//! Log joint likelihood and per-iteration metrics.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln Γ(x)` for `x > 0`.
///
/// Arguments below 10 are shifted up with the recurrence
/// `Γ(x) = Γ(x + n) / (x (x+1) ... (x+n-1))`; the Stirling series with seven
/// correction terms then has truncation error below 1e-16 for `x >= 10`.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma needs a positive argument, got {x}");
    if x < 10.0 {
        let mut prod = 1.0;
        let mut y = x;
        while y < 10.0 {
            prod *= y;
            y += 1.0;
        }
        return stirling(y) - prod.ln();
    }
    stirling(x)
}

fn stirling(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    let series = r
        * (1.0 / 12.0
            - r2 * (1.0 / 360.0
                - r2 * (1.0 / 1260.0
                    - r2 * (1.0 / 1680.0 - r2 * (1.0 / 1188.0 - r2 * (691.0 / 360_360.0 - r2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

#[derive(Debug, Error, PartialEq)]
pub enum LikelihoodError {
    #[error("alpha and beta must be positive (alpha = {alpha}, beta = {beta})")]
    Prior { alpha: f64, beta: f64 },
    #[error("document counts sum to {docs}, word counts to {words}, topic totals to {totals}")]
    Inconsistent { docs: u64, words: u64, totals: u64 },
}

/// Read access to the count matrices `C_d`, `C_w` and totals `C_k`.
///
/// Only non-zero counts are reported; their topic ids do not matter to the
/// likelihood.
pub trait TopicCounts {
    fn topics(&self) -> usize;
    fn doc_count(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn doc_nonzeros(&self, d: usize, out: &mut Vec<u64>);
    fn word_nonzeros(&self, w: usize, out: &mut Vec<u64>);
    fn topic_totals(&self) -> &[u64];
}

/// `ln p(W, Z | α, β)` with symmetric priors, `ᾱ = Kα`, `β̄ = Vβ`:
///
/// ```text
/// Σ_d [lnΓ(ᾱ) − lnΓ(ᾱ+L_d) + Σ_k (lnΓ(α+C_dk) − lnΓ(α))]
///   + Σ_k [lnΓ(β̄) − lnΓ(β̄+C_k) + Σ_w (lnΓ(β+C_wk) − lnΓ(β))]
/// ```
///
/// Zero counts contribute nothing and are skipped. Summation runs in index
/// order, so the result is reproducible bit for bit.
pub fn log_joint_likelihood<C: TopicCounts + ?Sized>(
    counts: &C,
    alpha: f64,
    beta: f64,
) -> Result<f64, LikelihoodError> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(LikelihoodError::Prior { alpha, beta });
    }
    let k = counts.topics() as f64;
    let v = counts.vocab_size() as f64;
    let (alpha_bar, beta_bar) = (k * alpha, v * beta);
    let (lg_alpha, lg_beta) = (ln_gamma(alpha), ln_gamma(beta));
    let (lg_alpha_bar, lg_beta_bar) = (ln_gamma(alpha_bar), ln_gamma(beta_bar));

    let mut buf = Vec::new();
    let mut doc_part = 0.0;
    let mut doc_tokens = 0u64;
    for d in 0..counts.doc_count() {
        counts.doc_nonzeros(d, &mut buf);
        let len: u64 = buf.iter().sum();
        if len == 0 {
            continue;
        }
        doc_tokens += len;
        let mut s = lg_alpha_bar - ln_gamma(alpha_bar + len as f64);
        for &c in &buf {
            s += ln_gamma(alpha + c as f64) - lg_alpha;
        }
        doc_part += s;
    }

    let mut word_part = 0.0;
    let mut word_tokens = 0u64;
    for w in 0..counts.vocab_size() {
        counts.word_nonzeros(w, &mut buf);
        for &c in &buf {
            word_tokens += c;
            word_part += ln_gamma(beta + c as f64) - lg_beta;
        }
    }
    let mut total_tokens = 0u64;
    for &c in counts.topic_totals() {
        total_tokens += c;
        if c > 0 {
            word_part += lg_beta_bar - ln_gamma(beta_bar + c as f64);
        }
    }
    if doc_tokens != word_tokens || word_tokens != total_tokens {
        return Err(LikelihoodError::Inconsistent {
            docs: doc_tokens,
            words: word_tokens,
            totals: total_tokens,
        });
    }
    Ok(doc_part + word_part)
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    #[serde(rename = "iter")]
    pub iteration: u32,
    #[serde(rename = "loglik")]
    pub log_likelihood: f64,
    pub seconds: f64,
    pub tokens_per_sec: f64,
}

impl IterationMetrics {
    pub fn new(iteration: u32, log_likelihood: f64, seconds: f64, tokens: u64) -> Self {
        let tokens_per_sec = if seconds > 0.0 { tokens as f64 / seconds } else { 0.0 };
        Self {
            iteration,
            log_likelihood,
            seconds,
            tokens_per_sec,
        }
    }
}

pub trait MetricsSink {
    fn record(&mut self, m: &IterationMetrics) -> io::Result<()>;
}

impl MetricsSink for Vec<IterationMetrics> {
    fn record(&mut self, m: &IterationMetrics) -> io::Result<()> {
        self.push(m.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _: &IterationMetrics) -> io::Result<()> {
        Ok(())
    }
}

/// JSON-lines writer, flushed after every record.
pub struct JsonLinesSink<W: Write> {
    out: W,
}

impl<W: Write> JsonLinesSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for JsonLinesSink<W> {
    fn record(&mut self, m: &IterationMetrics) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, m)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

pub fn record_metrics<S: MetricsSink + ?Sized>(sink: &mut S, m: &IterationMetrics) -> io::Result<()> {
    sink.record(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::ModelCounts;

    #[test]
    fn ln_gamma_reference_values() {
        // (x, ln Γ(x)) from mpmath at 30 digits
        let cases = [
            (0.01, 4.599_479_878_042_022),
            (0.5, 0.572_364_942_924_700_1),
            (3.0, std::f64::consts::LN_2),
            (7.25, 7.052_185_450_738_539),
            (10.0, 12.801_827_480_081_469),
            (123.456, 469.605_547_129_929_5),
            (1.0e6, 12_815_504.569_147_612),
            (1.0e12, 2.663_102_111_591_565_2e13),
        ];
        for (x, want) in cases {
            let got = ln_gamma(x);
            assert!(((got - want) / want).abs() < 1e-12, "lnΓ({x}) = {got}, want {want}");
        }
        // roots: only absolute accuracy is meaningful
        assert!(ln_gamma(1.0).abs() < 1e-14);
        assert!(ln_gamma(2.0).abs() < 1e-14);
    }

    #[test]
    fn ln_gamma_recurrence() {
        for i in 1..2000 {
            let x = i as f64 * 0.037;
            let lhs = ln_gamma(x + 1.0);
            let rhs = ln_gamma(x) + x.ln();
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0), "x = {x}");
        }
    }

    fn counts(doc: Vec<Vec<(u32, u32)>>, word: Vec<Vec<(u32, u32)>>, totals: Vec<u64>) -> ModelCounts {
        ModelCounts {
            topics: totals.len(),
            doc_topic: doc,
            word_topic: word,
            topic_totals: totals,
        }
    }

    #[test]
    fn single_token_telescopes_to_zero() {
        let c = counts(vec![vec![(0, 1)]], vec![vec![(0, 1)]], vec![1]);
        assert!(log_joint_likelihood(&c, 1.0, 1.0).unwrap().abs() < 1e-14);
    }

    #[test]
    fn two_token_closed_form() {
        // D=1, both tokens word 0 topic 0, K=V=2, α=β=1: doc and topic parts
        // are each lnΓ(2) − lnΓ(4) + lnΓ(3) − lnΓ(1) = −ln 3
        let c = counts(vec![vec![(0, 2)]], vec![vec![(0, 2)], vec![]], vec![2, 0]);
        let got = log_joint_likelihood(&c, 1.0, 1.0).unwrap();
        assert!((got + 2.0 * 3f64.ln()).abs() < 1e-14, "{got}");
    }

    #[test]
    fn fractional_priors_match_mpmath() {
        // docs: [2 of topic 0, 1 of topic 2], [3 of topic 1]
        // words: w0 {0:2, 1:1}, w1 {1:2}, w2 {2:1}; α = 0.1, β = 0.01
        let c = counts(
            vec![vec![(0, 2), (2, 1)], vec![(1, 3)]],
            vec![vec![(0, 2), (1, 1)], vec![(1, 2)], vec![(2, 1)]],
            vec![2, 3, 1],
        );
        let got = log_joint_likelihood(&c, 0.1, 0.01).unwrap();
        let want = -14.406_058_528_620_297;
        assert!(((got - want) / want).abs() < 1e-12, "{got}");
    }

    #[test]
    fn invalid_inputs() {
        let c = counts(vec![vec![(0, 1)]], vec![vec![(0, 1)]], vec![1]);
        assert!(matches!(
            log_joint_likelihood(&c, 0.0, 1.0),
            Err(LikelihoodError::Prior { .. })
        ));
        let bad = counts(vec![vec![(0, 2)]], vec![vec![(0, 1)]], vec![1]);
        assert!(matches!(
            log_joint_likelihood(&bad, 1.0, 1.0),
            Err(LikelihoodError::Inconsistent { .. })
        ));
    }

    #[test]
    fn permuting_ids_keeps_value() {
        let a = counts(
            vec![vec![(0, 2), (1, 1)], vec![(1, 4)]],
            vec![vec![(0, 2)], vec![(1, 5)]],
            vec![2, 5],
        );
        let b = counts(
            vec![vec![(1, 4)], vec![(0, 2), (1, 1)]],
            vec![vec![(1, 5)], vec![(0, 2)]],
            vec![2, 5],
        );
        let (la, lb) = (
            log_joint_likelihood(&a, 0.5, 0.2).unwrap(),
            log_joint_likelihood(&b, 0.5, 0.2).unwrap(),
        );
        assert!((la - lb).abs() <= 1e-12 * la.abs());
    }

    #[test]
    fn json_lines_round_trip() {
        let mut sink = JsonLinesSink::new(Vec::new());
        for i in 1..=3 {
            record_metrics(&mut sink, &IterationMetrics::new(i, -100.5 * i as f64, 0.5, 1000)).unwrap();
        }
        let text = String::from_utf8(sink.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        for (i, line) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["iter"], i as u64 + 1);
            assert_eq!(v["tokens_per_sec"], 2000.0);
            let back: IterationMetrics = serde_json::from_str(line).unwrap();
            assert_eq!(back.log_likelihood, -100.5 * (i + 1) as f64);
        }
    }
}
