use thiserror::Error;

use crate::countstore::SparseCounts;
use crate::eval::TopicCounts;
use crate::matrix::TokenTopicMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("topic {topic}: document counts sum to {docs}, word counts to {words}, totals say {total}")]
    TopicMismatch {
        topic: usize,
        docs: u64,
        words: u64,
        total: u64,
    },
    #[error("count row has topic {topic} outside [0, {topics})")]
    TopicOutOfRange { topic: u32, topics: usize },
    #[error("{what} holds {got} entries, expected {expected}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Sparse final counts: non-zero `(topic, count)` pairs per document and per
/// word, sorted by topic, plus the topic totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelCounts {
    pub topics: usize,
    pub doc_topic: Vec<Vec<(u32, u32)>>,
    pub word_topic: Vec<Vec<(u32, u32)>>,
    pub topic_totals: Vec<u64>,
}

impl ModelCounts {
    pub fn from_matrix(m: &TokenTopicMatrix, topics: usize) -> Self {
        let mut counts = SparseCounts::with_len(topics, 0);
        let mut sparse = |len: usize, zs: &mut dyn Iterator<Item = u32>| {
            counts.reset(topics, len);
            for z in zs {
                counts.increment(z);
            }
            let mut pairs = Vec::with_capacity(counts.distinct());
            counts.sorted_into(&mut pairs);
            pairs
        };
        let doc_topic = (0..m.rows())
            .map(|d| sparse(m.row_len(d), &mut m.row_assignments(d)))
            .collect();
        let word_topic: Vec<Vec<(u32, u32)>> = (0..m.cols())
            .map(|w| sparse(m.col_len(w), &mut m.col_assignments(w)))
            .collect();
        let mut topic_totals = vec![0u64; topics];
        for row in &word_topic {
            for &(k, c) in row {
                topic_totals[k as usize] += c as u64;
            }
        }
        Self {
            topics,
            doc_topic,
            word_topic,
            topic_totals,
        }
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.doc_topic[d].iter().map(|p| p.1 as u64).sum()
    }

    /// Checks `Σ_d C_dk = Σ_w C_wk = C_k` for every topic.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.topic_totals.len() != self.topics {
            return Err(ModelError::Shape {
                what: "topic totals",
                expected: self.topics,
                got: self.topic_totals.len(),
            });
        }
        let mut docs = vec![0u64; self.topics];
        let mut words = vec![0u64; self.topics];
        for (rows, sums) in [(&self.doc_topic, &mut docs), (&self.word_topic, &mut words)] {
            for row in rows {
                for &(k, c) in row {
                    if k as usize >= self.topics {
                        return Err(ModelError::TopicOutOfRange {
                            topic: k,
                            topics: self.topics,
                        });
                    }
                    sums[k as usize] += c as u64;
                }
            }
        }
        for k in 0..self.topics {
            if docs[k] != self.topic_totals[k] || words[k] != self.topic_totals[k] {
                return Err(ModelError::TopicMismatch {
                    topic: k,
                    docs: docs[k],
                    words: words[k],
                    total: self.topic_totals[k],
                });
            }
        }
        Ok(())
    }
}

impl TopicCounts for ModelCounts {
    fn topics(&self) -> usize {
        self.topics
    }
    fn doc_count(&self) -> usize {
        self.doc_topic.len()
    }
    fn vocab_size(&self) -> usize {
        self.word_topic.len()
    }
    fn doc_nonzeros(&self, d: usize, out: &mut Vec<u64>) {
        out.clear();
        out.extend(self.doc_topic[d].iter().map(|p| p.1 as u64));
    }
    fn word_nonzeros(&self, w: usize, out: &mut Vec<u64>) {
        out.clear();
        out.extend(self.word_topic[w].iter().map(|p| p.1 as u64));
    }
    fn topic_totals(&self) -> &[u64] {
        &self.topic_totals
    }
}

/// Point estimates from the final counts:
/// `θ_dk = (C_dk + α) / (L_d + Kα)` and `φ_kw = (C_wk + β) / (C_k + Vβ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    counts: ModelCounts,
    alpha: f64,
    beta: f64,
}

pub fn extract_model(counts: ModelCounts, alpha: f64, beta: f64) -> Result<TrainedModel, ModelError> {
    counts.validate()?;
    Ok(TrainedModel { counts, alpha, beta })
}

impl TrainedModel {
    pub fn counts(&self) -> &ModelCounts {
        &self.counts
    }

    pub fn topics(&self) -> usize {
        self.counts.topics
    }

    pub fn doc_count(&self) -> usize {
        self.counts.doc_topic.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.word_topic.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Row `d` of θ̂ (length K).
    pub fn theta(&self, d: usize) -> Vec<f64> {
        let k = self.counts.topics;
        let denom = self.counts.doc_len(d) as f64 + k as f64 * self.alpha;
        let mut row = vec![self.alpha / denom; k];
        for &(t, c) in &self.counts.doc_topic[d] {
            row[t as usize] = (c as f64 + self.alpha) / denom;
        }
        row
    }

    /// Row `k` of φ̂ (length V).
    pub fn phi(&self, topic: usize) -> Vec<f64> {
        let v = self.vocab_size();
        let denom = self.counts.topic_totals[topic] as f64 + v as f64 * self.beta;
        let mut row = vec![self.beta / denom; v];
        for (w, pairs) in self.counts.word_topic.iter().enumerate() {
            if let Ok(i) = pairs.binary_search_by_key(&(topic as u32), |p| p.0) {
                row[w] = (pairs[i].1 as f64 + self.beta) / denom;
            }
        }
        row
    }

    /// Full K x V φ̂, row-major.
    pub fn phi_matrix(&self) -> Vec<f64> {
        let (k, v) = (self.topics(), self.vocab_size());
        let mut out = vec![0.0; k * v];
        for t in 0..k {
            let denom = self.counts.topic_totals[t] as f64 + v as f64 * self.beta;
            out[t * v..(t + 1) * v].fill(self.beta / denom);
        }
        for (w, pairs) in self.counts.word_topic.iter().enumerate() {
            for &(t, c) in pairs {
                let denom = self.counts.topic_totals[t as usize] as f64 + v as f64 * self.beta;
                out[t as usize * v + w] = (c as f64 + self.beta) / denom;
            }
        }
        out
    }

    /// Full D x K θ̂, row-major.
    pub fn theta_matrix(&self) -> Vec<f64> {
        (0..self.doc_count()).flat_map(|d| self.theta(d)).collect()
    }

    /// The `n` most probable words of `topic`, highest first, ties by word id.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<(u32, f64)> {
        let mut scored: Vec<(u32, f64)> = self
            .phi(topic)
            .into_iter()
            .enumerate()
            .map(|(w, p)| (w as u32, p))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }
}
