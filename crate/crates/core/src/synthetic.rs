//! Corpora drawn from a known LDA model, for recovery and convergence tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::{Corpus, CorpusError};

/// Shape of the generating model.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSpec {
    pub docs: usize,
    pub vocab: usize,
    pub doc_len: usize,
    pub topics: usize,
    /// Concentration of each document's topic mixture.
    pub alpha: f64,
    /// Concentration of each topic's word distribution.
    pub beta: f64,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            docs: 1000,
            vocab: 200,
            doc_len: 100,
            topics: 5,
            alpha: 0.1,
            beta: 0.05,
            seed: 1,
        }
    }
}

pub struct PlantedCorpus {
    pub corpus: Corpus,
    /// K x V, row-major.
    pub phi: Vec<f64>,
    /// D x K, row-major.
    pub theta: Vec<f64>,
}

fn dirichlet<R: Rng + ?Sized>(dim: usize, conc: f64, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(conc, 1.0).expect("positive concentration");
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| g.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        // tiny concentrations can underflow every component
        if s > 0.0 {
            v.iter_mut().for_each(|x| *x /= s);
            return v;
        }
    }
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, &x) in p.iter().enumerate() {
        if u < x {
            return i;
        }
        u -= x;
    }
    p.len() - 1
}

/// Draws φ, θ and then every token from the generative process.
pub fn planted_corpus(spec: &PlantedSpec) -> Result<PlantedCorpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phi: Vec<f64> = (0..spec.topics)
        .flat_map(|_| dirichlet(spec.vocab, spec.beta, &mut rng))
        .collect();
    let mut theta = Vec::with_capacity(spec.docs * spec.topics);
    let mut docs = Vec::with_capacity(spec.docs);
    for _ in 0..spec.docs {
        let th = dirichlet(spec.topics, spec.alpha, &mut rng);
        let doc = (0..spec.doc_len)
            .map(|_| {
                let k = categorical(&th, &mut rng);
                categorical(&phi[k * spec.vocab..(k + 1) * spec.vocab], &mut rng) as u32
            })
            .collect();
        docs.push(doc);
        theta.extend(th);
    }
    Ok(PlantedCorpus {
        corpus: Corpus::with_anonymous_vocab(docs, spec.vocab)?,
        phi,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_determinism() {
        let spec = PlantedSpec {
            docs: 50,
            ..PlantedSpec::default()
        };
        let a = planted_corpus(&spec).unwrap();
        assert_eq!(a.corpus.doc_count(), 50);
        assert_eq!(a.corpus.token_total(), 5000);
        assert_eq!(a.phi.len(), 5 * 200);
        for k in 0..5 {
            assert!((a.phi[k * 200..(k + 1) * 200].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let b = planted_corpus(&spec).unwrap();
        assert_eq!(a.corpus, b.corpus);
    }
}
