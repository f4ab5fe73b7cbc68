//! WarpLDA: latent Dirichlet allocation trained with an O(1)-per-token
//! Metropolis-Hastings sampler whose two sweeps each touch only one row or
//! column of counts at a time.
//!
//! ```
//! use warplda_core::{corpus::Corpus, eval::NullSink, sampler::{train, TrainConfig}};
//!
//! let corpus = Corpus::with_anonymous_vocab(vec![vec![0, 1, 1], vec![2, 3, 3]], 4).unwrap();
//! let cfg = TrainConfig { iterations: 5, ..TrainConfig::new(2) };
//! let model = train(&corpus, &cfg, &mut NullSink).unwrap();
//! assert_eq!(model.phi(0).len(), 4);
//! ```

pub mod baseline;
pub mod checkpoint;
pub mod corpus;
pub mod countstore;
pub mod eval;
pub mod matrix;
pub mod partition;
pub mod rng;
pub mod sampler;
pub mod synthetic;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use corpus::{parse_uci_bag_of_words, Corpus, CorpusError};
pub use eval::{log_joint_likelihood, IterationMetrics};
pub use matrix::TokenTopicMatrix;
pub use sampler::{train, SamplerError, TrainConfig, TrainedModel, Trainer};
