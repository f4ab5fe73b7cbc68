//! MCEM training loop: initialization, alternating word and document
//! phases, per-iteration metrics and model extraction.

mod mh;
mod model;
mod phases;

use std::io;
use std::time::Instant;

use thiserror::Error;

pub use mh::{acceptance_probability, mh_accept, ProposalKind, Smoothing};
pub use model::{extract_model, ModelCounts, ModelError, TrainedModel};
pub use phases::{document_phase, init_assignments, init_key, word_phase, PhaseError};

use crate::checkpoint::Checkpoint;
use crate::corpus::Corpus;
use crate::countstore::{ConservationError, GlobalState};
use crate::eval::{log_joint_likelihood, IterationMetrics, LikelihoodError, MetricsSink};
use crate::matrix::{Executor, MatrixBuilder, MatrixError, SweepError, TokenTopicMatrix};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Sweep(#[from] SweepError<PhaseError>),
    #[error(transparent)]
    Conservation(#[from] ConservationError),
    #[error(transparent)]
    Likelihood(#[from] LikelihoodError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "cannot allocate the token matrix: {tokens} tokens x {slots} slots need about {bytes} bytes; \
         lower --mh or split the corpus"
    )]
    OutOfMemory { tokens: u64, slots: usize, bytes: u64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("metrics sink: {0}")]
    Metrics(#[from] io::Error),
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// K
    pub topics: usize,
    /// M, proposals per token per proposal type.
    pub mh_steps: usize,
    pub iterations: u32,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub threads: usize,
}

impl TrainConfig {
    /// Defaults: M = 2, α = 50/K, β = 0.01, one thread.
    pub fn new(topics: usize) -> Self {
        Self {
            topics,
            mh_steps: 2,
            iterations: 100,
            alpha: 50.0 / topics.max(1) as f64,
            beta: 0.01,
            seed: 0,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.topics == 0 {
            return bad("topic count must be at least 1");
        }
        if self.topics >= u32::MAX as usize {
            return bad("topic count must fit in 32 bits");
        }
        if self.mh_steps == 0 || self.mh_steps > u16::MAX as usize {
            return bad("mh steps must be in [1, 65535]");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be positive");
        }
        if self.threads == 0 {
            return bad("threads must be at least 1");
        }
        Ok(())
    }
}

/// Builds the token matrix of `corpus` with `proposals` slots per entry.
pub fn build_matrix(corpus: &Corpus, proposals: usize) -> Result<TokenTopicMatrix, SamplerError> {
    let tokens = corpus.token_total();
    let mut b = MatrixBuilder::new(corpus.doc_count(), corpus.vocab_size(), proposals);
    // builder copy + final layout, roughly 2x the live footprint
    let bytes = tokens * (2 * 4 * (proposals as u64 + 1) + 5 * 4 + 8);
    b.reserve(tokens as usize).map_err(|_| SamplerError::OutOfMemory {
        tokens,
        slots: proposals + 1,
        bytes,
    })?;
    for (d, doc) in corpus.docs().iter().enumerate() {
        for &w in doc {
            b.add_token(d as u32, w)?;
        }
    }
    Ok(b.finalize_layout()?)
}

/// Training state between iterations.
pub struct Trainer {
    matrix: TokenTopicMatrix,
    exec: Executor,
    globals: GlobalState,
    cfg: TrainConfig,
    smoothing: Smoothing,
    iteration: u32,
    vocab: Vec<String>,
}

impl Trainer {
    /// Lays out the corpus and draws the initial assignments.
    pub fn new(corpus: &Corpus, cfg: TrainConfig) -> Result<Self, SamplerError> {
        cfg.validate()?;
        let mut matrix = build_matrix(corpus, cfg.mh_steps)?;
        let exec = Executor::new(&matrix, cfg.threads).map_err(|e| SamplerError::ThreadPool(e.to_string()))?;
        let counts = init_assignments(&mut matrix, &exec, cfg.topics, cfg.seed);
        let globals = GlobalState::new(counts, corpus.token_total())?;
        Ok(Self {
            smoothing: Smoothing::new(cfg.alpha, cfg.beta, corpus.vocab_size()),
            matrix,
            exec,
            globals,
            cfg,
            iteration: 0,
            vocab: corpus.vocab().to_vec(),
        })
    }

    /// Resumes from a checkpoint; `cfg` must agree with the stored topic
    /// count and proposal count.
    pub fn from_checkpoint(ck: Checkpoint, cfg: TrainConfig) -> Result<Self, SamplerError> {
        cfg.validate()?;
        if ck.topics != cfg.topics || ck.matrix.proposals() != cfg.mh_steps {
            return Err(SamplerError::Config(format!(
                "checkpoint has K = {}, M = {}; config asks for K = {}, M = {}",
                ck.topics,
                ck.matrix.proposals(),
                cfg.topics,
                cfg.mh_steps
            )));
        }
        let exec = Executor::new(&ck.matrix, cfg.threads).map_err(|e| SamplerError::ThreadPool(e.to_string()))?;
        let tokens = ck.matrix.entry_total() as u64;
        Ok(Self {
            smoothing: Smoothing::new(cfg.alpha, cfg.beta, ck.matrix.cols()),
            globals: GlobalState::new(ck.topic_totals, tokens)?,
            matrix: ck.matrix,
            exec,
            cfg,
            iteration: ck.iteration,
            vocab: ck.vocab,
        })
    }

    pub fn matrix(&self) -> &TokenTopicMatrix {
        &self.matrix
    }

    pub fn globals(&self) -> &GlobalState {
        &self.globals
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// One full iteration (word phase, then document phase) without
    /// evaluating the likelihood. Returns the sampling wall time in seconds.
    pub fn sweep(&mut self) -> Result<f64, SamplerError> {
        let it = self.iteration + 1;
        let start = Instant::now();
        let acc = word_phase(
            &mut self.matrix,
            &self.exec,
            &self.globals,
            &self.smoothing,
            self.cfg.seed,
            it,
        )?;
        self.globals.publish(acc)?;
        let acc = document_phase(
            &mut self.matrix,
            &self.exec,
            &self.globals,
            &self.smoothing,
            self.cfg.seed,
            it,
        )?;
        self.globals.publish(acc)?;
        self.iteration = it;
        Ok(start.elapsed().as_secs_f64())
    }

    /// One iteration plus its metrics record.
    pub fn step(&mut self) -> Result<IterationMetrics, SamplerError> {
        let seconds = self.sweep()?;
        Ok(IterationMetrics::new(
            self.iteration,
            self.log_likelihood()?,
            seconds,
            self.matrix.entry_total() as u64,
        ))
    }

    pub fn counts(&self) -> ModelCounts {
        ModelCounts::from_matrix(&self.matrix, self.cfg.topics)
    }

    pub fn log_likelihood(&self) -> Result<f64, SamplerError> {
        Ok(log_joint_likelihood(&self.counts(), self.cfg.alpha, self.cfg.beta)?)
    }

    pub fn model(&self) -> Result<TrainedModel, SamplerError> {
        Ok(extract_model(self.counts(), self.cfg.alpha, self.cfg.beta)?)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            matrix: self.matrix.clone(),
            topics: self.cfg.topics,
            topic_totals: self.globals.snapshot().to_vec(),
            iteration: self.iteration,
            alpha: self.cfg.alpha,
            beta: self.cfg.beta,
            seed: self.cfg.seed,
            vocab: self.vocab.clone(),
        }
    }

    /// Writes the checkpoint without cloning the matrix.
    pub fn write_checkpoint<W: io::Write>(&self, w: W) -> io::Result<()> {
        crate::checkpoint::write_parts(
            w,
            &self.matrix,
            self.cfg.topics,
            self.globals.snapshot(),
            self.iteration,
            self.cfg.alpha,
            self.cfg.beta,
            self.cfg.seed,
            &self.vocab,
        )
    }
}

/// Runs `cfg.iterations` iterations, recording metrics after each.
pub fn train<S: MetricsSink + ?Sized>(
    corpus: &Corpus,
    cfg: &TrainConfig,
    sink: &mut S,
) -> Result<TrainedModel, SamplerError> {
    let mut trainer = Trainer::new(corpus, cfg.clone())?;
    for _ in 0..cfg.iterations {
        let m = trainer.step()?;
        sink.record(&m)?;
    }
    trainer.model()
}
