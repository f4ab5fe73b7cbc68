//! Training checkpoints.
//!
//! Layout (little-endian): magic `WLDACKP\x01`, the matrix dump, then
//! K (u32), iteration (u32), α and β (f64), seed (u64), the K global topic
//! counts (u64 each), and the vocabulary as a u64 word count followed by
//! length-prefixed (u32) UTF-8 strings.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::matrix::{read_u32, read_u64, MatrixError, TokenTopicMatrix};

const MAGIC: &[u8; 8] = b"WLDACKP\x01";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (magic {0:?})")]
    Magic([u8; 8]),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub matrix: TokenTopicMatrix,
    pub topics: usize,
    pub topic_totals: Vec<u64>,
    pub iteration: u32,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocab: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn write_parts<W: Write>(
    mut w: W,
    matrix: &TokenTopicMatrix,
    topics: usize,
    topic_totals: &[u64],
    iteration: u32,
    alpha: f64,
    beta: f64,
    seed: u64,
    vocab: &[String],
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    matrix.write_dump(&mut w)?;
    w.write_all(&(topics as u32).to_le_bytes())?;
    w.write_all(&iteration.to_le_bytes())?;
    w.write_all(&alpha.to_le_bytes())?;
    w.write_all(&beta.to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    for c in topic_totals {
        w.write_all(&c.to_le_bytes())?;
    }
    w.write_all(&(vocab.len() as u64).to_le_bytes())?;
    for word in vocab {
        w.write_all(&(word.len() as u32).to_le_bytes())?;
        w.write_all(word.as_bytes())?;
    }
    w.flush()
}

impl Checkpoint {
    pub fn write<W: Write>(&self, w: W) -> io::Result<()> {
        write_parts(
            w,
            &self.matrix,
            self.topics,
            &self.topic_totals,
            self.iteration,
            self.alpha,
            self.beta,
            self.seed,
            &self.vocab,
        )
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::Magic(magic));
        }
        let matrix = TokenTopicMatrix::read_dump(&mut r)?;
        let topics = read_u32(&mut r)? as usize;
        let iteration = read_u32(&mut r)?;
        let alpha = f64::from_bits(read_u64(&mut r)?);
        let beta = f64::from_bits(read_u64(&mut r)?);
        let seed = read_u64(&mut r)?;
        let topic_totals = (0..topics).map(|_| read_u64(&mut r)).collect::<io::Result<Vec<_>>>()?;
        let words = read_u64(&mut r)? as usize;
        if words != 0 && words != matrix.cols() {
            return Err(CheckpointError::Format(format!(
                "vocabulary has {words} words, matrix has {} columns",
                matrix.cols()
            )));
        }
        let mut vocab = Vec::with_capacity(words);
        for _ in 0..words {
            let len = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            vocab.push(String::from_utf8(buf).map_err(|e| CheckpointError::Format(e.to_string()))?);
        }
        let sum: u64 = topic_totals.iter().sum();
        if sum != matrix.entry_total() as u64 {
            return Err(CheckpointError::Format(format!(
                "topic totals sum to {sum}, matrix holds {} tokens",
                matrix.entry_total()
            )));
        }
        Ok(Self {
            matrix,
            topics,
            topic_totals,
            iteration,
            alpha,
            beta,
            seed,
            vocab,
        })
    }
}
