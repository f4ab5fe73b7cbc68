//! Bag-of-words corpora in the UCI `docword` / `vocab` format.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};

use flate2::read::GzDecoder;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{stream} line {line}: {msg}")]
    Parse {
        stream: &'static str,
        line: usize,
        msg: String,
    },
    #[error("vocab has {got} lines but the docword header declares W = {expected}")]
    VocabLength { expected: usize, got: usize },
    #[error("vocab line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("document {doc} holds word id {word} outside [0, {vocab_size})")]
    WordOutOfRange { doc: usize, word: u32, vocab_size: usize },
    #[error("corpus has no tokens")]
    Empty,
    #[error("corpus too large: {0} tokens exceeds the 32-bit token index")]
    TooLarge(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A tokenized corpus: every document is the sequence of its word ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Vec<u32>>,
    vocab: Vec<String>,
    token_total: u64,
}

impl Corpus {
    pub fn new(docs: Vec<Vec<u32>>, vocab: Vec<String>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(vocab.len());
        for (i, w) in vocab.iter().enumerate() {
            if !seen.insert(w.as_str()) {
                return Err(CorpusError::DuplicateWord {
                    line: i + 1,
                    word: w.clone(),
                });
            }
        }
        let mut total = 0u64;
        for (d, doc) in docs.iter().enumerate() {
            if let Some(&w) = doc.iter().find(|&&w| w as usize >= vocab.len()) {
                return Err(CorpusError::WordOutOfRange {
                    doc: d,
                    word: w,
                    vocab_size: vocab.len(),
                });
            }
            total += doc.len() as u64;
        }
        if total == 0 {
            return Err(CorpusError::Empty);
        }
        if total >= u32::MAX as u64 {
            return Err(CorpusError::TooLarge(total));
        }
        Ok(Self {
            docs,
            vocab,
            token_total: total,
        })
    }

    /// Corpus with placeholder words `w0`, `w1`, ...
    pub fn with_anonymous_vocab(docs: Vec<Vec<u32>>, vocab_size: usize) -> Result<Self, CorpusError> {
        let vocab = (0..vocab_size).map(|i| format!("w{i}")).collect();
        Self::new(docs, vocab)
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_total(&self) -> u64 {
        self.token_total
    }

    pub fn docs(&self) -> &[Vec<u32>] {
        &self.docs
    }

    pub fn doc(&self, d: usize) -> &[u32] {
        &self.docs[d]
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// Number of occurrences of each word (column lengths L_w).
    pub fn term_frequencies(&self) -> Vec<u64> {
        let mut tf = vec![0u64; self.vocab.len()];
        for doc in &self.docs {
            for &w in doc {
                tf[w as usize] += 1;
            }
        }
        tf
    }

    /// Writes the corpus back as UCI triples, one per distinct (doc, word)
    /// pair, sorted by word id within each document.
    pub fn write_uci<W: Write, V: Write>(&self, mut docword: W, mut vocab: V) -> io::Result<()> {
        let rows: Vec<BTreeMap<u32, u64>> = self
            .docs
            .iter()
            .map(|doc| {
                let mut m = BTreeMap::new();
                for &w in doc {
                    *m.entry(w).or_insert(0) += 1;
                }
                m
            })
            .collect();
        let nnz: usize = rows.iter().map(BTreeMap::len).sum();
        writeln!(docword, "{}\n{}\n{}", self.docs.len(), self.vocab.len(), nnz)?;
        for (d, row) in rows.iter().enumerate() {
            for (w, c) in row {
                writeln!(docword, "{} {} {}", d + 1, w + 1, c)?;
            }
        }
        for w in &self.vocab {
            writeln!(vocab, "{w}")?;
        }
        docword.flush()?;
        vocab.flush()
    }
}

/// Exact corpus statistics. The mean document length is kept as the
/// rational `tokens / docs`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CorpusStats {
    pub docs: u64,
    pub vocab: u64,
    pub tokens: u64,
}

impl CorpusStats {
    pub fn mean_doc_len(&self) -> f64 {
        self.tokens as f64 / self.docs as f64
    }

    /// Mean length as a reduced fraction `(numerator, denominator)`.
    pub fn mean_doc_len_ratio(&self) -> (u64, u64) {
        let g = gcd(self.tokens, self.docs);
        (self.tokens / g, self.docs / g)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

pub fn corpus_stats(c: &Corpus) -> CorpusStats {
    CorpusStats {
        docs: c.doc_count() as u64,
        vocab: c.vocab_size() as u64,
        tokens: c.token_total(),
    }
}

/// Wraps `r` in a gzip decoder when the stream starts with the gzip magic.
pub fn maybe_gunzip<'a, R: Read + 'a>(r: R) -> io::Result<Box<dyn BufRead + 'a>> {
    let mut buf = BufReader::new(r);
    let head = buf.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(BufReader::new(GzDecoder::new(buf))))
    } else {
        Ok(Box::new(buf))
    }
}

fn parse_err(stream: &'static str, line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        stream,
        line,
        msg: msg.into(),
    }
}

fn header_value(lines: &mut impl Iterator<Item = (usize, io::Result<String>)>, name: &str) -> Result<u64, CorpusError> {
    let (i, line) = lines
        .next()
        .ok_or_else(|| parse_err("docword", 0, format!("missing header value {name}")))?;
    let line = line?;
    line.trim()
        .parse::<u64>()
        .map_err(|_| parse_err("docword", i + 1, format!("malformed header value {name}: {line:?}")))
}

/// Reads a UCI bag-of-words corpus. Both streams may be gzip-compressed.
///
/// Each `docId wordId count` triple expands to `count` consecutive tokens of
/// `wordId - 1` appended to document `docId - 1`, in file order.
pub fn parse_uci_bag_of_words<R: Read, S: Read>(docword: R, vocab: S) -> Result<Corpus, CorpusError> {
    let (docs, w) = parse_uci_docword(docword)?;
    let words: Vec<String> = maybe_gunzip(vocab)?
        .lines()
        .map(|l| l.map(|s| s.trim_end_matches('\r').to_string()))
        .collect::<Result<_, _>>()?;
    if words.len() != w {
        return Err(CorpusError::VocabLength {
            expected: w,
            got: words.len(),
        });
    }
    Corpus::new(docs, words)
}

/// The docword half of [`parse_uci_bag_of_words`]: the expanded documents and
/// the declared vocabulary size.
pub fn parse_uci_docword<R: Read>(docword: R) -> Result<(Vec<Vec<u32>>, usize), CorpusError> {
    let mut lines = maybe_gunzip(docword)?.lines().enumerate();
    let d = header_value(&mut lines, "D")? as usize;
    let w = header_value(&mut lines, "W")? as usize;
    let nnz = header_value(&mut lines, "NNZ")?;

    let mut docs: Vec<Vec<u32>> = vec![Vec::new(); d];
    let mut triples = 0u64;
    for (i, line) in lines {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next = |what: &str| -> Result<i64, CorpusError> {
            fields
                .next()
                .ok_or_else(|| parse_err("docword", lineno, format!("missing {what}")))?
                .parse::<i64>()
                .map_err(|_| parse_err("docword", lineno, format!("malformed {what}")))
        };
        let doc_id = next("docId")?;
        let word_id = next("wordId")?;
        let count = next("count")?;
        if fields.next().is_some() {
            return Err(parse_err("docword", lineno, "expected exactly three fields"));
        }
        if doc_id < 1 || doc_id as usize > d {
            return Err(parse_err("docword", lineno, format!("docId {doc_id} outside [1, {d}]")));
        }
        if word_id < 1 || word_id as usize > w {
            return Err(parse_err(
                "docword",
                lineno,
                format!("wordId {word_id} outside [1, {w}]"),
            ));
        }
        if count < 1 {
            return Err(parse_err("docword", lineno, format!("non-positive count {count}")));
        }
        triples += 1;
        if triples > nnz {
            return Err(parse_err("docword", lineno, format!("more triples than NNZ = {nnz}")));
        }
        let doc = &mut docs[doc_id as usize - 1];
        doc.extend(std::iter::repeat_n(word_id as u32 - 1, count as usize));
    }
    if triples != nnz {
        return Err(parse_err(
            "docword",
            0,
            format!("header declares NNZ = {nnz} but {triples} triples were read"),
        ));
    }
    Ok((docs, w))
}
