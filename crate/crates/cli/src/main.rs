use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use warplda_core::checkpoint::Checkpoint;
use warplda_core::corpus::{corpus_stats, parse_uci_bag_of_words, parse_uci_docword};
use warplda_core::eval::{log_joint_likelihood, JsonLinesSink, MetricsSink, NullSink};
use warplda_core::partition::{dynamic_partition, greedy_partition, static_partition, zipf_weights};
use warplda_core::sampler::{extract_model, ModelCounts, TrainConfig, Trainer};

/// Topic models with the WarpLDA sampler.
#[derive(Parser, Debug)]
#[command(name = "warplda", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a UCI bag-of-words corpus.
    Train(TrainArgs),
    /// Recompute the log joint likelihood stored in a checkpoint.
    Eval(EvalArgs),
    /// Compare greedy, static and dynamic partitioning of word weights.
    PartitionBench(BenchArgs),
    /// Print the most probable words of every topic as TSV.
    Topics(TopicsArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// docword file (UCI format, optionally gzipped)
    #[arg(long)]
    docword: PathBuf,
    /// vocabulary file, one word per line
    #[arg(long)]
    vocab: PathBuf,
    /// number of topics K
    #[arg(long)]
    topics: usize,
    /// training iterations
    #[arg(long, default_value_t = 100)]
    iters: u32,
    /// MH steps per proposal type per token
    #[arg(long, default_value_t = 2)]
    mh: usize,
    /// document-topic prior [default: 50/K]
    #[arg(long)]
    alpha: Option<f64>,
    /// topic-word prior
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    /// random seed; all randomness derives from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// worker threads [default: available cores]
    #[arg(long, env = "WARPLDA_THREADS")]
    threads: Option<usize>,
    /// write per-iteration metrics as JSON lines
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// write the final state here
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["weights_from", "zipf"]))]
struct BenchArgs {
    /// use the term frequencies of this docword file as weights
    #[arg(long, value_name = "DOCWORD")]
    weights_from: Option<PathBuf>,
    /// use N Zipf(s) weights
    #[arg(long, num_args = 2, value_names = ["N", "S"])]
    zipf: Option<Vec<f64>>,
    /// worker counts to compare, comma separated
    #[arg(long, value_delimiter = ',', default_value = "8,32,64")]
    workers: Vec<usize>,
    /// shuffles averaged for the randomized strategies
    #[arg(long, default_value_t = 20)]
    shuffles: usize,
    /// seed for the shuffles
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TopicsArgs {
    /// checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// words per topic
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// also write the K x V topic-word matrix as little-endian f64
    #[arg(long)]
    phi_out: Option<PathBuf>,
    /// also write the D x K document-topic matrix as little-endian f64
    #[arg(long)]
    theta_out: Option<PathBuf>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(io::BufReader::new(open(path)?)).with_context(|| format!("reading {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = parse_uci_bag_of_words(open(&a.docword)?, open(&a.vocab)?)
        .with_context(|| format!("reading {}", a.docword.display()))?;
    let stats = corpus_stats(&corpus);
    eprintln!(
        "corpus: {} docs, {} words, {} tokens, mean length {:.1}",
        stats.docs,
        stats.vocab,
        stats.tokens,
        stats.mean_doc_len()
    );
    let threads = match a.threads {
        Some(t) => t,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let mut cfg = TrainConfig {
        mh_steps: a.mh,
        iterations: a.iters,
        beta: a.beta,
        seed: a.seed,
        threads,
        ..TrainConfig::new(a.topics)
    };
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }

    let mut sink: Box<dyn MetricsSink> = match &a.metrics {
        Some(p) => Box::new(JsonLinesSink::new(create(p)?)),
        None => Box::new(NullSink),
    };
    let mut trainer = Trainer::new(&corpus, cfg)?;
    for _ in 0..a.iters {
        let m = trainer.step()?;
        sink.record(&m).context("writing metrics")?;
        eprintln!(
            "iter {:>4}  loglik {:.6e}  {:.3}s  {:.3e} tokens/s",
            m.iteration, m.log_likelihood, m.seconds, m.tokens_per_sec
        );
    }
    if let Some(p) = &a.checkpoint {
        let mut w = create(p)?;
        trainer.write_checkpoint(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let counts = ModelCounts::from_matrix(&ck.matrix, ck.topics);
    counts.validate()?;
    if counts.topic_totals != ck.topic_totals {
        bail!("checkpoint topic totals disagree with its assignments");
    }
    let ll = log_joint_likelihood(&counts, ck.alpha, ck.beta)?;
    println!("{{\"iter\":{},\"loglik\":{}}}", ck.iteration, ll);
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let weights = match (&a.weights_from, &a.zipf) {
        (Some(p), None) => {
            let (docs, vocab) = parse_uci_docword(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            let mut tf = vec![0u64; vocab];
            docs.iter().flatten().for_each(|&w| tf[w as usize] += 1);
            tf.retain(|&c| c > 0);
            tf
        }
        (None, Some(z)) => {
            let (n, s) = (z[0], z[1]);
            if n < 1.0 || n.fract() != 0.0 {
                bail!("--zipf N must be a positive integer, got {n}");
            }
            if s.is_nan() || s <= 0.0 {
                bail!("--zipf s must be positive, got {s}");
            }
            zipf_weights(n as usize, s, 1_000_000_000)
        }
        _ => bail!("give exactly one of --weights-from and --zipf"),
    };
    if weights.is_empty() {
        bail!("no non-empty items to partition");
    }
    if a.shuffles == 0 {
        bail!("--shuffles must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    println!("workers\tgreedy\tstatic\tdynamic");
    for &p in &a.workers {
        let g = greedy_partition(&weights, p)?.imbalance()?;
        let (mut st, mut dy) = (0.0, 0.0);
        for _ in 0..a.shuffles {
            st += static_partition(&weights, p, &mut rng)?.imbalance()?;
            dy += dynamic_partition(&weights, p, &mut rng)?.imbalance()?;
        }
        let n = a.shuffles as f64;
        println!("{p}\t{g:.6}\t{:.6}\t{:.6}", st / n, dy / n);
    }
    Ok(())
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn topics(a: TopicsArgs) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let model = extract_model(ModelCounts::from_matrix(&ck.matrix, ck.topics), ck.alpha, ck.beta)?;
    let out = io::stdout();
    let mut out = BufWriter::new(out.lock());
    writeln!(out, "topic\tword\tphi")?;
    for k in 0..model.topics() {
        for (w, p) in model.top_words(k, a.top) {
            match ck.vocab.get(w as usize) {
                Some(word) => writeln!(out, "{k}\t{word}\t{p:.6}")?,
                None => writeln!(out, "{k}\tw{w}\t{p:.6}")?,
            }
        }
    }
    out.flush()?;
    if let Some(p) = &a.phi_out {
        write_f64s(p, &model.phi_matrix())?;
    }
    if let Some(p) = &a.theta_out {
        write_f64s(p, &model.theta_matrix())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            // fold clap's multi-line report into one line, dropping usage and tips
            let text = e.render().to_string();
            let msg: Vec<&str> = text
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("tip:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("warplda: {}", msg.join(" ").trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::PartitionBench(a) => bench(a),
        Command::Topics(a) => topics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("warplda: {e:#}");
            ExitCode::FAILURE
        }
    }
}
