use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use warplda_core::synthetic::{planted_corpus, PlantedSpec};

fn warplda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warplda"))
        .args(args)
        .env_remove("WARPLDA_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TOY_DOCWORD: &str = "2\n4\n5\n1 1 2\n1 2 1\n2 3 1\n2 4 3\n2 1 1\n";
const TOY_VOCAB: &str = "apple\norange\ncat\ndog\n";

#[test]
fn toy_train_writes_one_record_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let (dw, vo, me, ck) = (
        dir.path().join("docword.txt"),
        dir.path().join("vocab.txt"),
        dir.path().join("metrics.jsonl"),
        dir.path().join("model.ckpt"),
    );
    fs::write(&dw, TOY_DOCWORD).unwrap();
    fs::write(&vo, TOY_VOCAB).unwrap();
    let o = warplda(&[
        "train",
        "--docword",
        p(&dw),
        "--vocab",
        p(&vo),
        "--topics",
        "2",
        "--iters",
        "2",
        "--metrics",
        p(&me),
        "--checkpoint",
        p(&ck),
        "--threads",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&me).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[1]["iter"], 2);

    // eval recomputes exactly the last logged likelihood
    let o = warplda(&["eval", "--checkpoint", p(&ck)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["iter"], 2);
    assert_eq!(v["loglik"].as_f64(), records[1]["loglik"].as_f64());

    let o = warplda(&["topics", "--checkpoint", p(&ck), "--top", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "topic\tword\tphi");
    assert_eq!(lines.len(), 1 + 2 * 2);
    for l in &lines[1..] {
        let f: Vec<&str> = l.split('\t').collect();
        assert_eq!(f.len(), 3);
        assert!(TOY_VOCAB.lines().any(|w| w == f[1]));
        assert_eq!(f[2].split('.').nth(1).unwrap().len(), 6);
    }
}

#[test]
fn identical_arguments_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (dw, vo) = (dir.path().join("d"), dir.path().join("v"));
    fs::write(&dw, TOY_DOCWORD).unwrap();
    fs::write(&vo, TOY_VOCAB).unwrap();
    let run = |tag: &str, threads: &str| {
        let (me, ck) = (dir.path().join(format!("m{tag}")), dir.path().join(format!("c{tag}")));
        let o = warplda(&[
            "train",
            "--docword",
            p(&dw),
            "--vocab",
            p(&vo),
            "--topics",
            "3",
            "--iters",
            "5",
            "--seed",
            "17",
            "--threads",
            threads,
            "--metrics",
            p(&me),
            "--checkpoint",
            p(&ck),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let logs: Vec<(u64, f64)> = fs::read_to_string(&me)
            .unwrap()
            .lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                (v["iter"].as_u64().unwrap(), v["loglik"].as_f64().unwrap())
            })
            .collect();
        (logs, fs::read(&ck).unwrap())
    };
    let a = run("a", "1");
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
}

#[test]
fn thread_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (dw, vo) = (dir.path().join("d"), dir.path().join("v"));
    fs::write(&dw, TOY_DOCWORD).unwrap();
    fs::write(&vo, TOY_VOCAB).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_warplda"))
        .args([
            "train",
            "--docword",
            p(&dw),
            "--vocab",
            p(&vo),
            "--topics",
            "2",
            "--iters",
            "1",
        ])
        .env("WARPLDA_THREADS", "0")
        .output()
        .unwrap();
    // zero threads is rejected, which shows the variable was read
    assert!(!o.status.success());
    assert!(stderr(&o).contains("threads"), "{}", stderr(&o));
}

#[test]
fn failures_are_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    for args in [
        vec![
            "train",
            "--docword",
            p(&missing),
            "--vocab",
            p(&missing),
            "--topics",
            "2",
        ],
        vec!["train", "--topics", "2"],
        vec!["frobnicate"],
        vec!["partition-bench", "--zipf", "10", "1", "--weights-from", "x"],
        vec!["partition-bench"],
        vec!["eval", "--checkpoint", p(&missing)],
    ] {
        let o = warplda(&args);
        assert!(!o.status.success(), "{args:?}");
        let err = stderr(&o);
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("warplda: "), "{err}");
    }

    let bad = dir.path().join("bad");
    fs::write(&bad, "2\n4\n1\n1 9 1\n").unwrap();
    let vo = dir.path().join("v");
    fs::write(&vo, TOY_VOCAB).unwrap();
    let o = warplda(&["train", "--docword", p(&bad), "--vocab", p(&vo), "--topics", "2"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn help_exits_zero() {
    for args in [
        vec!["--help"],
        vec!["train", "--help"],
        vec!["partition-bench", "--help"],
    ] {
        assert!(warplda(&args).status.success());
    }
}

#[test]
fn partition_bench_greedy_is_lowest() {
    let o = warplda(&["partition-bench", "--zipf", "100000", "1.0", "--workers", "8,32,64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "workers\tgreedy\tstatic\tdynamic");
    let mut seen = 0;
    for l in lines {
        let f: Vec<f64> = l.split('\t').map(|x| x.parse().unwrap()).collect();
        assert!(f[1] < f[2] && f[1] < f[3], "{l}");
        seen += 1;
    }
    assert_eq!(seen, 3);
}

#[test]
fn partition_bench_from_docword() {
    let dir = tempfile::tempdir().unwrap();
    let dw = dir.path().join("d");
    fs::write(&dw, TOY_DOCWORD).unwrap();
    let o = warplda(&["partition-bench", "--weights-from", p(&dw), "--workers", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    // term frequencies 3, 1, 1, 3 split evenly by greedy
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("2\t0.000000\t"));
}

fn top3(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(3);
    idx
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..n {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn recovers_planted_topics() {
    let planted = planted_corpus(&PlantedSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (dw, vo, ck, phi) = (
        dir.path().join("d"),
        dir.path().join("v"),
        dir.path().join("c"),
        dir.path().join("phi.bin"),
    );
    planted
        .corpus
        .write_uci(fs::File::create(&dw).unwrap(), fs::File::create(&vo).unwrap())
        .unwrap();
    let o = warplda(&[
        "train",
        "--docword",
        p(&dw),
        "--vocab",
        p(&vo),
        "--topics",
        "5",
        "--iters",
        "100",
        "--alpha",
        "0.1",
        "--seed",
        "5",
        "--threads",
        "4",
        "--checkpoint",
        p(&ck),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = warplda(&["topics", "--checkpoint", p(&ck), "--top", "3", "--phi-out", p(&phi)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let v = 200;
    let learned: Vec<f64> = fs::read(&phi)
        .unwrap()
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    assert_eq!(learned.len(), 5 * v);
    let row = |m: &[f64], k: usize| m[k * v..(k + 1) * v].to_vec();

    // exact minimum-distance matching by enumeration (K = 5, 120 candidates)
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let best = permutations(5)
        .into_iter()
        .min_by(|a, b| {
            let cost =
                |perm: &Vec<usize>| -> f64 { (0..5).map(|k| l1(&row(&learned, k), &row(&planted.phi, perm[k]))).sum() };
            cost(a).total_cmp(&cost(b))
        })
        .unwrap();

    // the printed TSV agrees with the exported matrix
    let out = stdout(&o);
    for k in 0..5 {
        let printed: Vec<&str> = out
            .lines()
            .skip(1 + 3 * k)
            .take(3)
            .map(|l| l.split('\t').nth(1).unwrap())
            .collect();
        let want: Vec<String> = top3(&row(&learned, k)).iter().map(|w| format!("w{w}")).collect();
        assert_eq!(printed, want);
    }
    for k in 0..5 {
        let a = top3(&row(&learned, k));
        let b = top3(&row(&planted.phi, best[k]));
        let overlap = a.iter().filter(|w| b.contains(w)).count();
        assert!(overlap >= 2, "topic {k}: learned {a:?} vs planted {b:?}");
    }
}
