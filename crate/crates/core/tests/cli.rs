use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn agelab(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_agelab"));
    cmd.args(args).env_remove("AGELAB_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn run_ok(command: &str, config: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec![command, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = agelab(&args, &[]);
    assert!(
        out.status.success(),
        "{command} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout).unwrap().trim())
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn toml_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
        .parse()
        .unwrap()
}

const SYNTH: &str = "[synth]\ncount = 160\nnoise = 6.0\n";

const MODEL: &str = r#"
[model]
stacks = [{ filters = 4, convs = 1 }, { filters = 8, convs = 1 }]
dense = [16]
dropout = 0.2
"#;

/// Synthetic set split into train / validation / test manifests next to
/// the images.
fn dataset(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, "synth.toml", &format!("out_dir = \"data\"\n{SYNTH}"));
    let data = run_ok("synth", &cfg, &["--seed", "3"]);
    let labels = read(&data.join("labels.csv"));
    let mut lines = labels.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    for (name, range) in [("train.csv", 0..100), ("val.csv", 100..130), ("test.csv", 130..160)] {
        let body: Vec<&str> = std::iter::once(header).chain(rows[range].iter().copied()).collect();
        std::fs::write(data.join(name), body.join("\n") + "\n").unwrap();
    }
    data
}

fn train_config(dir: &Path, name: &str, head: &str, out: &str) -> PathBuf {
    write_config(
        dir,
        name,
        &format!(
            r#"out_dir = "{out}"
{MODEL}head = "{head}"

[data]
train = "data/train.csv"
validation = "data/val.csv"
test = "data/test.csv"

[train]
epochs = 2
batch_size = 16
val_sample_size = 20
"#
        ),
    )
}

#[test]
fn synth_is_deterministic_and_records_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SYNTH);
    let a = run_ok("synth", &cfg, &["--seed", "5", "--out", tmp.path().join("a").to_str().unwrap()]);
    let b = run_ok("synth", &cfg, &["--seed", "5", "--out", tmp.path().join("b").to_str().unwrap()]);
    for f in ["img_000000.pgm", "img_000159.pgm", "labels.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let resolved = read(&a.join("config.toml"));
    assert!(resolved.contains("seed = 5"), "{resolved}");
    assert!(!a.join(".agelab-stage").exists());
    let files = std::fs::read_dir(&a).unwrap().count();
    assert_eq!(files, 160 + 2);
}

#[test]
fn train_eval_and_hierarchy_pipeline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    dataset(dir);

    let gender_cfg = train_config(dir, "gender.toml", "gender", "gender");
    let g = run_ok("train", &gender_cfg, &["--seed", "1"]);
    for f in ["best.ckpt", "final.ckpt", "train_log.csv", "config.toml", "metrics.toml"] {
        assert!(g.join(f).exists(), "{f}");
    }
    let log = read(&g.join("train_log.csv"));
    assert!(log.starts_with("epoch,train_loss,val_loss,val_metric,seconds\n"));
    assert_eq!(log.lines().count(), 3);

    // Same seed, different directory: identical log apart from wall time
    // and identical checkpoints.
    let g2 = run_ok("train", &gender_cfg, &["--seed", "1", "--out", dir.join("gender2").to_str().unwrap()]);
    let strip = |s: &str| -> Vec<String> {
        s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
    };
    assert_eq!(strip(&log), strip(&read(&g2.join("train_log.csv"))));
    for f in ["best.ckpt", "final.ckpt"] {
        assert_eq!(std::fs::read(g.join(f)).unwrap(), std::fs::read(g2.join(f)).unwrap());
    }

    let age_cfg = train_config(dir, "age.toml", "age", "age");
    let a = run_ok("train", &age_cfg, &["--seed", "2"]);
    assert!(a.join("best.ckpt").exists());

    let eval_cfg = write_config(
        dir,
        "eval.toml",
        r#"out_dir = "eval"
[data]
test = "data/test.csv"
[eval]
checkpoint = "age/best.ckpt"
"#,
    );
    let e = run_ok("eval", &eval_cfg, &[]);
    let metrics = read(&e.join("metrics.toml"));
    let mae = toml_value(&metrics, "mae_expected");
    assert!(metrics.contains("mae_argmax"), "{metrics}");
    assert_eq!(toml_value(&metrics, "mae"), mae);

    let hier_cfg = write_config(
        dir,
        "hier.toml",
        r#"out_dir = "hier"
[data]
test = "data/test.csv"
[eval]
gender_checkpoint = "gender/best.ckpt"
male_checkpoint = "age/best.ckpt"
female_checkpoint = "age/best.ckpt"
single_checkpoint = "age/best.ckpt"
"#,
    );
    let h = run_ok("hier-eval", &hier_cfg, &[]);
    let report = read(&h.join("hierarchy.toml"));
    assert!(report.contains("routing_accuracy"), "{report}");
    assert_eq!(toml_value(&report, "hierarchy_mae_expected"), toml_value(&report, "single_mae_expected"));
    assert!((toml_value(&report, "hierarchy_mae_expected") - mae).abs() < 1e-6);
}

#[test]
fn subset_stats_encode_augment() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let data = dataset(dir);
    let cfg = write_config(
        dir,
        "tools.toml",
        r#"out_dir = "tools"
[data]
labels = "data/train.csv"
[subset]
set_size = 8
[train]
crop_width = 56
crop_height = 56
[encode]
ages = [30]
"#,
    );
    let out = run_ok("subset", &cfg, &["--seed", "4"]);
    let counts: Vec<usize> = ["s1.csv", "s2.csv", "s3.csv"]
        .iter()
        .map(|f| read(&out.join(f)).lines().count() - 1)
        .collect();
    assert_eq!(counts[..2], [8, 8]);
    assert_eq!(counts.iter().sum::<usize>(), 100);

    run_ok("stats", &cfg, &[]);
    let stats = read(&out.join("stats.csv"));
    assert!(stats.starts_with("# provenance: split=train.csv seed=0\nmean,std\n"), "{stats}");

    run_ok("encode", &cfg, &[]);
    let enc = read(&out.join("encoding.csv"));
    let row: Vec<f64> = enc.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row.len(), 82);
    assert!((row[1 + 25] - 0.15958).abs() < 1e-5);

    run_ok("augment", &cfg, &[]);
    let labels = read(&out.join("labels.csv"));
    assert_eq!(labels.lines().count() - 1, 12 * 100);
    assert_eq!(std::fs::read_dir(out.join("images")).unwrap().count(), 1200);
    assert!(data.join("img_000000.pgm").exists());
}

#[test]
fn clean_reports_inconsistent_subjects() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    std::fs::write(
        dir.join("labels.csv"),
        "subject_id,image_path,age,gender,race\n\
         a,a1.pgm,30,M,B\na,a2.pgm,31,M,B\na,a3.pgm,32,F,B\n\
         b,b1.pgm,40,F,W\nb,b2.pgm,41,M,W\n\
         c,c1.pgm,200,M,W\n",
    )
    .unwrap();
    let cfg = write_config(dir, "c.toml", "out_dir = \"clean\"\n[data]\nlabels = \"labels.csv\"\n");
    let out = run_ok("clean", &cfg, &[]);
    let report = read(&out.join("inconsistencies.csv"));
    assert!(report.contains("a,gender"), "{report}");
    let cleaned = read(&out.join("cleaned.csv"));
    assert_eq!(cleaned.lines().filter(|l| l.starts_with("a,")).count(), 3);
    assert!(cleaned.lines().all(|l| !l.starts_with("a,") || l.contains(",M,")));
    assert_eq!(read(&out.join("quarantined.csv")).lines().count() - 1, 2);
    assert!(read(&out.join("rejects.csv")).lines().count() == 2);
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    dataset(dir);
    let base = read(&train_config(dir, "base.toml", "gender", "sweep"));
    let cfg = write_config(
        dir,
        "sweep.toml",
        &format!("{base}\n[sweep]\naxis = \"epochs\"\nvalues = [\"1\", \"0\", \"2\"]\n"),
    );
    let out = run_ok("sweep", &cfg, &[]);
    let table = read(&out.join("sweep.csv"));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "epochs,best_accuracy,final_accuracy,error");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(','));
    assert!(lines[2].starts_with("0,,,"), "{}", lines[2]);
}

#[test]
fn errors_exit_nonzero_and_land_in_failed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    let typo = write_config(dir, "typo.toml", "[train]\nepoch = 3\n");
    let out = agelab(&["train", "--config", typo.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let missing = write_config(dir, "missing.toml", "out_dir = \"run\"\n");
    let out = agelab(&["train", "--config", missing.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));
    let failed = dir.join("run/failed");
    assert!(read(&failed.join("error.txt")).contains("data.train"));
    assert!(failed.join("config.toml").exists());

    let enc = write_config(dir, "enc.toml", "out_dir = \"enc\"\n");
    let out = agelab(&["encode", "--config", enc.to_str().unwrap()], &[("AGELAB_THREADS", "zero")]);
    assert!(!out.status.success());
    assert!(dir.join("enc/failed/error.txt").exists());
    let out = agelab(&["encode", "--config", enc.to_str().unwrap()], &[("AGELAB_THREADS", "1")]);
    assert!(out.status.success());
    assert!(dir.join("enc/encoding.csv").exists());

    let out = agelab(&["frobnicate", "--config", enc.to_str().unwrap()], &[]);
    assert!(!out.status.success());
}
