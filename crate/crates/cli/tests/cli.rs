use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use geossl_cli::manifest::{RunStatus, RunStore};
use geossl_cli::{run, Cli};

const SMALL: [&str; 10] = [
    "--set",
    "epochs=2",
    "--set",
    "warmup_epochs=1",
    "--set",
    "checkpoint_every=1",
    "--set",
    "data.train_size=48",
    "--set",
    "data.test_size=24",
];

fn geossl(runs: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_geossl")).arg("--runs").arg(runs).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn call(runs: &Path, args: &[&str]) -> String {
    let mut argv = vec!["geossl", "--runs", runs.to_str().unwrap()];
    argv.extend_from_slice(args);
    let mut buf = Vec::new();
    run(Cli::try_parse_from(argv).unwrap(), &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn run_id(stdout: &str) -> String {
    stdout.lines().find_map(|l| l.strip_prefix("run_id: ")).unwrap().to_string()
}

#[test]
fn train_twice_gives_identical_metrics_and_separate_runs() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "-q", "--set", "module=affine"];
    args.extend_from_slice(&SMALL);
    let (c1, o1, _) = geossl(d.path(), &args);
    let (c2, o2, _) = geossl(d.path(), &args);
    assert_eq!((c1, c2), (0, 0));
    let (a, b) = (run_id(&o1), run_id(&o2));
    assert_ne!(a, b);
    let store = RunStore::new(d.path());
    let ma = store.load(&a).unwrap();
    assert_eq!(ma.status, RunStatus::Completed);
    assert_eq!(ma.code_hash.len(), 64);
    assert_eq!(ma.param_hash, store.load(&b).unwrap().param_hash);
    let m1 = fs::read(store.run_dir(&a).join("metrics.jsonl")).unwrap();
    let m2 = fs::read(store.run_dir(&b).join("metrics.jsonl")).unwrap();
    assert!(!m1.is_empty());
    assert_eq!(m1, m2);
    assert!(store.run_dir(&a).join("config.toml").exists());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let (c, _, e) = geossl(d.path(), &["train", "--set", "module=none", "--set", "loss_variant=invariant"]);
    assert_eq!(c, 1, "{e}");
    assert!(e.contains("requires a module"));
    assert_eq!(geossl(d.path(), &["train", "--set", "no_such_key=1"]).0, 1);
    assert_eq!(geossl(d.path(), &["train", "--bogus-flag"]).0, 1);
    assert_eq!(geossl(d.path(), &["eval", "missing-run"]).0, 2);
    assert_eq!(geossl(d.path(), &["--help"]).0, 0);

    let mut args = vec!["train", "-q", "--run-id", "diverge", "--set", "optimizer.lr=1e30"];
    args.extend_from_slice(&SMALL);
    let (c, _, e) = geossl(d.path(), &args);
    assert_eq!(c, 3, "{e}");
    let m = RunStore::new(d.path()).load("diverge").unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert!(m.error.unwrap().contains("diverged"));
}

#[test]
fn overrides_reach_the_manifest_config() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "-q", "--run-id", "h", "--set", "module=homography", "--set", "b2.perspective=0.2"];
    args.extend_from_slice(&SMALL);
    call(d.path(), &args);
    let m = RunStore::new(d.path()).load("h").unwrap();
    assert_eq!(m.config.b2.perspective, 0.2);
    assert_eq!(m.config.module, geossl::training::ModuleKind::Homography);
}

#[test]
fn eval_is_repeatable_and_follows_checkpoint_cadence() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["train", "-q", "--run-id", "e"];
    args.extend_from_slice(&SMALL);
    call(d.path(), &args);
    let a = call(d.path(), &["eval", "e", "--all", "--confusion"]);
    let b = call(d.path(), &["eval", "e", "--all", "--confusion"]);
    assert_eq!(a, b);
    for e in ["0", "1", "2"] {
        assert!(a.lines().any(|l| l.split_whitespace().next() == Some(e)), "{a}");
    }
    let store = RunStore::new(d.path());
    let m = store.load("e").unwrap();
    assert!(m.artifacts.reports.contains(&"reports/confusion_synthetic-shapes_epoch_0002.csv".to_string()));
    let csv = fs::read_to_string(store.run_dir("e").join("reports/confusion_synthetic-shapes_epoch_0002.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let two = call(d.path(), &["eval", "e", "--dataset", "synthetic-arrows"]);
    assert!(two.contains("up") && two.contains("down") && !two.contains("triangle"), "{two}");
    let ck = store.run_dir("e").join("checkpoints/epoch_0002.ckpt");
    let direct = call(d.path(), &["eval", ck.to_str().unwrap()]);
    assert!(direct.contains("accuracy"));
}

#[test]
fn single_cell_sweep_prints_undefined_interval() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "-q", "--axis", "module", "--values", "affine", "--seeds", "3", "--name", "one"];
    args.extend_from_slice(&SMALL);
    let out = call(d.path(), &args);
    let row = out.lines().find(|l| l.starts_with("affine")).unwrap();
    assert!(row.contains("± —"), "{out}");
    assert!(row.contains('*'));
    assert!(RunStore::new(d.path()).exists("one/affine/seed-3"));
    let t = fs::read_to_string(d.path().join("one/table.txt")).unwrap();
    assert_eq!(t, out);

    let (c, _, e) = geossl(d.path(), &["sweep", "--axis", "no.such.key", "--values", "1"]);
    assert_eq!(c, 1, "{e}");
}

#[test]
fn sweep_rerender_is_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "-q", "--axis", "lambda", "--values", "0.5,1.0", "--seeds", "0,1", "--name", "lam", "--jobs", "2"];
    args.extend_from_slice(&SMALL);
    call(d.path(), &args);
    let store = RunStore::new(d.path());
    let rec = geossl_cli::sweep::load_sweep(&store, "lam").unwrap();
    assert_eq!(rec.cells.len(), 4);
    let table = geossl_cli::sweep::sweep_table(&rec).unwrap();
    assert_eq!(table.render(), fs::read_to_string(d.path().join("lam/table.txt")).unwrap());
    assert_eq!(table.to_csv().unwrap(), fs::read_to_string(d.path().join("lam/table.csv")).unwrap());
}

#[test]
fn report_emits_table_csv_and_plot() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "-q", "--axis", "module", "--values", "none,affine", "--seeds", "0,1", "--name", "cmp"];
    args.extend_from_slice(&SMALL);
    call(d.path(), &args);
    let out_dir = d.path().join("rep");
    let text = call(d.path(), &["report", "cmp", "--out", out_dir.to_str().unwrap()]);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[2].starts_with("SimCLR "), "{text}");
    assert!(lines[3].starts_with("SimCLR + A"), "{text}");
    let csv = fs::read_to_string(out_dir.join("curves.csv")).unwrap();
    assert!(csv.starts_with("variant,epoch,mean_acc,std\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let svg = fs::read_to_string(out_dir.join("curves.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.matches("<polygon").count() == 2);

    let before = fs::read(out_dir.join("curves.csv")).unwrap();
    call(d.path(), &["report", "cmp", "--format", "csv", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(before, fs::read(out_dir.join("curves.csv")).unwrap());
}

#[test]
fn report_warns_on_mixed_configs_but_still_emits() {
    let d = tempfile::tempdir().unwrap();
    for (id, ds) in [("s", "synthetic-shapes"), ("a", "synthetic-arrows")] {
        let set = format!("data.dataset={ds}");
        let mut args = vec!["train", "-q", "--run-id", id, "--set", set.as_str()];
        args.extend_from_slice(&SMALL);
        call(d.path(), &args);
    }
    let out_dir = d.path().join("r");
    let (c, o, e) = geossl(d.path(), &["report", "s", "a", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(c, 0, "{e}");
    assert!(e.contains("warning"), "{e}");
    assert!(o.contains("synthetic-arrows"));
    assert!(out_dir.join("curves.svg").exists());
}

#[test]
fn datasets_commands() {
    let d = tempfile::tempdir().unwrap();
    let root = d.path().join("data");
    let out = call(d.path(), &["datasets", "fetch", "synthetic-arrows", "--root", root.to_str().unwrap()]);
    assert!(out.contains("2 classes, train 500, test 200"), "{out}");
    assert!(root.read_dir().unwrap().count() > 0);
    assert!(call(d.path(), &["datasets", "list"]).contains("svhn-6v9"));
    let blocker = d.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let (c, _, e) = geossl(d.path(), &["datasets", "fetch", "cifar10", "--root", blocker.to_str().unwrap()]);
    assert_eq!(c, 2, "{e}");
}

#[test]
fn shipped_experiment_files_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments");
    let mut n = 0;
    for e in fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        let f = geossl_cli::experiment::ExperimentFile::read(&p).unwrap();
        let sweep = f.sweep.clone().unwrap();
        let axis = sweep.axis.clone().unwrap();
        for v in &sweep.values {
            let cfg = f.resolve(&[format!("{axis}={v}")]).unwrap();
            assert_eq!(cfg.preset, geossl::training::Preset::Desk);
        }
        n += 1;
    }
    assert!(n >= 8);
}
