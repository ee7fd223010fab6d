use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kickoff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kickoff"))
        .args(args)
        .env_remove("KICKOFF_SEED")
        .env_remove("KICKOFF_OUT_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    let text = format!(
        "out_dir = {:?}\nbudget_env_steps = 300\nwindow = 4\ncheckpoint_every = 1\n\
         [workers]\nnum_workers = 2\nsteps_per_worker = 50\n\
         [train]\nminibatch_size = 50\nwarmup_rollouts = 1\n\
         [network]\nactor_hidden = 16\ncritic_hidden = 16\n",
        dir.join("run").display().to_string()
    );
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn train_status_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small_config(dir.path());
    let run = dir.path().join("run");

    let out = stdout(&kickoff(&["train", "--config", cfg.to_str().unwrap()]));
    assert!(out.contains("\"rollouts\": 3"), "{out}");
    assert!(run.join("actor.json").exists());

    let status = stdout(&kickoff(&["league-status", "--run", run.to_str().unwrap()]));
    assert!(status.contains("curriculum_1"), "{status}");

    // Resume with a larger budget carries on from the checkpoint.
    let out = stdout(&kickoff(&[
        "train",
        "--resume",
        run.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--budget",
        "400",
    ]));
    assert!(out.contains("\"rollouts\": 4"), "{out}");

    let reports = dir.path().join("reports");
    let actor = run.join("actor.json");
    let out = stdout(&kickoff(&[
        "evaluate",
        "--checkpoint",
        actor.to_str().unwrap(),
        "--matches",
        "2",
        "--seeds",
        "3,4",
        "--out",
        reports.to_str().unwrap(),
    ]));
    assert_eq!(out.lines().filter(|l| l.starts_with("seed")).count(), 2, "{out}");
    assert!(reports.join("eval_matches.csv").exists());
    assert!(reports.join("eval_aggregate.csv").exists());
}

#[test]
fn missing_checkpoint_exits_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.json");
    let o = kickoff(&[
        "evaluate",
        "--checkpoint",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn bad_inputs_exit_non_zero() {
    assert!(!kickoff(&["train", "--profile", "huge"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    assert!(!kickoff(&["league-status", "--run", dir.path().to_str().unwrap()])
        .status
        .success());
    let o = Command::new(env!("CARGO_BIN_EXE_kickoff"))
        .args(["train", "--budget", "0"])
        .env("KICKOFF_SEED", "not-a-number")
        .env("KICKOFF_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(!o.status.success());
}
