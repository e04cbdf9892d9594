mod common;

use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coop-maddpg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_commands_and_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for word in ["train", "eval", "compare", "plot", "--config", "--seed", "--out"] {
        assert!(text.contains(word), "{word}");
    }
    for key in ["[world]", "[train]", "cooperation_threshold", "boundary_scale", "wall_clock"] {
        assert!(text.contains(key), "{key}");
    }
}

#[test]
fn missing_config_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["--config", "nowhere.toml", "train"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("nowhere.toml"), "{}", stderr(&out));
}

#[test]
fn bad_config_value_is_named() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[train]\ngamma = 1.5\n").unwrap();
    let out = cli(&["--config", "bad.toml", "train"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("bad.toml") && err.contains("gamma"), "{err}");
}

#[test]
fn train_eval_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(Path::new("runs"), &[0, 1], 6);
    std::fs::write(dir.path().join("c.toml"), cfg.to_toml()).unwrap();

    let out = cli(&["--config", "c.toml", "--seed", "7", "--out", "r", "train"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.path().join("r");
    assert!(run.join("metrics_7.csv").is_file());
    assert!(!run.join("metrics_0.csv").exists());
    assert!(run.join("manifest.txt").is_file());

    let out = cli(&["eval", "--checkpoint", "r/checkpoint_7_final.ckpt", "--episodes", "3"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("red_team="));

    let out = cli(&["--out", "p", "plot", "r/metrics_7.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let svgs = std::fs::read_dir(dir.path().join("p")).unwrap().count();
    assert!(svgs >= 1);
}

#[test]
fn resume_continues_from_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::tiny(Path::new("a"), &[0], 10);
    std::fs::write(dir.path().join("c.toml"), cfg.to_toml()).unwrap();
    assert!(cli(&["--config", "c.toml", "train"], dir.path()).status.success());
    assert!(cli(&["--config", "c.toml", "--out", "b", "train", "--episodes", "5"], dir.path())
        .status
        .success());
    let out = cli(
        &["--out", "b", "train", "--resume", "b/checkpoint_0_final.ckpt", "--episodes", "10"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        std::fs::read(dir.path().join("a/metrics_0.csv")).unwrap(),
        std::fs::read(dir.path().join("b/metrics_0.csv")).unwrap()
    );
}

#[test]
fn compare_with_mismatched_seeds_cites_confound() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("a.toml"), common::tiny(Path::new("x"), &[0, 1], 5).to_toml()).unwrap();
    std::fs::write(dir.path().join("b.toml"), common::tiny(Path::new("x"), &[0, 2], 5).to_toml()).unwrap();
    let out = cli(&["compare", "--baseline", "a.toml", "--variant", "b.toml"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("confounded") && err.contains("seeds"), "{err}");
}

#[test]
fn plot_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("m.csv"),
        "episode,red_0,red_team,green_team,total,wall_ms\n0,1,1,0,1,0\n1,1,1\n",
    )
    .unwrap();
    let out = cli(&["plot", "m.csv"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("m.csv") && err.contains("line 3"), "{err}");
}

#[test]
fn unwritable_output_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = cli(&["--out", "blocker/sub", "train"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("blocker"), "{}", stderr(&out));
}
