use std::fs;
use std::process::{Command, Output};

fn roselora(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roselora"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let o = roselora(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in [
        "pretrain",
        "train",
        "edit",
        "forgetting",
        "data-scaling",
        "analyze-bound",
        "eval",
    ] {
        assert!(text.contains(cmd), "missing {cmd} in help");
    }
}

#[test]
fn eval_requires_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = roselora(&["eval", "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--checkpoint"));
}

#[test]
fn corrupt_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ckpt");
    fs::write(&path, b"RLORACKP\x01\x00\x00\x00garbage").unwrap();
    let o = roselora(&[
        "eval",
        "--checkpoint",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("checkpoint"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let text = include_str!("../configs/bound.toml").replace("trials = 100", "trials = 100\nsamples = 3");
    fs::write(&cfg, text).unwrap();
    let o = roselora(&[
        "analyze-bound",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("samples"), "{}", stderr(&o));
}

#[test]
fn bound_sweep_from_small_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let text = include_str!("../configs/bound.toml")
        .replace("trials = 100", "trials = 5")
        .replace("grid = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95]", "grid = [0.5, 0.9]");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = roselora(&[
        "analyze-bound",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("bound.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(fs::read_to_string(out.join("config.toml"))
        .unwrap()
        .contains("trials = 5"));
}

#[test]
fn pretrained_checkpoint_must_fit_the_task() {
    let dir = tempfile::tempdir().unwrap();
    let pre = dir.path().join("pre");
    let cfg = dir.path().join("small.toml");
    fs::write(
        &cfg,
        include_str!("../configs/bound.toml").replace(
            "[bound]",
            "[pretrain]\nhidden = 8\nsteps = 20\nlearning_rate = 0.01\nbatch_size = 16\n\n[bound]",
        ),
    )
    .unwrap();
    let o = roselora(&[
        "pretrain",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        pre.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    // The default fine-tuning task has a different input width.
    let base = pre.join("base.ckpt");
    let o = roselora(&[
        "train",
        "--checkpoint",
        base.to_str().unwrap(),
        "--out",
        dir.path().join("t").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not fit"), "{}", stderr(&o));
}
