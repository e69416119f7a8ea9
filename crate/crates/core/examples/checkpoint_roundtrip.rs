//! Trains for a few steps, saves a checkpoint, reloads it and checks that
//! every tensor comes back bit for bit.

use roselora::harness::checkpoint::{config_digest, load_checkpoint, save_checkpoint};
use roselora::harness::config::presets;
use roselora::harness::experiments::{adapt, AdaptRun};

fn main() -> roselora::Result<()> {
    let cfg = presets::edit();
    let (task, base) = cfg.prepare()?;
    let mut run: AdaptRun = cfg.adapt_run()?;
    run.max_steps = Some(50);
    let result = adapt(&base, &task.adapt, &run)?;

    let dir = std::env::temp_dir().join("roselora-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("adapter.ckpt");
    save_checkpoint(&path, &result.state, &config_digest(&cfg))?;

    let loaded = load_checkpoint(&path)?;
    println!("{} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());
    println!(
        "step {}  digest {}",
        loaded.header.step,
        &loaded.header.config_digest[..16]
    );
    for t in &loaded.header.tensors {
        println!("  {:<12} {}x{}", t.name, t.rows, t.cols);
    }
    assert_eq!(loaded.state, result.state);
    println!("round trip exact");
    Ok(())
}
