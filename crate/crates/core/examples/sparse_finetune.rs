//! Fine-tunes a pre-trained classifier on shifted data with a sparse adapter
//! and with a dense one, then reports accuracy and how much of the original
//! task each keeps.
//!
//! ```sh
//! cargo run --release --example sparse_finetune -- [seed]
//! ```

use roselora::harness::config::presets;
use roselora::harness::run_finetune;

fn main() -> roselora::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = presets::finetune().with_seed(seed);
    let (task, base) = cfg.prepare()?;
    let run = cfg.adapt_run()?;

    let sparse = run_finetune(&task, &base, &run)?;
    let dense = run_finetune(&task, &base, &run.dense_baseline())?;

    let last = sparse.run.reports.last().expect("at least one step");
    println!(
        "base accuracy on shifted data  {:.4}",
        sparse.metrics.base_adapt_accuracy
    );
    println!(
        "sparse adapter                 {:.4}  retention {:.4}  update sparsity {:.3}",
        sparse.metrics.adapt_accuracy, sparse.metrics.retention, last.delta_sparsity
    );
    println!(
        "dense adapter                  {:.4}  retention {:.4}",
        dense.metrics.adapt_accuracy, dense.metrics.retention
    );
    println!(
        "relative accuracy              {:.3}",
        sparse.metrics.adapt_accuracy / dense.metrics.adapt_accuracy
    );
    Ok(())
}
