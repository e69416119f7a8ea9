//! Accuracy of sparse and dense adapters trained on nested subsets of the
//! adaptation data.

use roselora::harness::config::presets;
use roselora::harness::run_data_scaling;

fn main() -> roselora::Result<()> {
    let cfg = presets::finetune();
    let (task, base) = cfg.prepare()?;
    let rows = run_data_scaling(&task, &base, &cfg.adapt_run()?, &[1.0, 0.5, 0.25, 0.125])?;
    println!("fraction  samples  dense   sparse");
    for r in rows {
        println!(
            "{:>8.3}  {:>7}  {:.4}  {:.4}",
            r.fraction, r.n_train, r.lora_accuracy, r.roselora_accuracy
        );
    }
    Ok(())
}
