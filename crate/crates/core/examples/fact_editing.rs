//! Rewrites ten memorised facts with a clipped sparse adapter and checks
//! that the other facts keep their answers.

use roselora::harness::config::presets;
use roselora::harness::run_edit_experiment;

fn main() -> roselora::Result<()> {
    println!("seed  sparse success/locality  dense success/locality");
    for seed in 0..3 {
        let cfg = presets::edit().with_seed(seed);
        let (task, base) = cfg.prepare()?;
        let run = cfg.adapt_run()?;
        let sparse = run_edit_experiment(&task, &base, &run)?.metrics;
        let dense = run_edit_experiment(&task, &base, &run.dense_baseline())?.metrics;
        println!(
            "{seed:>4}  {:>8.3} / {:<13.3} {:>6.3} / {:.3}",
            sparse.edit_success, sparse.locality, dense.edit_success, dense.locality
        );
    }
    Ok(())
}
