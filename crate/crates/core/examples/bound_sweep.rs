//! Sweeps per-row/per-column factor sparsity and compares the measured
//! sparsity of `B·A` with the lower bound.
//!
//! ```sh
//! cargo run --release --example bound_sweep -- [out.csv]
//! ```

use roselora::analysis::empirical_bound_sweep;
use roselora::harness::report::write_bound_sweep;

fn main() -> roselora::Result<()> {
    let grid = [0.0, 0.25, 0.5, 0.75, 0.9, 0.95];
    let rows = empirical_bound_sweep(&grid, 4, 64, 64, 100, 0)?;

    println!(
        "{:>6} {:>6} {:>10} {:>10} {:>10}",
        "row_s", "col_s", "mean s(BA)", "min s(BA)", "bound"
    );
    for r in &rows {
        println!(
            "{:>6.2} {:>6.2} {:>10.4} {:>10.4} {:>10.4}",
            r.row_sparsity, r.col_sparsity, r.empirical_product_sparsity, r.min_product_sparsity, r.theoretical_bound
        );
    }

    if let Some(path) = std::env::args().nth(1) {
        write_bound_sweep(&path, &rows)?;
        println!("wrote {path}");
    }
    Ok(())
}
