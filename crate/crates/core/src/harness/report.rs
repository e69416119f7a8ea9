//! CSV output.

use std::path::Path;

use serde::Serialize;

use crate::analysis::BoundSweepRow;
use crate::error::Result;
use crate::trainer::StepReport;

/// Writes serialisable rows with a header line taken from the field names.
pub fn write_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: step, loss, keep_fraction, delta_sparsity, a_frob_sq, b_frob_sq.
pub fn write_steps(path: impl AsRef<Path>, reports: &[StepReport]) -> Result<()> {
    write_rows(path, reports)
}

#[derive(Serialize)]
struct BoundCsvRow {
    row_sparsity: f64,
    col_sparsity: f64,
    rank: usize,
    trials: usize,
    empirical_mean: f64,
    bound: f64,
}

/// Columns: row_sparsity, col_sparsity, rank, trials, empirical_mean, bound.
pub fn write_bound_sweep(path: impl AsRef<Path>, rows: &[BoundSweepRow]) -> Result<()> {
    let rows: Vec<BoundCsvRow> = rows
        .iter()
        .map(|r| BoundCsvRow {
            row_sparsity: r.row_sparsity,
            col_sparsity: r.col_sparsity,
            rank: r.rank,
            trials: r.trials,
            empirical_mean: r.empirical_product_sparsity,
            bound: r.theoretical_bound,
        })
        .collect();
    write_rows(path, &rows)
}
