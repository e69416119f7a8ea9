//! Sparse factors do not make a sparse product: with only the first row of
//! `A` and the first column of `B` filled in, each factor is `(r−1)/r`
//! sparse and `B·A` is fully dense. Constraining every row of `A` and every
//! column of `B` instead gives a real guarantee.

use roselora::analysis::{bound_for_factors, example1_counterexample, sparsity};

fn main() -> roselora::Result<()> {
    for r in [2, 4, 10] {
        let (a, b) = example1_counterexample(r, 32, 48, r as u64)?;
        let ba = b.matmul(&a)?;
        println!(
            "r = {r:>2}: s(A) = {:.3}  s(B) = {:.3}  s(BA) = {:.3}  row/col bound = {:.3}",
            sparsity(&a),
            sparsity(&b),
            sparsity(&ba),
            bound_for_factors(&a, &b)?
        );
    }
    Ok(())
}
