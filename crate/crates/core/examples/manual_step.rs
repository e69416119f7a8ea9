//! Drives the training step by hand on a small random network, printing the
//! keep schedule and the per-row / per-column budget as pruning kicks in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roselora::{roselora_step, LoraMlp, Matrix, Mlp, SparsitySchedule, TrainConfig, TrainState};

fn main() -> roselora::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = Mlp::random(&[12, 24, 3], &mut rng)?;
    let x = Matrix::uniform(12, 48, -1.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..48).map(|j| (j * 7 + 1) % 3).collect();

    let cfg = TrainConfig {
        learning_rate: 0.1,
        schedule: SparsitySchedule::from_sparsity(0.8, 10, 40, 60)?,
        beta: 0.8,
        edit_alpha: Some(4.0),
        batch_size: 48,
        seed: 0,
    };
    let mut state = TrainState::new(LoraMlp::from_base(&base, 3, 1)?, cfg.beta)?;

    for t in 1..=cfg.total_steps() {
        let r = roselora_step(&mut state, &cfg, &x, &labels, t)?;
        if t % 10 == 0 {
            let l0 = &state.model.layers()[0];
            println!(
                "t={t:>2} loss {:.4} keep {:.3} s(ΔW) {:.3}  A row nnz {:?}  ‖A‖² {:.3}",
                r.loss,
                r.keep_fraction,
                r.delta_sparsity,
                l0.a_row_nnz(),
                r.a_frob_sq
            );
        }
    }
    Ok(())
}
