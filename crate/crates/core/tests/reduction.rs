mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roselora::trainer::train;
use roselora::{LoraMlp, Matrix, Mlp, SparsitySchedule, TrainConfig};

fn to_layers(model: &LoraMlp) -> Vec<common::Layer> {
    model
        .layers()
        .iter()
        .map(|l| common::Layer {
            w0: common::from_flat(l.w0().rows(), l.w0().cols(), l.w0().data()),
            a: common::from_flat(l.a().rows(), l.a().cols(), l.a().data()),
            b: common::from_flat(l.b().rows(), l.b().cols(), l.b().data()),
        })
        .collect()
}

#[test]
fn dense_schedule_matches_plain_sgd_across_shapes() {
    for seed in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = rng.gen_range(2..=4);
        let mut dims: Vec<usize> = (0..=depth).map(|_| rng.gen_range(3..=10)).collect();
        dims[depth] = rng.gen_range(2..=4);
        let base = Mlp::random(&dims, &mut rng).unwrap();
        let rank = rng.gen_range(1..=*dims.iter().min().unwrap());
        let model = LoraMlp::from_base(&base, rank, seed).unwrap();
        let n = rng.gen_range(5..=30);
        let x = Matrix::uniform(dims[0], n, -1.0, 1.0, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dims[depth])).collect();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            schedule: SparsitySchedule::dense(80),
            beta: 0.5,
            edit_alpha: None,
            batch_size: rng.gen_range(1..=n),
            seed,
        };

        let mut reference = to_layers(&model);
        let xr = common::from_flat(x.rows(), x.cols(), x.data());
        let expected = common::sgd(
            &mut reference,
            &xr,
            &labels,
            cfg.learning_rate,
            cfg.batch_size,
            cfg.seed,
            80,
        );
        let got = train(model, &x, &labels, &cfg).unwrap();
        let losses: Vec<u64> = got.reports.iter().map(|r| r.loss.to_bits()).collect();
        let expected: Vec<u64> = expected.iter().map(|l| l.to_bits()).collect();
        assert_eq!(losses, expected, "seed {seed}, dims {dims:?}");
    }
}

#[test]
fn single_step_gradients_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let base = Mlp::random(&[5, 7, 3], &mut rng).unwrap();
    let mut model = LoraMlp::from_base(&base, 2, 1).unwrap();
    for layer in model.layers_mut() {
        let b = Matrix::uniform(layer.dims().0, 2, -0.3, 0.3, &mut rng);
        *layer = layer.clone().with_factors(layer.a().clone(), b).unwrap();
    }
    let x = Matrix::uniform(5, 6, -1.0, 1.0, &mut rng);
    let labels = [0, 1, 2, 2, 1, 0];
    let (loss, grads) = model.loss_and_grads(&x, &labels).unwrap();
    let (ref_loss, ref_grads) = common::loss_and_grads(&to_layers(&model), &common::from_flat(5, 6, x.data()), &labels);
    assert_eq!(loss.to_bits(), ref_loss.to_bits());
    for (g, (ga, gb)) in grads.iter().zip(&ref_grads) {
        assert_eq!(g.a.data(), ga.concat().as_slice());
        assert_eq!(g.b.data(), gb.concat().as_slice());
    }
}
