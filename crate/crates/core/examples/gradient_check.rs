//! Compares reverse-mode gradients of the adapted network against central
//! finite differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roselora::tensor::relative_error;
use roselora::{finite_diff_grad, LoraMlp, Matrix, Mlp};

fn main() -> roselora::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = Mlp::random(&[6, 10, 8, 4], &mut rng)?;
    let mut model = LoraMlp::from_base(&base, 3, 9)?;
    for layer in model.layers_mut() {
        let (d1, _) = layer.dims();
        let b = Matrix::uniform(d1, layer.rank(), -0.5, 0.5, &mut rng);
        *layer = layer.clone().with_factors(layer.a().clone(), b)?;
    }
    let x = Matrix::uniform(6, 5, -1.0, 1.0, &mut rng);
    let labels = [0, 3, 1, 2, 2];

    let (_, grads) = model.loss_and_grads(&x, &labels)?;
    for (l, g) in grads.iter().enumerate() {
        let layer = &model.layers()[l];
        let numeric_b = finite_diff_grad(
            |b| {
                let mut m = model.clone();
                m.layers_mut()[l] = layer.clone().with_factors(layer.a().clone(), b.clone()).unwrap();
                m.loss_and_grads(&x, &labels).unwrap().0
            },
            layer.b(),
            1e-5,
        )?;
        let numeric_a = finite_diff_grad(
            |a| {
                let mut m = model.clone();
                m.layers_mut()[l] = layer.clone().with_factors(a.clone(), layer.b().clone()).unwrap();
                m.loss_and_grads(&x, &labels).unwrap().0
            },
            layer.a(),
            1e-5,
        )?;
        println!(
            "layer {l}: rel err dA {:.2e}  dB {:.2e}",
            relative_error(&g.a, &numeric_a),
            relative_error(&g.b, &numeric_b)
        );
    }
    Ok(())
}
