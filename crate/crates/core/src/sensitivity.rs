//! Sensitivity importance scores `|w · ∂L/∂w|` and their moving average.

use serde::{Deserialize, Serialize};

use crate::adapter::LoraAdapter;
use crate::error::{contract, Error, Result};
use crate::tensor::Matrix;

/// Entrywise `|param ⊙ grad|`.
pub fn instantaneous_sensitivity(param: &Matrix, grad: &Matrix) -> Result<Matrix> {
    param.zip_map(grad, "instantaneous_sensitivity", |p, g| (p * g).abs())
}

/// Smoothed scores for both factors of one adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityState {
    pub(crate) ema_a: Matrix,
    pub(crate) ema_b: Matrix,
    pub(crate) beta: f64,
    pub(crate) steps_seen: u64,
}

impl SensitivityState {
    pub fn new(adapter: &LoraAdapter, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(contract(format!("beta must lie in [0, 1), got {beta}")));
        }
        Ok(Self {
            ema_a: Matrix::zeros(adapter.a().rows(), adapter.a().cols()),
            ema_b: Matrix::zeros(adapter.b().rows(), adapter.b().cols()),
            beta,
            steps_seen: 0,
        })
    }

    /// Rebuilds a state from stored parts (checkpoint loading).
    pub fn from_parts(ema_a: Matrix, ema_b: Matrix, beta: f64, steps_seen: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(contract(format!("beta must lie in [0, 1), got {beta}")));
        }
        if ema_a.data().iter().chain(ema_b.data()).any(|v| !(*v >= 0.0)) {
            return Err(contract("sensitivity scores must be nonnegative"));
        }
        Ok(Self {
            ema_a,
            ema_b,
            beta,
            steps_seen,
        })
    }

    pub fn ema_a(&self) -> &Matrix {
        &self.ema_a
    }

    pub fn ema_b(&self) -> &Matrix {
        &self.ema_b
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    pub fn matches(&self, adapter: &LoraAdapter) -> bool {
        self.ema_a.shape() == adapter.a().shape() && self.ema_b.shape() == adapter.b().shape()
    }

    /// Folds one step of instantaneous scores into the average.
    ///
    /// The first observation seeds the average directly; after that
    /// `Ī ← β·Ī + (1−β)·I`.
    pub fn update(&mut self, inst_a: &Matrix, inst_b: &Matrix) -> Result<()> {
        for (ema, inst, op) in [
            (&self.ema_a, inst_a, "update_ema A"),
            (&self.ema_b, inst_b, "update_ema B"),
        ] {
            if ema.shape() != inst.shape() {
                return Err(Error::Shape {
                    op,
                    lhs: ema.shape(),
                    rhs: inst.shape(),
                });
            }
        }
        if self.steps_seen == 0 {
            self.ema_a = inst_a.clone();
            self.ema_b = inst_b.clone();
        } else {
            let beta = self.beta;
            let blend = |old: f64, new: f64| beta * old + (1.0 - beta) * new;
            self.ema_a = self.ema_a.zip_map(inst_a, "update_ema", blend)?;
            self.ema_b = self.ema_b.zip_map(inst_b, "update_ema", blend)?;
        }
        self.steps_seen += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(shape_a: (usize, usize), shape_b: (usize, usize), beta: f64) -> SensitivityState {
        SensitivityState::from_parts(
            Matrix::zeros(shape_a.0, shape_a.1),
            Matrix::zeros(shape_b.0, shape_b.1),
            beta,
            0,
        )
        .unwrap()
    }

    #[test]
    fn sensitivity_is_abs_product() {
        let p = Matrix::from_rows(&[[2.0, 0.0]]);
        let g = Matrix::from_rows(&[[-3.0, 5.0]]);
        assert_eq!(
            instantaneous_sensitivity(&p, &g).unwrap(),
            Matrix::from_rows(&[[6.0, 0.0]])
        );
    }

    #[test]
    fn sensitivity_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Matrix::uniform(4, 6, -1.0, 1.0, &mut rng);
        let g = Matrix::uniform(4, 6, -1.0, 1.0, &mut rng);
        let s = instantaneous_sensitivity(&p, &g).unwrap();
        for i in 0..4 {
            for j in 0..6 {
                assert_eq!(s.get(i, j), (p.get(i, j) * g.get(i, j)).abs());
            }
        }
    }

    #[test]
    fn sensitivity_shape_mismatch() {
        assert!(instantaneous_sensitivity(&Matrix::zeros(2, 2), &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn cold_start_seeds_average() {
        let mut st = state((1, 1), (1, 1), 0.8);
        st.update(&Matrix::filled(1, 1, 5.0), &Matrix::filled(1, 1, 5.0))
            .unwrap();
        assert_eq!(st.ema_a().get(0, 0), 5.0);
        assert_eq!(st.steps_seen(), 1);
    }

    #[test]
    fn ema_arithmetic() {
        let mut st = state((1, 1), (1, 1), 0.8);
        st.steps_seen = 1;
        st.update(&Matrix::ones(1, 1), &Matrix::ones(1, 1)).unwrap();
        assert!((st.ema_a().get(0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_input_converges() {
        // |Ī₅₀ − c| ≤ β^49·|Ī₁ − c| = 0 after a cold start, and well within
        // 1e-4 even from a zero start: 0.8^50·3 ≈ 4.3e-5.
        let c = 3.0;
        let mut st = state((2, 2), (2, 2), 0.8);
        st.steps_seen = 1;
        for _ in 0..50 {
            st.update(&Matrix::filled(2, 2, c), &Matrix::filled(2, 2, c)).unwrap();
        }
        assert!((st.ema_a().get(1, 1) - c).abs() < 1e-4);
        assert!(0.8f64.powi(50) * c < 1e-4);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut st = state((2, 3), (4, 2), 0.5);
        assert!(st.update(&Matrix::zeros(3, 2), &Matrix::zeros(4, 2)).is_err());
        assert_eq!(st.steps_seen(), 0);
    }

    #[test]
    fn beta_range_checked() {
        assert!(SensitivityState::from_parts(Matrix::zeros(1, 1), Matrix::zeros(1, 1), 1.0, 0).is_err());
        assert!(SensitivityState::from_parts(Matrix::zeros(1, 1), Matrix::zeros(1, 1), -0.1, 0).is_err());
    }

    proptest! {
        #[test]
        fn average_stays_within_history(seed in any::<u64>(), beta in 0.0f64..0.99, steps in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = state((2, 3), (3, 2), beta);
            let mut lo = Matrix::filled(2, 3, f64::INFINITY);
            let mut hi = Matrix::filled(2, 3, f64::NEG_INFINITY);
            for _ in 0..steps {
                let ia = Matrix::uniform(2, 3, 0.0, 10.0, &mut rng);
                let ib = Matrix::uniform(3, 2, 0.0, 10.0, &mut rng);
                lo = lo.zip_map(&ia, "min", f64::min).unwrap();
                hi = hi.zip_map(&ia, "max", f64::max).unwrap();
                st.update(&ia, &ib).unwrap();
            }
            for k in 0..6 {
                let v = st.ema_a().data()[k];
                prop_assert!(v >= lo.data()[k] - 1e-12 && v <= hi.data()[k] + 1e-12);
                prop_assert!(v >= 0.0);
            }
        }

        #[test]
        fn beta_zero_reproduces_instantaneous(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut st = state((2, 2), (2, 2), 0.0);
            for _ in 0..3 {
                let ia = Matrix::uniform(2, 2, 0.0, 1.0, &mut rng);
                let ib = Matrix::uniform(2, 2, 0.0, 1.0, &mut rng);
                st.update(&ia, &ib).unwrap();
                prop_assert_eq!(st.ema_a(), &ia);
                prop_assert_eq!(st.ema_b(), &ib);
            }
        }

        #[test]
        fn sign_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = Matrix::uniform(3, 3, -1.0, 1.0, &mut rng);
            let g = Matrix::uniform(3, 3, -1.0, 1.0, &mut rng);
            let base = instantaneous_sensitivity(&p, &g).unwrap();
            prop_assert_eq!(&instantaneous_sensitivity(&p.scale(-1.0), &g).unwrap(), &base);
            prop_assert_eq!(&instantaneous_sensitivity(&p, &g.scale(-1.0)).unwrap(), &base);
        }
    }
}
