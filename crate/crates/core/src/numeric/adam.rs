use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::error::{Error, Result};

/// Adam moment accumulators, mirroring the tensor layout of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(params: &P) -> Self {
        Self::with_hyperparameters(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyperparameters<P: ParamSet + ?Sized>(
        params: &P,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamState {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    /// One bias-corrected Adam update. Nothing is modified if any gradient is
    /// non-finite or the shapes disagree.
    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let grad_tensors = grads.tensors();
        let shapes_agree = grad_tensors.len() == self.first_moment.len()
            && grad_tensors
                .iter()
                .zip(&self.first_moment)
                .all(|(g, m)| g.len() == m.len());
        if !shapes_agree {
            return Err(Error::Usage(
                "Adam state and gradient layouts differ".into(),
            ));
        }
        for (t, g) in grad_tensors.iter().enumerate() {
            if let Some(e) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient {} at tensor {t}, element {e} (step {})",
                    g[e], self.step
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let mut param_tensors = params.tensors_mut();
        if param_tensors.len() != grad_tensors.len() {
            return Err(Error::Usage("parameter and gradient layouts differ".into()));
        }
        for (k, p) in param_tensors.iter_mut().enumerate() {
            let g = grad_tensors[k];
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Scalar(Vec<f64>);

    impl ParamSet for Scalar {
        fn tensors(&self) -> Vec<&[f64]> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Scalar(vec![1.5, -2.0]);
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &Scalar(vec![0.0, 0.0]), 0.01).unwrap();
        assert_eq!(p.0, vec![1.5, -2.0]);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = 1, v̂ = 1 after one step with g = 1, so Δp = lr / (1 + ε).
        let mut p = Scalar(vec![0.0]);
        let mut adam = AdamState::new(&p);
        adam.step(&mut p, &Scalar(vec![1.0]), 0.01).unwrap();
        let expected = -0.01 / (1.0 + 1e-8);
        assert!((p.0[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Scalar(vec![1.0]);
        let mut adam = AdamState::new(&p);
        let mut best = 1.0f64;
        for _ in 0..500 {
            let g = Scalar(vec![2.0 * p.0[0]]);
            adam.step(&mut p, &g, 0.01).unwrap();
            best = best.min(p.0[0].abs());
        }
        assert!(p.0[0].abs() < 0.05, "ended at {}", p.0[0]);
        assert!(best < 0.05);
    }

    #[test]
    fn decreases_monotonically_while_far_from_optimum() {
        let mut p = Scalar(vec![1.0]);
        let mut adam = AdamState::new(&p);
        let mut prev = p.0[0].abs();
        for _ in 0..80 {
            let g = Scalar(vec![2.0 * p.0[0]]);
            adam.step(&mut p, &g, 0.01).unwrap();
            assert!(p.0[0].abs() < prev);
            prev = p.0[0].abs();
        }
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut p = Scalar(vec![1.0, 2.0]);
        let mut adam = AdamState::new(&p);
        let before = adam.clone();
        let err = adam.step(&mut p, &Scalar(vec![0.1, f64::NAN]), 0.01);
        assert!(matches!(err, Err(Error::Training(_))));
        assert_eq!(adam, before);
        assert_eq!(p.0, vec![1.0, 2.0]);
    }

    #[test]
    fn identical_inputs_give_bitwise_identical_updates() {
        let run = || {
            let mut p = Scalar(vec![0.3, -0.7, 1.1]);
            let mut adam = AdamState::new(&p);
            for k in 0..25 {
                let g = Scalar(p.0.iter().map(|v| (v * k as f64).sin()).collect());
                adam.step(&mut p, &g, 0.001).unwrap();
            }
            (p, adam)
        };
        let (p1, a1) = run();
        let (p2, a2) = run();
        assert_eq!(
            p1.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            p2.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a1, a2);
    }
}
