use super::config::{Optimizer, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Scalar};

/// First and second moment estimates, one pair per parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Matrix<T>>,
    pub v: Vec<Matrix<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix<T>>) -> Self {
        let m: Vec<Matrix<T>> = params.into_iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        Self { v: m.clone(), m }
    }
}

/// One bias-corrected Adam(W) update at step `t >= 1` with learning rate `lr`.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut Matrix<T>],
    grads: &[Matrix<T>],
    state: &mut AdamState<T>,
    config: &TrainConfig,
    lr: f64,
    t: usize,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Contract("optimizer step index starts at 1".into()));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} parameter blocks, {} gradients, {} moment blocks",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[k].shape() {
            return Err(Error::Shape {
                op: "adam_step",
                left: p.shape(),
                right: g.shape(),
            });
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient in parameter block {k}")));
        }
    }
    let (b1, b2) = (T::lit(config.betas.0), T::lit(config.betas.1));
    let one = T::one();
    let c1 = one - b1.powi(t as i32);
    let c2 = one - b2.powi(t as i32);
    let lr = T::lit(lr);
    let eps = T::lit(config.eps);
    let decay = T::lit(config.weight_decay);
    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].as_slice();
        let m = state.m[k].as_mut_slice();
        let v = state.v[k].as_mut_slice();
        for (j, pj) in p.as_mut_slice().iter_mut().enumerate() {
            let orig = *pj;
            let gj = match config.optimizer {
                Optimizer::Adam => g[j] + decay * orig,
                Optimizer::AdamW => g[j],
            };
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *pj = orig - lr * m_hat / (v_hat.sqrt() + eps);
            if config.optimizer == Optimizer::AdamW {
                *pj = *pj - lr * decay * orig;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;

    fn cfg(optimizer: Optimizer, weight_decay: f64) -> TrainConfig {
        TrainConfig {
            optimizer,
            weight_decay,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let before = p.clone();
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Matrix::zeros(2, 2)], &mut state, &cfg(Optimizer::Adam, 0.0), 0.1, 1).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.m[0], Matrix::zeros(2, 2));
        assert_eq!(state.v[0], Matrix::zeros(2, 2));
    }

    #[test]
    fn first_step_hand_computed() {
        let mut p = Matrix::scalar(1.0f64);
        let mut state = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[Matrix::scalar(2.0)], &mut state, &cfg(Optimizer::Adam, 0.0), 0.001, 1).unwrap();
        // m_hat = 2, sqrt(v_hat) = 2
        let want = 1.0 - 0.001 * 2.0 / (2.0 + 1e-8);
        assert!((p.get(0, 0) - want).abs() < 1e-15);
        assert!(((1.0 - p.get(0, 0)) - 0.001).abs() < 1e-11);
    }

    #[test]
    fn adamw_is_adam_plus_decoupled_decay() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let p0 = rng.uniform_in(-3.0, 3.0);
            let g = rng.uniform_in(-3.0, 3.0);
            let lr = 0.01;
            let mut a = Matrix::scalar(p0);
            let mut sa = AdamState::new([&a]);
            adam_step(&mut [&mut a], &[Matrix::scalar(g)], &mut sa, &cfg(Optimizer::Adam, 0.0), lr, 1).unwrap();
            let mut w = Matrix::scalar(p0);
            let mut sw = AdamState::new([&w]);
            adam_step(&mut [&mut w], &[Matrix::scalar(g)], &mut sw, &cfg(Optimizer::AdamW, 0.01), lr, 1).unwrap();
            assert!((w.get(0, 0) - (a.get(0, 0) - lr * 0.01 * p0)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut a = Matrix::scalar(1.0);
        let mut b = Matrix::scalar(1.0);
        let mut state = AdamState::new([&a, &b]);
        let err = adam_step(
            &mut [&mut a, &mut b],
            &[Matrix::scalar(0.0), Matrix::filled(1, 1, f64::NAN)],
            &mut state,
            &cfg(Optimizer::Adam, 0.0),
            0.1,
            1,
        )
        .unwrap_err();
        assert!(err.to_string().contains("block 1"), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut a = Matrix::<f64>::zeros(2, 1);
        let mut state = AdamState::new([&a]);
        assert!(adam_step(&mut [&mut a], &[Matrix::zeros(1, 2)], &mut state, &cfg(Optimizer::Adam, 0.0), 0.1, 1).is_err());
        assert!(adam_step(&mut [&mut a], &[Matrix::zeros(2, 1)], &mut state, &cfg(Optimizer::Adam, 0.0), 0.1, 0).is_err());
    }
}
