use super::{Matrix, Scalar};
use crate::error::{Error, Result};

/// Central-difference gradient of a scalar function, one entry at a time.
pub fn finite_diff_gradient<T, F>(f: F, x: &Matrix<T>, h: T) -> Result<Matrix<T>>
where
    T: Scalar,
    F: Fn(&Matrix<T>) -> T,
{
    if !(h > T::zero()) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let two_h = h + h;
    for i in 0..x.len() {
        let orig = probe.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "function is not finite around flat entry {i}"
            )));
        }
        grad.as_mut_slice()[i] = (plus - minus) / two_h;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_gives_ones() {
        let x = Matrix::from_rows(&[vec![0.5f64, -2.0], vec![3.0, 1.0]]).unwrap();
        let g = finite_diff_gradient(|m| m.sum(), &x, 1e-5).unwrap();
        for v in g.as_slice() {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn squared_norm() {
        let x = Matrix::row_vector(vec![1.0f64, 2.0]).unwrap();
        let g = finite_diff_gradient(|m| m.as_slice().iter().map(|v| v * v).sum(), &x, 1e-5).unwrap();
        assert!((g.get(0, 0) - 2.0).abs() < 1e-8);
        assert!((g.get(0, 1) - 4.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        let x = Matrix::row_vector(vec![1.0f64]).unwrap();
        assert!(finite_diff_gradient(|m| m.sum(), &x, 0.0).is_err());
        assert!(matches!(
            finite_diff_gradient(|_| f64::NAN, &x, 1e-3),
            Err(Error::Numeric(_))
        ));
    }
}
