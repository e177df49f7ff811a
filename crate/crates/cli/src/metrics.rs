use rmor::error::{Error, Result};
use rmor::linalg::DenseMatrix;

/// `‖reference − approx‖_F / ‖reference‖_F`.
pub fn rel_frobenius_error(reference: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    if reference.shape() != approx.shape() {
        return Err(Error::Shape(format!(
            "reference is {:?}, approximation is {:?}",
            reference.shape(),
            approx.shape()
        )));
    }
    let norm = reference.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Domain("relative error against a zero reference".into()));
    }
    Ok(reference.sub(approx).frobenius_norm() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DenseMatrix {
        DenseMatrix::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 0.5))
    }

    #[test]
    fn trivial_cases() {
        let r = sample();
        assert_eq!(rel_frobenius_error(&r, &r).unwrap(), 0.0);
        assert_eq!(rel_frobenius_error(&r, &DenseMatrix::zeros(4, 3)).unwrap(), 1.0);
        assert!((rel_frobenius_error(&r, &r.scaled(1.1)).unwrap() - 0.1).abs() <= 1e-14);
    }

    #[test]
    fn rejects_zero_reference_and_shape_mismatch() {
        let z = DenseMatrix::zeros(2, 2);
        assert!(matches!(rel_frobenius_error(&z, &z), Err(Error::Domain(_))));
        assert!(matches!(rel_frobenius_error(&sample(), &z), Err(Error::Shape(_))));
    }
}
