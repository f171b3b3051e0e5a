use super::PrivacyError;
use crate::tensor::{Matrix, ParameterVector};

/// Decoder `B` (unit lower-bidiagonal with `-lambda` below the diagonal) and
/// its inverse `C = B^-1` with `C[i][j] = lambda^(i-j)` for `i >= j`.
pub fn correction_matrices(n: usize, lambda: f64) -> Result<(Matrix, Matrix), PrivacyError> {
    if n == 0 {
        return Err(PrivacyError::Config("need at least one step".into()));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(PrivacyError::Config(format!(
            "lambda {lambda} outside [0, 1)"
        )));
    }
    let mut decoder = Matrix::identity(n);
    let mut encoder = Matrix::zeros(n, n);
    for i in 0..n {
        if i > 0 {
            decoder.set(i, i - 1, -lambda);
        }
        let mut power = 1.0;
        for j in (0..=i).rev() {
            encoder.set(i, j, power);
            power *= lambda;
        }
    }
    Ok((decoder, encoder))
}

fn stack(rows: &[ParameterVector]) -> Result<Matrix, PrivacyError> {
    let dim = rows
        .first()
        .ok_or_else(|| PrivacyError::Config("no rows".into()))?
        .dim();
    if rows.iter().any(|r| r.dim() != dim) {
        return Err(PrivacyError::Config("rows differ in dimension".into()));
    }
    let data = rows
        .iter()
        .flat_map(|r| r.as_slice().iter().copied())
        .collect();
    Ok(Matrix::from_vec(rows.len(), dim, data)?)
}

/// The released sequence `B (C x + Z)` for gradient rows `x` and noise rows `Z`.
pub fn matrix_mechanism_outputs(
    grad_rows: &[ParameterVector],
    noise_rows: &[ParameterVector],
    lambda: f64,
) -> Result<Vec<ParameterVector>, PrivacyError> {
    if grad_rows.len() != noise_rows.len() {
        return Err(PrivacyError::Config(format!(
            "{} gradient rows but {} noise rows",
            grad_rows.len(),
            noise_rows.len()
        )));
    }
    let x = stack(grad_rows)?;
    let z = stack(noise_rows)?;
    if x.cols() != z.cols() {
        return Err(PrivacyError::Config(
            "gradient and noise dims differ".into(),
        ));
    }
    let (decoder, encoder) = correction_matrices(grad_rows.len(), lambda)?;
    let mut encoded = encoder.matmul(&x)?;
    for (e, n) in encoded.data_mut().iter_mut().zip(z.data()) {
        *e += n;
    }
    let out = decoder.matmul(&encoded)?;
    (0..out.rows())
        .map(|i| ParameterVector::new(out.row(i).to_vec()).map_err(PrivacyError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_lambda_gives_identities() {
        let (b, c) = correction_matrices(5, 0.0).unwrap();
        assert_eq!(b, Matrix::identity(5));
        assert_eq!(c, Matrix::identity(5));
    }

    #[test]
    fn two_by_two() {
        let (b, c) = correction_matrices(2, 0.5).unwrap();
        assert_eq!(b.data(), &[1.0, 0.0, -0.5, 1.0]);
        assert_eq!(c.data(), &[1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn inverse_is_exact_enough() {
        for lambda in [0.3, 0.7, 0.9] {
            for n in 1..=16 {
                let (b, c) = correction_matrices(n, lambda).unwrap();
                assert!(b.matmul(&c).unwrap().max_abs_diff(&Matrix::identity(n)) < 1e-12);
            }
        }
    }

    #[test]
    fn zero_lambda_adds_noise_rowwise() {
        let x = [pv(&[1.0, 2.0]), pv(&[3.0, 4.0])];
        let z = [pv(&[0.5, -0.5]), pv(&[0.25, 0.0])];
        let out = matrix_mechanism_outputs(&x, &z, 0.0).unwrap();
        assert_eq!(out, vec![pv(&[1.5, 1.5]), pv(&[3.25, 4.0])]);
    }

    #[test]
    fn single_step_ignores_lambda() {
        let out = matrix_mechanism_outputs(&[pv(&[1.0])], &[pv(&[2.0])], 0.9).unwrap();
        assert_eq!(out, vec![pv(&[3.0])]);
    }

    #[test]
    fn mismatched_inputs() {
        assert!(matrix_mechanism_outputs(&[pv(&[1.0])], &[], 0.5).is_err());
        assert!(matrix_mechanism_outputs(&[pv(&[1.0])], &[pv(&[1.0, 2.0])], 0.5).is_err());
        assert!(correction_matrices(0, 0.5).is_err());
        assert!(correction_matrices(3, 1.0).is_err());
    }
}
