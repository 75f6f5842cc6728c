use crate::error::{check_dim, Error, Result};
use crate::tensor::vector::{dot, norm, DenseVector, SymmetricMatrix};

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factorizes a symmetric positive-definite matrix.
    ///
    /// Fails with [`Error::LambdaBelowSpectralBound`] at the first
    /// non-positive pivot.
    pub fn factor(a: &SymmetricMatrix) -> Result<Self> {
        let d = a.dim();
        let mut l = vec![0.0; d * d];
        for j in 0..d {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * d + k] * l[j * d + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::LambdaBelowSpectralBound { pivot: j });
            }
            let ljj = diag.sqrt();
            l[j * d + j] = ljj;
            for i in (j + 1)..d {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * d + k] * l[j * d + k];
                }
                l[i * d + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: d, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `A y = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        debug_assert_eq!(rhs.len(), d);
        let l = &self.lower;
        let mut y = rhs.to_vec();
        for i in 0..d {
            let s = dot(&l[i * d..i * d + i], &y[..i]);
            y[i] = (y[i] - s) / l[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= l[k * d + i] * y[k];
            }
            y[i] = s / l[i * d + i];
        }
        y
    }

    /// `log det A = 2 sum log L_ii`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.lower[i * self.dim + i].ln())
            .sum::<f64>()
            * 2.0
    }
}

/// Solves `V y = rhs` for negative-definite symmetric `V` by factorizing `-V`.
pub fn solve_neg_definite(v: &SymmetricMatrix, rhs: &DenseVector) -> Result<DenseVector> {
    check_dim("negative-definite solve", v.dim(), rhs.dim())?;
    let chol = Cholesky::factor(&v.scaled(-1.0))?;
    let y = chol.solve(rhs);
    Ok(DenseVector::from_vec_unchecked(
        y.into_iter().map(|x| -x).collect(),
    ))
}

/// Largest eigenvalue of a symmetric matrix by shifted power iteration.
///
/// Iterates on `W + cI` with `c = |W|_F`, which makes every eigenvalue
/// non-negative so the dominant one is the maximum. The start vector is the
/// all-ones direction with a small deterministic ramp added, so that it is
/// not orthogonal to the top eigenvector of sign-alternating matrices such
/// as `[[0, -1], [-1, 0]]`.
pub fn max_eigenvalue(w: &SymmetricMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    let d = w.dim();
    if d == 0 {
        return Err(Error::Invalid("max_eigenvalue of empty matrix".into()));
    }
    let shift = w.frobenius_norm();
    if shift == 0.0 {
        return Ok(0.0);
    }
    let a = w.shifted(shift);
    let mut v: Vec<f64> = (0..d)
        .map(|i| 1.0 + 0.5 * (i + 1) as f64 / (d + 1) as f64)
        .collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);

    let mut estimate = f64::NAN;
    for _ in 0..max_iters {
        let av = a.matvec_unchecked(&v);
        let rayleigh = dot(&v, &av);
        let n = norm(&av);
        if n == 0.0 {
            return Ok(-shift);
        }
        // residual |Av - rho v| bounds the distance to the nearest eigenvalue
        let residual = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - rayleigh * y).powi(2))
            .sum::<f64>()
            .sqrt();
        let converged = (rayleigh - estimate).abs() < tol * 1e-2 && residual < tol.sqrt();
        estimate = rayleigh;
        if converged || residual < tol {
            return Ok(estimate - shift);
        }
        v = av.into_iter().map(|x| x / n).collect();
    }
    Err(Error::NotConverged {
        what: "power iteration",
        iterations: max_iters,
        last: estimate - shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_solves() {
        let v = SymmetricMatrix::identity(3).scaled(-1.0);
        let y = solve_neg_definite(&v, &DenseVector::new(vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[-1.0, -2.0, -3.0]);

        let v = SymmetricMatrix::diagonal(&[-2.0, -4.0]).unwrap();
        let y = solve_neg_definite(&v, &DenseVector::new(vec![2.0, 4.0]).unwrap()).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-15 && (y[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_is_rejected() {
        let v = SymmetricMatrix::diagonal(&[-1.0, 0.5]).unwrap();
        let err = solve_neg_definite(&v, &DenseVector::new(vec![1.0, 1.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::LambdaBelowSpectralBound { pivot: 1 }));
    }

    #[test]
    fn log_det_of_diagonal() {
        let c = Cholesky::factor(&SymmetricMatrix::diagonal(&[2.0, 3.0]).unwrap()).unwrap();
        assert!((c.log_det() - 6f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn eigenvalue_examples() {
        let tol = 1e-10;
        let w = SymmetricMatrix::diagonal(&[0.5, -0.3]).unwrap();
        assert!((max_eigenvalue(&w, tol, 100_000).unwrap() - 0.5).abs() < 1e-8);
        assert_eq!(max_eigenvalue(&SymmetricMatrix::zeros(5), tol, 10).unwrap(), 0.0);
        let w = SymmetricMatrix::from_row_major(2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((max_eigenvalue(&w, tol, 100_000).unwrap() - 1.0).abs() < 1e-8);
        let w = SymmetricMatrix::from_row_major(2, vec![0.0, -1.0, -1.0, 0.0]).unwrap();
        assert!((max_eigenvalue(&w, tol, 100_000).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eigenvalue_reports_non_convergence() {
        let w = SymmetricMatrix::diagonal(&[1.0, 0.999, -0.5]).unwrap();
        assert!(matches!(
            max_eigenvalue(&w, 1e-14, 3),
            Err(Error::NotConverged { .. })
        ));
    }
}
