//! Hermitian eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::{Result, SenseError};

/// `A = V diag(values) V†` with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: DVector<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        &scaled * self.vectors.adjoint()
    }

    /// Energies `|v_i† y|²` of `y` along each eigenvector.
    pub fn projections(&self, y: &DVector<Complex64>) -> DVector<f64> {
        let coeffs = self.vectors.ad_mul(y);
        coeffs.map(|c| c.norm_sqr())
    }
}

pub(crate) fn frobenius(a: &DMatrix<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Rejects inputs with `‖A − A†‖_F ≥ 1e−9 ‖A‖_F`. The input is symmetrized
/// before factorization so the returned basis is exactly unitary up to
/// rounding.
pub fn hermitian_eig(a: &DMatrix<Complex64>) -> Result<EigenSystem> {
    if !a.is_square() {
        return Err(SenseError::domain(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let norm = frobenius(a);
    let skew = frobenius(&(a - a.adjoint()));
    if skew >= 1e-9 * norm.max(f64::MIN_POSITIVE) && skew > 0.0 {
        return Err(SenseError::domain(format!(
            "matrix is not Hermitian (skew part {skew:.3e}, norm {norm:.3e})"
        )));
    }
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);

    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_normal, rng::stream};

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = stream(seed, 0);
        let g = DMatrix::from_fn(n, n, |_, _| complex_normal(&mut rng, 1.0));
        (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = hermitian_eig(&DMatrix::identity(6, 6)).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn diagonal_sorted_descending() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = Complex64::new(1.0, 0.0);
        a[(1, 1)] = Complex64::new(3.0, 0.0);
        let e = hermitian_eig(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        // eigenvector for 3 is e_1 up to phase
        assert!((e.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!(e.vectors[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn random_hermitian_trace_and_reconstruction() {
        for seed in 0..5 {
            let a = random_hermitian(8, seed);
            let e = hermitian_eig(&a).unwrap();
            let trace: f64 = (0..8).map(|i| a[(i, i)].re).sum();
            assert!((e.values.sum() - trace).abs() < 1e-9);
            let err = frobenius(&(e.reconstruct() - &a));
            assert!(err < 1e-8 * frobenius(&a));
            let gram = e.vectors.adjoint() * &e.vectors;
            assert!(frobenius(&(gram - DMatrix::identity(8, 8))) < 1e-9);
            for w in e.values.as_slice().windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = random_hermitian(4, 1);
        a[(0, 1)] += Complex64::new(0.1, 0.0);
        assert!(hermitian_eig(&a).is_err());
        assert!(hermitian_eig(&DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn projections_sum_to_norm() {
        let a = random_hermitian(5, 3);
        let e = hermitian_eig(&a).unwrap();
        let mut rng = stream(4, 0);
        let y = DVector::from_fn(5, |_, _| complex_normal(&mut rng, 1.0));
        let p = e.projections(&y);
        assert!((p.sum() - y.norm_squared()).abs() < 1e-12);
    }
}
