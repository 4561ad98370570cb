//! Dense symmetric linear algebra used throughout the crate.
//!
//! Every matrix function (powers, square roots, inverse square roots) goes
//! through one symmetric eigendecomposition with eigenvalues clamped at zero,
//! so fractional powers of PSD matrices are always well defined.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Smallest eigenvalue a covariance may have before it is treated as singular.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

/// Returns `(m + m^T) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Eigendecomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen(m: &Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = Matrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn eigenvalues(m: &Matrix) -> Vector {
    sym_eigen(m).0
}

pub fn lambda_min(m: &Matrix) -> f64 {
    eigenvalues(m).min()
}

pub fn lambda_max(m: &Matrix) -> f64 {
    eigenvalues(m).max()
}

/// Spectral norm of a symmetric matrix, the largest absolute eigenvalue.
pub fn spectral_norm(m: &Matrix) -> f64 {
    eigenvalues(m).amax()
}

/// `V f(Λ) V^T` for the symmetric part of `m`.
pub fn sym_apply(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let (values, vectors) = sym_eigen(m);
    let mapped = values.map(f);
    &vectors * Matrix::from_diagonal(&mapped) * vectors.transpose()
}

/// `m^p` with eigenvalues clamped at zero first.
pub fn psd_pow(m: &Matrix, p: f64) -> Matrix {
    sym_apply(m, |l| l.max(0.0).powf(p))
}

pub fn psd_sqrt(m: &Matrix) -> Matrix {
    sym_apply(m, |l| l.max(0.0).sqrt())
}

/// `tr(m^p)` for a PSD matrix, eigenvalues clamped at zero.
pub fn trace_pow(m: &Matrix, p: f64) -> f64 {
    eigenvalues(m).iter().map(|l| l.max(0.0).powf(p)).sum()
}

/// Inverse square root of an SPD matrix.
///
/// Fails with [`Error::DegenerateCovariance`] when the smallest eigenvalue is
/// at or below [`SINGULAR_EIGENVALUE`].
pub fn spd_inv_sqrt(m: &Matrix) -> Result<Matrix> {
    let (values, vectors) = sym_eigen(m);
    let min = values.min();
    if min <= SINGULAR_EIGENVALUE {
        return Err(Error::DegenerateCovariance { min_eigenvalue: min, threshold: SINGULAR_EIGENVALUE });
    }
    let mapped = values.map(|l| 1.0 / l.sqrt());
    Ok(&vectors * Matrix::from_diagonal(&mapped) * vectors.transpose())
}

pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let (values, vectors) = sym_eigen(m);
    let min = values.min();
    if min <= SINGULAR_EIGENVALUE {
        return Err(Error::DegenerateCovariance { min_eigenvalue: min, threshold: SINGULAR_EIGENVALUE });
    }
    let mapped = values.map(|l| 1.0 / l);
    Ok(&vectors * Matrix::from_diagonal(&mapped) * vectors.transpose())
}

/// PSD test with a tolerance scaled by the matrix magnitude.
pub fn is_psd(m: &Matrix, tol: f64) -> bool {
    is_symmetric(m, 1e-10) && lambda_min(m) >= -tol * m.amax().max(1.0)
}

/// Random SPD matrix `Q diag(λ) Q^T` with eigenvalues drawn log-uniformly from
/// `[lo, hi]` and a Haar-ish rotation from the QR of a Gaussian matrix.
pub fn random_spd<R: Rng + ?Sized>(d: usize, lo: f64, hi: f64, rng: &mut R) -> Matrix {
    let q = random_orthogonal(d, rng);
    let (llo, lhi) = (lo.ln(), hi.ln());
    let eig = Vector::from_iterator(d, (0..d).map(|_| (llo + (lhi - llo) * rng.random::<f64>()).exp()));
    symmetrize(&(&q * Matrix::from_diagonal(&eig) * q.transpose()))
}

/// Random PSD matrix of the given rank (rank < d gives exact zero eigenvalues).
pub fn random_psd<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(d, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&(&g * g.transpose()))
}

pub fn random_symmetric<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&g)
}

pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let g = Matrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

pub fn random_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

/// Orthogonal projection onto a random `rank`-dimensional subspace.
pub fn random_projection<R: Rng + ?Sized>(d: usize, rank: usize, rng: &mut R) -> Matrix {
    let q = random_orthogonal(d, rng);
    let basis = q.columns(0, rank);
    symmetrize(&(basis * basis.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(5, 0.1, 10.0, &mut rng);
        let r = psd_sqrt(&a);
        assert_relative_eq!(&r * &r, a, epsilon = 1e-10);
    }

    #[test]
    fn inv_sqrt_whitens() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(4, 0.01, 100.0, &mut rng);
        let w = spd_inv_sqrt(&a).unwrap();
        assert_relative_eq!(&w * &a * &w, Matrix::identity(4, 4), epsilon = 1e-9);
    }

    #[test]
    fn singular_is_rejected() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(spd_inv_sqrt(&a), Err(Error::DegenerateCovariance { .. })));
    }

    #[test]
    fn eigenvalues_ascending() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![3.0, 1.0, 2.0]));
        let (vals, _) = sym_eigen(&a);
        assert_eq!(vals.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_projection(6, 2, &mut rng);
        assert_relative_eq!(&p * &p, p.clone(), epsilon = 1e-12);
        assert_relative_eq!(p.trace(), 2.0, epsilon = 1e-12);
    }
}
