//! The 3-tensor of a measure and the inequalities built on it.
//!
//! For a measure with mean `μ` and independent `X, Y` drawn from it,
//!
//! ```text
//! T(A, B, C) = E[(X-μ)^T A (Y-μ) · (X-μ)^T B (Y-μ) · (X-μ)^T C (Y-μ)].
//! ```
//!
//! On `n` atoms this is a double sum. Writing `C = Σ_k λ_k u_k u_k^T` and
//! `Δ_k = Σ_i w_i (u_k^T y_i) y_i y_i^T` gives the factored form
//! `T = Σ_k λ_k Σ_{ce} (Δ_k A Δ_k)_{ce} B_{ce}`, which costs `O(n d³)` instead
//! of `O(n² d)`. Both routes are kept; they must agree.
//!
//! The trace inequality and the swap inequality hold for every atomic measure
//! and are hard gates. The remaining bounds rely on log-concavity of the
//! continuous measure, so on atoms they are statistical checks with slack.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::measures::{moments_and_whiten, AtomicMeasure, Density, DensityParams};
use crate::quadrature::integrate_with_breaks;

/// Largest atom count accepted by the pairwise (naive) 3-tensor.
pub const PAIR_SUM_CAP: usize = 4000;
/// Symmetry tolerance for tensor arguments.
pub const ARG_SYMMETRY_TOL: f64 = 1e-12;
/// Relative tolerance of the swap inequality.
pub const SWAP_TOL: f64 = 1e-9;
/// Tolerance of quadrature-mode moment checks.
pub const MOMENT_TOL: f64 = 1e-6;

fn check_arg(m: &Matrix, d: usize, name: &str) -> Result<()> {
    check_dim(d, m.nrows())?;
    check_dim(d, m.ncols())?;
    if !linalg::is_symmetric(m, ARG_SYMMETRY_TOL) {
        return Err(Error::Precondition(format!("{name} is not symmetric")));
    }
    Ok(())
}

fn check_psd(m: &Matrix, name: &str) -> Result<()> {
    if !linalg::is_psd(m, 1e-10) {
        return Err(Error::Precondition(format!("{name} is not positive semi-definite")));
    }
    Ok(())
}

/// Atoms minus their weighted mean, as a `d × n` matrix.
pub fn centered_points(measure: &AtomicMeasure) -> Matrix {
    let mean = measure.mean();
    let mut y = measure.points().clone();
    for mut col in y.column_iter_mut() {
        col -= &mean;
    }
    y
}

/// `Σ_i w_i (u^T y_i) y_i y_i^T` for the columns `y_i` of `y`.
pub fn directional_delta(y: &Matrix, w: &Vector, u: &Vector) -> Matrix {
    let proj = y.tr_mul(u);
    let mut scaled = y.clone();
    for (i, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[i] * proj[i];
    }
    linalg::symmetrize(&(scaled * y.transpose()))
}

/// `Δ_k` along each coordinate axis.
pub fn axis_deltas(y: &Matrix, w: &Vector) -> Vec<Matrix> {
    let d = y.nrows();
    (0..d)
        .map(|k| {
            let mut scaled = y.clone();
            for (i, mut col) in scaled.column_iter_mut().enumerate() {
                col *= w[i] * y[(k, i)];
            }
            linalg::symmetrize(&(scaled * y.transpose()))
        })
        .collect()
}

/// `Σ_{ce} (Δ X Δ)_{ce} Y_{ce}`, which is `tr(Δ X Δ Y)` for symmetric `Y`.
pub fn trace_sandwich(delta: &Matrix, x: &Matrix, y: &Matrix) -> f64 {
    (delta * x * delta).component_mul(y).sum()
}

fn factored(y: &Matrix, w: &Vector, a: &Matrix, b: &Matrix, c: &Matrix) -> f64 {
    let (lambdas, vectors) = linalg::sym_eigen(c);
    (0..c.nrows())
        .filter(|&k| lambdas[k] != 0.0)
        .map(|k| {
            let u = vectors.column(k).into_owned();
            lambdas[k] * trace_sandwich(&directional_delta(y, w, &u), a, b)
        })
        .sum()
}

/// The naive double sum `Σ_{i,j} w_i w_j (y_i^T A y_j)(y_i^T B y_j)(y_i^T C y_j)`.
pub fn pairwise_sum(y: &Matrix, w: &Vector, a: &Matrix, b: &Matrix, c: &Matrix) -> f64 {
    let (ay, by, cy) = (a * y, b * y, c * y);
    let n = y.ncols();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.column(i);
            let (ra, rb, rc) = (ay.tr_mul(&yi), by.tr_mul(&yi), cy.tr_mul(&yi));
            let inner: f64 = (0..n).map(|j| w[j] * ra[j] * rb[j] * rc[j]).sum();
            w[i] * inner
        })
        .collect();
    rows.iter().sum()
}

/// `T(A, B, C)` by the factored route (exact, no atom cap).
pub fn three_tensor(measure: &AtomicMeasure, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<f64> {
    let d = measure.dim();
    check_arg(a, d, "first argument")?;
    check_arg(b, d, "second argument")?;
    check_arg(c, d, "third argument")?;
    Ok(factored(&centered_points(measure), measure.weights(), a, b, c))
}

/// `T(A, B, C)` by the pairwise double sum; at most [`PAIR_SUM_CAP`] atoms.
pub fn three_tensor_pairwise(measure: &AtomicMeasure, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<f64> {
    let d = measure.dim();
    check_dim(d, a.nrows())?;
    check_dim(d, b.nrows())?;
    check_dim(d, c.nrows())?;
    if measure.len() > PAIR_SUM_CAP {
        return Err(Error::PairSumCap { n: measure.len(), cap: PAIR_SUM_CAP });
    }
    Ok(pairwise_sum(&centered_points(measure), measure.weights(), a, b, c))
}

/// A directional third-moment matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaMatrix {
    pub delta: Matrix,
    pub direction: Vector,
    /// `‖mean‖ + ‖cov - I‖₂` of the measure it was computed on.
    pub isotropy_error: f64,
}

/// `Δ = Σ_i w_i (x_i^T v) x_i x_i^T`, taken about the origin.
///
/// A direction that is not unit length is normalized with a warning.
pub fn delta_matrix(measure: &AtomicMeasure, v: &Vector) -> Result<DeltaMatrix> {
    check_dim(measure.dim(), v.len())?;
    let norm = v.norm();
    if !(norm > 0.0) {
        return Err(Error::Precondition("direction must be nonzero".into()));
    }
    let direction = if (norm - 1.0).abs() > 1e-12 {
        log::warn!("direction has norm {norm}; normalizing");
        v / norm
    } else {
        v.clone()
    };
    let delta = directional_delta(measure.points(), measure.weights(), &direction);
    let d = measure.dim();
    let isotropy_error = measure.mean().norm() + linalg::spectral_norm(&(measure.covariance() - Matrix::identity(d, d)));
    Ok(DeltaMatrix { delta, direction, isotropy_error })
}

/// Both sides of a two-sided comparison, with the verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

/// `tr(G^δ F G^{1-δ} F) ≤ tr(G F²)` via the eigendecomposition of `G`.
///
/// With `G = V Λ V^T` and `F' = V^T F V` the sides are `Σ λ_i^δ λ_j^{1-δ} F'_{ij}²`
/// and `Σ λ_i F'_{ij}²`.
pub fn check_trace_inequality(g: &Matrix, f: &Matrix, delta: f64) -> Result<InequalityCheck> {
    let d = g.nrows();
    check_dim(d, g.ncols())?;
    check_dim(d, f.nrows())?;
    check_dim(d, f.ncols())?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Precondition(format!("δ must lie in [0, 1], got {delta}")));
    }
    check_psd(g, "G")?;
    if !linalg::is_symmetric(f, ARG_SYMMETRY_TOL) {
        return Err(Error::Precondition("F is not symmetric".into()));
    }
    let (lambda, v) = linalg::sym_eigen(g);
    let lambda = lambda.map(|l| l.max(0.0));
    let fp = v.transpose() * f * &v;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let f2 = fp[(i, j)] * fp[(i, j)];
            lhs += lambda[i].powf(delta) * lambda[j].powf(1.0 - delta) * f2;
            rhs += lambda[i] * f2;
        }
    }
    let passed = lhs <= rhs + 1e-10 * (1.0 + rhs.abs());
    Ok(InequalityCheck { lhs, rhs, passed })
}

/// Where centered absolute moments come from.
#[derive(Debug, Clone, Copy)]
pub enum MomentSource<'a> {
    /// A one-dimensional analytic density, integrated by quadrature.
    Density(&'a Density),
    /// Equally weighted samples.
    Samples(&'a [f64]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCheck {
    /// `(E|X-μ|^a)^{1/a}`.
    pub l_a: f64,
    /// `(E|X-μ|^b)^{1/b}`.
    pub l_b: f64,
    /// `2 (a/b) L_b`.
    pub rhs: f64,
    /// Quadrature checks are hard; sample checks are report-only.
    pub hard: bool,
    pub passed: bool,
}

fn density_range(density: &Density) -> Result<(f64, f64)> {
    if density.dim() != 1 {
        return Err(Error::Precondition(format!("moment check needs a 1-d density, got d = {}", density.dim())));
    }
    Ok(match density.params() {
        DensityParams::Gaussian { mean, covariance } => {
            let s = covariance[(0, 0)].sqrt();
            (mean[0] - 40.0 * s, mean[0] + 40.0 * s)
        }
        DensityParams::UniformBox { lower, upper } => (lower[0], upper[0]),
        DensityParams::UniformBall { center, radius } => (center[0] - radius, center[0] + radius),
        DensityParams::ProductExponential { location, rates } => (location[0], location[0] + 80.0 / rates[0]),
    })
}

/// Centered absolute moment norm `(E|X-μ|^c)^{1/c}`.
pub fn centered_moment_norm(source: MomentSource<'_>, c: f64) -> Result<f64> {
    match source {
        MomentSource::Density(density) => {
            let (lo, hi) = density_range(density)?;
            let mu = density.mean()[0];
            let pdf = |x: f64| density.log_density(&Vector::from_element(1, x)).exp();
            let m = integrate_with_breaks(|x| (x - mu).abs().powf(c) * pdf(x), lo, hi, &[mu], 1e-13);
            Ok(m.powf(1.0 / c))
        }
        MomentSource::Samples(xs) => {
            if xs.is_empty() {
                return Err(Error::Precondition("no samples".into()));
            }
            let n = xs.len() as f64;
            let mu = xs.iter().sum::<f64>() / n;
            let m = xs.iter().map(|x| (x - mu).abs().powf(c)).sum::<f64>() / n;
            Ok(m.powf(1.0 / c))
        }
    }
}

/// `L_a ≤ 2 (a/b) L_b` for `a ≥ b > 0`.
pub fn check_moment_inequality(source: MomentSource<'_>, a: f64, b: f64) -> Result<MomentCheck> {
    if !(b > 0.0 && a >= b) {
        return Err(Error::Precondition(format!("need a >= b > 0, got a = {a}, b = {b}")));
    }
    let l_a = centered_moment_norm(source, a)?;
    let l_b = centered_moment_norm(source, b)?;
    let rhs = 2.0 * (a / b) * l_b;
    let hard = matches!(source, MomentSource::Density(_));
    let tol = if hard { MOMENT_TOL } else { 0.0 };
    Ok(MomentCheck { l_a, l_b, rhs, hard, passed: l_a <= rhs + tol })
}

/// A statistical bound evaluated on one cloud.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `lhs / rhs`; 0 when both vanish.
    pub ratio: f64,
    pub flagged: bool,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, slack: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        BoundCheck { lhs, rhs, slack, ratio, flagged: lhs > slack * rhs }
    }
}

/// `‖Σ w_i B^{1/2} y_i (y_i^T C y_i)‖ ≤ 16 ‖A^{1/2} B A^{1/2}‖^{1/2} tr(A^{1/2} C A^{1/2})`.
pub fn check_tensor_vector_bound(measure: &AtomicMeasure, b: &Matrix, c: &Matrix, slack: f64) -> Result<BoundCheck> {
    let d = measure.dim();
    check_arg(b, d, "B")?;
    check_arg(c, d, "C")?;
    check_psd(b, "B")?;
    check_psd(c, "C")?;
    let y = centered_points(measure);
    let w = measure.weights();
    let cy = c * &y;
    let coeff = Vector::from_fn(y.ncols(), |i, _| w[i] * y.column(i).dot(&cy.column(i)));
    let lhs = (linalg::psd_sqrt(b) * (&y * coeff)).norm();
    let a_half = linalg::psd_sqrt(&measure.covariance());
    let rhs = 16.0 * linalg::spectral_norm(&(&a_half * b * &a_half)).sqrt() * (&a_half * c * &a_half).trace();
    Ok(BoundCheck::new(lhs, rhs, slack))
}

/// `T(B^½ A^δ B^½, B^½ A^{1-δ} B^½, C) ≤ T(B^½ A B^½, B, C)`, a hard gate.
pub fn check_tensor_swap(measure: &AtomicMeasure, a: &Matrix, b: &Matrix, c: &Matrix, delta: f64) -> Result<InequalityCheck> {
    let d = measure.dim();
    check_arg(a, d, "A")?;
    check_arg(b, d, "B")?;
    check_arg(c, d, "C")?;
    check_psd(a, "A")?;
    check_psd(b, "B")?;
    check_psd(c, "C")?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Precondition(format!("δ must lie in [0, 1], got {delta}")));
    }
    let bh = linalg::psd_sqrt(b);
    let sandwich = |m: &Matrix| linalg::symmetrize(&(&bh * m * &bh));
    let lhs = three_tensor(measure, &sandwich(&linalg::psd_pow(a, delta)), &sandwich(&linalg::psd_pow(a, 1.0 - delta)), c)?;
    let rhs = three_tensor(measure, &sandwich(a), &linalg::symmetrize(b), c)?;
    let scale = lhs.abs().max(rhs.abs());
    Ok(InequalityCheck { lhs, rhs, passed: lhs <= rhs + SWAP_TOL * scale })
}

fn tensor_power_identity(measure: &AtomicMeasure, q: u32) -> Result<(f64, Matrix)> {
    let d = measure.dim();
    let a = measure.covariance();
    let lhs = three_tensor(measure, &linalg::psd_pow(&a, q as f64 - 2.0), &Matrix::identity(d, d), &Matrix::identity(d, d))?;
    Ok((lhs, a))
}

/// `T(A^{q-2}, I, I) ≤ 128 α² ln(d) d^{2β - 1/q} tr(A^q)^{1+1/q}` with `A` the covariance.
pub fn check_tensor_isoperimetric(measure: &AtomicMeasure, q: u32, alpha: f64, beta: f64, slack: f64) -> Result<BoundCheck> {
    if !(beta > 0.0 && beta <= 0.5) || alpha < 1.0 {
        return Err(Error::Precondition(format!("need α >= 1 and β in (0, 1/2], got α = {alpha}, β = {beta}")));
    }
    if (q as f64) < 1.0 / (2.0 * beta) {
        return Err(Error::Precondition(format!("q = {q} is below 1/(2β) = {}", 1.0 / (2.0 * beta))));
    }
    let d = measure.dim() as f64;
    let (lhs, a) = tensor_power_identity(measure, q)?;
    let qf = q as f64;
    let rhs = 128.0 * alpha * alpha * d.ln() * d.powf(2.0 * beta - 1.0 / qf) * linalg::trace_pow(&a, qf).powf(1.0 + 1.0 / qf);
    Ok(BoundCheck::new(lhs, rhs, slack))
}

/// `T(A^{q-2}, I, I) ≤ (4/τ) tr(A^q)` for measures more log-concave than `N(0, I/τ)`.
pub fn check_tensor_strong_logconcave(measure: &AtomicMeasure, tau: f64, q: u32, slack: f64) -> Result<BoundCheck> {
    if q < 3 {
        return Err(Error::Precondition(format!("q must be at least 3, got {q}")));
    }
    if !(tau > 0.0) {
        return Err(Error::Precondition(format!("τ must be positive, got {tau}")));
    }
    let (lhs, a) = tensor_power_identity(measure, q)?;
    let rhs = 4.0 / tau * linalg::trace_pow(&a, q as f64);
    Ok(BoundCheck::new(lhs, rhs, slack))
}

/// Second matrix in `tr(Δ M Δ)`.
#[derive(Debug, Clone)]
pub enum DeltaBoundArg {
    /// An orthogonal projection; its rank is read off the trace.
    Projection(Matrix),
    Psd(Matrix),
}

/// `tr(Δ P Δ) ≤ 16 α² min(2r, d)^{2β}` or `tr(Δ M Δ) ≤ 128 α² ln(d) (tr M^{1/(2β)})^{2β}`,
/// with `ψ_k = 1/(α k^β)`, on the whitened copy of `measure`.
pub fn check_trace_delta_bounds(
    measure: &AtomicMeasure,
    v: &Vector,
    arg: &DeltaBoundArg,
    alpha: f64,
    beta: f64,
    slack: f64,
) -> Result<BoundCheck> {
    let d = measure.dim();
    let whitened = moments_and_whiten(measure)?.whitened;
    let delta = delta_matrix(&whitened, v)?.delta;
    match arg {
        DeltaBoundArg::Projection(p) => {
            check_arg(p, d, "P")?;
            if (p * p - p).amax() > 1e-10 {
                return Err(Error::Precondition("P is not a projection (P² ≠ P)".into()));
            }
            let r = p.trace().round() as usize;
            let k = (2 * r).min(d) as f64;
            let lhs = (&delta * p * &delta).trace();
            Ok(BoundCheck::new(lhs, 16.0 * alpha * alpha * k.powf(2.0 * beta), slack))
        }
        DeltaBoundArg::Psd(m) => {
            check_arg(m, d, "M")?;
            check_psd(m, "M")?;
            let lhs = (&delta * m * &delta).trace();
            let rhs = 128.0 * alpha * alpha * (d as f64).ln() * linalg::trace_pow(m, 1.0 / (2.0 * beta)).powf(2.0 * beta);
            Ok(BoundCheck::new(lhs, rhs, slack))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{sample_atomic, Family};
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    fn eye(d: usize) -> Matrix {
        Matrix::identity(d, d)
    }

    fn symmetric_cloud(d: usize, n: usize, seed: u64) -> AtomicMeasure {
        let m = sample_atomic(&Density::standard_gaussian(d), n, seed).unwrap();
        let mut pts: Vec<Vector> = (0..n).map(|i| m.point(i).into_owned()).collect();
        pts.extend((0..n).map(|i| -m.point(i).into_owned()));
        AtomicMeasure::from_points(&pts).unwrap()
    }

    #[test]
    fn two_symmetric_atoms_vanish() {
        let m = AtomicMeasure::from_points(&[Vector::from_element(1, -1.0), Vector::from_element(1, 1.0)]).unwrap();
        assert_eq!(three_tensor(&m, &eye(1), &eye(1), &eye(1)).unwrap(), 0.0);
        assert_eq!(three_tensor_pairwise(&m, &eye(1), &eye(1), &eye(1)).unwrap(), 0.0);
    }

    #[test]
    fn factored_matches_pairwise() {
        let mut rng = rng_from_seed(8);
        let m = sample_atomic(&Family::ProductExponential.isotropic(4), 50, 3).unwrap();
        let a = linalg::random_symmetric(4, &mut rng);
        let b = linalg::random_symmetric(4, &mut rng);
        let c = linalg::random_symmetric(4, &mut rng);
        let f = three_tensor(&m, &a, &b, &c).unwrap();
        let p = three_tensor_pairwise(&m, &a, &b, &c).unwrap();
        assert_relative_eq!(f, p, max_relative = 1e-8);
    }

    #[test]
    fn identity_arguments_are_nonnegative() {
        let m = sample_atomic(&Family::UniformBall.isotropic(3), 80, 5).unwrap();
        let w = moments_and_whiten(&m).unwrap().whitened;
        let t = three_tensor_pairwise(&w, &eye(3), &eye(3), &eye(3)).unwrap();
        assert!(t >= 0.0);
    }

    #[test]
    fn pairwise_cap() {
        let m = sample_atomic(&Density::standard_gaussian(1), PAIR_SUM_CAP + 1, 1).unwrap();
        assert!(matches!(three_tensor_pairwise(&m, &eye(1), &eye(1), &eye(1)), Err(Error::PairSumCap { .. })));
        assert!(three_tensor(&m, &eye(1), &eye(1), &eye(1)).is_ok());
    }

    #[test]
    fn delta_of_symmetric_cloud_is_zero() {
        let m = symmetric_cloud(3, 20, 4);
        let dm = delta_matrix(&m, &Vector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
        assert!(dm.delta.amax() < 1e-14);
    }

    #[test]
    fn delta_of_skewed_two_atoms() {
        let m = AtomicMeasure::new(Matrix::from_row_slice(1, 2, &[-1.0, 2.0]), Vector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0])).unwrap();
        let dm = delta_matrix(&m, &Vector::from_element(1, 1.0)).unwrap();
        assert_relative_eq!(dm.delta[(0, 0)], 2.0, epsilon = 1e-15);
        let again = delta_matrix(&m, &Vector::from_element(1, 1.0)).unwrap();
        assert_eq!(dm, again);
    }

    #[test]
    fn delta_direction_is_normalized() {
        let m = AtomicMeasure::new(Matrix::from_row_slice(1, 2, &[-1.0, 2.0]), Vector::from_vec(vec![2.0 / 3.0, 1.0 / 3.0])).unwrap();
        let dm = delta_matrix(&m, &Vector::from_element(1, 3.0)).unwrap();
        assert_relative_eq!(dm.direction[0], 1.0);
    }

    #[test]
    fn trace_inequality_endpoints_are_equalities() {
        let mut rng = rng_from_seed(1);
        let g = linalg::random_psd(5, 3, &mut rng);
        let f = linalg::random_symmetric(5, &mut rng);
        for delta in [0.0, 1.0] {
            let r = check_trace_inequality(&g, &f, delta).unwrap();
            assert_relative_eq!(r.lhs, r.rhs, max_relative = 1e-12);
            assert!(r.passed);
        }
        let r = check_trace_inequality(&eye(5), &f, 0.3).unwrap();
        assert_relative_eq!(r.lhs, (&f * &f).trace(), max_relative = 1e-12);
        assert_relative_eq!(r.rhs, (&f * &f).trace(), max_relative = 1e-12);
    }

    #[test]
    fn trace_inequality_matches_matrix_powers() {
        let mut rng = rng_from_seed(2);
        let g = linalg::random_spd(4, 0.1, 5.0, &mut rng);
        let f = linalg::random_symmetric(4, &mut rng);
        let r = check_trace_inequality(&g, &f, 0.37).unwrap();
        let direct = (linalg::psd_pow(&g, 0.37) * &f * linalg::psd_pow(&g, 0.63) * &f).trace();
        assert_relative_eq!(r.lhs, direct, max_relative = 1e-10);
        assert_relative_eq!(r.rhs, (&g * &f * &f).trace(), max_relative = 1e-10);
    }

    #[test]
    fn trace_inequality_rejects_indefinite_g() {
        let g = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(check_trace_inequality(&g, &eye(2), 0.5), Err(Error::Precondition(_))));
    }

    #[test]
    fn gaussian_fourth_moment() {
        let g = Density::standard_gaussian(1);
        let r = check_moment_inequality(MomentSource::Density(&g), 4.0, 2.0).unwrap();
        assert_relative_eq!(r.l_a, 3f64.powf(0.25), epsilon = 1e-9);
        assert_relative_eq!(r.rhs, 4.0, epsilon = 1e-9);
        assert!(r.passed && r.hard);
    }

    #[test]
    fn equal_orders_always_pass() {
        let g = Family::UniformBox.isotropic(1);
        let r = check_moment_inequality(MomentSource::Density(&g), 2.0, 2.0).unwrap();
        assert_relative_eq!(r.rhs, 2.0 * r.l_b);
        assert!(r.passed);
    }

    #[test]
    fn exponential_sixth_moment() {
        let e = Density::product_exponential(Vector::zeros(1), Vector::from_element(1, 1.0)).unwrap();
        let r = check_moment_inequality(MomentSource::Density(&e), 6.0, 2.0).unwrap();
        // Central moment of Exp(1): E(X-1)^6 = 265.
        assert_relative_eq!(r.l_a, 265f64.powf(1.0 / 6.0), max_relative = 1e-9);
        assert!(r.passed);
    }

    #[test]
    fn tensor_vector_bound_on_symmetric_cloud() {
        let m = symmetric_cloud(2, 100, 2);
        let r = check_tensor_vector_bound(&m, &eye(2), &eye(2), 1.1).unwrap();
        assert!(r.lhs < 1e-12);
        assert!(!r.flagged);
    }

    #[test]
    fn swap_endpoints() {
        let mut rng = rng_from_seed(6);
        let m = sample_atomic(&Family::ProductExponential.isotropic(3), 40, 9).unwrap();
        let a = linalg::random_psd(3, 3, &mut rng);
        let b = linalg::random_psd(3, 2, &mut rng);
        let c = linalg::random_psd(3, 3, &mut rng);
        let r = check_tensor_swap(&m, &a, &b, &c, 0.0).unwrap();
        assert_relative_eq!(r.lhs, r.rhs, max_relative = 1e-10);
        let r = check_tensor_swap(&m, &eye(3), &b, &c, 0.4).unwrap();
        assert_relative_eq!(r.lhs, r.rhs, max_relative = 1e-10);
        let r = check_tensor_swap(&m, &a, &b, &c, 0.4).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn strong_logconcave_needs_q3() {
        let m = symmetric_cloud(2, 30, 1);
        assert!(matches!(check_tensor_strong_logconcave(&m, 1.0, 2, 1.1), Err(Error::Precondition(_))));
        let r = check_tensor_strong_logconcave(&m, 1.0, 3, 1.1).unwrap();
        assert!(r.lhs.abs() < 1e-12);
    }

    #[test]
    fn isoperimetric_on_symmetric_cloud() {
        let m = symmetric_cloud(3, 30, 2);
        let r = check_tensor_isoperimetric(&m, 3, 4.0, 0.5, 1.1).unwrap();
        assert!(r.lhs.abs() < 1e-12);
        assert!(check_tensor_isoperimetric(&m, 1, 4.0, 0.25, 1.1).is_err());
    }

    #[test]
    fn delta_bounds_reject_non_projection() {
        let m = sample_atomic(&Density::standard_gaussian(2), 50, 2).unwrap();
        let v = Vector::from_vec(vec![1.0, 0.0]);
        let bad = DeltaBoundArg::Projection(eye(2) * 0.5);
        assert!(check_trace_delta_bounds(&m, &v, &bad, 4.0, 0.5, 1.1).is_err());
        let r = check_trace_delta_bounds(&m, &v, &DeltaBoundArg::Projection(eye(2)), 4.0, 0.5, 1.1).unwrap();
        assert_relative_eq!(r.rhs, 16.0 * 16.0 * 2.0);
    }
}
