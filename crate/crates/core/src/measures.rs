//! Log-concave densities, atomic measures and exponential tilts.
//!
//! Analytic [`Density`] values seed atoms and serve as oracles; everything the
//! simulator touches is an [`AtomicMeasure`], a weighted point cloud on which
//! means, covariances and tilts are finite sums.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVectorView;
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng::rng_from_seed;

/// Tolerance on `Σ w = 1` for atomic measures, widened to `4 n ε` for large `n`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;
/// Eigenvalue floor for analytic covariances.
pub const SPD_TOL: f64 = 1e-10;
/// Log-space slack allowed by [`check_logconcavity`].
pub const LOGCONCAVITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    UniformBox,
    UniformBall,
    ProductExponential,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gaussian, Family::UniformBox, Family::UniformBall, Family::ProductExponential];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::UniformBox => "uniform-box",
            Family::UniformBall => "uniform-ball",
            Family::ProductExponential => "product-exponential",
        }
    }

    /// The isotropic member of the family in dimension `d`: mean 0, covariance I.
    pub fn isotropic(self, d: usize) -> Density {
        let params = match self {
            Family::Gaussian => DensityParams::Gaussian { mean: Vector::zeros(d), covariance: Matrix::identity(d, d) },
            Family::UniformBox => {
                let h = 3f64.sqrt();
                DensityParams::UniformBox { lower: Vector::from_element(d, -h), upper: Vector::from_element(d, h) }
            }
            Family::UniformBall => {
                DensityParams::UniformBall { center: Vector::zeros(d), radius: ((d + 2) as f64).sqrt() }
            }
            Family::ProductExponential => {
                DensityParams::ProductExponential { location: Vector::from_element(d, -1.0), rates: Vector::from_element(d, 1.0) }
            }
        };
        Density::new(params).expect("isotropic parameters are valid")
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Construction(format!("unknown family `{s}`")))
    }
}

/// Family parameters accepted by [`Density::new`].
#[derive(Debug, Clone, PartialEq)]
pub enum DensityParams {
    Gaussian { mean: Vector, covariance: Matrix },
    /// Uniform on the box `[lower, upper]`.
    UniformBox { lower: Vector, upper: Vector },
    UniformBall { center: Vector, radius: f64 },
    /// Independent coordinates `location_i + Exp(rates_i)`.
    ProductExponential { location: Vector, rates: Vector },
}

/// Where a density is positive.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    Everywhere,
    Box { lower: Vector, upper: Vector },
    Ball { center: Vector, radius: f64 },
    /// `{x : x_i >= location_i for all i}`.
    Orthant { location: Vector },
}

impl Support {
    pub fn contains(&self, x: &Vector) -> bool {
        match self {
            Support::Everywhere => true,
            Support::Box { lower, upper } => x.iter().zip(lower.iter().zip(upper.iter())).all(|(v, (l, u))| v >= l && v <= u),
            Support::Ball { center, radius } => (x - center).norm() <= *radius,
            Support::Orthant { location } => x.iter().zip(location.iter()).all(|(v, l)| v >= l),
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Support::Box { .. } | Support::Ball { .. })
    }
}

#[derive(Debug, Clone)]
struct GaussianCache {
    chol_lower: Matrix,
    precision: Matrix,
    log_norm: f64,
}

/// An analytic log-concave density with closed-form mean and covariance.
#[derive(Debug, Clone)]
pub struct Density {
    params: DensityParams,
    mean: Vector,
    covariance: Matrix,
    gaussian: Option<GaussianCache>,
}

impl Density {
    /// Builds a density, validating the family parameters.
    pub fn new(params: DensityParams) -> Result<Self> {
        match &params {
            DensityParams::Gaussian { mean, covariance } => {
                check_dim(mean.len(), covariance.nrows())?;
                check_dim(mean.len(), covariance.ncols())?;
                if mean.is_empty() {
                    return Err(Error::Construction("dimension must be at least 1".into()));
                }
                if !linalg::is_symmetric(covariance, 1e-12) {
                    return Err(Error::Construction("covariance is not symmetric".into()));
                }
                let cov = linalg::symmetrize(covariance);
                let min = linalg::lambda_min(&cov);
                if min <= SPD_TOL {
                    return Err(Error::Construction(format!("covariance is not positive definite (λ_min = {min:.3e})")));
                }
                let chol = cov.clone().cholesky().ok_or_else(|| Error::Construction("Cholesky factorization failed".into()))?;
                let chol_lower = chol.l();
                let log_det: f64 = 2.0 * chol_lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                let d = mean.len() as f64;
                let precision = linalg::symmetrize(&chol.inverse());
                let gaussian = Some(GaussianCache { chol_lower, precision, log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det) });
                Ok(Density { mean: mean.clone(), covariance: cov, gaussian, params })
            }
            DensityParams::UniformBox { lower, upper } => {
                check_dim(lower.len(), upper.len())?;
                if lower.is_empty() {
                    return Err(Error::Construction("dimension must be at least 1".into()));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
                    return Err(Error::Construction("box needs finite lower < upper in every coordinate".into()));
                }
                let mean = (lower + upper) * 0.5;
                let var = (upper - lower).map(|w| w * w / 12.0);
                Ok(Density { mean, covariance: Matrix::from_diagonal(&var), gaussian: None, params })
            }
            DensityParams::UniformBall { center, radius } => {
                if center.is_empty() {
                    return Err(Error::Construction("dimension must be at least 1".into()));
                }
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(Error::Construction(format!("ball radius must be positive, got {radius}")));
                }
                let d = center.len();
                let var = radius * radius / (d as f64 + 2.0);
                Ok(Density { mean: center.clone(), covariance: Matrix::identity(d, d) * var, gaussian: None, params })
            }
            DensityParams::ProductExponential { location, rates } => {
                check_dim(location.len(), rates.len())?;
                if location.is_empty() {
                    return Err(Error::Construction("dimension must be at least 1".into()));
                }
                if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
                    return Err(Error::Construction("exponential rates must be positive".into()));
                }
                let mean = location + rates.map(|r| 1.0 / r);
                let var = rates.map(|r| 1.0 / (r * r));
                Ok(Density { mean, covariance: Matrix::from_diagonal(&var), gaussian: None, params })
            }
        }
    }

    pub fn gaussian(mean: Vector, covariance: Matrix) -> Result<Self> {
        Self::new(DensityParams::Gaussian { mean, covariance })
    }

    pub fn standard_gaussian(d: usize) -> Self {
        Self::gaussian(Vector::zeros(d), Matrix::identity(d, d)).expect("identity covariance is SPD")
    }

    pub fn uniform_box(lower: Vector, upper: Vector) -> Result<Self> {
        Self::new(DensityParams::UniformBox { lower, upper })
    }

    pub fn uniform_ball(center: Vector, radius: f64) -> Result<Self> {
        Self::new(DensityParams::UniformBall { center, radius })
    }

    pub fn product_exponential(location: Vector, rates: Vector) -> Result<Self> {
        Self::new(DensityParams::ProductExponential { location, rates })
    }

    pub fn family(&self) -> Family {
        match self.params {
            DensityParams::Gaussian { .. } => Family::Gaussian,
            DensityParams::UniformBox { .. } => Family::UniformBox,
            DensityParams::UniformBall { .. } => Family::UniformBall,
            DensityParams::ProductExponential { .. } => Family::ProductExponential,
        }
    }

    pub fn params(&self) -> &DensityParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }

    pub fn support(&self) -> Support {
        match &self.params {
            DensityParams::Gaussian { .. } => Support::Everywhere,
            DensityParams::UniformBox { lower, upper } => Support::Box { lower: lower.clone(), upper: upper.clone() },
            DensityParams::UniformBall { center, radius } => Support::Ball { center: center.clone(), radius: *radius },
            DensityParams::ProductExponential { location, .. } => Support::Orthant { location: location.clone() },
        }
    }

    /// Natural log of the density at `x`; `-inf` off the support.
    pub fn log_density(&self, x: &Vector) -> f64 {
        if x.len() != self.dim() {
            return f64::NEG_INFINITY;
        }
        match &self.params {
            DensityParams::Gaussian { mean, .. } => {
                let g = self.gaussian.as_ref().expect("gaussian cache");
                let r = x - mean;
                g.log_norm - 0.5 * r.dot(&(&g.precision * &r))
            }
            DensityParams::UniformBox { lower, upper } => {
                if self.support().contains(x) {
                    -(upper - lower).iter().map(|w| w.ln()).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            }
            DensityParams::UniformBall { center, radius } => {
                if (x - center).norm() <= *radius {
                    let d = self.dim() as f64;
                    -(0.5 * d * PI.ln() + d * radius.ln() - ln_gamma(0.5 * d + 1.0))
                } else {
                    f64::NEG_INFINITY
                }
            }
            DensityParams::ProductExponential { location, rates } => {
                if self.support().contains(x) {
                    (0..self.dim()).map(|i| rates[i].ln() - rates[i] * (x[i] - location[i])).sum()
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    /// One draw from the density.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let d = self.dim();
        match &self.params {
            DensityParams::Gaussian { mean, .. } => {
                let g = self.gaussian.as_ref().expect("gaussian cache");
                let z = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                mean + &g.chol_lower * z
            }
            DensityParams::UniformBox { lower, upper } => {
                Vector::from_fn(d, |i, _| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>())
            }
            DensityParams::UniformBall { center, radius } => {
                let u = linalg::random_unit(d, rng);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center + u * r
            }
            DensityParams::ProductExponential { location, rates } => Vector::from_fn(d, |i, _| {
                let e = Exp::new(rates[i]).expect("positive rate");
                location[i] + rng.sample::<f64, _>(e)
            }),
        }
    }

    /// `n` i.i.d. atoms with equal weights, deterministic in `seed`.
    pub fn sample_atomic(&self, n: usize, seed: u64) -> Result<AtomicMeasure> {
        sample_atomic(self, n, seed)
    }
}

/// Anything with a log-density that can also produce points of its support.
///
/// Lets [`check_logconcavity`] run on test fixtures that are not a [`Density`].
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &Vector) -> f64;
    fn sample_point(&self, rng: &mut dyn rand::RngCore) -> Vector;
}

impl LogDensity for Density {
    fn dim(&self) -> usize {
        Density::dim(self)
    }

    fn log_density(&self, x: &Vector) -> f64 {
        Density::log_density(self, x)
    }

    fn sample_point(&self, rng: &mut dyn rand::RngCore) -> Vector {
        self.sample(rng)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogConcavityReport {
    pub pairs: usize,
    pub evaluations: usize,
    /// Largest `λ log p(x) + (1-λ) log p(y) - log p(λx + (1-λ)y)` seen.
    pub worst_violation: f64,
    pub worst_lambda: f64,
    pub passed: bool,
}

/// Midpoint-style test of log-concavity along random chords of the support.
pub fn check_logconcavity(density: &impl LogDensity, n_pairs: usize, lambda_grid: &[f64], seed: u64) -> Result<LogConcavityReport> {
    if n_pairs == 0 {
        return Err(Error::Precondition("need at least one pair".into()));
    }
    if lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::Precondition("λ grid must lie in [0, 1]".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_lambda = f64::NAN;
    let mut evaluations = 0;
    for _ in 0..n_pairs {
        let x = density.sample_point(&mut rng);
        let y = density.sample_point(&mut rng);
        let (lx, ly) = (density.log_density(&x), density.log_density(&y));
        for &lambda in lambda_grid {
            let z = &x * lambda + &y * (1.0 - lambda);
            let lz = density.log_density(&z);
            let rhs = mix_log(lambda, lx, ly);
            let violation = if lz == f64::NEG_INFINITY && rhs > f64::NEG_INFINITY { f64::INFINITY } else { rhs - lz };
            evaluations += 1;
            if violation > worst {
                worst = violation;
                worst_lambda = lambda;
            }
        }
    }
    Ok(LogConcavityReport { pairs: n_pairs, evaluations, worst_violation: worst, worst_lambda, passed: worst <= LOGCONCAVITY_TOL })
}

// λ a + (1-λ) b with the convention 0 * (-inf) = 0.
fn mix_log(lambda: f64, a: f64, b: f64) -> f64 {
    let term = |w: f64, v: f64| if w == 0.0 { 0.0 } else { w * v };
    term(lambda, a) + term(1.0 - lambda, b)
}

/// A weighted point cloud: atom `i` is column `i` of a `d × n` matrix.
///
/// Points sit behind an `Arc` so tilted copies of a measure share them.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    points: Arc<Matrix>,
    weights: Vector,
}

impl AtomicMeasure {
    /// Validates weights (nonnegative, summing to 1 within 1e-12).
    pub fn new(points: Matrix, weights: Vector) -> Result<Self> {
        Self::with_shared_points(Arc::new(points), weights)
    }

    pub fn with_shared_points(points: Arc<Matrix>, weights: Vector) -> Result<Self> {
        check_dim(points.ncols(), weights.len())?;
        if points.ncols() == 0 || points.nrows() == 0 {
            return Err(Error::Precondition("atomic measure needs at least one atom in dimension >= 1".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Precondition("weights must be finite and nonnegative".into()));
        }
        let sum = weights.sum();
        let tol = WEIGHT_SUM_TOL.max(4.0 * weights.len() as f64 * f64::EPSILON);
        if (sum - 1.0).abs() > tol {
            return Err(Error::Precondition(format!("weights sum to {sum}, not 1")));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Precondition("atom coordinates must be finite".into()));
        }
        Ok(AtomicMeasure { points, weights })
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Matrix) -> Result<Self> {
        let n = points.ncols();
        if n == 0 {
            return Err(Error::Precondition("atomic measure needs at least one atom".into()));
        }
        Self::new(points, Vector::from_element(n, 1.0 / n as f64))
    }

    /// Builds from one row per atom (`n × d`).
    pub fn from_rows(rows: &Matrix, weights: Vector) -> Result<Self> {
        Self::new(rows.transpose(), weights)
    }

    /// Builds from a list of atoms with equal weights.
    pub fn from_points(points: &[Vector]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Precondition("atomic measure needs at least one atom".into()));
        }
        let d = points[0].len();
        for p in points {
            check_dim(d, p.len())?;
        }
        Self::uniform(Matrix::from_columns(points))
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    /// The `d × n` point matrix.
    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn shared_points(&self) -> Arc<Matrix> {
        Arc::clone(&self.points)
    }

    pub fn point(&self, i: usize) -> DVectorView<'_, f64> {
        self.points.column(i)
    }

    pub fn weights(&self) -> &Vector {
        &self.weights
    }

    /// Replaces the weights, keeping the shared points.
    pub fn reweighted(&self, weights: Vector) -> Result<Self> {
        Self::with_shared_points(self.shared_points(), weights)
    }

    pub fn mean(&self) -> Vector {
        &*self.points * &self.weights
    }

    /// `Σ w_i (x_i - μ)(x_i - μ)^T`.
    pub fn covariance(&self) -> Matrix {
        let mean = self.mean();
        weighted_scatter(&self.points, &self.weights, &mean)
    }

    /// `Σ_{i ∈ members} w_i`.
    pub fn mass_of(&self, members: &[bool]) -> f64 {
        members.iter().zip(self.weights.iter()).filter(|(m, _)| **m).map(|(_, w)| w).sum()
    }

    /// Writes `w,x1,...,xd` with one atom per row, 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["w".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![format!("{:.16e}", self.weights[i])];
            row.extend(self.points.column(i).iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format written by [`AtomicMeasure::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.is_empty() || &header[0] != "w" {
            return Err(Error::Format("first column must be `w`".into()));
        }
        let d = header.len() - 1;
        for k in 1..=d {
            if header[k] != format!("x{k}") {
                return Err(Error::Format(format!("column {} must be `x{k}`, found `{}`", k + 1, &header[k])));
            }
        }
        let mut weights = Vec::new();
        let mut coords = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            if record.len() != d + 1 {
                return Err(Error::Format(format!("row {} has {} fields, expected {}", line + 2, record.len(), d + 1)));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("row {}: {e}", line + 2)));
            weights.push(parse(&record[0])?);
            for k in 1..=d {
                coords.push(parse(&record[k])?);
            }
        }
        let n = weights.len();
        Self::new(Matrix::from_vec(d, n, coords), Vector::from_vec(weights))
    }
}

pub(crate) fn weighted_scatter(points: &Matrix, weights: &Vector, center: &Vector) -> Matrix {
    let d = points.nrows();
    let mut centered = points.clone();
    for mut col in centered.column_iter_mut() {
        col -= center;
    }
    let mut scaled = centered.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= weights[j];
    }
    let cov = &scaled * centered.transpose();
    debug_assert_eq!(cov.nrows(), d);
    linalg::symmetrize(&cov)
}

/// `n` i.i.d. atoms with equal weights, deterministic in `seed`.
pub fn sample_atomic(density: &Density, n: usize, seed: u64) -> Result<AtomicMeasure> {
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let d = density.dim();
    let mut points = Matrix::zeros(d, n);
    for i in 0..n {
        points.set_column(i, &density.sample(&mut rng));
    }
    AtomicMeasure::uniform(points)
}

/// Tilt parameters `(c, B)` of the reweighting `exp(c^T x - x^T B x / 2)`.
///
/// `t` is set only for tilts produced by the localization process, where
/// `t = 0` forces the identity tilt.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltParams {
    pub c: Vector,
    pub b: Matrix,
    pub t: Option<f64>,
}

impl TiltParams {
    pub fn new(c: Vector, b: Matrix) -> Result<Self> {
        check_dim(c.len(), b.nrows())?;
        check_dim(c.len(), b.ncols())?;
        if !linalg::is_symmetric(&b, 1e-10) {
            return Err(Error::Precondition("B must be symmetric".into()));
        }
        if !linalg::is_psd(&b, 1e-10) {
            return Err(Error::Precondition("B must be positive semi-definite".into()));
        }
        Ok(TiltParams { c, b, t: None })
    }

    /// A localization tilt at time `t`.
    pub fn at_time(c: Vector, b: Matrix, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Precondition(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 && (c.amax() != 0.0 || b.amax() != 0.0) {
            return Err(Error::Precondition("t = 0 requires c = 0 and B = 0".into()));
        }
        let mut p = Self::new(c, b)?;
        p.t = Some(t);
        Ok(p)
    }

    pub fn identity(d: usize) -> Self {
        TiltParams { c: Vector::zeros(d), b: Matrix::zeros(d, d), t: Some(0.0) }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Composition of two tilts: parameters add.
    pub fn compose(&self, other: &TiltParams) -> Result<TiltParams> {
        check_dim(self.dim(), other.dim())?;
        let t = match (self.t, other.t) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        Ok(TiltParams { c: &self.c + &other.c, b: &self.b + &other.b, t })
    }
}

/// Normalizes log-weights with log-sum-exp.
pub fn normalize_log_weights(log_weights: &Vector) -> Result<Vector> {
    if log_weights.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::DegenerateTilt);
    }
    let max = log_weights.max();
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateTilt);
    }
    let shifted = log_weights.map(|v| (v - max).exp());
    let total = shifted.sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateTilt);
    }
    Ok(shifted / total)
}

/// Reweights atoms by `exp(c^T x - x^T B x / 2)` and renormalizes in log space.
pub fn tilt_atomic(measure: &AtomicMeasure, tilt: &TiltParams) -> Result<AtomicMeasure> {
    check_dim(measure.dim(), tilt.dim())?;
    let x = measure.points();
    let linear = x.transpose() * &tilt.c;
    let bx = &tilt.b * x;
    let logw = Vector::from_fn(measure.len(), |i, _| {
        let quad = x.column(i).dot(&bx.column(i));
        measure.weights[i].ln() + linear[i] - 0.5 * quad
    });
    measure.reweighted(normalize_log_weights(&logw)?)
}

/// Exact tilt of a Gaussian: precision `A^{-1} + B`, mean `(A^{-1} + B)^{-1}(A^{-1} m + c)`.
pub fn closed_form_gaussian_tilt(gaussian: &Density, tilt: &TiltParams) -> Result<Density> {
    let DensityParams::Gaussian { mean, .. } = gaussian.params() else {
        return Err(Error::Precondition(format!("closed-form tilt needs a Gaussian base, got {}", gaussian.family())));
    };
    check_dim(gaussian.dim(), tilt.dim())?;
    let base_precision = &gaussian.gaussian.as_ref().expect("gaussian cache").precision;
    let precision = linalg::symmetrize(&(base_precision + &tilt.b));
    let covariance = linalg::spd_inverse(&precision)?;
    let new_mean = &covariance * (base_precision * mean + &tilt.c);
    Density::gaussian(new_mean, covariance)
}

/// Mean, covariance and the whitened cloud `A^{-1/2}(x_i - μ)`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub mean: Vector,
    pub covariance: Matrix,
    pub inv_sqrt: Matrix,
    pub whitened: AtomicMeasure,
}

/// Moments of an atomic measure and its whitened copy (mean 0, covariance I).
pub fn moments_and_whiten(measure: &AtomicMeasure) -> Result<Whitening> {
    let d = measure.dim();
    let mean = measure.mean();
    let covariance = measure.covariance();
    if measure.len() < d + 1 {
        return Err(Error::DegenerateCovariance { min_eigenvalue: 0.0, threshold: linalg::SINGULAR_EIGENVALUE });
    }
    let inv_sqrt = linalg::spd_inv_sqrt(&covariance)?;
    let mut centered = measure.points().clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let whitened = measure.reweighted(measure.weights().clone())?;
    let whitened = AtomicMeasure::with_shared_points(Arc::new(&inv_sqrt * centered), whitened.weights)?;
    Ok(Whitening { mean, covariance, inv_sqrt, whitened })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;

    fn vecf(v: &[f64]) -> Vector {
        Vector::from_row_slice(v)
    }

    #[test]
    fn standard_gaussian_moments() {
        let g = Density::gaussian(Vector::zeros(3), Matrix::identity(3, 3)).unwrap();
        assert_eq!(g.mean(), &Vector::zeros(3));
        assert_eq!(g.covariance(), &Matrix::identity(3, 3));
        assert_eq!(g.family(), Family::Gaussian);
    }

    #[test]
    fn box_covariance_matches_quadrature() {
        // Variance of U[-1,1]: ∫ x² / 2 dx over [-1, 1].
        let var = integrate(|x| x * x * 0.5, -1.0, 1.0, 1e-14);
        let b = Density::uniform_box(vecf(&[-1.0, -1.0]), vecf(&[1.0, 1.0])).unwrap();
        assert_relative_eq!(b.covariance(), &(Matrix::identity(2, 2) * var), epsilon = 1e-14);
        assert_relative_eq!(var, 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn degenerate_gaussian_rejected() {
        let cov = Matrix::from_diagonal(&vecf(&[1.0, 0.0]));
        assert!(matches!(Density::gaussian(Vector::zeros(2), cov), Err(Error::Construction(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = Density::gaussian(Vector::zeros(3), Matrix::identity(2, 2));
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn isotropic_members_are_isotropic() {
        for f in Family::ALL {
            let dens = f.isotropic(3);
            assert_relative_eq!(dens.mean(), &Vector::zeros(3), epsilon = 1e-12);
            assert_relative_eq!(dens.covariance(), &Matrix::identity(3, 3), epsilon = 1e-12);
        }
    }

    #[test]
    fn log_densities_normalize_in_one_dimension() {
        for f in Family::ALL {
            let dens = f.isotropic(1);
            let mass = crate::quadrature::integrate_with_breaks(
                |x| dens.log_density(&vecf(&[x])).exp(),
                -30.0,
                30.0,
                &[-3f64.sqrt(), 3f64.sqrt(), -1.0],
                1e-12,
            );
            assert_relative_eq!(mass, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gaussian_is_logconcave() {
        let g = Density::standard_gaussian(3);
        let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let rep = check_logconcavity(&g, 1000, &grid, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.worst_violation <= 1e-9);
    }

    #[test]
    fn box_is_logconcave() {
        let b = Family::UniformBox.isotropic(2);
        let rep = check_logconcavity(&b, 500, &[0.25, 0.5, 0.75], 2).unwrap();
        assert!(rep.passed);
        assert!(rep.worst_violation.abs() <= 1e-12);
    }

    struct Bimodal;

    impl LogDensity for Bimodal {
        fn dim(&self) -> usize {
            1
        }
        fn log_density(&self, x: &Vector) -> f64 {
            let phi = |m: f64| (-(x[0] - m).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
            (0.5 * phi(-4.0) + 0.5 * phi(4.0)).ln()
        }
        fn sample_point(&self, rng: &mut dyn rand::RngCore) -> Vector {
            let m = if rng.random::<bool>() { 4.0 } else { -4.0 };
            vecf(&[m + rng.sample::<f64, _>(StandardNormal)])
        }
    }

    #[test]
    fn bimodal_mixture_fails() {
        // At the modes and their midpoint: ½ log p(-4) + ½ log p(4) - log p(0) > 0.
        let b = Bimodal;
        let expected = b.log_density(&vecf(&[4.0])) - b.log_density(&vecf(&[0.0]));
        assert!(expected > 5.0);
        let rep = check_logconcavity(&b, 200, &[0.5], 3).unwrap();
        assert!(!rep.passed);
        assert!(rep.worst_violation > 1.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = Density::standard_gaussian(2);
        let a = sample_atomic(&g, 100, 7).unwrap();
        let b = sample_atomic(&g, 100, 7).unwrap();
        assert_eq!(a.points(), b.points());
        let one = sample_atomic(&g, 1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.weights()[0], 1.0);
    }

    #[test]
    fn gaussian_sample_covariance_close() {
        let g = Density::standard_gaussian(2);
        let m = sample_atomic(&g, 10_000, 7).unwrap();
        let err = linalg::spectral_norm(&(m.covariance() - Matrix::identity(2, 2)));
        assert!(err < 0.05, "spectral error {err}");
    }

    #[test]
    fn identity_tilt_is_noop() {
        let m = sample_atomic(&Density::standard_gaussian(2), 50, 1).unwrap();
        let t = tilt_atomic(&m, &TiltParams::identity(2)).unwrap();
        assert_relative_eq!(t.weights(), m.weights(), epsilon = 1e-15);
    }

    #[test]
    fn two_atom_tilt() {
        let m = AtomicMeasure::from_points(&[vecf(&[-1.0]), vecf(&[1.0])]).unwrap();
        let c = 3f64.ln();
        let t = tilt_atomic(&m, &TiltParams::new(vecf(&[c]), Matrix::zeros(1, 1)).unwrap()).unwrap();
        let e = (2.0 * c).exp();
        assert_relative_eq!(t.weights()[0], 1.0 / (1.0 + e), epsilon = 1e-15);
        assert_relative_eq!(t.weights()[1], e / (1.0 + e), epsilon = 1e-15);
        assert_relative_eq!(t.weights()[0], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn overflowing_tilt_is_degenerate() {
        let m = AtomicMeasure::from_points(&[vecf(&[-1.0]), vecf(&[1.0])]).unwrap();
        let t = TiltParams::new(vecf(&[f64::MAX]), Matrix::zeros(1, 1)).unwrap();
        let r = tilt_atomic(&m, &t.compose(&t).unwrap());
        assert!(matches!(r, Err(Error::DegenerateTilt)));
    }

    #[test]
    fn localization_tilt_requires_identity_at_zero() {
        assert!(TiltParams::at_time(vecf(&[1.0]), Matrix::zeros(1, 1), 0.0).is_err());
        assert!(TiltParams::at_time(vecf(&[0.0]), Matrix::zeros(1, 1), 0.0).is_ok());
    }

    #[test]
    fn gaussian_conjugacy() {
        let g = Density::standard_gaussian(2);
        let t = TiltParams::new(Vector::zeros(2), Matrix::identity(2, 2)).unwrap();
        let out = closed_form_gaussian_tilt(&g, &t).unwrap();
        assert_relative_eq!(out.covariance(), &(Matrix::identity(2, 2) * 0.5), epsilon = 1e-14);

        let g = Density::gaussian(Vector::zeros(2), Matrix::from_diagonal(&vecf(&[4.0, 1.0]))).unwrap();
        let b = linalg::spd_inverse(g.covariance()).unwrap();
        let out = closed_form_gaussian_tilt(&g, &TiltParams::new(Vector::zeros(2), b).unwrap()).unwrap();
        assert_relative_eq!(out.covariance(), &Matrix::from_diagonal(&vecf(&[2.0, 0.5])), epsilon = 1e-14);

        let same = closed_form_gaussian_tilt(&g, &TiltParams::identity(2)).unwrap();
        assert_relative_eq!(same.covariance(), g.covariance(), epsilon = 1e-14);
    }

    #[test]
    fn gaussian_conjugacy_one_dimensional_quadrature() {
        // N(0,1) times exp(c x - x²/2): compare mean and variance by quadrature.
        let c = 0.7;
        let w = |x: f64| (-x * x / 2.0 + c * x - x * x / 2.0).exp();
        let z = integrate(w, -40.0, 40.0, 1e-13);
        let m = integrate(|x| x * w(x), -40.0, 40.0, 1e-13) / z;
        let v = integrate(|x| (x - m).powi(2) * w(x), -40.0, 40.0, 1e-13) / z;
        let g = Density::standard_gaussian(1);
        let out = closed_form_gaussian_tilt(&g, &TiltParams::new(vecf(&[c]), Matrix::identity(1, 1)).unwrap()).unwrap();
        assert_relative_eq!(out.mean()[0], m, epsilon = 1e-10);
        assert_relative_eq!(out.covariance()[(0, 0)], v, epsilon = 1e-10);
    }

    #[test]
    fn cross_shape_moments() {
        let pts = [vecf(&[1.0, 0.0]), vecf(&[-1.0, 0.0]), vecf(&[0.0, 1.0]), vecf(&[0.0, -1.0])];
        let m = AtomicMeasure::from_points(&pts).unwrap();
        let w = moments_and_whiten(&m).unwrap();
        assert_relative_eq!(w.mean, Vector::zeros(2), epsilon = 1e-15);
        assert_relative_eq!(w.covariance, Matrix::identity(2, 2) * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn collinear_atoms_are_degenerate() {
        let pts = [vecf(&[0.0, 0.0]), vecf(&[1.0, 1.0]), vecf(&[2.0, 2.0])];
        let m = AtomicMeasure::from_points(&pts).unwrap();
        assert!(matches!(moments_and_whiten(&m), Err(Error::DegenerateCovariance { .. })));
    }

    #[test]
    fn whitening_postcondition() {
        let m = sample_atomic(&Family::ProductExponential.isotropic(4), 500, 11).unwrap();
        let w = moments_and_whiten(&m).unwrap();
        assert!(w.whitened.mean().norm() <= 1e-10);
        assert!(linalg::spectral_norm(&(w.whitened.covariance() - Matrix::identity(4, 4))) <= 1e-10);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = sample_atomic(&Density::standard_gaussian(3), 20, 5).unwrap();
        let m = tilt_atomic(&m, &TiltParams::new(vecf(&[0.3, -0.2, 0.1]), Matrix::identity(3, 3)).unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("w,x1,x2,x3\n"));
        let back = AtomicMeasure::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let r = AtomicMeasure::read_csv("weight,x1\n1,0\n".as_bytes());
        assert!(matches!(r, Err(Error::Format(_))));
    }
}
