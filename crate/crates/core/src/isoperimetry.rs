//! Estimates that bracket the isoperimetric coefficient
//! `ψ(p) = inf_S p(∂S) / min(p(S), p(S^c))`.
//!
//! `ψ(p)` itself is not computable. This module reports a half-space upper
//! estimate, a k-NN conductance proxy and the Gaussian-component lower bound,
//! each tagged with its kind, and never a single "ψ" number.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::measures::{sample_atomic, AtomicMeasure, Density, DensityParams};
use crate::quadrature::integrate;
use crate::rng::{rng_from_seed, stream_seed};

/// Samples used for kernel density estimates of marginals.
pub const KDE_SAMPLES: usize = 100_000;
/// Largest cloud accepted by [`conductance_proxy`] (dense `n × n` eigenproblem).
pub const CONDUCTANCE_CAP: usize = 3000;
/// Default quantile levels scanned by [`halfspace_isoperimetry`].
pub const DEFAULT_LEVELS: [f64; 19] =
    [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

/// `{x : u^T x ≤ s}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halfspace {
    pub direction: Vector,
    pub threshold: f64,
}

impl Halfspace {
    pub fn new(direction: Vector, threshold: f64) -> Result<Self> {
        let n = direction.norm();
        if (n - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!("half-space direction must be unit length, got norm {n}")));
        }
        Ok(Halfspace { direction, threshold })
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.direction.dot(x) <= self.threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    UpperViaHalfspace,
    LowerViaGaussianComponent,
    ConductanceProxy,
}

impl EstimateKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimateKind::UpperViaHalfspace => "upper-via-halfspace",
            EstimateKind::LowerViaGaussianComponent => "lower-via-gaussian-component",
            EstimateKind::ConductanceProxy => "conductance-proxy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Witness {
    Halfspace(Halfspace),
    /// Sweep cut: the first `size` atoms in Fiedler order.
    SweepCut { size: usize },
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsoperimetryEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub witness: Witness,
}

/// Writes `kind,value,u1,...,ud,threshold`; non-half-space witnesses leave those cells empty.
pub fn write_estimates_csv<W: Write>(estimates: &[IsoperimetryEstimate], d: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["kind".to_string(), "value".to_string()];
    header.extend((1..=d).map(|k| format!("u{k}")));
    header.push("threshold".into());
    w.write_record(&header)?;
    for e in estimates {
        let mut row = vec![e.kind.name().to_string(), format!("{:.16e}", e.value)];
        match &e.witness {
            Witness::Halfspace(h) => {
                check_dim(d, h.direction.len())?;
                row.extend(h.direction.iter().map(|v| format!("{v:.16e}")));
                row.push(format!("{:.16e}", h.threshold));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), d + 1)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// A one-dimensional marginal `u^T X` with density and distribution function.
#[derive(Debug, Clone)]
pub enum Marginal {
    Gaussian { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `sign · (location + Exp(rate))` along an axis.
    Exponential { location: f64, rate: f64, sign: f64 },
    /// Marginal of a uniform ball: density `∝ (1 - ((x-c)/r)²)^{(d-1)/2}`.
    BallSlice { center: f64, radius: f64, dim: usize },
    /// Gaussian-kernel estimate on sorted projected samples.
    Kde { samples: Vec<f64>, bandwidth: f64 },
}

fn axis_of(u: &Vector) -> Option<(usize, f64)> {
    let k = u.iamax();
    let rest = u.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, v)| v.abs()).fold(0.0, f64::max);
    if rest < 1e-12 && (u[k].abs() - 1.0).abs() < 1e-12 {
        Some((k, u[k].signum()))
    } else {
        None
    }
}

impl Marginal {
    /// Analytic where the family allows, otherwise a KDE on [`KDE_SAMPLES`] draws.
    pub fn of(density: &Density, u: &Vector, seed: u64) -> Result<Marginal> {
        check_dim(density.dim(), u.len())?;
        let analytic = match density.params() {
            DensityParams::Gaussian { mean, covariance } => {
                Some(Marginal::Gaussian { mean: u.dot(mean), sd: (u.transpose() * covariance * u)[(0, 0)].sqrt() })
            }
            DensityParams::UniformBall { center, radius } => {
                Some(Marginal::BallSlice { center: u.dot(center), radius: *radius, dim: density.dim() })
            }
            DensityParams::UniformBox { lower, upper } => axis_of(u).map(|(k, s)| {
                let (a, b) = (s * lower[k], s * upper[k]);
                Marginal::Uniform { lo: a.min(b), hi: a.max(b) }
            }),
            DensityParams::ProductExponential { location, rates } => {
                axis_of(u).map(|(k, s)| Marginal::Exponential { location: location[k], rate: rates[k], sign: s })
            }
        };
        if let Some(m) = analytic {
            return Ok(m);
        }
        let mut rng = rng_from_seed(seed);
        let mut samples: Vec<f64> = (0..KDE_SAMPLES).map(|_| u.dot(&density.sample(&mut rng))).collect();
        samples.sort_by(f64::total_cmp);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        Ok(Marginal::Kde { samples, bandwidth: 1.06 * sd * n.powf(-0.2) })
    }

    pub fn pdf(&self, s: f64) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => std_normal_pdf((s - mean) / sd) / sd,
            Marginal::Uniform { lo, hi } => {
                if s >= *lo && s <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Marginal::Exponential { location, rate, sign } => {
                let x = sign * s - location;
                if x >= 0.0 {
                    rate * (-rate * x).exp()
                } else {
                    0.0
                }
            }
            Marginal::BallSlice { center, radius, dim } => {
                let x = (s - center) / radius;
                if x.abs() > 1.0 {
                    return 0.0;
                }
                let d = *dim as f64;
                let log_norm = ln_gamma(d / 2.0 + 1.0) - 0.5 * PI.ln() - ln_gamma((d + 1.0) / 2.0);
                (log_norm + 0.5 * (d - 1.0) * (1.0 - x * x).ln()).exp() / radius
            }
            Marginal::Kde { samples, bandwidth } => {
                samples.iter().map(|x| std_normal_pdf((s - x) / bandwidth)).sum::<f64>() / (samples.len() as f64 * bandwidth)
            }
        }
    }

    pub fn cdf(&self, s: f64) -> f64 {
        match self {
            Marginal::Gaussian { mean, sd } => std_normal_cdf((s - mean) / sd),
            Marginal::Uniform { lo, hi } => ((s - lo) / (hi - lo)).clamp(0.0, 1.0),
            Marginal::Exponential { location, rate, sign } => {
                let x = sign * s - location;
                let upper_tail_of_x = if x >= 0.0 { (-rate * x).exp() } else { 1.0 };
                if *sign > 0.0 {
                    1.0 - upper_tail_of_x
                } else {
                    upper_tail_of_x
                }
            }
            Marginal::BallSlice { center, radius, .. } => {
                if s <= center - radius {
                    0.0
                } else if s >= center + radius {
                    1.0
                } else {
                    integrate(|x| self.pdf(x), center - radius, s, 1e-12).clamp(0.0, 1.0)
                }
            }
            Marginal::Kde { samples, bandwidth } => {
                samples.iter().map(|x| std_normal_cdf((s - x) / bandwidth)).sum::<f64>() / samples.len() as f64
            }
        }
    }

    fn bracket(&self) -> (f64, f64) {
        match self {
            Marginal::Gaussian { mean, sd } => (mean - 40.0 * sd, mean + 40.0 * sd),
            Marginal::Uniform { lo, hi } => (*lo, *hi),
            Marginal::Exponential { location, rate, sign } => {
                let (a, b) = (sign * location, sign * (location + 80.0 / rate));
                (a.min(b), a.max(b))
            }
            Marginal::BallSlice { center, radius, .. } => (center - radius, center + radius),
            Marginal::Kde { samples, bandwidth } => {
                (samples[0] - 10.0 * bandwidth, samples[samples.len() - 1] + 10.0 * bandwidth)
            }
        }
    }

    /// Smallest `s` with `F(s) ≥ level`, by bisection.
    pub fn quantile(&self, level: f64) -> f64 {
        let (mut lo, mut hi) = self.bracket();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-14 * hi.abs().max(1.0) {
                break;
            }
        }
        hi
    }
}

/// The measure to evaluate a shell on.
#[derive(Debug, Clone, Copy)]
pub enum ShellSource<'a> {
    Density(&'a Density),
    Atomic(&'a AtomicMeasure),
}

#[derive(Debug, Clone)]
pub enum SubsetDescriptor {
    Halfspace(Halfspace),
    /// Atom membership; only valid with an atomic source.
    Atoms(Vec<bool>),
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShellMeasure {
    /// `(p(S_ε) - p(S)) / ε`.
    pub shell: f64,
    /// Marginal density at the cut for half-spaces of analytic densities (the `ε → 0` limit).
    pub limit: Option<f64>,
    /// `S_ε` already covers the support while `S` does not.
    pub vacuous: bool,
}

impl ShellMeasure {
    /// The limit when known, else the finite-`ε` shell.
    pub fn value(&self) -> f64 {
        self.limit.unwrap_or(self.shell)
    }
}

/// Outer boundary measure of `S` at width `ε`.
pub fn boundary_measure_shell(source: ShellSource<'_>, subset: &SubsetDescriptor, eps: f64, seed: u64) -> Result<ShellMeasure> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("ε must be positive, got {eps}")));
    }
    const COVER: f64 = 1.0 - 1e-12;
    match (source, subset) {
        (_, SubsetDescriptor::Full) => Ok(ShellMeasure { shell: 0.0, limit: Some(0.0), vacuous: false }),
        (ShellSource::Density(density), SubsetDescriptor::Halfspace(h)) => {
            let m = Marginal::of(density, &h.direction, seed)?;
            let (inner, outer) = (m.cdf(h.threshold), m.cdf(h.threshold + eps));
            Ok(ShellMeasure { shell: (outer - inner) / eps, limit: Some(m.pdf(h.threshold)), vacuous: outer >= COVER && inner < COVER })
        }
        (ShellSource::Density(_), SubsetDescriptor::Atoms(_)) => {
            Err(Error::Precondition("atom sets need an atomic source".into()))
        }
        (ShellSource::Atomic(measure), SubsetDescriptor::Halfspace(h)) => {
            check_dim(measure.dim(), h.direction.len())?;
            let proj = measure.points().tr_mul(&h.direction);
            let w = measure.weights();
            let inner: f64 = (0..measure.len()).filter(|&i| proj[i] <= h.threshold).map(|i| w[i]).sum();
            let outer: f64 = (0..measure.len()).filter(|&i| proj[i] <= h.threshold + eps).map(|i| w[i]).sum();
            Ok(ShellMeasure { shell: (outer - inner) / eps, limit: None, vacuous: outer >= COVER && inner < COVER })
        }
        (ShellSource::Atomic(measure), SubsetDescriptor::Atoms(members)) => {
            check_dim(measure.len(), members.len())?;
            let x = measure.points();
            let w = measure.weights();
            let inside: Vec<usize> = (0..measure.len()).filter(|&i| members[i]).collect();
            let inner: f64 = inside.iter().map(|&i| w[i]).sum();
            // Collected in index order so the sum does not depend on thread scheduling.
            let shell: Vec<f64> = (0..measure.len())
                .into_par_iter()
                .map(|j| {
                    let near = !members[j] && inside.iter().any(|&i| (x.column(i) - x.column(j)).norm() <= eps);
                    if near { w[j] } else { 0.0 }
                })
                .collect();
            let shell_mass: f64 = shell.iter().sum();
            let outer = inner + shell_mass;
            Ok(ShellMeasure { shell: shell_mass / eps, limit: None, vacuous: outer >= COVER && inner < COVER })
        }
    }
}

/// Minimum of `F'(s) / min(F(s), 1 - F(s))` over covariance eigenvectors plus
/// `direction_count` random directions and the given quantile levels.
///
/// This is an upper bound on `ψ(p)`.
pub fn halfspace_isoperimetry(density: &Density, direction_count: usize, levels: &[f64], seed: u64) -> Result<IsoperimetryEstimate> {
    if direction_count == 0 {
        return Err(Error::Precondition("direction_count = 0 gives a vacuous scan".into()));
    }
    if levels.is_empty() || levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
        return Err(Error::Precondition("threshold levels must be nonempty and lie in (0, 1)".into()));
    }
    let d = density.dim();
    let (_, vectors) = linalg::sym_eigen(density.covariance());
    let mut directions: Vec<Vector> = (0..d).rev().map(|k| vectors.column(k).into_owned()).collect();
    let mut rng = rng_from_seed(seed);
    directions.extend((0..direction_count).map(|_| linalg::random_unit(d, &mut rng)));
    let per_direction: Vec<(f64, Halfspace)> = directions
        .into_par_iter()
        .enumerate()
        .map(|(idx, u)| {
            let m = Marginal::of(density, &u, stream_seed(seed, idx as u64))?;
            let mut best = (f64::INFINITY, Halfspace { direction: u.clone(), threshold: f64::NAN });
            for &level in levels {
                let s = m.quantile(level);
                let f = m.cdf(s);
                let denom = f.min(1.0 - f);
                if denom <= 0.0 {
                    continue;
                }
                let ratio = m.pdf(s) / denom;
                if ratio < best.0 {
                    best = (ratio, Halfspace { direction: u.clone(), threshold: s });
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (value, witness) = per_direction
        .into_iter()
        .fold((f64::INFINITY, None), |acc, (v, h)| if v < acc.0 { (v, Some(h)) } else { acc });
    let witness = witness.ok_or_else(|| Error::Precondition("no admissible threshold in the scan".into()))?;
    Ok(IsoperimetryEstimate { value, kind: EstimateKind::UpperViaHalfspace, witness: Witness::Halfspace(witness) })
}

fn pairwise_distances(x: &Matrix) -> Matrix {
    let n = x.ncols();
    let gram = x.tr_mul(x);
    Matrix::from_fn(n, n, |i, j| (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0).sqrt())
}

fn knn_graph(dist: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let n = dist.nrows();
    let k = k.min(n - 1);
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
        for &j in &order[..k] {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

fn is_connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Minimum normalized `ε`-shell over Fiedler sweep cuts of a k-NN graph.
///
/// Cuts are restricted to mass in `[1/4, 3/4]`. The shell width `ε` is the
/// median distance to the `k`-th neighbor. A disconnected graph is retried
/// once with `k = max(2k, ⌈n/2⌉)`.
pub fn conductance_proxy(measure: &AtomicMeasure, k: usize, sweep_count: usize) -> Result<IsoperimetryEstimate> {
    let n = measure.len();
    if n < 100 {
        return Err(Error::Precondition(format!("conductance proxy needs n >= 100, got {n}")));
    }
    if n > CONDUCTANCE_CAP {
        return Err(Error::Precondition(format!("conductance proxy caps n at {CONDUCTANCE_CAP}, got {n}")));
    }
    if k < 3 {
        return Err(Error::Precondition(format!("k must be at least 3, got {k}")));
    }
    if sweep_count == 0 {
        return Err(Error::Precondition("sweep_count must be positive".into()));
    }
    let dist = pairwise_distances(measure.points());
    let mut k_used = k.min(n - 1);
    let mut adj = knn_graph(&dist, k_used);
    if !is_connected(&adj) {
        k_used = (2 * k).max(n.div_ceil(2)).min(n - 1);
        log::warn!("k-NN graph is disconnected; retrying with k = {k_used}");
        adj = knn_graph(&dist, k_used);
        if !is_connected(&adj) {
            return Err(Error::DisconnectedGraph { k: k_used });
        }
    }
    // Normalized adjacency D^{-1/2} W D^{-1/2}; its second-largest eigenvector gives the Fiedler order.
    let deg: Vec<f64> = adj.iter().map(|l| l.len() as f64).collect();
    let mut norm_adj = Matrix::zeros(n, n);
    for (i, list) in adj.iter().enumerate() {
        for &j in list {
            norm_adj[(i, j)] = 1.0 / (deg[i] * deg[j]).sqrt();
        }
    }
    let (_, vectors) = linalg::sym_eigen(&norm_adj);
    let fiedler: Vec<f64> = (0..n).map(|i| vectors[(i, n - 2)] / deg[i].sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fiedler[a].total_cmp(&fiedler[b]).then(a.cmp(&b)));

    let mut kth: Vec<f64> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[(i, j)]).collect();
            row.sort_by(f64::total_cmp);
            row[k_used - 1]
        })
        .collect();
    kth.sort_by(f64::total_cmp);
    let eps = kth[n / 2];

    let w = measure.weights();
    let mut prefix_mass = Vec::with_capacity(n + 1);
    prefix_mass.push(0.0);
    for &i in &order {
        prefix_mass.push(prefix_mass.last().unwrap() + w[i]);
    }
    let candidates: Vec<usize> = (1..n).filter(|&s| (0.25..=0.75).contains(&prefix_mass[s])).collect();
    if candidates.is_empty() {
        return Err(Error::Precondition("no balanced sweep cut; weights too concentrated".into()));
    }
    let stride = (candidates.len() as f64 / sweep_count as f64).max(1.0);
    let picks: Vec<usize> = (0..sweep_count.min(candidates.len()))
        .map(|m| candidates[((m as f64 * stride) as usize).min(candidates.len() - 1)])
        .collect();
    let results: Vec<(f64, usize)> = picks
        .par_iter()
        .map(|&size| {
            let mut member = vec![false; n];
            for &i in &order[..size] {
                member[i] = true;
            }
            let shell: f64 = (0..n)
                .filter(|&j| !member[j] && order[..size].iter().any(|&i| dist[(i, j)] <= eps))
                .map(|j| w[j])
                .sum();
            let mass = prefix_mass[size];
            (shell / eps / mass.min(1.0 - mass), size)
        })
        .collect();
    let (value, size) = results.into_iter().fold((f64::INFINITY, 0), |acc, r| if r.0 < acc.0 { r } else { acc });
    Ok(IsoperimetryEstimate { value, kind: EstimateKind::ConductanceProxy, witness: Witness::SweepCut { size } })
}

/// Output of [`truncate_to_ball`].
#[derive(Debug, Clone)]
pub struct Truncation {
    pub measure: AtomicMeasure,
    pub radius: f64,
    /// Mass outside the ball, measured on the atomic proxy (exactly 0 for compact support).
    pub tail: f64,
    /// Factor `c` in `p(∂E) ≥ c ψ(ϱ) min(p(E), p(E^c))` for measure-½ sets: `1 - 2·tail`.
    pub chain_factor: f64,
    /// Whether `chain_factor ≥ ½`, the constant used by the reduction.
    pub half_factor_holds: bool,
}

/// Smallest radius (on `n` sampled atoms) whose ball around the mean leaves at most `mass_target` outside.
pub fn truncate_to_ball(density: &Density, mass_target: f64, n: usize, seed: u64) -> Result<Truncation> {
    if !(mass_target > 0.0 && mass_target < 1.0) {
        return Err(Error::Precondition(format!("mass target must lie in (0, 1), got {mass_target}")));
    }
    let atoms = sample_atomic(density, n, seed)?;
    let mu = density.mean();
    let compact_radius = match density.params() {
        DensityParams::UniformBall { radius, .. } => Some(*radius),
        DensityParams::UniformBox { lower, upper } => {
            Some(lower.iter().zip(upper.iter()).zip(mu.iter()).map(|((l, u), m)| (u - m).abs().max((m - l).abs()).powi(2)).sum::<f64>().sqrt())
        }
        _ => None,
    };
    let make = |measure: AtomicMeasure, radius: f64, tail: f64| {
        let chain_factor = 1.0 - 2.0 * tail;
        Truncation { measure, radius, tail, chain_factor, half_factor_holds: chain_factor >= 0.5 }
    };
    if let Some(r) = compact_radius {
        return Ok(make(atoms, r, 0.0));
    }
    let radii: Vec<f64> = (0..n).map(|i| (atoms.point(i) - mu).norm()).collect();
    let w = atoms.weights();
    let tail_at = |r: f64| -> f64 { (0..n).filter(|&i| radii[i] > r).map(|i| w[i]).sum() };
    let mut sorted = radii.clone();
    sorted.sort_by(f64::total_cmp);
    // Bisection over order statistics: smallest sampled radius whose tail is within target.
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if tail_at(sorted[mid]) <= mass_target {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let radius = sorted[lo];
    let tail = tail_at(radius);
    let keep: Vec<usize> = (0..n).filter(|&i| radii[i] <= radius).collect();
    let pts = Matrix::from_columns(&keep.iter().map(|&i| atoms.point(i).into_owned()).collect::<Vec<_>>());
    let kept_mass: f64 = keep.iter().map(|&i| w[i]).sum();
    let weights = Vector::from_iterator(keep.len(), keep.iter().map(|&i| w[i] / kept_mass));
    Ok(make(AtomicMeasure::new(pts, weights)?, radius, tail))
}

/// `(1/4) ‖B^{-1}‖₂^{-1/2} · stability_prob`.
pub fn gaussian_component_lower_bound(b: &Matrix, stability_prob: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&stability_prob) {
        return Err(Error::Precondition(format!("stability probability must lie in [0, 1], got {stability_prob}")));
    }
    if !b.is_square() || !linalg::is_symmetric(b, 1e-12) {
        return Err(Error::Precondition("B must be symmetric".into()));
    }
    let lmin = linalg::lambda_min(b);
    if !(lmin > 0.0) {
        return Err(Error::Precondition(format!("B must be positive definite, λ_min = {lmin}")));
    }
    // ‖B^{-1}‖₂ = 1/λ_min(B).
    Ok(0.25 * lmin.sqrt() * stability_prob)
}

/// The same bound for `B = t A^{-1}`: `(1/4) t^{1/2} ‖A‖₂^{-1/2} · stability_prob`.
pub fn gaussian_component_lower_bound_at_time(t: f64, a: &Matrix, stability_prob: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Precondition(format!("t must be positive, got {t}")));
    }
    if !(0.0..=1.0).contains(&stability_prob) {
        return Err(Error::Precondition(format!("stability probability must lie in [0, 1], got {stability_prob}")));
    }
    Ok(0.25 * t.sqrt() / linalg::spectral_norm(a).sqrt() * stability_prob)
}

/// Fraction of paths whose `p_t(E)` stays in `[1/4, 3/4]`.
pub fn stability_fraction(final_masses: &[f64]) -> f64 {
    if final_masses.is_empty() {
        return 0.0;
    }
    final_masses.iter().filter(|g| (0.25..=0.75).contains(*g)).count() as f64 / final_masses.len() as f64
}

/// Uniform random direction, exposed for scans outside this module.
pub fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    linalg::random_unit(d, rng)
}
