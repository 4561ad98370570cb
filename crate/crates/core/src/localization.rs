//! The stochastic localization process on atomic measures.
//!
//! With `A` the covariance of the base measure, the process is
//!
//! ```text
//! dc_t = A^{-1/2} dW_t + A^{-1} μ_t dt,    B_t = t A^{-1},    c_0 = 0,
//! p_t(x) ∝ exp(c_t^T x - x^T B_t x / 2) p(x).
//! ```
//!
//! On atoms every step recomputes the weights from the base in log space, so
//! the state is always exactly a tilt of the base. The potential
//! `Γ_t = tr(Q_t^q)` with `Q_t = A^{-1/2} A_t A^{-1/2}` satisfies
//! `dΓ_t = v_t^T dW_t + δ_t dt`; [`gamma_drift_terms`] evaluates both terms
//! exactly on the current atoms.

use std::io::Write;
use std::sync::Arc;

use rand_distr::StandardNormal;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::measures::{normalize_log_weights, weighted_scatter, AtomicMeasure, TiltParams};
use crate::rng::{rng_from_seed, stream_rng, stream_seed};
use crate::tensor;

/// Default finite-sample slack for statistical checks.
pub const DEFAULT_SLACK: f64 = 1.1;
/// Width of the statistical acceptance band, in standard errors.
pub const Z_BAND: f64 = 4.0;
/// Absolute tolerance for exact identities checked along a path.
pub const IDENTITY_TOL: f64 = 1e-9;

/// Quantities fixed by the base measure and shared by every state of a path.
#[derive(Debug)]
struct Frame {
    base: AtomicMeasure,
    cov: Matrix,
    inv_sqrt: Matrix,
    inv: Matrix,
    log_w0: Vector,
    // x_i^T A^{-1} x_i, so the quadratic part of the tilt is t/2 times this.
    quad: Vector,
}

/// One point on a localization trajectory.
#[derive(Debug, Clone)]
pub struct LocalizationState {
    frame: Arc<Frame>,
    q: u32,
    t: f64,
    c: Vector,
    current: AtomicMeasure,
    mean: Vector,
    cov_t: Matrix,
    q_mat: Matrix,
    q_eigs: Vector,
    gamma: f64,
}

/// Starts the process at `t = 0` with the identity tilt.
pub fn init_state(base: &AtomicMeasure, q: u32) -> Result<LocalizationState> {
    if q < 2 {
        return Err(Error::Precondition(format!("q must be at least 2, got {q}")));
    }
    let d = base.dim();
    if base.len() < d + 1 {
        return Err(Error::DegenerateCovariance { min_eigenvalue: 0.0, threshold: linalg::SINGULAR_EIGENVALUE });
    }
    let cov = base.covariance();
    let inv_sqrt = linalg::spd_inv_sqrt(&cov)?;
    let inv = linalg::spd_inverse(&cov)?;
    let x = base.points();
    let ax = &inv * x;
    let quad = Vector::from_fn(base.len(), |i, _| x.column(i).dot(&ax.column(i)));
    let log_w0 = base.weights().map(f64::ln);
    let frame = Arc::new(Frame { base: base.clone(), cov, inv_sqrt, inv, log_w0, quad });
    LocalizationState::assemble(frame, q, 0.0, Vector::zeros(d), base.clone())
}

impl LocalizationState {
    fn assemble(frame: Arc<Frame>, q: u32, t: f64, c: Vector, current: AtomicMeasure) -> Result<Self> {
        let mean = current.mean();
        let cov_t = weighted_scatter(current.points(), current.weights(), &mean);
        let q_mat = linalg::symmetrize(&(&frame.inv_sqrt * &cov_t * &frame.inv_sqrt));
        let q_eigs = linalg::eigenvalues(&q_mat).map(|l| l.max(0.0));
        let gamma = q_eigs.iter().map(|l| l.powi(q as i32)).sum();
        Ok(LocalizationState { frame, q, t, c, current, mean, cov_t, q_mat, q_eigs, gamma })
    }

    fn weights_at(frame: &Frame, c: &Vector, t: f64) -> Result<Vector> {
        let linear = frame.base.points().tr_mul(c);
        let logw = Vector::from_fn(frame.base.len(), |i, _| frame.log_w0[i] + linear[i] - 0.5 * t * frame.quad[i]);
        normalize_log_weights(&logw)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn c(&self) -> &Vector {
        &self.c
    }

    /// `(c_t, B_t = t A^{-1}, t)`.
    pub fn tilt(&self) -> TiltParams {
        TiltParams { c: self.c.clone(), b: &self.frame.inv * self.t, t: Some(self.t) }
    }

    pub fn base(&self) -> &AtomicMeasure {
        &self.frame.base
    }

    pub fn current(&self) -> &AtomicMeasure {
        &self.current
    }

    /// `μ_t`.
    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// `A_t`.
    pub fn covariance(&self) -> &Matrix {
        &self.cov_t
    }

    /// The base covariance `A`.
    pub fn base_covariance(&self) -> &Matrix {
        &self.frame.cov
    }

    pub fn base_inv_sqrt(&self) -> &Matrix {
        &self.frame.inv_sqrt
    }

    pub fn base_inverse(&self) -> &Matrix {
        &self.frame.inv
    }

    /// `Q_t`.
    pub fn q_matrix(&self) -> &Matrix {
        &self.q_mat
    }

    /// Eigenvalues of `Q_t`, ascending and clamped at zero.
    pub fn q_eigenvalues(&self) -> &Vector {
        &self.q_eigs
    }

    /// `‖Q_t‖₂`.
    pub fn spec_q(&self) -> f64 {
        self.q_eigs.max()
    }

    /// `Γ_t`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Atoms of `p_t` in whitened coordinates `A^{-1/2}(x_i - μ_t)`, as a `d × n` matrix.
    pub fn whitened_points(&self) -> Matrix {
        let mut centered = self.frame.base.points().clone();
        for mut col in centered.column_iter_mut() {
            col -= &self.mean;
        }
        &self.frame.inv_sqrt * centered
    }

    /// One Euler–Maruyama step driven by the Brownian increment `dw`.
    pub fn euler_step(&self, dw: &Vector, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
        }
        check_dim(self.dim(), dw.len())?;
        let c = &self.c + &self.frame.inv_sqrt * dw + &self.frame.inv * &self.mean * dt;
        let t = self.t + dt;
        let weights = Self::weights_at(&self.frame, &c, t)?;
        let current = self.frame.base.reweighted(weights)?;
        Self::assemble(Arc::clone(&self.frame), self.q, t, c, current)
    }

    /// Exact-identity checks that must hold at every state.
    pub fn check_invariants(&self) -> Result<()> {
        let w = self.current.weights();
        if (w.sum() - 1.0).abs() > 1e-12 || w.iter().any(|v| *v < 0.0) {
            return Err(Error::InvariantViolated(format!("weights are not a probability vector at t = {}", self.t)));
        }
        let lmin = self.q_eigs.min();
        let floor = self.dim() as f64 * lmin.powi(self.q as i32);
        if self.gamma < floor * (1.0 - 1e-12) || !(self.gamma > 0.0) {
            return Err(Error::InvariantViolated(format!("Γ = {} below d λ_min^q = {floor}", self.gamma)));
        }
        if self.gamma.powf(1.0 / self.q as f64) < self.spec_q() * (1.0 - 1e-12) {
            return Err(Error::InvariantViolated(format!("Γ^(1/q) below ‖Q‖ at t = {}", self.t)));
        }
        Ok(())
    }
}

/// Brownian increments of a fixed step size, reproducible from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    pub increments: Vec<Vector>,
    pub seed: u64,
}

impl NoisePath {
    pub fn generate(d: usize, steps: usize, dt: f64, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let scale = dt.sqrt();
        let increments = (0..steps)
            .map(|_| Vector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        NoisePath { dt, increments, seed }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// Sums consecutive blocks of `factor` increments: the same Brownian path
    /// sampled on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::Precondition(format!("cannot coarsen {} steps by {factor}", self.steps())));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|block| block.iter().skip(1).fold(block[0].clone(), |acc, v| acc + v))
            .collect();
        Ok(NoisePath { dt: self.dt * factor as f64, increments, seed: self.seed })
    }

    /// z-score of `Σ‖ΔW‖²` against its expectation `steps · d · dt`.
    pub fn energy_z(&self) -> f64 {
        let n = self.steps();
        if n == 0 {
            return 0.0;
        }
        let d = self.increments[0].len() as f64;
        let total: f64 = self.increments.iter().map(|v| v.norm_squared()).sum();
        // ‖ΔW‖² / dt is χ²_d with variance 2d.
        (total / self.dt - n as f64 * d) / (2.0 * d * n as f64).sqrt()
    }
}

/// `p_t(E)` and the rate of its quadratic variation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsetSnapshot {
    pub g: f64,
    /// `‖Σ_{i∈E} w_i A^{-1/2}(x_i - μ_t)‖²`.
    pub qv_rate: f64,
    pub spec_q: f64,
}

/// Evaluates `g_t` for the frozen atom set `members` and checks `rate ≤ ‖Q_t‖₂`.
pub fn subset_process(state: &LocalizationState, members: &[bool]) -> Result<SubsetSnapshot> {
    check_dim(state.current().len(), members.len())?;
    let w = state.current().weights();
    let x = state.base().points();
    let mut g = 0.0;
    let mut sum = Vector::zeros(state.dim());
    for (i, _) in members.iter().enumerate().filter(|(_, m)| **m) {
        g += w[i];
        sum.axpy(w[i], &(x.column(i) - &state.mean), 1.0);
    }
    let qv_rate = (state.base_inv_sqrt() * sum).norm_squared();
    let spec_q = state.spec_q();
    if qv_rate > spec_q + IDENTITY_TOL {
        return Err(Error::InvariantViolated(format!("subset variation rate {qv_rate} exceeds ‖Q‖ = {spec_q}")));
    }
    Ok(SubsetSnapshot { g: g.clamp(0.0, 1.0), qv_rate, spec_q })
}

/// Membership of a fixed set `E` plus its running quadratic variation.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetTracker {
    pub members: Vec<bool>,
    pub g: f64,
    pub g0: f64,
    /// Accumulated `[g]_t`.
    pub quadratic_variation: f64,
    /// Accumulated `∫ ‖Q_s‖₂ ds`.
    pub spectral_integral: f64,
}

impl SubsetTracker {
    pub fn new(state: &LocalizationState, members: Vec<bool>) -> Result<Self> {
        let snap = subset_process(state, &members)?;
        Ok(SubsetTracker { members, g: snap.g, g0: snap.g, quadratic_variation: 0.0, spectral_integral: 0.0 })
    }

    /// Left-point update over a step of length `dt` that starts at `snapshot`.
    fn advance(&mut self, snapshot: &SubsetSnapshot, dt: f64, next_g: f64) -> Result<()> {
        self.quadratic_variation += snapshot.qv_rate * dt;
        self.spectral_integral += snapshot.spec_q * dt;
        self.g = next_g;
        if self.quadratic_variation > self.spectral_integral + IDENTITY_TOL {
            return Err(Error::InvariantViolated(format!(
                "[g]_t = {} exceeds ∫‖Q‖ = {}",
                self.quadratic_variation, self.spectral_integral
            )));
        }
        Ok(())
    }
}

/// The two Itô terms of `dΓ_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftDiffusion {
    pub v: Vector,
    pub delta: f64,
}

fn validate_whitened(z: &Matrix, w: &Vector) -> Result<()> {
    check_dim(z.ncols(), w.len())
}

// v_t = q Σ w_i (z_i^T Q^{q-1} z_i) z_i.
fn diffusion_term(z: &Matrix, w: &Vector, q_pow_qm1: &Matrix, q: u32) -> Vector {
    let mz = q_pow_qm1 * z;
    let coeff = Vector::from_fn(z.ncols(), |i, _| w[i] * z.column(i).dot(&mz.column(i)));
    z * coeff * q as f64
}

fn integer_powers(q_mat: &Matrix, max: u32) -> Vec<Matrix> {
    let d = q_mat.nrows();
    let mut powers = vec![Matrix::identity(d, d)];
    for k in 1..=max {
        powers.push(linalg::symmetrize(&(&powers[k as usize - 1] * q_mat)));
    }
    powers
}

/// `v_t` and `δ_t` on the current atoms.
///
/// The pair sum in `δ_t` is evaluated through the factored 3-tensor, so the
/// cost is `O(n d³ q)` and no atom cap applies.
pub fn gamma_drift_terms(state: &LocalizationState) -> Result<DriftDiffusion> {
    let z = state.whitened_points();
    let w = state.current().weights();
    validate_whitened(&z, w)?;
    let q = state.q();
    let powers = integer_powers(state.q_matrix(), q + 1);
    let v = diffusion_term(&z, w, &powers[q as usize - 1], q);
    let deltas = tensor::axis_deltas(&z, w);
    let mut pair = 0.0;
    for a in 0..=(q - 2) as usize {
        let b = q as usize - 2 - a;
        pair += deltas.iter().map(|dk| tensor::trace_sandwich(dk, &powers[a], &powers[b])).sum::<f64>();
    }
    let delta = -(q as f64) * powers[q as usize + 1].trace() + 0.5 * q as f64 * pair;
    Ok(DriftDiffusion { v, delta })
}

/// Same as [`gamma_drift_terms`] with the pair sum done atom pair by atom pair.
///
/// Fails with [`Error::PairSumCap`] above [`tensor::PAIR_SUM_CAP`] atoms.
pub fn gamma_drift_terms_pairwise(state: &LocalizationState) -> Result<DriftDiffusion> {
    let n = state.current().len();
    if n > tensor::PAIR_SUM_CAP {
        return Err(Error::PairSumCap { n, cap: tensor::PAIR_SUM_CAP });
    }
    let z = state.whitened_points();
    let w = state.current().weights();
    let q = state.q();
    let d = state.dim();
    let powers = integer_powers(state.q_matrix(), q + 1);
    let v = diffusion_term(&z, w, &powers[q as usize - 1], q);
    let identity = Matrix::identity(d, d);
    let mut pair = 0.0;
    for a in 0..=(q - 2) as usize {
        let b = q as usize - 2 - a;
        pair += tensor::pairwise_sum(&z, w, &powers[a], &powers[b], &identity);
    }
    let delta = -(q as f64) * powers[q as usize + 1].trace() + 0.5 * q as f64 * pair;
    Ok(DriftDiffusion { v, delta })
}

/// One row of the path diagnostics stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub gamma: f64,
    pub spec_q: f64,
    pub g_e: Option<f64>,
    pub qv_rate: Option<f64>,
    pub v_norm: Option<f64>,
    pub delta: Option<f64>,
}

/// Which diagnostics a path run records.
#[derive(Debug, Clone, Default)]
pub struct PathOptions {
    /// Frozen set `E` to track, as atom membership.
    pub subset: Option<Vec<bool>>,
    /// Evaluate `v_t, δ_t` every this many steps (0 = never).
    pub drift_stride: usize,
    /// Keep a full state every this many steps (0 = initial and final only).
    pub state_stride: usize,
    /// Run [`LocalizationState::check_invariants`] after every step.
    pub check_invariants: bool,
}

/// A simulated trajectory.
#[derive(Debug, Clone)]
pub struct Path {
    pub seed: u64,
    pub dt: f64,
    pub records: Vec<StepRecord>,
    /// `(step index, state)` pairs, always including the first and last step.
    pub states: Vec<(usize, LocalizationState)>,
    pub tracker: Option<SubsetTracker>,
}

impl Path {
    pub fn initial(&self) -> &LocalizationState {
        &self.states.first().expect("paths keep their initial state").1
    }

    pub fn terminal(&self) -> &LocalizationState {
        &self.states.last().expect("paths keep their final state").1
    }

    /// Kept state closest to time `t`.
    pub fn state_near(&self, t: f64) -> &LocalizationState {
        &self
            .states
            .iter()
            .min_by(|a, b| (a.1.t() - t).abs().total_cmp(&(b.1.t() - t).abs()))
            .expect("non-empty")
            .1
    }

    /// Writes `t,gamma,spec_Q,g_E,qv_rate,v_norm,delta`; unrecorded cells are empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_records_csv(&self.records, writer)
    }
}

pub fn write_records_csv<W: Write>(records: &[StepRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "gamma", "spec_Q", "g_E", "qv_rate", "v_norm", "delta"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    for r in records {
        w.write_record([
            format!("{:.16e}", r.t),
            format!("{:.16e}", r.gamma),
            format!("{:.16e}", r.spec_q),
            cell(r.g_e),
            cell(r.qv_rate),
            cell(r.v_norm),
            cell(r.delta),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn record_for(state: &LocalizationState, snapshot: Option<&SubsetSnapshot>, drift: Option<&DriftDiffusion>) -> StepRecord {
    StepRecord {
        t: state.t(),
        gamma: state.gamma(),
        spec_q: state.spec_q(),
        g_e: snapshot.map(|s| s.g),
        qv_rate: snapshot.map(|s| s.qv_rate),
        v_norm: drift.map(|d| d.v.norm()),
        delta: drift.map(|d| d.delta),
    }
}

/// Number of Euler steps and the step actually used to reach `horizon`.
pub fn step_grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Precondition(format!("horizon must be finite and nonnegative, got {horizon}")));
    }
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    if horizon == 0.0 {
        return Ok((0, dt));
    }
    if dt > horizon {
        return Err(Error::Precondition(format!("dt = {dt} exceeds the horizon {horizon}")));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, horizon / steps as f64))
}

/// Runs the process from `start` along the given Brownian increments.
pub fn simulate_with_noise(start: &LocalizationState, noise: &NoisePath, options: &PathOptions) -> Result<Path> {
    let mut state = start.clone();
    let mut tracker = match &options.subset {
        Some(m) => Some(SubsetTracker::new(&state, m.clone())?),
        None => None,
    };
    let steps = noise.steps();
    let mut records = Vec::with_capacity(steps + 1);
    let mut states = vec![(0, state.clone())];
    for k in 0..=steps {
        let snapshot = match &tracker {
            Some(tr) => Some(subset_process(&state, &tr.members)?),
            None => None,
        };
        let drift = if options.drift_stride > 0 && k % options.drift_stride == 0 {
            Some(gamma_drift_terms(&state)?)
        } else {
            None
        };
        records.push(record_for(&state, snapshot.as_ref(), drift.as_ref()));
        if k == steps {
            break;
        }
        let next = state.euler_step(&noise.increments[k], noise.dt)?;
        if options.check_invariants {
            next.check_invariants()?;
        }
        if let (Some(tr), Some(snap)) = (tracker.as_mut(), snapshot.as_ref()) {
            let g_next = tr.members.iter().zip(next.current().weights().iter()).filter(|(m, _)| **m).map(|(_, w)| w).sum();
            tr.advance(snap, noise.dt, g_next)?;
        }
        state = next;
        if options.state_stride > 0 && (k + 1) % options.state_stride == 0 && k + 1 != steps {
            states.push((k + 1, state.clone()));
        }
    }
    if steps > 0 {
        states.push((steps, state));
    }
    Ok(Path { seed: noise.seed, dt: noise.dt, records, states, tracker })
}

/// Simulates one path of `⌈T/dt⌉` steps on the base measure.
pub fn simulate_path(base: &AtomicMeasure, q: u32, horizon: f64, dt: f64, seed: u64, options: &PathOptions) -> Result<Path> {
    let start = init_state(base, q)?;
    simulate_from(&start, horizon, dt, seed, options)
}

pub fn simulate_from(start: &LocalizationState, horizon: f64, dt: f64, seed: u64, options: &PathOptions) -> Result<Path> {
    let (steps, dt) = step_grid(horizon, dt)?;
    let noise = NoisePath::generate(start.dim(), steps, dt, seed);
    simulate_with_noise(start, &noise, options)
}

/// Independent paths with seeds split from `master`, merged in index order.
pub fn simulate_ensemble(
    start: &LocalizationState,
    horizon: f64,
    dt: f64,
    master: u64,
    paths: usize,
    options: &PathOptions,
) -> Result<Vec<Path>> {
    (0..paths)
        .into_par_iter()
        .map(|i| simulate_from(start, horizon, dt, stream_seed(master, i as u64), options))
        .collect()
}

/// Ensemble-mean test for one martingale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleCheck {
    pub target: String,
    pub initial: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub z: f64,
    pub passed: bool,
}

/// Quantities expected to be martingales under the process.
#[derive(Debug, Clone, PartialEq)]
pub enum MartingaleTarget {
    /// `p_t(E)` for the path's tracked subset.
    Subset,
    /// Weight of one atom.
    Atom(usize),
}

/// z-score of `values` against `target`; zero spread counts as exact.
pub fn mean_z(values: &[f64], target: f64) -> (f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let se = (var / n).sqrt();
    let diff = mean - target;
    let z = if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-12 * target.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    };
    (mean, se, z)
}

/// Compares terminal ensemble means with initial values.
pub fn check_martingale(paths: &[Path], targets: &[MartingaleTarget]) -> Result<Vec<MartingaleCheck>> {
    if paths.is_empty() {
        return Err(Error::Precondition("martingale check needs at least one path".into()));
    }
    if paths.len() < 100 {
        log::warn!("martingale check on {} paths; at least 100 are recommended", paths.len());
    }
    targets
        .iter()
        .map(|target| {
            let (name, initial, values): (String, f64, Vec<f64>) = match target {
                MartingaleTarget::Subset => {
                    let first = paths[0].tracker.as_ref().ok_or_else(|| Error::Precondition("paths track no subset".into()))?;
                    let values = paths
                        .iter()
                        .map(|p| p.tracker.as_ref().map(|t| t.g).ok_or_else(|| Error::Precondition("paths track no subset".into())))
                        .collect::<Result<_>>()?;
                    ("subset mass".into(), first.g0, values)
                }
                MartingaleTarget::Atom(i) => {
                    let initial = paths[0].initial().current().weights()[*i];
                    let values = paths.iter().map(|p| p.terminal().current().weights()[*i]).collect();
                    (format!("atom {i} weight"), initial, values)
                }
            };
            let (mean, standard_error, z) = mean_z(&values, initial);
            Ok(MartingaleCheck { target: name, initial, mean, standard_error, z, passed: z.abs() <= Z_BAND })
        })
        .collect()
}

/// One-step ensemble estimate of the drift of `A_t`, and covariance domination along paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceDriftReport {
    /// Largest `|z|` over the entries of the mean of `(A_{t+dt} - A_t)/dt + A_t A^{-1} A_t`.
    pub drift_max_z: f64,
    /// Spectral norm of that mean relative to `‖A_t A^{-1} A_t‖₂`.
    pub drift_relative_residual: f64,
    pub drift_samples: usize,
    /// Smallest `λ_min(A/t - A_t) / tol` over checked states (negative below -1 means violation).
    pub domination_worst: f64,
    pub domination_violations: usize,
    pub domination_checked: usize,
    pub drift_passed: bool,
    pub domination_passed: bool,
}

/// Checks `E dA_t = -A_t A^{-1} A_t dt` by `samples` one-step draws from `state`,
/// and `A_t ⪯ A/t` at every kept state of `paths`.
pub fn check_cov_drift_and_domination(
    state: &LocalizationState,
    dt: f64,
    samples: usize,
    seed: u64,
    paths: &[Path],
) -> Result<CovarianceDriftReport> {
    if samples < 2 {
        return Err(Error::Precondition("drift estimate needs at least two samples".into()));
    }
    let d = state.dim();
    let expected = state.covariance() * state.base_inverse() * state.covariance();
    let residuals: Vec<Matrix> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let dw = Vector::from_fn(d, |_, _| dt.sqrt() * rng.sample::<f64, _>(StandardNormal));
            let next = state.euler_step(&dw, dt)?;
            Ok((next.covariance() - state.covariance()) / dt + &expected)
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let mean = residuals.iter().fold(Matrix::zeros(d, d), |acc, r| acc + r) / n;
    let mut max_z: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            let var = residuals.iter().map(|r| (r[(i, j)] - mean[(i, j)]).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            let z = if se > 0.0 { mean[(i, j)] / se } else if mean[(i, j)].abs() <= 1e-9 { 0.0 } else { f64::INFINITY };
            max_z = max_z.max(z.abs());
        }
    }
    let scale = linalg::spectral_norm(&expected).max(f64::MIN_POSITIVE);
    let drift_relative_residual = linalg::spectral_norm(&mean) / scale;

    let mut worst = f64::INFINITY;
    let mut violations = 0;
    let mut checked = 0;
    for path in paths {
        for (_, s) in &path.states {
            if s.t() <= 0.0 {
                continue;
            }
            let a = s.base_covariance();
            let tol = 1e-6 * linalg::spectral_norm(a) / s.t();
            let gap = linalg::lambda_min(&(a / s.t() - s.covariance()));
            checked += 1;
            worst = worst.min(gap / tol);
            if gap < -tol {
                violations += 1;
            }
        }
    }
    Ok(CovarianceDriftReport {
        drift_max_z: max_z,
        drift_relative_residual,
        drift_samples: samples,
        domination_worst: worst,
        domination_violations: violations,
        domination_checked: checked,
        drift_passed: max_z <= Z_BAND,
        domination_passed: violations == 0,
    })
}

/// Both sides of the bounds on `‖v_t‖` and `δ_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftBoundReport {
    pub t: f64,
    pub gamma: f64,
    pub v_norm: f64,
    pub v_bound: f64,
    pub delta: f64,
    /// `64 q² α² ln(d) d^{2β - 1/q} Γ^{1 + 1/q}`.
    pub delta_bound_isoperimetric: f64,
    /// `2 q² Γ / t`, infinite at `t = 0`.
    pub delta_bound_time: f64,
    pub delta_bound: f64,
    pub slack: f64,
    pub v_flagged: bool,
    pub delta_flagged: bool,
}

/// Evaluates `‖v_t‖ ≤ 16 q Γ^{1+1/(2q)}` and `δ_t ≤ min(…)`, flagging beyond `slack`.
pub fn check_drift_bounds(state: &LocalizationState, alpha: f64, beta: f64, slack: f64) -> Result<DriftBoundReport> {
    let dd = gamma_drift_terms(state)?;
    let q = state.q() as f64;
    let d = state.dim() as f64;
    let gamma = state.gamma();
    let v_norm = dd.v.norm();
    let v_bound = 16.0 * q * gamma.powf(1.0 + 1.0 / (2.0 * q));
    let iso = 64.0 * q * q * alpha * alpha * d.ln() * d.powf(2.0 * beta - 1.0 / q) * gamma.powf(1.0 + 1.0 / q);
    let time = if state.t() > 0.0 { 2.0 * q * q * gamma / state.t() } else { f64::INFINITY };
    let bound = iso.min(time);
    Ok(DriftBoundReport {
        t: state.t(),
        gamma,
        v_norm,
        v_bound,
        delta: dd.delta,
        delta_bound_isoperimetric: iso,
        delta_bound_time: time,
        delta_bound: bound,
        slack,
        v_flagged: v_norm > slack * v_bound,
        delta_flagged: dd.delta > slack * bound,
    })
}

/// Ensemble behavior of `h(Γ) = -(Γ+1)^{-1/q}` on `[0, t1]` and of `f(Γ) = Γ^{1/q}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialReport {
    pub paths: usize,
    pub t1: f64,
    /// Fraction of paths whose `h(Γ_t)` reaches `-(d+1)^{-1/q}/2` before `t1`.
    pub excursion_fraction: f64,
    pub excursion_ceiling: f64,
    pub excursion_flagged: bool,
    pub growth: Vec<GrowthCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCheck {
    pub t1: f64,
    pub t2: f64,
    pub mean_f1: f64,
    pub mean_f2: f64,
    /// `mean f(Γ_{t2}) - mean f(Γ_{t1}) (t2/t1)^{2q}` in standard errors (positive = violation side).
    pub z: f64,
    pub flagged: bool,
}

fn gamma_at(path: &Path, t: f64) -> f64 {
    path.records
        .iter()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .map(|r| r.gamma)
        .expect("paths record at least one step")
}

/// `h(a) = -(a+1)^{-1/q}`.
pub fn h_transform(a: f64, q: u32) -> f64 {
    -(a + 1.0).powf(-1.0 / q as f64)
}

/// `f(a) = a^{1/q}`.
pub fn f_transform(a: f64, q: u32) -> f64 {
    a.powf(1.0 / q as f64)
}

/// Checks the excursion probability of `h(Γ)` up to `t1` and `f(Γ)` growth on `pairs`.
pub fn check_potential_lemmas(paths: &[Path], q: u32, t1: f64, pairs: &[(f64, f64)]) -> Result<PotentialReport> {
    if paths.is_empty() {
        return Err(Error::Precondition("potential check needs at least one path".into()));
    }
    let d = paths[0].initial().dim() as f64;
    let level = -0.5 * (d + 1.0).powf(-1.0 / q as f64);
    let excursions = paths
        .iter()
        .filter(|p| p.records.iter().filter(|r| r.t <= t1 * (1.0 + 1e-12)).any(|r| h_transform(r.gamma, q) >= level))
        .count();
    let excursion_fraction = excursions as f64 / paths.len() as f64;
    let growth = pairs
        .iter()
        .map(|&(a, b)| {
            if !(a > 0.0 && b >= a) {
                return Err(Error::Precondition(format!("need 0 < t1 <= t2, got ({a}, {b})")));
            }
            let ratio = (b / a).powi(2 * q as i32);
            let f1: Vec<f64> = paths.iter().map(|p| f_transform(gamma_at(p, a), q)).collect();
            let f2: Vec<f64> = paths.iter().map(|p| f_transform(gamma_at(p, b), q)).collect();
            let diffs: Vec<f64> = f1.iter().zip(&f2).map(|(x, y)| y - ratio * x).collect();
            let (mean_diff, _, z) = mean_z(&diffs, 0.0);
            let mean_f1 = f1.iter().sum::<f64>() / f1.len() as f64;
            let mean_f2 = f2.iter().sum::<f64>() / f2.len() as f64;
            let z = if z.is_nan() { 0.0 } else { z };
            Ok(GrowthCheck { t1: a, t2: b, mean_f1, mean_f2, z, flagged: mean_diff > 0.0 && z > Z_BAND })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialReport {
        paths: paths.len(),
        t1,
        excursion_fraction,
        excursion_ceiling: 0.3,
        excursion_flagged: excursion_fraction > 0.3,
        growth,
    })
}
