//! Verification suites. Each returns report records; hard gates can fail,
//! statistical suites can only flag.

use klslab::bounds::time_constants;
use klslab::linalg::{random_projection, random_psd, random_symmetric, random_unit};
use klslab::localization::{
    check_cov_drift_and_domination, check_drift_bounds, check_martingale, check_potential_lemmas, init_state,
    simulate_ensemble, simulate_path, MartingaleTarget, PathOptions,
};
use klslab::measures::{sample_atomic, tilt_atomic};
use klslab::report::{CheckRecord, Report};
use klslab::rng::{stream_rng, stream_seed};
use klslab::tensor::{
    check_moment_inequality, check_tensor_isoperimetric, check_tensor_strong_logconcave, check_tensor_swap,
    check_tensor_vector_bound, check_trace_delta_bounds, check_trace_inequality, BoundCheck, DeltaBoundArg,
    MomentSource,
};
use klslab::{AtomicMeasure, Density, Family, Matrix, Result, TiltParams, Vector};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Fault, Suite};

/// Largest dimension drawn by the trace gate.
pub const TRACE_MAX_DIM: usize = 8;
/// Largest dimension drawn by the swap gate.
pub const SWAP_MAX_DIM: usize = 5;
/// Exponent pairs `(a, b)` for the moment gate.
pub const MOMENT_PAIRS: [(f64, f64); 3] = [(4.0, 2.0), (3.0, 1.0), (6.0, 2.0)];

/// Worst case seen over many instances of one check.
#[derive(Debug, Clone, Copy)]
struct Tally {
    score: f64,
    lhs: f64,
    rhs: f64,
    violations: usize,
    cases: usize,
}

impl Tally {
    fn new() -> Self {
        Tally { score: f64::NEG_INFINITY, lhs: f64::NAN, rhs: f64::NAN, violations: 0, cases: 0 }
    }

    fn add(&mut self, lhs: f64, rhs: f64, score: f64, violated: bool) {
        self.cases += 1;
        self.violations += violated as usize;
        if score > self.score || self.score.is_nan() {
            *self = Tally { score, lhs, rhs, ..*self };
        }
    }

    fn add_bound(&mut self, check: &BoundCheck) {
        self.add(check.lhs, check.rhs, check.ratio, check.flagged);
    }

    fn hard(self, name: &str, seeds: Vec<u64>) -> CheckRecord {
        CheckRecord::hard(name, self.lhs, self.rhs, self.cases, self.violations, seeds)
    }

    fn statistical(self, name: &str, slack: f64, seeds: Vec<u64>) -> CheckRecord {
        CheckRecord::statistical(name, self.lhs, self.rhs, slack, self.cases, self.violations, seeds)
    }
}

/// `tr(G^δ F G^{1-δ} F) ≤ tr(G F²)` on `cases` random instances with `d ≤ 8`.
///
/// With [`Fault::Trace`] every left side is replaced by `2|rhs| + 1`.
pub fn trace_gate(cases: usize, master: u64, fault: Fault) -> Result<CheckRecord> {
    let results: Vec<(f64, f64, bool)> = (0..cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(master, i as u64);
            let d = rng.random_range(1..=TRACE_MAX_DIM);
            let rank = rng.random_range(0..=d);
            let g = random_psd(d, rank, &mut rng);
            let f = random_symmetric(d, &mut rng);
            let delta = rng.random_range(0.0..=1.0);
            let r = check_trace_inequality(&g, &f, delta)?;
            Ok(match fault {
                Fault::None => (r.lhs, r.rhs, r.passed),
                Fault::Trace => {
                    let lhs = 2.0 * r.rhs.abs() + 1.0;
                    (lhs, r.rhs, lhs <= r.rhs + 1e-10 * (1.0 + r.rhs.abs()))
                }
            })
        })
        .collect::<Result<_>>()?;
    let mut tally = Tally::new();
    for (lhs, rhs, passed) in results {
        tally.add(lhs, rhs, (lhs - rhs) / (1.0 + rhs.abs()), !passed);
    }
    Ok(tally.hard("trace-inequality", vec![master]))
}

/// Random weighted cloud in `[-2, 2]^d`, shifted to mean zero.
pub fn random_centered_cloud<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Result<AtomicMeasure> {
    let pts = Matrix::from_fn(d, n, |_, _| rng.random_range(-2.0..2.0));
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = Vector::from_iterator(n, raw.into_iter().map(|w| w / total));
    let mean = &pts * &weights;
    let mut centered = pts;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    AtomicMeasure::new(centered, weights)
}

/// The tensor swap bound on `clouds` random centered clouds with `d ≤ 5` and random PSD triples.
pub fn swap_gate(clouds: usize, master: u64) -> Result<CheckRecord> {
    let results: Vec<(f64, f64, bool)> = (0..clouds)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(master, i as u64);
            let d = rng.random_range(1..=SWAP_MAX_DIM);
            let n = rng.random_range(d + 1..=60);
            let cloud = random_centered_cloud(d, n, &mut rng)?;
            let ranks: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..=d));
            let [a, b, c] = ranks.map(|r| random_psd(d, r, &mut rng));
            let delta = rng.random_range(0.0..=1.0);
            let r = check_tensor_swap(&cloud, &a, &b, &c, delta)?;
            Ok((r.lhs, r.rhs, r.passed))
        })
        .collect::<Result<_>>()?;
    let mut tally = Tally::new();
    for (lhs, rhs, passed) in results {
        let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
        tally.add(lhs, rhs, (lhs - rhs) / scale, !passed);
    }
    Ok(tally.hard("tensor-swap", vec![master]))
}

/// One-dimensional densities used by the moment gate.
pub fn moment_densities() -> Vec<(&'static str, Density)> {
    vec![
        ("gaussian", Density::standard_gaussian(1)),
        ("exponential", Density::product_exponential(Vector::zeros(1), Vector::from_element(1, 1.0)).expect("valid")),
        ("uniform", Density::uniform_box(Vector::from_element(1, -1.0), Vector::from_element(1, 1.0)).expect("valid")),
    ]
}

/// Quadrature moment gates (hard) plus the same inequality on sampled projections (statistical).
pub fn moment_suite(n_samples: usize, master: u64) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for (name, density) in moment_densities() {
        for (a, b) in MOMENT_PAIRS {
            let r = check_moment_inequality(MomentSource::Density(&density), a, b)?;
            let violations = usize::from(!r.passed);
            records.push(CheckRecord::hard(format!("moment-quadrature/{name}/a={a}/b={b}"), r.l_a, r.rhs, 1, violations, vec![]));
        }
    }
    for (k, family) in Family::ALL.into_iter().enumerate() {
        let seed = stream_seed(master, k as u64);
        let cloud = sample_atomic(&family.isotropic(3), n_samples, seed)?;
        let xs: Vec<f64> = cloud.points().row(0).iter().copied().collect();
        let mut tally = Tally::new();
        for (a, b) in MOMENT_PAIRS {
            let r = check_moment_inequality(MomentSource::Samples(&xs), a, b)?;
            tally.add(r.l_a, r.rhs, r.l_a / r.rhs, !r.passed);
        }
        records.push(tally.statistical(&format!("moment-samples/{}", family.name()), 1.0, vec![seed]));
    }
    Ok(records)
}

/// Dimension used for the `s`-th cloud of the statistical suites: cycles through 2..=5.
pub fn suite_dim(s: usize) -> usize {
    2 + s % 4
}

/// Tensor bounds on `seeds` clouds per family with `n` atoms and `d ∈ 2..=5`.
#[allow(clippy::too_many_arguments)]
pub fn tensor_lemma_suite(
    seeds: usize,
    n: usize,
    q: u32,
    alpha: f64,
    beta: f64,
    tau: f64,
    slack: f64,
    master: u64,
) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for (k, family) in Family::ALL.into_iter().enumerate() {
        let family_master = stream_seed(master, k as u64);
        let per_seed: Vec<[BoundCheck; 5]> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let d = suite_dim(s);
                let seed = stream_seed(family_master, s as u64);
                let cloud = sample_atomic(&family.isotropic(d), n, seed)?;
                let mut rng = stream_rng(seed, 1);
                let b = random_psd(d, d, &mut rng);
                let c = random_psd(d, d, &mut rng);
                let vector = check_tensor_vector_bound(&cloud, &b, &c, slack)?;
                let iso = check_tensor_isoperimetric(&cloud, q.max((1.0 / (2.0 * beta)).ceil() as u32), alpha, beta, slack)?;
                let tilt = TiltParams::new(Vector::zeros(d), Matrix::identity(d, d) * tau)?;
                let tilted = tilt_atomic(&cloud, &tilt)?;
                let strong = check_tensor_strong_logconcave(&tilted, tau, q.max(3), slack)?;
                let v = random_unit(d, &mut rng);
                let rank = rng.random_range(1..=d);
                let proj = check_trace_delta_bounds(&cloud, &v, &DeltaBoundArg::Projection(random_projection(d, rank, &mut rng)), alpha, beta, slack)?;
                let psd = check_trace_delta_bounds(&cloud, &v, &DeltaBoundArg::Psd(random_psd(d, d, &mut rng)), alpha, beta, slack)?;
                Ok([vector, iso, strong, proj, psd])
            })
            .collect::<Result<_>>()?;
        let names = ["tensor-vector-bound", "tensor-isoperimetric", "tensor-strong-logconcave", "delta-projection-bound", "delta-psd-bound"];
        for (j, name) in names.iter().enumerate() {
            let mut tally = Tally::new();
            for checks in &per_seed {
                tally.add_bound(&checks[j]);
            }
            records.push(tally.statistical(&format!("{name}/{}", family.name()), slack, vec![family_master]));
        }
    }
    Ok(records)
}

// Per state: (v flagged, δ flagged, ‖v‖, v bound, δ, δ bound); then (drift z, domination violations, checked, worst).
type DriftSeed = (Vec<(bool, bool, f64, f64, f64, f64)>, (f64, usize, usize, f64));

/// Drift bounds for `Γ` along short paths, plus the covariance drift and domination checks.
#[allow(clippy::too_many_arguments)]
pub fn drift_suite(
    seeds: usize,
    n: usize,
    q: u32,
    alpha: f64,
    beta: f64,
    horizon: f64,
    dt: f64,
    slack: f64,
    master: u64,
) -> Result<Vec<CheckRecord>> {
    let mut records = Vec::new();
    for (k, family) in Family::ALL.into_iter().enumerate() {
        let family_master = stream_seed(master, 100 + k as u64);
        let per_seed: Vec<DriftSeed> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let d = suite_dim(s);
                let seed = stream_seed(family_master, s as u64);
                let cloud = sample_atomic(&family.isotropic(d), n, seed)?;
                let steps = (horizon / dt).ceil().max(1.0) as usize;
                let opts = PathOptions { state_stride: (steps / 4).max(1), ..Default::default() };
                let path = simulate_path(&cloud, q, horizon, dt, stream_seed(seed, 1), &opts)?;
                let bounds = path
                    .states
                    .iter()
                    .map(|(_, st)| {
                        let r = check_drift_bounds(st, alpha, beta, slack)?;
                        Ok((r.v_flagged, r.delta_flagged, r.v_norm, r.v_bound, r.delta, r.delta_bound))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let mid = path.state_near(horizon / 2.0);
                let cov = check_cov_drift_and_domination(mid, dt.min(1e-3), 400, stream_seed(seed, 2), std::slice::from_ref(&path))?;
                Ok((bounds, (cov.drift_max_z, cov.domination_violations, cov.domination_checked, cov.domination_worst)))
            })
            .collect::<Result<_>>()?;
        let (mut v, mut delta, mut drift) = (Tally::new(), Tally::new(), Tally::new());
        let (mut dom_viol, mut dom_checked, mut dom_worst) = (0, 0, f64::INFINITY);
        for (bounds, (z, viol, checked, worst)) in &per_seed {
            for &(vf, df, vn, vb, dl, db) in bounds {
                v.add(vn, vb, vn / vb, vf);
                delta.add(dl, db, if db > 0.0 { dl / db } else { 0.0 }, df);
            }
            drift.add(*z, 4.0, *z / 4.0, *z > 4.0);
            dom_viol += viol;
            dom_checked += checked;
            dom_worst = dom_worst.min(*worst);
        }
        let seeds_echo = vec![family_master];
        let name = family.name();
        records.push(v.statistical(&format!("gamma-diffusion-bound/{name}"), slack, seeds_echo.clone()));
        records.push(delta.statistical(&format!("gamma-drift-bound/{name}"), slack, seeds_echo.clone()));
        let worst_z = drift.lhs;
        records.push(drift.statistical(&format!("covariance-drift/{name}"), 1.0, seeds_echo.clone()).with_z(worst_z));
        // lhs: worst λ_min(A/t - A_t) in units of the tolerance; violation below -1.
        records.push(CheckRecord::statistical(
            format!("covariance-domination/{name}"),
            dom_worst,
            -1.0,
            1.0,
            dom_checked,
            dom_viol,
            seeds_echo,
        ));
    }
    Ok(records)
}

/// Indices of the `n/2` atoms with the smallest first coordinate.
pub fn lower_half(cloud: &AtomicMeasure) -> Vec<bool> {
    let n = cloud.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cloud.points()[(0, a)].total_cmp(&cloud.points()[(0, b)]).then(a.cmp(&b)));
    let mut members = vec![false; n];
    for &i in &order[..n / 2] {
        members[i] = true;
    }
    members
}

/// Martingale checks for `p_t(E)` (E = lower half of the atoms) and every atom weight.
#[allow(clippy::too_many_arguments)]
pub fn martingale_suite(
    family: Family,
    d: usize,
    n: usize,
    q: u32,
    paths: usize,
    horizon: f64,
    dt: f64,
    master: u64,
) -> Result<Vec<CheckRecord>> {
    let cloud = sample_atomic(&family.isotropic(d), n, stream_seed(master, 0))?;
    let start = init_state(&cloud, q)?;
    let members = lower_half(&cloud);
    let opts = PathOptions { subset: Some(members), ..Default::default() };
    let ensemble = simulate_ensemble(&start, horizon, dt, stream_seed(master, 1), paths, &opts)?;
    let mut targets = vec![MartingaleTarget::Subset];
    targets.extend((0..n).map(MartingaleTarget::Atom));
    let checks = check_martingale(&ensemble, &targets)?;
    let subset = &checks[0];
    let mut records = vec![CheckRecord::statistical(
        format!("martingale-subset/T={horizon}"),
        subset.mean,
        subset.initial,
        1.0,
        paths,
        usize::from(!subset.passed),
        vec![master],
    )
    .with_z(subset.z)];
    let worst = checks[1..].iter().max_by(|a, b| a.z.abs().total_cmp(&b.z.abs())).expect("n >= 1");
    let violations = checks[1..].iter().filter(|c| !c.passed).count();
    records.push(
        CheckRecord::statistical(format!("martingale-atoms/T={horizon}"), worst.mean, worst.initial, 1.0, n, violations, vec![master])
            .with_z(worst.z),
    );
    Ok(records)
}

/// Excursion of `h(Γ)` before `T_1` and growth of `f(Γ)` over `[T/4, T]`.
#[allow(clippy::too_many_arguments)]
pub fn potential_suite(
    family: Family,
    d: usize,
    n: usize,
    q: u32,
    alpha: f64,
    beta: f64,
    paths: usize,
    horizon: f64,
    dt: f64,
    master: u64,
) -> Result<Vec<CheckRecord>> {
    let d = d.max(3);
    let tc = time_constants(d as f64, alpha, beta)?;
    let q = q.max(tc.q);
    let cloud = sample_atomic(&family.isotropic(d), n, stream_seed(master, 0))?;
    let start = init_state(&cloud, q)?;
    let opts = PathOptions::default();
    let early = simulate_ensemble(&start, tc.t1, tc.t1 / 200.0, stream_seed(master, 1), paths, &opts)?;
    let excursion = check_potential_lemmas(&early, q, tc.t1, &[])?;
    let mut records = vec![CheckRecord::statistical(
        "potential-excursion",
        excursion.excursion_fraction,
        excursion.excursion_ceiling,
        1.0,
        paths,
        usize::from(excursion.excursion_flagged),
        vec![master],
    )];
    if horizon > 0.0 {
        let late = simulate_ensemble(&start, horizon, dt, stream_seed(master, 2), paths, &opts)?;
        let pairs = [(horizon / 4.0, horizon / 2.0), (horizon / 2.0, horizon), (horizon / 4.0, horizon)];
        let growth = check_potential_lemmas(&late, q, tc.t1, &pairs)?;
        for g in growth.growth {
            let rhs = g.mean_f1 * (g.t2 / g.t1).powi(2 * q as i32);
            records.push(
                CheckRecord::statistical(
                    format!("potential-growth/t1={}/t2={}", g.t1, g.t2),
                    g.mean_f2,
                    rhs,
                    1.0,
                    paths,
                    usize::from(g.flagged),
                    vec![master],
                )
                .with_z(g.z),
            );
        }
    }
    Ok(records)
}

/// Runs the configured suite(s) into one report.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new();
    report.echo("seed", cfg.seed);
    report.echo("suite", cfg.suite.name());
    report.echo("slack", cfg.slack);
    report.echo("trace_tolerance", "1e-10 * (1 + |rhs|)");
    report.echo("swap_tolerance", "1e-9 relative");
    report.echo("moment_tolerance", 1e-6);
    report.echo("z_band", 4.0);
    report.echo("alpha", cfg.alpha);
    report.echo("beta", cfg.beta);
    report.echo("q", cfg.q as u64);
    report.echo("n_atoms", cfg.n_atoms);
    report.echo("paths", cfg.paths);
    report.echo("T", cfg.horizon);
    report.echo("dt", cfg.dt());
    let suites: Vec<Suite> = if cfg.suite == Suite::All { Suite::EACH.to_vec() } else { vec![cfg.suite] };
    for (k, suite) in suites.into_iter().enumerate() {
        let master = stream_seed(cfg.seed, 1000 + k as u64);
        match suite {
            Suite::Trace => report.push(trace_gate(cfg.cases, master, cfg.inject_fault)?),
            Suite::Swap => report.push(swap_gate(cfg.cases.min(500), master)?),
            Suite::Moments => report.checks.extend(moment_suite(cfg.n_atoms, master)?),
            Suite::TensorLemmas => report.checks.extend(tensor_lemma_suite(
                cfg.seeds, cfg.n_atoms, cfg.q, cfg.alpha, cfg.beta, cfg.tau, cfg.slack, master,
            )?),
            Suite::Drift => report.checks.extend(drift_suite(
                cfg.seeds,
                cfg.n_atoms,
                cfg.q,
                cfg.alpha,
                cfg.beta,
                cfg.horizon.max(cfg.dt()),
                cfg.dt(),
                cfg.slack,
                master,
            )?),
            Suite::Martingale => report.checks.extend(martingale_suite(
                cfg.family,
                cfg.d,
                cfg.n_atoms,
                cfg.q,
                cfg.paths,
                cfg.horizon,
                cfg.dt(),
                master,
            )?),
            Suite::Potential => report.checks.extend(potential_suite(
                cfg.family,
                cfg.d,
                cfg.n_atoms,
                cfg.q,
                cfg.alpha,
                cfg.beta,
                cfg.paths,
                cfg.horizon,
                cfg.dt(),
                master,
            )?),
            Suite::All => unreachable!("expanded above"),
        }
    }
    Ok(report)
}
