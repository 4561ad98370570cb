//! Closed-form lower bounds on the isoperimetric coefficient and the
//! constants that feed them.
//!
//! Bounds are reported as lower bounds on `ψ(p)` (equivalently on
//! `ψ(p) √‖A‖` for the dimension-only ones). The almost-constant bound is
//!
//! ```text
//! ψ(p) ≥ 1 / ([c ℓ (ln d + 1)]^{ℓ/2} d^{16/ℓ} √‖A‖)
//! ```
//!
//! and is evaluated in log space because the bracket overflows quickly in `ℓ`.
//! The universal constants `c` are not numeric in the underlying argument;
//! they are parameters here and every output echoes them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// `(α, β, ℓ, q, c, d)` for one level of the bound recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub ell: u32,
    pub q: u32,
    pub c: f64,
    pub d: f64,
}

impl BoundParams {
    /// Validates `α ≥ 1`, `β ∈ (0, ½]` and sets `q = ⌈1/β⌉ + 1`.
    pub fn new(d: f64, alpha: f64, beta: f64, ell: u32, c: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(Error::Precondition(format!("α must be at least 1, got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 0.5) {
            return Err(Error::Precondition(format!("β must lie in (0, 1/2], got {beta}")));
        }
        if ell == 0 || !(c > 0.0) || !(d >= 1.0) {
            return Err(Error::Precondition("need ℓ >= 1, c > 0, d >= 1".into()));
        }
        Ok(BoundParams { alpha, beta, ell, q: q_for_beta(beta), c, d })
    }
}

/// A bound evaluated at one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    pub name: &'static str,
    pub d: f64,
    pub value: f64,
    pub params: BoundParams,
}

/// `q = ⌈1/β⌉ + 1`, robust to `1/β` landing a rounding error above an integer.
pub fn q_for_beta(beta: f64) -> u32 {
    (1.0 / beta - 1e-12).ceil() as u32 + 1
}

fn require_spd(a: &Matrix) -> Result<()> {
    if !a.is_square() || !linalg::is_symmetric(a, 1e-12) || linalg::lambda_min(a) <= 0.0 {
        return Err(Error::Precondition("A must be symmetric positive definite".into()));
    }
    Ok(())
}

/// `ln 2 / √tr(A)`.
pub fn kls_original_bound(a: &Matrix) -> Result<f64> {
    require_spd(a)?;
    Ok(std::f64::consts::LN_2 / a.trace().sqrt())
}

/// `c_lv / tr(A²)^{1/4}`.
pub fn lee_vempala_bound(a: &Matrix, c_lv: f64) -> Result<f64> {
    require_spd(a)?;
    if !(c_lv > 0.0) {
        return Err(Error::Precondition(format!("constant must be positive, got {c_lv}")));
    }
    Ok(c_lv / (a * a).trace().powf(0.25))
}

/// Natural log of the almost-constant bound, given `ln d`.
pub fn main_theorem_log_bound(ln_d: f64, ell: u32, c: f64, spec_norm: f64) -> f64 {
    let l = ell as f64;
    -0.5 * l * (c * l * (ln_d + 1.0)).ln() - 16.0 / l * ln_d - 0.5 * spec_norm.ln()
}

/// `1 / ([c ℓ (ln d + 1)]^{ℓ/2} d^{16/ℓ} √‖A‖)`, evaluated in log space.
pub fn main_theorem_bound(d: f64, ell: u32, c: f64, spec_norm: f64) -> Result<f64> {
    if !(d >= 1.0) || ell == 0 || !(c > 0.0) || !(spec_norm > 0.0) {
        return Err(Error::Precondition("need d >= 1, ℓ >= 1, c > 0, ‖A‖ > 0".into()));
    }
    Ok(main_theorem_log_bound(d.ln(), ell, c, spec_norm).exp())
}

/// The prescribed `ℓ` and what a direct scan finds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllChoice {
    pub ln_d: f64,
    /// `⌈√(ln d / ln ln d)⌉`.
    pub ell_star: u32,
    /// `e` with bound `= d^{-e}` at `ℓ*`, `‖A‖ = 1`.
    pub exponent: f64,
    /// Maximizer of the bound over `ℓ ∈ [1, 10 ℓ*]`.
    pub scan_argmax: u32,
    pub scan_exponent: f64,
}

/// `⌈√(ln d / ln ln d)⌉` from `ln d`; needs `d ≥ 16`.
pub fn ell_star_from_ln(ln_d: f64) -> Result<u32> {
    if !(ln_d >= 16f64.ln() - 1e-12) {
        return Err(Error::Precondition(format!("optimal ℓ needs d >= 16, got ln d = {ln_d}")));
    }
    Ok((ln_d / ln_d.ln()).sqrt().ceil() as u32)
}

/// [`optimal_ell`] with the dimension given as `ln d`, for dimensions beyond `f64`.
pub fn optimal_ell_ln(ln_d: f64, c: f64) -> Result<EllChoice> {
    let ell_star = ell_star_from_ln(ln_d)?;
    let exponent = -main_theorem_log_bound(ln_d, ell_star, c, 1.0) / ln_d;
    let (scan_argmax, best) = (1..=10 * ell_star)
        .map(|l| (l, main_theorem_log_bound(ln_d, l, c, 1.0)))
        .fold((1, f64::NEG_INFINITY), |acc, (l, v)| if v > acc.1 { (l, v) } else { acc });
    Ok(EllChoice { ln_d, ell_star, exponent, scan_argmax, scan_exponent: -best / ln_d })
}

pub fn optimal_ell(d: f64, c: f64) -> Result<EllChoice> {
    optimal_ell_ln(d.ln(), c)
}

/// The sequences `α_ℓ`, `β_ℓ` and how they compare with their stated envelopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursionReport {
    pub c: f64,
    /// `ln α_ℓ` for `ℓ = 1..=ℓ_max` (index 0 is `ℓ = 1`).
    pub ln_alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Levels with `β_ℓ ∉ [1/(ℓ+1), 16/ℓ]`.
    pub beta_violations: Vec<u32>,
    /// Levels with `ln α_ℓ > (ℓ/2) ln(4c²ℓ)`.
    pub alpha_violations: Vec<u32>,
}

impl RecursionReport {
    pub fn passed(&self) -> bool {
        self.beta_violations.is_empty() && self.alpha_violations.is_empty()
    }

    pub fn alpha(&self, ell: u32) -> f64 {
        self.ln_alpha[ell as usize - 1].exp()
    }

    pub fn beta(&self, ell: u32) -> f64 {
        self.beta[ell as usize - 1]
    }
}

/// `α_{ℓ+1} = 2c α_ℓ β_ℓ^{-1/2}`, `β_{ℓ+1} = β_ℓ - β_ℓ²/16`, from `α_1 = 4`, `β_1 = ½`.
pub fn recursion_sequences(ell_max: u32, c: f64) -> Result<RecursionReport> {
    if ell_max == 0 || !(c > 0.0) {
        return Err(Error::Precondition("need ℓ_max >= 1 and c > 0".into()));
    }
    let mut ln_alpha = Vec::with_capacity(ell_max as usize);
    let mut beta = Vec::with_capacity(ell_max as usize);
    let (mut la, mut b) = (4f64.ln(), 0.5f64);
    for _ in 0..ell_max {
        ln_alpha.push(la);
        beta.push(b);
        la += (2.0 * c).ln() - 0.5 * b.ln();
        b -= b * b / 16.0;
    }
    let mut beta_violations = Vec::new();
    let mut alpha_violations = Vec::new();
    for ell in 1..=ell_max {
        let l = ell as f64;
        let (la, b) = (ln_alpha[ell as usize - 1], beta[ell as usize - 1]);
        if b < 1.0 / (l + 1.0) || b > 16.0 / l {
            beta_violations.push(ell);
        }
        if la > 0.5 * l * (4.0 * c * c * l).ln() {
            alpha_violations.push(ell);
        }
    }
    Ok(RecursionReport { c, ln_alpha, beta, beta_violations, alpha_violations })
}

/// `q`, `T_1` and `T_2` for the spectral-norm control argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeConstants {
    pub q: u32,
    pub t1: f64,
    pub t2: f64,
    /// `T_2 · 1310720 q α² ln(d) d^{2β - β/(4q)} - 1`.
    pub identity_residual: f64,
}

/// `T_1 = 1/(32768 q α² ln d d^{2β})` and `T_2 = d^{β/(4q)} T_1 / 40`.
pub fn time_constants(d: f64, alpha: f64, beta: f64) -> Result<TimeConstants> {
    if !(d >= 3.0) {
        return Err(Error::Precondition(format!("time constants need d >= 3, got {d}; use the trace bound for d = 1, 2")));
    }
    let p = BoundParams::new(d, alpha, beta, 1, 1.0)?;
    let q = p.q as f64;
    let t1 = 1.0 / (32768.0 * q * alpha * alpha * d.ln() * d.powf(2.0 * beta));
    let t2 = d.powf(beta / (4.0 * q)) / 40.0 * t1;
    let closed = 1310720.0 * q * alpha * alpha * d.ln() * d.powf(2.0 * beta - beta / (4.0 * q));
    Ok(TimeConstants { q: p.q, t1, t2, identity_residual: t2 * closed - 1.0 })
}

/// One row of the comparison table, isotropic `‖A‖ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub d: f64,
    pub kls_original: f64,
    pub lee_vempala: f64,
    pub main_thm: f64,
    pub ell_star: u32,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub c: f64,
    pub c_lv: f64,
    pub rows: Vec<TableRow>,
    /// First listed `d` at which the almost-constant bound beats the `d^{-1/4}` bound.
    pub first_row_beating_lee_vempala: Option<usize>,
    /// Smallest `ln d` (to bisection accuracy) at which it does so.
    pub crossover_ln_d: Option<f64>,
    /// `ℓ*` at the crossover.
    pub crossover_ell: Option<u32>,
}

fn ell_for_table(ln_d: f64) -> u32 {
    ell_star_from_ln(ln_d).unwrap_or(1)
}

// log(main at ℓ*) - log(Lee-Vempala), as functions of ln d.
fn advantage(ln_d: f64, c: f64, c_lv: f64) -> f64 {
    main_theorem_log_bound(ln_d, ell_for_table(ln_d), c, 1.0) - (c_lv.ln() - 0.25 * ln_d)
}

/// Smallest `ln d` in `[ln 16, 1e12]` where the almost-constant bound beats `c_lv d^{-1/4}`.
pub fn crossover_ln_d(c: f64, c_lv: f64) -> Option<f64> {
    let mut lo = 16f64.ln();
    if advantage(lo, c, c_lv) > 0.0 {
        return Some(lo);
    }
    let mut hi = lo;
    while advantage(hi, c, c_lv) <= 0.0 {
        lo = hi;
        hi *= 1.05;
        if hi > 1e12 {
            return None;
        }
    }
    // ℓ* is piecewise constant, so the advantage is continuous between jumps;
    // bisection brackets the first sign change within the scan cell.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if advantage(mid, c, c_lv) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Per dimension: `ln 2/√d`, `c_lv d^{-1/4}` and the almost-constant bound at `ℓ*`.
///
/// Dimensions below 16 use `ℓ = 1`.
pub fn comparison_table(d_list: &[f64], c: f64, c_lv: f64) -> Result<ComparisonTable> {
    if d_list.is_empty() {
        return Err(Error::Precondition("dimension list is empty".into()));
    }
    if !(c > 0.0 && c_lv > 0.0) {
        return Err(Error::Precondition("constants must be positive".into()));
    }
    let rows: Vec<TableRow> = d_list
        .iter()
        .map(|&d| {
            if !(d >= 1.0) {
                return Err(Error::Precondition(format!("dimension must be at least 1, got {d}")));
            }
            let ln_d = d.ln();
            let ell = ell_for_table(ln_d);
            let log_main = main_theorem_log_bound(ln_d, ell, c, 1.0);
            let exponent = if ln_d > 0.0 { -log_main / ln_d } else { 0.0 };
            Ok(TableRow {
                d,
                kls_original: std::f64::consts::LN_2 / d.sqrt(),
                lee_vempala: c_lv * d.powf(-0.25),
                main_thm: log_main.exp(),
                ell_star: ell,
                exponent,
            })
        })
        .collect::<Result<_>>()?;
    let first_row_beating_lee_vempala = rows.iter().position(|r| r.main_thm > r.lee_vempala);
    let crossover = crossover_ln_d(c, c_lv);
    Ok(ComparisonTable {
        c,
        c_lv,
        rows,
        first_row_beating_lee_vempala,
        crossover_ln_d: crossover,
        crossover_ell: crossover.map(ell_for_table),
    })
}

impl ComparisonTable {
    /// CSV with header `d,kls_original,lee_vempala,main_thm,ell_star,exponent`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["d", "kls_original", "lee_vempala", "main_thm", "ell_star", "exponent"])?;
        for r in &self.rows {
            w.write_record([
                format!("{:.16e}", r.d),
                format!("{:.16e}", r.kls_original),
                format!("{:.16e}", r.lee_vempala),
                format!("{:.16e}", r.main_thm),
                r.ell_star.to_string(),
                format!("{:.16e}", r.exponent),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> Matrix {
        Matrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn original_bound_values() {
        assert_relative_eq!(kls_original_bound(&Matrix::identity(4, 4)).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(kls_original_bound(&Matrix::identity(1, 1)).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(kls_original_bound(&diag(&[4.0])).unwrap(), 0.5 * 2f64.ln(), epsilon = 1e-15);
        assert!(kls_original_bound(&diag(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn lee_vempala_values() {
        assert_relative_eq!(lee_vempala_bound(&Matrix::identity(16, 16), 1.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(lee_vempala_bound(&Matrix::identity(1, 1), 1.0).unwrap(), 1.0);
        assert_relative_eq!(lee_vempala_bound(&diag(&[2.0, 2.0]), 1.0).unwrap(), 8f64.powf(-0.25), epsilon = 1e-15);
    }

    #[test]
    fn main_bound_values() {
        assert_relative_eq!(main_theorem_bound(1.0, 1, 1.0, 1.0).unwrap(), 1.0);
        let d: f64 = 1e6;
        let expected = (-1.5 * (3.0 * (d.ln() + 1.0)).ln() - 16.0 / 3.0 * d.ln()).exp();
        assert_relative_eq!(main_theorem_bound(d, 3, 1.0, 1.0).unwrap(), expected, max_relative = 1e-12);
        let naive = 1.0 / ((3.0 * (d.ln() + 1.0)).powf(1.5) * d.powf(16.0 / 3.0));
        assert_relative_eq!(main_theorem_bound(d, 3, 1.0, 1.0).unwrap(), naive, max_relative = 1e-12);
        let ratio = main_theorem_bound(d, 3, 1.0, 4.0).unwrap() / main_theorem_bound(d, 3, 1.0, 1.0).unwrap();
        assert_relative_eq!(ratio, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ell_star_examples() {
        assert_eq!(optimal_ell(1e6, 1.0).unwrap().ell_star, 3);
        assert_eq!(optimal_ell_ln(100.0, 1.0).unwrap().ell_star, 5);
        assert!(optimal_ell(15.0, 1.0).is_err());
    }

    #[test]
    fn first_recursion_step() {
        let r = recursion_sequences(2, 1.0).unwrap();
        assert_eq!(r.beta(2), 31.0 / 64.0);
        assert_relative_eq!(r.alpha(2), 8.0 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn time_constant_values() {
        let tc = time_constants(100.0, 4.0, 0.5).unwrap();
        assert_eq!(tc.q, 3);
        assert_relative_eq!(tc.t1, 1.0 / (32768.0 * 3.0 * 16.0 * 100f64.ln() * 100.0), max_relative = 1e-15);
        assert_relative_eq!(tc.t1, 1.381e-9, max_relative = 1e-3);
        assert_relative_eq!(tc.t2, 4.18e-11, max_relative = 1e-3);
        assert!(tc.identity_residual.abs() <= 1e-12);
        assert!(time_constants(2.0, 4.0, 0.5).is_err());
    }

    #[test]
    fn q_rule() {
        assert_eq!(q_for_beta(0.5), 3);
        assert_eq!(q_for_beta(1.0 / 3.0), 4);
        assert_eq!(q_for_beta(0.3), 5);
    }

    #[test]
    fn table_small_d() {
        let t = comparison_table(&[16.0], 1.0, 1.0).unwrap();
        assert_relative_eq!(t.rows[0].kls_original, 2f64.ln() / 4.0, epsilon = 1e-15);
        assert_relative_eq!(t.rows[0].lee_vempala, 0.5, epsilon = 1e-15);
        assert!(comparison_table(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn crossover_is_finite() {
        let x = crossover_ln_d(1.0, 1.0).unwrap();
        assert!(advantage(x, 1.0, 1.0) > 0.0);
        assert!(advantage(0.9 * x, 1.0, 1.0) <= 0.0);
    }
}
