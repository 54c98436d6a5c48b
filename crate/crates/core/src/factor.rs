//! Constructive factorization `w = w₁ w₂^{1-p}` into `B_1` weights through the
//! iteration of the auxiliary operator `S`.

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::lattice::{b1_constant, bp_constant, maximal_values, osc_constants, Cells, DyadicDomain, TreeWeight};

/// Default number of series terms.
pub const DEFAULT_TERMS: usize = 60;

const FIXED_POINT_TOL: f64 = 1e-9;

/// Which analytic bound is used for the norm of `S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NormMode {
    /// Ω is the whole disc; Lerner-type bounds in terms of `[w]_{B_p,D}`.
    FullDisc,
    /// The engine runs on `w^{δq}` with bounds in terms of `[w^q]_{B_p,D,Ω}`.
    Restricted { q: f64, delta: f64 },
}

/// `S(f) = M_{D,Ω}(f w)/w + M_{D,Ω}(f^{1/(p-1)})^{p-1}`.
pub fn op_s(f: &TreeWeight, w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>) -> Result<TreeWeight> {
    check_p(p)?;
    f.check_same_grid(w)?;
    let cells = Cells::for_weight(w, omega)?;
    Ok(TreeWeight::from_raw(w.theta(), w.depth(), apply_s(f.values(), w.values(), p, &cells)))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(out_of_range(format!("the operator S needs p in (1,2], got {p}")));
    }
    Ok(())
}

fn apply_s(f: &[f64], w: &[f64], p: f64, cells: &Cells) -> Vec<f64> {
    let fw: Vec<f64> = f.iter().zip(w).map(|(a, b)| a * b).collect();
    let fr: Vec<f64> = f.iter().map(|a| a.powf(1.0 / (p - 1.0))).collect();
    let m1 = maximal_values(&fw, cells);
    let m2 = maximal_values(&fr, cells);
    (0..f.len()).map(|h| m1[h] / w[h] + m2[h].powf(p - 1.0)).collect()
}

/// `‖f‖_{L^{p'}(Ω, w)}` with `p' = p/(p-1)`.
pub fn dual_norm(f: &TreeWeight, w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>) -> Result<f64> {
    f.check_same_grid(w)?;
    let cells = Cells::for_weight(w, omega)?;
    Ok(weighted_norm(f.values(), w.values(), p / (p - 1.0), &cells))
}

fn weighted_norm(f: &[f64], w: &[f64], e: f64, cells: &Cells) -> f64 {
    let s: f64 = (0..f.len()).filter(|&h| cells.member[h]).map(|h| f[h].abs().powf(e) * w[h] * cells.area[h]).sum();
    s.powf(1.0 / e)
}

/// Lerner-type bound `4 (p²/(p-1))^{1/p} b^{1/(p-1)}` for the maximal operator on `L^p(w)`.
pub fn lerner_bound(p: f64, bp: f64) -> f64 {
    4.0 * (p * p / (p - 1.0)).powf(1.0 / p) * bp.powf(1.0 / (p - 1.0))
}

/// Upper bound for the norm of `S` on `L^{p/(p-1)}(Ω, v)`, where `v = w` in
/// full-disc mode and `v = w^{δq}` in restricted mode.
pub fn s_norm_bound(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>, mode: NormMode) -> Result<f64> {
    check_p(p)?;
    match mode {
        NormMode::FullDisc => {
            if omega.is_some() {
                return Err(Error::Precondition("full-disc bound requires Ω = D".into()));
            }
            let b = bp_constant(w, p, None)?;
            if !b.is_finite() {
                return Err(Error::Precondition("[w]_{B_p,D} is not finite".into()));
            }
            let pd = p / (p - 1.0);
            // [σ]_{B_{p'}} = [w]^{1/(p-1)}
            let on_sigma = lerner_bound(pd, b.powf(1.0 / (p - 1.0)));
            let on_w = lerner_bound(p, b);
            Ok(on_sigma + on_w.powf(p - 1.0))
        }
        NormMode::Restricted { q, delta } => {
            if !(q > 1.0) {
                return Err(Error::Precondition(format!("restricted mode needs q > 1, got {q}")));
            }
            if !(delta > 1.0 / q && delta < 1.0) {
                return Err(Error::Precondition(format!("restricted mode needs δ in (1/q, 1), got {delta}")));
            }
            let b = bp_constant(&w.powf(q)?, p, omega)?;
            if !b.is_finite() {
                return Err(Error::Precondition("[w^q]_{B_p,D,Ω} is not finite".into()));
            }
            let (on_w, on_sigma) = restricted_bounds(p, delta, b);
            Ok(on_sigma + on_w.powf(p - 1.0))
        }
    }
}

/// Interpolation bounds for `M_{D,Ω}` on `L^p(w^{δq})` and on `L^{p'}(w^{-δq/(p-1)})`.
pub fn restricted_bounds(p: f64, delta: f64, wq_constant: f64) -> (f64, f64) {
    // the weak-type constants enter through b ≥ 1
    let b = wq_constant.max(1.0);
    let on_w = 2.0 * (p / ((p - 1.0) * (1.0 - delta))).powf(1.0 / p) * b.powf(delta / (delta * p + 1.0 - delta));
    let on_sigma = 2.0 * (p / (1.0 - delta)).powf((p - 1.0) / p) * b.powf(delta / (p + delta - 1.0));
    (on_w, on_sigma)
}

/// The factors with their certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizationResult {
    pub p: f64,
    pub w1: TreeWeight,
    pub w2: TreeWeight,
    /// Bound for `‖S‖` of the problem that was actually iterated (on `w^{-1/(p-1)}` when `p > 2`).
    pub s_norm_bound: f64,
    pub iterations: usize,
    pub tail_bound: f64,
    /// Largest ratio `S(f) / (2‖S‖ f)` over Ω-cells.
    pub fixed_point_ratio: f64,
    pub reconstruction_residual: f64,
    pub b1_w1: f64,
    pub b1_w2: f64,
    pub c_w: f64,
    pub c_w1: f64,
    pub c_w2: f64,
    /// Bounds the theorem asserts for `[w₁]` and `[w₂]^{p-1}`.
    pub b1_w1_bound: f64,
    pub b1_w2_bound: f64,
    pub c_w1_bound: f64,
    pub c_w2_bound: f64,
}

impl FactorizationResult {
    /// Every certificate inequality of the theorem, with a relative slack for rounding.
    pub fn violations(&self) -> Vec<String> {
        let slack = 1.0 + 1e-9;
        let mut v = Vec::new();
        let mut check = |name: &str, value: f64, bound: f64| {
            if !(value <= bound * slack) {
                v.push(format!("{name} = {value} exceeds {bound}"));
            }
        };
        check("[w1]_B1", self.b1_w1, self.b1_w1_bound);
        check("[w2]_B1^(p-1)", self.b1_w2.powf(self.p - 1.0), self.b1_w2_bound);
        check("C_w1", self.c_w1, self.c_w1_bound);
        check("C_w2", self.c_w2, self.c_w2_bound);
        check("S(f)/(2|S| f)", self.fixed_point_ratio, 1.0 + FIXED_POINT_TOL);
        if !(self.reconstruction_residual <= 1e-10) {
            v.push(format!("reconstruction residual {}", self.reconstruction_residual));
        }
        v
    }
}

struct Series {
    f: Vec<f64>,
    ratio: f64,
    tail: f64,
}

fn run_series(w: &[f64], p: f64, cells: &Cells, bound: f64, terms: usize) -> Series {
    let n = w.len();
    let u = vec![1.0; n];
    let mut f = vec![0.0; n];
    let mut term = u.clone();
    for k in 0..terms {
        for h in 0..n {
            f[h] += term[h];
        }
        if k + 1 < terms {
            term = apply_s(&term, w, p, cells).into_iter().map(|v| v / (2.0 * bound)).collect();
        }
    }
    let sf = apply_s(&f, w, p, cells);
    let ratio = (0..n).filter(|&h| cells.member[h]).map(|h| sf[h] / (2.0 * bound * f[h])).fold(0.0, f64::max);
    let u_norm = weighted_norm(&u, w, p / (p - 1.0), cells);
    Series { f, ratio, tail: u_norm * 2f64.powi(1 - terms as i32) }
}

/// Runs the series `f = Σ_{k<K} S^k(1)/(2B)^k` with a caller-supplied bound `B ≥ ‖S‖`
/// and returns the factors `w₁ = f w`, `w₂ = f^{1/(p-1)}`.
pub fn rdf_factor(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>, bound: f64, terms: usize) -> Result<FactorizationResult> {
    check_p(p)?;
    if !(bound > 0.0 && bound.is_finite()) {
        return Err(out_of_range(format!("norm bound {bound} must be positive and finite")));
    }
    if terms == 0 {
        return Err(out_of_range("at least one series term is needed"));
    }
    let cells = Cells::for_weight(w, omega)?;
    let series = run_series(w.values(), p, &cells, bound, terms);
    if !(series.ratio <= 1.0 + FIXED_POINT_TOL) {
        return Err(Error::NonConvergence(format!("S(f) exceeds 2B f by factor {}; the bound B = {bound} is too small", series.ratio)));
    }
    let w1 = TreeWeight::new(w.theta(), w.depth(), series.f.iter().zip(w.values()).map(|(f, v)| f * v).collect())?;
    let w2 = TreeWeight::new(w.theta(), w.depth(), series.f.iter().map(|f| f.powf(1.0 / (p - 1.0))).collect())?;
    let c_w = osc_constants(w, omega)?.0;
    finish(p, w, w1, w2, omega, bound, terms, series, c_w, 2.0 * bound, 2.0 * bound, 4.0 * c_w * c_w, (4.0 * c_w).powf(1.0 / (p - 1.0)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: f64,
    w: &TreeWeight,
    w1: TreeWeight,
    w2: TreeWeight,
    omega: Option<&DyadicDomain>,
    bound: f64,
    terms: usize,
    series: Series,
    c_w: f64,
    b1_w1_bound: f64,
    b1_w2_bound: f64,
    c_w1_bound: f64,
    c_w2_bound: f64,
) -> Result<FactorizationResult> {
    let reconstruction_residual =
        w1.values().iter().zip(w2.values()).zip(w.values()).map(|((a, b), v)| ((a * b.powf(1.0 - p) - v) / v).abs()).fold(0.0, f64::max);
    Ok(FactorizationResult {
        p,
        b1_w1: b1_constant(&w1, omega)?,
        b1_w2: b1_constant(&w2, omega)?,
        c_w,
        c_w1: osc_constants(&w1, omega)?.0,
        c_w2: osc_constants(&w2, omega)?.0,
        w1,
        w2,
        s_norm_bound: bound,
        iterations: terms,
        tail_bound: series.tail,
        fixed_point_ratio: series.ratio,
        reconstruction_residual,
        b1_w1_bound,
        b1_w2_bound,
        c_w1_bound,
        c_w2_bound,
    })
}

/// Factorization for any `p > 1`; for `p > 2` the dual weight `w^{-1/(p-1)}` is
/// factored and the factors are swapped.
pub fn factor(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>, mode: NormMode, terms: usize) -> Result<FactorizationResult> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(out_of_range(format!("p = {p} must exceed 1")));
    }
    if p <= 2.0 {
        let target = match mode {
            NormMode::FullDisc => w.clone(),
            NormMode::Restricted { q, delta } => w.powf(delta * q)?,
        };
        let bound = s_norm_bound(w, p, omega, mode)?;
        return rdf_factor(&target, p, omega, bound, terms);
    }
    let pd = p / (p - 1.0);
    let sigma = w.powf(-1.0 / (p - 1.0))?;
    let inner = factor(&sigma, pd, omega, mode, terms)?;
    let target = match mode {
        NormMode::FullDisc => w.clone(),
        NormMode::Restricted { q, delta } => w.powf(delta * q)?,
    };
    // σ = s₁ s₂^{1-p'} gives w = s₂ s₁^{1-p}
    let w1 = inner.w2.clone();
    let w2 = inner.w1.clone();
    let two_b = 2.0 * inner.s_norm_bound;
    let c_sigma = inner.c_w;
    let series = Series { f: Vec::new(), ratio: inner.fixed_point_ratio, tail: inner.tail_bound };
    let c_target = osc_constants(&target, omega)?.0;
    finish(
        p,
        &target,
        w1,
        w2,
        omega,
        inner.s_norm_bound,
        terms,
        series,
        c_target,
        two_b.powf(p - 1.0),
        two_b.powf(p - 1.0),
        (4.0 * c_sigma).powf(p - 1.0),
        4.0 * c_sigma * c_sigma,
    )
}

/// Result of the full-disc factorization of a weight of bounded hyperbolic oscillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhoFactorization {
    pub result: FactorizationResult,
    pub l_w: f64,
    pub l_w1: f64,
    pub l_w2: f64,
}

/// Factorization on the whole disc, with oscillation constants of both factors.
pub fn factor_bho_full(w: &TreeWeight, p: f64) -> Result<BhoFactorization> {
    let result = factor(w, p, None, NormMode::FullDisc, DEFAULT_TERMS)?;
    let l_w = osc_constants(w, None)?.1;
    let l_w1 = osc_constants(&result.w1, None)?.1;
    let l_w2 = osc_constants(&result.w2, None)?.1;
    Ok(BhoFactorization { result, l_w, l_w1, l_w2 })
}
