//! Extension of weights given on a union of dyadic top halves to weights on
//! the whole disc, and the converse restriction exponent search.

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::factor::{factor, NormMode, DEFAULT_TERMS};
use crate::lattice::{
    b1_constant, bp_constant, bp_constant_witness, maximal, maximal_values, osc_constants, reverse_holder, Cells, DyadicDomain, TreeWeight,
};

/// `(M_D w)^γ` together with its measured `B_1` constant and the bound `(2-γ)/(1-γ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerMaximal {
    pub weight: TreeWeight,
    pub b1_constant: f64,
    pub bound: f64,
}

pub fn power_maximal_b1(w: &TreeWeight, gamma: f64) -> Result<PowerMaximal> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(out_of_range(format!("γ = {gamma} not in (0,1)")));
    }
    let weight = maximal(w, None)?.powf(gamma)?;
    Ok(PowerMaximal { b1_constant: b1_constant(&weight, None)?, weight, bound: (2.0 - gamma) / (1.0 - gamma) })
}

/// Extended weight with correction factor and certificates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionResult {
    pub weight: TreeWeight,
    pub k: TreeWeight,
    pub p: f64,
    pub q: f64,
    pub delta: f64,
    /// `[w^q]_{B_p,D,Ω}` (or `B_1` when `p = 1`).
    pub input_constant: f64,
    pub input_l: f64,
    /// Certified bound for `[W]_{B_p,D}` (or `[W]_{B_1,D}`).
    pub m1: f64,
    /// Certified bound for `L_W`.
    pub m2: f64,
    /// Measured constants of `W` on the whole disc.
    pub measured_constant: f64,
    pub measured_l: f64,
    /// Largest relative gap between the defining formula and `w` on Ω-cells.
    pub agreement_residual: f64,
    /// Admissible window for `k` on Ω-cells and the observed range.
    pub k_window: Option<(f64, f64)>,
    pub k_range: (f64, f64),
}

impl ExtensionResult {
    pub fn violations(&self) -> Vec<String> {
        let slack = 1.0 + 1e-9;
        let mut v = Vec::new();
        if !(self.measured_constant <= self.m1 * slack) {
            v.push(format!("measured constant {} exceeds M1 = {}", self.measured_constant, self.m1));
        }
        if !(self.measured_l <= self.m2 * slack + 1e-12) {
            v.push(format!("measured L_W {} exceeds M2 = {}", self.measured_l, self.m2));
        }
        if let Some((lo, hi)) = self.k_window {
            let (klo, khi) = self.k_range;
            if klo < lo / slack || khi > hi * slack {
                v.push(format!("k range [{klo}, {khi}] leaves window [{lo}, {hi}]"));
            }
        }
        v
    }
}

fn check_extension_inputs(w: &TreeWeight, omega: &DyadicDomain, q: f64) -> Result<Cells> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(out_of_range(format!("q = {q} must exceed 1")));
    }
    Cells::for_weight(w, Some(omega))
}

/// `B_1` extension: `W = (k M_D(w^q χ_Ω))^{1/q}` with `k` forcing `W = w` on Ω.
pub fn extend_b1(w: &TreeWeight, omega: &DyadicDomain, q: f64) -> Result<ExtensionResult> {
    let cells = check_extension_inputs(w, omega, q)?;
    let wq = w.powf(q)?;
    let input_constant = b1_constant(&wq, Some(omega))?;
    if !input_constant.is_finite() {
        return Err(Error::Precondition("[w^q]_{B_1,D,Ω} is not finite".into()));
    }
    let input_l = osc_constants(w, Some(omega))?.1;
    let m = maximal_values(wq.values(), &cells);
    let n = m.len();
    let mut k = vec![1.0; n];
    let mut values = vec![0.0; n];
    let mut residual: f64 = 0.0;
    for h in 0..n {
        if cells.member[h] {
            k[h] = wq.values()[h] / m[h];
            let formula = (k[h] * m[h]).powf(1.0 / q);
            residual = residual.max((formula / w.values()[h] - 1.0).abs());
            values[h] = w.values()[h];
        } else {
            values[h] = m[h].powf(1.0 / q);
        }
    }
    let weight = TreeWeight::new(w.theta(), w.depth(), values)?;
    let k = TreeWeight::new(w.theta(), w.depth(), k)?;
    let (_, measured_l) = osc_constants(&weight, None)?;
    Ok(ExtensionResult {
        measured_constant: b1_constant(&weight, None)?,
        measured_l,
        k_range: range_on(&k, &cells),
        weight,
        k,
        p: 1.0,
        q,
        delta: 1.0 / q,
        input_constant,
        input_l,
        m1: (2.0 * q - 1.0) / (q - 1.0) * input_constant.powf(1.0 / q) * (3.0 * input_l).exp(),
        m2: (64.0 * input_constant).ln() / q + 3.0 * input_l,
        agreement_residual: residual,
        k_window: None,
    })
}

fn range_on(k: &TreeWeight, cells: &Cells) -> (f64, f64) {
    k.values().iter().zip(&cells.member).filter(|(_, m)| **m).fold((f64::INFINITY, 0.0f64), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)))
}

/// `B_p` extension through a restricted factorization of `w^{δq}`, `δ = (q+1)/(2q)`.
pub fn extend_bp(w: &TreeWeight, omega: &DyadicDomain, p: f64, q: f64) -> Result<ExtensionResult> {
    if p == 1.0 {
        return extend_b1(w, omega, q);
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(out_of_range(format!("p = {p} must be at least 1")));
    }
    if p > 2.0 {
        let sigma = w.powf(-1.0 / (p - 1.0))?;
        let inner = extend_bp(&sigma, omega, p / (p - 1.0), q)?;
        let cells = check_extension_inputs(w, omega, q)?;
        let values = (0..w.values().len())
            .map(|h| if cells.member[h] { w.values()[h] } else { inner.weight.values()[h].powf(-(p - 1.0)) })
            .collect();
        let weight = TreeWeight::new(w.theta(), w.depth(), values)?;
        let (_, measured_l) = osc_constants(&weight, None)?;
        return Ok(ExtensionResult {
            measured_constant: bp_constant(&weight, p, None)?,
            measured_l,
            weight,
            p,
            input_constant: bp_constant(&w.powf(q)?, p, Some(omega))?,
            input_l: osc_constants(w, Some(omega))?.1,
            m1: inner.m1.powf(p - 1.0),
            m2: inner.m2 * (p - 1.0),
            ..inner
        });
    }
    let cells = check_extension_inputs(w, omega, q)?;
    let wq = w.powf(q)?;
    let witness = bp_constant_witness(&wq, p, Some(omega))?;
    if !witness.value.is_finite() {
        return Err(Error::Precondition(format!("[w^q]_{{B_p,D,Ω}} fails at box (level {}, index {})", witness.level, witness.index)));
    }
    let input_l = osc_constants(w, Some(omega))?.1;
    let delta = (q + 1.0) / (2.0 * q);
    let s = 1.0 / (delta * q);
    let fac = factor(w, p, Some(omega), NormMode::Restricted { q, delta }, DEFAULT_TERMS)?;
    let m1 = maximal_values(fac.w1.values(), &cells);
    let m2 = maximal_values(fac.w2.values(), &cells);
    let v = w.powf(delta * q)?;
    let n = m1.len();
    let mut k = vec![1.0; n];
    let mut values = vec![0.0; n];
    let mut residual: f64 = 0.0;
    for h in 0..n {
        let base = m1[h] * m2[h].powf(1.0 - p);
        if cells.member[h] {
            k[h] = v.values()[h] / base;
            let formula = (k[h] * base).powf(s);
            residual = residual.max((formula / w.values()[h] - 1.0).abs());
            values[h] = w.values()[h];
        } else {
            values[h] = base.powf(s);
        }
    }
    let weight = TreeWeight::new(w.theta(), w.depth(), values)?;
    let k = TreeWeight::new(w.theta(), w.depth(), k)?;
    let lo = (4.0 * fac.c_w2).powf(1.0 - p) / fac.b1_w1;
    let hi = 4.0 * fac.c_w1 * fac.b1_w2.powf(p - 1.0);
    let spread = hi.max(1.0) / lo.min(1.0);
    let m1_bound = spread.powf(s) * ((2.0 - s) / (1.0 - s)).powf(p);
    let c_bound = (spread * 4f64.powf(p)).powf(s);
    let (_, measured_l) = osc_constants(&weight, None)?;
    Ok(ExtensionResult {
        measured_constant: bp_constant(&weight, p, None)?,
        measured_l,
        k_range: range_on(&k, &cells),
        weight,
        k,
        p,
        q,
        delta,
        input_constant: witness.value,
        input_l,
        m1: m1_bound,
        m2: 2.0 * c_bound.ln(),
        agreement_residual: residual,
        k_window: Some((lo, hi)),
    })
}

/// Exponent grid scanned by [`restriction_self_improve`].
pub fn q_grid() -> Vec<f64> {
    (1..=20).map(|i| 1.0 + 0.05 * i as f64).collect()
}

/// Reverse-Hölder ratio accepted as a working exponent.
pub const RH_ADMISSIBLE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfImprovement {
    pub q: f64,
    pub r1: f64,
    pub r2: f64,
    pub rh1: f64,
    pub rh2: f64,
    /// `[(W|_Ω)^q]_{B_p,D,Ω}`.
    pub restricted_constant: f64,
    /// `RH1^q RH2^{q(p-1)} [W]^q`.
    pub certificate: f64,
}

/// Finds `q > 1` with `[(W|_Ω)^q]_{B_p,D,Ω}` finite from the reverse-Hölder exponents of `W` and `W^{-1/(p-1)}`.
pub fn restriction_self_improve(w: &TreeWeight, omega: Option<&DyadicDomain>, p: f64) -> Result<SelfImprovement> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(out_of_range(format!("p = {p} must exceed 1")));
    }
    let sigma = w.powf(-1.0 / (p - 1.0))?;
    let grid = q_grid();
    let best_r = |v: &TreeWeight| -> Result<(f64, f64)> {
        let mut found = None;
        for &r in &grid {
            let rh = reverse_holder(v, r)?;
            if rh <= RH_ADMISSIBLE {
                found = Some((r, rh));
            }
        }
        found.ok_or_else(|| Error::Precondition("no reverse-Hölder exponent on the grid".into()))
    };
    let (r1, rh1) = best_r(w)?;
    let (r2, rh2) = best_r(&sigma)?;
    let bw = bp_constant(w, p, None)?;
    let q0 = r1.min(r2);
    for &q in grid.iter().rev().filter(|&&q| q <= q0 + 1e-12) {
        let restricted_constant = bp_constant(&w.powf(q)?, p, omega)?;
        let rh1q = reverse_holder(w, q)?;
        let rh2q = reverse_holder(&sigma, q)?;
        let certificate = rh1q.powf(q) * rh2q.powf(q * (p - 1.0)) * bw.powf(q);
        if restricted_constant.is_finite() && restricted_constant <= certificate * (1.0 + 1e-9) {
            return Ok(SelfImprovement { q, r1, r2, rh1, rh2, restricted_constant, certificate });
        }
    }
    Err(Error::Certificate("no grid exponent satisfies the reverse-Hölder certificate".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridNode;

    #[test]
    fn constant_weight_is_kept_on_omega_and_dominates_elsewhere() {
        let w = TreeWeight::constant(0.0, 5, 2.5).unwrap();
        let omega = DyadicDomain::new(0.0, [GridNode::new(0.0, 2, 1).unwrap(), GridNode::new(0.0, 3, 7).unwrap()]).unwrap();
        for p in [1.0, 2.0, 3.0] {
            let r = extend_bp(&w, &omega, p, 2.0).unwrap();
            for node in r.weight.nodes() {
                let v = r.weight.value(&node).unwrap();
                if omega.contains(&node) {
                    assert_eq!(v, 2.5);
                } else if p == 1.0 {
                    assert!(v <= 2.5 * (1.0 + 1e-12));
                }
            }
            assert!(r.violations().is_empty(), "{:?}", r.violations());
        }
        let full = DyadicDomain::new(0.0, w.nodes()).unwrap();
        let r = extend_b1(&w, &full, 2.0).unwrap();
        assert!(r.weight.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn gamma_half_bound_is_three() {
        let w = TreeWeight::constant(0.0, 3, 4.0).unwrap();
        let r = power_maximal_b1(&w, 0.5).unwrap();
        assert_eq!(r.bound, 3.0);
        assert!((r.b1_constant - 1.0).abs() < 1e-12);
        assert!(power_maximal_b1(&w, 1.0).is_err());
    }
}
