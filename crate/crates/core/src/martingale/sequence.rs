//! Point sequences on tree addresses, Carleson sums and the trace quantities.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DyadicInterval, Martingale, MAX_INTERVAL_LEVEL};
use crate::error::{out_of_range, Error, Result};

/// `(ρ², 1-ρ²)` between the node points of two intervals.
///
/// Node points sit at modulus `1-|I|` over the center of `I`; both quantities are
/// formed from `1-|z|` and the angular gap so that deep points keep full precision.
pub fn rho_terms(a: &DyadicInterval, b: &DyadicInterval) -> (f64, f64) {
    let (la, lb) = (a.length(), b.length());
    // centers (2j+1)/2^(level+1), compared on a common scale 2^(L+1)
    let top = a.level().max(b.level()) + 1;
    let ca = (2 * a.index() + 1) << (top - a.level() - 1);
    let cb = (2 * b.index() + 1) << (top - b.level() - 1);
    let modulus = 1u128 << top;
    let d = ca.abs_diff(cb);
    let gap = d.min(modulus - d) as f64 / modulus as f64;
    let c = (1.0 - la) * (1.0 - lb);
    let e = la + lb - la * lb;
    let s = (std::f64::consts::PI * gap).sin();
    let chord = 4.0 * c * s * s;
    let den = e * e + chord;
    let rho_sq = ((la - lb).powi(2) + chord) / den;
    (rho_sq, a.mass() * b.mass() / den)
}

/// One point of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeqEntry {
    pub address: DyadicInterval,
    #[serde(default)]
    pub generation: u32,
}

/// A sequence of node points, at most one per top half.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeq")]
pub struct PointSeq {
    pub grid_theta: f64,
    entries: Vec<SeqEntry>,
}

#[derive(Deserialize)]
struct RawSeq {
    grid_theta: f64,
    entries: Vec<SeqEntry>,
}

impl TryFrom<RawSeq> for PointSeq {
    type Error = Error;
    fn try_from(raw: RawSeq) -> Result<Self> {
        Self::new(raw.grid_theta, raw.entries)
    }
}

impl PointSeq {
    pub fn new(grid_theta: f64, entries: Vec<SeqEntry>) -> Result<Self> {
        if !grid_theta.is_finite() {
            return Err(out_of_range(format!("grid_theta = {grid_theta}")));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.address) {
                return Err(Error::Malformed(format!("address {:?} appears twice", e.address.address())));
            }
        }
        Ok(Self { grid_theta: grid_theta.rem_euclid(1.0), entries })
    }

    pub fn entries(&self) -> &[SeqEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.address.mass()).sum()
    }

    /// `Σ (1-|z|²)` per generation, indexed by generation.
    pub fn generation_masses(&self) -> Vec<f64> {
        let top = self.entries.iter().map(|e| e.generation).max().map_or(0, |g| g as usize + 1);
        let mut out = vec![0.0; top];
        for e in &self.entries {
            out[e.generation as usize] += e.address.mass();
        }
        out
    }

    /// Node point in the disc (angle shifted by the grid).
    pub fn point(&self, i: usize) -> Result<crate::geometry::DiscPoint> {
        let a = &self.entries[i].address;
        if a.level() == 0 {
            return Ok(crate::geometry::DiscPoint::origin());
        }
        let center = (a.index() as f64 + 0.5) * a.length();
        crate::geometry::DiscPoint::from_polar(1.0 - a.length(), self.grid_theta + center)
    }
}

/// The points, all their ancestors and the origin.
pub fn default_probes(seq: &PointSeq) -> Vec<DyadicInterval> {
    let mut set = BTreeSet::from([DyadicInterval::root()]);
    for e in seq.entries() {
        let mut node = Some(e.address);
        while let Some(n) = node {
            if !set.insert(n) {
                break;
            }
            node = n.parent();
        }
    }
    set.into_iter().collect()
}

/// `{1 - 2^-m : m = 1..=depth}`, stopping where `1 - 2^-m` rounds to 1.
pub fn default_r_grid(depth: u32) -> Vec<f64> {
    (1..=depth).map(|m| 1.0 - (-(m as f64)).exp2()).take_while(|r| *r < 1.0).collect()
}

/// Carleson sums of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `sup_z Σ_n (1-ρ²(z,z_n))` over the probes.
    pub sup: f64,
    pub argmax: DyadicInterval,
    /// `sup_I μ_Z(S(I)) / |I|` over dyadic `I`.
    pub box_sup: f64,
    pub box_argmax: DyadicInterval,
}

pub fn carleson_sup(seq: &PointSeq, probes: &[DyadicInterval]) -> Result<CarlesonReport> {
    if probes.is_empty() {
        return Err(Error::EmptyDomain("no probe points".into()));
    }
    let (sup, argmax) = probes
        .par_iter()
        .map(|z| {
            let s: f64 = seq.entries().iter().map(|e| rho_terms(z, &e.address).1).sum();
            (s, *z)
        })
        .reduce(|| (f64::NEG_INFINITY, DyadicInterval::root()), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut boxes: BTreeMap<DyadicInterval, f64> = BTreeMap::new();
    for e in seq.entries() {
        let m = e.address.mass();
        let mut node = Some(e.address);
        while let Some(n) = node {
            *boxes.entry(n).or_insert(0.0) += m;
            node = n.parent();
        }
    }
    let (box_argmax, box_sup) =
        boxes.iter().map(|(n, s)| (*n, s / n.length())).fold((DyadicInterval::root(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok(CarlesonReport { sup, argmax, box_sup, box_argmax })
}

fn point_values(seq: &PointSeq, m: &Martingale) -> Result<Vec<f64>> {
    seq.entries().iter().map(|e| m.value(&e.address)).collect()
}

/// Maximizer of the trace sum of condition (i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSup {
    pub value: f64,
    pub probe: DyadicInterval,
    pub r: f64,
}

/// `sup_{z,r} Σ_{ρ(z,z_n)<r} exp(λ|b(z_n)-b(z)|²/(-log(1-r²))) (1-ρ²(z,z_n))`.
pub fn trace_sup_i(seq: &PointSeq, m: &Martingale, lambda: f64, probes: &[DyadicInterval], r_grid: &[f64]) -> Result<TraceSup> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(out_of_range(format!("λ = {lambda} must be finite and nonnegative")));
    }
    if let Some(r) = r_grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(out_of_range(format!("radius {r} not in (0,1)")));
    }
    if probes.is_empty() || r_grid.is_empty() {
        return Err(Error::EmptyDomain("no probes or radii".into()));
    }
    let values = point_values(seq, m)?;
    // 1 - r² and -log(1 - r²) per radius
    let radii: Vec<(f64, f64, f64)> = r_grid.iter().map(|&r| (r, (1.0 - r) * (1.0 + r), -((1.0 - r) * (1.0 + r)).ln())).collect();
    let best = probes
        .par_iter()
        .map(|z| -> Result<TraceSup> {
            let bz = m.value(z)?;
            let mut terms: Vec<(f64, f64)> =
                seq.entries().iter().zip(&values).map(|(e, b)| (rho_terms(z, &e.address).1, (b - bz).powi(2))).collect();
            // nearest first
            terms.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut best = TraceSup { value: f64::NEG_INFINITY, probe: *z, r: radii[0].0 };
            for &(r, one_minus_r2, log_r) in &radii {
                let s: f64 = terms.iter().take_while(|t| t.0 > one_minus_r2).map(|(mass, d2)| (lambda * d2 / log_r).exp() * mass).sum();
                if s > best.value {
                    best = TraceSup { value: s, probe: *z, r };
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(best
        .into_iter()
        .fold(None::<TraceSup>, |acc, t| match acc {
            Some(a) if a.value >= t.value => Some(a),
            _ => Some(t),
        })
        .expect("nonempty probes"))
}

/// Weak-`L¹` norm of the condition (ii) sequence at one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakL1 {
    pub norm: f64,
    /// Points equal to the probe (where `-log(1-ρ²)` vanishes), left out.
    pub excluded: usize,
}

/// `sup_t t #{n : a_n > t}` with `a_n = exp(λ|b(z_n)-b(z)|²/(-log(1-ρ²))) (1-ρ²)`, as `max_i i a_(i)`.
pub fn trace_weak_l1(seq: &PointSeq, m: &Martingale, lambda: f64, z: &DyadicInterval) -> Result<WeakL1> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(out_of_range(format!("λ = {lambda} must be finite and nonnegative")));
    }
    if z.level() > MAX_INTERVAL_LEVEL {
        return Err(out_of_range("probe too deep"));
    }
    let bz = m.value(z)?;
    let mut excluded = 0;
    let mut a = Vec::with_capacity(seq.len());
    for e in seq.entries() {
        if e.address == *z {
            excluded += 1;
            continue;
        }
        let (rho_sq, mass) = rho_terms(z, &e.address);
        let log = -(-rho_sq).ln_1p();
        let d2 = (m.value(&e.address)? - bz).powi(2);
        a.push((lambda * d2 / log).exp() * mass);
    }
    a.sort_by(|x, y| y.total_cmp(x));
    let norm = a.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).fold(0.0, f64::max);
    Ok(WeakL1 { norm, excluded })
}

/// λ-dependent trace quantities of a sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub lambda: f64,
    pub sup_i: TraceSup,
    /// Largest weak-`L¹` norm over the probes.
    pub weak_l1: f64,
    pub weak_l1_probe: DyadicInterval,
    /// `t_j` per generation, when thresholds are known.
    pub divergence: Option<Vec<f64>>,
}

impl TraceReport {
    pub fn new(
        seq: &PointSeq,
        m: &Martingale,
        lambda: f64,
        probes: &[DyadicInterval],
        r_grid: &[f64],
        thresholds: Option<&[f64]>,
    ) -> Result<Self> {
        let sup_i = trace_sup_i(seq, m, lambda, probes, r_grid)?;
        let weak = probes.par_iter().map(|z| trace_weak_l1(seq, m, lambda, z).map(|w| (w.norm, *z))).collect::<Result<Vec<_>>>()?;
        let (weak_l1, weak_l1_probe) = weak.into_iter().fold((0.0, DyadicInterval::root()), |a, b| if b.0 > a.0 { b } else { a });
        let divergence = thresholds.map(|s| super::divergence_terms(seq, s, lambda)).transpose()?;
        Ok(Self { lambda, sup_i, weak_l1, weak_l1_probe, divergence })
    }
}
