//! Per-θ restriction and extension, and geometric averaging over θ.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::region::{rect_nodes, region_area, region_pieces, top_band, PolarRect};
use super::{box_nodes, continuous_bp_constant, ArcFamily, ContinuousDomain, Resolution, SampledWeight};
use crate::error::{Error, Result};
use crate::extend::extend_bp;
use crate::factor::factor_bho_full;
use crate::geometry::{dyadic_length, top_half_level, DiscPoint, GridNode, UnitArc};
use crate::lattice::{osc_constants, DyadicDomain, TreeWeight};

/// Fraction of `A(T(I))` that Ω must fill for `I` to be a good node.
pub const GOOD_FRACTION: f64 = 1.0 / 18.0;

fn node_band(node: &GridNode) -> (f64, f64) {
    let l = node.length();
    (1.0 - l, 1.0 - l / 2.0)
}

/// Grid nodes (levels `<= depth`) whose top half meets `T(g)` in positive area.
fn nodes_meeting(theta: f64, g: &UnitArc, depth: u32) -> Vec<GridNode> {
    let (a, b) = top_band(g);
    let mut out = Vec::new();
    for level in 0..=depth {
        let l = dyadic_length(level);
        let (lo, hi) = (1.0 - l, 1.0 - l / 2.0);
        if !(lo < b && hi > a) {
            continue;
        }
        let n = 1u64 << level;
        let first = GridNode::containing_angle(theta, g.start(), level).index();
        let count = ((g.length() * n as f64).ceil() as u64 + 1).min(n);
        for step in 0..count {
            let node = GridNode::new(theta, level, (first + step) % n).expect("index below 2^level");
            if node.arc().overlaps(g) && !out.contains(&node) {
                out.push(node);
            }
        }
    }
    out
}

fn check_depth(omega: &ContinuousDomain, depth: u32) -> Result<()> {
    let shortest = omega.generators().iter().map(|g| g.length()).fold(1.0, f64::min);
    if shortest < dyadic_length(depth) {
        return Err(Error::Precondition(format!("generator of length {shortest} needs a tree deeper than {depth}")));
    }
    Ok(())
}

/// `G_θ`: grid nodes `I` with `A(T(I) ∩ Ω) >= A(T(I))/18`.
pub fn good_nodes(theta: f64, omega: &ContinuousDomain, depth: u32) -> Result<DyadicDomain> {
    check_depth(omega, depth)?;
    let theta = GridNode::root(theta).theta();
    let mut candidates: Vec<GridNode> = Vec::new();
    for g in omega.generators() {
        for n in nodes_meeting(theta, g, depth) {
            if !candidates.contains(&n) {
                candidates.push(n);
            }
        }
    }
    let good: Vec<GridNode> = candidates
        .into_iter()
        .filter(|n| {
            let (lo, hi) = node_band(n);
            let full = n.length() * (hi - lo) * (hi + lo);
            region_area(lo, hi, &n.arc(), omega.generators()) >= full * GOOD_FRACTION
        })
        .collect();
    DyadicDomain::new(theta, good)
}

/// Outcome of the covering check on every generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringCheck {
    /// Largest number of grid top halves meeting one `T(I_ζ)` in positive area.
    pub meeting_cells: usize,
    /// Largest number of distinct grid cells holding the five probe points of one `T(I_ζ)`.
    pub point_cells: usize,
    /// Smallest number of probe cells that belong to `G_θ`.
    pub min_good: usize,
}

/// Four corners and the arc midpoint of `T(I)`.
pub fn probe_points(g: &UnitArc) -> [DiscPoint; 5] {
    let (a, b) = top_band(g);
    let outer = b - (b - a) * 1e-9;
    let end = g.start() + g.length();
    let pt = |r: f64, t: f64| DiscPoint::from_polar(r, t).expect("inside the disc");
    [pt(a, g.start()), pt(a, end), pt(outer, g.start()), pt(outer, end), pt(0.5 * (a + b), g.center())]
}

/// For every generator: how many grid top halves meet `T(I_ζ)`, which cells hold the
/// probe points, and how many of those are good.
pub fn covering_check(theta: f64, omega: &ContinuousDomain, good: &DyadicDomain, depth: u32) -> CoveringCheck {
    let theta = GridNode::root(theta).theta();
    let mut report = CoveringCheck { meeting_cells: 0, point_cells: 0, min_good: usize::MAX };
    for g in omega.generators() {
        let (a, b) = top_band(g);
        let meeting = nodes_meeting(theta, g, depth)
            .iter()
            .filter(|n| {
                let (lo, hi) = node_band(n);
                region_area(lo.max(a), hi.min(b), &n.arc(), std::slice::from_ref(g)) > 0.0
            })
            .count();
        let mut cells: Vec<GridNode> = probe_points(g).iter().map(|z| GridNode::locate_capped(theta, z, depth)).collect();
        cells.sort_by_key(|n| n.heap_index());
        cells.dedup();
        report.meeting_cells = report.meeting_cells.max(meeting);
        report.point_cells = report.point_cells.max(cells.len());
        report.min_good = report.min_good.min(cells.iter().filter(|n| good.contains(n)).count());
    }
    report
}

/// Quadrature nodes on `T(I) ∩ Ω` for a grid node.
fn cell_nodes(node: &GridNode, omega: &ContinuousDomain, res: &Resolution) -> Vec<(DiscPoint, f64)> {
    let (lo, hi) = node_band(node);
    let mut out = Vec::new();
    for rect in region_pieces(lo, hi, &node.arc(), omega.generators()) {
        let parts = ((rect.dt / (rect.r1 - rect.r0)).ceil() as usize).clamp(1, res.max_split);
        for piece in rect.split_angle(parts) {
            rect_nodes(&piece, res.nodes.max(2), &mut out);
        }
    }
    out
}

/// `(Ω_θ, w_θ)`: good nodes and cell averages of `w` over `T(I) ∩ Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicRestriction {
    pub domain: DyadicDomain,
    pub weight: TreeWeight,
    /// Cells whose average left the sampled range of `w` (should be zero).
    pub out_of_range_cells: usize,
}

pub fn dyadic_restriction(w: &SampledWeight, theta: f64, omega: &ContinuousDomain, depth: u32) -> Result<DyadicRestriction> {
    let domain = good_nodes(theta, omega, depth)?;
    let theta = domain.theta();
    let mut averages = Vec::new();
    let mut out_of_range_cells = 0;
    for node in domain.members() {
        let nodes = cell_nodes(&node, omega, &w.resolution);
        let (mut s, mut m, mut lo, mut hi) = (0.0, 0.0, f64::INFINITY, 0.0f64);
        for (z, wt) in &nodes {
            let v = w.eval(z);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Precondition(format!("weight value {v} at {z:?}")));
            }
            s += v * wt;
            m += wt;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let avg = s / m;
        if avg < lo * (1.0 - 1e-12) || avg > hi * (1.0 + 1e-12) {
            out_of_range_cells += 1;
        }
        averages.push((node.heap_index(), avg));
    }
    let fill = (averages.iter().map(|(_, v)| v.ln()).sum::<f64>() / averages.len() as f64).exp();
    let mut values = vec![fill; (1usize << (depth + 1)) - 1];
    for (h, v) in averages {
        values[h] = v;
    }
    Ok(DyadicRestriction { domain, weight: TreeWeight::new(theta, depth, values)?, out_of_range_cells })
}

/// `exp(mean_θ log W_θ)` for trees of a common depth on different grids.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoAverage {
    thetas: Vec<f64>,
    depth: u32,
    logs: Vec<Vec<f64>>,
}

impl GeoAverage {
    pub fn new(trees: &[TreeWeight]) -> Result<Self> {
        let first = trees.first().ok_or_else(|| Error::EmptyDomain("no θ samples".into()))?;
        let depth = first.depth();
        if trees.iter().any(|t| t.depth() != depth) {
            return Err(Error::GridMismatch("θ family with mixed depths".into()));
        }
        Ok(Self {
            thetas: trees.iter().map(|t| t.theta()).collect(),
            depth,
            logs: trees.iter().map(|t| t.values().iter().map(|v| v.ln()).collect()).collect(),
        })
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    fn cells(&self, z: &DiscPoint) -> impl Iterator<Item = (usize, usize)> + '_ {
        let level = top_half_level(z.modulus()).min(self.depth);
        let t = z.angle();
        let n = 1u64 << level;
        self.thetas.iter().enumerate().map(move |(i, th)| {
            let j = (((t - th).rem_euclid(1.0) * n as f64).floor() as u64).min(n - 1);
            (i, (n - 1 + j) as usize)
        })
    }

    pub fn eval(&self, z: &DiscPoint) -> f64 {
        let s: f64 = self.cells(z).map(|(i, h)| self.logs[i][h]).sum();
        (s / self.thetas.len() as f64).exp()
    }

    /// Log-values of every sample tree at `z`, written into `out`.
    pub fn member_logs(&self, z: &DiscPoint, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.cells(z).map(|(i, h)| self.logs[i][h]));
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn into_sampled(self, oscillation: Option<f64>, resolution: Resolution) -> SampledWeight {
        let shared = Arc::new(self);
        SampledWeight::new(move |z| shared.eval(z), oscillation).with_resolution(resolution)
    }
}

/// θ samples with their restricted domains, restricted weights and extensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFamily {
    pub thetas: Vec<f64>,
    pub domains: Vec<DyadicDomain>,
    pub restricted: Vec<TreeWeight>,
    pub extensions: Vec<TreeWeight>,
}

pub fn geo_average(family: &ThetaFamily) -> Result<GeoAverage> {
    GeoAverage::new(&family.extensions)
}

/// Largest relative excess of `avg_box(exp mean log W_θ)` over `exp mean log avg_box(W_θ)` on the boxes of `boxes`.
pub fn log_minkowski_gap(avg: &GeoAverage, boxes: &ArcFamily, res: &Resolution) -> f64 {
    boxes
        .arcs
        .par_iter()
        .map(|arc| {
            let nodes = box_nodes(arc, None, res);
            let total: f64 = nodes.iter().map(|n| n.1).sum();
            let k = avg.len();
            let mut member = vec![0.0; k];
            let mut logs = Vec::with_capacity(k);
            let mut lhs = 0.0;
            for (z, wt) in &nodes {
                avg.member_logs(z, &mut logs);
                lhs += (logs.iter().sum::<f64>() / k as f64).exp() * wt;
                for (m, l) in member.iter_mut().zip(&logs) {
                    *m += l.exp() * wt;
                }
            }
            let rhs = (member.iter().map(|m| (m / total).ln()).sum::<f64>() / k as f64).exp();
            lhs / total / rhs - 1.0
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Per-θ constants of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaDiagnostics {
    pub theta: f64,
    pub good_nodes: usize,
    /// `[w_θ^q]_{B_p,D(θ),Ω_θ}`.
    pub restricted_constant: f64,
    pub l_restricted: f64,
    pub m1: f64,
    pub m2: f64,
    /// Measured `[W_θ]_{B_p,D(θ)}` and `L_{W_θ}`.
    pub extension_constant: f64,
    pub extension_l: f64,
    pub meeting_cells: usize,
    pub min_good: usize,
}

/// Result of the continuous extension.
#[derive(Debug, Clone)]
pub struct ContinuousExtension {
    pub p: f64,
    pub q: f64,
    pub depth: u32,
    pub theta_count: usize,
    pub family: ThetaFamily,
    pub weight: SampledWeight,
    pub average: GeoAverage,
    pub diagnostics: Vec<ThetaDiagnostics>,
    /// `[w^q]_{B_p,Ω}` over the arc family.
    pub input_constant: f64,
    /// `[W]_{B_p}` over the arc family.
    pub constant: f64,
    /// Continuous `B_1` constants of the averaged factors (`p > 1` only).
    pub factor_constants: Option<(f64, f64)>,
    /// `sup_Ω |log w - log W|` over the sample mesh.
    pub log_gap: f64,
    pub minkowski_gap: f64,
    /// Largest `[w_θ^q]_{B_p,D(θ),Ω_θ} / (18^p [w^q]_{B_p,Ω})`.
    pub restriction_ratio: f64,
}

struct ThetaOutcome {
    diag: ThetaDiagnostics,
    restriction: DyadicRestriction,
    extension: TreeWeight,
    factors: Option<(TreeWeight, TreeWeight)>,
}

fn run_theta(w: &SampledWeight, omega: &ContinuousDomain, theta: f64, p: f64, q: f64, depth: u32) -> Result<ThetaOutcome> {
    let tag = |e: Error| Error::Precondition(format!("θ = {theta}: {e}"));
    let restr = dyadic_restriction(w, theta, omega, depth).map_err(tag)?;
    let ext = extend_bp(&restr.weight, &restr.domain, p, q).map_err(tag)?;
    let cover = covering_check(theta, omega, &restr.domain, depth);
    let factors = if p > 1.0 {
        let f = factor_bho_full(&ext.weight, p).map_err(tag)?;
        Some((f.result.w1, f.result.w2))
    } else {
        None
    };
    Ok(ThetaOutcome {
        diag: ThetaDiagnostics {
            theta,
            good_nodes: restr.domain.len(),
            restricted_constant: ext.input_constant,
            l_restricted: ext.input_l,
            m1: ext.m1,
            m2: ext.m2,
            extension_constant: ext.measured_constant,
            extension_l: ext.measured_l,
            meeting_cells: cover.meeting_cells,
            min_good: cover.min_good,
        },
        restriction: restr,
        extension: ext.weight,
        factors,
    })
}

/// Sample points of Ω: Gauss nodes on every generator's top half.
pub fn omega_samples(omega: &ContinuousDomain) -> Vec<DiscPoint> {
    let mut out = Vec::new();
    for g in omega.generators() {
        let (a, b) = top_band(g);
        let rect = PolarRect { r0: a, r1: b, t0: g.start(), dt: g.length() };
        let mut nodes = Vec::new();
        for piece in rect.split_angle(4) {
            rect_nodes(&piece, 4, &mut nodes);
        }
        out.extend(nodes.into_iter().map(|n| n.0));
    }
    out
}

/// The continuous extension: per-θ restriction, dyadic extension and geometric averaging.
#[allow(clippy::too_many_arguments)]
pub fn extend_continuous(
    w: &SampledWeight,
    omega: &ContinuousDomain,
    p: f64,
    q: f64,
    depth: u32,
    theta_log2: u32,
    family: &ArcFamily,
) -> Result<ContinuousExtension> {
    check_depth(omega, depth)?;
    let count = 1usize << theta_log2;
    let thetas: Vec<f64> = (0..count).map(|i| (i as f64 + 0.5) / count as f64).collect();
    let outcomes: Vec<ThetaOutcome> = thetas.par_iter().map(|&t| run_theta(w, omega, t, p, q, depth)).collect::<Result<Vec<_>>>()?;
    let res = w.resolution;
    let family_out = ThetaFamily {
        thetas: thetas.clone(),
        domains: outcomes.iter().map(|o| o.restriction.domain.clone()).collect(),
        restricted: outcomes.iter().map(|o| o.restriction.weight.clone()).collect(),
        extensions: outcomes.iter().map(|o| o.extension.clone()).collect(),
    };
    let average = geo_average(&family_out)?;
    let weight = average.clone().into_sampled(None, res);
    let constant = continuous_bp_constant(&weight, p, None, family)?;
    let input_constant = continuous_bp_constant(&w.powf(q), p, Some(omega), family)?;
    let factor_constants = if p > 1.0 {
        let w1: Vec<TreeWeight> = outcomes.iter().map(|o| o.factors.as_ref().expect("factors for p > 1").0.clone()).collect();
        let w2: Vec<TreeWeight> = outcomes.iter().map(|o| o.factors.as_ref().expect("factors for p > 1").1.clone()).collect();
        let a1 = GeoAverage::new(&w1)?.into_sampled(None, res);
        let a2 = GeoAverage::new(&w2)?.into_sampled(None, res);
        Some((continuous_bp_constant(&a1, 1.0, None, family)?, continuous_bp_constant(&a2, 1.0, None, family)?))
    } else {
        None
    };
    let log_gap = omega_samples(omega).iter().map(|z| (w.eval(z).ln() - average.eval(z).ln()).abs()).fold(0.0, f64::max);
    let minkowski_gap = log_minkowski_gap(&average, family, &res);
    let bound = 18f64.powf(p) * input_constant;
    let diagnostics: Vec<ThetaDiagnostics> = outcomes.into_iter().map(|o| o.diag).collect();
    let restriction_ratio = diagnostics.iter().map(|d| d.restricted_constant / bound).fold(0.0, f64::max);
    Ok(ContinuousExtension {
        p,
        q,
        depth,
        theta_count: count,
        family: family_out,
        weight,
        average,
        diagnostics,
        input_constant,
        constant,
        factor_constants,
        log_gap,
        minkowski_gap,
        restriction_ratio,
    })
}

/// Oscillation constant of a restricted tree weight (helper for reports).
pub fn restricted_oscillation(r: &DyadicRestriction) -> Result<f64> {
    Ok(osc_constants(&r.weight, Some(&r.domain))?.1)
}
