//! Piecewise-constant weights on truncated dyadic trees and the restricted
//! dyadic Békollé–Bonami quantities built from them.
//!
//! A weight of depth `N` is constant on the top half `T(I)` of every node of
//! level `< N` and constant on the whole Carleson box `S(I)` of every node of
//! level `N`. With this convention all box integrals are finite sums.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};
use crate::geometry::{carleson_area_unchecked, dyadic_length, node_distance, top_area_unchecked, GridNode, MAX_LEVEL};

/// Deepest tree that may be materialized.
pub const MAX_DEPTH: u32 = 24;

/// Above this many Ω-cells the oscillation constant `L_w` is sampled.
pub const EXACT_PAIR_LIMIT: usize = 1 << 12;
const SAMPLED_PAIRS: usize = 100_000;
const PAIR_SEED: u64 = 0x5eed_0001;

#[inline]
pub(crate) fn node_count(depth: u32) -> usize {
    (1usize << (depth + 1)) - 1
}

#[inline]
pub(crate) fn level_of(h: usize) -> u32 {
    usize::BITS - 1 - (h + 1).leading_zeros()
}

/// Area of the cell of a node at `level` in a tree of the given depth.
#[inline]
pub fn cell_area(level: u32, depth: u32) -> f64 {
    let l = dyadic_length(level);
    if level < depth {
        top_area_unchecked(l, 0.5)
    } else {
        carleson_area_unchecked(l)
    }
}

/// Area of the Carleson box of a node at `level`.
#[inline]
pub fn box_area(level: u32) -> f64 {
    carleson_area_unchecked(dyadic_length(level))
}

/// A positive weight on a truncated dyadic tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "crate::io::WeightJson", try_from = "crate::io::WeightJson")]
pub struct TreeWeight {
    theta: f64,
    depth: u32,
    values: Vec<f64>,
}

impl TreeWeight {
    /// Builds a weight from values in breadth-first order.
    pub fn new(theta: f64, depth: u32, values: Vec<f64>) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(out_of_range(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        if values.len() != node_count(depth) {
            return Err(Error::Malformed(format!("expected {} values for depth {depth}, got {}", node_count(depth), values.len())));
        }
        if let Some(h) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(out_of_range(format!("non-positive or non-finite value {} at node {h}", values[h])));
        }
        Ok(Self { theta: GridNode::root(theta).theta(), depth, values })
    }

    pub fn constant(theta: f64, depth: u32, c: f64) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(out_of_range(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        Self::new(theta, depth, vec![c; node_count(depth)])
    }

    pub fn from_fn(theta: f64, depth: u32, mut f: impl FnMut(&GridNode) -> f64) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(out_of_range(format!("depth {depth} exceeds {MAX_DEPTH}")));
        }
        let theta = GridNode::root(theta).theta();
        let values = (0..node_count(depth)).map(|h| f(&GridNode::from_heap_index(theta, h))).collect();
        Self::new(theta, depth, values)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nodes(&self) -> impl Iterator<Item = GridNode> + '_ {
        (0..self.values.len()).map(|h| GridNode::from_heap_index(self.theta, h))
    }

    pub fn value(&self, node: &GridNode) -> Result<f64> {
        self.check_node(node)?;
        Ok(self.values[node.heap_index()])
    }

    /// Value at a disc point (cells below depth `N` belong to level-`N` boxes).
    pub fn evaluate(&self, z: &crate::geometry::DiscPoint) -> f64 {
        self.values[GridNode::locate_capped(self.theta, z, self.depth).heap_index()]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.theta, self.depth, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn powf(&self, a: f64) -> Result<Self> {
        self.map(|v| v.powf(a))
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_grid(other)?;
        Self::new(self.theta, self.depth, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect())
    }

    pub(crate) fn check_node(&self, node: &GridNode) -> Result<()> {
        if node.theta() != self.theta {
            return Err(Error::GridMismatch(format!("node grid {} vs weight grid {}", node.theta(), self.theta)));
        }
        if node.level() > self.depth {
            return Err(out_of_range(format!("node level {} below depth {}", node.level(), self.depth)));
        }
        Ok(())
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.theta != other.theta || self.depth != other.depth {
            return Err(Error::GridMismatch(format!(
                "weights on grids ({}, depth {}) and ({}, depth {})",
                self.theta, self.depth, other.theta, other.depth
            )));
        }
        Ok(())
    }

    pub(crate) fn from_raw(theta: f64, depth: u32, values: Vec<f64>) -> Self {
        Self { theta, depth, values }
    }
}

/// A union of top halves `T(I)` over a set of grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "crate::io::DomainJson", try_from = "crate::io::DomainJson")]
pub struct DyadicDomain {
    theta: f64,
    members: BTreeSet<(u32, u64)>,
}

impl DyadicDomain {
    pub fn new(theta: f64, nodes: impl IntoIterator<Item = GridNode>) -> Result<Self> {
        let theta = GridNode::root(theta).theta();
        let mut members = BTreeSet::new();
        for n in nodes {
            if n.theta() != theta {
                return Err(Error::GridMismatch(format!("member on grid {} in domain on grid {theta}", n.theta())));
            }
            members.insert((n.level(), n.index()));
        }
        if members.is_empty() {
            return Err(Error::EmptyDomain("a dyadic domain needs at least one top half".into()));
        }
        Ok(Self { theta, members })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn contains(&self, node: &GridNode) -> bool {
        node.theta() == self.theta && self.members.contains(&(node.level(), node.index()))
    }

    pub fn members(&self) -> impl Iterator<Item = GridNode> + '_ {
        self.members.iter().map(move |&(l, j)| GridNode::raw(self.theta, l, j))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn max_level(&self) -> u32 {
        self.members.iter().map(|m| m.0).max().unwrap_or(0)
    }
}

/// Ω-portion of every cell of a tree: membership flag and intersected area.
#[derive(Debug, Clone)]
pub(crate) struct Cells {
    pub member: Vec<bool>,
    pub area: Vec<f64>,
}

impl Cells {
    pub fn new(theta: f64, depth: u32, omega: Option<&DyadicDomain>) -> Result<Self> {
        let n = node_count(depth);
        match omega {
            None => Ok(Self { member: vec![true; n], area: (0..n).map(|h| cell_area(level_of(h), depth)).collect() }),
            Some(d) => {
                if d.theta != theta {
                    return Err(Error::GridMismatch(format!("domain grid {} vs weight grid {theta}", d.theta)));
                }
                if d.max_level() > depth.min(MAX_LEVEL) {
                    return Err(out_of_range(format!("domain level {} below tree depth {depth}", d.max_level())));
                }
                let mut member = vec![false; n];
                let mut area = vec![0.0; n];
                for m in d.members() {
                    let h = m.heap_index();
                    member[h] = true;
                    area[h] = top_area_unchecked(m.length(), 0.5);
                }
                Ok(Self { member, area })
            }
        }
    }

    pub fn for_weight(w: &TreeWeight, omega: Option<&DyadicDomain>) -> Result<Self> {
        Self::new(w.theta, w.depth, omega)
    }

    pub fn member_indices(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&h| self.member[h]).collect()
    }
}

/// `∫_{S(I)∩Ω} v` for every node, given cell values `v` (bottom-up pass).
pub(crate) fn box_sums(values: &[f64], cells: &Cells) -> Vec<f64> {
    let n = values.len();
    let mut s: Vec<f64> = values.iter().zip(&cells.area).map(|(v, a)| v * a).collect();
    for h in (1..n).rev() {
        let p = (h - 1) / 2;
        s[p] += s[h];
    }
    s
}

fn box_sums_pow(values: &[f64], power: f64, cells: &Cells) -> Vec<f64> {
    let v: Vec<f64> = values.iter().map(|x| x.powf(power)).collect();
    box_sums(&v, cells)
}

/// `∫_{S(I)∩Ω} w^power dA`.
pub fn box_integral(w: &TreeWeight, node: &GridNode, omega: Option<&DyadicDomain>, power: f64) -> Result<f64> {
    w.check_node(node)?;
    let cells = Cells::for_weight(w, omega)?;
    let mut total = 0.0;
    let mut stack = vec![node.heap_index()];
    while let Some(h) = stack.pop() {
        total += w.values[h].powf(power) * cells.area[h];
        let c = 2 * h + 1;
        if c < w.values.len() {
            stack.push(c);
            stack.push(c + 1);
        }
    }
    Ok(total)
}

/// Box where a supremum is attained together with its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub level: u32,
    pub index: u64,
    pub value: f64,
}

/// `[w]_{B_p,D,Ω}` with the box attaining it.
pub fn bp_constant_witness(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>) -> Result<Witness> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(out_of_range(format!("p = {p} must exceed 1")));
    }
    let cells = Cells::for_weight(w, omega)?;
    let s1 = box_sums(&w.values, &cells);
    let s2 = box_sums_pow(&w.values, -1.0 / (p - 1.0), &cells);
    let mut best: Option<Witness> = None;
    for h in 0..s1.len() {
        if s1[h] <= 0.0 {
            continue;
        }
        let level = level_of(h);
        let a = box_area(level);
        let v = (s1[h] / a) * (s2[h] / a).powf(p - 1.0);
        if best.is_none_or(|b| v > b.value) {
            let node = GridNode::from_heap_index(w.theta, h);
            best = Some(Witness { level, index: node.index(), value: v });
        }
    }
    best.ok_or_else(|| Error::EmptyDomain("no box meets Ω".into()))
}

/// `[w]_{B_p,D,Ω}`: supremum over boxes meeting Ω of the two-average product.
pub fn bp_constant(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>) -> Result<f64> {
    bp_constant_witness(w, p, omega).map(|b| b.value)
}

/// Restricted dyadic maximal function, evaluated on every cell.
///
/// For cells outside Ω this is the maximal function of `f χ_Ω`.
pub fn maximal(f: &TreeWeight, omega: Option<&DyadicDomain>) -> Result<TreeWeight> {
    let cells = Cells::for_weight(f, omega)?;
    Ok(TreeWeight::from_raw(f.theta, f.depth, maximal_values(&f.values, &cells)))
}

pub(crate) fn maximal_values(values: &[f64], cells: &Cells) -> Vec<f64> {
    let s = box_sums(values, cells);
    let mut m = vec![0.0; s.len()];
    for h in 0..s.len() {
        let avg = s[h] / box_area(level_of(h));
        m[h] = if h == 0 { avg } else { avg.max(m[(h - 1) / 2]) };
    }
    m
}

/// `[w]_{B_1,D,Ω}`: the largest ratio `M_{D,Ω} w / w` over Ω-cells.
pub fn b1_constant(w: &TreeWeight, omega: Option<&DyadicDomain>) -> Result<f64> {
    let cells = Cells::for_weight(w, omega)?;
    let m = maximal_values(&w.values, &cells);
    Ok(cells.member_indices().into_iter().map(|h| m[h] / w.values[h]).fold(f64::NEG_INFINITY, f64::max))
}

/// `λ^p w({M_{D,Ω} f > λ} ∩ Ω) / ‖f‖^p_{L^p(Ω,w)}`.
pub fn weak_type_ratio(w: &TreeWeight, p: f64, omega: Option<&DyadicDomain>, f: &TreeWeight, lambda: f64) -> Result<f64> {
    w.check_same_grid(f)?;
    if !(lambda > 0.0) {
        return Err(out_of_range("lambda must be positive"));
    }
    if !(p >= 1.0) {
        return Err(out_of_range("p must be at least 1"));
    }
    let cells = Cells::for_weight(w, omega)?;
    let m = maximal_values(&f.values, &cells);
    let mut level_set = 0.0;
    let mut norm = 0.0;
    for h in cells.member_indices() {
        let a = cells.area[h] * w.values[h];
        norm += f.values[h].powf(p) * a;
        if m[h] > lambda {
            level_set += a;
        }
    }
    if norm <= 0.0 {
        return Err(Error::Precondition("f vanishes on Ω".into()));
    }
    Ok(lambda.powf(p) * level_set / norm)
}

/// Largest ratio `(avg_S w^r)^{1/r} / avg_S w` over all Carleson boxes.
pub fn reverse_holder(w: &TreeWeight, r: f64) -> Result<f64> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(out_of_range(format!("r = {r} must exceed 1")));
    }
    let cells = Cells::for_weight(w, None)?;
    let s1 = box_sums(&w.values, &cells);
    let sr = box_sums_pow(&w.values, r, &cells);
    Ok((0..s1.len())
        .map(|h| {
            let a = box_area(level_of(h));
            (sr[h] / a).powf(1.0 / r) / (s1[h] / a)
        })
        .fold(1.0, f64::max))
}

/// Reverse-Hölder ratios on a grid of exponents.
pub fn reverse_holder_table(w: &TreeWeight, rs: &[f64]) -> Result<Vec<(f64, f64)>> {
    rs.iter().map(|&r| reverse_holder(w, r).map(|v| (r, v))).collect()
}

/// Oscillation constants `(C_w, L_w)` of a weight restricted to Ω.
pub fn osc_constants(w: &TreeWeight, omega: Option<&DyadicDomain>) -> Result<(f64, f64)> {
    let cells = Cells::for_weight(w, omega)?;
    Ok((c_constant(&w.values, &cells), l_constant(w.theta, &w.values, &cells)))
}

pub(crate) fn c_constant(values: &[f64], cells: &Cells) -> f64 {
    let n = values.len();
    let mut c: f64 = 1.0;
    for h in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let kids = 2 * h + 1;
        for k in [h, kids, kids + 1] {
            if k < n && cells.member[k] {
                lo = lo.min(values[k]);
                hi = hi.max(values[k]);
            }
        }
        if hi > 0.0 {
            c = c.max(hi / lo);
        }
    }
    c
}

pub(crate) fn l_constant(theta: f64, values: &[f64], cells: &Cells) -> f64 {
    let idx = cells.member_indices();
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let pair = |a: usize, b: usize| -> f64 {
        let na = GridNode::from_heap_index(theta, a);
        let nb = GridNode::from_heap_index(theta, b);
        (logs[a] - logs[b]).abs() / (1.0 + node_distance(&na, &nb) as f64)
    };
    if idx.len() <= EXACT_PAIR_LIMIT {
        return idx
            .par_iter()
            .enumerate()
            .map(|(i, &a)| idx[i + 1..].iter().map(|&b| pair(a, b)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    let mut best: f64 = 0.0;
    for _ in 0..SAMPLED_PAIRS {
        let a = idx[rng.gen_range(0..idx.len())];
        let b = idx[rng.gen_range(0..idx.len())];
        best = best.max(pair(a, b));
    }
    let chains = idx
        .par_iter()
        .map(|&a| {
            let mut best: f64 = 0.0;
            let mut h = a;
            while h > 0 {
                h = (h - 1) / 2;
                if cells.member[h] {
                    best = best.max(pair(a, h));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    best.max(chains)
}

/// The constants of a weight gathered in one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightCertificate {
    pub p: f64,
    pub q: Option<f64>,
    pub bp_constant: Option<f64>,
    pub b1_constant: Option<f64>,
    pub c_w: f64,
    pub l_w: f64,
    pub reverse_holder: Vec<(f64, f64)>,
}

/// Default exponents for the reverse-Hölder table.
pub const RH_GRID: [f64; 6] = [1.05, 1.1, 1.25, 1.5, 2.0, 3.0];

/// Computes every constant of `w` for exponent `p` (with `p = 1` giving the `B_1` constant).
pub fn certify(w: &TreeWeight, p: f64, q: Option<f64>, omega: Option<&DyadicDomain>) -> Result<WeightCertificate> {
    let (c_w, l_w) = osc_constants(w, omega)?;
    let (bp, b1) = if p == 1.0 { (None, Some(b1_constant(w, omega)?)) } else { (Some(bp_constant(w, p, omega)?), None) };
    Ok(WeightCertificate { p, q, bp_constant: bp, b1_constant: b1, c_w, l_w, reverse_holder: reverse_holder_table(w, &RH_GRID)? })
}
