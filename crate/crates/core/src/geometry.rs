//! Shifted dyadic grids on the circle, Carleson boxes and the disc metrics.
//!
//! Angles are measured in turns. Areas are normalized so that the disc has
//! area 1, i.e. `dA = 2 r dr dt` with `t` in turns.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Result};

/// Largest supported tree level (indices must fit in `u64`).
pub const MAX_LEVEL: u32 = 62;

const GRID_TOL: f64 = 1e-9;

fn reduce_turns(t: f64) -> f64 {
    let r = t.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `2^-level` as a float.
#[inline]
pub fn dyadic_length(level: u32) -> f64 {
    (-(level as f64)).exp2()
}

/// An arc of the unit circle given by its center and normalized length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitArc {
    center: f64,
    length: f64,
}

impl UnitArc {
    pub fn new(center: f64, length: f64) -> Result<Self> {
        if !(length > 0.0 && length <= 1.0) || !center.is_finite() {
            return Err(out_of_range(format!("arc length {length} not in (0,1]")));
        }
        Ok(Self { center: reduce_turns(center), length })
    }

    /// The arc starting at `start` (turns) with the given length.
    pub fn from_start(start: f64, length: f64) -> Result<Self> {
        Self::new(start + length / 2.0, length)
    }

    pub fn full() -> Self {
        Self { center: 0.5, length: 1.0 }
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn start(&self) -> f64 {
        reduce_turns(self.center - self.length / 2.0)
    }

    /// Membership of an angle; the right endpoint is included, the left one is not.
    pub fn contains_angle(&self, t: f64) -> bool {
        if self.length >= 1.0 {
            return true;
        }
        let d = reduce_turns(t - self.start());
        d > 0.0 && d <= self.length
    }

    /// Closed containment of arcs, with a small relative tolerance.
    pub fn contains_arc(&self, other: &UnitArc) -> bool {
        if self.length >= 1.0 {
            return true;
        }
        if other.length > self.length + 1e-15 {
            return false;
        }
        let tol = GRID_TOL * self.length;
        let mut d = reduce_turns(other.start() - self.start());
        if d > 1.0 - tol {
            d -= 1.0;
        }
        d >= -tol && d + other.length <= self.length + tol
    }

    /// Whether the two arcs share an interval of positive length.
    pub fn overlaps(&self, other: &UnitArc) -> bool {
        if self.length >= 1.0 || other.length >= 1.0 {
            return true;
        }
        let d = reduce_turns(other.start() - self.start());
        d < self.length || d + other.length > 1.0
    }
}

/// A point strictly inside the unit disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscPoint {
    pub re: f64,
    pub im: f64,
}

impl DiscPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(re.is_finite() && im.is_finite()) || re.hypot(im) >= 1.0 {
            return Err(out_of_range(format!("point ({re}, {im}) not inside the disc")));
        }
        Ok(Self { re, im })
    }

    /// Polar constructor; `angle` in turns.
    pub fn from_polar(modulus: f64, angle: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&modulus) {
            return Err(out_of_range(format!("modulus {modulus} not in [0,1)")));
        }
        let a = angle * TAU;
        Ok(Self { re: modulus * a.cos(), im: modulus * a.sin() })
    }

    pub fn origin() -> Self {
        Self { re: 0.0, im: 0.0 }
    }

    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Argument in turns, in `[0,1)`.
    pub fn angle(&self) -> f64 {
        reduce_turns(self.im.atan2(self.re) / TAU)
    }

    /// `1 - |z|^2`.
    pub fn mass(&self) -> f64 {
        let r = self.modulus();
        (1.0 - r) * (1.0 + r)
    }

    /// The arc `I_z` centered at `z/|z|` of length `1-|z|`; the full circle at the origin.
    pub fn arc(&self) -> UnitArc {
        let r = self.modulus();
        if r == 0.0 {
            UnitArc::full()
        } else {
            UnitArc { center: self.angle(), length: 1.0 - r }
        }
    }
}

/// A dyadic arc `[θ + j 2^-k, θ + (j+1) 2^-k)` of the grid shifted by `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    theta: f64,
    level: u32,
    index: u64,
}

impl Eq for GridNode {}

impl std::hash::Hash for GridNode {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.theta.to_bits().hash(state);
        self.level.hash(state);
        self.index.hash(state);
    }
}

impl GridNode {
    pub fn new(theta: f64, level: u32, index: u64) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(out_of_range(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        if index >> level != 0 {
            return Err(out_of_range(format!("index {index} not below 2^{level}")));
        }
        if !theta.is_finite() {
            return Err(out_of_range("theta must be finite"));
        }
        Ok(Self { theta: reduce_turns(theta), level, index })
    }

    pub fn root(theta: f64) -> Self {
        Self { theta: reduce_turns(theta), level: 0, index: 0 }
    }

    pub(crate) fn raw(theta: f64, level: u32, index: u64) -> Self {
        Self { theta, level, index }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn length(&self) -> f64 {
        dyadic_length(self.level)
    }

    pub fn start(&self) -> f64 {
        reduce_turns(self.theta + self.index as f64 * self.length())
    }

    pub fn arc(&self) -> UnitArc {
        let len = self.length();
        UnitArc { center: reduce_turns(self.theta + (self.index as f64 + 0.5) * len), length: len }
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self { theta: self.theta, level: self.level - 1, index: self.index >> 1 })
    }

    pub fn children(&self) -> [Self; 2] {
        let l = self.level + 1;
        [Self { theta: self.theta, level: l, index: self.index << 1 }, Self { theta: self.theta, level: l, index: (self.index << 1) | 1 }]
    }

    /// The ancestor at `level` (self when equal).
    pub fn ancestor_at(&self, level: u32) -> Option<Self> {
        (level <= self.level).then(|| Self { theta: self.theta, level, index: self.index >> (self.level - level) })
    }

    /// Ancestor-or-self relation within the same grid.
    pub fn is_ancestor_of(&self, other: &GridNode) -> bool {
        self.theta == other.theta && self.level <= other.level && other.index >> (other.level - self.level) == self.index
    }

    /// Smallest common ancestor; both nodes must share the grid.
    pub fn common_ancestor(&self, other: &GridNode) -> Self {
        let (a, b) = if self.level <= other.level { (self, other) } else { (other, self) };
        let b_up = b.index >> (b.level - a.level);
        let diff = a.index ^ b_up;
        let up = 64 - diff.leading_zeros();
        Self { theta: a.theta, level: a.level - up, index: a.index >> up }
    }

    /// Position in breadth-first order: `2^level - 1 + index`.
    pub fn heap_index(&self) -> usize {
        ((1usize << self.level) - 1) + self.index as usize
    }

    pub fn from_heap_index(theta: f64, h: usize) -> Self {
        let level = usize::BITS - 1 - (h + 1).leading_zeros();
        Self { theta, level, index: (h + 1 - (1usize << level)) as u64 }
    }

    /// The node at `level` whose arc contains the angle `t` (turns).
    pub fn containing_angle(theta: f64, t: f64, level: u32) -> Self {
        let theta = reduce_turns(theta);
        let n = 1u64 << level;
        let x = reduce_turns(t - theta) * n as f64;
        let j = (x.floor() as u64).min(n - 1);
        Self { theta, level, index: j }
    }

    /// The grid arc `I` with `z ∈ T(I)`.
    pub fn locate(theta: f64, z: &DiscPoint) -> Self {
        let level = top_half_level(z.modulus()).min(MAX_LEVEL);
        Self::containing_angle(theta, z.angle(), level)
    }

    /// Like [`GridNode::locate`] but never deeper than `max_level`.
    pub fn locate_capped(theta: f64, z: &DiscPoint, max_level: u32) -> Self {
        let level = top_half_level(z.modulus()).min(max_level);
        Self::containing_angle(theta, z.angle(), level)
    }
}

/// Level `k` with `1 - 2^-k <= r < 1 - 2^-(k+1)`.
pub fn top_half_level(r: f64) -> u32 {
    let d = 1.0 - r;
    if d >= 1.0 {
        return 0;
    }
    let mut k = (-d.log2()).floor().max(0.0) as i64;
    while k > 0 && d > (-(k as f64)).exp2() {
        k -= 1;
    }
    while d <= (-((k + 1) as f64)).exp2() {
        k += 1;
    }
    (k as u32).min(MAX_LEVEL)
}

/// Normalized area of the Carleson box `S(I)` with `|I| = length`.
pub fn area_carleson(length: f64) -> Result<f64> {
    if !(length > 0.0 && length <= 1.0) {
        return Err(out_of_range(format!("length {length} not in (0,1]")));
    }
    Ok(carleson_area_unchecked(length))
}

/// Normalized area of the `rho`-top half `T_ρ(I)`.
pub fn area_top(length: f64, rho: f64) -> Result<f64> {
    if !(length > 0.0 && length <= 1.0) {
        return Err(out_of_range(format!("length {length} not in (0,1]")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(out_of_range(format!("rho {rho} not in (0,1]")));
    }
    Ok(top_area_unchecked(length, rho))
}

#[inline]
pub(crate) fn carleson_area_unchecked(l: f64) -> f64 {
    // 1 - (1-l)^2 = l (2 - l)
    l * l * (2.0 - l)
}

#[inline]
pub(crate) fn top_area_unchecked(l: f64, rho: f64) -> f64 {
    let outer = 1.0 - (1.0 - rho) * l;
    let inner = 1.0 - l;
    l * (outer - inner) * (outer + inner)
}

/// Representative point of a node: modulus `1-|I|`, angle the center of `I`.
pub fn node_point(node: &GridNode) -> DiscPoint {
    let arc = node.arc();
    if node.level == 0 {
        return DiscPoint::origin();
    }
    DiscPoint::from_polar(1.0 - arc.length, arc.center).expect("node modulus below 1")
}

/// Pseudo-hyperbolic distance `|(w-z)/(1- conj(w) z)|`.
pub fn rho_pseudo(z: &DiscPoint, w: &DiscPoint) -> f64 {
    let nr = w.re - z.re;
    let ni = w.im - z.im;
    // 1 - conj(w) z
    let dr = 1.0 - (w.re * z.re + w.im * z.im);
    let di = -(w.re * z.im - w.im * z.re);
    (nr.hypot(ni) / dr.hypot(di)).min(1.0)
}

/// `1 - ρ(z,w)^2`, computed without cancellation.
pub fn one_minus_rho_sq(z: &DiscPoint, w: &DiscPoint) -> f64 {
    let dr = 1.0 - (w.re * z.re + w.im * z.im);
    let di = -(w.re * z.im - w.im * z.re);
    z.mass() * w.mass() / (dr * dr + di * di)
}

/// `½ log((1+ρ²)/(1-ρ²))`.
pub fn beta_hyperbolic(z: &DiscPoint, w: &DiscPoint) -> f64 {
    let r2 = rho_pseudo(z, w).powi(2);
    0.5 * (r2.ln_1p() - (-r2).ln_1p())
}

/// Dyadic hyperbolic distance in the grid shifted by `theta`.
pub fn beta_dyadic(theta: f64, z: &DiscPoint, w: &DiscPoint) -> f64 {
    let a = GridNode::locate(theta, z);
    let b = GridNode::locate(theta, w);
    node_distance(&a, &b) as f64
}

/// `log2(|P(a,b)| / min(|a|,|b|))` for nodes of one grid.
pub fn node_distance(a: &GridNode, b: &GridNode) -> u32 {
    a.level.max(b.level) - a.common_ancestor(b).level
}

/// Smallest arc of the grid `theta` containing `arc` (closed containment).
pub fn min_predecessor_theta(arc: &UnitArc, theta: f64) -> GridNode {
    let theta = reduce_turns(theta);
    if arc.length >= 1.0 {
        return GridNode::root(theta);
    }
    let s = reduce_turns(arc.start() - theta);
    let top = (-arc.length.log2()).ceil().max(0.0) as u32 + 1;
    for level in (1..=top.min(MAX_LEVEL)).rev() {
        let n = (1u64 << level) as f64;
        let x = s * n;
        let len = arc.length * n;
        let j = (x + GRID_TOL).floor();
        let rel = x - j;
        if rel >= -GRID_TOL && rel + len <= 1.0 + GRID_TOL {
            return GridNode { theta, level, index: (j as u64) % (1u64 << level) };
        }
    }
    GridNode::root(theta)
}

/// Smallest arc containing `a ∪ b`.
pub fn min_covering_arc(a: &UnitArc, b: &UnitArc) -> UnitArc {
    if a.contains_arc(b) {
        return *a;
    }
    if b.contains_arc(a) {
        return *b;
    }
    let (sa, sb) = (a.start(), b.start());
    let from_a = (reduce_turns(sb - sa) + b.length).max(a.length);
    let from_b = (reduce_turns(sa - sb) + a.length).max(b.length);
    let (start, len) = if from_a <= from_b { (sa, from_a) } else { (sb, from_b) };
    if len >= 1.0 {
        UnitArc::full()
    } else {
        UnitArc { center: reduce_turns(start + len / 2.0), length: len }
    }
}

/// `P(z,w)`: the smallest arc containing `I_z ∪ I_w`.
pub fn min_predecessor_cont(z: &DiscPoint, w: &DiscPoint) -> UnitArc {
    min_covering_arc(&z.arc(), &w.arc())
}

/// `|1 - conj(z) ζ| / max{1-|z|², 1-|ζ|², |z*-ζ*|}` for nonzero points of the closed disc.
pub fn hyperbolic_comparability(z: (f64, f64), w: (f64, f64)) -> f64 {
    let (zr, zi) = z;
    let (wr, wi) = w;
    let num = (1.0 - (zr * wr + zi * wi)).hypot(zr * wi - zi * wr);
    let mz = zr.hypot(zi);
    let mw = wr.hypot(wi);
    let chord = (zr / mz - wr / mw).hypot(zi / mz - wi / mw);
    let den = (1.0 - mz * mz).max(1.0 - mw * mw).max(chord);
    num / den
}

/// `log(|P(z,ζ)| / min(|I_z|, |I_ζ|)) / (1 + β(z,ζ))`.
pub fn betaboxes_ratio(z: &DiscPoint, w: &DiscPoint) -> f64 {
    let p = min_predecessor_cont(z, w);
    let m = z.arc().length.min(w.arc().length);
    (p.length / m).ln() / (1.0 + beta_hyperbolic(z, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn polar_area_oracle(r0: f64, r1: f64, width: f64) -> f64 {
        // midpoint rule of 2 r dr over the band, times the angular width
        let n = 20_000;
        let h = (r1 - r0) / n as f64;
        (0..n).map(|i| 2.0 * (r0 + (i as f64 + 0.5) * h) * h).sum::<f64>() * width
    }

    #[test]
    fn carleson_areas() {
        assert_abs_diff_eq!(area_carleson(1.0).unwrap(), 1.0, epsilon = 1e-15);
        for l in [0.5, 0.25] {
            let oracle = polar_area_oracle(1.0 - l, 1.0, l);
            assert_abs_diff_eq!(area_carleson(l).unwrap(), oracle, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(area_carleson(0.5).unwrap(), 3.0 / 8.0, epsilon = 1e-15);
        assert_abs_diff_eq!(area_carleson(0.25).unwrap(), 7.0 / 64.0, epsilon = 1e-15);
        assert!(area_carleson(0.0).is_err());
        assert!(area_carleson(1.5).is_err());
    }

    #[test]
    fn top_areas() {
        assert_abs_diff_eq!(area_top(1.0, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        let oracle = polar_area_oracle(0.5, 0.75, 0.5);
        assert_abs_diff_eq!(area_top(0.5, 0.5).unwrap(), oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(area_top(0.5, 0.5).unwrap(), 5.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(area_top(0.125, 1.0).unwrap(), area_carleson(0.125).unwrap(), epsilon = 1e-15);
        assert!(area_top(0.5, 0.0).is_err());
    }

    #[test]
    fn tiling_telescopes() {
        for n in [0u32, 1, 5, 12] {
            let mut total = 0.0;
            for k in 0..n {
                total += (1u64 << k) as f64 * area_top(dyadic_length(k), 0.5).unwrap();
            }
            total += (1u64 << n) as f64 * area_carleson(dyadic_length(n)).unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn node_points() {
        let root = GridNode::root(0.3);
        assert_eq!(node_point(&root), DiscPoint::origin());
        let n = GridNode::new(0.0, 1, 0).unwrap();
        let z = node_point(&n);
        assert_abs_diff_eq!(z.modulus(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(z.angle(), 0.25, epsilon = 1e-15);
        for (lvl, idx) in [(3u32, 5u64), (7, 100), (10, 1023)] {
            let node = GridNode::new(0.17, lvl, idx).unwrap();
            let z = node_point(&node);
            let l = node.length();
            assert_abs_diff_eq!(z.mass(), l * (2.0 - l), epsilon = 1e-14);
            assert_eq!(GridNode::locate(0.17, &z), node);
            let iz = z.arc();
            assert_abs_diff_eq!(iz.length(), l, epsilon = 1e-14);
            assert_abs_diff_eq!(iz.center(), node.arc().center(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pseudo_hyperbolic() {
        let o = DiscPoint::origin();
        let z = DiscPoint::new(0.3, -0.4).unwrap();
        assert_abs_diff_eq!(rho_pseudo(&o, &z), 0.5, epsilon = 1e-15);
        assert_eq!(rho_pseudo(&z, &z), 0.0);
        let a = DiscPoint::new(0.5, 0.0).unwrap();
        let b = DiscPoint::new(-0.5, 0.0).unwrap();
        assert_abs_diff_eq!(rho_pseudo(&a, &b), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn hyperbolic_as_printed() {
        let z = DiscPoint::new(0.2, 0.1).unwrap();
        assert_eq!(beta_hyperbolic(&z, &z), 0.0);
        let w = DiscPoint::new(0.5, 0.0).unwrap();
        assert_abs_diff_eq!(beta_hyperbolic(&DiscPoint::origin(), &w), 0.5 * (5.0f64 / 3.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn dyadic_distance_examples() {
        let theta = 0.1;
        let a = node_point(&GridNode::new(theta, 4, 6).unwrap());
        let a2 = DiscPoint::from_polar(a.modulus() + 0.01, a.angle() + 0.001).unwrap();
        assert_eq!(beta_dyadic(theta, &a, &a2), 0.0);
        let b = node_point(&GridNode::new(theta, 4, 7).unwrap());
        assert_eq!(beta_dyadic(theta, &a, &b), 1.0);
        // points straddling the grid origin at level k: their cells only meet at the root
        for k in 2..20u32 {
            let r = 1.0 - dyadic_length(k);
            let eps = dyadic_length(k + 2);
            let z = DiscPoint::from_polar(r, theta + eps).unwrap();
            let w = DiscPoint::from_polar(r, theta - eps).unwrap();
            assert_eq!(beta_dyadic(theta, &z, &w), k as f64);
        }
    }

    #[test]
    fn predecessor_of_grid_arc_is_itself() {
        for (lvl, idx) in [(0u32, 0u64), (1, 1), (5, 17), (9, 500)] {
            let node = GridNode::new(0.37, lvl, idx).unwrap();
            assert_eq!(min_predecessor_theta(&node.arc(), 0.37), node);
        }
        let z = DiscPoint::new(0.1, 0.6).unwrap();
        let p = min_predecessor_cont(&z, &z);
        assert_abs_diff_eq!(p.length(), z.arc().length(), epsilon = 1e-15);
    }

    #[test]
    fn common_ancestor_and_heap() {
        let a = GridNode::new(0.0, 5, 0b10110).unwrap();
        let b = GridNode::new(0.0, 3, 0b111).unwrap();
        assert_eq!(a.common_ancestor(&b), GridNode::new(0.0, 1, 1).unwrap());
        for h in 0..200usize {
            assert_eq!(GridNode::from_heap_index(0.0, h).heap_index(), h);
        }
    }

    #[test]
    fn level_boundaries() {
        assert_eq!(top_half_level(0.0), 0);
        assert_eq!(top_half_level(0.49), 0);
        assert_eq!(top_half_level(0.5), 1);
        assert_eq!(top_half_level(0.75), 2);
        assert_eq!(top_half_level(0.7499), 1);
    }
}
