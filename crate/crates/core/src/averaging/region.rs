//! Polar rectangles, exact intersections of top halves with unions of top
//! halves, and tensor Gauss–Legendre rules on them.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::geometry::{DiscPoint, UnitArc};

/// `{r0 <= |z| < r1, arg z ∈ [t0, t0 + dt)}` with angles in turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarRect {
    pub r0: f64,
    pub r1: f64,
    pub t0: f64,
    pub dt: f64,
}

impl PolarRect {
    pub fn area(&self) -> f64 {
        self.dt * (self.r1 - self.r0) * (self.r1 + self.r0)
    }

    /// Splits into `parts` equal angular sectors.
    pub fn split_angle(&self, parts: usize) -> impl Iterator<Item = PolarRect> + '_ {
        let h = self.dt / parts as f64;
        (0..parts).map(move |i| PolarRect { t0: self.t0 + i as f64 * h, dt: h, ..*self })
    }
}

/// Radial band `[1-ℓ, 1-ℓ/2)` of the top half over an arc of length `ℓ`.
pub fn top_band(arc: &UnitArc) -> (f64, f64) {
    let l = arc.length();
    (1.0 - l, 1.0 - l / 2.0)
}

/// Intervals of `[0, len)` covered by `arcs`, measured from `start`.
pub fn angular_union(start: f64, len: f64, arcs: &[UnitArc]) -> Vec<(f64, f64)> {
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    for a in arcs {
        if a.length() >= 1.0 {
            pieces.push((0.0, len));
            continue;
        }
        let d = (a.start() - start).rem_euclid(1.0);
        let e = d + a.length();
        pieces.push((d, e.min(1.0)));
        if e > 1.0 {
            pieces.push((0.0, e - 1.0));
        }
    }
    let mut clipped: Vec<(f64, f64)> = pieces.into_iter().map(|(a, b)| (a.max(0.0), b.min(len))).filter(|(a, b)| b > a).collect();
    clipped.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in clipped {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Exact decomposition of `{r_lo <= r < r_hi, angle ∈ arc} ∩ ∪ T(g)` into polar rectangles.
pub fn region_pieces(r_lo: f64, r_hi: f64, arc: &UnitArc, generators: &[UnitArc]) -> Vec<PolarRect> {
    let start = arc.start();
    let len = arc.length();
    let near: Vec<&UnitArc> = generators
        .iter()
        .filter(|g| {
            let (a, b) = top_band(g);
            a < r_hi && b > r_lo && g.overlaps(arc)
        })
        .collect();
    let mut breaks = vec![r_lo, r_hi];
    for g in &near {
        let (a, b) = top_band(g);
        for x in [a, b] {
            if x > r_lo && x < r_hi {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut out = Vec::new();
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        let mid = 0.5 * (a + b);
        let active: Vec<UnitArc> = near
            .iter()
            .filter(|g| {
                let (lo, hi) = top_band(g);
                lo <= mid && mid < hi
            })
            .map(|g| **g)
            .collect();
        for (x, y) in angular_union(start, len, &active) {
            out.push(PolarRect { r0: a, r1: b, t0: start + x, dt: y - x });
        }
    }
    out
}

/// Area of `{r_lo <= r < r_hi, angle ∈ arc} ∩ ∪ T(g)`.
pub fn region_area(r_lo: f64, r_hi: f64, arc: &UnitArc, generators: &[UnitArc]) -> f64 {
    region_pieces(r_lo, r_hi, arc, generators).iter().map(PolarRect::area).sum()
}

/// Tensor Gauss–Legendre rule on a polar rectangle for the measure `dA = 2r dr dt`.
pub fn rect_nodes(rect: &PolarRect, n: usize, out: &mut Vec<(DiscPoint, f64)>) {
    let rule = legendre(n);
    let hr = 0.5 * (rect.r1 - rect.r0);
    let cr = 0.5 * (rect.r1 + rect.r0);
    let ht = 0.5 * rect.dt;
    let ct = rect.t0 + ht;
    for &(x, wx) in rule {
        let r = cr + hr * x;
        let wr = wx * hr * 2.0 * r;
        for &(y, wy) in rule {
            let t = ct + ht * y;
            let p = DiscPoint::from_polar(r, t).expect("quadrature node inside the disc");
            out.push((p, wr * wy * ht));
        }
    }
}

fn legendre(n: usize) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let rules =
        RULES.get_or_init(|| {
            (0..=12)
                .map(|k| {
                    if k < 2 {
                        vec![(0.0, 2.0)]
                    } else {
                        GaussLegendre::new(k).expect("degree at least 2").as_node_weight_pairs().to_vec()
                    }
                })
                .collect()
        });
    &rules[n.clamp(1, 12)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn union_merges_and_wraps() {
        let a = UnitArc::from_start(0.9, 0.2).unwrap();
        let b = UnitArc::from_start(0.05, 0.1).unwrap();
        let u = angular_union(0.0, 1.0, &[a, b]);
        assert_eq!(u.len(), 2);
        assert_relative_eq!(u[0].0, 0.0);
        assert_relative_eq!(u[0].1, 0.15, epsilon = 1e-15);
        assert_relative_eq!(u[1].0, 0.9, epsilon = 1e-15);
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let rect = PolarRect { r0: 0.3, r1: 0.8, t0: 0.95, dt: 0.2 };
        let mut nodes = Vec::new();
        rect_nodes(&rect, 4, &mut nodes);
        let s: f64 = nodes.iter().map(|n| n.1).sum();
        assert_relative_eq!(s, rect.area(), max_relative = 1e-14);
        // ∫ r^2 dA over the rectangle = dt (r1^4 - r0^4)/2
        let m: f64 = nodes.iter().map(|(p, w)| p.modulus().powi(2) * w).sum();
        assert_relative_eq!(m, 0.2 * (0.8f64.powi(4) - 0.3f64.powi(4)) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn overlapping_top_halves_area() {
        // two equal arcs shifted by half their length: the bands coincide
        let a = UnitArc::from_start(0.0, 0.25).unwrap();
        let b = UnitArc::from_start(0.125, 0.25).unwrap();
        let full = UnitArc::full();
        let area = region_area(0.0, 1.0, &full, &[a, b]);
        let band = 1.0 - 0.125;
        let inner = 0.75;
        assert_relative_eq!(area, 0.375 * (band * band - inner * inner), max_relative = 1e-13);
    }
}
