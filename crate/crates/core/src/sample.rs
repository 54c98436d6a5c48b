//! Seeded generators for weights and domains used by experiments and tests.

use rand::Rng;

use crate::error::Result;
use crate::geometry::GridNode;
use crate::lattice::{DyadicDomain, TreeWeight};

/// Multiplicative cascade: `log w` moves by a uniform step in `[-step, step]`
/// from parent to child, so the weight has bounded hyperbolic oscillation.
pub fn cascade_weight<R: Rng>(theta: f64, depth: u32, step: f64, rng: &mut R) -> Result<TreeWeight> {
    let n = (1usize << (depth + 1)) - 1;
    let mut logs = vec![0.0f64; n];
    for h in 1..n {
        logs[h] = logs[(h - 1) / 2] + rng.gen_range(-step..=step);
    }
    TreeWeight::new(theta, depth, logs.into_iter().map(f64::exp).collect())
}

/// Independent log-uniform values in `[e^-spread, e^spread]`.
pub fn rough_weight<R: Rng>(theta: f64, depth: u32, spread: f64, rng: &mut R) -> Result<TreeWeight> {
    TreeWeight::from_fn(theta, depth, |_| rng.gen_range(-spread..=spread).exp())
}

/// Cell averages of `(1-|z|^2)^alpha`.
pub fn radial_power(theta: f64, depth: u32, alpha: f64) -> Result<TreeWeight> {
    TreeWeight::from_fn(theta, depth, |node| {
        let l = node.length();
        let u_in = l * (2.0 - l);
        let u_out = if node.level() < depth {
            let h = l / 2.0;
            h * (2.0 - h)
        } else {
            0.0
        };
        radial_power_average(u_out, u_in, alpha)
    })
}

/// Average of `u^alpha` over `u ∈ [a,b]` (with `u = 1-r^2`, area is linear in `u`).
pub fn radial_power_average(a: f64, b: f64, alpha: f64) -> f64 {
    if (alpha + 1.0).abs() < 1e-12 {
        if a <= 0.0 {
            return f64::INFINITY;
        }
        return (b.ln() - a.ln()) / (b - a);
    }
    let e = alpha + 1.0;
    (b.powf(e) - a.powf(e)) / (e * (b - a))
}

/// Each node of level `1..=max_level` joins independently with probability `density`.
pub fn random_domain<R: Rng>(theta: f64, max_level: u32, density: f64, rng: &mut R) -> Result<DyadicDomain> {
    let theta = GridNode::root(theta).theta();
    let mut nodes = Vec::new();
    for level in 1..=max_level {
        for j in 0..(1u64 << level) {
            if rng.gen_bool(density) {
                nodes.push(GridNode::new(theta, level, j)?);
            }
        }
    }
    if nodes.is_empty() {
        let level = rng.gen_range(1..=max_level.max(1));
        nodes.push(GridNode::new(theta, level, rng.gen_range(0..(1u64 << level)))?);
    }
    DyadicDomain::new(theta, nodes)
}
