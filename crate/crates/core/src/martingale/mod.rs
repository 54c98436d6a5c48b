//! Dyadic martingales on `[0,1]`, Azuma counting, point sequences on tree
//! addresses, the trace quantities and the divergent construction.

mod builder;
mod sequence;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, Error, Result};

pub use builder::{counterexample_build, divergence_terms, BuildSpec, Counterexample, GenerationLedger, Thresholds};
pub use sequence::{
    carleson_sup, default_probes, default_r_grid, rho_terms, trace_sup_i, trace_weak_l1, CarlesonReport, PointSeq, SeqEntry, TraceReport,
    WeakL1,
};

/// Deepest supported interval level.
pub const MAX_INTERVAL_LEVEL: u32 = 120;

/// `[j 2^-n, (j+1) 2^-n)`, addressed by the binary digits of `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicInterval {
    level: u32,
    index: u128,
}

impl DyadicInterval {
    pub fn new(level: u32, index: u128) -> Result<Self> {
        if level > MAX_INTERVAL_LEVEL {
            return Err(out_of_range(format!("level {level} above {MAX_INTERVAL_LEVEL}")));
        }
        if index >> level != 0 {
            return Err(out_of_range(format!("index {index} not below 2^{level}")));
        }
        Ok(Self { level, index })
    }

    pub fn root() -> Self {
        Self { level: 0, index: 0 }
    }

    /// Parses a string of binary digits (most significant first).
    pub fn parse(address: &str) -> Result<Self> {
        let mut node = Self::root();
        for c in address.chars() {
            let bit = match c {
                '0' => 0,
                '1' => 1,
                _ => return Err(Error::Malformed(format!("address {address:?}: digit {c:?} is not binary"))),
            };
            if node.level == MAX_INTERVAL_LEVEL {
                return Err(out_of_range(format!("address {address:?} deeper than {MAX_INTERVAL_LEVEL}")));
            }
            node = node.child(bit);
        }
        Ok(node)
    }

    pub fn address(&self) -> String {
        (0..self.level).rev().map(|b| if (self.index >> b) & 1 == 1 { '1' } else { '0' }).collect()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn index(&self) -> u128 {
        self.index
    }

    pub fn length(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// `1 - |z|^2` at the node point (modulus `1 - |I|`).
    pub fn mass(&self) -> f64 {
        let l = self.length();
        l * (2.0 - l)
    }

    pub fn child(&self, bit: u8) -> Self {
        debug_assert!(self.level < MAX_INTERVAL_LEVEL);
        Self { level: self.level + 1, index: (self.index << 1) | bit as u128 }
    }

    pub fn children(&self) -> [Self; 2] {
        [self.child(0), self.child(1)]
    }

    pub fn parent(&self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, index: self.index >> 1 })
    }

    /// Binary digit `i` (0-based from the top) of the address.
    pub fn digit(&self, i: u32) -> u8 {
        ((self.index >> (self.level - 1 - i)) & 1) as u8
    }

    pub fn is_ancestor_of(&self, other: &Self) -> bool {
        other.level >= self.level && other.index >> (other.level - self.level) == self.index
    }

    /// Same-level right neighbour inside `[0,1]`.
    pub fn right_neighbor(&self) -> Option<Self> {
        (self.index + 1 < 1u128 << self.level).then(|| Self { level: self.level, index: self.index + 1 })
    }

    /// Left endpoint as a fraction `num / 2^120`.
    pub(crate) fn start_key(&self) -> u128 {
        self.index << (MAX_INTERVAL_LEVEL - self.level)
    }

    pub(crate) fn end_key(&self) -> u128 {
        (self.index + 1) << (MAX_INTERVAL_LEVEL - self.level)
    }
}

impl Serialize for DyadicInterval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.address())
    }
}

impl<'de> Deserialize<'de> for DyadicInterval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Values on a complete binary tree, heap-indexed.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeMartingale {
    depth: u32,
    values: Vec<f64>,
    steps: Vec<f64>,
}

impl TreeMartingale {
    /// Checks the midpoint law exactly (up to `1e-12` relative rounding).
    pub fn new(depth: u32, values: Vec<f64>) -> Result<Self> {
        if depth > 26 {
            return Err(out_of_range(format!("materialized depth {depth} above 26")));
        }
        let n = (1usize << (depth + 1)) - 1;
        if values.len() != n {
            return Err(Error::Malformed(format!("{} values for depth {depth} (need {n})", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Malformed("non-finite martingale value".into()));
        }
        let mut steps = vec![0.0; depth as usize + 1];
        for h in 0..(n - 1) / 2 {
            let (a, b) = (values[2 * h + 1], values[2 * h + 2]);
            let m = values[h];
            let level = (usize::BITS - (h + 1).leading_zeros()) as usize;
            if ((a + b) / 2.0 - m).abs() > 1e-12 * (1.0 + m.abs()) {
                return Err(Error::Malformed(format!("midpoint law fails at heap index {h}")));
            }
            steps[level] = f64::max(steps[level], (a - m).abs().max((b - m).abs()));
        }
        Ok(Self { depth, values, steps })
    }

    /// `M_child = M_parent ± 1` with independent fair signs.
    pub fn random_signs(depth: u32, rng: &mut impl Rng) -> Result<Self> {
        if depth > 26 {
            return Err(out_of_range(format!("materialized depth {depth} above 26")));
        }
        let n = (1usize << (depth + 1)) - 1;
        let mut values = vec![0.0; n];
        for h in 0..(n - 1) / 2 {
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            values[2 * h + 1] = values[h] + s;
            values[2 * h + 2] = values[h] - s;
        }
        Self::new(depth, values)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A dyadic martingale: closed-form evaluators or a materialized tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Martingale {
    RandomWalk,
    Kahane,
    Materialized(TreeMartingale),
}

impl Martingale {
    pub fn depth_limit(&self) -> Option<u32> {
        match self {
            Self::Materialized(t) => Some(t.depth),
            _ => None,
        }
    }

    pub fn value(&self, node: &DyadicInterval) -> Result<f64> {
        Ok(match self {
            Self::RandomWalk => 2.0 * node.index.count_ones() as f64 - node.level as f64,
            Self::Kahane => {
                let mut k = 0i64;
                for pair in 0..node.level / 2 {
                    k += if node.digit(2 * pair) == node.digit(2 * pair + 1) { 1 } else { -1 };
                }
                k as f64
            }
            Self::Materialized(t) => {
                if node.level > t.depth {
                    return Err(out_of_range(format!("level {} beyond materialized depth {}", node.level, t.depth)));
                }
                t.values[(1usize << node.level) - 1 + node.index as usize]
            }
        })
    }

    /// Value at `child` given the parent's value.
    pub fn child_value(&self, child: &DyadicInterval, parent_value: f64) -> f64 {
        match self {
            Self::RandomWalk => parent_value + if child.index & 1 == 1 { 1.0 } else { -1.0 },
            Self::Kahane => {
                if child.level % 2 == 1 {
                    parent_value
                } else if (child.index & 1) == ((child.index >> 1) & 1) {
                    parent_value + 1.0
                } else {
                    parent_value - 1.0
                }
            }
            Self::Materialized(t) => t.values[(1usize << child.level) - 1 + child.index as usize],
        }
    }

    /// Bound on `|M_child - M_parent|` for children at `level`.
    pub fn max_step(&self, level: u32) -> f64 {
        match self {
            Self::RandomWalk => 1.0,
            Self::Kahane => {
                if level.is_multiple_of(2) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Materialized(t) => t.steps.get(level as usize).copied().unwrap_or(0.0),
        }
    }

    fn check_depth(&self, depth: u32) -> Result<()> {
        match self.depth_limit() {
            Some(d) if depth > d => Err(out_of_range(format!("depth {depth} beyond materialized depth {d}"))),
            _ if depth > MAX_INTERVAL_LEVEL => Err(out_of_range(format!("depth {depth} above {MAX_INTERVAL_LEVEL}"))),
            _ => Ok(()),
        }
    }

    /// Values of one level, left to right.
    pub fn level_values(&self, level: u32) -> Result<Vec<f64>> {
        self.check_depth(level)?;
        if level > 30 {
            return Err(out_of_range(format!("level {level} too wide to list")));
        }
        let mut row = vec![self.value(&DyadicInterval::root())?];
        for l in 1..=level {
            let mut next = Vec::with_capacity(row.len() * 2);
            for (j, v) in row.iter().enumerate() {
                for bit in 0..2u8 {
                    let child = DyadicInterval { level: l, index: ((j as u128) << 1) | bit as u128 };
                    next.push(self.child_value(&child, *v));
                }
            }
            row = next;
        }
        Ok(row)
    }
}

/// Largest `|M_I - (M_{I0} + M_{I1})/2|`: every node above `exhaustive` levels, then random paths down to `depth`.
pub fn midpoint_violation(m: &Martingale, exhaustive: u32, depth: u32, paths: usize, rng: &mut impl Rng) -> Result<f64> {
    m.check_depth(depth.max(exhaustive))?;
    let mut worst: f64 = 0.0;
    let check = |node: &DyadicInterval| -> Result<f64> {
        let v = m.value(node)?;
        let [a, b] = node.children();
        Ok(((m.value(&a)? + m.value(&b)?) / 2.0 - v).abs())
    };
    for level in 0..exhaustive {
        for j in 0..(1u128 << level) {
            worst = worst.max(check(&DyadicInterval { level, index: j })?);
        }
    }
    for _ in 0..paths {
        let mut node = DyadicInterval::root();
        while node.level < depth {
            worst = worst.max(check(&node)?);
            node = node.child(rng.gen_range(0..2));
        }
    }
    Ok(worst)
}

/// `sup |M_I - M_J|` over same-level adjacent intervals of levels `1..=depth`.
pub fn bloch_seminorm(m: &Martingale, depth: u32) -> Result<f64> {
    let mut best: f64 = 0.0;
    for level in 1..=depth {
        let row = m.level_values(level)?;
        for w in row.windows(2) {
            best = best.max((w[0] - w[1]).abs());
        }
    }
    Ok(best)
}

/// `l_I(ε,k)`: intervals `J ⊂ I` at relative depth `k` with `|M_J - M_I| > εk`, by pruned enumeration.
pub fn azuma_counts(m: &Martingale, base: &DyadicInterval, eps: f64, k: u32) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(out_of_range(format!("ε = {eps} must be positive")));
    }
    if k > 62 {
        return Err(out_of_range(format!("relative depth {k} above 62")));
    }
    m.check_depth(base.level + k)?;
    let target = base.level + k;
    // remaining[l] = largest possible change from level l down to the target level
    let mut remaining = vec![0.0; k as usize + 1];
    for i in (0..k as usize).rev() {
        remaining[i] = remaining[i + 1] + m.max_step(base.level + i as u32 + 1);
    }
    let threshold = eps * k as f64;
    let m0 = m.value(base)?;
    let mut count = 0u64;
    let mut stack = vec![(*base, m0)];
    while let Some((node, v)) = stack.pop() {
        let d = (v - m0).abs();
        let rem = remaining[(node.level - base.level) as usize];
        if node.level == target {
            if d > threshold {
                count += 1;
            }
            continue;
        }
        if d + rem <= threshold {
            continue;
        }
        if d - rem > threshold {
            count += 1u64 << (target - node.level);
            continue;
        }
        for child in node.children() {
            stack.push((child, m.child_value(&child, v)));
        }
    }
    Ok(count)
}

/// One `(ε, k, l_I(ε,k))` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AzumaPoint {
    pub eps: f64,
    pub k: u32,
    pub count: u64,
}

/// Least-squares fit of `log(l / 2^k) ≈ log C - γ ε² k` over nonzero counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AzumaFit {
    pub gamma: f64,
    /// `exp` of the fitted intercept.
    pub c_fit: f64,
    /// Smallest `C` with `l <= 2^k C e^{-γ ε² k}` at every grid point, for the fitted `γ`.
    pub c_envelope: f64,
    pub points: Vec<AzumaPoint>,
    /// Grid points with a zero count (left out of the fit).
    pub zero_counts: usize,
}

pub fn azuma_fit(m: &Martingale, base: &DyadicInterval, eps_grid: &[f64], k_grid: &[u32]) -> Result<AzumaFit> {
    let mut points = Vec::new();
    for &eps in eps_grid {
        for &k in k_grid {
            points.push(AzumaPoint { eps, k, count: azuma_counts(m, base, eps, k)? });
        }
    }
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.count > 0)
        .map(|p| (p.eps * p.eps * p.k as f64, (p.count as f64).ln() - p.k as f64 * std::f64::consts::LN_2))
        .collect();
    if xy.len() < 2 {
        return Err(Error::Precondition(format!("only {} nonzero counts; nothing to fit", xy.len())));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("all grid points share one value of ε²k".into()));
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let gamma = -sxy / sxx;
    let intercept = my + gamma * mx;
    let c_envelope = xy.iter().map(|(x, y)| (y + gamma * x).exp()).fold(0.0, f64::max);
    Ok(AzumaFit { gamma, c_fit: intercept.exp(), c_envelope, zero_counts: points.len() - xy.len(), points })
}
