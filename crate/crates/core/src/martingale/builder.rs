//! Generation-by-generation construction of a Carleson sequence along which
//! the martingale is large.

use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sequence::{PointSeq, SeqEntry};
use super::{DyadicInterval, Martingale, MAX_INTERVAL_LEVEL};
use crate::error::{out_of_range, Error, Result};

/// Threshold sequence `s_j`, `j >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Thresholds {
    /// `s_j = c j log(j+1)`.
    JLogJ {
        c: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for Thresholds {
    fn default() -> Self {
        Self::JLogJ { c: 2.0 }
    }
}

impl Thresholds {
    pub fn value(&self, j: u32) -> Result<f64> {
        match self {
            Self::JLogJ { c } => Ok(c * j as f64 * (j as f64 + 1.0).ln()),
            Self::Explicit { values } => {
                values.get(j as usize - 1).copied().ok_or_else(|| out_of_range(format!("no threshold for generation {j}")))
            }
        }
    }

    pub fn list(&self, generations: u32) -> Result<Vec<f64>> {
        let s: Vec<f64> = (1..=generations).map(|j| self.value(j)).collect::<Result<_>>()?;
        if s.iter().any(|v| !v.is_finite()) || s.windows(2).any(|w| w[1] <= w[0]) || s.first().is_some_and(|v| *v <= 0.0) {
            return Err(Error::Precondition(format!("thresholds {s:?} must be positive and increasing")));
        }
        Ok(s)
    }
}

/// Builder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildSpec {
    pub thresholds: Thresholds,
    pub generations: u32,
    pub depth_budget: u32,
    /// Nodes one parent may expand before giving up.
    pub node_budget: u64,
    /// Points one generation may hold; each becomes a parent of the next search.
    pub point_budget: usize,
}

impl Default for BuildSpec {
    fn default() -> Self {
        Self { thresholds: Thresholds::default(), generations: 4, depth_budget: 60, node_budget: 4_000_000, point_budget: 100_000 }
    }
}

/// Per-generation record of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLedger {
    pub generation: u32,
    pub threshold: f64,
    pub points: usize,
    pub mass: f64,
    /// Extremes over parents of (successor mass) / (parent mass).
    pub min_parent_ratio: f64,
    pub max_parent_ratio: f64,
    /// Smallest `M²/log(1/(1-|z|²))` over the generation.
    pub min_score: f64,
    pub deepest_level: u32,
    pub nodes_expanded: u64,
    /// Successors of each parent have pairwise disjoint intervals (hence disjoint boxes).
    pub separated: bool,
}

/// Output of [`counterexample_build`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub sequence: PointSeq,
    pub thresholds: Vec<f64>,
    pub ledger: Vec<GenerationLedger>,
    /// Generations completed (equals the requested count on success).
    pub completed: u32,
    /// For Markov martingales: the largest generation-1 mass ratio compatible with
    /// completing every generation within the depth budget (below ¼ means infeasible).
    pub best_root_ratio: Option<f64>,
    /// Why the construction stopped early, if it did.
    pub exhausted: Option<String>,
}

fn score(value: f64, node: &DyadicInterval) -> f64 {
    value * value / -node.mass().ln()
}

/// Exact look-ahead for martingales whose future depends only on (level, value).
///
/// `cover[j][l][K]` is `E[(2 - |J|) 1{hit}]` for the first node `J` strictly below a node
/// at level `l` with value `K` that qualifies for generation `j + 1`; dividing by
/// `2 - 2^-l` gives the largest successor mass ratio available below that node.
struct Lookahead {
    budget: u32,
    offset: i64,
    cover: Vec<Vec<Vec<f64>>>,
    viable: Vec<Vec<Vec<bool>>>,
}

impl Lookahead {
    fn new(m: &Martingale, thresholds: &[f64], budget: u32) -> Option<Self> {
        let kahane = match m {
            Martingale::Kahane => true,
            Martingale::RandomWalk => false,
            Martingale::Materialized(_) => return None,
        };
        let offset = budget as i64;
        let width = 2 * budget as usize + 1;
        let levels = budget as usize + 1;
        let gens = thresholds.len();
        let len = |l: usize| (-(l as f64)).exp2();
        let sc = |l: usize, k: i64| if l == 0 { 0.0 } else { (k * k) as f64 / -(len(l) * (2.0 - len(l))).ln() };
        // viable[j]: a generation-(j+1) node here admits generation j+2 successors
        let mut viable = vec![vec![vec![true; width]; levels]; gens];
        let mut cover = vec![vec![vec![0.0; width]; levels]; gens];
        for j in (0..gens).rev() {
            let qualifies = |l: usize, k: i64, viable: &Vec<Vec<Vec<bool>>>| {
                let i = (k + offset) as usize;
                i < width && sc(l, k) >= thresholds[j] && viable[j][l][i]
            };
            let mut g = vec![vec![0.0; width]; levels];
            for l in (0..levels - 1).rev() {
                let child = l + 1;
                for i in 0..width {
                    let k = i as i64 - offset;
                    let steps: [i64; 2] = if kahane && child % 2 == 1 { [0, 0] } else { [1, -1] };
                    let mut acc = 0.0;
                    for d in steps {
                        let kc = k + d;
                        let ic = (kc + offset) as usize;
                        if kc.abs() > offset {
                            continue;
                        }
                        acc += if qualifies(child, kc, &viable) { 2.0 - len(child) } else { g[child][ic] };
                    }
                    g[l][i] = 0.5 * acc;
                }
            }
            if j > 0 {
                for l in 0..levels {
                    for i in 0..width {
                        viable[j - 1][l][i] = g[l][i] / (2.0 - len(l)) >= 0.25;
                    }
                }
            }
            cover[j] = g;
        }
        Some(Self { budget, offset, cover, viable })
    }

    fn index(&self, node: &DyadicInterval, v: f64) -> Option<(usize, usize)> {
        let i = v as i64 + self.offset;
        (node.level() <= self.budget && i >= 0 && (i as usize) < self.cover[0][0].len()).then(|| (node.level() as usize, i as usize))
    }

    /// Largest successor mass ratio for generation `j + 1` below the node.
    fn ratio(&self, j: usize, node: &DyadicInterval, v: f64) -> f64 {
        self.index(node, v).map_or(0.0, |(l, i)| self.cover[j][l][i] / (2.0 - node.length()))
    }

    fn viable(&self, j: usize, node: &DyadicInterval, v: f64) -> bool {
        self.index(node, v).is_some_and(|(l, i)| self.viable[j][l][i])
    }
}

struct Pending(f64, DyadicInterval, f64);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // ties go to the leftmost node so the order is reproducible
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

struct ParentOutcome {
    chosen: Vec<(DyadicInterval, f64)>,
    ratio: f64,
    expanded: u64,
}

/// Successors of one parent: nodes with score `>= s` and total mass in `[¼,½]` of the parent's.
#[allow(clippy::too_many_arguments)]
fn successors(
    m: &Martingale,
    parent: DyadicInterval,
    parent_value: f64,
    j: usize,
    s: f64,
    spec: &BuildSpec,
    slack: &[f64],
    look: Option<&Lookahead>,
) -> Result<ParentOutcome> {
    let pmass = parent.mass();
    let (lo, hi) = (0.25 * pmass, 0.5 * pmass);
    // can some descendant at a level <= budget reach the threshold?
    let reachable = |node: &DyadicInterval, v: f64| -> bool {
        if let Some(look) = look {
            return look.ratio(j, node, v) > 0.0;
        }
        let mut bound = v.abs();
        for level in node.level() + 1..=spec.depth_budget {
            bound += m.max_step(level);
            if bound * bound >= s * slack[level as usize] {
                return true;
            }
        }
        false
    };
    let mut chosen = Vec::new();
    let mut total = 0.0;
    let mut expanded = 0u64;
    let mut visit = |node: DyadicInterval, v: f64, next: &mut Vec<(DyadicInterval, f64)>| -> Result<Option<ParentOutcome>> {
        if node.level() >= spec.depth_budget {
            return Ok(None);
        }
        expanded += 1;
        if expanded > spec.node_budget {
            return Err(Error::NonConvergence(format!(
                "parent {:?}: node budget {} exhausted at mass ratio {:.4}",
                parent.address(),
                spec.node_budget,
                total / pmass
            )));
        }
        for child in node.children() {
            let cv = m.child_value(&child, v);
            let qualifies = score(cv, &child) >= s && look.is_none_or(|l| l.viable(j, &child, cv));
            if qualifies && total + child.mass() <= hi {
                total += child.mass();
                chosen.push((child, cv));
                if total >= lo {
                    return Ok(Some(ParentOutcome { chosen: std::mem::take(&mut chosen), ratio: total / pmass, expanded }));
                }
            } else if reachable(&child, cv) {
                next.push((child, cv));
            }
        }
        Ok(None)
    };
    if let Some(lk) = look {
        // best first: the node with the most successor mass still available below it
        let key = |node: &DyadicInterval, v: f64| lk.ratio(j, node, v) * node.mass();
        let mut heap = BinaryHeap::from([Pending(f64::INFINITY, parent, parent_value)]);
        while let Some(Pending(_, node, v)) = heap.pop() {
            let mut kids = Vec::new();
            if let Some(done) = visit(node, v, &mut kids)? {
                return Ok(done);
            }
            heap.extend(kids.into_iter().map(|(c, cv)| Pending(key(&c, cv), c, cv)));
        }
    } else {
        // shallowest first
        let mut frontier = vec![(parent, parent_value)];
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for (node, v) in frontier {
                if let Some(done) = visit(node, v, &mut next)? {
                    return Ok(done);
                }
            }
            frontier = next;
        }
    }
    let total = chosen.iter().map(|(n, _)| n.mass()).sum::<f64>();
    Err(Error::NonConvergence(format!(
        "parent {:?}: depth budget {} exhausted at mass ratio {:.4} (needs 0.25)",
        parent.address(),
        spec.depth_budget,
        total / pmass
    )))
}

/// Builds generations `Λ_1, …, Λ_J`; each `Λ_{j+1}` collects, below every point of `Λ_j`,
/// disjoint descendants with `M²/log(1/(1-|z|²)) >= s_{j+1}` and mass in `[¼,½]` of the parent's.
pub fn counterexample_build(m: &Martingale, spec: &BuildSpec) -> Result<Counterexample> {
    if spec.generations == 0 {
        return Err(out_of_range("at least one generation"));
    }
    if spec.depth_budget == 0 || spec.depth_budget > MAX_INTERVAL_LEVEL.min(m.depth_limit().unwrap_or(MAX_INTERVAL_LEVEL)) {
        return Err(out_of_range(format!("depth budget {} not supported by the martingale", spec.depth_budget)));
    }
    let thresholds = spec.thresholds.list(spec.generations)?;
    let slack: Vec<f64> = (0..=spec.depth_budget)
        .map(|l| {
            let len = (-(l as f64)).exp2();
            -(len * (2.0 - len)).ln()
        })
        .collect();
    let look = Lookahead::new(m, &thresholds, spec.depth_budget);
    let root = (DyadicInterval::root(), m.value(&DyadicInterval::root())?);
    let best_root_ratio = look.as_ref().map(|l| l.ratio(0, &root.0, root.1));
    let mut parents = vec![root];
    let mut entries = Vec::new();
    let mut ledger = Vec::new();
    let mut exhausted = None;
    for (j, &s) in (1u32..).zip(&thresholds) {
        let outcomes: Vec<Result<ParentOutcome>> =
            parents.par_iter().map(|&(p, v)| successors(m, p, v, j as usize - 1, s, spec, &slack, look.as_ref())).collect();
        let mut failure = None;
        let mut generation = Vec::new();
        let (mut rmin, mut rmax, mut expanded) = (f64::INFINITY, 0.0f64, 0u64);
        let mut separated = true;
        for o in outcomes {
            match o {
                Ok(o) => {
                    rmin = rmin.min(o.ratio);
                    rmax = rmax.max(o.ratio);
                    expanded += o.expanded;
                    let mut keys: Vec<(u128, u128)> = o.chosen.iter().map(|(n, _)| (n.start_key(), n.end_key())).collect();
                    keys.sort_unstable();
                    separated &= keys.windows(2).all(|w| w[1].0 >= w[0].1);
                    generation.extend(o.chosen);
                }
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(e) = failure {
            exhausted = Some(format!("generation {j}: {e}"));
            break;
        }
        if generation.len() > spec.point_budget {
            exhausted = Some(format!("generation {j}: {} points exceed the point budget {}", generation.len(), spec.point_budget));
            break;
        }
        generation.sort_by_key(|(n, _)| (n.start_key(), n.level()));
        ledger.push(GenerationLedger {
            generation: j,
            threshold: s,
            points: generation.len(),
            mass: generation.iter().map(|(n, _)| n.mass()).sum(),
            min_parent_ratio: rmin,
            max_parent_ratio: rmax,
            min_score: generation.iter().map(|(n, v)| score(*v, n)).fold(f64::INFINITY, f64::min),
            deepest_level: generation.iter().map(|(n, _)| n.level()).max().unwrap_or(0),
            nodes_expanded: expanded,
            separated,
        });
        entries.extend(generation.iter().map(|(n, _)| SeqEntry { address: *n, generation: j }));
        parents = generation;
    }
    Ok(Counterexample {
        sequence: PointSeq::new(0.0, entries)?,
        thresholds,
        completed: ledger.len() as u32,
        best_root_ratio,
        ledger,
        exhausted,
    })
}

/// `t_j = e^{λ s_j} Σ_{Λ_j} (1-|z|²)` for `j = 1..=len(s)`.
pub fn divergence_terms(seq: &PointSeq, thresholds: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let masses = seq.generation_masses();
    thresholds
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mass = masses.get(i + 1).copied().unwrap_or(0.0);
            let t = (lambda * s).exp() * mass;
            if t.is_finite() {
                Ok(t)
            } else {
                Err(out_of_range(format!("t_{} overflows at λ = {lambda}", i + 1)))
            }
        })
        .collect()
}
