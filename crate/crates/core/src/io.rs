//! JSON schemas for weights, domains, fixtures and martingale specs, and file helpers.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::averaging::{ContinuousDomain, SampledWeight};
use crate::error::{Error, Result};
use crate::geometry::{GridNode, UnitArc};
use crate::lattice::{DyadicDomain, TreeWeight};
use crate::martingale::{Martingale, TreeMartingale};

/// `{theta, depth, nodes: [[level, index, "value"], ...]}`; values are decimal strings that round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightJson {
    pub theta: f64,
    pub depth: u32,
    pub nodes: Vec<(u32, u64, String)>,
}

impl From<TreeWeight> for WeightJson {
    fn from(w: TreeWeight) -> Self {
        let nodes = w.nodes().zip(w.values()).map(|(n, v)| (n.level(), n.index(), format!("{v:?}"))).collect();
        Self { theta: w.theta(), depth: w.depth(), nodes }
    }
}

impl TryFrom<WeightJson> for TreeWeight {
    type Error = Error;
    fn try_from(j: WeightJson) -> Result<Self> {
        if j.depth > crate::lattice::MAX_DEPTH {
            return Err(Error::Malformed(format!("depth {} above {}", j.depth, crate::lattice::MAX_DEPTH)));
        }
        let n = (1usize << (j.depth + 1)) - 1;
        let mut values = vec![None; n];
        for (level, index, text) in &j.nodes {
            let node = GridNode::new(j.theta, *level, *index).map_err(|e| Error::Malformed(e.to_string()))?;
            if *level > j.depth {
                return Err(Error::Malformed(format!("node ({level},{index}) below depth {}", j.depth)));
            }
            let v: f64 = text.trim().parse().map_err(|_| Error::Malformed(format!("value {text:?} is not a number")))?;
            if values[node.heap_index()].replace(v).is_some() {
                return Err(Error::Malformed(format!("node ({level},{index}) listed twice")));
            }
        }
        let values: Option<Vec<f64>> = values.into_iter().collect();
        let values = values.ok_or_else(|| Error::Malformed(format!("weight must list all {n} nodes")))?;
        TreeWeight::new(j.theta, j.depth, values)
    }
}

/// `{theta, nodes: [[level, index], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainJson {
    pub theta: f64,
    pub nodes: Vec<(u32, u64)>,
}

impl From<DyadicDomain> for DomainJson {
    fn from(d: DyadicDomain) -> Self {
        Self { theta: d.theta(), nodes: d.members().map(|n| (n.level(), n.index())).collect() }
    }
}

impl TryFrom<DomainJson> for DyadicDomain {
    type Error = Error;
    fn try_from(j: DomainJson) -> Result<Self> {
        let nodes = j
            .nodes
            .iter()
            .map(|&(l, i)| GridNode::new(j.theta, l, i).map_err(|e| Error::Malformed(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        DyadicDomain::new(j.theta, nodes)
    }
}

/// Closed-form continuous weights available to configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Constant {
        value: f64,
    },
    /// `(1-|z|²)^alpha`.
    RadialPower {
        alpha: f64,
    },
}

impl WeightSpec {
    pub fn build(&self) -> Result<SampledWeight> {
        match *self {
            Self::Constant { value } if value > 0.0 && value.is_finite() => Ok(SampledWeight::constant(value)),
            Self::Constant { value } => Err(Error::OutOfRange(format!("constant weight {value} must be positive"))),
            Self::RadialPower { alpha } if alpha.is_finite() => Ok(SampledWeight::radial_power(alpha)),
            Self::RadialPower { alpha } => Err(Error::OutOfRange(format!("exponent {alpha}"))),
        }
    }
}

/// A continuous domain `Ω = ∪ T(I)` with a weight given on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFixture {
    pub name: String,
    pub generators: Vec<UnitArc>,
    pub weight: WeightSpec,
    /// Tree depth for the per-θ pipelines.
    pub depth: u32,
}

impl ContinuousFixture {
    pub fn domain(&self) -> Result<ContinuousDomain> {
        ContinuousDomain::new(self.generators.clone())
    }
}

/// `{kind: random_walk | kahane | materialized, depth, seed?, values?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSpec {
    pub kind: MartingaleKind,
    #[serde(default)]
    pub depth: Option<u32>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleKind {
    RandomWalk,
    Kahane,
    Materialized,
}

impl MartingaleSpec {
    pub fn kahane() -> Self {
        Self { kind: MartingaleKind::Kahane, depth: None, seed: None, values: None }
    }

    /// Materialized specs take explicit `values`, or a `seed` for a random ±1-increment tree.
    pub fn build(&self) -> Result<Martingale> {
        match self.kind {
            MartingaleKind::RandomWalk => Ok(Martingale::RandomWalk),
            MartingaleKind::Kahane => Ok(Martingale::Kahane),
            MartingaleKind::Materialized => {
                let depth = self.depth.ok_or_else(|| Error::Malformed("materialized martingale needs a depth".into()))?;
                match (&self.values, self.seed) {
                    (Some(v), _) => Ok(Martingale::Materialized(TreeMartingale::new(depth, v.clone())?)),
                    (None, Some(seed)) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        Ok(Martingale::Materialized(TreeMartingale::random_signs(depth, &mut rng)?))
                    }
                    (None, None) => Err(Error::Malformed("materialized martingale needs values or a seed".into())),
                }
            }
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Malformed(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}

/// Directory holding the bundled fixtures.
pub fn fixture_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The continuous-pipeline fixtures shipped with the crate, sorted by file name.
pub fn continuous_fixtures() -> Result<Vec<ContinuousFixture>> {
    let dir = fixture_dir().join("continuous");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .map_err(|e| Error::Malformed(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_json_round_trips_bitwise() {
        let w = TreeWeight::from_fn(0.3, 4, |n| 1.0 / 3.0 + n.index() as f64 * 1e-300 + (n.level() as f64).exp()).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        let back: TreeWeight = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn incomplete_weight_is_rejected() {
        let j = WeightJson { theta: 0.0, depth: 1, nodes: vec![(0, 0, "1".into()), (1, 0, "2".into())] };
        assert!(TreeWeight::try_from(j).is_err());
    }

    #[test]
    fn domain_json_round_trips() {
        let d = DyadicDomain::new(0.25, [GridNode::new(0.25, 2, 1).unwrap(), GridNode::new(0.25, 3, 7).unwrap()]).unwrap();
        let back: DyadicDomain = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
