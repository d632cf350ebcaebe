//! Scenario configs: a model, a choice of `H`, numerics and tolerances.

use super::ResidualTolerance;
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::holonomy::{generate_algebra, Subalgebra, DEFAULT_RANK_TOL};
use crate::models::ModelSpec;
use crate::wedge::{pair_index, TwoForm};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HolonomySpec {
    /// The subalgebra spanned by `e_a∧e_b` for the listed planes, in the initial frames.
    Explicit { planes: Vec<[usize; 2]> },
    Trivial,
    Full,
    /// Generated by `∇^k Rm`, `k ≤ kmax`, pooled over all points at `t = 0`.
    Initial,
    /// As `Initial`, at `t = tEnd` in the evolved frames.
    Terminal,
}

impl HolonomySpec {
    /// The subalgebra for the explicit kinds; `None` for the curvature-generated ones.
    pub fn explicit(&self, n: usize) -> Result<Option<Subalgebra>> {
        match self {
            HolonomySpec::Trivial => Ok(Some(Subalgebra::trivial(n))),
            HolonomySpec::Full => Ok(Some(Subalgebra::full(n))),
            HolonomySpec::Explicit { planes } => {
                let mut seeds = Vec::with_capacity(planes.len());
                for &[a, b] in planes {
                    if a >= n || b >= n || a == b {
                        return Err(Error::Config(format!("invalid plane [{a}, {b}] for n = {n}")));
                    }
                    let w = TwoForm::unit(n, pair_index(n, a.min(b), a.max(b)));
                    seeds.push(if a < b { w } else { w.scale(-1.0) });
                }
                if seeds.is_empty() {
                    return Ok(Some(Subalgebra::trivial(n)));
                }
                let h = generate_algebra(&seeds, DEFAULT_RANK_TOL)?;
                if h.dim() != planes.len() {
                    return Err(Error::Config(format!(
                        "planes {planes:?} do not span a subalgebra (closure has dimension {})",
                        h.dim()
                    )));
                }
                Ok(Some(h))
            }
            HolonomySpec::Initial | HolonomySpec::Terminal => Ok(None),
        }
    }
}

fn default_every() -> usize {
    10
}

fn default_kmax() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct Tolerances {
    /// Rank cutoff for generated algebras.
    pub rank: f64,
    /// Bound on `sup|Rm∘P̂|` and `sup|∇P̂|` in a holonomy-preserving run.
    pub preservation: f64,
    /// Relative bound for `im Rm(t) ⊂ H(T)`.
    pub inclusion: f64,
    pub residual: ResidualTolerance,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-8,
            preservation: 1e-6,
            inclusion: 1e-6,
            residual: ResidualTolerance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelSpec,
    pub holonomy: HolonomySpec,
    /// `H` for the identity checks, when it differs from `holonomy`.
    #[serde(default)]
    pub probe: Option<HolonomySpec>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default = "default_every")]
    pub output_every: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn probe_spec(&self) -> &HolonomySpec {
        self.probe.as_ref().unwrap_or(&self.holonomy)
    }

    pub fn validate(&self) -> Result<()> {
        let slice = self.model.initial_slice().map_err(|e| Error::Config(e.to_string()))?;
        self.flow.validate(&slice)?;
        self.holonomy.explicit(self.model.dim())?;
        if let Some(p) = &self.probe {
            p.explicit(self.model.dim())?;
        }
        if self.output_every == 0 {
            return Err(Error::Config("outputEvery must be positive".into()));
        }
        Ok(())
    }
}

const BUILTIN: [(&str, &str); 7] = [
    ("flat-torus", include_str!("../../scenarios/flat-torus.toml")),
    ("round-s3", include_str!("../../scenarios/round-s3.toml")),
    ("product-s2xs2", include_str!("../../scenarios/product-s2xs2.toml")),
    ("berger-114", include_str!("../../scenarios/berger-114.toml")),
    ("warped-t3", include_str!("../../scenarios/warped-t3.toml")),
    ("warped-t3-split", include_str!("../../scenarios/warped-t3-split.toml")),
    ("conformal-t2", include_str!("../../scenarios/conformal-t2.toml")),
];

pub fn builtin_scenarios() -> Vec<Scenario> {
    BUILTIN
        .iter()
        .map(|(_, text)| Scenario::from_toml(text).expect("built-in scenario parses"))
        .collect()
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml(text).expect("built-in scenario parses"))
        .ok_or_else(|| {
            let names: Vec<&str> = BUILTIN.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown scenario '{name}' (known: {})", names.join(", ")))
        })
}
