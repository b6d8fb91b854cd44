//! JSON design descriptions.

use serde::{Deserialize, Serialize};

use super::{Design, DesignOptions, McConfig, DEFAULT_SUPPORT_CAP};
use crate::error::{Error, Result};
use crate::prob::{self, Rational};

/// Default replicate count when `"mode": "mc"` gives none.
pub const DEFAULT_MC_REPLICATES: usize = 10_000;

/// A probability written as a JSON number or as a string such as `"1/3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbValue {
    Number(f64),
    Text(String),
}

impl ProbValue {
    /// Numbers are read through their shortest decimal form, so `0.1` is 1/10.
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            ProbValue::Number(x) => {
                if !x.is_finite() {
                    return Err(Error::NonFinite("probability"));
                }
                prob::parse(&format!("{x}"))
            }
            ProbValue::Text(s) => prob::parse(s),
        }
    }
}

/// Bernoulli probabilities: a single treatment probability (k = 2), one
/// vector of arm probabilities shared by all units, or one vector per unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BernoulliProbs {
    Treatment(ProbValue),
    Shared(Vec<ProbValue>),
    PerUnit(Vec<Vec<ProbValue>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    /// 1-based unit ids covered by the block.
    pub units: Vec<usize>,
    pub design: DesignSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPointSpec {
    /// 1-based arm of every unit.
    pub arms: Vec<usize>,
    pub prob: ProbValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DesignKind {
    Bernoulli {
        probs: BernoulliProbs,
    },
    Complete {
        counts: Vec<usize>,
    },
    Paired {
        pairs: Vec<[usize; 2]>,
    },
    Block {
        blocks: Vec<BlockSpec>,
    },
    Cluster {
        clusters: Vec<usize>,
        design: Box<DesignSpec>,
    },
    Custom {
        support: Vec<SupportPointSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSpec {
    Exact,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(flatten)]
    pub kind: DesignKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
}

impl DesignSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Options from the top-level mode fields. `"mode": "mc"` requires a seed.
    pub fn options(&self) -> Result<DesignOptions> {
        let support_cap = self.cap.unwrap_or(DEFAULT_SUPPORT_CAP);
        let monte_carlo = match self.mode {
            Some(ModeSpec::Mc) => {
                let seed = self.seed.ok_or_else(|| {
                    Error::InvalidDesign("monte-carlo mode requires an explicit seed".into())
                })?;
                Some(McConfig {
                    replicates: self.mc_replicates.unwrap_or(DEFAULT_MC_REPLICATES),
                    seed,
                })
            }
            _ => None,
        };
        Ok(DesignOptions {
            support_cap,
            monte_carlo,
        })
    }
}

/// Builds a design from its JSON description.
pub fn build_design(spec: &DesignSpec) -> Result<Design> {
    let design = build_structure(spec, None, None)?;
    design.with_options(spec.options()?)
}

fn zero_based(ids: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&id| {
            if id == 0 || id > n {
                Err(Error::InvalidDesign(format!(
                    "{what} id {id} outside 1..{n}"
                )))
            } else {
                Ok(id - 1)
            }
        })
        .collect()
}

fn build_structure(
    spec: &DesignSpec,
    parent_k: Option<usize>,
    parent_n: Option<usize>,
) -> Result<Design> {
    let k = spec.k.or(parent_k);
    let n = spec.n.or(parent_n);
    if let (Some(a), Some(b)) = (spec.k, parent_k) {
        if a != b {
            return Err(Error::InvalidDesign(format!(
                "nested design has k = {a}, parent has k = {b}"
            )));
        }
    }
    if let (Some(a), Some(b)) = (spec.n, parent_n) {
        if a != b {
            return Err(Error::InvalidDesign(format!(
                "nested design has n = {a}, but covers {b} units"
            )));
        }
    }
    let need = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| Error::InvalidDesign(format!("design is missing \"{name}\"")))
    };
    let design = match &spec.kind {
        DesignKind::Bernoulli { probs } => {
            let n = need(n, "n")?;
            let rows: Vec<Vec<Rational>> = match probs {
                BernoulliProbs::Treatment(p) => {
                    if k.unwrap_or(2) != 2 {
                        return Err(Error::InvalidDesign(
                            "a single bernoulli probability needs k = 2".into(),
                        ));
                    }
                    let p = p.to_rational()?;
                    vec![vec![Rational::from_integer(1.into()) - &p, p]; n]
                }
                BernoulliProbs::Shared(v) => {
                    let row = v
                        .iter()
                        .map(ProbValue::to_rational)
                        .collect::<Result<Vec<_>>>()?;
                    vec![row; n]
                }
                BernoulliProbs::PerUnit(rows) => {
                    if rows.len() != n {
                        return Err(Error::InvalidDesign(format!(
                            "{} probability rows for n = {n}",
                            rows.len()
                        )));
                    }
                    rows.iter()
                        .map(|r| {
                            r.iter()
                                .map(ProbValue::to_rational)
                                .collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<_>>()?
                }
            };
            let k = k.unwrap_or_else(|| rows.first().map_or(2, Vec::len));
            Design::bernoulli(k, rows)?
        }
        DesignKind::Complete { counts } => {
            let total: usize = counts.iter().sum();
            if let Some(n) = n {
                if total != n {
                    return Err(Error::InvalidDesign(format!(
                        "arm counts sum to {total}, not n = {n}"
                    )));
                }
            }
            if let Some(k) = k {
                if counts.len() != k {
                    return Err(Error::InvalidDesign(format!(
                        "{} arm counts for k = {k}",
                        counts.len()
                    )));
                }
            }
            Design::complete(counts.clone())?
        }
        DesignKind::Paired { pairs } => {
            if k.unwrap_or(2) != 2 {
                return Err(Error::InvalidDesign("paired designs have k = 2".into()));
            }
            let n = n.unwrap_or(2 * pairs.len());
            let pairs = pairs
                .iter()
                .map(|[a, b]| {
                    let z = zero_based(&[*a, *b], n, "unit")?;
                    Ok((z[0], z[1]))
                })
                .collect::<Result<Vec<_>>>()?;
            Design::paired(n, &pairs)?
        }
        DesignKind::Block { blocks } => {
            let n = n.unwrap_or_else(|| blocks.iter().map(|b| b.units.len()).sum());
            let parts = blocks
                .iter()
                .map(|b| {
                    let units = zero_based(&b.units, n, "unit")?;
                    Ok((units, build_structure(&b.design, k, Some(b.units.len()))?))
                })
                .collect::<Result<Vec<_>>>()?;
            Design::block(n, parts)?
        }
        DesignKind::Cluster { clusters, design } => {
            if let Some(n) = n {
                if clusters.len() != n {
                    return Err(Error::InvalidDesign(format!(
                        "{} cluster labels for n = {n}",
                        clusters.len()
                    )));
                }
            }
            let mut labels = clusters.clone();
            labels.sort_unstable();
            labels.dedup();
            let cluster_of = clusters
                .iter()
                .map(|c| labels.binary_search(c).unwrap())
                .collect();
            let inner = build_structure(design, k, Some(labels.len()))?;
            Design::cluster(cluster_of, inner)?
        }
        DesignKind::Custom { support } => {
            let n = n
                .or_else(|| support.first().map(|s| s.arms.len()))
                .unwrap_or(0);
            let k = need(k, "k")?;
            let points = support
                .iter()
                .map(|s| Ok((zero_based(&s.arms, k, "arm")?, s.prob.to_rational()?)))
                .collect::<Result<Vec<_>>>()?;
            Design::custom(k, n, points)?
        }
    };
    if let Some(k) = k {
        if design.layout().k() != k {
            return Err(Error::InvalidDesign(format!(
                "design has {} arms, k = {k}",
                design.layout().k()
            )));
        }
    }
    if let Some(n) = n {
        if design.layout().n() != n {
            return Err(Error::InvalidDesign(format!(
                "design has {} units, n = {n}",
                design.layout().n()
            )));
        }
    }
    Ok(design)
}
