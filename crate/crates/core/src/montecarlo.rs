//! Exact-enumeration and seeded Monte Carlo evaluation of estimators and bounds.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound_estimation::{ipw_bound_matrix, plugin_bound_estimate};
use crate::bounds::{
    algorithm_m_bound, aronow_samii_bound, neyman_bound, AlgorithmMOptions, BoundMatrix,
};
use crate::design::{
    build_design, first_order_condition_norm, replicate_rng, Design, DesignMode, DesignMoments,
    DesignSpec,
};
use crate::error::{Error, Result};
use crate::estimators::{
    expand_covariates, ht_exact_variance, linearization_vector, point_estimate, quadratic_form,
    taylor_gap, taylor_variance, ContrastVector, EstimatorKind, EstimatorSpec, PotentialOutcomes,
};
use crate::layout::{Assignment, IndexLayout};
use crate::linalg::pairwise_sum;

/// Normal quantile for two-sided 95% intervals.
pub const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundChoice {
    Neyman,
    #[serde(alias = "as")]
    AronowSamii,
    #[serde(alias = "algm", alias = "m")]
    AlgorithmM,
}

impl std::str::FromStr for BoundChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neyman" => Ok(Self::Neyman),
            "as" | "aronow-samii" => Ok(Self::AronowSamii),
            "algm" | "m" | "algorithm-m" => Ok(Self::AlgorithmM),
            other => Err(Error::InvalidInput(format!(
                "unknown bound method '{other}'"
            ))),
        }
    }
}

/// Builds the chosen bound for a design.
pub fn build_bound(
    choice: BoundChoice,
    moments: &DesignMoments,
    c: &ContrastVector,
) -> Result<BoundMatrix> {
    match choice {
        BoundChoice::Neyman => neyman_bound(&moments.d, &moments.mask, c),
        BoundChoice::AronowSamii => aronow_samii_bound(&moments.d, &moments.mask),
        BoundChoice::AlgorithmM => {
            algorithm_m_bound(&moments.d, &moments.mask, &AlgorithmMOptions::default())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum SimMode {
    Exact,
    #[serde(rename = "mc")]
    MonteCarlo {
        replicates: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub design: Design,
    pub outcomes: PotentialOutcomes,
    pub estimator: EstimatorSpec,
    pub bound: BoundChoice,
    pub mode: SimMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McStandardErrors {
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    pub mean_bound_estimate: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub mode: String,
    pub estimator: EstimatorKind,
    pub bound_method: BoundChoice,
    pub estimand: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub empirical_variance: f64,
    /// `z'dz`: exact for HT, the linearized variance otherwise.
    pub closed_form_variance: f64,
    pub mean_bound_estimate: f64,
    /// `z'd̃z`.
    pub bound_variance: f64,
    pub coverage: f64,
    /// Bound estimates below zero; their intervals use a zero half-width.
    pub negative_bound_estimates: usize,
    /// Draws whose realized denominator was singular; excluded from the metrics above.
    pub infeasible_draws: usize,
    pub infeasible_mass: f64,
    pub draws: usize,
    /// True when `π`, `p` and `d` were themselves estimated by sampling.
    pub estimated_design: bool,
    pub mc_standard_errors: Option<McStandardErrors>,
}

struct Draw {
    weight: f64,
    result: Option<(f64, f64)>,
}

struct Context<'a> {
    scenario: &'a SimScenario,
    moments: DesignMoments,
    ipw: crate::bound_estimation::IpwBoundMatrix,
    estimand: f64,
}

impl Context<'_> {
    fn evaluate(&self, assignment: &Assignment, weight: f64) -> Result<Draw> {
        let data = self.scenario.outcomes.observe(assignment);
        let est = match point_estimate(&self.scenario.estimator, &data, &self.moments.pi) {
            Ok(e) => e.value,
            Err(Error::EstimationInfeasible(_)) => {
                return Ok(Draw {
                    weight,
                    result: None,
                })
            }
            Err(e) => return Err(e),
        };
        let bound =
            plugin_bound_estimate(&self.scenario.estimator, &data, &self.moments.pi, &self.ipw)?
                .value;
        Ok(Draw {
            weight,
            result: Some((est, bound)),
        })
    }
}

/// Evaluates a scenario by probability-weighted enumeration (exact mode) or
/// by seeded replication (mc mode).
pub fn run_scenario(s: &SimScenario) -> Result<SimReport> {
    let layout = *s.design.layout();
    layout.ensure_same(s.outcomes.layout())?;
    s.estimator.validate(&layout)?;
    let moments = DesignMoments::compute(&s.design)?;
    let c = s.estimator.contrast();
    let z = linearization_vector(&s.estimator, &s.outcomes, &moments.pi)?;
    let closed_form_variance = taylor_variance(&z, &moments.d)?;
    let bound = build_bound(s.bound, &moments, c)?;
    let bound_variance = quadratic_form(&z, bound.dtilde())?;
    let ipw = ipw_bound_matrix(&bound, &moments.p)?;
    let estimand = s.outcomes.estimand(c)?;
    let ctx = Context {
        scenario: s,
        moments,
        ipw,
        estimand,
    };

    let (draws, mode_name) = match s.mode {
        SimMode::Exact => {
            if s.design.mode() != DesignMode::Exact || !s.design.is_enumerable() {
                return Err(Error::RequiresExact(
                    "exact simulation needs an enumerable design",
                ));
            }
            let support = s.design.support()?;
            let draws = support
                .par_iter()
                .map(|sp| ctx.evaluate(&sp.assignment, sp.prob))
                .collect::<Result<Vec<_>>>()?;
            (draws, "exact")
        }
        SimMode::MonteCarlo { replicates, seed } => {
            if replicates < 2 {
                return Err(Error::InvalidInput(
                    "monte-carlo simulation needs at least 2 replicates".into(),
                ));
            }
            let w = 1.0 / replicates as f64;
            let draws = (0..replicates)
                .into_par_iter()
                .map(|i| ctx.evaluate(&s.design.sample(&mut replicate_rng(seed, i as u64)), w))
                .collect::<Result<Vec<_>>>()?;
            (draws, "mc")
        }
    };
    Ok(summarize(
        &ctx,
        &draws,
        mode_name,
        closed_form_variance,
        bound_variance,
    ))
}

fn weighted_mean(draws: &[(f64, f64, f64)], f: impl Fn(&(f64, f64, f64)) -> f64, mass: f64) -> f64 {
    let terms: Vec<f64> = draws.iter().map(|d| d.0 * f(d)).collect();
    pairwise_sum(&terms) / mass
}

fn summarize(
    ctx: &Context,
    draws: &[Draw],
    mode: &str,
    closed_form_variance: f64,
    bound_variance: f64,
) -> SimReport {
    let feasible: Vec<(f64, f64, f64)> = draws
        .iter()
        .filter_map(|d| d.result.map(|(e, b)| (d.weight, e, b)))
        .collect();
    let infeasible_draws = draws.len() - feasible.len();
    let infeasible_mass = pairwise_sum(
        &draws
            .iter()
            .filter(|d| d.result.is_none())
            .map(|d| d.weight)
            .collect::<Vec<_>>(),
    );
    let mass = pairwise_sum(&feasible.iter().map(|d| d.0).collect::<Vec<_>>());
    let delta = ctx.estimand;
    let mean = weighted_mean(&feasible, |d| d.1, mass);
    let var = weighted_mean(&feasible, |d| (d.1 - mean).powi(2), mass);
    let mean_bound = weighted_mean(&feasible, |d| d.2, mass);
    let covered = |d: &(f64, f64, f64)| {
        // Roundoff slack so zero-width intervals can cover an exact hit.
        let slack = 8.0 * f64::EPSILON * d.1.abs().max(delta.abs()).max(1.0);
        let half = Z95 * d.2.max(0.0).sqrt();
        if (d.1 - delta).abs() <= half + slack {
            1.0
        } else {
            0.0
        }
    };
    let coverage = weighted_mean(&feasible, covered, mass);
    let negative_bound_estimates = feasible.iter().filter(|d| d.2 < 0.0).count();
    let mc_standard_errors = (mode == "mc").then(|| {
        let m = feasible.len().max(1) as f64;
        let fourth = weighted_mean(&feasible, |d| (d.1 - mean).powi(4), mass);
        let bound_var = weighted_mean(&feasible, |d| (d.2 - mean_bound).powi(2), mass);
        McStandardErrors {
            mean_estimate: (var / m).sqrt(),
            empirical_variance: ((fourth - var * var).max(0.0) / m).sqrt(),
            mean_bound_estimate: (bound_var / m).sqrt(),
            coverage: (coverage * (1.0 - coverage) / m).sqrt(),
        }
    });
    SimReport {
        mode: mode.to_string(),
        estimator: ctx.scenario.estimator.kind(),
        bound_method: ctx.scenario.bound,
        estimand: delta,
        mean_estimate: mean,
        bias: mean - delta,
        empirical_variance: var,
        closed_form_variance,
        mean_bound_estimate: mean_bound,
        bound_variance,
        coverage,
        negative_bound_estimates,
        infeasible_draws,
        infeasible_mass,
        draws: draws.len(),
        estimated_design: ctx.moments.pi.is_estimated(),
        mc_standard_errors,
    }
}

/// One row of a consistency sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub variance: f64,
    pub n_variance: f64,
    /// Absent when the support is not enumerable.
    pub taylor_gap: Option<f64>,
    pub n_taylor_gap: Option<f64>,
    pub infeasible_points: usize,
    pub first_order_norm: f64,
}

/// Variance, Taylor gap and first-order condition norm along a sequence of
/// designs and populations indexed by `n`.
pub fn consistency_sweep(
    family: &dyn Fn(usize) -> Result<Design>,
    estimator: &dyn Fn(&IndexLayout) -> Result<EstimatorSpec>,
    population: &dyn Fn(usize) -> Result<PotentialOutcomes>,
    n_list: &[usize],
) -> Result<Vec<SweepRow>> {
    n_list
        .iter()
        .map(|&n| {
            let design = family(n)?;
            let y = population(n)?;
            design.layout().ensure_same(y.layout())?;
            let spec = estimator(design.layout())?;
            let moments = DesignMoments::compute(&design)?;
            let variance = if spec.kind() == EstimatorKind::Ht {
                ht_exact_variance(&y, spec.contrast(), &moments.d)?
            } else {
                taylor_variance(&linearization_vector(&spec, &y, &moments.pi)?, &moments.d)?
            };
            let gap = if design.is_enumerable() {
                Some(taylor_gap(&spec, &design, &y)?)
            } else {
                None
            };
            let nf = n as f64;
            Ok(SweepRow {
                n,
                variance,
                n_variance: nf * variance,
                taylor_gap: gap.map(|g| g.max_gap),
                n_taylor_gap: gap.map(|g| nf * g.max_gap),
                infeasible_points: gap.map_or(0, |g| g.infeasible_points),
                first_order_norm: first_order_condition_norm(&moments.d),
            })
        })
        .collect()
}

/// Outcomes in a scenario file: explicit per-arm vectors, optionally tiled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    /// `arms[r][i]`.
    pub arms: Vec<Vec<f64>>,
    #[serde(default = "one")]
    pub copies: usize,
}

fn one() -> usize {
    1
}

impl OutcomeSpec {
    pub fn build(&self) -> Result<PotentialOutcomes> {
        let base = PotentialOutcomes::from_arms(self.arms.clone())?;
        if self.copies == 1 {
            Ok(base)
        } else {
            base.tile(self.copies)
        }
    }
}

/// Estimator description in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorFileSpec {
    pub kind: EstimatorKind,
    pub contrast: Vec<f64>,
    /// `covariates[i]` is the covariate row of unit `i` (after tiling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<Vec<f64>>>,
    /// Diagonal of `m`, length kn (WLS only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl EstimatorFileSpec {
    pub fn build(&self, layout: &IndexLayout) -> Result<EstimatorSpec> {
        let contrast = ContrastVector::new(self.contrast.clone())?;
        let covariates = match &self.covariates {
            Some(rows) => {
                let l = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != l) {
                    return Err(Error::InvalidInput(
                        "covariate rows differ in length".into(),
                    ));
                }
                let x = DMatrix::from_fn(rows.len(), l, |i, j| rows[i][j]);
                Some(expand_covariates(&x, layout)?)
            }
            None => None,
        };
        let weights = self.weights.clone().map(DVector::from_vec);
        let spec = EstimatorSpec::of_kind(self.kind, contrast, covariates, weights)?;
        spec.validate(layout)?;
        Ok(spec)
    }
}

/// A scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub design: DesignSpec,
    pub outcomes: OutcomeSpec,
    pub estimator: EstimatorFileSpec,
    pub bound: BoundChoice,
    #[serde(flatten)]
    pub mode: SimMode,
}

impl ScenarioSpec {
    pub fn build(&self) -> Result<SimScenario> {
        let design = build_design(&self.design)?;
        let outcomes = self.outcomes.build()?;
        let estimator = self.estimator.build(design.layout())?;
        Ok(SimScenario {
            design,
            outcomes,
            estimator,
            bound: self.bound,
            mode: self.mode,
        })
    }
}
