//! Linear estimators `c'W R y`, their point estimates and linearization vectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignMatrix, DesignMoments, PiDiagonal};
use crate::error::{Error, Result};
use crate::layout::{Assignment, IndexLayout};
use crate::linalg::{quad_form, symmetric_inverse, ILL_CONDITIONED};

/// Variances within this much below zero are rounding noise and read as 0.
pub const VARIANCE_CLAMP: f64 = 1e-10;

/// All k potential outcomes of all n units, stacked by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    layout: IndexLayout,
    y: DVector<f64>,
}

impl PotentialOutcomes {
    pub fn new(layout: IndexLayout, y: Vec<f64>) -> Result<Self> {
        layout.ensure_len(y.len(), "potential outcomes")?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("potential outcomes"));
        }
        Ok(Self {
            layout,
            y: DVector::from_vec(y),
        })
    }

    /// One vector per arm, each of length n.
    pub fn from_arms(arms: Vec<Vec<f64>>) -> Result<Self> {
        let n = arms.first().map_or(0, Vec::len);
        if arms.iter().any(|a| a.len() != n) {
            return Err(Error::InvalidInput("arms have different lengths".into()));
        }
        let layout = IndexLayout::new(arms.len(), n)?;
        Self::new(layout, arms.concat())
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn arm(&self, r: usize) -> &[f64] {
        let n = self.layout.n();
        &self.y.as_slice()[r * n..(r + 1) * n]
    }

    /// The population repeated `copies` times: unit `i` of copy `j` is unit `j*n + i`.
    pub fn tile(&self, copies: usize) -> Result<Self> {
        let arms = (0..self.layout.k())
            .map(|r| self.arm(r).repeat(copies))
            .collect();
        Self::from_arms(arms)
    }

    pub fn observe(&self, assignment: &Assignment) -> ObservedData {
        let r = assignment.indicators(&self.layout);
        ObservedData {
            layout: self.layout,
            assignment: assignment.clone(),
            y_obs: self.y.component_mul(&r),
        }
    }

    /// `δ_c = Σ_r c_r ȳ_r`.
    pub fn estimand(&self, c: &ContrastVector) -> Result<f64> {
        c.check_layout(&self.layout)?;
        let n = self.layout.n() as f64;
        Ok((0..self.layout.k())
            .map(|r| c.c[r] * self.arm(r).iter().sum::<f64>() / n)
            .sum())
    }
}

/// A realized assignment and `R y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    layout: IndexLayout,
    assignment: Assignment,
    y_obs: DVector<f64>,
}

impl ObservedData {
    /// `outcomes[i]` is the observed outcome of unit `i` under its assigned arm.
    pub fn new(layout: IndexLayout, assignment: Assignment, outcomes: &[f64]) -> Result<Self> {
        if outcomes.len() != layout.n() || assignment.n_units() != layout.n() {
            return Err(Error::LayoutMismatch {
                expected: format!("{} observed units", layout.n()),
                found: format!("{}", outcomes.len()),
            });
        }
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed outcomes"));
        }
        let mut y_obs = DVector::zeros(layout.len());
        for (unit, &v) in outcomes.iter().enumerate() {
            y_obs[layout.flat(assignment.arm_of(unit), unit)] = v;
        }
        Ok(Self {
            layout,
            assignment,
            y_obs,
        })
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn assignment(&self) -> &Assignment {
        &self.assignment
    }

    /// `R y`, zero at unobserved coordinates.
    pub fn y_obs(&self) -> &DVector<f64> {
        &self.y_obs
    }

    pub fn indicators(&self) -> DVector<f64> {
        self.assignment.indicators(&self.layout)
    }
}

/// Arm contrast `c` of length k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContrastVector {
    c: Vec<f64>,
}

impl ContrastVector {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.len() < 2 {
            return Err(Error::InvalidInput(
                "contrast needs at least two entries".into(),
            ));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("contrast"));
        }
        Ok(Self { c })
    }

    /// `(-1, 1)`.
    pub fn ate() -> Self {
        Self { c: vec![-1.0, 1.0] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c
    }

    pub fn k(&self) -> usize {
        self.c.len()
    }

    pub fn sum(&self) -> f64 {
        self.c.iter().sum()
    }

    /// `c` followed by `l` zeros.
    pub fn padded(&self, l: usize) -> DVector<f64> {
        let mut v = self.c.clone();
        v.resize(self.c.len() + l, 0.0);
        DVector::from_vec(v)
    }

    pub fn check_layout(&self, layout: &IndexLayout) -> Result<()> {
        if self.c.len() != layout.k() {
            return Err(Error::LayoutMismatch {
                expected: format!("contrast of length {}", layout.k()),
                found: format!("length {}", self.c.len()),
            });
        }
        Ok(())
    }
}

/// Covariates `x` (n×l) and the stacked regressor matrix `𝕩` (kn×(k+l)):
/// one intercept column per arm followed by `x` repeated in every arm block.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateExpansion {
    layout: IndexLayout,
    x: DMatrix<f64>,
    xx: DMatrix<f64>,
}

pub fn expand_covariates(x: &DMatrix<f64>, layout: &IndexLayout) -> Result<CovariateExpansion> {
    if x.nrows() != layout.n() {
        return Err(Error::LayoutMismatch {
            expected: format!("covariates with {} rows", layout.n()),
            found: format!("{} rows", x.nrows()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariates"));
    }
    let (k, n, l) = (layout.k(), layout.n(), x.ncols());
    let mut xx = DMatrix::zeros(k * n, k + l);
    for r in 0..k {
        for i in 0..n {
            let row = layout.flat(r, i);
            xx[(row, r)] = 1.0;
            for j in 0..l {
                xx[(row, k + j)] = x[(i, j)];
            }
        }
    }
    Ok(CovariateExpansion {
        layout: *layout,
        x: x.clone(),
        xx,
    })
}

impl CovariateExpansion {
    /// `𝕩 = 𝟙`, no covariates.
    pub fn intercept(layout: &IndexLayout) -> Self {
        expand_covariates(&DMatrix::zeros(layout.n(), 0), layout).expect("shape is consistent")
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn xx(&self) -> &DMatrix<f64> {
        &self.xx
    }

    pub fn l(&self) -> usize {
        self.x.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Horvitz-Thompson.
    Ht,
    /// Contrast of arm means.
    Cm,
    /// Hájek.
    Hj,
    Ols,
    Wls,
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ht" => Ok(Self::Ht),
            "cm" => Ok(Self::Cm),
            "hj" | "hajek" => Ok(Self::Hj),
            "ols" => Ok(Self::Ols),
            "wls" => Ok(Self::Wls),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Ht => "ht",
            Self::Cm => "cm",
            Self::Hj => "hj",
            Self::Ols => "ols",
            Self::Wls => "wls",
        };
        f.write_str(s)
    }
}

/// Which estimator, its contrast, and the regression ingredients.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    kind: EstimatorKind,
    contrast: ContrastVector,
    covariates: Option<CovariateExpansion>,
    weights: Option<DVector<f64>>,
}

impl EstimatorSpec {
    pub fn ht(contrast: ContrastVector) -> Self {
        Self {
            kind: EstimatorKind::Ht,
            contrast,
            covariates: None,
            weights: None,
        }
    }

    pub fn cm(contrast: ContrastVector) -> Self {
        Self {
            kind: EstimatorKind::Cm,
            contrast,
            covariates: None,
            weights: None,
        }
    }

    pub fn hajek(contrast: ContrastVector) -> Self {
        Self {
            kind: EstimatorKind::Hj,
            contrast,
            covariates: None,
            weights: None,
        }
    }

    pub fn ols(contrast: ContrastVector, covariates: Option<CovariateExpansion>) -> Self {
        Self {
            kind: EstimatorKind::Ols,
            contrast,
            covariates,
            weights: None,
        }
    }

    /// `weights` is the diagonal of `m`, length kn, strictly positive.
    pub fn wls(
        contrast: ContrastVector,
        covariates: Option<CovariateExpansion>,
        weights: DVector<f64>,
    ) -> Result<Self> {
        if weights.iter().any(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidInput(
                "WLS weights must be finite and positive".into(),
            ));
        }
        if let Some(cov) = &covariates {
            cov.layout.ensure_len(weights.len(), "WLS weights")?;
        }
        Ok(Self {
            kind: EstimatorKind::Wls,
            contrast,
            covariates,
            weights: Some(weights),
        })
    }

    /// Builds any kind; `weights` is only read for WLS.
    pub fn of_kind(
        kind: EstimatorKind,
        contrast: ContrastVector,
        covariates: Option<CovariateExpansion>,
        weights: Option<DVector<f64>>,
    ) -> Result<Self> {
        let spec = match kind {
            EstimatorKind::Ht => Self::ht(contrast),
            EstimatorKind::Cm => Self::cm(contrast),
            EstimatorKind::Hj => Self::hajek(contrast),
            EstimatorKind::Ols => Self::ols(contrast, covariates.clone()),
            EstimatorKind::Wls => Self::wls(
                contrast,
                covariates.clone(),
                weights.ok_or_else(|| Error::InvalidInput("WLS needs weights".into()))?,
            )?,
        };
        if covariates.is_some()
            && matches!(
                kind,
                EstimatorKind::Ht | EstimatorKind::Cm | EstimatorKind::Hj
            )
        {
            return Err(Error::InvalidInput(format!(
                "estimator {kind} takes no covariates"
            )));
        }
        Ok(spec)
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn contrast(&self) -> &ContrastVector {
        &self.contrast
    }

    pub fn covariates(&self) -> Option<&CovariateExpansion> {
        self.covariates.as_ref()
    }

    pub fn weights(&self) -> Option<&DVector<f64>> {
        self.weights.as_ref()
    }

    pub fn validate(&self, layout: &IndexLayout) -> Result<()> {
        self.contrast.check_layout(layout)?;
        if let Some(cov) = &self.covariates {
            layout.ensure_same(&cov.layout)?;
        }
        if let Some(w) = &self.weights {
            layout.ensure_len(w.len(), "WLS weights")?;
        }
        Ok(())
    }

    /// `(𝕩, diag m)` for the WLS family; `None` for HT.
    pub fn regression(&self, pi: &PiDiagonal) -> Result<Option<(DMatrix<f64>, DVector<f64>)>> {
        let layout = pi.layout();
        self.validate(layout)?;
        let ones = DVector::from_element(layout.len(), 1.0);
        let xx = |cov: &Option<CovariateExpansion>| match cov {
            Some(c) => c.xx.clone(),
            None => CovariateExpansion::intercept(layout).xx,
        };
        Ok(match self.kind {
            EstimatorKind::Ht => None,
            EstimatorKind::Cm => Some((xx(&None), ones)),
            EstimatorKind::Hj => Some((xx(&None), pi.inverse())),
            EstimatorKind::Ols => Some((xx(&self.covariates), ones)),
            EstimatorKind::Wls => Some((
                xx(&self.covariates),
                self.weights.clone().expect("wls has weights"),
            )),
        })
    }

    fn padded_contrast(&self, xx: &DMatrix<f64>) -> DVector<f64> {
        self.contrast.padded(xx.ncols() - self.contrast.k())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub value: f64,
    /// Condition number of the realized denominator (WLS family only).
    pub condition: Option<f64>,
    pub ill_conditioned: bool,
}

/// `c'W(R) R y` for an arbitrary real diagonal `r`; `y` is the full kn vector.
/// With 0/1 `r` and `y = R y` this is the point estimate.
pub fn weighted_estimate(
    spec: &EstimatorSpec,
    r: &DVector<f64>,
    y: &DVector<f64>,
    pi: &PiDiagonal,
) -> Result<PointEstimate> {
    let layout = *pi.layout();
    layout.ensure_len(r.len(), "indicator vector")?;
    layout.ensure_len(y.len(), "outcome vector")?;
    match spec.regression(pi)? {
        None => {
            let z = ht_z(&layout, &spec.contrast, y);
            Ok(PointEstimate {
                value: ht_form(&z, r, pi),
                condition: None,
                ill_conditioned: false,
            })
        }
        Some((xx, m)) => {
            let mr = m.component_mul(r);
            let g = weighted_gram(&xx, &mr);
            let inv = symmetric_inverse(&g, "realized denominator 𝕩'mR𝕩")?;
            let rhs = xx.tr_mul(&mr.component_mul(y));
            let b = &inv.inverse * rhs;
            let value = spec.padded_contrast(&xx).dot(&b);
            if !value.is_finite() {
                return Err(Error::NonFinite("point estimate"));
            }
            Ok(PointEstimate {
                value,
                condition: Some(inv.condition),
                ill_conditioned: inv.condition > ILL_CONDITIONED,
            })
        }
    }
}

/// The estimate from one realized assignment.
pub fn point_estimate(
    spec: &EstimatorSpec,
    data: &ObservedData,
    pi: &PiDiagonal,
) -> Result<PointEstimate> {
    data.layout.ensure_same(pi.layout())?;
    weighted_estimate(spec, &data.indicators(), &data.y_obs, pi)
}

/// `𝕩' diag(w) 𝕩`.
pub(crate) fn weighted_gram(xx: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = xx.clone();
    for (mut row, &wi) in scaled.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    xx.tr_mul(&scaled)
}

/// `z^HT_a = c_r y_a / n`.
pub(crate) fn ht_z(layout: &IndexLayout, c: &ContrastVector, y: &DVector<f64>) -> DVector<f64> {
    let n = layout.n();
    DVector::from_fn(layout.len(), |a, _| c.c[a / n] * y[a] / n as f64)
}

/// `Σ_a r_a z_a / π_a`, summed in flat-index order.
fn ht_form(z: &DVector<f64>, r: &DVector<f64>, pi: &PiDiagonal) -> f64 {
    let mut total = 0.0;
    for a in 0..z.len() {
        total += r[a] * (z[a] / pi.get(a));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Built from potential outcomes and `π`.
    Population,
    /// Built from one realized assignment; only `R z` is meaningful.
    PlugIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationVector {
    layout: IndexLayout,
    z: DVector<f64>,
    kind: EstimatorKind,
    provenance: Provenance,
}

impl LinearizationVector {
    pub fn new(
        layout: IndexLayout,
        z: DVector<f64>,
        kind: EstimatorKind,
        provenance: Provenance,
    ) -> Result<Self> {
        layout.ensure_len(z.len(), "linearization vector")?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linearization vector"));
        }
        Ok(Self {
            layout,
            z,
            kind,
            provenance,
        })
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// `z_c` and the population coefficient `b` (absent for HT).
fn linearize(
    spec: &EstimatorSpec,
    y: &PotentialOutcomes,
    pi: &PiDiagonal,
) -> Result<(DVector<f64>, Option<f64>)> {
    y.layout.ensure_same(pi.layout())?;
    match spec.regression(pi)? {
        None => Ok((ht_z(&y.layout, &spec.contrast, &y.y), None)),
        Some((xx, m)) => {
            let mpi = m.component_mul(pi.probs());
            let g = weighted_gram(&xx, &mpi);
            let inv = symmetric_inverse(&g, "population denominator 𝕩'mπ𝕩")?;
            let b = &inv.inverse * xx.tr_mul(&mpi.component_mul(&y.y));
            let c = spec.padded_contrast(&xx);
            let resid = &y.y - &xx * &b;
            let w = &xx * (&inv.inverse * &c);
            let z = mpi.component_mul(&resid).component_mul(&w);
            Ok((z, Some(c.dot(&b))))
        }
    }
}

/// `z_c` such that the estimator is approximately `a_c + Σ_a R_a z_a / π_a`.
pub fn linearization_vector(
    spec: &EstimatorSpec,
    y: &PotentialOutcomes,
    pi: &PiDiagonal,
) -> Result<LinearizationVector> {
    let (z, _) = linearize(spec, y, pi)?;
    LinearizationVector::new(y.layout, z, spec.kind, Provenance::Population)
}

/// `z' M z` without clamping.
pub fn quadratic_form(z: &LinearizationVector, m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != z.z.len() || m.ncols() != z.z.len() {
        return Err(Error::LayoutMismatch {
            expected: format!("{0}x{0} matrix", z.z.len()),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(quad_form(&z.z, m))
}

pub(crate) fn clamp_variance(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::NonFinite("variance"));
    }
    if v >= 0.0 {
        Ok(v)
    } else if v >= -VARIANCE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NotPositiveSemidefinite { value: v })
    }
}

/// `z' d z`.
pub fn taylor_variance(z: &LinearizationVector, d: &DesignMatrix) -> Result<f64> {
    if z.provenance != Provenance::Population {
        return Err(Error::InvalidInput(
            "taylor_variance needs a population linearization vector".into(),
        ));
    }
    z.layout.ensure_same(d.layout())?;
    clamp_variance(quadratic_form(z, d.values())?)
}

/// Exact variance of the HT estimator: `z^HT' d z^HT`.
pub fn ht_exact_variance(
    y: &PotentialOutcomes,
    c: &ContrastVector,
    d: &DesignMatrix,
) -> Result<f64> {
    y.layout.ensure_same(d.layout())?;
    c.check_layout(&y.layout)?;
    clamp_variance(quad_form(&ht_z(&y.layout, c, &y.y), d.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorGap {
    /// Max over feasible support points of |estimate - linearized value|.
    pub max_gap: f64,
    pub support_points: usize,
    /// Support points whose realized denominator is singular; excluded.
    pub infeasible_points: usize,
    pub infeasible_mass: f64,
}

/// Largest distance between the estimator and its linearization `a_c + Σ R_a z_a/π_a` over the support.
pub fn taylor_gap(
    spec: &EstimatorSpec,
    design: &Design,
    y: &PotentialOutcomes,
) -> Result<TaylorGap> {
    design.layout().ensure_same(&y.layout)?;
    let support = design.support()?;
    let pi = DesignMoments::compute(design)?.pi;
    let (z, b) = linearize(spec, y, &pi)?;
    let a_c = b.unwrap_or(0.0);
    let mut gap = TaylorGap {
        max_gap: 0.0,
        support_points: support.len(),
        infeasible_points: 0,
        infeasible_mass: 0.0,
    };
    for sp in &support {
        let data = y.observe(&sp.assignment);
        let r = data.indicators();
        match point_estimate(spec, &data, &pi) {
            Ok(est) => {
                let lin = if b.is_some() {
                    a_c + ht_form(&z, &r, &pi)
                } else {
                    ht_form(&z, &r, &pi)
                };
                gap.max_gap = gap.max_gap.max((est.value - lin).abs());
            }
            Err(Error::EstimationInfeasible(_)) => {
                gap.infeasible_points += 1;
                gap.infeasible_mass += sp.prob;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{first_order_design_matrix, inclusion_probabilities};
    use crate::prob::ratio;

    fn two_by_two() -> (Design, PotentialOutcomes, ContrastVector) {
        let design = Design::complete(vec![1, 1]).unwrap();
        let y = PotentialOutcomes::from_arms(vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        (design, y, ContrastVector::ate())
    }

    #[test]
    fn covariate_expansion_shapes() {
        let layout = IndexLayout::new(2, 2).unwrap();
        let one = CovariateExpansion::intercept(&layout);
        assert_eq!(
            one.xx(),
            &DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.])
        );
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let e = expand_covariates(&x, &layout).unwrap();
        assert_eq!(e.xx().column(2).as_slice(), &[1.0, 2.0, 1.0, 2.0]);
        assert!(expand_covariates(&DMatrix::zeros(3, 1), &layout).is_err());
    }

    #[test]
    fn constant_arms_estimate_one() {
        let (design, y, c) = two_by_two();
        let pi = inclusion_probabilities(&design).unwrap();
        for sp in design.support().unwrap() {
            let data = y.observe(&sp.assignment);
            assert_eq!(
                point_estimate(&EstimatorSpec::ht(c.clone()), &data, &pi)
                    .unwrap()
                    .value,
                1.0
            );
            assert!(
                (point_estimate(&EstimatorSpec::cm(c.clone()), &data, &pi)
                    .unwrap()
                    .value
                    - 1.0)
                    .abs()
                    < 1e-15
            );
        }
    }

    #[test]
    fn ht_linearization_and_zero_variance() {
        let (design, y, c) = two_by_two();
        let pi = inclusion_probabilities(&design).unwrap();
        let z = linearization_vector(&EstimatorSpec::ht(c.clone()), &y, &pi).unwrap();
        assert_eq!(z.values().as_slice(), &[0.0, 0.0, 0.5, 0.5]);
        let (d, _) = first_order_design_matrix(&design).unwrap();
        assert_eq!(taylor_variance(&z, &d).unwrap(), 0.0);
        assert_eq!(ht_exact_variance(&y, &c, &d).unwrap(), 0.0);
    }

    #[test]
    fn empty_arm_is_infeasible() {
        let design = Design::bernoulli_uniform(2, &[ratio(1, 2), ratio(1, 2)]).unwrap();
        let pi = inclusion_probabilities(&design).unwrap();
        let y = PotentialOutcomes::from_arms(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let a = Assignment::new(vec![1, 1], y.layout()).unwrap();
        let err = point_estimate(
            &EstimatorSpec::cm(ContrastVector::ate()),
            &y.observe(&a),
            &pi,
        )
        .unwrap_err();
        assert!(matches!(err, Error::EstimationInfeasible(_)));
        let gap = taylor_gap(&EstimatorSpec::cm(ContrastVector::ate()), &design, &y).unwrap();
        assert_eq!(gap.infeasible_points, 2);
        assert!((gap.infeasible_mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plug_in_vectors_rejected_by_taylor_variance() {
        let (design, _, _) = two_by_two();
        let (d, _) = first_order_design_matrix(&design).unwrap();
        let z = LinearizationVector::new(
            *d.layout(),
            DVector::zeros(4),
            EstimatorKind::Ols,
            Provenance::PlugIn,
        )
        .unwrap();
        assert!(taylor_variance(&z, &d).is_err());
    }

    #[test]
    fn tiling_repeats_each_arm() {
        let y = PotentialOutcomes::from_arms(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let t = y.tile(2).unwrap();
        assert_eq!(t.values().as_slice(), &[1., 2., 1., 2., 3., 4., 3., 4.]);
        assert_eq!(t.estimand(&ContrastVector::ate()).unwrap(), 2.0);
    }
}
