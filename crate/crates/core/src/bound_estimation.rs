//! Bound estimators from a single realized assignment, and the sandwich
//! estimators they reduce to.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bounds::{BoundMatrix, BoundMethod, IDENTIFIED_TOL};
use crate::design::{JointProbMatrix, PiDiagonal};
use crate::error::{Error, Result};
use crate::estimators::{
    ht_z, weighted_gram, ContrastVector, CovariateExpansion, EstimatorKind, EstimatorSpec,
    ObservedData,
};
use crate::layout::IndexLayout;
use crate::linalg::{quad_form, symmetric_inverse};

/// `d̃ / p` with `0/0 = 0`.
#[derive(Debug, Clone)]
pub struct IpwBoundMatrix {
    layout: IndexLayout,
    values: DMatrix<f64>,
    method: BoundMethod,
}

impl IpwBoundMatrix {
    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }
}

pub fn ipw_bound_matrix(bound: &BoundMatrix, p: &JointProbMatrix) -> Result<IpwBoundMatrix> {
    bound.layout().ensure_same(p.layout())?;
    let kn = bound.layout().len();
    let dt = bound.dtilde();
    let mut values = DMatrix::zeros(kn, kn);
    for a in 0..kn {
        for b in 0..kn {
            if p.is_zero(a, b) {
                if dt[(a, b)].abs() > IDENTIFIED_TOL {
                    return Err(Error::UnidentifiedBound {
                        row: a + 1,
                        col: b + 1,
                    });
                }
            } else {
                values[(a, b)] = dt[(a, b)] / p.values()[(a, b)];
            }
        }
    }
    Ok(IpwBoundMatrix {
        layout: *bound.layout(),
        values,
        method: bound.method(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub value: f64,
    pub estimator: EstimatorKind,
    pub method: BoundMethod,
    pub plug_in: bool,
}

/// `z^HT' R (d̃/p) R z^HT`. Only observed outcomes enter.
pub fn ht_bound_estimate(
    data: &ObservedData,
    c: &ContrastVector,
    ipw: &IpwBoundMatrix,
) -> Result<BoundEstimate> {
    data.layout().ensure_same(&ipw.layout)?;
    c.check_layout(data.layout())?;
    let rz = ht_z(data.layout(), c, data.y_obs());
    let value = quad_form(&rz, &ipw.values);
    if !value.is_finite() {
        return Err(Error::NonFinite("bound estimate"));
    }
    Ok(BoundEstimate {
        value,
        estimator: EstimatorKind::Ht,
        method: ipw.method,
        plug_in: false,
    })
}

/// `R ẑ` for the WLS family: every population denominator replaced by its
/// realized counterpart and `y` by realized residuals,
/// `R ẑ = π diag(R û) m 𝕩 (𝕩'mR𝕩)⁻¹ c`.
pub fn plugin_linearization(
    spec: &EstimatorSpec,
    data: &ObservedData,
    pi: &PiDiagonal,
) -> Result<DVector<f64>> {
    data.layout().ensure_same(pi.layout())?;
    let Some((xx, m)) = spec.regression(pi)? else {
        return Ok(ht_z(data.layout(), spec.contrast(), data.y_obs()));
    };
    let r = data.indicators();
    let mr = m.component_mul(&r);
    let inv = symmetric_inverse(&weighted_gram(&xx, &mr), "realized denominator 𝕩'mR𝕩")?;
    let b = &inv.inverse * xx.tr_mul(&mr.component_mul(data.y_obs()));
    let ru = (data.y_obs() - &xx * b).component_mul(&r);
    let c = spec.contrast().padded(xx.ncols() - spec.contrast().k());
    let w = &xx * (&inv.inverse * c);
    Ok(pi
        .probs()
        .component_mul(&ru)
        .component_mul(&m)
        .component_mul(&w))
}

/// `ẑ' R (d̃/p) R ẑ`.
pub fn plugin_bound_estimate(
    spec: &EstimatorSpec,
    data: &ObservedData,
    pi: &PiDiagonal,
    ipw: &IpwBoundMatrix,
) -> Result<BoundEstimate> {
    data.layout().ensure_same(&ipw.layout)?;
    let rz = plugin_linearization(spec, data, pi)?;
    let value = quad_form(&rz, &ipw.values);
    if !value.is_finite() {
        return Err(Error::NonFinite("bound estimate"));
    }
    Ok(BoundEstimate {
        value,
        estimator: spec.kind(),
        method: ipw.method,
        plug_in: spec.kind() != EstimatorKind::Ht,
    })
}

/// Observed regressor rows and outcomes, one per unit.
fn observed_rows(data: &ObservedData, xx: &CovariateExpansion) -> Result<Vec<(DVector<f64>, f64)>> {
    data.layout().ensure_same(xx.layout())?;
    let layout = *data.layout();
    Ok((0..layout.n())
        .map(|i| {
            let a = layout.flat(data.assignment().arm_of(i), i);
            (xx.xx().row(a).transpose(), data.y_obs()[a])
        })
        .collect())
}

/// Cluster-summed sandwich `c'B⁻¹ (Σ_g s_g s_g') B⁻¹ c` with `B = Σ x_i x_i'`
/// and `s_g = Σ_{i∈g} x_i û_i`.
fn sandwich(
    data: &ObservedData,
    xx: &CovariateExpansion,
    c: &ContrastVector,
    cluster_of: &[usize],
) -> Result<f64> {
    c.check_layout(data.layout())?;
    let rows = observed_rows(data, xx)?;
    let p = xx.xx().ncols();
    let mut bread = DMatrix::<f64>::zeros(p, p);
    let mut xy = DVector::<f64>::zeros(p);
    for (x, y) in &rows {
        for i in 0..p {
            xy[i] += x[i] * y;
            for j in 0..p {
                bread[(i, j)] += x[i] * x[j];
            }
        }
    }
    let inv = bread
        .clone()
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::EstimationInfeasible("realized 𝕩'R𝕩 is singular".into()))?;
    let coef = &inv * xy;
    let groups = cluster_of.iter().copied().max().map_or(0, |g| g + 1);
    let mut scores = vec![DVector::<f64>::zeros(p); groups];
    for ((x, y), &g) in rows.iter().zip(cluster_of) {
        let resid = y - x.dot(&coef);
        scores[g] += x * resid;
    }
    let cvec = c.padded(p - c.k());
    let h = &inv * cvec;
    Ok(scores.iter().map(|s| s.dot(&h).powi(2)).sum())
}

/// HC0: `c'(𝕩'R𝕩)⁻¹ 𝕩' diag(R û²) 𝕩 (𝕩'R𝕩)⁻¹ c`.
pub fn hc0_sandwich(
    data: &ObservedData,
    xx: &CovariateExpansion,
    c: &ContrastVector,
) -> Result<f64> {
    let singletons: Vec<usize> = (0..data.layout().n()).collect();
    sandwich(data, xx, c, &singletons)
}

/// CR0 with `cluster_of[i]` the 0-based cluster of unit `i`.
pub fn cr0_sandwich(
    data: &ObservedData,
    xx: &CovariateExpansion,
    c: &ContrastVector,
    cluster_of: &[usize],
) -> Result<f64> {
    if cluster_of.len() != data.layout().n() {
        return Err(Error::LayoutMismatch {
            expected: format!("{} cluster labels", data.layout().n()),
            found: cluster_of.len().to_string(),
        });
    }
    sandwich(data, xx, c, cluster_of)
}
