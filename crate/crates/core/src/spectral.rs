//! Symmetric eigendecompositions, PSD certification and comparisons.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::BoundMatrix;
use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::layout::IndexLayout;

pub const DEFAULT_PSD_TOL: f64 = 1e-8;

/// Absolute floor under the relative PSD tolerance.
pub const PSD_ABS_FLOOR: f64 = 1e-10;

/// Eigenvalues below this slack are treated as negative.
pub fn psd_threshold(max_abs_eig: f64, tol: f64) -> f64 {
    (tol * max_abs_eig.max(1.0)).max(PSD_ABS_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenReport {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` belongs to `eigenvalues[j]`.
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
    pub min_eig: f64,
    pub max_eig: f64,
    pub psd: bool,
    pub tol: f64,
}

impl EigenReport {
    /// `max(|λ_min|, |λ_max|)`.
    pub fn spectral_radius(&self) -> f64 {
        self.min_eig.abs().max(self.max_eig.abs())
    }

    pub fn threshold(&self) -> f64 {
        psd_threshold(self.spectral_radius(), self.tol)
    }

    /// Distance from a unit-normalized `target` to the span of the
    /// eigenvectors whose eigenvalues are within `eig_tol` of `eigenvalue`:
    /// `‖target - P target‖`.
    pub fn subspace_distance(&self, eigenvalue: f64, eig_tol: f64, target: &DVector<f64>) -> f64 {
        let t = target / target.norm();
        let mut projected = DVector::zeros(t.len());
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            if (lam - eigenvalue).abs() <= eig_tol {
                let v = self.eigenvectors.column(j);
                projected += v * v.dot(&t);
            }
        }
        (t - projected).norm()
    }
}

/// Full symmetric eigendecomposition of `(M + M')/2`; `psd` iff
/// `min_eig >= -max(tol·max(1, |λ|max), 1e-10)`.
pub fn eigen_psd_check(m: &DMatrix<f64>, tol: f64) -> Result<EigenReport> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, not square",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("eigen input"));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let eigenvectors =
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    let (max_eig, min_eig) = match (eigenvalues.first(), eigenvalues.last()) {
        (Some(&hi), Some(&lo)) => (hi, lo),
        _ => (0.0, 0.0),
    };
    let radius = max_eig.abs().max(min_eig.abs());
    let psd = min_eig >= -psd_threshold(radius, tol);
    Ok(EigenReport {
        eigenvalues,
        eigenvectors,
        min_eig,
        max_eig,
        psd,
        tol,
    })
}

/// An eigen-direction of a design difference, reshaped per arm.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeDirection {
    pub eigenvalue: f64,
    /// `arm_profiles[r][i]` is the entry for arm `r`, unit `i`.
    pub arm_profiles: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignComparison {
    pub report: EigenReport,
    /// Directions with nonzero eigenvalue, most positive first. Positive
    /// eigenvalues mark outcome profiles where design b has lower variance.
    pub directions: Vec<OutcomeDirection>,
}

/// Spectrum of `d_a - d_b` with the eigenvectors of its nonzero eigenvalues.
pub fn compare_designs(d_a: &DesignMatrix, d_b: &DesignMatrix) -> Result<DesignComparison> {
    compare_matrices(d_a.layout(), d_a.values(), d_b.layout(), d_b.values())
}

pub fn compare_matrices(
    layout_a: &IndexLayout,
    a: &DMatrix<f64>,
    layout_b: &IndexLayout,
    b: &DMatrix<f64>,
) -> Result<DesignComparison> {
    layout_a.ensure_same(layout_b)?;
    let report = eigen_psd_check(&(a - b), DEFAULT_PSD_TOL)?;
    let cut = report.threshold();
    let n = layout_a.n();
    let directions = report
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, lam)| lam.abs() > cut)
        .map(|(j, &eigenvalue)| {
            let v = report.eigenvectors.column(j);
            let arm_profiles = (0..layout_a.k())
                .map(|r| (0..n).map(|i| v[r * n + i]).collect())
                .collect();
            OutcomeDirection {
                eigenvalue,
                arm_profiles,
            }
        })
        .collect();
    Ok(DesignComparison { report, directions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    ATighter,
    BTighter,
    Equal,
    Incomparable,
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Relation::ATighter => "a-tighter",
            Relation::BTighter => "b-tighter",
            Relation::Equal => "equal",
            Relation::Incomparable => "incomparable",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonVerdict {
    pub relation: Relation,
    /// Spectrum of `b - a`.
    pub evidence: EigenReport,
}

/// Orders two bounds by the spectrum of `b - a`.
pub fn compare_bounds(a: &BoundMatrix, b: &BoundMatrix, tol: f64) -> Result<ComparisonVerdict> {
    compare_bound_matrices(a.layout(), a.dtilde(), b.layout(), b.dtilde(), tol)
}

pub fn compare_bound_matrices(
    layout_a: &IndexLayout,
    a: &DMatrix<f64>,
    layout_b: &IndexLayout,
    b: &DMatrix<f64>,
    tol: f64,
) -> Result<ComparisonVerdict> {
    layout_a.ensure_same(layout_b)?;
    let evidence = eigen_psd_check(&(b - a), tol)?;
    let cut = evidence.threshold();
    let has_pos = evidence.max_eig > cut;
    let has_neg = evidence.min_eig < -cut;
    let relation = match (has_pos, has_neg) {
        (false, false) => Relation::Equal,
        (true, false) => Relation::ATighter,
        (false, true) => Relation::BTighter,
        (true, true) => Relation::Incomparable,
    };
    Ok(ComparisonVerdict { relation, evidence })
}
