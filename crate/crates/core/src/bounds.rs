//! Variance bound matrices: generalized Neyman, Aronow-Samii, Algorithm M,
//! and user-supplied matrices, with their certification.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{DesignMatrix, ImpossibilityMask};
use crate::error::{Error, NeymanViolation, Result};
use crate::estimators::{ht_z, ContrastVector, PotentialOutcomes};
use crate::layout::IndexLayout;
use crate::linalg::quad_form;
use crate::spectral::{eigen_psd_check, DEFAULT_PSD_TOL};

pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Entries this close to zero count as zero for the identification check.
pub const IDENTIFIED_TOL: f64 = 1e-12;

/// Tolerance for zero row sums of an invariant bound.
pub const INVARIANT_TOL: f64 = 1e-10;

const BLOCK_EQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Neyman,
    AronowSamii,
    AlgorithmM,
    User,
}

impl std::fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundMethod::Neyman => "neyman",
            BoundMethod::AronowSamii => "aronow-samii",
            BoundMethod::AlgorithmM => "algorithm-m",
            BoundMethod::User => "user",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certification {
    Yes,
    No,
    Unchecked,
}

impl Certification {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Yes
        } else {
            Self::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Self::Yes
    }
}

/// A candidate `d̃` with how it was built and what has been verified.
#[derive(Debug, Clone)]
pub struct BoundMatrix {
    layout: IndexLayout,
    dtilde: DMatrix<f64>,
    method: BoundMethod,
    certified_bounding: Certification,
    certified_identified: Certification,
    iterations: Option<usize>,
    tol: f64,
    /// Smallest eigenvalue of `d̃ - d` from the last certification.
    min_eig: Option<f64>,
}

/// The JSON sidecar written next to a bound CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundSidecar {
    pub method: BoundMethod,
    pub certified_bounding: Certification,
    pub certified_identified: Certification,
    pub iterations: Option<usize>,
    pub tol: f64,
    pub min_eig: Option<f64>,
}

impl BoundMatrix {
    /// An unchecked user-supplied matrix.
    pub fn user(layout: IndexLayout, dtilde: DMatrix<f64>) -> Result<Self> {
        Self::unchecked(layout, dtilde, BoundMethod::User)
    }

    fn unchecked(layout: IndexLayout, dtilde: DMatrix<f64>, method: BoundMethod) -> Result<Self> {
        if dtilde.nrows() != layout.len() || dtilde.ncols() != layout.len() {
            return Err(Error::LayoutMismatch {
                expected: format!("{0}x{0} bound", layout.len()),
                found: format!("{}x{}", dtilde.nrows(), dtilde.ncols()),
            });
        }
        if dtilde.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bound matrix"));
        }
        Ok(Self {
            layout,
            dtilde,
            method,
            certified_bounding: Certification::Unchecked,
            certified_identified: Certification::Unchecked,
            iterations: None,
            tol: DEFAULT_PSD_TOL,
            min_eig: None,
        })
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn dtilde(&self) -> &DMatrix<f64> {
        &self.dtilde
    }

    pub fn method(&self) -> BoundMethod {
        self.method
    }

    pub fn certified_bounding(&self) -> Certification {
        self.certified_bounding
    }

    pub fn certified_identified(&self) -> Certification {
        self.certified_identified
    }

    pub fn iterations(&self) -> Option<usize> {
        self.iterations
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn min_eig(&self) -> Option<f64> {
        self.min_eig
    }

    pub fn sidecar(&self) -> BoundSidecar {
        BoundSidecar {
            method: self.method,
            certified_bounding: self.certified_bounding,
            certified_identified: self.certified_identified,
            iterations: self.iterations,
            tol: self.tol,
            min_eig: self.min_eig,
        }
    }
}

fn ensure_pair(d: &DesignMatrix, mask: &ImpossibilityMask) -> Result<()> {
    d.layout().ensure_same(mask.layout())
}

/// Checks the generalized Neyman preconditions, in order: zero-sum contrast,
/// nonzero contrast entries, no impossible pairs inside diagonal blocks, and
/// equal off-diagonal blocks.
pub fn neyman_preconditions(
    d: &DesignMatrix,
    mask: &ImpossibilityMask,
    c: &ContrastVector,
) -> Result<()> {
    ensure_pair(d, mask)?;
    let layout = *d.layout();
    c.check_layout(&layout)?;
    let scale = c.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if c.sum().abs() > 1e-12 * scale {
        return Err(Error::NeymanPrecondition(
            NeymanViolation::ContrastNotZeroSum { sum: c.sum() },
        ));
    }
    if let Some(arm) = c.as_slice().iter().position(|&v| v == 0.0) {
        return Err(Error::NeymanPrecondition(
            NeymanViolation::ZeroContrastEntry { arm },
        ));
    }
    let (k, n) = (layout.k(), layout.n());
    for r in 0..k {
        for i in 0..n {
            for j in 0..n {
                if mask.is_masked(layout.flat(r, i), layout.flat(r, j)) {
                    return Err(Error::NeymanPrecondition(
                        NeymanViolation::MinusOneInDiagonalBlock {
                            arm: r,
                            row: i,
                            col: j,
                        },
                    ));
                }
            }
        }
    }
    for r in 0..k {
        for s in 0..k {
            if r == s || (r, s) == (0, 1) {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    let (a0, b0) = (layout.flat(0, i), layout.flat(1, j));
                    let (a, b) = (layout.flat(r, i), layout.flat(s, j));
                    let equal = match (d.exact_entry(a0, b0), d.exact_entry(a, b)) {
                        (Some(x), Some(y)) => x == y,
                        _ => {
                            (d.values()[(a0, b0)] - d.values()[(a, b)]).abs() <= BLOCK_EQUALITY_TOL
                        }
                    };
                    if !equal {
                        return Err(Error::NeymanPrecondition(
                            NeymanViolation::UnequalOffDiagonalBlocks {
                                first: (0, 1),
                                other: (r, s),
                                row: i,
                                col: j,
                            },
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Block-diagonal bound with `d̃_rr = Σ_s (c_s / c_r) d_rs` and zero off-diagonal blocks.
pub fn neyman_bound(
    d: &DesignMatrix,
    mask: &ImpossibilityMask,
    c: &ContrastVector,
) -> Result<BoundMatrix> {
    neyman_preconditions(d, mask, c)?;
    let layout = *d.layout();
    let (k, n) = (layout.k(), layout.n());
    let cv = c.as_slice();
    let mut dt = DMatrix::zeros(layout.len(), layout.len());
    for r in 0..k {
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..k)
                    .map(|s| cv[s] / cv[r] * d.values()[(layout.flat(r, i), layout.flat(s, j))])
                    .sum();
                dt[(layout.flat(r, i), layout.flat(r, j))] = v;
            }
        }
    }
    let dt = (&dt + dt.transpose()) * 0.5;
    Ok(certify(
        BoundMatrix::unchecked(layout, dt, BoundMethod::Neyman)?,
        d,
        mask,
        DEFAULT_PSD_TOL,
    ))
}

/// Both sides of `n² (z'd̃^N z - z'd z) = Σ_{r<s} c_r c_s τ_rs' d_12 τ_rs`
/// with `z = z^HT` and `τ_rs = y_r - y_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeymanIdentity {
    pub lhs_gap: f64,
    pub rhs_sum: f64,
}

pub fn neyman_identity_check(
    d: &DesignMatrix,
    mask: &ImpossibilityMask,
    c: &ContrastVector,
    y: &PotentialOutcomes,
) -> Result<NeymanIdentity> {
    let bound = neyman_bound(d, mask, c)?;
    let layout = *d.layout();
    layout.ensure_same(y.layout())?;
    let n = layout.n();
    let z = ht_z(&layout, c, y.values());
    let n2 = (n * n) as f64;
    let lhs_gap = n2 * (quad_form(&z, bound.dtilde()) - quad_form(&z, d.values()));
    let d12 = d.values().view((0, n), (n, n)).into_owned();
    let cv = c.as_slice();
    let mut rhs_sum = 0.0;
    for r in 0..layout.k() {
        for s in (r + 1)..layout.k() {
            let tau = DVector::from_iterator(n, y.arm(r).iter().zip(y.arm(s)).map(|(a, b)| a - b));
            rhs_sum += cv[r] * cv[s] * quad_form(&tau, &d12);
        }
    }
    Ok(NeymanIdentity { lhs_gap, rhs_sum })
}

/// `d + I + diag(I 1)` where `I` is the impossibility mask.
pub fn aronow_samii_bound(d: &DesignMatrix, mask: &ImpossibilityMask) -> Result<BoundMatrix> {
    ensure_pair(d, mask)?;
    let m = mask.values();
    let row_sums = m.column_sum();
    let dt = d.values() + m + DMatrix::from_diagonal(&row_sums);
    Ok(certify(
        BoundMatrix::unchecked(*d.layout(), dt, BoundMethod::AronowSamii)?,
        d,
        mask,
        DEFAULT_PSD_TOL,
    ))
}

/// Starting point for Algorithm M.
#[derive(Debug, Clone)]
pub enum AlgorithmMInit {
    /// `t = I(d = -1)`.
    Mask,
    /// `t = d̃^N - d`; requires the Neyman preconditions.
    Neyman(ContrastVector),
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct AlgorithmMOptions {
    pub init: AlgorithmMInit,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AlgorithmMOptions {
    fn default() -> Self {
        Self {
            init: AlgorithmMInit::Mask,
            tol: DEFAULT_PSD_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Alternates a PSD projection of `t` with resetting `t` to 1 on the mask,
/// stopping once `t` is PSD within `tol`. Returns `d + t`.
pub fn algorithm_m_bound(
    d: &DesignMatrix,
    mask: &ImpossibilityMask,
    opts: &AlgorithmMOptions,
) -> Result<BoundMatrix> {
    ensure_pair(d, mask)?;
    let layout = *d.layout();
    let kn = layout.len();
    let m = mask.values();
    let keep = DMatrix::from_element(kn, kn, 1.0) - m;
    let reset = |t: &DMatrix<f64>| m + keep.component_mul(t);
    let mut t = match &opts.init {
        AlgorithmMInit::Mask => m.clone(),
        AlgorithmMInit::Neyman(c) => neyman_bound(d, mask, c)?.dtilde - d.values(),
        AlgorithmMInit::Matrix(t0) => {
            if t0.nrows() != kn || t0.ncols() != kn {
                return Err(Error::LayoutMismatch {
                    expected: format!("{kn}x{kn} initial matrix"),
                    found: format!("{}x{}", t0.nrows(), t0.ncols()),
                });
            }
            reset(&((t0 + t0.transpose()) * 0.5))
        }
    };
    let mut min_eig = f64::NAN;
    for iteration in 1..=opts.max_iter {
        let eig = t.clone().symmetric_eigen();
        min_eig = eig.eigenvalues.min();
        let radius = eig.eigenvalues.amax();
        if min_eig >= -opts.tol * radius.max(1.0) {
            let mut bound =
                BoundMatrix::unchecked(layout, d.values() + &t, BoundMethod::AlgorithmM)?;
            bound.iterations = Some(iteration);
            return Ok(certify(bound, d, mask, opts.tol));
        }
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        let projected =
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        t = reset(&((&projected + projected.transpose()) * 0.5));
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        min_eig,
    })
}

/// Runs the PSD check on `d̃ - d` and the zero-on-mask check, updating both flags.
pub fn certify(
    mut bound: BoundMatrix,
    d: &DesignMatrix,
    mask: &ImpossibilityMask,
    tol: f64,
) -> BoundMatrix {
    if bound.layout != *d.layout() || bound.layout != *mask.layout() {
        bound.certified_bounding = Certification::No;
        bound.certified_identified = Certification::No;
        return bound;
    }
    match eigen_psd_check(&(&bound.dtilde - d.values()), tol) {
        Ok(report) => {
            bound.certified_bounding = Certification::from_bool(report.psd);
            bound.min_eig = Some(report.min_eig);
        }
        Err(_) => bound.certified_bounding = Certification::No,
    }
    let kn = bound.layout.len();
    let identified = (0..kn).all(|a| {
        (0..kn).all(|b| !mask.is_masked(a, b) || bound.dtilde[(a, b)].abs() <= IDENTIFIED_TOL)
    });
    bound.certified_identified = Certification::from_bool(identified);
    bound.tol = tol;
    bound
}

/// Every n×n block of `d̃` has zero row sums within 1e-10.
pub fn is_invariant_bounding(dtilde: &DMatrix<f64>, layout: &IndexLayout) -> bool {
    let (k, n) = (layout.k(), layout.n());
    if dtilde.nrows() != layout.len() || dtilde.ncols() != layout.len() {
        return false;
    }
    (0..k).all(|r| {
        (0..k).all(|s| {
            (0..n).all(|i| {
                let row: f64 = (0..n)
                    .map(|j| dtilde[(layout.flat(r, i), layout.flat(s, j))])
                    .sum();
                row.abs() <= INVARIANT_TOL
            })
        })
    })
}
