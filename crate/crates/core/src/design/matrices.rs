//! Inclusion probabilities, joint probabilities, the first-order design
//! matrix, the impossibility mask and the condition norms.

use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use rayon::prelude::*;

use super::{replicate_rng, Design, DesignMode, McConfig};
use crate::bounds::BoundMatrix;
use crate::error::{Error, Result};
use crate::layout::IndexLayout;
use crate::linalg::pairwise_sum;
use crate::prob::{self, Rational};

/// Default cap on the `(kn)^4` accumulations of the fourth-order norm.
pub const DEFAULT_FOURTH_ORDER_BUDGET: u128 = 1 << 28;

/// Diagonal of `π`.
#[derive(Debug, Clone)]
pub struct PiDiagonal {
    layout: IndexLayout,
    probs: DVector<f64>,
    exact: Option<Vec<Rational>>,
    std_errors: Option<DVector<f64>>,
}

impl PiDiagonal {
    /// User-supplied probabilities; must be identified and sum to one per unit.
    pub fn new(layout: IndexLayout, probs: Vec<f64>) -> Result<Self> {
        layout.ensure_len(probs.len(), "inclusion probabilities")?;
        let pi = Self {
            layout,
            probs: DVector::from_vec(probs),
            exact: None,
            std_errors: None,
        };
        pi.check_identified()?;
        for unit in 0..layout.n() {
            let s: f64 = (0..layout.k())
                .map(|r| pi.probs[layout.flat(r, unit)])
                .sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "probabilities of unit {} sum to {s}",
                    unit + 1
                )));
            }
        }
        Ok(pi)
    }

    fn check_identified(&self) -> Result<()> {
        for (index, &value) in self.probs.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::NotIdentified { index, value });
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.probs
    }

    pub fn get(&self, a: usize) -> f64 {
        self.probs[a]
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    /// Per-entry Monte Carlo standard errors, present only for estimated probabilities.
    pub fn std_errors(&self) -> Option<&DVector<f64>> {
        self.std_errors.as_ref()
    }

    pub fn is_estimated(&self) -> bool {
        self.std_errors.is_some()
    }

    pub fn inverse(&self) -> DVector<f64> {
        self.probs.map(|v| 1.0 / v)
    }
}

/// `p = E[R 1 1' R]`.
#[derive(Debug, Clone)]
pub struct JointProbMatrix {
    layout: IndexLayout,
    values: DMatrix<f64>,
    exact: Option<Vec<Rational>>,
    estimated: bool,
}

impl JointProbMatrix {
    pub fn from_matrix(layout: IndexLayout, values: DMatrix<f64>) -> Result<Self> {
        check_square(&layout, &values, "joint probability matrix")?;
        if values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidInput(
                "joint probabilities must lie in [0,1]".into(),
            ));
        }
        Ok(Self {
            layout,
            values,
            exact: None,
            estimated: false,
        })
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn is_estimated(&self) -> bool {
        self.estimated
    }

    /// Zero test on the exact value when available.
    pub fn is_zero(&self, a: usize, b: usize) -> bool {
        match &self.exact {
            Some(e) => e[a * self.layout.len() + b].is_zero(),
            None => self.values[(a, b)] == 0.0,
        }
    }
}

/// `d = (p - ππ') / (ππ')`, elementwise.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    layout: IndexLayout,
    values: DMatrix<f64>,
    exact: Option<Vec<Rational>>,
    estimated: bool,
}

impl DesignMatrix {
    /// Wraps a matrix read from elsewhere. Entries must be finite, at least
    /// -1 and symmetric within 1e-10; the stored matrix is symmetrized.
    pub fn from_matrix(layout: IndexLayout, values: DMatrix<f64>) -> Result<Self> {
        check_square(&layout, &values, "design matrix")?;
        if crate::linalg::asymmetry(&values) > 1e-10 {
            return Err(Error::InvalidInput("design matrix is not symmetric".into()));
        }
        if values.iter().any(|&v| v < -1.0 - 1e-12) {
            return Err(Error::InvalidInput(
                "design matrix has an entry below -1".into(),
            ));
        }
        let values = (&values + values.transpose()) * 0.5;
        Ok(Self {
            layout,
            values,
            exact: None,
            estimated: false,
        })
    }

    /// Row-major exact entries, e.g. from a fraction-valued CSV. Must be
    /// exactly symmetric with every entry at least -1.
    pub fn from_exact_entries(layout: IndexLayout, exact: Vec<Rational>) -> Result<Self> {
        let kn = layout.len();
        if exact.len() != kn * kn {
            return Err(Error::LayoutMismatch {
                expected: format!("{} design matrix entries", kn * kn),
                found: exact.len().to_string(),
            });
        }
        let floor = -Rational::from_integer(1.into());
        for a in 0..kn {
            for b in 0..kn {
                if exact[a * kn + b] != exact[b * kn + a] {
                    return Err(Error::InvalidInput("design matrix is not symmetric".into()));
                }
                if exact[a * kn + b] < floor {
                    return Err(Error::InvalidInput(
                        "design matrix has an entry below -1".into(),
                    ));
                }
            }
        }
        Ok(Self::from_exact(layout, exact))
    }

    pub(crate) fn from_exact(layout: IndexLayout, exact: Vec<Rational>) -> Self {
        let kn = layout.len();
        let values = DMatrix::from_fn(kn, kn, |a, b| prob::to_f64(&exact[a * kn + b]));
        Self {
            layout,
            values,
            exact: Some(exact),
            estimated: false,
        }
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn exact(&self) -> Option<&[Rational]> {
        self.exact.as_deref()
    }

    pub fn exact_entry(&self, a: usize, b: usize) -> Option<&Rational> {
        self.exact.as_ref().map(|e| &e[a * self.layout.len() + b])
    }

    pub fn is_estimated(&self) -> bool {
        self.estimated
    }
}

/// 1 where a pair of assignment indicators can never both be one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpossibilityMask {
    layout: IndexLayout,
    values: DMatrix<f64>,
}

impl ImpossibilityMask {
    pub fn from_matrix(layout: IndexLayout, values: DMatrix<f64>) -> Result<Self> {
        check_square(&layout, &values, "impossibility mask")?;
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput("mask entries must be 0 or 1".into()));
        }
        if crate::linalg::asymmetry(&values) != 0.0 {
            return Err(Error::InvalidInput("mask is not symmetric".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn from_joint(p: &JointProbMatrix) -> Self {
        let kn = p.layout.len();
        let values = DMatrix::from_fn(kn, kn, |a, b| if p.is_zero(a, b) { 1.0 } else { 0.0 });
        Self {
            layout: p.layout,
            values,
        }
    }

    pub fn zeros(layout: IndexLayout) -> Self {
        Self {
            layout,
            values: DMatrix::zeros(layout.len(), layout.len()),
        }
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn is_masked(&self, a: usize, b: usize) -> bool {
        self.values[(a, b)] == 1.0
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v == 1.0).count()
    }
}

fn check_square(layout: &IndexLayout, m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != layout.len() || m.ncols() != layout.len() {
        return Err(Error::LayoutMismatch {
            expected: format!("{what} of size {0}x{0}", layout.len()),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix input"));
    }
    Ok(())
}

/// All first- and second-order quantities of a design.
#[derive(Debug, Clone)]
pub struct DesignMoments {
    pub pi: PiDiagonal,
    pub p: JointProbMatrix,
    pub d: DesignMatrix,
    pub mask: ImpossibilityMask,
}

impl DesignMoments {
    pub fn compute(design: &Design) -> Result<Self> {
        match design.mode() {
            DesignMode::Exact => Self::exact(design),
            DesignMode::MonteCarlo => Self::sampled(
                design,
                design.options().monte_carlo.expect("mc mode has config"),
            ),
        }
    }

    fn exact(design: &Design) -> Result<Self> {
        let layout = *design.layout();
        let kn = layout.len();
        let (pi_q, p_q) = design.exact_moments();
        let pi = PiDiagonal {
            layout,
            probs: DVector::from_iterator(kn, pi_q.iter().map(prob::to_f64)),
            exact: Some(pi_q.clone()),
            std_errors: None,
        };
        pi.check_identified()?;
        let p = JointProbMatrix {
            layout,
            values: DMatrix::from_fn(kn, kn, |a, b| prob::to_f64(&p_q[a * kn + b])),
            exact: Some(p_q.clone()),
            estimated: false,
        };
        let mut d_q = Vec::with_capacity(kn * kn);
        for a in 0..kn {
            for b in 0..kn {
                let pp = &pi_q[a] * &pi_q[b];
                d_q.push(if p_q[a * kn + b].is_zero() {
                    -Rational::one()
                } else {
                    (&p_q[a * kn + b] - &pp) / pp
                });
            }
        }
        let d = DesignMatrix::from_exact(layout, d_q);
        let mask = ImpossibilityMask::from_joint(&p);
        Ok(Self { pi, p, d, mask })
    }

    fn sampled(design: &Design, mc: McConfig) -> Result<Self> {
        let layout = *design.layout();
        let kn = layout.len();
        const CHUNK: usize = 1024;
        let chunks = mc.replicates.div_ceil(CHUNK);
        let counts = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut single = vec![0u64; kn];
                let mut pair = vec![0u64; kn * kn];
                let mut cells = Vec::with_capacity(layout.n());
                for rep in c * CHUNK..((c + 1) * CHUNK).min(mc.replicates) {
                    let a = design.sample(&mut replicate_rng(mc.seed, rep as u64));
                    cells.clear();
                    cells.extend(a.active_cells(&layout));
                    for &x in &cells {
                        single[x] += 1;
                        for &y in &cells {
                            pair[x * kn + y] += 1;
                        }
                    }
                }
                (single, pair)
            })
            .reduce(
                || (vec![0u64; kn], vec![0u64; kn * kn]),
                |(mut s1, mut p1), (s2, p2)| {
                    s1.iter_mut().zip(&s2).for_each(|(a, b)| *a += b);
                    p1.iter_mut().zip(&p2).for_each(|(a, b)| *a += b);
                    (s1, p1)
                },
            );
        let (single, pair) = counts;
        let reps = mc.replicates as f64;
        let probs = DVector::from_iterator(kn, single.iter().map(|&c| c as f64 / reps));
        let std_errors = probs.map(|q| (q * (1.0 - q) / reps).sqrt());
        let pi = PiDiagonal {
            layout,
            probs,
            exact: None,
            std_errors: Some(std_errors),
        };
        pi.check_identified()?;
        let p_values = DMatrix::from_fn(kn, kn, |a, b| pair[a * kn + b] as f64 / reps);
        let p = JointProbMatrix {
            layout,
            values: p_values,
            exact: None,
            estimated: true,
        };
        let mut d_values = DMatrix::zeros(kn, kn);
        for a in 0..kn {
            for b in a..kn {
                let pp = pi.probs[a] * pi.probs[b];
                let v = if pair[a * kn + b] == 0 {
                    -1.0
                } else {
                    (p.values[(a, b)] - pp) / pp
                };
                d_values[(a, b)] = v;
                d_values[(b, a)] = v;
            }
        }
        let d = DesignMatrix {
            layout,
            values: d_values,
            exact: None,
            estimated: true,
        };
        let mask = ImpossibilityMask::from_joint(&p);
        Ok(Self { pi, p, d, mask })
    }
}

/// `π = E[R]`; errors when any entry is outside (0,1).
pub fn inclusion_probabilities(design: &Design) -> Result<PiDiagonal> {
    Ok(DesignMoments::compute(design)?.pi)
}

/// `p = E[R 1 1' R]`.
pub fn joint_probabilities(design: &Design) -> Result<JointProbMatrix> {
    Ok(DesignMoments::compute(design)?.p)
}

pub fn first_order_design_matrix(design: &Design) -> Result<(DesignMatrix, ImpossibilityMask)> {
    let m = DesignMoments::compute(design)?;
    Ok((m.d, m.mask))
}

/// `(1/n) Σ |d_ab|`.
pub fn first_order_condition_norm(d: &DesignMatrix) -> f64 {
    let total: f64 = d.values.iter().map(|v| v.abs()).sum();
    total / d.layout.n() as f64
}

/// `(1/n) Σ_{a,b,c,e} |d̃_ab d̃_ce dl_abce|` with
/// `dl_abce = (E[R_a R_b R_c R_e] - p_ab p_ce) / (p_ab p_ce)` and 0/0 read as 0.
/// Streams over index quadruples.
pub fn second_order_condition_norm(
    design: &Design,
    dtilde: &BoundMatrix,
    budget: u128,
) -> Result<f64> {
    if design.mode() != DesignMode::Exact {
        return Err(Error::RequiresExact(
            "the fourth-order moments need the exact joint law",
        ));
    }
    let layout = *design.layout();
    layout.ensure_same(dtilde.layout())?;
    let kn = layout.len() as u128;
    let required = kn.pow(4);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let (_, p_q) = design.exact_moments();
    let kn = layout.len();
    let dt = dtilde.dtilde();
    let pairs: Vec<(usize, usize, f64, f64)> = (0..kn)
        .flat_map(|a| (0..kn).map(move |b| (a, b)))
        .filter_map(|(a, b)| {
            let p = prob::to_f64(&p_q[a * kn + b]);
            let w = dt[(a, b)];
            (p > 0.0 && w != 0.0).then_some((a, b, w, p))
        })
        .collect();
    let partials: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b, w1, p1)| {
            let terms: Vec<f64> = pairs
                .iter()
                .map(|&(c, e, w2, p2)| {
                    let pp = p1 * p2;
                    let dl = (design.joint_moment(&[a, b, c, e]) - pp) / pp;
                    (w1 * w2 * dl).abs()
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&partials) / layout.n() as f64)
}
