//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use designvar::design::{Design, SupportPoint};
use designvar::estimators::{ContrastVector, EstimatorKind, PotentialOutcomes};
use designvar::prob::{ratio, Rational};
use designvar::IndexLayout;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn from_rows(rows: &[[f64; 8]; 8]) -> DMatrix<f64> {
    DMatrix::from_fn(8, 8, |i, j| rows[i][j])
}

/// Pairs {1,2},{3,4}.
pub fn d_paired() -> DMatrix<f64> {
    from_rows(&[
        [1., -1., 0., 0., -1., 1., 0., 0.],
        [-1., 1., 0., 0., 1., -1., 0., 0.],
        [0., 0., 1., -1., 0., 0., -1., 1.],
        [0., 0., -1., 1., 0., 0., 1., -1.],
        [-1., 1., 0., 0., 1., -1., 0., 0.],
        [1., -1., 0., 0., -1., 1., 0., 0.],
        [0., 0., -1., 1., 0., 0., 1., -1.],
        [0., 0., 1., -1., 0., 0., -1., 1.],
    ])
}

/// Complete randomization, 2 of 4 treated, as multiples of 1/3.
pub fn d_complete_thirds() -> [[i64; 8]; 8] {
    let mut m = [[0i64; 8]; 8];
    for (a, row) in m.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let same_arm = a / 4 == b / 4;
            let same_unit = a % 4 == b % 4;
            *v = match (same_arm, same_unit) {
                (true, true) => 3,
                (true, false) => -1,
                (false, true) => -3,
                (false, false) => 1,
            };
        }
    }
    m
}

pub fn d_complete() -> DMatrix<f64> {
    let t = d_complete_thirds();
    DMatrix::from_fn(8, 8, |i, j| t[i][j] as f64 / 3.0)
}

pub fn as_paired() -> DMatrix<f64> {
    from_rows(&[
        [3., 0., 0., 0., 0., 1., 0., 0.],
        [0., 3., 0., 0., 1., 0., 0., 0.],
        [0., 0., 3., 0., 0., 0., 0., 1.],
        [0., 0., 0., 3., 0., 0., 1., 0.],
        [0., 1., 0., 0., 3., 0., 0., 0.],
        [1., 0., 0., 0., 0., 3., 0., 0.],
        [0., 0., 0., 1., 0., 0., 3., 0.],
        [0., 0., 1., 0., 0., 0., 0., 3.],
    ])
}

pub fn m_paired() -> DMatrix<f64> {
    from_rows(&[
        [2., 0., 0., 0., 0., 2., 0., 0.],
        [0., 2., 0., 0., 2., 0., 0., 0.],
        [0., 0., 2., 0., 0., 0., 0., 2.],
        [0., 0., 0., 2., 0., 0., 2., 0.],
        [0., 2., 0., 0., 2., 0., 0., 0.],
        [2., 0., 0., 0., 0., 2., 0., 0.],
        [0., 0., 0., 2., 0., 0., 2., 0.],
        [0., 0., 2., 0., 0., 0., 0., 2.],
    ])
}

pub fn invariant_paired() -> DMatrix<f64> {
    from_rows(&[
        [2., 0., -1., -1., 0., 2., -1., -1.],
        [0., 2., -1., -1., 2., 0., -1., -1.],
        [-1., -1., 2., 0., -1., -1., 0., 2.],
        [-1., -1., 0., 2., -1., -1., 2., 0.],
        [0., 2., -1., -1., 2., 0., -1., -1.],
        [2., 0., -1., -1., 0., 2., -1., -1.],
        [-1., -1., 0., 2., -1., -1., 2., 0.],
        [-1., -1., 2., 0., -1., -1., 0., 2.],
    ])
}

pub fn paired4() -> Design {
    Design::paired(4, &[(0, 1), (2, 3)]).unwrap()
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-3.0..3.0)).collect()
}

pub fn random_outcomes(rng: &mut ChaCha8Rng, layout: &IndexLayout) -> PotentialOutcomes {
    PotentialOutcomes::new(*layout, normal_vec(rng, layout.len())).unwrap()
}

/// Random contrast with entries bounded away from zero and summing to zero.
pub fn zero_sum_contrast(rng: &mut ChaCha8Rng, k: usize) -> ContrastVector {
    loop {
        let mut c: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mean = c.iter().sum::<f64>() / k as f64;
        c.iter_mut().for_each(|v| *v -= mean);
        let total: f64 = c[..k - 1].iter().sum();
        c[k - 1] = -total;
        if c.iter().all(|v| v.abs() > 0.05) {
            return ContrastVector::new(c).unwrap();
        }
    }
}

pub fn random_arm_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<Rational> {
    let w: Vec<u128> = (0..k).map(|_| rng.random_range(1..10)).collect();
    let total: u128 = w.iter().sum();
    w.into_iter().map(|x| ratio(x, total)).collect()
}

pub fn random_counts(rng: &mut ChaCha8Rng, k: usize, n: usize) -> Vec<usize> {
    let mut counts = vec![1usize; k];
    for _ in k..n {
        counts[rng.random_range(0..k)] += 1;
    }
    counts
}

/// Small complete or Bernoulli design with k arms.
pub fn random_complete_or_bernoulli(rng: &mut ChaCha8Rng, k: usize) -> Design {
    if rng.random_bool(0.5) {
        let n = rng.random_range(k + 1..=7);
        Design::complete(random_counts(rng, k, n)).unwrap()
    } else {
        let n = rng.random_range(1..=if k == 2 { 6 } else { 4 });
        let probs = (0..n).map(|_| random_arm_probs(rng, k)).collect();
        Design::bernoulli(k, probs).unwrap()
    }
}

/// An identified design with a small support, drawn from every family.
pub fn random_design(rng: &mut ChaCha8Rng) -> Design {
    loop {
        let k = if rng.random_bool(0.7) { 2 } else { 3 };
        let design = match rng.random_range(0..6) {
            0 | 1 => random_complete_or_bernoulli(rng, k),
            2 => {
                let n = 2 * rng.random_range(1..=4);
                let mut units: Vec<usize> = (0..n).collect();
                units.shuffle(rng);
                let pairs: Vec<(usize, usize)> = units.chunks(2).map(|p| (p[0], p[1])).collect();
                Design::paired(n, &pairs).unwrap()
            }
            3 => {
                let sizes = [rng.random_range(k..=k + 2), rng.random_range(k..=k + 2)];
                let n = sizes[0] + sizes[1];
                let mut units: Vec<usize> = (0..n).collect();
                units.shuffle(rng);
                let blocks = vec![
                    (
                        units[..sizes[0]].to_vec(),
                        Design::complete(random_counts(rng, k, sizes[0])).unwrap(),
                    ),
                    (
                        units[sizes[0]..].to_vec(),
                        Design::complete(random_counts(rng, k, sizes[1])).unwrap(),
                    ),
                ];
                Design::block(n, blocks).unwrap()
            }
            4 => {
                let g = rng.random_range(2..=4);
                let n = rng.random_range(g..=g + 3);
                let mut cluster_of: Vec<usize> = (0..g).collect();
                for _ in g..n {
                    cluster_of.push(rng.random_range(0..g));
                }
                cluster_of.shuffle(rng);
                let inner =
                    Design::bernoulli(k, (0..g).map(|_| random_arm_probs(rng, k)).collect())
                        .unwrap();
                Design::cluster(cluster_of, inner).unwrap()
            }
            _ => {
                let n = rng.random_range(1..=4);
                let points = rng.random_range(3..=8);
                let weights: Vec<u128> = (0..points).map(|_| rng.random_range(1..6)).collect();
                let total: u128 = weights.iter().sum();
                let support = weights
                    .iter()
                    .map(|&w| {
                        (
                            (0..n).map(|_| rng.random_range(0..k)).collect(),
                            ratio(w, total),
                        )
                    })
                    .collect();
                Design::custom(k, n, support).unwrap()
            }
        };
        if designvar::design::inclusion_probabilities(&design).is_ok() {
            return design;
        }
    }
}

/// `π` and `p` by direct summation over the support.
pub fn enumerated_pi_p(design: &Design) -> (DVector<f64>, DMatrix<f64>) {
    let layout = *design.layout();
    let kn = layout.len();
    let mut pi = DVector::zeros(kn);
    let mut p = DMatrix::zeros(kn, kn);
    for sp in design.support().unwrap() {
        let r = sp.assignment.indicators(&layout);
        pi += &r * sp.prob;
        p += &r * r.transpose() * sp.prob;
    }
    (pi, p)
}

/// Covariance of `π⁻¹ R` by direct summation.
pub fn enumerated_ipw_covariance(design: &Design) -> DMatrix<f64> {
    let layout = *design.layout();
    let (pi, _) = enumerated_pi_p(design);
    let mut cov = DMatrix::zeros(layout.len(), layout.len());
    for sp in design.support().unwrap() {
        let r = sp.assignment.indicators(&layout);
        let v = r.component_div(&pi).add_scalar(-1.0);
        cov += &v * v.transpose() * sp.prob;
    }
    cov
}

/// Horvitz-Thompson estimate written out from its definition.
pub fn ht_by_hand(
    y: &PotentialOutcomes,
    c: &ContrastVector,
    pi: &DVector<f64>,
    sp: &SupportPoint,
) -> f64 {
    let layout = *y.layout();
    let n = layout.n() as f64;
    let mut total = 0.0;
    for i in 0..layout.n() {
        let r = sp.assignment.arm_of(i);
        let a = layout.flat(r, i);
        total += c.as_slice()[r] * y.values()[a] / (n * pi[a]);
    }
    total
}

/// `c'W(R) R y` assembled from the weight-matrix definitions, for a real diagonal `r`.
pub fn estimator_by_definition(
    kind: EstimatorKind,
    c: &ContrastVector,
    xx: &DMatrix<f64>,
    m: Option<&DVector<f64>>,
    r: &DVector<f64>,
    y: &DVector<f64>,
    pi: &DVector<f64>,
) -> f64 {
    let kn = y.len();
    let k = c.k();
    let ones = DMatrix::from_fn(kn, k, |a, j| if a / (kn / k) == j { 1.0 } else { 0.0 });
    let (w, cc) = match kind {
        EstimatorKind::Ht => {
            let inv = (ones.transpose() * &ones).try_inverse().unwrap();
            let pi_inv = DMatrix::from_diagonal(&pi.map(|v| 1.0 / v));
            (
                inv * ones.transpose() * pi_inv,
                DVector::from_column_slice(c.as_slice()),
            )
        }
        _ => {
            let (x, mm) = match kind {
                EstimatorKind::Cm => (ones.clone(), DVector::from_element(kn, 1.0)),
                EstimatorKind::Hj => (ones.clone(), pi.map(|v| 1.0 / v)),
                EstimatorKind::Ols => (xx.clone(), DVector::from_element(kn, 1.0)),
                EstimatorKind::Wls => (xx.clone(), m.unwrap().clone()),
                EstimatorKind::Ht => unreachable!(),
            };
            let mdiag = DMatrix::from_diagonal(&mm);
            let rdiag = DMatrix::from_diagonal(r);
            let denom = (x.transpose() * &mdiag * &rdiag * &x)
                .try_inverse()
                .unwrap();
            let mut cc = DVector::zeros(x.ncols());
            cc.rows_mut(0, k)
                .copy_from(&DVector::from_column_slice(c.as_slice()));
            (denom * x.transpose() * mdiag, cc)
        }
    };
    (cc.transpose() * w * DMatrix::from_diagonal(r) * y)[(0, 0)]
}

/// Central finite-difference linearization: `π_a ∂f/∂R_a` at `R = π`.
pub fn finite_difference_z(
    f: &dyn Fn(&DVector<f64>) -> f64,
    pi: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    DVector::from_fn(pi.len(), |a, _| {
        let mut up = pi.clone();
        let mut down = pi.clone();
        up[a] += h;
        down[a] -= h;
        pi[a] * (f(&up) - f(&down)) / (2.0 * h)
    })
}

/// Prints one acceptance line and returns whether it passed.
pub fn verdict(id: u32, pass: bool, detail: &str) -> bool {
    println!(
        "{} criterion {id:>2}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}
