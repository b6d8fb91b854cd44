//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails; a panic inside a criterion counts as FAIL.

mod common;

use std::time::{Duration, Instant};

use common::*;
use designvar::bound_estimation::{
    cr0_sandwich, hc0_sandwich, ht_bound_estimate, ipw_bound_matrix, plugin_bound_estimate,
};
use designvar::bounds::{
    algorithm_m_bound, aronow_samii_bound, neyman_bound, neyman_identity_check, AlgorithmMOptions,
    BoundMatrix,
};
use designvar::design::{
    first_order_condition_norm, second_order_condition_norm, Design, DesignMatrix, DesignMoments,
    DEFAULT_FOURTH_ORDER_BUDGET,
};
use designvar::estimators::{
    expand_covariates, ht_exact_variance, linearization_vector, point_estimate, quadratic_form,
    taylor_gap, weighted_estimate, ContrastVector, CovariateExpansion, EstimatorKind,
    EstimatorSpec, PotentialOutcomes,
};
use designvar::prob::{self, ratio, Rational};
use designvar::spectral::{
    compare_bound_matrices, compare_bounds, compare_designs, eigen_psd_check, Relation,
};
use designvar::IndexLayout;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn spectrum(m: &DMatrix<f64>) -> Vec<f64> {
    eigen_psd_check(m, 1e-8).unwrap().eigenvalues
}

fn spectrum_gap(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn exact_matches(d: &DesignMatrix, want: impl Fn(usize, usize) -> Rational) -> bool {
    let exact = d.exact().expect("exact backend");
    (0..8).all(|a| {
        (0..8).all(|b| {
            exact[a * 8 + b] == want(a, b) && d.values()[(a, b)] == prob::to_f64(&want(a, b))
        })
    })
}

fn tight_m(moments: &DesignMoments) -> BoundMatrix {
    let opts = AlgorithmMOptions {
        tol: 1e-13,
        ..Default::default()
    };
    algorithm_m_bound(&moments.d, &moments.mask, &opts).unwrap()
}

fn criterion_01_paired_design_matrix() -> bool {
    let start = Instant::now();
    let moments = DesignMoments::compute(&paired4()).unwrap();
    let elapsed = start.elapsed();
    let reference = d_paired();
    let exact = exact_matches(&moments.d, |a, b| {
        prob::from_f64(reference[(a, b)]).unwrap()
    });
    let fast = elapsed < Duration::from_secs(1);
    verdict(
        1,
        exact && fast,
        &format!("paired n=4 d exact={exact}, runtime {elapsed:?}"),
    )
}

fn criterion_02_complete_design_matrix() -> bool {
    let moments = DesignMoments::compute(&Design::complete(vec![2, 2]).unwrap()).unwrap();
    let thirds = d_complete_thirds();
    let exact = exact_matches(&moments.d, |a, b| {
        Rational::new(thirds[a][b].into(), 3.into())
    });
    verdict(2, exact, &format!("complete(4,2) d exact={exact}"))
}

fn criterion_03_spectral_comparison() -> bool {
    let cr = DesignMoments::compute(&Design::complete(vec![2, 2]).unwrap()).unwrap();
    let pr = DesignMoments::compute(&paired4()).unwrap();
    let cmp = compare_designs(&cr.d, &pr.d).unwrap();
    let want = [8.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 0.0, -4.0 / 3.0, -4.0 / 3.0];
    let gap = spectrum_gap(&cmp.report.eigenvalues, &want);
    let pattern = DVector::from_vec(vec![-1., -1., 1., 1., 1., 1., -1., -1.]);
    let dist = cmp.report.subspace_distance(8.0 / 3.0, 1e-6, &pattern);
    let ok = gap <= 1e-9 && dist <= 1e-6;
    verdict(
        3,
        ok,
        &format!("spectrum gap {gap:.2e}, leading-direction distance {dist:.2e}"),
    )
}

fn criterion_04_aronow_samii_and_m_bounds() -> bool {
    let moments = DesignMoments::compute(&paired4()).unwrap();
    let as_bound = aronow_samii_bound(&moments.d, &moments.mask).unwrap();
    let m_bound = tight_m(&moments);
    let as_exact = as_bound.dtilde() == &as_paired();
    let m_exact = m_bound.dtilde() == &m_paired();
    let m_residual = (m_bound.dtilde() - m_paired()).amax();
    let gap = spectrum_gap(
        &spectrum(&(as_bound.dtilde() - m_bound.dtilde())),
        &[2., 2., 2., 2., 0., 0., 0., 0.],
    );
    let relation = compare_bounds(&as_bound, &m_bound, 1e-8).unwrap().relation;
    let ok = as_exact && m_exact && gap <= 1e-9 && relation == Relation::BTighter;
    verdict(
        4,
        ok,
        &format!(
            "AS exact={as_exact}, M exact={m_exact} (max residual {m_residual:.2e} after {:?} iterations), \
             spectrum gap {gap:.2e}, verdict {relation} (M is b)",
            m_bound.iterations()
        )
    )
}

fn criterion_05_invariant_bound() -> bool {
    let moments = DesignMoments::compute(&paired4()).unwrap();
    let invariant = invariant_paired();
    let m_bound = tight_m(&moments);
    let vs_d = spectrum_gap(
        &spectrum(&(&invariant - moments.d.values())),
        &[8., 0., 0., 0., 0., 0., 0., 0.],
    );
    let vs_m = spectrum_gap(
        &spectrum(&(&invariant - m_bound.dtilde())),
        &[4., 0., 0., 0., 0., 0., 0., -4.],
    );
    let layout = *moments.d.layout();
    let relation = compare_bound_matrices(&layout, m_bound.dtilde(), &layout, &invariant, 1e-8)
        .unwrap()
        .relation;
    let ok = vs_d <= 1e-9 && vs_m <= 1e-9 && relation == Relation::Incomparable;
    verdict(
        5,
        ok,
        &format!("gap vs d {vs_d:.2e}, gap vs M {vs_m:.2e}, verdict {relation}"),
    )
}

fn realized_data(
    rng: &mut rand_chacha::ChaCha8Rng,
    design: &Design,
    y: &PotentialOutcomes,
    spec: &EstimatorSpec,
    moments: &DesignMoments,
) -> designvar::estimators::ObservedData {
    loop {
        let data = y.observe(&design.sample(rng));
        if point_estimate(spec, &data, &moments.pi).is_ok() {
            return data;
        }
    }
}

fn criterion_06_sandwich_equivalence() -> bool {
    let start = Instant::now();
    let mut rng = rng(6);
    let c = ContrastVector::ate();
    let mut worst_hc0: f64 = 0.0;
    for _ in 0..200 {
        let l = rng.random_range(0..=3);
        let n = rng.random_range(l + 3..=12);
        let probs = (0..n).map(|_| random_arm_probs(&mut rng, 2)).collect();
        let design = Design::bernoulli(2, probs).unwrap();
        let moments = DesignMoments::compute(&design).unwrap();
        let layout = *design.layout();
        let y = random_outcomes(&mut rng, &layout);
        let x = DMatrix::from_fn(n, l, |_, _| rng.random_range(-2.0..2.0));
        let cov = expand_covariates(&x, &layout).unwrap();
        let spec = EstimatorSpec::ols(c.clone(), Some(cov.clone()));
        let data = realized_data(&mut rng, &design, &y, &spec, &moments);
        let ipw = ipw_bound_matrix(
            &aronow_samii_bound(&moments.d, &moments.mask).unwrap(),
            &moments.p,
        )
        .unwrap();
        let plug = plugin_bound_estimate(&spec, &data, &moments.pi, &ipw)
            .unwrap()
            .value;
        let oracle = hc0_sandwich(&data, &cov, &c).unwrap();
        worst_hc0 = worst_hc0.max((plug - oracle).abs() / oracle.abs().max(1.0));
    }
    let mut worst_cr0: f64 = 0.0;
    for _ in 0..100 {
        let g = rng.random_range(2..=6);
        let n = rng.random_range(g.max(4)..=12);
        let mut cluster_of: Vec<usize> = (0..n).map(|i| i % g).collect();
        rand::seq::SliceRandom::shuffle(cluster_of.as_mut_slice(), &mut rng);
        let inner =
            Design::bernoulli(2, (0..g).map(|_| random_arm_probs(&mut rng, 2)).collect()).unwrap();
        let design = Design::cluster(cluster_of.clone(), inner).unwrap();
        let moments = DesignMoments::compute(&design).unwrap();
        let layout = *design.layout();
        let y = random_outcomes(&mut rng, &layout);
        let l = rng.random_range(0..=1);
        let x = DMatrix::from_fn(n, l, |_, _| rng.random_range(-2.0..2.0));
        let cov = expand_covariates(&x, &layout).unwrap();
        let spec = EstimatorSpec::ols(c.clone(), Some(cov.clone()));
        let data = realized_data(&mut rng, &design, &y, &spec, &moments);
        let ipw = ipw_bound_matrix(
            &neyman_bound(&moments.d, &moments.mask, &c).unwrap(),
            &moments.p,
        )
        .unwrap();
        let plug = plugin_bound_estimate(&spec, &data, &moments.pi, &ipw)
            .unwrap()
            .value;
        let oracle = cr0_sandwich(&data, &cov, &c, &cluster_of).unwrap();
        worst_cr0 = worst_cr0.max((plug - oracle).abs() / oracle.abs().max(1.0));
    }
    let elapsed = start.elapsed();
    let ok = worst_hc0 <= 1e-10 && worst_cr0 <= 1e-10 && elapsed < Duration::from_secs(30);
    verdict(
        6,
        ok,
        &format!("HC0 worst rel err {worst_hc0:.2e}, CR0 worst rel err {worst_cr0:.2e}, runtime {elapsed:?}")
    )
}

fn criterion_07_unbiasedness_by_enumeration() -> bool {
    let mut rng = rng(7);
    let (mut bias, mut var_gap, mut bound_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut neyman_cases = 0;
    for _ in 0..100 {
        let design = random_design(&mut rng);
        let layout = *design.layout();
        let moments = DesignMoments::compute(&design).unwrap();
        let y = random_outcomes(&mut rng, &layout);
        let c = if rng.random_bool(0.5) {
            zero_sum_contrast(&mut rng, layout.k())
        } else {
            ContrastVector::new(normal_vec(&mut rng, layout.k())).unwrap()
        };
        let spec = EstimatorSpec::ht(c.clone());
        let z = linearization_vector(&spec, &y, &moments.pi).unwrap();
        let support = design.support().unwrap();
        let estimates: Vec<f64> = support
            .iter()
            .map(|sp| {
                point_estimate(&spec, &y.observe(&sp.assignment), &moments.pi)
                    .unwrap()
                    .value
            })
            .collect();
        let mean: f64 = support
            .iter()
            .zip(&estimates)
            .map(|(sp, e)| sp.prob * e)
            .sum();
        let var: f64 = support
            .iter()
            .zip(&estimates)
            .map(|(sp, e)| sp.prob * (e - mean).powi(2))
            .sum();
        bias = bias.max((mean - y.estimand(&c).unwrap()).abs());
        var_gap = var_gap.max((var - ht_exact_variance(&y, &c, &moments.d).unwrap()).abs());

        let mut bounds = vec![
            aronow_samii_bound(&moments.d, &moments.mask).unwrap(),
            algorithm_m_bound(&moments.d, &moments.mask, &AlgorithmMOptions::default()).unwrap(),
        ];
        if let Ok(b) = neyman_bound(&moments.d, &moments.mask, &c) {
            neyman_cases += 1;
            bounds.push(b);
        }
        for bound in &bounds {
            let ipw = ipw_bound_matrix(bound, &moments.p).unwrap();
            let mean_bound: f64 = support
                .iter()
                .map(|sp| {
                    sp.prob
                        * ht_bound_estimate(&y.observe(&sp.assignment), &c, &ipw)
                            .unwrap()
                            .value
                })
                .sum();
            bound_gap =
                bound_gap.max((mean_bound - quadratic_form(&z, bound.dtilde()).unwrap()).abs());
        }
    }
    let ok = bias <= 1e-12 && var_gap <= 1e-9 && bound_gap <= 1e-9;
    verdict(
        7,
        ok,
        &format!(
            "bias {bias:.2e}, variance gap {var_gap:.2e}, bound-mean gap {bound_gap:.2e} ({neyman_cases} Neyman cases)"
        )
    )
}

fn criterion_08_neyman_identity() -> bool {
    let mut rng = rng(8);
    let (mut gap, mut min_rhs) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let k = rng.random_range(2..=3);
        let design = if rng.random_bool(0.5) {
            let n = rng.random_range(2 * k..=8);
            let mut counts = vec![2; k];
            for _ in 2 * k..n {
                counts[rng.random_range(0..k)] += 1;
            }
            Design::complete(counts).unwrap()
        } else {
            let n = rng.random_range(1..=6);
            Design::bernoulli(k, (0..n).map(|_| random_arm_probs(&mut rng, k)).collect()).unwrap()
        };
        let moments = DesignMoments::compute(&design).unwrap();
        let y = random_outcomes(&mut rng, design.layout());
        let c = zero_sum_contrast(&mut rng, k);
        let id = neyman_identity_check(&moments.d, &moments.mask, &c, &y).unwrap();
        gap = gap.max((id.lhs_gap - id.rhs_sum).abs());
        min_rhs = min_rhs.min(id.rhs_sum);
    }
    let ok = gap <= 1e-9 && min_rhs >= -1e-10;
    verdict(
        8,
        ok,
        &format!("identity gap {gap:.2e}, smallest rhs {min_rhs:.3e}"),
    )
}

/// `(1/n) Σ |d̃_ab d̃_ce dl_abce|` with every moment taken from the enumerated support.
fn brute_force_second_order(design: &Design, dtilde: &DMatrix<f64>) -> f64 {
    let layout = *design.layout();
    let kn = layout.len();
    let support: Vec<(DVector<f64>, f64)> = design
        .support()
        .unwrap()
        .iter()
        .map(|sp| (sp.assignment.indicators(&layout), sp.prob))
        .collect();
    let (_, p) = enumerated_pi_p(design);
    let mut total = 0.0;
    for a in 0..kn {
        for b in 0..kn {
            for c in 0..kn {
                for e in 0..kn {
                    let pp = p[(a, b)] * p[(c, e)];
                    if pp == 0.0 {
                        continue;
                    }
                    let four: f64 = support
                        .iter()
                        .map(|(r, w)| w * r[a] * r[b] * r[c] * r[e])
                        .sum();
                    total += (dtilde[(a, b)] * dtilde[(c, e)] * (four - pp) / pp).abs();
                }
            }
        }
    }
    total / layout.n() as f64
}

fn criterion_09_condition_norms() -> bool {
    let pairs = [
        (4, 2),
        (5, 2),
        (6, 1),
        (6, 3),
        (7, 3),
        (8, 2),
        (9, 4),
        (10, 5),
        (12, 3),
        (20, 7),
    ];
    let mut first_gap = 0.0f64;
    for (n, nt) in pairs {
        let d = DesignMoments::compute(&Design::complete(vec![n - nt, nt]).unwrap())
            .unwrap()
            .d;
        let nc = (n - nt) as f64;
        let nt = nt as f64;
        first_gap =
            first_gap.max((first_order_condition_norm(&d) - 2.0 * (nt / nc + nc / nt + 2.0)).abs());
    }
    let c = ContrastVector::ate();
    let design = Design::complete(vec![2, 2]).unwrap();
    let moments = DesignMoments::compute(&design).unwrap();
    let neyman = neyman_bound(&moments.d, &moments.mask, &c).unwrap();
    let streamed =
        second_order_condition_norm(&design, &neyman, DEFAULT_FOURTH_ORDER_BUDGET).unwrap();
    let oracle_gap = (streamed - brute_force_second_order(&design, neyman.dtilde())).abs();
    let sequence: Vec<f64> = [4usize, 8, 12]
        .iter()
        .map(|&n| {
            let design = Design::complete(vec![n / 2, n / 2]).unwrap();
            let m = DesignMoments::compute(&design).unwrap();
            let b = neyman_bound(&m.d, &m.mask, &c).unwrap();
            second_order_condition_norm(&design, &b, DEFAULT_FOURTH_ORDER_BUDGET).unwrap()
        })
        .collect();
    let non_increasing = sequence.windows(2).all(|w| w[1] <= w[0]);
    let ok = first_gap <= 1e-10 && oracle_gap <= 1e-8 && non_increasing;
    verdict(
        9,
        ok,
        &format!(
            "first-order gap {first_gap:.2e}, second-order oracle gap {oracle_gap:.2e}, \
             sequence n=4,8,12: {sequence:?} non-increasing={non_increasing}"
        ),
    )
}

fn paired_population(n: usize) -> Design {
    let pairs: Vec<(usize, usize)> = (0..n / 2).map(|j| (2 * j, 2 * j + 1)).collect();
    Design::paired(n, &pairs).unwrap()
}

/// Units `0..n-2` paired, the last two treated independently with probability 0.4.
fn paired_with_bernoulli_tail(n: usize) -> Design {
    let head: Vec<usize> = (0..n - 2).collect();
    let blocks = vec![
        (head, paired_population(n - 2)),
        (
            vec![n - 2, n - 1],
            Design::bernoulli_uniform(2, &[ratio(3, 5), ratio(2, 5)]).unwrap(),
        ),
    ];
    Design::block(n, blocks).unwrap()
}

fn criterion_10_taylor_rates() -> bool {
    let base =
        PotentialOutcomes::from_arms(vec![vec![1.0, 3.0, -2.0, 0.5], vec![2.5, 2.0, 0.0, 4.0]])
            .unwrap();
    let c = ContrastVector::ate();
    let scaled: Vec<f64> = [4usize, 8, 16, 32]
        .iter()
        .map(|&n| {
            let y = base.tile(n / 4).unwrap();
            let d = DesignMoments::compute(&paired_population(n)).unwrap().d;
            n as f64 * ht_exact_variance(&y, &c, &d).unwrap()
        })
        .collect();
    let spread = scaled
        .iter()
        .map(|v| (v - scaled[0]).abs())
        .fold(0.0, f64::max);

    let mut worst_fit = 0.0f64;
    let mut report = Vec::new();
    for kind in [EstimatorKind::Cm, EstimatorKind::Hj] {
        let scaled_gaps: Vec<f64> = [8usize, 16, 32]
            .iter()
            .map(|&n| {
                let y = base.tile(n / 4).unwrap();
                let spec = EstimatorSpec::of_kind(kind, c.clone(), None, None).unwrap();
                n as f64
                    * taylor_gap(&spec, &paired_with_bernoulli_tail(n), &y)
                        .unwrap()
                        .max_gap
            })
            .collect();
        let fit =
            (scaled_gaps.iter().map(|v| v.ln()).sum::<f64>() / scaled_gaps.len() as f64).exp();
        worst_fit = scaled_gaps
            .iter()
            .map(|v| (v / fit - 1.0).abs())
            .fold(worst_fit, f64::max);
        report.push(format!("{kind}: n*gap {scaled_gaps:.4?}"));
    }
    let ok = spread <= 1e-9 && worst_fit <= 0.2;
    verdict(
        10,
        ok,
        &format!(
            "n*Var(HT) spread {spread:.2e}, worst c/n misfit {:.1}% ({})",
            100.0 * worst_fit,
            report.join("; ")
        ),
    )
}

fn criterion_11_finite_difference_linearization() -> bool {
    let mut rng = rng(11);
    let mut worst = 0.0f64;
    for kind in [
        EstimatorKind::Cm,
        EstimatorKind::Hj,
        EstimatorKind::Ols,
        EstimatorKind::Wls,
    ] {
        for _ in 0..20 {
            // One-unit populations have an identically zero linearization.
            let design = std::iter::repeat_with(|| random_design(&mut rng))
                .find(|d| d.layout().n() >= 3)
                .unwrap();
            let layout: IndexLayout = *design.layout();
            let pi = DesignMoments::compute(&design).unwrap().pi;
            let y = random_outcomes(&mut rng, &layout);
            let c = ContrastVector::new(normal_vec(&mut rng, layout.k())).unwrap();
            let l = if matches!(kind, EstimatorKind::Ols | EstimatorKind::Wls) {
                rng.random_range(0..=2)
            } else {
                0
            };
            let cov = expand_covariates(
                &DMatrix::from_fn(layout.n(), l, |_, _| rng.random_range(-2.0..2.0)),
                &layout,
            )
            .unwrap();
            let weights = (kind == EstimatorKind::Wls)
                .then(|| DVector::from_fn(layout.len(), |_, _| rng.random_range(0.5..2.0)));
            let regression = matches!(kind, EstimatorKind::Ols | EstimatorKind::Wls);
            let spec = EstimatorSpec::of_kind(
                kind,
                c.clone(),
                regression.then(|| cov.clone()),
                weights.clone(),
            )
            .unwrap();
            let z = linearization_vector(&spec, &y, &pi).unwrap();
            let xx = if regression {
                cov.xx().clone()
            } else {
                CovariateExpansion::intercept(&layout).xx().clone()
            };
            let f = |r: &DVector<f64>| {
                estimator_by_definition(kind, &c, &xx, weights.as_ref(), r, y.values(), pi.probs())
            };
            let fd = finite_difference_z(&f, pi.probs(), 1e-6);
            let rel = (z.values() - &fd).norm() / fd.norm().max(1e-12);
            worst = worst.max(rel);
            let lib = weighted_estimate(&spec, pi.probs(), y.values(), &pi)
                .unwrap()
                .value;
            assert!((lib - f(pi.probs())).abs() <= 1e-9 * lib.abs().max(1.0));
        }
    }
    verdict(
        11,
        worst <= 1e-4,
        &format!("worst relative error {worst:.2e} over 80 instances"),
    )
}

fn main() {
    let criteria: [(u32, fn() -> bool); 11] = [
        (1, criterion_01_paired_design_matrix),
        (2, criterion_02_complete_design_matrix),
        (3, criterion_03_spectral_comparison),
        (4, criterion_04_aronow_samii_and_m_bounds),
        (5, criterion_05_invariant_bound),
        (6, criterion_06_sandwich_equivalence),
        (7, criterion_07_unbiasedness_by_enumeration),
        (8, criterion_08_neyman_identity),
        (9, criterion_09_condition_norms),
        (10, criterion_10_taylor_rates),
        (11, criterion_11_finite_difference_linearization),
    ];
    let mut failed = 0;
    for (id, run) in criteria {
        let passed =
            std::panic::catch_unwind(run).unwrap_or_else(|_| verdict(id, false, "panicked"));
        failed += usize::from(!passed);
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
