//! Randomization designs: construction, enumeration, sampling and exact moments.

mod matrices;
mod spec;

pub use matrices::{
    first_order_condition_norm, first_order_design_matrix, inclusion_probabilities,
    joint_probabilities, second_order_condition_norm, DesignMatrix, DesignMoments,
    ImpossibilityMask, JointProbMatrix, PiDiagonal, DEFAULT_FOURTH_ORDER_BUDGET,
};
pub use spec::{
    build_design, BernoulliProbs, BlockSpec, DesignKind, DesignSpec, ModeSpec, ProbValue,
    SupportPointSpec,
};

use num_traits::Zero;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Assignment, IndexLayout};
use crate::prob::{self, Rational};

/// Default cap on the number of support points enumerated in exact mode.
pub const DEFAULT_SUPPORT_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMode {
    Exact,
    MonteCarlo,
}

/// Replicate count and master seed for sampled designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub support_cap: u64,
    /// Opt-in to sampled moments when the support exceeds the cap.
    pub monte_carlo: Option<McConfig>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            support_cap: DEFAULT_SUPPORT_CAP,
            monte_carlo: None,
        }
    }
}

/// Deterministic generator for replicate `index` under `seed`: one ChaCha
/// stream per replicate, so results do not depend on scheduling.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// One support point of a component, over the component's local units.
#[derive(Debug, Clone)]
pub(crate) struct LocalPoint {
    pub(crate) arms: Vec<usize>,
    pub(crate) prob: Rational,
    pub(crate) weight: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum Law {
    Enumerated {
        points: Vec<LocalPoint>,
        sampler: WeightedIndex<f64>,
    },
    /// All arrangements with `counts[r]` units in arm `r` are equally likely.
    Complete { counts: Vec<usize> },
    /// Every unit takes the arm of its cluster; clusters follow `inner`.
    Clustered {
        cluster_of: Vec<usize>,
        inner: Box<Design>,
    },
}

/// Independent piece of a design acting on `units` (global, 0-based).
#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub(crate) units: Vec<usize>,
    pub(crate) law: Law,
}

/// One assignment of the full support with its probability.
#[derive(Debug, Clone)]
pub struct SupportPoint {
    pub assignment: Assignment,
    pub prob: f64,
}

/// A randomization design: a product of independent components over disjoint unit sets.
#[derive(Debug, Clone)]
pub struct Design {
    layout: IndexLayout,
    components: Vec<Component>,
    /// unit -> (component index, position within the component)
    slots: Vec<(usize, usize)>,
    options: DesignOptions,
    mode: DesignMode,
}

impl Design {
    fn assemble(layout: IndexLayout, components: Vec<Component>) -> Result<Self> {
        let mut slots = vec![(usize::MAX, 0); layout.n()];
        for (ci, comp) in components.iter().enumerate() {
            for (pos, &u) in comp.units.iter().enumerate() {
                if u >= layout.n() {
                    return Err(Error::InvalidDesign(format!(
                        "unit {} out of range 1..{}",
                        u + 1,
                        layout.n()
                    )));
                }
                if slots[u].0 != usize::MAX {
                    return Err(Error::InvalidDesign(format!(
                        "unit {} appears in two components",
                        u + 1
                    )));
                }
                slots[u] = (ci, pos);
            }
        }
        if let Some(u) = slots.iter().position(|s| s.0 == usize::MAX) {
            return Err(Error::InvalidDesign(format!(
                "unit {} is not covered by the design",
                u + 1
            )));
        }
        let mut design = Self {
            layout,
            components,
            slots,
            options: DesignOptions::default(),
            mode: DesignMode::Exact,
        };
        design.apply_options(DesignOptions::default())?;
        Ok(design)
    }

    /// Re-evaluates the mode under new options. The support is enumerable in
    /// exact mode iff its size is within the cap; beyond the cap the design
    /// switches to monte-carlo mode when opted in, and otherwise stays exact
    /// (closed-form moments) with enumeration unavailable.
    pub fn with_options(mut self, options: DesignOptions) -> Result<Self> {
        self.apply_options(options)?;
        Ok(self)
    }

    fn apply_options(&mut self, options: DesignOptions) -> Result<()> {
        if let Some(mc) = options.monte_carlo {
            if mc.replicates < 2 {
                return Err(Error::InvalidDesign(
                    "monte-carlo mode needs at least 2 replicates".into(),
                ));
            }
        }
        self.options = options;
        self.mode =
            if self.support_size() > options.support_cap as u128 && options.monte_carlo.is_some() {
                DesignMode::MonteCarlo
            } else {
                DesignMode::Exact
            };
        Ok(())
    }

    /// Independent per-unit draws; `probs[i][r]` is the chance unit `i` lands in arm `r`.
    pub fn bernoulli(k: usize, probs: Vec<Vec<Rational>>) -> Result<Self> {
        let layout = IndexLayout::new(k, probs.len())?;
        let mut components = Vec::with_capacity(probs.len());
        for (unit, row) in probs.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::InvalidDesign(format!(
                    "unit {} has {} arm probabilities, expected {k}",
                    unit + 1,
                    row.len()
                )));
            }
            let support = row
                .into_iter()
                .enumerate()
                .map(|(arm, q)| (vec![arm], q))
                .collect();
            components.push(Component {
                units: vec![unit],
                law: enumerated_law(support, &format!("unit {}", unit + 1))?,
            });
        }
        Self::assemble(layout, components)
    }

    /// Same arm probabilities for every unit.
    pub fn bernoulli_uniform(n: usize, arm_probs: &[Rational]) -> Result<Self> {
        Self::bernoulli(arm_probs.len(), vec![arm_probs.to_vec(); n])
    }

    /// Exactly `counts[r]` units in arm `r`, every arrangement equally likely.
    pub fn complete(counts: Vec<usize>) -> Result<Self> {
        let n: usize = counts.iter().sum();
        let layout = IndexLayout::new(counts.len(), n)?;
        Self::assemble(
            layout,
            vec![Component {
                units: (0..n).collect(),
                law: Law::Complete { counts },
            }],
        )
    }

    /// Two arms; within each pair one unit is treated, with probability 1/2 each way.
    pub fn paired(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let layout = IndexLayout::new(2, n)?;
        let half = prob::ratio(1, 2);
        let mut components = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a == b {
                return Err(Error::InvalidDesign(format!(
                    "pair ({}, {}) repeats a unit",
                    a + 1,
                    b + 1
                )));
            }
            let support = vec![(vec![0, 1], half.clone()), (vec![1, 0], half.clone())];
            components.push(Component {
                units: vec![a, b],
                law: enumerated_law(support, "pair")?,
            });
        }
        Self::assemble(layout, components)
    }

    /// Independent sub-designs on disjoint unit sets. `blocks[j].0` lists the
    /// global units that the sub-design's local units map to, in order.
    pub fn block(n: usize, blocks: Vec<(Vec<usize>, Design)>) -> Result<Self> {
        let k = match blocks.first() {
            Some((_, d)) => d.layout.k(),
            None => return Err(Error::InvalidDesign("block design without blocks".into())),
        };
        let layout = IndexLayout::new(k, n)?;
        let mut components = Vec::new();
        for (units, sub) in blocks {
            if sub.layout.k() != k {
                return Err(Error::InvalidDesign(
                    "blocks disagree on the arm count".into(),
                ));
            }
            if units.len() != sub.layout.n() {
                return Err(Error::InvalidDesign(format!(
                    "block lists {} units but its design has n = {}",
                    units.len(),
                    sub.layout.n()
                )));
            }
            for comp in sub.components {
                let mapped = comp.units.iter().map(|&u| units[u]).collect();
                components.push(Component {
                    units: mapped,
                    law: comp.law,
                });
            }
        }
        Self::assemble(layout, components)
    }

    /// Units share the arm of their cluster; `cluster_of[i]` is the 0-based
    /// cluster of unit `i` and `inner` randomizes the clusters.
    pub fn cluster(cluster_of: Vec<usize>, inner: Design) -> Result<Self> {
        let g = inner.layout.n();
        if let Some(&bad) = cluster_of.iter().find(|&&c| c >= g) {
            return Err(Error::InvalidDesign(format!(
                "cluster {} out of range 1..{g}",
                bad + 1
            )));
        }
        for c in 0..g {
            if !cluster_of.contains(&c) {
                return Err(Error::InvalidDesign(format!(
                    "cluster {} has no units",
                    c + 1
                )));
            }
        }
        let layout = IndexLayout::new(inner.layout.k(), cluster_of.len())?;
        let units = (0..cluster_of.len()).collect();
        Self::assemble(
            layout,
            vec![Component {
                units,
                law: Law::Clustered {
                    cluster_of,
                    inner: Box::new(inner),
                },
            }],
        )
    }

    /// Explicit support: each entry gives every unit's arm and a probability.
    pub fn custom(k: usize, n: usize, support: Vec<(Vec<usize>, Rational)>) -> Result<Self> {
        let layout = IndexLayout::new(k, n)?;
        for (arms, _) in &support {
            Assignment::new(arms.clone(), &layout)?;
        }
        Self::assemble(
            layout,
            vec![Component {
                units: (0..n).collect(),
                law: enumerated_law(support, "support")?,
            }],
        )
    }

    pub fn layout(&self) -> &IndexLayout {
        &self.layout
    }

    pub fn mode(&self) -> DesignMode {
        self.mode
    }

    pub fn options(&self) -> &DesignOptions {
        &self.options
    }

    /// Number of assignments with positive probability (saturating).
    pub fn support_size(&self) -> u128 {
        self.components
            .iter()
            .fold(1u128, |acc, c| acc.saturating_mul(c.support_size()))
    }

    pub fn is_enumerable(&self) -> bool {
        self.mode == DesignMode::Exact && self.support_size() <= self.options.support_cap as u128
    }

    /// The full support with probabilities.
    pub fn support(&self) -> Result<Vec<SupportPoint>> {
        let size = self.support_size();
        if !self.is_enumerable() {
            return Err(Error::SupportOverflow {
                size,
                cap: self.options.support_cap,
            });
        }
        let local: Vec<Vec<(Vec<usize>, f64)>> =
            self.components.iter().map(|c| c.local_support()).collect();
        let mut out = Vec::with_capacity(size as usize);
        let mut idx = vec![0usize; local.len()];
        let mut arms = vec![0usize; self.layout.n()];
        loop {
            let mut weight = 1.0;
            for (ci, comp) in self.components.iter().enumerate() {
                let (local_arms, w) = &local[ci][idx[ci]];
                weight *= w;
                for (pos, &u) in comp.units.iter().enumerate() {
                    arms[u] = local_arms[pos];
                }
            }
            out.push(SupportPoint {
                assignment: Assignment::from_arms_unchecked(arms.clone()),
                prob: weight,
            });
            let mut c = 0;
            loop {
                if c == local.len() {
                    return Ok(out);
                }
                idx[c] += 1;
                if idx[c] < local[c].len() {
                    break;
                }
                idx[c] = 0;
                c += 1;
            }
        }
    }

    /// Draws one assignment.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut arms = vec![0usize; self.layout.n()];
        for comp in &self.components {
            let local = comp.sample(rng);
            for (pos, &u) in comp.units.iter().enumerate() {
                arms[u] = local[pos];
            }
        }
        Assignment::from_arms_unchecked(arms)
    }

    /// Exact `π` (length kn) and `p` (kn×kn, row-major) as rationals.
    pub fn exact_moments(&self) -> (Vec<Rational>, Vec<Rational>) {
        let kn = self.layout.len();
        let n = self.layout.n();
        let k = self.layout.k();
        let mut pi = vec![Rational::zero(); kn];
        let locals: Vec<(Vec<Rational>, Vec<Rational>)> =
            self.components.iter().map(|c| c.local_moments(k)).collect();
        for (comp, (lpi, _)) in self.components.iter().zip(&locals) {
            let m = comp.units.len();
            for r in 0..k {
                for (pos, &u) in comp.units.iter().enumerate() {
                    pi[r * n + u] = lpi[r * m + pos].clone();
                }
            }
        }
        let mut p = vec![Rational::zero(); kn * kn];
        for a in 0..kn {
            let (ra, ua) = self.layout.arm_unit(a);
            let (ca, pa) = self.slots[ua];
            for b in a..kn {
                let (rb, ub) = self.layout.arm_unit(b);
                let (cb, pb) = self.slots[ub];
                let v = if ca == cb {
                    let m = self.components[ca].units.len();
                    locals[ca].1[(ra * m + pa) * k * m + rb * m + pb].clone()
                } else {
                    &pi[a] * &pi[b]
                };
                p[b * kn + a] = v.clone();
                p[a * kn + b] = v;
            }
        }
        (pi, p)
    }

    /// `E[Π R_cell]` over up to four flat cells.
    pub fn joint_moment(&self, cells: &[usize]) -> f64 {
        debug_assert!(cells.len() <= 4);
        let mut keyed = [(0usize, 0usize, 0usize); 4];
        for (slot, &cell) in keyed.iter_mut().zip(cells) {
            let (arm, unit) = self.layout.arm_unit(cell);
            let (comp, pos) = self.slots[unit];
            *slot = (comp, pos, arm);
        }
        let keyed = &mut keyed[..cells.len()];
        keyed.sort_unstable();
        let mut value = 1.0;
        let mut start = 0;
        while start < keyed.len() {
            let comp = keyed[start].0;
            let mut end = start;
            while end < keyed.len() && keyed[end].0 == comp {
                end += 1;
            }
            value *= self.components[comp].moment(&keyed[start..end], self.layout.k());
            if value == 0.0 {
                return 0.0;
            }
            start = end;
        }
        value
    }
}

fn enumerated_law(support: Vec<(Vec<usize>, Rational)>, what: &str) -> Result<Law> {
    let mut total = Rational::zero();
    let mut points = Vec::with_capacity(support.len());
    for (arms, q) in support {
        if !prob::is_probability(&q) {
            return Err(Error::InvalidDesign(format!(
                "{what}: probability {} outside [0,1]",
                prob::format(&q)
            )));
        }
        total += &q;
        if q.is_zero() {
            continue;
        }
        points.push(LocalPoint {
            arms,
            weight: prob::to_f64(&q),
            prob: q,
        });
    }
    if (prob::to_f64(&total) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDesign(format!(
            "{what}: probabilities sum to {}, not 1",
            prob::to_f64(&total)
        )));
    }
    let sampler = WeightedIndex::new(points.iter().map(|p| p.weight))
        .map_err(|e| Error::InvalidDesign(format!("{what}: {e}")))?;
    Ok(Law::Enumerated { points, sampler })
}

/// `n (n-1) ... (n-m+1)` as a float.
fn falling(n: usize, m: usize) -> f64 {
    (0..m).fold(1.0, |acc, j| acc * (n as f64 - j as f64))
}

fn multinomial(counts: &[usize]) -> u128 {
    let mut total = 0u128;
    let mut acc = 1u128;
    for &c in counts {
        for j in 1..=c as u128 {
            total += 1;
            acc = match acc.checked_mul(total) {
                Some(v) => v / j,
                None => return u128::MAX,
            };
        }
    }
    acc
}

/// Lexicographic successor of a multiset permutation; false when `v` was the last one.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

impl Component {
    fn support_size(&self) -> u128 {
        match &self.law {
            Law::Enumerated { points, .. } => points.len() as u128,
            Law::Complete { counts } => multinomial(counts),
            Law::Clustered { inner, .. } => inner.support_size(),
        }
    }

    fn local_support(&self) -> Vec<(Vec<usize>, f64)> {
        match &self.law {
            Law::Enumerated { points, .. } => {
                points.iter().map(|p| (p.arms.clone(), p.weight)).collect()
            }
            Law::Complete { counts } => {
                let w = 1.0 / multinomial(counts) as f64;
                let mut labels: Vec<usize> = counts
                    .iter()
                    .enumerate()
                    .flat_map(|(r, &c)| std::iter::repeat_n(r, c))
                    .collect();
                let mut out = vec![(labels.clone(), w)];
                while next_permutation(&mut labels) {
                    out.push((labels.clone(), w));
                }
                out
            }
            Law::Clustered { cluster_of, inner } => inner
                .support()
                .expect("cluster-level support is enumerable whenever the outer support is")
                .into_iter()
                .map(|sp| {
                    (
                        cluster_of
                            .iter()
                            .map(|&g| sp.assignment.arm_of(g))
                            .collect(),
                        sp.prob,
                    )
                })
                .collect(),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        match &self.law {
            Law::Enumerated { points, sampler } => points[sampler.sample(rng)].arms.clone(),
            Law::Complete { counts } => {
                let mut labels: Vec<usize> = counts
                    .iter()
                    .enumerate()
                    .flat_map(|(r, &c)| std::iter::repeat_n(r, c))
                    .collect();
                labels.shuffle(rng);
                labels
            }
            Law::Clustered { cluster_of, inner } => {
                let a = inner.sample(rng);
                cluster_of.iter().map(|&g| a.arm_of(g)).collect()
            }
        }
    }

    /// Exact local `π` (k·m) and `p` ((k·m)², row-major) with local index `r*m + pos`.
    fn local_moments(&self, k: usize) -> (Vec<Rational>, Vec<Rational>) {
        let m = self.units.len();
        let km = k * m;
        let mut pi = vec![Rational::zero(); km];
        let mut p = vec![Rational::zero(); km * km];
        match &self.law {
            Law::Enumerated { points, .. } => {
                for pt in points {
                    for (pos, &r) in pt.arms.iter().enumerate() {
                        let a = r * m + pos;
                        pi[a] += &pt.prob;
                        for (pos2, &r2) in pt.arms.iter().enumerate() {
                            p[a * km + r2 * m + pos2] += &pt.prob;
                        }
                    }
                }
            }
            Law::Complete { counts } => {
                let nc = m as u128;
                for r in 0..k {
                    for pos in 0..m {
                        pi[r * m + pos] = prob::ratio(counts[r] as u128, nc);
                    }
                }
                for a in 0..km {
                    let (r, u) = (a / m, a % m);
                    for b in 0..km {
                        let (s, v) = (b / m, b % m);
                        p[a * km + b] = if u == v {
                            if r == s {
                                pi[a].clone()
                            } else {
                                Rational::zero()
                            }
                        } else {
                            let nr = counts[r] as u128;
                            let ns = (counts[s] as u128).saturating_sub(u128::from(r == s));
                            prob::ratio(nr * ns, nc * (nc - 1))
                        };
                    }
                }
            }
            Law::Clustered { cluster_of, inner } => {
                let (ipi, ip) = inner.exact_moments();
                let g = inner.layout.n();
                let kg = k * g;
                for a in 0..km {
                    let (r, u) = (a / m, a % m);
                    let ia = r * g + cluster_of[u];
                    pi[a] = ipi[ia].clone();
                    for b in 0..km {
                        let (s, v) = (b / m, b % m);
                        p[a * km + b] = ip[ia * kg + s * g + cluster_of[v]].clone();
                    }
                }
            }
        }
        (pi, p)
    }

    /// `E[Π R]` over cells given as sorted (component, position, arm) triples.
    fn moment(&self, cells: &[(usize, usize, usize)], k: usize) -> f64 {
        match &self.law {
            Law::Enumerated { points, .. } => points
                .iter()
                .filter(|pt| cells.iter().all(|&(_, pos, arm)| pt.arms[pos] == arm))
                .map(|pt| pt.weight)
                .sum(),
            Law::Complete { counts } => {
                let mut distinct = 0;
                let mut per_arm = vec![0usize; k];
                for (i, &(_, pos, arm)) in cells.iter().enumerate() {
                    if let Some(j) = cells[..i].iter().position(|&(_, p2, _)| p2 == pos) {
                        if cells[j].2 != arm {
                            return 0.0;
                        }
                        continue;
                    }
                    distinct += 1;
                    per_arm[arm] += 1;
                }
                let num: f64 = per_arm
                    .iter()
                    .zip(counts)
                    .map(|(&need, &have)| falling(have, need))
                    .product();
                num / falling(self.units.len(), distinct)
            }
            Law::Clustered { cluster_of, inner } => {
                let g = inner.layout.n();
                let mut mapped = [0usize; 4];
                for (slot, &(_, pos, arm)) in mapped.iter_mut().zip(cells) {
                    *slot = arm * g + cluster_of[pos];
                }
                inner.joint_moment(&mapped[..cells.len()])
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> Rational {
        prob::ratio(1, 2)
    }

    #[test]
    fn paired_support_has_four_equiprobable_points() {
        let d = Design::paired(4, &[(0, 1), (2, 3)]).unwrap();
        let s = d.support().unwrap();
        assert_eq!(s.len(), 4);
        for sp in &s {
            assert_eq!(sp.prob, 0.25);
            let a = sp.assignment.arms();
            assert_ne!(a[0], a[1]);
            assert_ne!(a[2], a[3]);
        }
    }

    #[test]
    fn complete_support_is_binomial() {
        let d = Design::complete(vec![2, 2]).unwrap();
        let s = d.support().unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|sp| sp.assignment.arm_counts(2) == vec![2, 2]));
        let distinct: std::collections::HashSet<_> =
            s.iter().map(|sp| sp.assignment.clone()).collect();
        assert_eq!(distinct.len(), 6);
        assert_eq!(multinomial(&[3, 2, 1]), 60);
    }

    #[test]
    fn large_bernoulli_goes_monte_carlo_only_when_opted_in() {
        let d = Design::bernoulli_uniform(30, &[half(), half()]).unwrap();
        assert_eq!(d.support_size(), 1 << 30);
        assert_eq!(d.mode(), DesignMode::Exact);
        assert!(!d.is_enumerable());
        assert!(matches!(d.support(), Err(Error::SupportOverflow { .. })));
        let mc = d
            .with_options(DesignOptions {
                support_cap: 1 << 20,
                monte_carlo: Some(McConfig {
                    replicates: 100,
                    seed: 1,
                }),
            })
            .unwrap();
        assert_eq!(mc.mode(), DesignMode::MonteCarlo);
    }

    #[test]
    fn rejects_infeasible_specs() {
        assert!(Design::paired(4, &[(0, 1)]).is_err());
        assert!(Design::paired(4, &[(0, 1), (1, 2)]).is_err());
        assert!(Design::custom(2, 2, vec![(vec![0, 1], half())]).is_err());
        assert!(Design::bernoulli(2, vec![vec![half()]]).is_err());
    }

    #[test]
    fn cluster_lifts_inner_assignments() {
        let inner = Design::bernoulli_uniform(2, &[half(), half()]).unwrap();
        let d = Design::cluster(vec![0, 0, 1], inner).unwrap();
        let s = d.support().unwrap();
        assert_eq!(s.len(), 4);
        assert!(s
            .iter()
            .all(|sp| sp.assignment.arm_of(0) == sp.assignment.arm_of(1)));
    }

    #[test]
    fn joint_moment_matches_enumeration() {
        let inner = Design::complete(vec![1, 2]).unwrap();
        let designs = vec![
            Design::complete(vec![2, 3]).unwrap(),
            Design::paired(4, &[(0, 2), (1, 3)]).unwrap(),
            Design::cluster(vec![0, 1, 1, 2], inner).unwrap(),
        ];
        for d in designs {
            let layout = *d.layout();
            let support = d.support().unwrap();
            let kn = layout.len();
            for cells in [
                [0, 1, 2, 3],
                [0, 0, 1, kn - 1],
                [1, kn - 2, 2, 0],
                [0, layout.n(), 1, 1],
            ] {
                let oracle: f64 = support
                    .iter()
                    .filter(|sp| cells.iter().all(|&c| sp.assignment.is_assigned(&layout, c)))
                    .map(|sp| sp.prob)
                    .sum();
                assert!((d.joint_moment(&cells) - oracle).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn replicate_streams_are_reproducible() {
        let d = Design::complete(vec![3, 3]).unwrap();
        let a = d.sample(&mut replicate_rng(9, 4));
        let b = d.sample(&mut replicate_rng(9, 4));
        assert_eq!(a, b);
    }
}
