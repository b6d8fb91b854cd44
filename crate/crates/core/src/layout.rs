//! Stacked (arm, unit) indexing shared by every kn-length vector and kn×kn matrix.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Arm count `k` and unit count `n`. Arm `r` and unit `i` (both 0-based)
/// live at flat index `r * n + i`, i.e. arms are stacked as `(y_1', ..., y_k')'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexLayout {
    k: usize,
    n: usize,
}

impl IndexLayout {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "arm count k must be at least 2, got {k}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidInput(
                "unit count n must be at least 1".into(),
            ));
        }
        Ok(Self { k, n })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `k * n`.
    pub fn len(&self) -> usize {
        self.k * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn flat(&self, arm: usize, unit: usize) -> usize {
        debug_assert!(arm < self.k && unit < self.n);
        arm * self.n + unit
    }

    #[inline]
    pub fn arm_unit(&self, flat: usize) -> (usize, usize) {
        (flat / self.n, flat % self.n)
    }

    pub fn ensure_same(&self, other: &IndexLayout) -> Result<()> {
        if self != other {
            return Err(Error::LayoutMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }

    pub fn ensure_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::LayoutMismatch {
                expected: format!("{} of length {}", what, self.len()),
                found: format!("length {len}"),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for IndexLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k={} n={}", self.k, self.n)
    }
}

/// A complete assignment: the arm of every unit. Storing one arm per unit
/// makes "exactly one indicator per unit equals one" hold by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    arms: Vec<usize>,
}

impl Assignment {
    pub fn new(arms: Vec<usize>, layout: &IndexLayout) -> Result<Self> {
        if arms.len() != layout.n() {
            return Err(Error::LayoutMismatch {
                expected: format!("assignment of {} units", layout.n()),
                found: format!("{} units", arms.len()),
            });
        }
        if let Some((unit, &arm)) = arms.iter().enumerate().find(|(_, &a)| a >= layout.k()) {
            return Err(Error::InvalidInput(format!(
                "unit {} assigned to arm {} but k = {}",
                unit + 1,
                arm + 1,
                layout.k()
            )));
        }
        Ok(Self { arms })
    }

    /// Builds an assignment from the kn-length diagonal of `R`, rejecting
    /// vectors where a unit has zero or several indicators set.
    pub fn from_indicators(indicators: &[f64], layout: &IndexLayout) -> Result<Self> {
        layout.ensure_len(indicators.len(), "indicator vector")?;
        let mut arms = Vec::with_capacity(layout.n());
        for unit in 0..layout.n() {
            let mut found = None;
            for arm in 0..layout.k() {
                let v = indicators[layout.flat(arm, unit)];
                if v == 1.0 {
                    if found.is_some() {
                        return Err(Error::InvalidInput(format!(
                            "unit {} has several arms",
                            unit + 1
                        )));
                    }
                    found = Some(arm);
                } else if v != 0.0 {
                    return Err(Error::InvalidInput(format!("indicator {v} is not 0/1")));
                }
            }
            arms.push(
                found
                    .ok_or_else(|| Error::InvalidInput(format!("unit {} has no arm", unit + 1)))?,
            );
        }
        Ok(Self { arms })
    }

    pub(crate) fn from_arms_unchecked(arms: Vec<usize>) -> Self {
        Self { arms }
    }

    pub fn arms(&self) -> &[usize] {
        &self.arms
    }

    pub fn arm_of(&self, unit: usize) -> usize {
        self.arms[unit]
    }

    pub fn n_units(&self) -> usize {
        self.arms.len()
    }

    pub fn is_assigned(&self, layout: &IndexLayout, flat: usize) -> bool {
        let (arm, unit) = layout.arm_unit(flat);
        self.arms[unit] == arm
    }

    /// Flat indices of the `n` indicators that are one.
    pub fn active_cells<'a>(&'a self, layout: &'a IndexLayout) -> impl Iterator<Item = usize> + 'a {
        self.arms
            .iter()
            .enumerate()
            .map(move |(unit, &arm)| layout.flat(arm, unit))
    }

    /// The diagonal of `R`.
    pub fn indicators(&self, layout: &IndexLayout) -> DVector<f64> {
        let mut r = DVector::zeros(layout.len());
        for cell in self.active_cells(layout) {
            r[cell] = 1.0;
        }
        r
    }

    pub fn arm_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &a in &self.arms {
            counts[a] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_round_trips() {
        let layout = IndexLayout::new(3, 4).unwrap();
        for flat in 0..layout.len() {
            let (a, u) = layout.arm_unit(flat);
            assert_eq!(layout.flat(a, u), flat);
        }
        assert_eq!(layout.flat(1, 0), 4);
    }

    #[test]
    fn rejects_degenerate_layouts() {
        assert!(IndexLayout::new(1, 4).is_err());
        assert!(IndexLayout::new(2, 0).is_err());
    }

    #[test]
    fn indicators_have_one_arm_per_unit() {
        let layout = IndexLayout::new(2, 3).unwrap();
        let a = Assignment::new(vec![1, 0, 1], &layout).unwrap();
        let r = a.indicators(&layout);
        assert_eq!(r.as_slice(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(
            Assignment::from_indicators(r.as_slice(), &layout).unwrap(),
            a
        );
        assert!(Assignment::from_indicators(&[1.0, 1.0, 0.0, 1.0, 0.0, 1.0], &layout).is_err());
        assert!(Assignment::from_indicators(&[0.0, 1.0, 0.0, 0.0, 0.0, 1.0], &layout).is_err());
        assert!(Assignment::new(vec![2, 0, 1], &layout).is_err());
    }
}
