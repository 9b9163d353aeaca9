//! Ranking instances: items, pairwise distances and continuation probabilities.
//!
//! Items are indexed `0..n`. An [`Instance`] is validated once at construction
//! and never mutated afterwards, so it can be shared freely across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for symmetry and diagonal checks.
pub const TOLERANCE: f64 = 1e-9;

/// Dense symmetric `n × n` distance matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// All-zero matrix for `n` items.
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "distance row",
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_flat(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "flat distance matrix",
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    /// Builds a matrix from a function on unordered pairs `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                m.set_pair(i, j, f(i, j));
            }
        }
        m
    }

    /// Sets `d(i, j)` and `d(j, i)`.
    pub fn set_pair(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.n + j] = value;
        self.data[j * self.n + i] = value;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Restriction to the given items, in the given order.
    pub fn submatrix(&self, items: &[usize]) -> Self {
        let m = items.len();
        let mut data = Vec::with_capacity(m * m);
        for &i in items {
            let row = self.row(i);
            data.extend(items.iter().map(|&j| row[j]));
        }
        Self { n: m, data }
    }

    /// Largest entry.
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Mean over unordered pairs of distinct items, 0 when `n < 2`.
    pub fn mean_pairwise(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                total += self.get(i, j);
            }
        }
        total / (self.n * (self.n - 1) / 2) as f64
    }
}

/// A validated ranking problem.
#[derive(Debug, Clone)]
pub struct Instance {
    dist: DistanceMatrix,
    probs: Vec<f64>,
    categories: Option<Vec<Vec<u32>>>,
    features: Option<Vec<Vec<f64>>>,
}

impl Instance {
    /// Validates and assembles an instance.
    ///
    /// Category sets are sorted and deduplicated on the way in.
    pub fn build(
        dist: DistanceMatrix,
        probs: Vec<f64>,
        categories: Option<Vec<Vec<u32>>>,
        features: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::EmptyInstance);
        }
        if dist.len() != n {
            return Err(Error::DimensionMismatch {
                what: "distance matrix",
                expected: n,
                found: dist.len(),
            });
        }
        for i in 0..n {
            if dist.get(i, i).abs() > TOLERANCE {
                return Err(Error::NonzeroDiagonal(i));
            }
            for j in 0..n {
                let d = dist.get(i, j);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::InvalidDistance(i, j));
                }
                if j > i && (d - dist.get(j, i)).abs() > TOLERANCE {
                    return Err(Error::AsymmetricDistance(i, j));
                }
            }
        }
        if let Some(i) = probs
            .iter()
            .position(|p| !(0.0..=1.0).contains(p) || p.is_nan())
        {
            return Err(Error::ProbabilityOutOfRange(i));
        }
        let categories = match categories {
            Some(cats) => {
                if cats.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "categories",
                        expected: n,
                        found: cats.len(),
                    });
                }
                Some(
                    cats.into_iter()
                        .map(|mut c| {
                            c.sort_unstable();
                            c.dedup();
                            c
                        })
                        .collect(),
                )
            }
            None => None,
        };
        if let Some(feats) = &features {
            if feats.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "features",
                    expected: n,
                    found: feats.len(),
                });
            }
        }
        Ok(Self {
            dist,
            probs,
            categories,
            features,
        })
    }

    /// Shorthand for an instance with distances and probabilities only.
    pub fn new(dist: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        Self::build(DistanceMatrix::from_rows(dist)?, probs, None, None)
    }

    /// Returns a copy of this instance with category sets attached.
    pub fn with_categories(self, categories: Vec<Vec<u32>>) -> Result<Self> {
        Self::build(self.dist, self.probs, Some(categories), self.features)
    }

    /// Returns a copy with the continuation probabilities replaced.
    pub fn with_probs(self, probs: Vec<f64>) -> Result<Self> {
        Self::build(self.dist, probs, self.categories, self.features)
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist.get(i, j)
    }

    #[inline]
    pub fn p(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn dist(&self) -> &DistanceMatrix {
        &self.dist
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn categories(&self) -> Option<&[Vec<u32>]> {
        self.categories.as_deref()
    }

    /// Category sets, or [`Error::MissingCategories`].
    pub fn require_categories(&self) -> Result<&[Vec<u32>]> {
        self.categories().ok_or(Error::MissingCategories)
    }

    pub fn features(&self) -> Option<&[Vec<f64>]> {
        self.features.as_deref()
    }

    /// `(min p, max p)` over all items.
    pub fn prob_bounds(&self) -> (f64, f64) {
        self.probs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            })
    }

    /// The common probability when all items agree within `1e-12`.
    pub fn uniform_prob(&self) -> Option<f64> {
        let (lo, hi) = self.prob_bounds();
        (hi - lo <= 1e-12).then_some(self.probs[0])
    }
}

/// A permutation of the item indices `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ordering(Vec<usize>);

impl Ordering {
    /// Validates that `perm` is a bijection on `0..n`.
    pub fn new(perm: Vec<usize>, n: usize) -> Result<Self> {
        if perm.len() != n {
            return Err(Error::InvalidOrdering(format!(
                "length {} for {} items",
                perm.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &i in &perm {
            if i >= n {
                return Err(Error::InvalidOrdering(format!("index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidOrdering(format!("index {i} repeated")));
            }
        }
        Ok(Self(perm))
    }

    /// Builds an ordering without validation. Callers guarantee bijectivity.
    pub(crate) fn from_vec_unchecked(perm: Vec<usize>) -> Self {
        debug_assert!({
            let mut s = perm.clone();
            s.sort_unstable();
            s.iter().enumerate().all(|(k, &v)| k == v)
        });
        Self(perm)
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Deref for Ordering {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Cumulative acceptance products `cum[i] = p(seq[0]) * ... * p(seq[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixProducts {
    pub cum: Vec<f64>,
}

impl PrefixProducts {
    /// Prefix products of any sequence of distinct items (a full ordering or a prefix).
    pub fn of(inst: &Instance, seq: &[usize]) -> Self {
        let mut acc = 1.0;
        let cum = seq
            .iter()
            .map(|&i| {
                acc *= inst.p(i);
                acc
            })
            .collect();
        Self { cum }
    }
}

/// Prefix products for an ordering.
pub fn prefix_products(inst: &Instance, ord: &[usize]) -> PrefixProducts {
    PrefixProducts::of(inst, ord)
}

/// Outcome of a triangle-inequality scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub is_metric: bool,
    /// Largest `max(0, d(i,k) - d(i,j) - d(j,k))` over all triples.
    pub worst_violation: f64,
    /// `(i, j, k)` attaining the worst violation, if any triple violates.
    pub violating_triple: Option<(usize, usize, usize)>,
}

/// Exhaustive `O(n³)` triangle-inequality check.
pub fn check_metric(inst: &Instance, tol: f64) -> MetricReport {
    check_metric_matrix(inst.dist(), tol)
}

pub fn check_metric_matrix(dist: &DistanceMatrix, tol: f64) -> MetricReport {
    let n = dist.len();
    let mut worst = 0.0;
    let mut triple = None;
    for i in 0..n {
        let row_i = dist.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let dij = row_i[j];
            let row_j = dist.row(j);
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let excess = row_i[k] - dij - row_j[k];
                if excess > worst {
                    worst = excess;
                    triple = Some((i, j, k));
                }
            }
        }
    }
    MetricReport {
        is_metric: worst <= tol,
        worst_violation: worst,
        violating_triple: if worst > tol { triple } else { None },
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Three items: d(u1,u2) = 0.3, d(u1,u3) = d(u2,u3) = 1; p = (1, 1, 0).
    pub fn example_one() -> Instance {
        Instance::new(
            vec![
                vec![0.0, 0.3, 1.0],
                vec![0.3, 0.0, 1.0],
                vec![1.0, 1.0, 0.0],
            ],
            vec![1.0, 1.0, 0.0],
        )
        .unwrap()
    }
}
