//! Ranking algorithms with approximation guarantees.
//!
//! * [`best_k_items`] (BkE): exhaustive search for the best length-κ prefix
//!   under a truncated path surrogate, then extension to a full ranking.
//! * [`best_k_items_heuristic`] (BkE-H): the same search restricted to a
//!   greedily chosen candidate pool.
//! * [`greedy_matching_rank`] (BkM): a path assembled from a greedy matching.
//! * [`greedy_rank`]: pair seed followed by marginal-OSD greedy.
//! * [`coverage_greedy_rank`]: position greedy for coverage diversity.
//!
//! Ties are always broken towards the lowest item index, then lexicographic
//! pair order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{check_metric, Instance, MetricReport, Ordering, TOLERANCE};

/// Which truncated surrogate the prefix search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurrogateMode {
    /// `ell_hat`; requires a common probability strictly inside `(0, 1)`.
    Uniform,
    /// `ell_tilde`.
    NonUniform,
}

/// How items after the optimized prefix are appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// Largest marginal OSD gain first.
    Greedy,
    /// Ascending item index.
    Arbitrary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkeConfig {
    pub kappa: usize,
    pub mode: SurrogateMode,
    pub extension: Extension,
    /// Candidate pool size for the heuristic variant.
    pub candidate_cap: Option<usize>,
}

impl BkeConfig {
    /// Greedy extension, no candidate cap.
    pub fn new(kappa: usize, mode: SurrogateMode) -> Self {
        Self {
            kappa,
            mode,
            extension: Extension::Greedy,
            candidate_cap: None,
        }
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = extension;
        self
    }

    pub fn with_candidate_cap(mut self, cap: usize) -> Self {
        self.candidate_cap = Some(cap);
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.kappa < 2 || self.kappa > n {
            return Err(Error::KappaOutOfRange {
                kappa: self.kappa,
                n,
            });
        }
        if let Some(cap) = self.candidate_cap {
            if cap < self.kappa {
                return Err(Error::Config(format!(
                    "candidate cap {cap} is smaller than kappa {}",
                    self.kappa
                )));
            }
        }
        Ok(())
    }
}

/// Best-κ-items ranking over all items.
pub fn best_k_items(inst: &Instance, cfg: &BkeConfig) -> Result<Ordering> {
    cfg.validate(inst.n())?;
    let candidates: Vec<usize> = (0..inst.n()).collect();
    let (prefix, _) = best_kappa_prefix(inst, &candidates, cfg.kappa, cfg.mode)?;
    Ok(extend(inst, prefix, cfg.extension))
}

/// Best-κ-items with the prefix search restricted to the first `candidate_cap`
/// items chosen by [`greedy_rank`].
pub fn best_k_items_heuristic(inst: &Instance, cfg: &BkeConfig) -> Result<Ordering> {
    cfg.validate(inst.n())?;
    let cap = cfg
        .candidate_cap
        .ok_or_else(|| Error::Config("heuristic best-k-items needs a candidate cap".into()))?;
    let mut candidates = greedy_sequence(inst, cap.min(inst.n()));
    candidates.sort_unstable();
    let (prefix, _) = best_kappa_prefix(inst, &candidates, cfg.kappa, cfg.mode)?;
    Ok(extend(inst, prefix, cfg.extension))
}

/// Exhaustive search for the length-`kappa` sequence of distinct `candidates`
/// maximizing the chosen surrogate.
///
/// Sequences are visited in lexicographic order of candidate positions and a
/// sequence replaces the incumbent only when strictly better, so ties resolve
/// to the lexicographically first optimum. Branches whose upper bound falls
/// below the incumbent are skipped; this never changes the result.
pub fn best_kappa_prefix(
    inst: &Instance,
    candidates: &[usize],
    kappa: usize,
    mode: SurrogateMode,
) -> Result<(Vec<usize>, f64)> {
    if kappa < 2 || kappa > candidates.len() {
        return Err(Error::KappaOutOfRange {
            kappa,
            n: candidates.len(),
        });
    }
    let surrogate = match mode {
        SurrogateMode::Uniform => {
            let p = inst
                .uniform_prob()
                .ok_or(Error::NonUniformProbsInUniformMode)?;
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::DegenerateProbability(p));
            }
            // coef[e] = p^{e+2} / (1 - p); tail[e] = Σ_{f ≥ e} coef[f].
            let coef: Vec<f64> = (0..kappa - 1)
                .map(|e| p.powi(e as i32 + 2) / (1.0 - p))
                .collect();
            let mut tail = vec![0.0; kappa];
            for e in (0..kappa - 1).rev() {
                tail[e] = tail[e + 1] + coef[e];
            }
            Surrogate::Uniform { coef, tail }
        }
        SurrogateMode::NonUniform => Surrogate::NonUniform {
            pmax: inst.prob_bounds().1,
        },
    };
    let mut dmax = 0.0f64;
    for (a, &i) in candidates.iter().enumerate() {
        for &j in &candidates[a + 1..] {
            dmax = dmax.max(inst.d(i, j));
        }
    }
    let mut search = PrefixSearch {
        inst,
        candidates,
        kappa,
        surrogate,
        dmax,
        used: vec![false; candidates.len()],
        stack: Vec::with_capacity(kappa),
        best: f64::NEG_INFINITY,
        best_seq: Vec::new(),
    };
    for (a, &first) in candidates.iter().enumerate() {
        search.used[a] = true;
        search.stack.push(first);
        search.descend(0.0, inst.p(first), 0.0);
        search.stack.pop();
        search.used[a] = false;
    }
    Ok((search.best_seq, search.best))
}

enum Surrogate {
    Uniform { coef: Vec<f64>, tail: Vec<f64> },
    NonUniform { pmax: f64 },
}

struct PrefixSearch<'a> {
    inst: &'a Instance,
    candidates: &'a [usize],
    kappa: usize,
    surrogate: Surrogate,
    dmax: f64,
    used: Vec<bool>,
    stack: Vec<usize>,
    best: f64,
    best_seq: Vec<usize>,
}

impl PrefixSearch<'_> {
    /// `value` is the surrogate of the current stack, `reach` its last prefix
    /// product and `path` its path length.
    fn descend(&mut self, value: f64, reach: f64, path: f64) {
        let m = self.stack.len();
        if m == self.kappa {
            if value > self.best {
                self.best = value;
                self.best_seq.clone_from(&self.stack);
            }
            return;
        }
        if self.best > f64::NEG_INFINITY {
            let bound = value + self.remaining_bound(m, reach, path);
            if bound < self.best - 1e-12 * self.best.abs().max(1.0) {
                return;
            }
        }
        let last = self.stack[m - 1];
        let row = self.inst.dist().row(last);
        for a in 0..self.candidates.len() {
            if self.used[a] {
                continue;
            }
            let v = self.candidates[a];
            let d = row[v];
            let (next_value, next_reach, next_path) = match &self.surrogate {
                Surrogate::Uniform { coef, .. } => (value + coef[m - 1] * d, reach, path),
                Surrogate::NonUniform { .. } => {
                    let r = reach * self.inst.p(v);
                    let l = path + d;
                    (value + r * l, r, l)
                }
            };
            self.used[a] = true;
            self.stack.push(v);
            self.descend(next_value, next_reach, next_path);
            self.stack.pop();
            self.used[a] = false;
        }
    }

    /// Upper bound on what the remaining `kappa - m` appends can add.
    fn remaining_bound(&self, m: usize, reach: f64, path: f64) -> f64 {
        match &self.surrogate {
            Surrogate::Uniform { tail, .. } => tail[m - 1] * self.dmax,
            Surrogate::NonUniform { pmax } => {
                let mut bound = 0.0;
                let mut r = reach;
                for t in 1..=(self.kappa - m) {
                    r *= pmax;
                    bound += r * (path + t as f64 * self.dmax);
                }
                bound
            }
        }
    }
}

fn extend(inst: &Instance, prefix: Vec<usize>, extension: Extension) -> Ordering {
    match extension {
        Extension::Greedy => Ordering::from_vec_unchecked(greedy_extend(inst, prefix, inst.n())),
        Extension::Arbitrary => {
            let mut seq = prefix;
            let mut placed = vec![false; inst.n()];
            for &i in &seq {
                placed[i] = true;
            }
            seq.extend((0..inst.n()).filter(|&i| !placed[i]));
            Ordering::from_vec_unchecked(seq)
        }
    }
}

/// Appends items by largest marginal OSD gain until `seq` holds `limit` items.
///
/// The gain of appending `v` is `reach · p_v · Σ_{u ∈ seq} d(u, v)`; the
/// distance sums are maintained incrementally, so each step is `O(n)`.
fn greedy_extend(inst: &Instance, mut seq: Vec<usize>, limit: usize) -> Vec<usize> {
    let n = inst.n();
    let mut placed = vec![false; n];
    let mut to_seq = vec![0.0; n];
    let mut reach = 1.0;
    for &u in &seq {
        placed[u] = true;
        reach *= inst.p(u);
        for (v, d) in inst.dist().row(u).iter().enumerate() {
            to_seq[v] += d;
        }
    }
    while seq.len() < limit.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for v in (0..n).filter(|&v| !placed[v]) {
            let gain = reach * inst.p(v) * to_seq[v];
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((v, gain));
            }
        }
        let (v, _) = best.expect("unplaced item exists");
        placed[v] = true;
        seq.push(v);
        reach *= inst.p(v);
        for (w, d) in inst.dist().row(v).iter().enumerate() {
            to_seq[w] += d;
        }
    }
    seq
}

/// Pair maximizing `p_i · p_j · d(i, j)`, `i < j`.
fn best_pair(inst: &Instance) -> (usize, usize) {
    let n = inst.n();
    let mut best = (0, 1, f64::NEG_INFINITY);
    for i in 0..n {
        let row = inst.dist().row(i);
        for j in (i + 1)..n {
            let v = inst.p(i) * inst.p(j) * row[j];
            if v > best.2 {
                best = (i, j, v);
            }
        }
    }
    (best.0, best.1)
}

/// The first `limit` items of [`greedy_rank`].
fn greedy_sequence(inst: &Instance, limit: usize) -> Vec<usize> {
    if inst.n() < 2 || limit < 2 {
        return greedy_extend(inst, Vec::new(), limit);
    }
    let (i, j) = best_pair(inst);
    greedy_extend(inst, vec![i, j], limit)
}

/// Greedy ranking: the best pair under `p_i p_j d(i, j)`, then repeatedly the
/// item with the largest marginal OSD gain.
pub fn greedy_rank(inst: &Instance) -> Result<Ordering> {
    if inst.n() < 2 {
        return Err(Error::TooFewItems { n: inst.n(), min: 2 });
    }
    Ok(Ordering::from_vec_unchecked(greedy_sequence(inst, inst.n())))
}

/// Position greedy for OCD: each step appends the item covering the most new
/// categories, weighted by its acceptance probability.
pub fn coverage_greedy_rank(inst: &Instance) -> Result<Ordering> {
    let cats = inst.require_categories()?;
    let n = inst.n();
    let universe = cats.iter().flatten().copied().max().map_or(0, |m| m as usize + 1);
    let mut covered = vec![false; universe];
    let mut placed = vec![false; n];
    let mut seq = Vec::with_capacity(n);
    let mut reach = 1.0;
    while seq.len() < n {
        let mut best: Option<(usize, f64)> = None;
        for v in (0..n).filter(|&v| !placed[v]) {
            let fresh = cats[v].iter().filter(|&&c| !covered[c as usize]).count();
            let gain = reach * inst.p(v) * fresh as f64;
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((v, gain));
            }
        }
        let (v, _) = best.expect("unplaced item exists");
        placed[v] = true;
        for &c in &cats[v] {
            covered[c as usize] = true;
        }
        reach *= inst.p(v);
        seq.push(v);
    }
    Ok(Ordering::from_vec_unchecked(seq))
}

/// Greedy matching: vertex-disjoint edges in non-increasing weight order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Each edge is stored as `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
}

/// Scans all pairs by decreasing distance (ties lexicographic) and keeps every
/// pair disjoint from those already kept. The result has `⌊n/2⌋` edges.
pub fn greedy_matching(inst: &Instance) -> Matching {
    let n = inst.n();
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs.sort_by(|&(a, b), &(c, d)| {
        inst.d(c, d)
            .total_cmp(&inst.d(a, b))
            .then((a, b).cmp(&(c, d)))
    });
    let mut matched = vec![false; n];
    let mut edges = Vec::with_capacity(n / 2);
    for (u, v) in pairs {
        if edges.len() == n / 2 {
            break;
        }
        if !matched[u] && !matched[v] {
            matched[u] = true;
            matched[v] = true;
            edges.push((u, v));
        }
    }
    Matching { edges }
}

/// Greedy-matching ranking.
///
/// Edge `t` of the matching occupies positions `2t` and `2t + 1`; with odd `n`
/// the unmatched item goes last. Edges are oriented back to front so that the
/// endpoint farther from the following item is the one adjacent to it. With
/// even `n` the last edge is placed as `(v, u)`.
///
/// The structural guarantees rely on the triangle inequality; non-metric input
/// is ranked all the same, with a logged warning.
pub fn greedy_matching_rank(inst: &Instance) -> Result<Ordering> {
    let (ord, report) = greedy_matching_rank_with_report(inst)?;
    if !report.is_metric {
        log::warn!(
            "distances violate the triangle inequality by up to {:.3e} at {:?}; \
             greedy-matching properties are not guaranteed",
            report.worst_violation,
            report.violating_triple
        );
    }
    Ok(ord)
}

/// [`greedy_matching_rank`] together with the metric check of the input.
pub fn greedy_matching_rank_with_report(inst: &Instance) -> Result<(Ordering, MetricReport)> {
    let ord = greedy_matching_order(inst)?;
    Ok((ord, check_metric(inst, TOLERANCE)))
}

/// [`greedy_matching_rank`] without the cubic-time metric check, for callers
/// that have already checked the distances.
pub fn greedy_matching_order(inst: &Instance) -> Result<Ordering> {
    let n = inst.n();
    if n < 2 {
        return Err(Error::TooFewItems { n, min: 2 });
    }
    let matching = greedy_matching(inst);
    let kappa = matching.edges.len();
    let mut pi = vec![usize::MAX; n];
    if n == 2 * kappa + 1 {
        let mut matched = vec![false; n];
        for &(u, v) in &matching.edges {
            matched[u] = true;
            matched[v] = true;
        }
        pi[2 * kappa] = matched.iter().position(|&m| !m).expect("one item unmatched");
    }
    for t in (0..kappa).rev() {
        let (u, v) = matching.edges[t];
        let (first, second) = if t + 1 == kappa && n == 2 * kappa {
            (v, u)
        } else {
            let x = pi[2 * t + 2];
            if inst.d(v, x) >= inst.d(u, x) {
                (u, v)
            } else {
                (v, u)
            }
        };
        pi[2 * t] = first;
        pi[2 * t + 1] = second;
    }
    Ok(Ordering::from_vec_unchecked(pi))
}

/// Which greedy-matching structural properties an ordering satisfies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingProperties {
    /// Matched edge weights are non-increasing along the ordering.
    pub edges_non_increasing: bool,
    /// Every connector edge weighs at least half the matched edge before it.
    pub connectors_at_least_half: bool,
    /// First 1-based `i` where a property fails, if any.
    pub first_violation: Option<usize>,
}

/// Checks both properties exactly (no tolerance).
pub fn check_matching_properties(inst: &Instance, ord: &[usize]) -> MatchingProperties {
    let n = ord.len();
    let half = n / 2;
    let d = |a: usize, b: usize| inst.d(ord[a], ord[b]);
    let mut p1 = true;
    let mut p2 = true;
    let mut first = None;
    for i in 1..=half {
        // 1-based positions 2i-1, 2i are 0-based 2i-2, 2i-1.
        let matched = d(2 * i - 2, 2 * i - 1);
        if i < half && matched < d(2 * i, 2 * i + 1) {
            p1 = false;
            first.get_or_insert(i);
        }
        if 2 * i < n && d(2 * i - 1, 2 * i) < 0.5 * matched {
            p2 = false;
            first.get_or_insert(i);
        }
    }
    MatchingProperties {
        edges_non_increasing: p1,
        connectors_at_least_half: p2,
        first_violation: first,
    }
}
