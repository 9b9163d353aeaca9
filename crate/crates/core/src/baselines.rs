//! Comparison rankers: Random, MMR, MSD, DPP greedy MAP, DUM and EXPLORE,
//! plus a grid search for their trade-off parameter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Ordering};
use crate::objective::osd;

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda {lambda} outside [0, 1]")))
    }
}

/// Index of the largest score among unplaced items, lowest index on ties.
fn argmax_unplaced(scores: impl Iterator<Item = (usize, f64)>, placed: &[bool]) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores {
        if placed[i] {
            continue;
        }
        if best.map_or(true, |(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.expect("unplaced item exists").0
}

/// Uniformly random permutation, deterministic per seed.
pub fn random_rank(inst: &Instance, seed: u64) -> Ordering {
    let mut perm: Vec<usize> = (0..inst.n()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ordering::from_vec_unchecked(perm)
}

/// Maximal marginal relevance: `λ p_i − (1 − λ) max_{j ∈ R} (1 − d(i, j))`,
/// where the max over an empty selection is 0.
pub fn mmr_rank(inst: &Instance, lambda: f64) -> Result<Ordering> {
    check_lambda(lambda)?;
    let n = inst.n();
    let mut placed = vec![false; n];
    let mut max_sim = vec![f64::NEG_INFINITY; n];
    let mut seq = Vec::with_capacity(n);
    for step in 0..n {
        let scores = (0..n).map(|i| {
            let penalty = if step == 0 { 0.0 } else { max_sim[i] };
            (i, lambda * inst.p(i) - (1.0 - lambda) * penalty)
        });
        let v = argmax_unplaced(scores, &placed);
        placed[v] = true;
        seq.push(v);
        for (i, d) in inst.dist().row(v).iter().enumerate() {
            max_sim[i] = max_sim[i].max(1.0 - d);
        }
    }
    Ok(Ordering::from_vec_unchecked(seq))
}

/// Max-sum diversification: `p_i + λ Σ_{j ∈ R} d(i, j)`.
pub fn msd_rank(inst: &Instance, lambda: f64) -> Result<Ordering> {
    check_lambda(lambda)?;
    let n = inst.n();
    let mut placed = vec![false; n];
    let mut to_sel = vec![0.0; n];
    let mut seq = Vec::with_capacity(n);
    for _ in 0..n {
        let v = argmax_unplaced((0..n).map(|i| (i, inst.p(i) + lambda * to_sel[i])), &placed);
        placed[v] = true;
        seq.push(v);
        for (i, d) in inst.dist().row(v).iter().enumerate() {
            to_sel[i] += d;
        }
    }
    Ok(Ordering::from_vec_unchecked(seq))
}

/// Pivots at or below this are treated as a singular kernel.
const PIVOT_FLOOR: f64 = 1e-12;
/// Diagonal jitter applied when the plain kernel is singular.
pub const DPP_JITTER: f64 = 1e-6;

/// Incremental log-determinant of `S_R` for the kernel `S = 1 − d + jitter·I`,
/// maintained through a growing Cholesky factor.
///
/// For every item outside `R`, `pivot(i) = det(S_{R ∪ i}) / det(S_R)`.
#[derive(Debug, Clone)]
pub struct IncrementalLogDet<'a> {
    inst: &'a Instance,
    jitter: f64,
    /// Row `i` holds the Cholesky coefficients of item `i` against `R`.
    coeffs: Vec<Vec<f64>>,
    pivots: Vec<f64>,
    in_r: Vec<bool>,
    selected: Vec<usize>,
    logdet: f64,
}

impl<'a> IncrementalLogDet<'a> {
    pub fn new(inst: &'a Instance, jitter: f64) -> Self {
        let n = inst.n();
        Self {
            inst,
            jitter,
            coeffs: vec![Vec::new(); n],
            pivots: vec![1.0 + jitter; n],
            in_r: vec![false; n],
            selected: Vec::new(),
            logdet: 0.0,
        }
    }

    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        let s = 1.0 - self.inst.d(i, j);
        if i == j {
            s + self.jitter
        } else {
            s
        }
    }

    /// `det(S_{R ∪ i}) / det(S_R)` for `i ∉ R`.
    pub fn pivot(&self, i: usize) -> f64 {
        self.pivots[i]
    }

    /// `log det(S_{R ∪ i}) − log det(S_R)`, or `None` when the pivot is not positive.
    pub fn gain(&self, i: usize) -> Option<f64> {
        (self.pivots[i] > 0.0).then(|| self.pivots[i].ln())
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    /// Adds `j` to `R`. Fails when its pivot is not positive.
    pub fn add(&mut self, j: usize) -> Result<()> {
        let pivot = self.pivots[j];
        if pivot <= 0.0 || self.in_r[j] {
            return Err(Error::KernelBreakdown(j));
        }
        let root = pivot.sqrt();
        let cj = std::mem::take(&mut self.coeffs[j]);
        for i in 0..self.inst.n() {
            if i == j || self.in_r[i] {
                continue;
            }
            let dot: f64 = cj.iter().zip(&self.coeffs[i]).map(|(a, b)| a * b).sum();
            let e = (self.kernel(j, i) - dot) / root;
            self.coeffs[i].push(e);
            self.pivots[i] -= e * e;
        }
        self.coeffs[j] = cj;
        self.in_r[j] = true;
        self.selected.push(j);
        self.logdet += pivot.ln();
        Ok(())
    }
}

/// DPP greedy MAP: `λ p_i + (1 − λ)(log det S_{R ∪ i} − log det S_R)` with
/// `S = 1 − d`.
///
/// Items whose pivot has collapsed are not eligible. If no eligible item is
/// left the whole run restarts on `S + 1e-6·I`; a second collapse is a
/// [`Error::KernelBreakdown`]. With `λ = 1` the kernel is never touched.
pub fn dpp_rank(inst: &Instance, lambda: f64) -> Result<Ordering> {
    check_lambda(lambda)?;
    if lambda == 1.0 {
        let mut order: Vec<usize> = (0..inst.n()).collect();
        order.sort_by(|&a, &b| inst.p(b).total_cmp(&inst.p(a)).then(a.cmp(&b)));
        return Ok(Ordering::from_vec_unchecked(order));
    }
    match dpp_greedy(inst, lambda, 0.0, PIVOT_FLOOR) {
        Ok(ord) => Ok(ord),
        Err(Error::KernelBreakdown(_)) => {
            log::debug!("DPP kernel singular; retrying with jitter {DPP_JITTER}");
            dpp_greedy(inst, lambda, DPP_JITTER, 0.0)
        }
        Err(e) => Err(e),
    }
}

fn dpp_greedy(inst: &Instance, lambda: f64, jitter: f64, floor: f64) -> Result<Ordering> {
    let n = inst.n();
    let mut det = IncrementalLogDet::new(inst, jitter);
    let mut placed = vec![false; n];
    for step in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !placed[i]) {
            let pivot = det.pivot(i);
            if pivot <= floor {
                continue;
            }
            let score = lambda * inst.p(i) + (1.0 - lambda) * pivot.ln();
            if best.map_or(true, |(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        let (v, _) = best.ok_or(Error::KernelBreakdown(step))?;
        det.add(v)?;
        placed[v] = true;
    }
    Ok(Ordering::from_vec_unchecked(det.selected.clone()))
}

/// Diversity-weighted utility: items in decreasing `p`, each placed as early
/// as possible if it covers a new category, the rest deferred in the same
/// order.
pub fn dum_rank(inst: &Instance) -> Result<Ordering> {
    let cats = inst.require_categories()?;
    let n = inst.n();
    let mut by_p: Vec<usize> = (0..n).collect();
    by_p.sort_by(|&a, &b| inst.p(b).total_cmp(&inst.p(a)).then(a.cmp(&b)));
    let mut covered = std::collections::HashSet::new();
    let mut seq = Vec::with_capacity(n);
    let mut deferred = Vec::new();
    for i in by_p {
        let mut fresh = false;
        for &c in &cats[i] {
            fresh |= covered.insert(c);
        }
        if fresh {
            seq.push(i);
        } else {
            deferred.push(i);
        }
    }
    seq.extend(deferred);
    Ok(Ordering::from_vec_unchecked(seq))
}

/// The objective [`dum_rank`] maximizes: `Σ_i (|C(O_i)| − |C(O_{i−1})|) · p_{π(i)}`.
pub fn dum_objective(inst: &Instance, seq: &[usize]) -> Result<f64> {
    let cats = inst.require_categories()?;
    let mut covered = std::collections::HashSet::new();
    let mut total = 0.0;
    for &i in seq {
        let fresh = cats[i].iter().filter(|&&c| covered.insert(c)).count();
        total += fresh as f64 * inst.p(i);
    }
    Ok(total)
}

/// How EXPLORE's session is turned into a full ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExploreAdaptation {
    /// Accepted items in acceptance order, then the rest at random.
    AcceptedThenRandom,
    /// Every presented list in turn without repeats, then the rest at random.
    ConcatenateLists,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreConfig {
    pub alpha: f64,
    /// Items per presented list.
    pub k: usize,
    /// Maximum number of lists presented in one session.
    pub steps: usize,
    pub adaptation: ExploreAdaptation,
    pub seed: u64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k: 10,
            steps: 10,
            adaptation: ExploreAdaptation::AcceptedThenRandom,
            seed: 0,
        }
    }
}

/// EXPLORE score `[p^{−α} + d^{−α} − 1]^{−1/α}` with `d` the distance to the
/// nearest accepted item; `p` alone when nothing is accepted yet.
pub fn explore_score(p: f64, dist_to_accepted: Option<f64>, alpha: f64) -> f64 {
    let Some(d) = dist_to_accepted else {
        return p;
    };
    if p <= 0.0 || d <= 0.0 {
        return 0.0;
    }
    let inner = p.powf(-alpha) + d.powf(-alpha) - 1.0;
    inner.powf(-1.0 / alpha)
}

/// EXPLORE adapted to produce a single ranking.
///
/// A simulated session repeatedly presents the `k` best-scoring unaccepted
/// items. The user picks one of them with probability proportional to `p`,
/// then continues with that item's probability. The session ends on quit,
/// after `steps` lists, or when nothing is left to show.
pub fn explore_rank(inst: &Instance, cfg: &ExploreConfig) -> Result<Ordering> {
    if !(cfg.alpha > 0.0) {
        return Err(Error::Config(format!("explore alpha {} must be positive", cfg.alpha)));
    }
    if cfg.k == 0 {
        return Err(Error::Config("explore list size must be positive".into()));
    }
    let n = inst.n();
    let mut session = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut accepted_flag = vec![false; n];
    let mut accepted = Vec::new();
    let mut presented_flag = vec![false; n];
    let mut presented = Vec::new();
    let mut nearest = vec![f64::INFINITY; n];

    for _ in 0..cfg.steps {
        let mut pool: Vec<(usize, f64)> = (0..n)
            .filter(|&i| !accepted_flag[i])
            .map(|i| {
                let d = (!accepted.is_empty()).then_some(nearest[i]);
                (i, explore_score(inst.p(i), d, cfg.alpha))
            })
            .collect();
        if pool.is_empty() {
            break;
        }
        pool.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pool.truncate(cfg.k);
        for &(i, _) in &pool {
            if !std::mem::replace(&mut presented_flag[i], true) {
                presented.push(i);
            }
        }
        let mass: f64 = pool.iter().map(|&(i, _)| inst.p(i)).sum();
        if mass <= 0.0 {
            break;
        }
        let mut u = session.gen::<f64>() * mass;
        let mut pick = pool[pool.len() - 1].0;
        for &(i, _) in &pool {
            u -= inst.p(i);
            if u < 0.0 {
                pick = i;
                break;
            }
        }
        accepted_flag[pick] = true;
        accepted.push(pick);
        for (i, d) in inst.dist().row(pick).iter().enumerate() {
            nearest[i] = nearest[i].min(*d);
        }
        if session.gen::<f64>() >= inst.p(pick) {
            break;
        }
    }

    let mut seq = match cfg.adaptation {
        ExploreAdaptation::AcceptedThenRandom => accepted,
        ExploreAdaptation::ConcatenateLists => presented,
    };
    let mut in_seq = vec![false; n];
    for &i in &seq {
        in_seq[i] = true;
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| !in_seq[i]).collect();
    let mut tail_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    tail_rng.set_stream(1);
    rest.shuffle(&mut tail_rng);
    seq.extend(rest);
    Ok(Ordering::from_vec_unchecked(seq))
}

/// Result of a λ grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTuning {
    pub best_lambda: f64,
    pub best_score: f64,
    /// `(λ, mean OSD)` for every grid point, in grid order.
    pub scores: Vec<(f64, f64)>,
}

/// Mean OSD over `instances` for each λ in `grid`; the best λ wins, smaller λ on ties.
pub fn tune_lambda<F>(instances: &[Instance], rank: F, grid: &[f64]) -> Result<LambdaTuning>
where
    F: Fn(&Instance, f64) -> Result<Ordering> + Sync,
{
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    if instances.is_empty() {
        return Err(Error::Config("no instances to tune on".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let values: Vec<f64> = instances
            .par_iter()
            .map(|inst| rank(inst, lambda).map(|ord| osd(inst, &ord)))
            .collect::<Result<_>>()?;
        scores.push((lambda, values.iter().sum::<f64>() / values.len() as f64));
    }
    let (best_lambda, best_score) = scores.iter().copied().fold(
        (f64::NAN, f64::NEG_INFINITY),
        |(bl, bs), (l, s)| {
            if s > bs || (s == bs && l < bl) {
                (l, s)
            } else {
                (bl, bs)
            }
        },
    );
    Ok(LambdaTuning {
        best_lambda,
        best_score,
        scores,
    })
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_lambda_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("invalid lambda grid {spec:?}"));
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let grid: Vec<f64> = if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(parse).collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=count)
            .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        spec.split(',').map(parse).collect::<Result<_>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    for &l in &grid {
        check_lambda(l)?;
    }
    Ok(grid)
}

/// `{0.0, 0.1, …, 1.0}`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}
