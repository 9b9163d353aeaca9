//! Ground truth for small instances: exhaustive permutation search and a
//! session simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Ordering};
use crate::objective::{ocd, ohp, osd, osd_definitional};

/// Largest instance [`brute_force`] accepts.
pub const MAX_BRUTE_FORCE_ITEMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Osd,
    /// OSD through the prefix-law expansion; slow, for cross-checking.
    OsdDefinitional,
    Ocd,
    Ohp,
}

impl Objective {
    pub fn evaluate(self, inst: &Instance, seq: &[usize]) -> Result<f64> {
        match self {
            Objective::Osd => Ok(osd(inst, seq)),
            Objective::OsdDefinitional => Ok(osd_definitional(inst, seq)),
            Objective::Ocd => ocd(inst, seq),
            Objective::Ohp => ohp(inst, seq),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_ordering: Ordering,
    pub best_score: f64,
    /// Number of permutations scored.
    pub evaluated: u64,
}

/// Rearranges `perm` into its lexicographic successor; false once it was the last.
pub fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
        return false;
    };
    let j = (i + 1..n)
        .rev()
        .find(|&j| perm[j] > perm[i])
        .expect("successor exists");
    perm.swap(i, j);
    perm[i + 1..].reverse();
    true
}

/// Exact optimum over all `n!` orderings, visited in lexicographic order.
/// The first ordering reaching the best score wins.
pub fn brute_force(inst: &Instance, objective: Objective) -> Result<OracleResult> {
    let n = inst.n();
    if n > MAX_BRUTE_FORCE_ITEMS {
        return Err(Error::InstanceTooLarge(n));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (perm.clone(), objective.evaluate(inst, &perm)?);
    let mut evaluated = 1u64;
    while next_permutation(&mut perm) {
        let score = objective.evaluate(inst, &perm)?;
        evaluated += 1;
        if score > best.1 {
            best = (perm.clone(), score);
        }
    }
    Ok(OracleResult {
        best_ordering: Ordering::from_vec_unchecked(best.0),
        best_score: best.1,
        evaluated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Standard error of the mean, from the unbiased sample variance.
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Simulates `samples` sessions on `ord` and averages the pairwise diversity
/// of each accepted prefix.
///
/// Each examined item costs one uniform draw; the item is accepted when the
/// draw falls below its probability.
pub fn monte_carlo_osd(inst: &Instance, ord: &[usize], samples: u64, seed: u64) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::Config("Monte Carlo needs at least one sample".into()));
    }
    // prefix_div[m] = pairwise diversity of the first m items.
    let mut prefix_div = Vec::with_capacity(ord.len() + 1);
    prefix_div.push(0.0);
    for (k, &v) in ord.iter().enumerate() {
        let to_prefix: f64 = ord[..k].iter().map(|&u| inst.d(u, v)).sum();
        prefix_div.push(prefix_div[k] + to_prefix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for s in 1..=samples {
        let accepted = ord
            .iter()
            .take_while(|&&i| rng.gen::<f64>() < inst.p(i))
            .count();
        let x = prefix_div[accepted];
        let delta = x - mean;
        mean += delta / s as f64;
        m2 += delta * (x - mean);
    }
    let stderr = if samples > 1 {
        (m2 / (samples - 1) as f64 / samples as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        stderr,
        samples,
        seed,
    })
}
