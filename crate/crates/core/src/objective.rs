//! Sequential diversity objectives, their surrogates, and engagement metrics.
//!
//! Every sequence function here accepts any slice of distinct item indices: a
//! full [`Ordering`](crate::Ordering) (via deref) or a partial sequence. The
//! acceptance law is the one of a user who walks the sequence, accepting item
//! `i` and continuing with probability `p_i`, and quitting otherwise.
//!
//! Pairwise sum diversity counts each unordered pair once.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::instance::{Instance, PrefixProducts};

/// Sum of `d(i, j)` over unordered pairs of `items`.
pub fn div_sum(inst: &Instance, items: &[usize]) -> f64 {
    let mut total = 0.0;
    for (a, &i) in items.iter().enumerate() {
        for &j in &items[a + 1..] {
            total += inst.d(i, j);
        }
    }
    total
}

/// Number of distinct categories covered by `items`.
pub fn div_cov(inst: &Instance, items: &[usize]) -> Result<f64> {
    let cats = inst.require_categories()?;
    let union: HashSet<u32> = items.iter().flat_map(|&i| cats[i].iter().copied()).collect();
    Ok(union.len() as f64)
}

/// `law[k] = Pr(A = seq[..k])` for `k = 0..=len`.
pub fn acceptance_law(inst: &Instance, seq: &[usize]) -> Vec<f64> {
    let m = seq.len();
    let mut law = Vec::with_capacity(m + 1);
    let mut reach = 1.0;
    for &i in seq {
        let p = inst.p(i);
        law.push(reach * (1.0 - p));
        reach *= p;
    }
    law.push(reach);
    debug_assert_eq!(law.len(), m + 1);
    law
}

/// Sequential sum diversity by direct expectation over accepted prefixes.
///
/// `O(n³)`; kept as the reference for [`osd`].
pub fn osd_definitional(inst: &Instance, seq: &[usize]) -> f64 {
    acceptance_law(inst, seq)
        .iter()
        .enumerate()
        .map(|(k, &pr)| pr * div_sum(inst, &seq[..k]))
        .sum()
}

/// Sequential sum diversity in closed form,
/// `Σ_{i≥1} p(O_{i}) · Σ_{t<i} d(seq[i], seq[t])` with 0-based positions.
pub fn osd(inst: &Instance, seq: &[usize]) -> f64 {
    let mut reach = match seq.first() {
        Some(&first) => inst.p(first),
        None => return 0.0,
    };
    let mut total = 0.0;
    for (i, &item) in seq.iter().enumerate().skip(1) {
        reach *= inst.p(item);
        if reach == 0.0 {
            break;
        }
        let row = inst.dist().row(item);
        let to_prefix: f64 = seq[..i].iter().map(|&t| row[t]).sum();
        total += reach * to_prefix;
    }
    total
}

/// Sequential coverage diversity: expected number of categories the accepted prefix covers.
pub fn ocd(inst: &Instance, seq: &[usize]) -> Result<f64> {
    let cats = inst.require_categories()?;
    let law = acceptance_law(inst, seq);
    let mut covered: HashSet<u32> = HashSet::new();
    let mut total = 0.0;
    for (k, &pr) in law.iter().enumerate() {
        if k > 0 {
            covered.extend(cats[seq[k - 1]].iter().copied());
        }
        total += pr * covered.len() as f64;
    }
    Ok(total)
}

/// Edge coefficients of the ordered Hamiltonian path,
/// `w[i] = Σ_{j>i} cum[j]` for `i = 0..len-1`.
pub fn edge_weights(inst: &Instance, seq: &[usize]) -> Vec<f64> {
    let cum = PrefixProducts::of(inst, seq).cum;
    let m = cum.len();
    if m < 2 {
        return Vec::new();
    }
    let mut w = vec![0.0; m - 1];
    let mut tail = 0.0;
    for i in (0..m - 1).rev() {
        tail += cum[i + 1];
        w[i] = tail;
    }
    w
}

/// Ordered Hamiltonian path value `Σ_i w[i] · d(seq[i], seq[i+1])`.
pub fn ohp(inst: &Instance, seq: &[usize]) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::TooFewItems {
            n: seq.len(),
            min: 2,
        });
    }
    let w = edge_weights(inst, seq);
    Ok(w
        .iter()
        .zip(seq.windows(2))
        .map(|(w, e)| w * inst.d(e[0], e[1]))
        .sum())
}

/// Truncated uniform-probability surrogate of a prefix:
/// edge `e` (between positions `e` and `e+1`) is weighted `p^{e+2} / (1-p)`.
pub fn ell_hat(inst: &Instance, prefix: &[usize], p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DegenerateProbability(p));
    }
    if prefix.len() < 2 {
        return Err(Error::TooFewItems {
            n: prefix.len(),
            min: 2,
        });
    }
    let mut coef = p * p / (1.0 - p);
    let mut total = 0.0;
    for e in prefix.windows(2) {
        total += coef * inst.d(e[0], e[1]);
        coef *= p;
    }
    Ok(total)
}

/// Truncated non-uniform surrogate of a prefix: the OHP value with the tail
/// sums of prefix products cut off at the end of the prefix.
///
/// Evaluated as `Σ_{j≥1} cum[j] · (path length up to position j)`.
/// Returns 0 for prefixes shorter than two items.
pub fn ell_tilde(inst: &Instance, prefix: &[usize]) -> f64 {
    let mut reach = match prefix.first() {
        Some(&first) => inst.p(first),
        None => return 0.0,
    };
    let mut path = 0.0;
    let mut total = 0.0;
    for e in prefix.windows(2) {
        path += inst.d(e[0], e[1]);
        reach *= inst.p(e[1]);
        total += reach * path;
    }
    total
}

/// Sum of `weight(t) · (quit mass after position t)` under the acceptance law,
/// with the convention that the user accepts everything after the last item.
fn expected_prefix_gain(probs: &[f64], mut weight: impl FnMut(usize, f64) -> f64) -> f64 {
    let mut reach = 1.0;
    let mut gain = 0.0;
    let mut total = 0.0;
    for (j, &p) in probs.iter().enumerate() {
        gain += weight(j, p);
        reach *= p;
        let next = probs.get(j + 1).copied().unwrap_or(0.0);
        total += gain * (1.0 - next) * reach;
    }
    total
}

/// Expected DCG (probabilities given in ranked order).
pub fn exp_dcg(probs: &[f64]) -> f64 {
    expected_prefix_gain(probs, |t, p| p / ((t + 2) as f64).log2())
}

/// Expected serendipity; `novel[t]` marks items adding a category beyond the user's history.
pub fn exp_serendipity(probs: &[f64], novel: &[bool]) -> Result<f64> {
    if probs.len() != novel.len() {
        return Err(Error::LengthMismatch(probs.len(), novel.len()));
    }
    Ok(expected_prefix_gain(probs, |t, p| if novel[t] { p } else { 0.0 }))
}

/// Expected number of accepted items, `Σ_k Π_{t≤k} p_t`.
pub fn exp_num(probs: &[f64]) -> f64 {
    let mut reach = 1.0;
    probs
        .iter()
        .map(|&p| {
            reach *= p;
            reach
        })
        .sum()
}

/// Probabilities of `seq` in ranked order.
pub fn probs_in_order(inst: &Instance, seq: &[usize]) -> Vec<f64> {
    seq.iter().map(|&i| inst.p(i)).collect()
}
