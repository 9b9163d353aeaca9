mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{category_sets, metric_instance, shuffled};
use seqdiv::algorithms::{
    best_k_items, best_k_items_heuristic, best_kappa_prefix, check_matching_properties,
    greedy_matching_rank, BkeConfig, SurrogateMode,
};
use seqdiv::baselines::{dpp_rank, explore_rank, mmr_rank, msd_rank, random_rank, ExploreConfig};
use seqdiv::data::{interpolate_probs, jaccard_distances, Regime};
use seqdiv::objective::{acceptance_law, ell_tilde, ocd, ohp, osd, osd_definitional};
use seqdiv::{Instance, Ordering};

fn is_permutation(ord: &Ordering, n: usize) -> bool {
    let mut seen = vec![false; n];
    ord.len() == n && ord.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

fn exhaustive_prefix(inst: &Instance, kappa: usize) -> f64 {
    fn go(inst: &Instance, kappa: usize, prefix: &mut Vec<usize>, used: &mut [bool], best: &mut f64) {
        if prefix.len() == kappa {
            *best = best.max(ell_tilde(inst, prefix));
            return;
        }
        for i in 0..inst.n() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(inst, kappa, prefix, used, best);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    go(inst, kappa, &mut Vec::new(), &mut vec![false; inst.n()], &mut best);
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_equals_definition(seed in any::<u64>(), n in 1usize..=9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.0, 1.0);
        let ord = shuffled(&mut rng, n);
        prop_assert!((osd(&inst, &ord) - osd_definitional(&inst, &ord)).abs() <= 1e-9);
        let law = acceptance_law(&inst, &ord);
        prop_assert_eq!(law.len(), n + 1);
        prop_assert!(law.iter().all(|&q| q >= 0.0));
        prop_assert!((law.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn twice_osd_bounds_ohp(seed in any::<u64>(), n in 2usize..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        let ord = shuffled(&mut rng, n);
        prop_assert!(2.0 * osd(&inst, &ord) >= ohp(&inst, &ord).unwrap() - 1e-9);
    }

    #[test]
    fn every_ranker_returns_a_permutation(seed in any::<u64>(), n in 2usize..=12, lambda in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        prop_assert!(is_permutation(&random_rank(&inst, seed), n));
        prop_assert!(is_permutation(&mmr_rank(&inst, lambda).unwrap(), n));
        prop_assert!(is_permutation(&msd_rank(&inst, lambda).unwrap(), n));
        prop_assert!(is_permutation(&greedy_matching_rank(&inst).unwrap(), n));
        let e = ExploreConfig { seed, ..ExploreConfig::default() };
        prop_assert!(is_permutation(&explore_rank(&inst, &e).unwrap(), n));
        if let Ok(ord) = dpp_rank(&inst, lambda) {
            prop_assert!(is_permutation(&ord, n));
        }
    }

    #[test]
    fn best_k_prefix_is_exhaustive_optimum(seed in any::<u64>(), n in 2usize..=7, kappa in 2usize..=4) {
        prop_assume!(kappa <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        let all: Vec<usize> = (0..n).collect();
        let (prefix, value) = best_kappa_prefix(&inst, &all, kappa, SurrogateMode::NonUniform).unwrap();
        prop_assert_eq!(prefix.len(), kappa);
        let best = exhaustive_prefix(&inst, kappa);
        prop_assert!((value - best).abs() <= 1e-9 * best.abs().max(1.0));
        prop_assert!((ell_tilde(&inst, &prefix) - value).abs() <= 1e-12);
    }

    #[test]
    fn vacuous_candidate_cap_matches_exact(seed in any::<u64>(), n in 3usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        let cfg = BkeConfig::new(3, SurrogateMode::NonUniform);
        let exact = best_k_items(&inst, &cfg).unwrap();
        let capped = best_k_items_heuristic(&inst, &cfg.with_candidate_cap(n)).unwrap();
        prop_assert_eq!(exact, capped);
    }

    #[test]
    fn matching_properties_on_metrics(seed in any::<u64>(), n in 2usize..=14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        let ord = greedy_matching_rank(&inst).unwrap();
        let props = check_matching_properties(&inst, &ord);
        prop_assert!(props.edges_non_increasing && props.connectors_at_least_half, "{:?}", props);
    }

    #[test]
    fn ocd_ordered_submodular_with_common_probability(seed in any::<u64>(), p in 0.01f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 7;
        let cats = category_sets(&mut rng, n, 5);
        let inst = Instance::build(jaccard_distances(&cats).unwrap(), vec![p; n], Some(cats), None).unwrap();
        let perm = shuffled(&mut rng, n);
        let split = (seed % (n as u64 - 1)) as usize;
        let (x, rest) = perm.split_at(split);
        let (s, s_bar, y) = (rest[0], rest[1], &rest[2..]);
        let cat = |parts: &[&[usize]]| parts.concat();
        let f = |v: Vec<usize>| ocd(&inst, &v).unwrap();
        let lhs = f(cat(&[x, &[s]])) - f(x.to_vec());
        let rhs = f(cat(&[x, &[s], y])) - f(cat(&[x, &[s_bar], y]));
        prop_assert!(lhs >= rhs - 1e-12, "lhs {} rhs {}", lhs, rhs);
    }

    #[test]
    fn interpolation_stays_in_regime(values in prop::collection::vec(1.0f64..=5.0, 1..40)) {
        for regime in Regime::ALL {
            let spec = regime.spec();
            let probs = interpolate_probs(&values, (1.0, 5.0), &spec).unwrap();
            prop_assert!(probs.iter().all(|q| (spec.lo..=spec.hi).contains(q)));
        }
    }

    #[test]
    fn osd_invariant_under_relabeling(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = metric_instance(&mut rng, n, 0.05, 0.95);
        let sigma = shuffled(&mut rng, n);
        let relabeled = Instance::build(
            seqdiv::DistanceMatrix::from_fn(n, |i, j| inst.d(sigma[i], sigma[j])),
            sigma.iter().map(|&i| inst.p(i)).collect(),
            None,
            None,
        )
        .unwrap();
        let ord = shuffled(&mut rng, n);
        let mapped: Vec<usize> = ord.iter().map(|&i| sigma[i]).collect();
        prop_assert!((osd(&relabeled, &ord) - osd(&inst, &mapped)).abs() <= 1e-12);
    }
}

#[test]
fn osd_is_not_ordered_submodular() {
    // X = (0), s = 1, s_bar = 2 with p = 0, Y = (3).
    let inst = Instance::new(
        vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0, 0.0],
        ],
        vec![0.5, 0.5, 0.0, 0.5],
    )
    .unwrap();
    let lhs = osd(&inst, &[0, 1]) - osd(&inst, &[0]);
    let rhs = osd(&inst, &[0, 1, 3]) - osd(&inst, &[0, 2, 3]);
    assert_eq!((lhs, rhs), (0.25, 0.5));
}
