//! Benchmark runner: per-user instances from a dataset, every selected ranker,
//! every selected metric, and result tables.
//!
//! Output files in the chosen directory:
//!
//! * `per_user.csv`: `dataset,regime,user,algorithm,metric,value`
//! * `aggregate.csv` or `aggregate.json`: `dataset,regime,algorithm,metric,mean,std,n_users`
//! * `run.json`: tuned parameters, metric-check results and notes
//!
//! Rows are sorted by regime, algorithm and metric in configuration order,
//! then by user id, so identical configurations produce identical files.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    best_k_items, best_k_items_heuristic, coverage_greedy_rank, greedy_matching_order, greedy_rank,
    BkeConfig, SurrogateMode,
};
use crate::baselines::{
    default_lambda_grid, dpp_rank, dum_rank, explore_rank, mmr_rank, msd_rank, random_rank,
    tune_lambda, ExploreAdaptation, ExploreConfig,
};
use crate::data::{
    complete_ratings_mf, cosine_distances, interpolate_probs, jaccard_distances, load_categories,
    load_features, load_ratings, MfConfig, RatingsTable, Regime,
};
use crate::error::{Error, Result};
use crate::instance::{check_metric_matrix, DistanceMatrix, Instance, Ordering, TOLERANCE};
use crate::objective::{exp_dcg, exp_num, exp_serendipity, ocd, osd, probs_in_order};
use crate::oracle::monte_carlo_osd;

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name() == s.trim())
                    .ok_or_else(|| Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), s
                    )))
            }
        }
    };
}

named_enum!(
    /// Rankers available to the runner.
    Algorithm {
        Random => "random",
        Explore => "explore",
        Dum => "dum",
        Msd => "msd",
        Mmr => "mmr",
        Dpp => "dpp",
        B2i => "b2i",
        B3i => "b3i",
        B4i => "b4i",
        B3iH => "b3i-h",
        B4iH => "b4i-h",
        Bkm => "bkm",
        Greedy => "greedy",
        CoverageGreedy => "coverage-greedy",
    }
);

named_enum!(
    /// Evaluation metrics.
    Metric {
        Osd => "osd",
        Ocd => "ocd",
        ExpDcg => "expdcg",
        ExpSerendipity => "expserendipity",
        ExpNum => "expnum",
        OsdMc => "osd-mc",
    }
);

named_enum!(
    /// Recommendation data goes through MF completion; IR data uses its
    /// relevance labels directly, one query per instance.
    DatasetKind {
        Rec => "rec",
        Ir => "ir",
    }
);

named_enum!(
    /// Items ranked for each user: the whole catalogue or only those the user rated.
    Universe {
        All => "all",
        Rated => "rated",
    }
);

named_enum!(
    OutputFormat {
        Csv => "csv",
        Json => "json",
    }
);

impl Algorithm {
    fn tunes_lambda(self) -> bool {
        matches!(self, Algorithm::Mmr | Algorithm::Msd | Algorithm::Dpp)
    }

    fn needs_categories(self) -> bool {
        matches!(self, Algorithm::Dum | Algorithm::CoverageGreedy)
    }

    /// `(kappa, heuristic)` for the best-κ-items family.
    fn bke(self) -> Option<(usize, bool)> {
        match self {
            Algorithm::B2i => Some((2, false)),
            Algorithm::B3i => Some((3, false)),
            Algorithm::B4i => Some((4, false)),
            Algorithm::B3iH => Some((3, true)),
            Algorithm::B4iH => Some((4, true)),
            _ => None,
        }
    }
}

/// Parses a comma-separated list of named values.
pub fn parse_list<T: FromStr<Err = Error>>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|x| !x.trim().is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Dataset label written into every output row.
    pub name: String,
    pub kind: DatasetKind,
    pub ratings: PathBuf,
    pub categories: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub delimiter: Option<u8>,
    pub regimes: Vec<Regime>,
    pub algorithms: Vec<Algorithm>,
    pub metrics: Vec<Metric>,
    pub lambda_grid: Vec<f64>,
    /// Sessions per user for the `osd-mc` metric.
    pub mc_samples: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub universe: Universe,
    /// Users (lowest ids first) used for parameter tuning; 0 means all.
    pub tune_users: usize,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
    pub candidate_cap: usize,
    /// MF settings; `None` picks [`MfConfig::for_table`] seeded from `seed`.
    pub mf: Option<MfConfig>,
}

impl ExperimentConfig {
    /// Defaults for everything except the dataset and the output directory.
    pub fn new(ratings: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        let ratings = ratings.into();
        let name = ratings
            .parent()
            .and_then(|p| p.file_name())
            .map_or_else(|| "dataset".to_owned(), |s| s.to_string_lossy().into_owned());
        Self {
            name,
            kind: DatasetKind::Rec,
            ratings,
            categories: None,
            features: None,
            delimiter: None,
            regimes: vec![Regime::Medium],
            algorithms: vec![Algorithm::Random, Algorithm::B2i],
            metrics: vec![Metric::Osd],
            lambda_grid: default_lambda_grid(),
            mc_samples: 10_000,
            seed: 0,
            out: out.into(),
            format: OutputFormat::Json,
            universe: Universe::All,
            tune_users: 50,
            threads: None,
            candidate_cap: 100,
            mf: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.algorithms.is_empty() {
            return fail("at least one algorithm is required".into());
        }
        if self.metrics.is_empty() {
            return fail("at least one metric is required".into());
        }
        if self.regimes.is_empty() {
            return fail("at least one regime is required".into());
        }
        if self.lambda_grid.is_empty() {
            return fail("lambda grid is empty".into());
        }
        if self.lambda_grid.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return fail("lambda grid values must lie in [0, 1]".into());
        }
        if self.metrics.contains(&Metric::OsdMc) && self.mc_samples == 0 {
            return fail("osd-mc needs --mc-samples > 0".into());
        }
        if self.candidate_cap < 4 {
            return fail("candidate cap must be at least 4".into());
        }
        if self.categories.is_none() && self.features.is_none() {
            return fail("a categories or features file is required to build distances".into());
        }
        if self.categories.is_none() {
            if let Some(a) = self.algorithms.iter().find(|a| a.needs_categories()) {
                return fail(format!("{a} needs a categories file"));
            }
            if self.metrics.contains(&Metric::Ocd) {
                return fail("ocd needs a categories file".into());
            }
        }
        for path in std::iter::once(&self.ratings)
            .chain(self.categories.iter())
            .chain(self.features.iter())
        {
            if !path.is_file() {
                return fail(format!("{} does not exist", path.display()));
            }
        }
        Ok(())
    }
}

/// One per-user metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub dataset: String,
    pub regime: Regime,
    pub user: String,
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub value: f64,
}

/// Mean and population standard deviation across users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub regime: Regime,
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub n_users: usize,
}

/// Parameters chosen by tuning for one (regime, algorithm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub regime: Regime,
    pub algorithm: Algorithm,
    pub lambda: Option<f64>,
    pub explore: Option<ExploreConfig>,
    pub score: f64,
    /// `(λ, mean OSD)` over the grid, when λ was tuned.
    pub grid: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub dataset: String,
    pub n_users: usize,
    pub n_items: usize,
    pub tuning: Vec<TuningRecord>,
    /// Users whose distances violate the triangle inequality.
    pub non_metric_users: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rows: Vec<UserRow>,
    pub aggregates: Vec<AggregateRow>,
    pub info: RunInfo,
}

impl RankReport {
    /// Aggregate row for a (regime, algorithm, metric), if present.
    pub fn aggregate(&self, regime: Regime, algorithm: Algorithm, metric: Metric) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.regime == regime && a.algorithm == algorithm && a.metric == metric)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups rows in order and aggregates them.
pub fn aggregate_rows(rows: &[UserRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let key = |r: &UserRow| (r.dataset.clone(), r.regime, r.algorithm, r.metric);
    let flush = |values: &mut Vec<f64>, r: &UserRow, out: &mut Vec<AggregateRow>| {
        let (mean, std) = mean_std(values);
        out.push(AggregateRow {
            dataset: r.dataset.clone(),
            regime: r.regime,
            algorithm: r.algorithm,
            metric: r.metric,
            mean,
            std,
            n_users: values.len(),
        });
        values.clear();
    };
    for (idx, r) in rows.iter().enumerate() {
        values.push(r.value);
        if rows.get(idx + 1).map_or(true, |next| key(next) != key(r)) {
            flush(&mut values, r, &mut out);
        }
    }
    out
}

/// The items, relevances and history of one user.
struct UserData {
    name: String,
    items: Vec<usize>,
    relevance: Vec<f64>,
    history: HashSet<u32>,
}

struct Prepared {
    users: Vec<UserData>,
    range: (f64, f64),
    categories: Option<Vec<Vec<u32>>>,
    n_categories: usize,
    features: Option<Vec<Vec<f64>>>,
    shared_dist: Option<DistanceMatrix>,
    n_items: usize,
}

impl Prepared {
    fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let table = load_ratings(&cfg.ratings, cfg.delimiter)?;
        if table.is_empty() {
            return Err(Error::EmptyTable);
        }
        let item_names = table.items.names();
        let categories = match &cfg.categories {
            Some(p) => {
                let cats = load_categories(p, cfg.delimiter)?;
                Some((cats.align(item_names), cats.categories.len()))
            }
            None => None,
        };
        let features = match &cfg.features {
            Some(p) => Some(load_features(p, cfg.delimiter)?.align(item_names)),
            None => None,
        };
        let range = table.value_range().expect("non-empty table");
        let by_user = table.by_user();
        let relevance_rows = match (cfg.kind, cfg.universe) {
            (DatasetKind::Rec, Universe::All) => {
                let mf = cfg.mf.clone().unwrap_or_else(|| MfConfig {
                    seed: cfg.seed,
                    ..MfConfig::for_table(&table)
                });
                Some(complete_ratings_mf(&table, &mf)?)
            }
            _ => None,
        };
        let (categories, n_categories) = match categories {
            Some((c, k)) => (Some(c), k),
            None => (None, 0),
        };
        let users = by_user
            .iter()
            .enumerate()
            .map(|(u, rated)| {
                let history = match &categories {
                    Some(c) => rated.iter().flat_map(|r| c[r.item].iter().copied()).collect(),
                    None => HashSet::new(),
                };
                let (items, relevance) = match &relevance_rows {
                    Some(dense) => ((0..table.n_items()).collect(), dense.row(u).to_vec()),
                    None => (
                        rated.iter().map(|r| r.item).collect(),
                        rated.iter().map(|r| r.value).collect(),
                    ),
                };
                UserData {
                    name: table.users.name(u).to_owned(),
                    items,
                    relevance,
                    history,
                }
            })
            .collect();
        let mut prepared = Self {
            users,
            range,
            categories,
            n_categories,
            features,
            shared_dist: None,
            n_items: table.n_items(),
        };
        if relevance_rows.is_some() {
            let all: Vec<usize> = (0..table.n_items()).collect();
            prepared.shared_dist = Some(prepared.distances(&all)?);
        }
        check_table_shape(&table)?;
        Ok(prepared)
    }

    /// Jaccard distances when categories are available, cosine otherwise.
    fn distances(&self, items: &[usize]) -> Result<DistanceMatrix> {
        if let Some(c) = &self.categories {
            let sets: Vec<Vec<u32>> = items.iter().map(|&i| c[i].clone()).collect();
            return jaccard_distances(&sets).map_err(|e| match e {
                Error::EmptyCategorySet(k) => Error::EmptyCategorySet(items[k]),
                e => e,
            });
        }
        let f = self.features.as_ref().expect("validated: features present");
        let rows: Vec<Vec<f64>> = items.iter().map(|&i| f[i].clone()).collect();
        cosine_distances(&rows).map_err(|e| match e {
            Error::ZeroNormVector(k) => Error::ZeroNormVector(items[k]),
            e => e,
        })
    }

    fn instance(&self, user: &UserData, regime: Regime) -> Result<Instance> {
        let probs = interpolate_probs(&user.relevance, self.range, &regime.spec())?;
        let dist = match &self.shared_dist {
            Some(d) => d.clone(),
            None => self.distances(&user.items)?,
        };
        let cats = self
            .categories
            .as_ref()
            .map(|c| user.items.iter().map(|&i| c[i].clone()).collect());
        Instance::build(dist, probs, cats, None)
    }
}

fn check_table_shape(table: &RatingsTable) -> Result<()> {
    if table.n_users() == 0 || table.n_items() == 0 {
        return Err(Error::EmptyTable);
    }
    Ok(())
}

/// Deterministic per-(user, purpose) seed.
fn derive_seed(master: u64, user: usize, salt: u64) -> u64 {
    let mut z = master
        ^ (user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameters fixed before ranking.
#[derive(Debug, Clone, Default)]
struct Tuned {
    lambda: Option<f64>,
    explore: Option<ExploreConfig>,
}

fn rank(
    alg: Algorithm,
    inst: &Instance,
    tuned: &Tuned,
    user: usize,
    cfg: &ExperimentConfig,
) -> Result<Ordering> {
    let lambda = || tuned.lambda.expect("lambda tuned before ranking");
    match alg {
        Algorithm::Random => Ok(random_rank(inst, derive_seed(cfg.seed, user, 1))),
        Algorithm::Explore => {
            let mut e = tuned.explore.clone().expect("explore tuned before ranking");
            e.seed = derive_seed(cfg.seed, user, 2);
            explore_rank(inst, &e)
        }
        Algorithm::Dum => dum_rank(inst),
        Algorithm::Msd => msd_rank(inst, lambda()),
        Algorithm::Mmr => mmr_rank(inst, lambda()),
        Algorithm::Dpp => dpp_rank(inst, lambda()),
        Algorithm::Bkm if inst.n() < 2 => Ok(Ordering::identity(inst.n())),
        Algorithm::Bkm => greedy_matching_order(inst),
        Algorithm::Greedy => greedy_rank(inst),
        Algorithm::CoverageGreedy => coverage_greedy_rank(inst),
        Algorithm::B2i | Algorithm::B3i | Algorithm::B4i | Algorithm::B3iH | Algorithm::B4iH => {
            let (kappa, heuristic) = alg.bke().expect("best-k algorithm");
            if inst.n() < kappa {
                // Too few items for the prefix search: fall back to the greedy ranking.
                return if inst.n() >= 2 {
                    greedy_rank(inst)
                } else {
                    Ok(Ordering::identity(inst.n()))
                };
            }
            let mode = match inst.uniform_prob() {
                Some(p) if p > 0.0 && p < 1.0 => SurrogateMode::Uniform,
                _ => SurrogateMode::NonUniform,
            };
            let bke = BkeConfig::new(kappa, mode);
            if heuristic {
                best_k_items_heuristic(inst, &bke.with_candidate_cap(cfg.candidate_cap.max(kappa)))
            } else {
                best_k_items(inst, &bke)
            }
        }
    }
}

fn explore_grid() -> Vec<ExploreConfig> {
    let mut grid = Vec::new();
    for adaptation in [ExploreAdaptation::AcceptedThenRandom, ExploreAdaptation::ConcatenateLists] {
        for k in [1, 5, 10, 20] {
            for steps in [5, 10, 20] {
                grid.push(ExploreConfig {
                    alpha: 0.5,
                    k,
                    steps,
                    adaptation,
                    seed: 0,
                });
            }
        }
    }
    grid
}

fn tune(
    alg: Algorithm,
    regime: Regime,
    tune_set: &[(usize, Instance)],
    cfg: &ExperimentConfig,
) -> Result<(Tuned, Option<TuningRecord>)> {
    if alg.tunes_lambda() {
        let instances: Vec<Instance> = tune_set.iter().map(|(_, i)| i.clone()).collect();
        let t = tune_lambda(
            &instances,
            |inst, l| match alg {
                Algorithm::Mmr => mmr_rank(inst, l),
                Algorithm::Msd => msd_rank(inst, l),
                _ => dpp_rank(inst, l),
            },
            &cfg.lambda_grid,
        )?;
        log::info!("{regime}/{alg}: lambda = {} (mean OSD {:.6})", t.best_lambda, t.best_score);
        let record = TuningRecord {
            regime,
            algorithm: alg,
            lambda: Some(t.best_lambda),
            explore: None,
            score: t.best_score,
            grid: t.scores,
        };
        return Ok((
            Tuned {
                lambda: Some(t.best_lambda),
                explore: None,
            },
            Some(record),
        ));
    }
    if alg == Algorithm::Explore {
        let mut best: Option<(ExploreConfig, f64)> = None;
        for candidate in explore_grid() {
            let scores: Vec<f64> = tune_set
                .par_iter()
                .map(|(u, inst)| {
                    let mut e = candidate.clone();
                    e.seed = derive_seed(cfg.seed, *u, 2);
                    explore_rank(inst, &e).map(|o| osd(inst, &o))
                })
                .collect::<Result<_>>()?;
            let mean = scores.iter().sum::<f64>() / scores.len() as f64;
            if best.as_ref().map_or(true, |(_, b)| mean > *b) {
                best = Some((candidate, mean));
            }
        }
        let (e, score) = best.expect("explore grid is non-empty");
        log::info!("{regime}/explore: k = {}, steps = {}, {:?}", e.k, e.steps, e.adaptation);
        let record = TuningRecord {
            regime,
            algorithm: alg,
            lambda: None,
            explore: Some(e.clone()),
            score,
            grid: Vec::new(),
        };
        return Ok((
            Tuned {
                lambda: None,
                explore: Some(e),
            },
            Some(record),
        ));
    }
    Ok((Tuned::default(), None))
}

fn evaluate(
    metric: Metric,
    inst: &Instance,
    ord: &Ordering,
    user: &UserData,
    n_categories: usize,
    seed: u64,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    Ok(match metric {
        Metric::Osd => osd(inst, ord),
        Metric::Ocd => ocd(inst, ord)?,
        Metric::ExpDcg => exp_dcg(&probs_in_order(inst, ord)),
        Metric::ExpNum => exp_num(&probs_in_order(inst, ord)),
        Metric::OsdMc => monte_carlo_osd(inst, ord, cfg.mc_samples, seed)?.mean,
        Metric::ExpSerendipity => match inst.categories() {
            Some(cats) if user.history.len() < n_categories => {
                let novel: Vec<bool> = ord
                    .iter()
                    .map(|&i| cats[i].iter().any(|c| !user.history.contains(c)))
                    .collect();
                exp_serendipity(&probs_in_order(inst, ord), &novel)?
            }
            _ => 0.0,
        },
    })
}

fn with_user(user: &str, e: Error) -> Error {
    Error::ForUser {
        user: user.to_owned(),
        source: Box::new(e),
    }
}

/// Runs the experiment and writes the result files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RankReport> {
    cfg.validate()?;
    let report = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| compute(cfg))?,
        None => compute(cfg)?,
    };
    emit_tables(&report, &cfg.out, cfg.format)?;
    Ok(report)
}

/// Runs the experiment without writing anything.
pub fn compute(cfg: &ExperimentConfig) -> Result<RankReport> {
    cfg.validate()?;
    let data = Prepared::load(cfg)?;
    let mut rows = Vec::new();
    let mut tuning = Vec::new();
    let mut notes = Vec::new();
    let mut non_metric_users = 0;

    if cfg.metrics.contains(&Metric::ExpSerendipity) {
        if data.categories.is_none() {
            notes.push("expserendipity is 0 for every user: no categories".to_owned());
        } else {
            let covered = data
                .users
                .iter()
                .filter(|u| u.history.len() >= data.n_categories)
                .count();
            if covered > 0 {
                notes.push(format!(
                    "expserendipity is 0 for {covered} users whose history covers all categories"
                ));
            }
        }
    }

    for (ri, &regime) in cfg.regimes.iter().enumerate() {
        let instances: Vec<(usize, Instance)> = data
            .users
            .par_iter()
            .enumerate()
            .filter(|(_, u)| !u.items.is_empty())
            .map(|(u, user)| {
                data.instance(user, regime)
                    .map(|inst| (u, inst))
                    .map_err(|e| with_user(&user.name, e))
            })
            .collect::<Result<_>>()?;
        if ri == 0 {
            non_metric_users = match &data.shared_dist {
                Some(d) if check_metric_matrix(d, TOLERANCE).is_metric => 0,
                Some(_) => instances.len(),
                None => instances
                    .par_iter()
                    .filter(|(_, inst)| !check_metric_matrix(inst.dist(), TOLERANCE).is_metric)
                    .count(),
            };
            if non_metric_users > 0 && cfg.algorithms.contains(&Algorithm::Bkm) {
                log::warn!(
                    "{non_metric_users} users have non-metric distances; \
                     greedy-matching properties are not guaranteed for them"
                );
            }
        }
        let tune_len = match cfg.tune_users {
            0 => instances.len(),
            k => k.min(instances.len()),
        };
        for &alg in &cfg.algorithms {
            let (tuned, record) = tune(alg, regime, &instances[..tune_len], cfg)?;
            tuning.extend(record);
            let per_user: Vec<Vec<UserRow>> = instances
                .par_iter()
                .map(|(u, inst)| {
                    let user = &data.users[*u];
                    let ord = rank(alg, inst, &tuned, *u, cfg).map_err(|e| with_user(&user.name, e))?;
                    cfg.metrics
                        .iter()
                        .map(|&metric| {
                            let seed = derive_seed(cfg.seed, *u, 3);
                            let value = evaluate(metric, inst, &ord, user, data.n_categories, seed, cfg)
                                .map_err(|e| with_user(&user.name, e))?;
                            Ok(UserRow {
                                dataset: cfg.name.clone(),
                                regime,
                                user: user.name.clone(),
                                algorithm: alg,
                                metric,
                                value,
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            // Regroup as metric-major so each (regime, algorithm, metric) block is contiguous.
            for mi in 0..cfg.metrics.len() {
                rows.extend(per_user.iter().map(|r| r[mi].clone()));
            }
        }
    }

    let aggregates = aggregate_rows(&rows);
    Ok(RankReport {
        rows,
        aggregates,
        info: RunInfo {
            dataset: cfg.name.clone(),
            n_users: data.users.len(),
            n_items: data.n_items,
            tuning,
            non_metric_users,
            notes,
        },
    })
}

pub const PER_USER_FILE: &str = "per_user.csv";
pub const RUN_INFO_FILE: &str = "run.json";

pub fn aggregate_file(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "aggregate.csv",
        OutputFormat::Json => "aggregate.json",
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Config(e.to_string())
}

/// Writes the per-user table, the aggregate table and the run information.
pub fn emit_tables(report: &RankReport, out: &Path, format: OutputFormat) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join(PER_USER_FILE)).map_err(csv_error)?;
    for r in &report.rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    write_aggregates(&report.aggregates, &out.join(aggregate_file(format)), format)?;
    let info = serde_json::to_string_pretty(&report.info).map_err(json_error)?;
    fs::write(out.join(RUN_INFO_FILE), info + "\n")?;
    Ok(())
}

pub fn write_aggregates(rows: &[AggregateRow], path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
            for r in rows {
                w.serialize(r).map_err(csv_error)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let body = serde_json::to_string_pretty(rows).map_err(json_error)?;
            fs::write(path, body + "\n")?;
        }
    }
    Ok(())
}

pub fn read_aggregates(path: &Path, format: OutputFormat) -> Result<Vec<AggregateRow>> {
    match format {
        OutputFormat::Csv => csv::Reader::from_path(path)
            .map_err(csv_error)?
            .deserialize()
            .map(|r| r.map_err(csv_error))
            .collect(),
        OutputFormat::Json => {
            serde_json::from_str(&fs::read_to_string(path)?).map_err(json_error)
        }
    }
}

pub fn read_user_rows(path: &Path) -> Result<Vec<UserRow>> {
    csv::Reader::from_path(path)
        .map_err(csv_error)?
        .deserialize()
        .map(|r| r.map_err(csv_error))
        .collect()
}
