//! Dataset ingestion: delimited-text loaders, matrix-factorization
//! completion, probability regimes, and item-item distances.
//!
//! Input files carry a header row:
//!
//! * ratings: `user,item,rating`
//! * categories: `item,category`, one pair per line
//! * features: `item,f0,f1,...`, a fixed number of columns
//!
//! User, item and category identifiers are arbitrary strings. Dense ids are
//! assigned in order of first appearance.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::DistanceMatrix;

/// String vocabulary with ids assigned by first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One observed rating, by dense ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RatingsTable {
    pub users: Vocab,
    pub items: Vocab,
    pub ratings: Vec<Rating>,
}

impl RatingsTable {
    /// Builds a table from string triples, rejecting duplicate pairs.
    pub fn from_triples<I, U, T>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut table = Self::default();
        let mut seen = HashSet::new();
        for (user, item, value) in triples {
            let (user, item) = (user.as_ref(), item.as_ref());
            let u = table.users.intern(user);
            let i = table.items.intern(item);
            if !seen.insert((u, i)) {
                return Err(Error::DuplicateRating {
                    user: user.to_owned(),
                    item: item.to_owned(),
                });
            }
            table.ratings.push(Rating { user: u, item: i, value });
        }
        Ok(table)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// `(min, max)` observed rating.
    pub fn value_range(&self) -> Option<(f64, f64)> {
        self.ratings.iter().fold(None, |acc, r| match acc {
            None => Some((r.value, r.value)),
            Some((lo, hi)) => Some((lo.min(r.value), hi.max(r.value))),
        })
    }

    /// Ratings grouped by user id.
    pub fn by_user(&self) -> Vec<Vec<Rating>> {
        let mut out = vec![Vec::new(); self.n_users()];
        for r in &self.ratings {
            out[r.user].push(*r);
        }
        out
    }
}

fn reader(path: &Path, delimiter: Option<u8>) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter.unwrap_or(b','))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn parse_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Reads every record as `(line, fields)`, checking the column count.
fn records(path: &Path, delimiter: Option<u8>, columns: Option<usize>) -> Result<Vec<(u64, Vec<String>)>> {
    let mut rdr = reader(path, delimiter)?;
    let header_len = rdr
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .len();
    let expected = columns.unwrap_or(header_len);
    if header_len != expected {
        return Err(parse_error(
            path,
            1,
            format!("expected {expected} header columns, found {header_len}"),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected {
            return Err(parse_error(
                path,
                line,
                format!("expected {expected} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn parse_real(path: &Path, line: u64, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_error(path, line, format!("not a finite number: {field:?}"))),
    }
}

pub fn load_ratings(path: &Path, delimiter: Option<u8>) -> Result<RatingsTable> {
    let rows = records(path, delimiter, Some(3))?;
    let mut triples = Vec::with_capacity(rows.len());
    for (line, f) in rows {
        let value = parse_real(path, line, &f[2])?;
        let [user, item, _] = <[String; 3]>::try_from(f).expect("three columns");
        triples.push((user, item, value));
    }
    RatingsTable::from_triples(triples)
}

/// Category sets keyed by item name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryTable {
    pub categories: Vocab,
    pub by_item: HashMap<String, Vec<u32>>,
}

impl CategoryTable {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut table = Self::default();
        for (item, cat) in pairs {
            let c = table.categories.intern(cat.as_ref()) as u32;
            let set = table.by_item.entry(item.as_ref().to_owned()).or_default();
            if !set.contains(&c) {
                set.push(c);
            }
        }
        for set in table.by_item.values_mut() {
            set.sort_unstable();
        }
        table
    }

    /// Category sets for `items` in order; unknown items get an empty set.
    pub fn align(&self, items: &[String]) -> Vec<Vec<u32>> {
        items
            .iter()
            .map(|name| self.by_item.get(name).cloned().unwrap_or_default())
            .collect()
    }
}

pub fn load_categories(path: &Path, delimiter: Option<u8>) -> Result<CategoryTable> {
    let rows = records(path, delimiter, Some(2))?;
    Ok(CategoryTable::from_pairs(
        rows.into_iter().map(|(_, f)| (f[0].clone(), f[1].clone())),
    ))
}

/// Feature vectors keyed by item name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub by_item: HashMap<String, Vec<f64>>,
    pub dim: usize,
}

impl FeatureTable {
    /// Feature vectors for `items`; unknown items get a zero vector.
    pub fn align(&self, items: &[String]) -> Vec<Vec<f64>> {
        items
            .iter()
            .map(|name| self.by_item.get(name).cloned().unwrap_or_else(|| vec![0.0; self.dim]))
            .collect()
    }
}

pub fn load_features(path: &Path, delimiter: Option<u8>) -> Result<FeatureTable> {
    let rows = records(path, delimiter, None)?;
    let mut table = FeatureTable::default();
    for (line, f) in rows {
        if f.len() < 2 {
            return Err(parse_error(path, line, "feature row needs an item and at least one value"));
        }
        let values = f[1..]
            .iter()
            .map(|x| parse_real(path, line, x))
            .collect::<Result<Vec<_>>>()?;
        table.dim = values.len();
        if table.by_item.insert(f[0].clone(), values).is_some() {
            return Err(parse_error(path, line, format!("duplicate item {:?}", f[0])));
        }
    }
    Ok(table)
}

/// Matrix-factorization hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfConfig {
    pub factors: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            factors: 5,
            epochs: 50,
            learning_rate: 0.01,
            regularization: 0.05,
            seed: 0,
        }
    }
}

impl MfConfig {
    /// Defaults, with 10 factors for tables of a million ratings or more.
    pub fn for_table(table: &RatingsTable) -> Self {
        let mut cfg = Self::default();
        if table.len() >= 1_000_000 {
            cfg.factors = 10;
        }
        cfg
    }
}

/// Dense user × item rating estimate, row-major by user.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRatings {
    pub n_users: usize,
    pub n_items: usize,
    pub values: Vec<f64>,
}

impl DenseRatings {
    pub fn get(&self, user: usize, item: usize) -> f64 {
        self.values[user * self.n_items + item]
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }
}

/// Learned factors; predictions are `clip(<P_u, Q_i>)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfModel {
    pub factors: usize,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub range: (f64, f64),
}

impl MfModel {
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        let k = self.factors;
        let p = &self.user_factors[user * k..(user + 1) * k];
        let q = &self.item_factors[item * k..(item + 1) * k];
        let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
        dot.clamp(self.range.0, self.range.1)
    }
}

/// Biasless SGD factorization with L2 regularization.
///
/// Factors start near `sqrt(mean / k)` so initial predictions sit at the mean
/// rating. Each epoch visits the ratings in a fresh seeded shuffle.
pub fn fit_mf(table: &RatingsTable, cfg: &MfConfig) -> Result<MfModel> {
    if table.is_empty() {
        return Err(Error::EmptyTable);
    }
    if cfg.factors == 0 || !(cfg.learning_rate > 0.0) || cfg.regularization < 0.0 {
        return Err(Error::Config(format!("invalid MF configuration {cfg:?}")));
    }
    let k = cfg.factors;
    let range = table.value_range().expect("table is non-empty");
    let mean = table.ratings.iter().map(|r| r.value).sum::<f64>() / table.len() as f64;
    let scale = (mean.abs() / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = |len: usize| -> Vec<f64> {
        (0..len).map(|_| scale * rng.gen_range(0.5..1.5)).collect()
    };
    let mut pu = init(table.n_users() * k);
    let mut qi = init(table.n_items() * k);
    let mut order: Vec<usize> = (0..table.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let r = table.ratings[idx];
            let (u, i) = (r.user * k, r.item * k);
            let dot: f64 = (0..k).map(|f| pu[u + f] * qi[i + f]).sum();
            let err = r.value - dot;
            for f in 0..k {
                let (p, q) = (pu[u + f], qi[i + f]);
                pu[u + f] += cfg.learning_rate * (err * q - cfg.regularization * p);
                qi[i + f] += cfg.learning_rate * (err * p - cfg.regularization * q);
            }
        }
    }
    Ok(MfModel {
        factors: k,
        user_factors: pu,
        item_factors: qi,
        range,
    })
}

/// Fills the rating matrix: observed entries are kept, the rest come from [`fit_mf`].
pub fn complete_ratings_mf(table: &RatingsTable, cfg: &MfConfig) -> Result<DenseRatings> {
    let model = fit_mf(table, cfg)?;
    let (nu, ni) = (table.n_users(), table.n_items());
    let mut values = Vec::with_capacity(nu * ni);
    for u in 0..nu {
        values.extend((0..ni).map(|i| model.predict(u, i)));
    }
    for r in &table.ratings {
        values[r.user * ni + r.item] = r.value.clamp(model.range.0, model.range.1);
    }
    Ok(DenseRatings {
        n_users: nu,
        n_items: ni,
        values,
    })
}

/// Named continuation-probability intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Medium,
    Large,
    Full,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Small, Regime::Medium, Regime::Large, Regime::Full];

    pub fn spec(self) -> RegimeSpec {
        let (lo, hi) = match self {
            Regime::Small => (0.1, 0.3),
            Regime::Medium => (0.4, 0.6),
            Regime::Large => (0.7, 0.9),
            Regime::Full => (0.1, 0.9),
        };
        RegimeSpec { regime: self, lo, hi }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Small => "small",
            Regime::Medium => "medium",
            Regime::Large => "large",
            Regime::Full => "full",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub lo: f64,
    pub hi: f64,
}

/// Linear map of `values` from `range` onto `[lo, hi]`, clipped.
/// The endpoints of `range` map exactly onto `lo` and `hi`.
pub fn interpolate_probs(values: &[f64], range: (f64, f64), regime: &RegimeSpec) -> Result<Vec<f64>> {
    let (vmin, vmax) = range;
    if !(vmax > vmin) {
        return Err(Error::DegenerateRange(vmin, vmax));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let t = (v - vmin) / (vmax - vmin);
            (regime.lo * (1.0 - t) + regime.hi * t).clamp(regime.lo, regime.hi)
        })
        .collect())
}

/// Min-max normalizes `values` and maps them affinely onto `[lo, hi]`.
pub fn rescale(values: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(vmax > vmin) {
        return Err(Error::DegenerateRange(vmin, vmax));
    }
    Ok(values
        .iter()
        .map(|&v| lo + (v - vmin) / (vmax - vmin) * (hi - lo))
        .collect())
}

/// `1 − |A ∩ B| / |A ∪ B|` over sorted, deduplicated category sets.
pub fn jaccard_distance(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    1.0 - inter as f64 / union as f64
}

pub fn jaccard_distances(categories: &[Vec<u32>]) -> Result<DistanceMatrix> {
    let sets: Vec<Vec<u32>> = categories
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();
    if let Some(i) = sets.iter().position(Vec::is_empty) {
        return Err(Error::EmptyCategorySet(i));
    }
    Ok(DistanceMatrix::from_fn(sets.len(), |i, j| jaccard_distance(&sets[i], &sets[j])))
}

/// `1 − cos(x, y)`, floored at 0 against rounding.
pub fn cosine_distances(features: &[Vec<f64>]) -> Result<DistanceMatrix> {
    let norms: Vec<f64> = features
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&n| !(n > 0.0)) {
        return Err(Error::ZeroNormVector(i));
    }
    if let Some(x) = features.iter().find(|x| x.len() != features[0].len()) {
        return Err(Error::DimensionMismatch {
            what: "feature vector",
            expected: features[0].len(),
            found: x.len(),
        });
    }
    Ok(DistanceMatrix::from_fn(features.len(), |i, j| {
        let dot: f64 = features[i].iter().zip(&features[j]).map(|(a, b)| a * b).sum();
        (1.0 - dot / (norms[i] * norms[j])).max(0.0)
    }))
}

/// Shape of the synthetic Coat-like dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCoatConfig {
    pub users: usize,
    pub items: usize,
    pub ratings_per_user: usize,
    pub seed: u64,
}

impl Default for SynthCoatConfig {
    fn default() -> Self {
        Self {
            users: 290,
            items: 300,
            ratings_per_user: 24,
            seed: 2024,
        }
    }
}

/// Attribute groups of the synthetic items: every item takes one value of each.
const COAT_ATTRIBUTES: [(&str, usize); 3] = [("gender", 2), ("type", 16), ("color", 13)];

/// Generated ratings and category rows, ready to be written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub ratings: Vec<(String, String, f64)>,
    pub categories: Vec<(String, String)>,
}

/// Deterministic Coat-shaped data: items carry a gender, a jacket type and a
/// colour; users have latent tastes over those values and rate a random
/// subset of items on a 1–5 scale.
pub fn synth_coat(cfg: &SynthCoatConfig) -> Result<SynthDataset> {
    if cfg.ratings_per_user > cfg.items || cfg.users == 0 || cfg.items == 0 {
        return Err(Error::Config(format!("invalid synthetic shape {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let item_name = |i: usize| format!("i{i:03}");
    let mut item_attrs = Vec::with_capacity(cfg.items);
    let mut categories = Vec::new();
    for i in 0..cfg.items {
        let attrs: Vec<usize> = COAT_ATTRIBUTES.iter().map(|&(_, k)| rng.gen_range(0..k)).collect();
        for (&(group, _), &a) in COAT_ATTRIBUTES.iter().zip(&attrs) {
            categories.push((item_name(i), format!("{group}:{a}")));
        }
        item_attrs.push(attrs);
    }
    let mut ratings = Vec::with_capacity(cfg.users * cfg.ratings_per_user);
    let mut items: Vec<usize> = (0..cfg.items).collect();
    for u in 0..cfg.users {
        let taste: Vec<Vec<f64>> = COAT_ATTRIBUTES
            .iter()
            .map(|&(_, k)| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let (chosen, _) = items.partial_shuffle(&mut rng, cfg.ratings_per_user);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();
        for i in chosen {
            let affinity: f64 = taste.iter().zip(&item_attrs[i]).map(|(t, &a)| t[a]).sum();
            let noisy = 3.0 + affinity + rng.gen_range(-0.75..0.75);
            ratings.push((format!("u{u:03}"), item_name(i), noisy.round().clamp(1.0, 5.0)));
        }
    }
    Ok(SynthDataset { ratings, categories })
}

/// Writes `ratings.csv` and `categories.csv` into `dir`, returning their paths.
pub fn write_synth_dataset(data: &SynthDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let ratings_path = dir.join("ratings.csv");
    let mut out = String::from("user,item,rating\n");
    for (u, i, r) in &data.ratings {
        out.push_str(&format!("{u},{i},{r}\n"));
    }
    fs::write(&ratings_path, out)?;
    let cats_path = dir.join("categories.csv");
    let mut out = String::from("item,category\n");
    for (i, c) in &data.categories {
        out.push_str(&format!("{i},{c}\n"));
    }
    fs::write(&cats_path, out)?;
    Ok((ratings_path, cats_path))
}

/// Directory of the synthetic Coat-like dataset shipped with the crate.
pub fn bundled_coat_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("coat_synth")
}
