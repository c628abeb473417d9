//! Seeded generator for rating data with a planted group effect.
//!
//! Users belong to a protected group (attribute `gender`, `F` for the
//! protected side) and carry an age code drawn from the MovieLens 1M age
//! marginals. Ratings follow `mu + b_i + <u, v> + offset * [protected] + noise`
//! clipped to 1–5; item choice is driven by popularity, taste and an optional
//! group-specific popularity skew.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attributes::AttributeTable;
use super::interactions::{Interaction, InteractionSet, RatingScale};
use crate::error::{Error, Result};

/// MovieLens 1M user counts per `(gender, age code)`.
pub const ML1M_GENDER_AGE_COUNTS: [(&str, u32, usize); 14] = [
    ("F", 1, 78),
    ("M", 1, 144),
    ("F", 18, 298),
    ("M", 18, 805),
    ("F", 25, 558),
    ("M", 25, 1538),
    ("F", 35, 338),
    ("M", 35, 855),
    ("F", 45, 189),
    ("M", 45, 361),
    ("F", 50, 146),
    ("M", 50, 350),
    ("F", 56, 102),
    ("M", 56, 278),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Fraction of users in the protected group.
    pub protected_share: f64,
    /// Added to every rating of protected users.
    pub rating_offset: f64,
    /// Popularity multiplier applied by protected users to the second half
    /// of the catalog (1 = no skew).
    pub popularity_skew: f64,
    /// Strength of taste in item choice.
    pub affinity: f64,
    pub latent_dim: usize,
    pub factor_scale: f64,
    pub noise: f64,
    pub integer_ratings: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 300,
            n_items: 200,
            min_per_user: 20,
            max_per_user: 60,
            protected_share: 0.3,
            rating_offset: 0.0,
            popularity_skew: 1.0,
            affinity: 1.5,
            latent_dim: 4,
            factor_scale: 0.8,
            noise: 0.5,
            integer_ratings: false,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    /// Protected users rate half a star lower and lean towards the second
    /// half of the catalog.
    pub fn planted() -> Self {
        Self {
            rating_offset: -0.5,
            popularity_skew: 4.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: InteractionSet,
    pub attributes: AttributeTable,
}

fn ml1m_age_code(rng: &mut ChaCha8Rng) -> u32 {
    let total: usize = ML1M_GENDER_AGE_COUNTS.iter().map(|c| c.2).sum();
    let mut pick = rng.random_range(0..total);
    for &(_, age, n) in &ML1M_GENDER_AGE_COUNTS {
        if pick < n {
            return age;
        }
        pick -= n;
    }
    56
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    if cfg.n_users < 2 || cfg.n_items < 2 || cfg.latent_dim == 0 {
        return Err(Error::invalid("synthetic data needs >= 2 users, >= 2 items, latent_dim >= 1"));
    }
    if cfg.min_per_user == 0 || cfg.min_per_user > cfg.max_per_user || cfg.max_per_user > cfg.n_items {
        return Err(Error::invalid("need 1 <= min_per_user <= max_per_user <= n_items"));
    }
    if !(cfg.protected_share > 0.0 && cfg.protected_share < 1.0) {
        return Err(Error::invalid("protected_share must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let k = cfg.latent_dim;
    let factor = Normal::new(0.0, cfg.factor_scale / (k as f64).sqrt()).unwrap();
    let bias = Normal::new(0.0, 0.3).unwrap();
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).unwrap();

    let items: Vec<Vec<f64>> = (0..cfg.n_items)
        .map(|_| (0..k).map(|_| factor.sample(&mut rng)).collect())
        .collect();
    let item_bias: Vec<f64> = (0..cfg.n_items).map(|_| bias.sample(&mut rng)).collect();
    let popularity: Vec<f64> = (0..cfg.n_items).map(|i| 1.0 / (i as f64 + 10.0)).collect();

    let n_protected = ((cfg.n_users as f64) * cfg.protected_share).round().max(1.0) as usize;
    let mut protected = vec![false; cfg.n_users];
    for flag in protected.iter_mut().take(n_protected.min(cfg.n_users - 1)) {
        *flag = true;
    }
    // interleave group membership deterministically
    for u in (1..cfg.n_users).rev() {
        let j = rng.random_range(0..=u);
        protected.swap(u, j);
    }

    let mut attributes = AttributeTable::new(vec![
        "gender".into(),
        "age".into(),
        "occupation".into(),
        "zip".into(),
    ]);
    let mut rows = Vec::new();
    let mut clock: i64 = 956_703_932;
    for u in 0..cfg.n_users {
        let user = (u + 1).to_string();
        let gender = if protected[u] { "F" } else { "M" };
        let age = ml1m_age_code(&mut rng).to_string();
        attributes.insert(&user, [("gender", gender), ("age", age.as_str()), ("occupation", "0"), ("zip", "00000")])?;

        let taste: Vec<f64> = (0..k).map(|_| factor.sample(&mut rng)).collect();
        let n_u = rng.random_range(cfg.min_per_user..=cfg.max_per_user);
        // Efraimidis–Spirakis weighted sampling without replacement
        let mut keyed: Vec<(f64, usize)> = (0..cfg.n_items)
            .map(|i| {
                let dot: f64 = taste.iter().zip(&items[i]).map(|(a, b)| a * b).sum();
                let mut w = popularity[i] * (cfg.affinity * dot).exp();
                if protected[u] && i >= cfg.n_items / 2 {
                    w *= cfg.popularity_skew;
                }
                let r: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
                (r.ln() / w, i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in keyed.iter().take(n_u) {
            let dot: f64 = taste.iter().zip(&items[i]).map(|(a, b)| a * b).sum();
            let offset = if protected[u] { cfg.rating_offset } else { 0.0 };
            let mut r = 3.5 + item_bias[i] + dot + offset + noise.sample(&mut rng);
            if cfg.integer_ratings {
                r = r.round();
            }
            clock += rng.random_range(1..600);
            rows.push(Interaction::new(user.clone(), (i + 1).to_string(), r.clamp(1.0, 5.0)).at(clock));
        }
    }
    Ok(SyntheticData {
        interactions: InteractionSet::new(rows, RatingScale::FIVE_STAR)?,
        attributes,
    })
}

impl SyntheticData {
    /// Writes `ratings.dat` and `users.dat` in the MovieLens 1M layout.
    pub fn write_ml1m(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut ratings = String::new();
        for it in self.interactions.interactions() {
            let _ = writeln!(
                ratings,
                "{}::{}::{}::{}",
                it.user,
                it.item,
                it.rating,
                it.timestamp.unwrap_or(0)
            );
        }
        let path = dir.join("ratings.dat");
        fs::write(&path, ratings).map_err(|e| Error::io(&path, e))?;
        write_ml1m_users(&self.attributes, &dir.join("users.dat"))
    }
}

pub fn write_ml1m_users(attributes: &AttributeTable, path: &Path) -> Result<()> {
    let mut users: Vec<(&String, _)> = attributes.rows().iter().collect();
    users.sort_by_key(|(u, _)| u.parse::<u64>().unwrap_or(u64::MAX));
    let mut out = String::new();
    for (user, row) in users {
        let get = |k: &str| row.get(k).map_or("", String::as_str);
        let _ = writeln!(out, "{user}::{}::{}::{}::{}", get("gender"), get("age"), get("occupation"), get("zip"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// A `users.dat` population with the exact MovieLens 1M gender/age counts.
pub fn ml1m_demographics_table() -> AttributeTable {
    let mut t = AttributeTable::new(vec![
        "gender".into(),
        "age".into(),
        "occupation".into(),
        "zip".into(),
    ]);
    let mut id = 1;
    for &(gender, age, n) in &ML1M_GENDER_AGE_COUNTS {
        for _ in 0..n {
            t.insert(&id.to_string(), [("gender", gender), ("age", &age.to_string()), ("occupation", "0"), ("zip", "00000")])
                .unwrap();
            id += 1;
        }
    }
    t
}
