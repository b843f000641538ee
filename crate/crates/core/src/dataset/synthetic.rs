use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetError, InteractionRecord, ItemCatalog, UserCatalog};
use crate::matrix::DenseMatrix;

/// Parameters of a latent-factor world with a popularity-skewed logging policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub latent_dim: usize,
    pub noise_sd: f64,
    pub log_density: f64,
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 50,
            items: 40,
            categories: 5,
            latent_dim: 4,
            noise_sd: 0.05,
            log_density: 0.05,
            popularity_skew: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InvalidSpec(m.to_string()));
        if self.users < 2 {
            return bad("need ≥2 users");
        }
        if self.items < 2 {
            return bad("need ≥2 items");
        }
        if self.categories == 0 || self.categories > self.items {
            return bad("categories must be in [1, items]");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be ≥1");
        }
        if !(self.log_density > 0.0 && self.log_density <= 1.0) {
            return bad("log_density must be in (0, 1]");
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return bad("noise_sd must be ≥0");
        }
        if !(self.popularity_skew >= 0.0) || !self.popularity_skew.is_finite() {
            return bad("popularity_skew must be ≥0");
        }
        Ok(())
    }

    pub fn log_size(&self) -> usize {
        ((self.log_density * (self.users * self.items) as f64).round() as usize).max(1)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Builds a dataset whose truth is `clip(σ(x_u·y_i) + ε, 0, 1)`.
///
/// Item factors cluster around a per-category centroid and user factors
/// around a per-segment centroid (the segment is the user's feature), so both
/// catalogs carry preference signal. The log holds `round(density·|U|·|I|)` distinct
/// pairs drawn without replacement with item weight `(rank+1)^-skew` over a
/// random popularity ranking; each user's pairs are visited in random order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let (nu, ni, nc, dim) = (spec.users, spec.items, spec.categories, spec.latent_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut categories: Vec<usize> = (0..ni).map(|i| i % nc).collect();
    categories.shuffle(&mut rng);

    // Dot products then have standard deviation ≈ 2.
    let scale = (3.2 / dim as f64).powf(0.25);
    let factor = Normal::new(0.0, scale).expect("finite scale");
    let jitter = Normal::new(0.0, 0.5 * scale).expect("finite scale");
    let centroids: Vec<Vec<f64>> = (0..nc).map(|_| (0..dim).map(|_| factor.sample(&mut rng)).collect()).collect();
    let item_factors: Vec<Vec<f64>> =
        (0..ni).map(|i| centroids[categories[i]].iter().map(|c| c + jitter.sample(&mut rng)).collect()).collect();
    let user_buckets = nu.min(3);
    let segments: Vec<Vec<f64>> =
        (0..user_buckets).map(|_| (0..dim).map(|_| factor.sample(&mut rng)).collect()).collect();
    let user_factors: Vec<Vec<f64>> =
        (0..nu).map(|u| segments[u % user_buckets].iter().map(|c| c + jitter.sample(&mut rng)).collect()).collect();

    let noise = Normal::new(0.0, spec.noise_sd).expect("validated noise");
    let truth = DenseMatrix::from_fn(nu, ni, |u, i| {
        let score: f64 = user_factors[u].iter().zip(&item_factors[i]).map(|(a, b)| a * b).sum();
        let eps = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        (sigmoid(score) + eps).clamp(0.0, 1.0)
    });

    let mut ranking: Vec<usize> = (0..ni).collect();
    ranking.shuffle(&mut rng);
    let mut popularity = vec![0.0; ni];
    for (rank, &item) in ranking.iter().enumerate() {
        popularity[item] = ((rank + 1) as f64).powf(-spec.popularity_skew);
    }
    let n_records = spec.log_size();
    let mut picked: Vec<usize> = index::sample_weighted(&mut rng, nu * ni, |p| popularity[p % ni], n_records)
        .map_err(|e| DatasetError::InvalidSpec(format!("log sampling failed: {e}")))?
        .into_vec();
    picked.sort_unstable();

    let mut train_log = Vec::with_capacity(n_records);
    let mut start = 0;
    while start < picked.len() {
        let user = picked[start] / ni;
        let end = start + picked[start..].iter().take_while(|&&p| p / ni == user).count();
        let mut items: Vec<usize> = picked[start..end].iter().map(|p| p % ni).collect();
        items.shuffle(&mut rng);
        for (step, item) in items.into_iter().enumerate() {
            train_log.push(InteractionRecord { user_id: user, item_id: item, feedback: truth.get(user, item), step });
        }
        start = end;
    }

    let item_buckets = ni.min(4);
    let mut item_feature: Vec<usize> = (0..ni).map(|i| i % item_buckets).collect();
    item_feature.shuffle(&mut rng);

    Ok(Dataset {
        name: format!("synthetic-{}x{}-s{}", nu, ni, spec.seed),
        seed: Some(spec.seed),
        train_log,
        users: UserCatalog { features: (0..nu).map(|u| vec![u % user_buckets]).collect(), feature_vocab: vec![user_buckets] },
        items: ItemCatalog {
            primary_category: categories,
            features: item_feature.into_iter().map(|f| vec![f]).collect(),
            n_categories: nc,
            feature_vocab: vec![item_buckets],
        },
        truth: Some(truth),
        r_min: 0.0,
        r_max: 1.0,
    })
}
