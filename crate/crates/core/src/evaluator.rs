//! Proxy and full scoring of candidates, sample-bank pairing and ranking
//! quality metrics. Scores are validation errors: lower is better.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ahc::{ComparisonSample, Provenance};
use crate::forecaster::{build_model, param_count, test_metrics, train_model, ForecastError, PreparedData, TrainConfig};
use crate::searchspace::{normalize_hyper, sample_with, ArchHyper, Category, OperatorKind, SpaceConfig, HYPER_DIM, NUM_OPS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 values, got {0}")]
    TooFew(usize),
    #[error("records mix the proxy and full channels")]
    MixedChannels,
    #[error("candidate outside the oracle's space: {0}")]
    OffSpace(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Proxy,
    Full,
}

/// One scored candidate, as stored in score banks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub ah: ArchHyper,
    pub score: f64,
    pub channel: Channel,
    pub cost_epochs: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_error: Option<f64>,
}

/// Full-channel result: validation error plus the test error when available.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullScore {
    pub score: f64,
    pub test_error: Option<f64>,
}

/// Scores candidates through a cheap proxy and an expensive full channel.
/// Both are deterministic functions of the candidate and the evaluator seed.
pub trait Evaluator: Sync {
    fn proxy(&self, ah: &ArchHyper) -> Result<f64, EvalError>;
    fn full(&self, ah: &ArchHyper) -> Result<FullScore, EvalError>;
    fn proxy_epochs(&self) -> usize;
    fn full_epochs(&self) -> usize;
    fn seed(&self) -> u64;
    /// Model size used to break ties among finalists.
    fn param_count(&self, ah: &ArchHyper) -> usize;

    /// Proxy and full scores together; evaluators whose proxy is a prefix of
    /// the full run override this to train once.
    fn proxy_and_full(&self, ah: &ArchHyper) -> Result<(f64, FullScore), EvalError> {
        Ok((self.proxy(ah)?, self.full(ah)?))
    }

    fn score(&self, ah: &ArchHyper, channel: Channel) -> Result<ScoreRecord, EvalError> {
        let (score, test_error, cost_epochs) = match channel {
            Channel::Proxy => (self.proxy(ah)?, None, self.proxy_epochs()),
            Channel::Full => {
                let f = self.full(ah)?;
                (f.score, f.test_error, self.full_epochs())
            }
        };
        Ok(ScoreRecord {
            ah: ah.clone(),
            score,
            channel,
            cost_epochs,
            seed: self.seed(),
            test_error,
        })
    }
}

/// Mixes a candidate fingerprint with a run seed.
pub fn candidate_seed(ah: &ArchHyper, seed: u64) -> u64 {
    let mut z = ah.fingerprint() ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Linear-plus-interaction stand-in for full training, with Gaussian noise on
/// the proxy channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOracleConfig {
    pub op_weights: [f64; NUM_OPS],
    pub depth_weight: f64,
    pub hyper_weights: [f64; HYPER_DIM],
    pub interaction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub space: SpaceConfig,
    pub proxy_epochs: usize,
    pub full_epochs: usize,
}

impl SyntheticOracleConfig {
    /// Weights drawn uniformly from `[-1, 1]`, interaction from `[-0.3, 0.3]`, no noise.
    pub fn random(seed: u64, space: SpaceConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: f64| rng.random_range(-r..=r);
        Self {
            op_weights: std::array::from_fn(|_| draw(1.0)),
            depth_weight: draw(1.0),
            hyper_weights: std::array::from_fn(|_| draw(1.0)),
            interaction: draw(0.3),
            noise_sigma: 0.0,
            seed,
            space,
            proxy_epochs: 5,
            full_epochs: 100,
        }
    }

    /// A related oracle: every weight moves by up to `amount` (relative to the
    /// `[-1, 1]` weight range), as a stand-in for a different dataset.
    pub fn shifted(&self, amount: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |w: f64| w + amount * rng.random_range(-1.0..=1.0);
        let mut out = self.clone();
        out.op_weights = self.op_weights.map(&mut jitter);
        out.depth_weight = jitter(self.depth_weight);
        out.hyper_weights = self.hyper_weights.map(&mut jitter);
        out.interaction = jitter(self.interaction);
        out.seed = seed;
        out
    }

    pub fn noiseless(&self, ah: &ArchHyper) -> Result<f64, EvalError> {
        let hyper = normalize_hyper(&ah.hyper, &self.space).map_err(|e| EvalError::OffSpace(e.to_string()))?;
        let ops: f64 = OperatorKind::ALL
            .iter()
            .map(|&k| self.op_weights[k.index()] * ah.arch.count(k) as f64)
            .sum();
        let hyp: f64 = self.hyper_weights.iter().zip(hyper).map(|(w, v)| w * v).sum();
        let t = ah.arch.count_category(Category::Temporal) as f64;
        let s = ah.arch.count_category(Category::Spatial) as f64;
        Ok(ops + self.depth_weight * ah.arch.longest_path() as f64 + hyp + self.interaction * t * s)
    }

    pub fn noise(&self, ah: &ArchHyper) -> f64 {
        if self.noise_sigma == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(candidate_seed(ah, self.seed));
        let z: f64 = StandardNormal.sample(&mut rng);
        self.noise_sigma * z
    }

    /// Standard deviation of noiseless scores over `samples` random candidates.
    pub fn score_std(&self, samples: usize, seed: u64) -> Result<f64, EvalError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = (0..samples)
            .map(|_| self.noiseless(&sample_with(&mut rng, &self.space)))
            .collect::<Result<Vec<_>, _>>()?;
        let m = scores.iter().sum::<f64>() / scores.len() as f64;
        Ok((scores.iter().map(|s| (s - m).powi(2)).sum::<f64>() / scores.len() as f64).sqrt())
    }

    /// Sets `noise_sigma = factor * score_std`.
    pub fn with_relative_noise(mut self, factor: f64, samples: usize) -> Result<Self, EvalError> {
        self.noise_sigma = factor * self.score_std(samples, self.seed ^ 0xA5A5)?;
        Ok(self)
    }
}

pub fn synthetic_oracle(ah: &ArchHyper, cfg: &SyntheticOracleConfig, channel: Channel) -> Result<f64, EvalError> {
    let base = cfg.noiseless(ah)?;
    Ok(match channel {
        Channel::Proxy => base + cfg.noise(ah),
        Channel::Full => base,
    })
}

impl Evaluator for SyntheticOracleConfig {
    fn proxy(&self, ah: &ArchHyper) -> Result<f64, EvalError> {
        synthetic_oracle(ah, self, Channel::Proxy)
    }

    fn full(&self, ah: &ArchHyper) -> Result<FullScore, EvalError> {
        Ok(FullScore {
            score: synthetic_oracle(ah, self, Channel::Full)?,
            test_error: None,
        })
    }

    fn proxy_epochs(&self) -> usize {
        self.proxy_epochs
    }

    fn full_epochs(&self) -> usize {
        self.full_epochs
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn param_count(&self, ah: &ArchHyper) -> usize {
        let h = ah.hyper.h as usize;
        ah.hyper.b as usize * ah.num_ops() * h * h + h * ah.hyper.i as usize
    }
}

/// Trains real forecasters on a prepared dataset.
#[derive(Clone, Debug)]
pub struct ForecastEvaluator {
    pub data: Arc<PreparedData>,
    pub train: TrainConfig,
    pub proxy_epochs: usize,
    pub full_epochs: usize,
    pub seed: u64,
}

/// Validation error after exactly `k` epochs (best epoch so far, counting the
/// untrained model).
pub fn early_validation_proxy(
    ah: &ArchHyper,
    data: &PreparedData,
    k: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<f64, EvalError> {
    let s = candidate_seed(ah, seed);
    let mut model = build_model(ah, &data.config, s)?;
    Ok(train_model(&mut model, data, k, train, s)?.best_val_error)
}

/// Trains to the full budget with early stopping; returns the best validation
/// error and the test error of the restored best model.
pub fn full_evaluation(
    ah: &ArchHyper,
    data: &PreparedData,
    epochs: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<FullScore, EvalError> {
    let s = candidate_seed(ah, seed);
    let mut model = build_model(ah, &data.config, s)?;
    let out = train_model(&mut model, data, epochs, train, s)?;
    let test = test_metrics(&model, data, train)?;
    Ok(FullScore {
        score: out.best_val_error,
        test_error: Some(test.primary()),
    })
}

/// One full run that also reports the `k`-epoch proxy read off its history.
pub fn proxy_and_full_evaluation(
    ah: &ArchHyper,
    data: &PreparedData,
    k: usize,
    epochs: usize,
    train: &TrainConfig,
    seed: u64,
) -> Result<(f64, FullScore), EvalError> {
    if k > epochs {
        let proxy = early_validation_proxy(ah, data, k, train, seed)?;
        return Ok((proxy, full_evaluation(ah, data, epochs, train, seed)?));
    }
    let s = candidate_seed(ah, seed);
    let mut model = build_model(ah, &data.config, s)?;
    let out = train_model(&mut model, data, epochs, train, s)?;
    let proxy = out
        .history
        .iter()
        .take(k)
        .map(|e| e.val_error)
        .fold(out.initial_val_error, f64::min);
    let test = test_metrics(&model, data, train)?;
    Ok((
        proxy,
        FullScore {
            score: out.best_val_error,
            test_error: Some(test.primary()),
        },
    ))
}

impl Evaluator for ForecastEvaluator {
    fn proxy_and_full(&self, ah: &ArchHyper) -> Result<(f64, FullScore), EvalError> {
        proxy_and_full_evaluation(ah, &self.data, self.proxy_epochs, self.full_epochs, &self.train, self.seed)
    }

    fn proxy(&self, ah: &ArchHyper) -> Result<f64, EvalError> {
        early_validation_proxy(ah, &self.data, self.proxy_epochs, &self.train, self.seed)
    }

    fn full(&self, ah: &ArchHyper) -> Result<FullScore, EvalError> {
        full_evaluation(ah, &self.data, self.full_epochs, &self.train, self.seed)
    }

    fn proxy_epochs(&self) -> usize {
        self.proxy_epochs
    }

    fn full_epochs(&self) -> usize {
        self.full_epochs
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn param_count(&self, ah: &ArchHyper) -> usize {
        param_count(ah, &self.data.config).unwrap_or(usize::MAX)
    }
}

/// Pairs every two records once. The stored direction of each pair is a
/// deterministic coin flip on the two fingerprints; label 1 means the first
/// candidate's error is lower or equal.
pub fn make_pairs(records: &[ScoreRecord]) -> Result<Vec<ComparisonSample>, EvalError> {
    if records.len() < 2 {
        return Err(EvalError::TooFew(records.len()));
    }
    let channel = records[0].channel;
    if records.iter().any(|r| r.channel != channel) {
        return Err(EvalError::MixedChannels);
    }
    let provenance = match channel {
        Channel::Proxy => Provenance::Noisy,
        Channel::Full => Provenance::Clean,
    };
    let mut out = Vec::with_capacity(records.len() * (records.len() - 1) / 2);
    for i in 0..records.len() {
        for j in i + 1..records.len() {
            let (a, b) = (&records[i], &records[j]);
            let flip = (candidate_seed(&a.ah, b.ah.fingerprint()) ^ candidate_seed(&b.ah, a.ah.fingerprint())) & 1 == 1;
            let (first, second) = if flip { (b, a) } else { (a, b) };
            out.push(ComparisonSample {
                ah1: first.ah.clone(),
                ah2: second.ah.clone(),
                label: u8::from(first.score <= second.score),
                provenance,
            });
        }
    }
    Ok(out)
}

/// Fraction of ordered pairs `(n, m)`, `n != m`, on which `x_n >= x_m`
/// agrees with `y_n >= y_m`.
pub fn pairwise_ranking_accuracy(proxy: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if proxy.len() != truth.len() {
        return Err(EvalError::LengthMismatch(proxy.len(), truth.len()));
    }
    let m = proxy.len();
    if m < 2 {
        return Err(EvalError::TooFew(m));
    }
    let mut agree = 0usize;
    for n in 0..m {
        for k in 0..m {
            if n != k && (proxy[n] >= proxy[k]) == (truth[n] >= truth[k]) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (m * (m - 1)) as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooFew(a.len()));
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}
