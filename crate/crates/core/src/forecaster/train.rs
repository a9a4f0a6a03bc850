use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_metrics, Metrics};
use super::{DataConfig, ForecastError, ForecastModel};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::data::{split_and_normalize, windowize, CtsDataset, Scaler, Window, WindowConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Training windows drawn (without replacement) per epoch.
    pub max_train_windows: Option<usize>,
    /// Evenly spaced validation/test windows used for scoring.
    pub max_eval_windows: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 1e-4,
            patience: 10,
            max_train_windows: None,
            max_eval_windows: None,
        }
    }
}

/// Windowized, normalized splits plus the model-facing data shape.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub config: DataConfig,
    pub window: WindowConfig,
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub scaler: Scaler,
    /// Normalized training mean per (series, feature).
    pub series_means: Vec<f64>,
}

pub fn prepare(ds: &CtsDataset, window: WindowConfig, ratio: [f64; 3]) -> Result<PreparedData, ForecastError> {
    let splits = split_and_normalize(ds, ratio, window.min_len())?;
    let mut series_means = vec![0.0; ds.n * ds.f];
    for i in 0..ds.n {
        for j in 0..ds.f {
            let s: f64 = (0..splits.train.len).map(|t| splits.train.value(i, t, j)).sum();
            series_means[i * ds.f + j] = s / splits.train.len as f64;
        }
    }
    Ok(PreparedData {
        config: DataConfig {
            n: ds.n,
            f: ds.f,
            p: window.p,
            q: window.q,
            mode: window.mode,
            adjacency: ds.adjacency.clone(),
            self_adaptive: true,
        },
        window,
        train: windowize(&splits.train, &window)?,
        val: windowize(&splits.val, &window)?,
        test: windowize(&splits.test, &window)?,
        scaler: splits.scaler,
        series_means,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Lowest validation error seen, including the untrained model.
    pub best_val_error: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub initial_val_error: f64,
    pub history: Vec<EpochRecord>,
}

fn stack(windows: &[&Window], dims: &[usize], target: bool) -> Tensor {
    let mut data = Vec::with_capacity(windows.len() * dims.iter().product::<usize>());
    for w in windows {
        data.extend_from_slice(if target { &w.target } else { &w.input });
    }
    let mut shape = vec![windows.len()];
    shape.extend_from_slice(dims);
    Tensor::new(shape, data).expect("window shape")
}

/// Indices of up to `cap` evenly spaced items out of `len`.
pub fn even_subset(len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(c) if c < len => (0..c).map(|k| k * len / c).collect(),
        _ => (0..len).collect(),
    }
}

const EVAL_BATCH: usize = 128;

/// Predictions (normalized units) for the chosen windows, `[windows, N, out_dim]` flattened.
fn predict_windows(model: &ForecastModel, windows: &[&Window]) -> Result<Vec<f64>, ForecastError> {
    let d = &model.data;
    let mut out = Vec::new();
    for chunk in windows.chunks(EVAL_BATCH) {
        let x = stack(chunk, &[d.n, d.p, d.f], false);
        out.extend(model.predict(&x)?.into_data());
    }
    Ok(out)
}

fn score(data: &PreparedData, windows: &[&Window], pred: &[f64]) -> Result<Metrics, ForecastError> {
    let f = data.config.f;
    let denorm = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(k, x)| data.scaler.inverse(k % f, *x))
            .collect()
    };
    let truth: Vec<f64> = windows.iter().flat_map(|w| w.target.iter().copied()).collect();
    let series = data.config.n * data.config.out_dim();
    evaluate_metrics(&denorm(pred), &denorm(&truth), series, data.window.mode)
}

fn eval_windows<'a>(all: &'a [Window], cfg: &TrainConfig) -> Vec<&'a Window> {
    even_subset(all.len(), cfg.max_eval_windows)
        .into_iter()
        .map(|i| &all[i])
        .collect()
}

/// Validation error in original units: MAE (multi-step) or RRSE (single-step).
pub fn validation_error(model: &ForecastModel, data: &PreparedData, cfg: &TrainConfig) -> Result<f64, ForecastError> {
    let windows = eval_windows(&data.val, cfg);
    Ok(score(data, &windows, &predict_windows(model, &windows)?)?.primary())
}

pub fn test_metrics(model: &ForecastModel, data: &PreparedData, cfg: &TrainConfig) -> Result<Metrics, ForecastError> {
    let windows = eval_windows(&data.test, cfg);
    score(data, &windows, &predict_windows(model, &windows)?)
}

/// Validation error of predicting each series' training mean at every step.
pub fn mean_predictor_error(data: &PreparedData, cfg: &TrainConfig) -> Result<f64, ForecastError> {
    let windows = eval_windows(&data.val, cfg);
    let (n, f) = (data.config.n, data.config.f);
    let steps = data.config.out_dim() / f;
    let mut pred = Vec::new();
    for _ in &windows {
        for i in 0..n {
            for _ in 0..steps {
                pred.extend_from_slice(&data.series_means[i * f..(i + 1) * f]);
            }
        }
    }
    Ok(score(data, &windows, &pred)?.primary())
}

/// Trains with MAE and Adam for up to `epochs` epochs, stopping early after
/// `cfg.patience` epochs without validation improvement. The model is left
/// holding its best-validation parameters.
pub fn train_model(
    model: &mut ForecastModel,
    data: &PreparedData,
    epochs: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, ForecastError> {
    let d = model.data.clone();
    let out_dim = d.out_dim();
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = validation_error(model, data, cfg)?;
    let mut best = (initial, 0, model.params.clone());
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=epochs {
        order.shuffle(&mut rng);
        let take = cfg.max_train_windows.unwrap_or(order.len()).min(order.len());
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order[..take].chunks(cfg.batch_size.max(1)).enumerate() {
            let windows: Vec<&Window> = chunk.iter().map(|&i| &data.train[i]).collect();
            let x = stack(&windows, &[d.n, d.p, d.f], false);
            let y = stack(&windows, &[d.n, out_dim], true);
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let xv = tape.leaf(x);
            let pred = model.forward(&mut tape, &vars, xv, Some(&mut rng))?;
            let loss = tape.mae_loss(pred, &y)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(ForecastError::NonFiniteLoss { epoch, batch: bi });
            }
            let grads = tape.backward(loss)?.for_params(&model.params);
            adam_step(&mut model.params, &grads, &mut state, &adam);
            loss_sum += lv;
            batches += 1;
        }
        if !model.params.all_finite() {
            return Err(ForecastError::NonFiniteLoss { epoch, batch: batches });
        }
        let val = validation_error(model, data, cfg)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_error: val,
        });
        if val < best.0 {
            best = (val, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_val_error, best_epoch, params) = best;
    model.params = params;
    Ok(TrainOutcome {
        best_val_error,
        best_epoch,
        epochs_run: history.len(),
        initial_val_error: initial,
        history,
    })
}
