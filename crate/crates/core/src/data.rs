//! Correlated time series: CSV ingestion, synthetic generation, chronological
//! splits with train-only z-scoring, and sliding windows.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("header column {col} is {found:?}; expected columns named s{{i}}_f{{j}}")]
    Header { col: usize, found: String },
    #[error("row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("row {row} column {col}: {cell:?} is not a number")]
    NotNumeric { row: usize, col: usize, cell: String },
    #[error("adjacency is {rows}x{cols} but the values file has {series} series")]
    AdjacencyMismatch { rows: usize, cols: usize, series: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{split} split has {len} timestamps, fewer than the {needed} one window needs")]
    TooShort { split: &'static str, len: usize, needed: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub frequency: String,
}

/// `N` series of `T` timestamps with `F` features each, stored `[N, T, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtsDataset {
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub values: Vec<f64>,
    /// Row-major `N x N`, when a predefined graph exists.
    pub adjacency: Option<Vec<f64>>,
    pub split_ratio: [f64; 3],
    pub meta: DatasetMeta,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];

impl CtsDataset {
    pub fn new(n: usize, t: usize, f: usize, values: Vec<f64>, adjacency: Option<Vec<f64>>) -> Result<Self, DataError> {
        if n == 0 || t == 0 || f == 0 {
            return Err(DataError::Invalid(format!("dimensions must be positive, got N={n} T={t} F={f}")));
        }
        if values.len() != n * t * f {
            return Err(DataError::Invalid(format!(
                "{} values for N={n} T={t} F={f}",
                values.len()
            )));
        }
        if let Some(a) = &adjacency {
            if a.len() != n * n {
                return Err(DataError::AdjacencyMismatch {
                    rows: (a.len() as f64).sqrt() as usize,
                    cols: (a.len() as f64).sqrt() as usize,
                    series: n,
                });
            }
            if a.iter().any(|&w| w < 0.0 || !w.is_finite()) {
                return Err(DataError::Invalid("adjacency weights must be finite and non-negative".into()));
            }
        }
        Ok(Self {
            n,
            t,
            f,
            values,
            adjacency,
            split_ratio: DEFAULT_SPLIT,
            meta: DatasetMeta {
                name: "unnamed".into(),
                frequency: "unknown".into(),
            },
        })
    }

    pub fn value(&self, series: usize, time: usize, feature: usize) -> f64 {
        self.values[(series * self.t + time) * self.f + feature]
    }
}

/// Reads a `T x (N*F)` CSV with `s{i}_f{j}` headers and an optional
/// header-less `N x N` adjacency CSV.
pub fn load_csv(path: &Path, adjacency_path: Option<&Path>) -> Result<CtsDataset, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    let mut cols = Vec::with_capacity(headers.len());
    for (col, h) in headers.iter().enumerate() {
        cols.push(parse_header(h).ok_or_else(|| DataError::Header {
            col,
            found: h.to_string(),
        })?);
    }
    let n = cols.iter().map(|c| c.0).max().map_or(0, |m| m + 1);
    let f = cols.iter().map(|c| c.1).max().map_or(0, |m| m + 1);
    if cols.len() != n * f || cols.iter().enumerate().any(|(k, &(i, j))| (i, j) != (k / f, k % f)) {
        return Err(DataError::Header {
            col: 0,
            found: headers.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        if rec.len() != cols.len() {
            return Err(DataError::Ragged {
                row: r,
                found: rec.len(),
                expected: cols.len(),
            });
        }
        rows.push(parse_row(&rec, r)?);
    }
    let t = rows.len();
    let mut values = vec![0.0; n * t * f];
    for (time, row) in rows.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let (i, j) = (k / f, k % f);
            values[(i * t + time) * f + j] = *v;
        }
    }
    let adjacency = match adjacency_path {
        Some(p) => Some(load_adjacency(p, n)?),
        None => None,
    };
    let mut ds = CtsDataset::new(n, t, f, values, adjacency)?;
    ds.meta.name = path
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok(ds)
}

fn parse_header(h: &str) -> Option<(usize, usize)> {
    let rest = h.trim().strip_prefix('s')?;
    let (i, j) = rest.split_once("_f")?;
    Some((i.parse().ok()?, j.parse().ok()?))
}

fn parse_row(rec: &csv::StringRecord, row: usize) -> Result<Vec<f64>, DataError> {
    rec.iter()
        .enumerate()
        .map(|(col, cell)| {
            cell.trim().parse::<f64>().map_err(|_| DataError::NotNumeric {
                row,
                col,
                cell: cell.to_string(),
            })
        })
        .collect()
}

fn load_adjacency(path: &Path, n: usize) -> Result<Vec<f64>, DataError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut out = Vec::new();
    let mut rows = 0;
    let mut cols = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Csv(e.to_string()))?;
        if r == 0 {
            cols = rec.len();
        } else if rec.len() != cols {
            return Err(DataError::Ragged {
                row: r,
                found: rec.len(),
                expected: cols,
            });
        }
        out.extend(parse_row(&rec, r)?);
        rows += 1;
    }
    if rows != n || cols != n {
        return Err(DataError::AdjacencyMismatch { rows, cols, series: n });
    }
    Ok(out)
}

/// Writes the values CSV (and the adjacency CSV when a path is given).
pub fn save_csv(ds: &CtsDataset, path: &Path, adjacency_path: Option<&Path>) -> Result<(), DataError> {
    let mut out = String::new();
    let header: Vec<String> = (0..ds.n)
        .flat_map(|i| (0..ds.f).map(move |j| format!("s{i}_f{j}")))
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for time in 0..ds.t {
        let row: Vec<String> = (0..ds.n)
            .flat_map(|i| (0..ds.f).map(move |j| (i, j)))
            .map(|(i, j)| ds.value(i, time, j).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    File::create(path)
        .and_then(|mut fh| fh.write_all(out.as_bytes()))
        .map_err(io_err(path))?;
    if let (Some(p), Some(a)) = (adjacency_path, &ds.adjacency) {
        let text: String = a
            .chunks(ds.n)
            .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(",") + "\n")
            .collect();
        std::fs::write(p, text).map_err(io_err(p))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub seed: u64,
    /// Weight of the lagged neighbour average, in `[0, 1]`.
    pub coupling: f64,
    pub seasonal_amplitude: f64,
    pub noise_sigma: f64,
    pub ar_coef: f64,
    pub daily_period: f64,
    pub weekly_period: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 8,
            t: 2000,
            f: 1,
            seed: 17,
            coupling: 0.5,
            seasonal_amplitude: 1.0,
            noise_sigma: 0.25,
            ar_coef: 0.5,
            daily_period: 24.0,
            weekly_period: 168.0,
        }
    }
}

/// Strength of neighbour feedback at `coupling = 1`; keeps the noise process
/// stationary together with `ar_coef`.
const NEIGHBOUR_GAIN: f64 = 0.4;

/// Seasonal mixture plus coupled AR(1) noise over a ring-with-chords graph.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<CtsDataset, DataError> {
    if !(0.0..=1.0).contains(&cfg.coupling) {
        return Err(DataError::Invalid(format!("coupling {} outside [0, 1]", cfg.coupling)));
    }
    if cfg.ar_coef.abs() + NEIGHBOUR_GAIN >= 1.0 + f64::EPSILON && cfg.coupling > 0.0 {
        return Err(DataError::Invalid(format!("ar_coef {} makes the process unstable", cfg.ar_coef)));
    }
    let (n, t, f) = (cfg.n, cfg.t, cfg.f);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adjacency = ring_with_chords(n, &mut rng);
    let neighbours: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| adjacency[i * n + j] > 0.0).collect())
        .collect();
    let tau = std::f64::consts::TAU;
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut values = vec![0.0; n * t * f];
    for j in 0..f {
        let params: Vec<[f64; 5]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(0.6..1.4),
                    rng.random_range(0.2..0.6),
                    rng.random_range(0.0..tau),
                    rng.random_range(0.0..tau),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let mut z = vec![0.0; n];
        for time in 0..t {
            let prev = z.clone();
            for i in 0..n {
                let nb = if neighbours[i].is_empty() {
                    0.0
                } else {
                    neighbours[i].iter().map(|&k| prev[k]).sum::<f64>() / neighbours[i].len() as f64
                };
                z[i] = cfg.ar_coef * prev[i] + noise.sample(&mut rng) + cfg.coupling * NEIGHBOUR_GAIN * nb;
                let [a1, a2, p1, p2, level] = params[i];
                let tt = time as f64;
                let seasonal = a1 * (tau * tt / cfg.daily_period + p1).sin() + a2 * (tau * tt / cfg.weekly_period + p2).sin();
                values[(i * t + time) * f + j] = cfg.seasonal_amplitude * (level + seasonal) + z[i];
            }
        }
    }
    let mut ds = CtsDataset::new(n, t, f, values, Some(adjacency))?;
    ds.meta = DatasetMeta {
        name: format!("synthetic-{}", cfg.seed),
        frequency: "5min".into(),
    };
    Ok(ds)
}

fn ring_with_chords(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    let mut link = |i: usize, j: usize| {
        if i != j {
            a[i * n + j] = 1.0;
            a[j * n + i] = 1.0;
        }
    };
    for i in 0..n {
        link(i, (i + 1) % n);
    }
    for _ in 0..n / 4 {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        link(i, j);
    }
    a
}

/// Per-feature z-score statistics fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn transform(&self, feature: usize, v: f64) -> f64 {
        (v - self.mean[feature]) / self.std[feature]
    }

    pub fn inverse(&self, feature: usize, v: f64) -> f64 {
        v * self.std[feature] + self.mean[feature]
    }
}

/// A contiguous chronological slice, values `[N, len, F]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSplit {
    pub n: usize,
    pub f: usize,
    pub len: usize,
    /// Absolute index of the first timestamp.
    pub start: usize,
    pub values: Vec<f64>,
}

impl SeriesSplit {
    pub fn value(&self, series: usize, time: usize, feature: usize) -> f64 {
        self.values[(series * self.len + time) * self.f + feature]
    }
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: SeriesSplit,
    pub val: SeriesSplit,
    pub test: SeriesSplit,
    pub scaler: Scaler,
}

/// Chronological split by `ratio`, z-scored with train statistics. Every
/// split must hold at least `min_len` timestamps.
pub fn split_and_normalize(ds: &CtsDataset, ratio: [f64; 3], min_len: usize) -> Result<Splits, DataError> {
    let total: f64 = ratio.iter().sum();
    if (total - 1.0).abs() > 1e-9 || ratio.iter().any(|&r| r < 0.0) {
        return Err(DataError::Invalid(format!("split ratio {ratio:?} must be non-negative and sum to 1")));
    }
    let n_train = (ds.t as f64 * ratio[0]).round() as usize;
    let n_val = (ds.t as f64 * ratio[1]).round() as usize;
    let n_test = ds.t.saturating_sub(n_train + n_val);
    for (name, len) in [("train", n_train), ("validation", n_val), ("test", n_test)] {
        if len < min_len {
            return Err(DataError::TooShort {
                split: name,
                len,
                needed: min_len,
            });
        }
    }
    let mut mean = vec![0.0; ds.f];
    let mut std = vec![0.0; ds.f];
    let count = (ds.n * n_train) as f64;
    for j in 0..ds.f {
        let vals = (0..ds.n).flat_map(|i| (0..n_train).map(move |t| (i, t)));
        let m = vals.clone().map(|(i, t)| ds.value(i, t, j)).sum::<f64>() / count;
        let var = vals.map(|(i, t)| (ds.value(i, t, j) - m).powi(2)).sum::<f64>() / count;
        mean[j] = m;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let scaler = Scaler { mean, std };
    let take = |start: usize, len: usize| {
        let mut values = Vec::with_capacity(ds.n * len * ds.f);
        for i in 0..ds.n {
            for t in start..start + len {
                for j in 0..ds.f {
                    values.push(scaler.transform(j, ds.value(i, t, j)));
                }
            }
        }
        SeriesSplit {
            n: ds.n,
            f: ds.f,
            len,
            start,
            values,
        }
    };
    Ok(Splits {
        train: take(0, n_train),
        val: take(n_train, n_val),
        test: take(n_train + n_val, n_test),
        scaler,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForecastMode {
    Multi,
    Single,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub p: usize,
    pub q: usize,
    pub mode: ForecastMode,
    /// Future step predicted in single-step mode (1-based).
    pub single_target_offset: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            p: 12,
            q: 12,
            mode: ForecastMode::Multi,
            single_target_offset: 3,
        }
    }
}

impl WindowConfig {
    pub fn horizon(&self) -> usize {
        match self.mode {
            ForecastMode::Multi => self.q,
            ForecastMode::Single => self.single_target_offset,
        }
    }

    /// Number of target steps per series.
    pub fn target_steps(&self) -> usize {
        match self.mode {
            ForecastMode::Multi => self.q,
            ForecastMode::Single => 1,
        }
    }

    pub fn min_len(&self) -> usize {
        self.p + self.horizon()
    }
}

/// One training example: `input` is `[N, P, F]`, `target` is `[N, Q, F]`
/// (multi-step) or `[N, F]` (single-step).
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    /// Absolute timestamp of the first input step.
    pub start: usize,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Stride-1 sliding windows over a split.
pub fn windowize(split: &SeriesSplit, w: &WindowConfig) -> Result<Vec<Window>, DataError> {
    if w.p == 0 || w.horizon() == 0 {
        return Err(DataError::Invalid("window input length and horizon must be positive".into()));
    }
    let needed = w.min_len();
    if split.len < needed {
        return Err(DataError::TooShort {
            split: "windowed",
            len: split.len,
            needed,
        });
    }
    let count = split.len - needed + 1;
    let (n, f) = (split.n, split.f);
    let steps: Vec<usize> = match w.mode {
        ForecastMode::Multi => (1..=w.q).collect(),
        ForecastMode::Single => vec![w.single_target_offset],
    };
    Ok((0..count)
        .map(|s| {
            let mut input = Vec::with_capacity(n * w.p * f);
            let mut target = Vec::with_capacity(n * steps.len() * f);
            for i in 0..n {
                for t in s..s + w.p {
                    for j in 0..f {
                        input.push(split.value(i, t, j));
                    }
                }
                for &k in &steps {
                    for j in 0..f {
                        target.push(split.value(i, s + w.p - 1 + k, j));
                    }
                }
            }
            Window {
                start: split.start + s,
                input,
                target,
            }
        })
        .collect())
}
