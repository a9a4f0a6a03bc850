use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::data::ForecastMode;

/// Truth magnitudes below this are skipped by MAPE.
pub const MAPE_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metrics {
    Multi { mae: f64, rmse: f64, mape: f64 },
    Single { rrse: f64, corr: f64 },
}

impl Metrics {
    /// The headline error: MAE for multi-step, RRSE for single-step.
    pub fn primary(&self) -> f64 {
        match *self {
            Metrics::Multi { mae, .. } => mae,
            Metrics::Single { rrse, .. } => rrse,
        }
    }
}

/// Scores predictions against truth. Both are laid out `[samples, series]`
/// with `series` columns; CORR averages per-column Pearson correlations.
pub fn evaluate_metrics(pred: &[f64], truth: &[f64], series: usize, mode: ForecastMode) -> Result<Metrics, ForecastError> {
    if pred.len() != truth.len() || pred.is_empty() || series == 0 || truth.len() % series != 0 {
        return Err(ForecastError::Metric(format!(
            "prediction length {} vs truth length {} over {series} series",
            pred.len(),
            truth.len()
        )));
    }
    let n = truth.len() as f64;
    match mode {
        ForecastMode::Multi => {
            let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
            let rmse = (pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt();
            let (sum, count) = pred
                .iter()
                .zip(truth)
                .filter(|(_, t)| t.abs() >= MAPE_FLOOR)
                .fold((0.0, 0usize), |(s, c), (p, t)| (s + ((p - t) / t).abs(), c + 1));
            let mape = if count == 0 { 0.0 } else { sum / count as f64 };
            Ok(Metrics::Multi { mae, rmse, mape })
        }
        ForecastMode::Single => {
            let mean = truth.iter().sum::<f64>() / n;
            let denom = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>().sqrt();
            if denom == 0.0 {
                return Err(ForecastError::Metric("all series are constant; RRSE is undefined".into()));
            }
            let num = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
            let rows = truth.len() / series;
            let mut corr = 0.0;
            for s in 0..series {
                let col = |v: &[f64]| -> Vec<f64> { (0..rows).map(|r| v[r * series + s]).collect() };
                let (p, t) = (col(pred), col(truth));
                let (mp, mt) = (p.iter().sum::<f64>() / rows as f64, t.iter().sum::<f64>() / rows as f64);
                let vt: f64 = t.iter().map(|x| (x - mt).powi(2)).sum();
                if vt == 0.0 {
                    return Err(ForecastError::Metric(format!("series {s} is constant; CORR is undefined")));
                }
                let vp: f64 = p.iter().map(|x| (x - mp).powi(2)).sum();
                let cov: f64 = p.iter().zip(&t).map(|(a, b)| (a - mp) * (b - mt)).sum();
                if vp > 0.0 {
                    corr += cov / (vp * vt).sqrt();
                }
            }
            Ok(Metrics::Single {
                rrse: num / denom,
                corr: corr / series as f64,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions() {
        let t = [1.0, 2.0, 4.0, 3.0, 0.5, 7.0];
        let m = evaluate_metrics(&t, &t, 2, ForecastMode::Multi).unwrap();
        assert_eq!(m, Metrics::Multi { mae: 0.0, rmse: 0.0, mape: 0.0 });
        match evaluate_metrics(&t, &t, 2, ForecastMode::Single).unwrap() {
            Metrics::Single { rrse, corr } => {
                assert_eq!(rrse, 0.0);
                assert!((corr - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hand_values() {
        match evaluate_metrics(&[2.0, 2.0], &[1.0, 3.0], 1, ForecastMode::Multi).unwrap() {
            Metrics::Multi { mae, rmse, .. } => assert_eq!((mae, rmse), (1.0, 1.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mape_skips_zero_truth() {
        match evaluate_metrics(&[1.0, 3.0], &[0.0, 2.0], 1, ForecastMode::Multi).unwrap() {
            Metrics::Multi { mape, .. } => assert_eq!(mape, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_series_names_the_series() {
        let truth = [1.0, 5.0, 1.0, 6.0, 1.0, 7.0];
        let err = evaluate_metrics(&[0.0; 6], &truth, 2, ForecastMode::Single).unwrap_err();
        assert!(err.to_string().contains("series 0"), "{err}");
    }

    fn reference(pred: &[f64], truth: &[f64], series: usize) -> [f64; 5] {
        let n = pred.len();
        let mut abs = 0.0;
        let mut sq = 0.0;
        let mut pct = 0.0;
        for k in 0..n {
            let e = pred[k] - truth[k];
            abs += e.abs();
            sq += e * e;
            pct += (e / truth[k]).abs();
        }
        let mean: f64 = truth.iter().sum::<f64>() / n as f64;
        let mut tot = 0.0;
        for t in truth {
            tot += (t - mean) * (t - mean);
        }
        let rows = n / series;
        let mut corr = 0.0;
        for s in 0..series {
            let mut sp = 0.0;
            let mut st = 0.0;
            for r in 0..rows {
                sp += pred[r * series + s];
                st += truth[r * series + s];
            }
            sp /= rows as f64;
            st /= rows as f64;
            let (mut c, mut vp, mut vt) = (0.0, 0.0, 0.0);
            for r in 0..rows {
                let a = pred[r * series + s] - sp;
                let b = truth[r * series + s] - st;
                c += a * b;
                vp += a * a;
                vt += b * b;
            }
            corr += c / (vp.sqrt() * vt.sqrt());
        }
        [
            abs / n as f64,
            (sq / n as f64).sqrt(),
            pct / n as f64,
            sq.sqrt() / tot.sqrt(),
            corr / series as f64,
        ]
    }

    #[test]
    fn matches_reference_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let series = rng.random_range(1..5);
            let len = series * rng.random_range(3..20);
            let truth: Vec<f64> = (0..len).map(|_| rng.random_range(0.5..10.0)).collect();
            let pred: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..10.0)).collect();
            let r = reference(&pred, &truth, series);
            let Metrics::Multi { mae, rmse, mape } = evaluate_metrics(&pred, &truth, series, ForecastMode::Multi).unwrap()
            else {
                unreachable!()
            };
            let Metrics::Single { rrse, corr } = evaluate_metrics(&pred, &truth, series, ForecastMode::Single).unwrap()
            else {
                unreachable!()
            };
            for (a, b) in [mae, rmse, mape, rrse, corr].iter().zip(r) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }
}
