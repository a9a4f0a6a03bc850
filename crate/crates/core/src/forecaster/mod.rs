//! Trainable CTS forecaster instantiated from an arch-hyper: an input
//! projection, `B` stacked ST-blocks and a two-layer output head.

pub mod metrics;
mod ops;
pub mod train;


use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{evaluate_metrics, Metrics};
pub use ops::{operator_forward, OperatorParams, Supports, DIFFUSION_STEPS, GDCC_KERNEL};
pub use train::{
    even_subset, mean_predictor_error, prepare, test_metrics, train_model, validation_error, EpochRecord,
    PreparedData, TrainConfig, TrainOutcome,
};

use crate::autodiff::{AutodiffError, ParamId, ParamSet, Tape, Tensor, Var};
use crate::data::{DataError, ForecastMode};
use crate::searchspace::{ArchHyper, Edge, OperatorKind};

/// Dropout rate applied after every operator when `delta = 1`.
pub const DROPOUT_RATE: f64 = 0.3;
/// Embedding width of the self-adaptive adjacency.
pub const ADAPTIVE_DIM: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("cannot build model: {0}")]
    Build(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("metric undefined: {0}")]
    Metric(String),
}

/// Shape of the forecasting task a model is built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n: usize,
    pub f: usize,
    pub p: usize,
    pub q: usize,
    pub mode: ForecastMode,
    /// Row-major `N x N` predefined graph.
    pub adjacency: Option<Vec<f64>>,
    /// Learn `softmax(relu(E1 E2^T))` when no predefined graph exists.
    pub self_adaptive: bool,
}

impl DataConfig {
    /// Output values per series: `Q*F` (multi-step) or `F` (single-step).
    pub fn out_dim(&self) -> usize {
        match self.mode {
            ForecastMode::Multi => self.q * self.f,
            ForecastMode::Single => self.f,
        }
    }
}

#[derive(Clone, Debug)]
enum GraphSource {
    None,
    Predefined { forward: Tensor, backward: Tensor },
    Adaptive { e1: ParamId, e2: ParamId },
}

#[derive(Clone, Debug)]
pub struct ForecastModel {
    pub ah: ArchHyper,
    pub data: DataConfig,
    pub params: ParamSet,
    input: (ParamId, ParamId),
    blocks: Vec<Vec<(Edge, OperatorParams)>>,
    head: [ParamId; 4],
    graph: GraphSource,
}

fn row_normalize(a: &[f64], n: usize, transpose: bool) -> Tensor {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if transpose { a[j * n + i] } else { a[i * n + j] };
        }
        let s: f64 = out[i * n..(i + 1) * n].iter().sum();
        if s > 0.0 {
            out[i * n..(i + 1) * n].iter_mut().for_each(|v| *v /= s);
        }
    }
    Tensor::new(vec![n, n], out).expect("square")
}

pub fn build_model(ah: &ArchHyper, data: &DataConfig, seed: u64) -> Result<ForecastModel, ForecastError> {
    let hy = ah.hyper;
    let c = ah.arch.num_nodes;
    if c % 2 == 0 || c as u32 != hy.c {
        return Err(ForecastError::Build(format!(
            "node count C={} must be odd and match the DAG ({c} nodes)",
            hy.c
        )));
    }
    if hy.u > 1 || hy.delta > 1 || hy.b == 0 || hy.h == 0 || hy.i == 0 {
        return Err(ForecastError::Build(format!("hyperparameters out of range: {:?}", hy.to_array())));
    }
    if data.n == 0 || data.f == 0 || data.p == 0 || data.out_dim() == 0 {
        return Err(ForecastError::Build(format!("empty data shape {data:?}")));
    }
    let (h, width) = (hy.h as usize, hy.i as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let needs_graph = ah
        .arch
        .edges
        .iter()
        .any(|e| matches!(e.op, OperatorKind::Dgcn | OperatorKind::InfS));
    let graph = match (&data.adjacency, data.self_adaptive) {
        (Some(a), _) => {
            if a.len() != data.n * data.n {
                return Err(ForecastError::Build(format!(
                    "adjacency has {} entries for N={}",
                    a.len(),
                    data.n
                )));
            }
            GraphSource::Predefined {
                forward: row_normalize(a, data.n, false),
                backward: row_normalize(a, data.n, true),
            }
        }
        (None, true) if needs_graph => GraphSource::Adaptive {
            e1: params.add_uniform("graph.e1", &[data.n, ADAPTIVE_DIM], ADAPTIVE_DIM, &mut rng),
            e2: params.add_uniform("graph.e2", &[data.n, ADAPTIVE_DIM], ADAPTIVE_DIM, &mut rng),
        },
        (None, _) if needs_graph => {
            return Err(ForecastError::Build(
                "DGCN/INF_S need a predefined adjacency or the self-adaptive graph".into(),
            ))
        }
        _ => GraphSource::None,
    };
    let input = (
        params.add_uniform("input.w", &[data.f, h], data.f, &mut rng),
        params.add_uniform("input.b", &[h], data.f, &mut rng),
    );
    let blocks = (0..hy.b as usize)
        .map(|bi| {
            ah.arch
                .edges
                .iter()
                .map(|e| {
                    let prefix = format!("block{bi}.e{}_{}", e.src, e.dst);
                    (*e, OperatorParams::init(e.op, h, bi, &prefix, &mut params, &mut rng))
                })
                .collect()
        })
        .collect();
    let out = data.out_dim();
    let head = [
        params.add_uniform("head.w1", &[h, width], h, &mut rng),
        params.add_uniform("head.b1", &[width], h, &mut rng),
        params.add_uniform("head.w2", &[width, out], width, &mut rng),
        params.add_uniform("head.b2", &[out], width, &mut rng),
    ];
    Ok(ForecastModel {
        ah: ah.clone(),
        data: data.clone(),
        params,
        input,
        blocks,
        head,
        graph,
    })
}

/// Number of trainable scalars of the model `ah` would build.
pub fn param_count(ah: &ArchHyper, data: &DataConfig) -> Result<usize, ForecastError> {
    Ok(build_model(ah, data, 0)?.params.numel())
}

impl ForecastModel {
    /// Binds every parameter to the tape, in id order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.ids().map(|id| tape.param(&self.params, id)).collect()
    }

    pub fn supports(&self, tape: &mut Tape, vars: &[Var]) -> Result<Option<Supports>, ForecastError> {
        Ok(match &self.graph {
            GraphSource::None => None,
            GraphSource::Predefined { forward, backward } => Some(Supports {
                forward: tape.leaf(forward.clone()),
                backward: tape.leaf(backward.clone()),
            }),
            GraphSource::Adaptive { e1, e2 } => {
                let (e1, e2) = (vars[e1.index()], vars[e2.index()]);
                let t2 = tape.transpose(e2)?;
                let logits = tape.matmul(e1, t2)?;
                let logits = tape.relu(logits);
                let forward = tape.softmax_last(logits, false)?;
                let t1 = tape.transpose(e1)?;
                let logits_t = tape.matmul(e2, t1)?;
                let logits_t = tape.relu(logits_t);
                let backward = tape.softmax_last(logits_t, false)?;
                Some(Supports { forward, backward })
            }
        })
    }

    /// Maps `x: [batch, N, P, F]` to predictions `[batch, N, out_dim]`.
    /// Dropout is active only when an rng is supplied and `delta = 1`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ForecastError> {
        let state = self.backbone(tape, vars, x, dropout)?;
        let d = &self.data;
        let b = tape.shape(state)[0];
        let h = self.ah.hyper.h as usize;
        let last = tape.narrow(state, 2, d.p - 1, 1)?;
        let last = tape.reshape(last, &[b, d.n, h])?;
        let z = tape.relu(last);
        let [w1, b1, w2, b2] = self.head.map(|id| vars[id.index()]);
        let z = tape.matmul(z, w1)?;
        let z = tape.add_bias(z, b1)?;
        let z = tape.relu(z);
        let z = tape.matmul(z, w2)?;
        Ok(tape.add_bias(z, b2)?)
    }

    /// Input projection followed by the stacked ST-blocks: `[batch, N, P, H]`.
    pub fn backbone(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Var, ForecastError> {
        let shape = tape.shape(x).to_vec();
        let d = &self.data;
        if shape.len() != 4 || shape[1] != d.n || shape[2] != d.p || shape[3] != d.f {
            return Err(ForecastError::Build(format!(
                "input {shape:?} does not match [batch, {}, {}, {}]",
                d.n, d.p, d.f
            )));
        }
        let supports = self.supports(tape, vars)?;
        let z = tape.matmul(x, vars[self.input.0.index()])?;
        let mut state = tape.add_bias(z, vars[self.input.1.index()])?;
        let c = self.ah.arch.num_nodes;
        let use_dropout = self.ah.hyper.delta == 1;
        for block in &self.blocks {
            let mut nodes: Vec<Option<Var>> = vec![None; c];
            nodes[0] = Some(state);
            for (edge, op) in block {
                let src = nodes[edge.src]
                    .ok_or_else(|| ForecastError::Build(format!("node {} has no input", edge.src)))?;
                let mut out = operator_forward(tape, op, vars, src, supports.as_ref())?;
                if let (true, Some(rng)) = (use_dropout, dropout.as_deref_mut()) {
                    let mask = dropout_mask(tape.shape(out), rng);
                    out = tape.mul_const(out, &mask)?;
                }
                nodes[edge.dst] = Some(match nodes[edge.dst] {
                    Some(acc) => tape.add(acc, out)?,
                    None => out,
                });
            }
            let picked: Vec<Var> = if self.ah.hyper.u == 0 {
                vec![nodes[c - 1].ok_or_else(|| ForecastError::Build("last node unreachable".into()))?]
            } else {
                (1..c).step_by(2).filter_map(|j| nodes[j]).collect()
            };
            let mut out = picked[0];
            for &v in &picked[1..] {
                out = tape.add(out, v)?;
            }
            state = tape.add(state, out)?;
        }
        Ok(state)
    }

    /// Operator parameters of every edge, block by block.
    pub fn operators(&self) -> impl Iterator<Item = &(Edge, OperatorParams)> {
        self.blocks.iter().flatten()
    }

    /// Inference without dropout; returns `[batch, N, out_dim]` values.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor, ForecastError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let y = self.forward(&mut tape, &vars, xv, None)?;
        Ok(tape.value(y).clone())
    }
}

/// Inverted-dropout mask: zeros with probability [`DROPOUT_RATE`], survivors
/// scaled by `1 / (1 - rate)`.
fn dropout_mask(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let keep = 1.0 - DROPOUT_RATE;
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("mask shape")
}
