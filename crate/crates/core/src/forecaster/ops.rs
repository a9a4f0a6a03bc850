use rand::Rng;

use super::ForecastError;
use crate::autodiff::{ParamId, ParamSet, Tape, Var};
use crate::searchspace::OperatorKind;

/// Taps of the gated causal convolution.
pub const GDCC_KERNEL: usize = 2;
/// Diffusion steps `S` of the graph convolution.
pub const DIFFUSION_STEPS: usize = 2;

/// Per-edge operator weights. Shapes depend only on the kind, the width `H`,
/// the kernel size and the diffusion steps.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorParams {
    /// `w: [K*H, 2H]` holds filter and gate kernels side by side.
    Gdcc { w: ParamId, b: ParamId, dilation: usize },
    /// `w: [(2S+2)*H, H]`: forward blocks `W_0..W_S`, then backward blocks.
    Dgcn { w: ParamId, steps: usize },
    Attention {
        q: ParamId,
        k: ParamId,
        v: ParamId,
        o: ParamId,
        over_series: bool,
    },
    Identity,
}

/// Row-stochastic forward and backward transition matrices, both `[N, N]`.
#[derive(Clone, Copy, Debug)]
pub struct Supports {
    pub forward: Var,
    pub backward: Var,
}

impl OperatorParams {
    pub fn init<R: Rng>(
        kind: OperatorKind,
        h: usize,
        block: usize,
        prefix: &str,
        params: &mut ParamSet,
        rng: &mut R,
    ) -> Self {
        match kind {
            OperatorKind::Gdcc => Self::Gdcc {
                w: params.add_uniform(format!("{prefix}.gdcc.w"), &[GDCC_KERNEL * h, 2 * h], GDCC_KERNEL * h, rng),
                b: params.add_uniform(format!("{prefix}.gdcc.b"), &[2 * h], GDCC_KERNEL * h, rng),
                dilation: 1 << block,
            },
            OperatorKind::Dgcn => {
                let rows = (2 * DIFFUSION_STEPS + 2) * h;
                Self::Dgcn {
                    w: params.add_uniform(format!("{prefix}.dgcn.w"), &[rows, h], rows, rng),
                    steps: DIFFUSION_STEPS,
                }
            }
            OperatorKind::InfT | OperatorKind::InfS => {
                let mut proj = |tag: &str| params.add_uniform(format!("{prefix}.attn.{tag}"), &[h, h], h, rng);
                let (q, k, v, o) = (proj("q"), proj("k"), proj("v"), proj("o"));
                Self::Attention {
                    q,
                    k,
                    v,
                    o,
                    over_series: kind == OperatorKind::InfS,
                }
            }
            OperatorKind::Identity => Self::Identity,
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            Self::Gdcc { .. } => OperatorKind::Gdcc,
            Self::Dgcn { .. } => OperatorKind::Dgcn,
            Self::Attention { over_series: false, .. } => OperatorKind::InfT,
            Self::Attention { over_series: true, .. } => OperatorKind::InfS,
            Self::Identity => OperatorKind::Identity,
        }
    }
}

/// Applies one operator to `x: [batch, N, P, H]`, preserving the shape.
/// `vars` holds the tape bindings of the whole parameter set, in id order.
pub fn operator_forward(
    tape: &mut Tape,
    op: &OperatorParams,
    vars: &[Var],
    x: Var,
    supports: Option<&Supports>,
) -> Result<Var, ForecastError> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 4 {
        return Err(ForecastError::Build(format!("operator input must be 4-D, got {shape:?}")));
    }
    let h = shape[3];
    let v = |id: &ParamId| vars[id.index()];
    Ok(match op {
        OperatorParams::Gdcc { w, b, dilation } => {
            let mut taps = vec![x];
            for j in 1..GDCC_KERNEL {
                taps.push(tape.shift(x, 2, j * dilation)?);
            }
            let cat = tape.concat_last(&taps)?;
            let z = tape.matmul(cat, v(w))?;
            let z = tape.add_bias(z, v(b))?;
            let filter = tape.narrow(z, 3, 0, h)?;
            let gate = tape.narrow(z, 3, h, h)?;
            let filter = tape.tanh(filter);
            let gate = tape.sigmoid(gate);
            tape.mul(filter, gate)?
        }
        OperatorParams::Dgcn { w, steps } => {
            let sup = supports.ok_or_else(|| ForecastError::Build("DGCN needs an adjacency source".into()))?;
            let mut terms = Vec::with_capacity(2 * steps + 2);
            for p in [sup.forward, sup.backward] {
                let mut cur = x;
                terms.push(cur);
                for _ in 0..*steps {
                    cur = tape.mix_rows(p, cur)?;
                    terms.push(cur);
                }
            }
            let cat = tape.concat_last(&terms)?;
            tape.matmul(cat, v(w))?
        }
        OperatorParams::Attention { q, k, v: val, o, over_series } => {
            if *over_series && supports.is_none() {
                return Err(ForecastError::Build("INF_S needs an adjacency source".into()));
            }
            let xs = if *over_series { tape.swap_axes12(x)? } else { x };
            let s = tape.shape(xs).to_vec();
            let flat = tape.reshape(xs, &[s[0] * s[1], s[2], h])?;
            let qv = tape.matmul(flat, v(q))?;
            let kv = tape.matmul(flat, v(k))?;
            let vv = tape.matmul(flat, v(val))?;
            let scores = tape.bmm(qv, kv, true)?;
            let scores = tape.scale(scores, 1.0 / (h as f64).sqrt());
            let att = tape.softmax_last(scores, !over_series)?;
            let mixed = tape.bmm(att, vv, false)?;
            let out = tape.matmul(mixed, v(o))?;
            let out = tape.reshape(out, &s)?;
            if *over_series {
                tape.swap_axes12(out)?
            } else {
                out
            }
        }
        OperatorParams::Identity => x,
    })
}
