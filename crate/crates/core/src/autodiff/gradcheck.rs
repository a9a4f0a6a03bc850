use super::{AutodiffError, ParamSet, Tape, Var};

/// Default central-difference step.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

fn eval<F>(params: &ParamSet, f: &F) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.ids().map(|id| tape.param(params, id)).collect();
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss).item())
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences. Returns the largest `|analytic - numeric| / max(1e-8, |numeric|)`.
pub fn grad_check<F>(params: &ParamSet, f: F, eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.ids().map(|id| tape.param(params, id)).collect();
    let loss = f(&mut tape, &vars)?;
    let analytic = tape.backward(loss)?.for_params(params);

    let mut worst = 0.0_f64;
    let mut probe = params.clone();
    for id in params.ids() {
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            probe.get_mut(id).data_mut()[j] = orig + eps;
            let up = eval(&probe, &f)?;
            probe.get_mut(id).data_mut()[j] = orig - eps;
            let down = eval(&probe, &f)?;
            probe.get_mut(id).data_mut()[j] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(AutodiffError::NonFinite(format!(
                    "grad_check probe of parameter {} coordinate {j}",
                    id.index()
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[id.index()].data()[j];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1e-8));
        }
    }
    Ok(worst)
}
