use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Compares tape gradients against central differences.
///
/// `f` must build a deterministic scalar loss on the tape it is given.
/// Returns the largest `|analytic - numeric| / max(1, |analytic| + |numeric|)`
/// over every entry of every trainable parameter.
pub fn finite_difference_check<F>(params: &mut ParamStore, eps: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    finite_difference_check_with(params, eps, |_| true, f)
}

/// Like [`finite_difference_check`], restricted to parameters whose name
/// passes `select`.
pub fn finite_difference_check_with<S, F>(
    params: &mut ParamStore,
    eps: f64,
    select: S,
    f: F,
) -> Result<f64>
where
    S: Fn(&str) -> bool,
    F: Fn(&mut Tape) -> Result<Var>,
{
    Ok(gradient_report(params, eps, select, f)?.max_mixed)
}

/// Error summary of one finite-difference comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradReport {
    /// Entries compared.
    pub entries: usize,
    /// Largest `|a - n| / max(|a|, |n|, 1e-6)`.
    pub max_relative: f64,
    /// Largest `|a - n| / max(1, |a| + |n|)`.
    pub max_mixed: f64,
    pub max_absolute: f64,
}

/// Central differences for every entry of the selected trainable
/// parameters, compared with the tape gradient.
pub fn gradient_report<S, F>(params: &mut ParamStore, eps: f64, select: S, f: F) -> Result<GradReport>
where
    S: Fn(&str) -> bool,
    F: Fn(&mut Tape) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let grads = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |params: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).item())
    };

    let ids: Vec<_> = params
        .iter()
        .filter(|(_, p)| p.requires_grad && select(&p.name))
        .map(|(id, _)| id)
        .collect();
    let mut report = GradReport::default();
    for id in ids {
        let len = params.value(id).len();
        let analytic = grads.dense(id, len).unwrap_or_else(|| vec![0.0; len]);
        for (idx, &a) in analytic.iter().enumerate() {
            let orig = params.value(id).data()[idx];
            params.get_mut(id).value.data_mut()[idx] = orig + eps;
            let up = eval(params)?;
            params.get_mut(id).value.data_mut()[idx] = orig - eps;
            let down = eval(params)?;
            params.get_mut(id).value.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let diff = (a - numeric).abs();
            let diff = if diff.is_nan() { f64::INFINITY } else { diff };
            report.entries += 1;
            report.max_absolute = report.max_absolute.max(diff);
            report.max_mixed = report.max_mixed.max(diff / (a.abs() + numeric.abs()).max(1.0));
            report.max_relative = report.max_relative.max(diff / a.abs().max(numeric.abs()).max(1e-6));
        }
    }
    Ok(report)
}
