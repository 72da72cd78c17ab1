use crate::error::{Error, Result};
use crate::neural::autoencoder::{mse_loss, Autoencoder, GradientSet};

/// Analytic gradients count as "near zero" below this magnitude; such
/// coordinates are compared absolutely instead of relatively.
pub const NEAR_ZERO: f64 = 1e-6;

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|)` over
    /// coordinates where either magnitude reaches [`NEAR_ZERO`].
    pub max_relative: f64,
    /// Worst `|analytic - numeric|` over coordinates where both magnitudes
    /// fall below [`NEAR_ZERO`].
    pub max_absolute_near_zero: f64,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64, abs_tol: f64) -> bool {
        self.max_relative < rel_tol && self.max_absolute_near_zero < abs_tol
    }
}

/// Compare `analytic` against central finite differences of `loss` taken
/// over every parameter of `ae`. The closure must be a pure function of the
/// parameters; it is re-evaluated twice per parameter.
pub fn check_gradients(
    ae: &mut Autoencoder,
    analytic: &GradientSet,
    mut loss: impl FnMut(&Autoencoder) -> Result<f64>,
    epsilon: f64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "gradient-check epsilon must lie in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let mut report = GradCheckReport {
        max_relative: 0.0,
        max_absolute_near_zero: 0.0,
        params_checked: ae.param_count(),
    };
    for i in 0..ae.param_count() {
        let original = ae.param(i);
        ae.set_param(i, original + epsilon);
        let up = loss(ae)?;
        ae.set_param(i, original - epsilon);
        let down = loss(ae)?;
        ae.set_param(i, original);
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic.flat(i);
        let diff = (a - numeric).abs();
        let magnitude = a.abs().max(numeric.abs());
        if magnitude < NEAR_ZERO {
            report.max_absolute_near_zero = report.max_absolute_near_zero.max(diff);
        } else {
            report.max_relative = report.max_relative.max(diff / magnitude);
        }
    }
    Ok(report)
}

/// Gradient check of the single-sample reconstruction MSE: the analytic
/// backward pass against central differences of forward-only evaluations.
pub fn finite_diff_check(ae: &Autoencoder, input: &[f64], epsilon: f64) -> Result<GradCheckReport> {
    let mut work = ae.clone();
    let batch = [input.to_vec()];
    let (_, analytic) = work.reconstruction_grads(&batch)?;
    check_gradients(
        &mut work,
        &analytic,
        |m| mse_loss(input, &m.reconstruct(input)?),
        epsilon,
    )
}
