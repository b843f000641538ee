//! Central finite-difference verification of analytic gradients.
//!
//! Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, FLOOR)`;
//! the floor keeps entries whose true gradient is ~0 from being judged on
//! round-off alone.

use super::param::Parameterized;

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-4;
/// Above this many parameters, a deterministic stride subsample is checked.
pub const MAX_CHECKED: usize = 3000;

#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// `accumulate` must run a forward pass and backpropagate the loss computed by
/// `loss` into the model's gradient buffers.
pub fn check_param_gradients<M: Parameterized>(
    model: &mut M,
    accumulate: impl Fn(&mut M),
    loss: impl Fn(&M) -> f64,
) -> GradReport {
    model.zero_grad();
    accumulate(model);
    let analytic = model.flat_grads();
    model.zero_grad();
    let n = analytic.len();
    let stride = n.div_ceil(MAX_CHECKED).max(1);
    let mut report = GradReport { checked: 0, max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 };
    for idx in (0..n).step_by(stride) {
        model.nudge(idx, FD_STEP);
        let plus = loss(model);
        model.nudge(idx, -2.0 * FD_STEP);
        let minus = loss(model);
        model.nudge(idx, FD_STEP);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = rel_error(analytic[idx], numeric);
        report.checked += 1;
        if err > report.max_rel_error {
            report = GradReport { max_rel_error: err, worst_index: idx, analytic: analytic[idx], numeric, ..report };
        }
    }
    report
}

/// Maximum relative error between `analytic` and central differences of `f`
/// with respect to `x`.
pub fn check_input_gradient(x: &[f64], analytic: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        probe[k] = x[k] + FD_STEP;
        let plus = f(&probe);
        probe[k] = x[k] - FD_STEP;
        let minus = f(&probe);
        probe[k] = x[k];
        worst = worst.max(rel_error(analytic[k], (plus - minus) / (2.0 * FD_STEP)));
    }
    worst
}
