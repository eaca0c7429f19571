//! Finite-difference gradient checking.
//!
//! The checker re-evaluates a loss function from scratch at perturbed
//! parameter values, so it shares no code path with [`crate::tape`]'s
//! backward rules: central differences are the independent oracle.

use crate::error::Result;
use crate::optim::ParamSet;
use crate::tensor::Tensor;

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub worst_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares analytic gradients against central finite differences.
///
/// `loss_fn` must rebuild the full forward pass from the given parameters
/// and return the scalar loss. `analytic` maps parameter name to gradient
/// tensor. Relative error uses |a - n| / max(1e-5, |a| + |n|) per
/// coordinate: the usual symmetric normalization, with a floor that turns
/// the check absolute for coordinates below the noise floor of central
/// differences at step 1e-5.
pub fn finite_diff_check(
    params: &ParamSet,
    analytic: &std::collections::BTreeMap<String, Tensor>,
    step: f64,
    mut loss_fn: impl FnMut(&ParamSet) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        worst_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        checked: 0,
    };
    for (name, grad) in analytic {
        let base = params.get(name).clone();
        for idx in 0..base.numel() {
            let mut plus = base.data().to_vec();
            plus[idx] += step;
            let mut minus = base.data().to_vec();
            minus[idx] -= step;

            let mut p_plus = params.clone();
            p_plus.set(name, Tensor::new(base.shape().to_vec(), plus));
            let mut p_minus = params.clone();
            p_minus.set(name, Tensor::new(base.shape().to_vec(), minus));

            let numeric = (loss_fn(&p_plus)? - loss_fn(&p_minus)?) / (2.0 * step);
            let a = grad.data()[idx];
            let rel = (a - numeric).abs() / f64::max(1e-5, a.abs() + numeric.abs());
            report.checked += 1;
            if rel > report.worst_rel_error {
                report.worst_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
            }
        }
    }
    Ok(report)
}
