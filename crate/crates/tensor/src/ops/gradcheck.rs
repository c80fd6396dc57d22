//! Central finite-difference gradient checking.

use crate::{Tensor, Var};

/// Denominator floor for the relative error, so that gradients which are
/// both (numerically) zero do not produce spurious failures.
pub const REL_ERR_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// `(input index, element index)` of the worst entry.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare analytic gradients of the scalar `f(inputs)` against central
/// differences with the given step. `select(input, element)` decides which
/// entries are perturbed (all when it always returns true).
pub fn finite_difference_report(
    inputs: &[Tensor],
    f: impl Fn(&[Var]) -> Var,
    step: f64,
    mut select: impl FnMut(usize, usize) -> bool,
) -> GradCheckReport {
    let leaves: Vec<Var> = inputs.iter().map(|t| Var::leaf(t.clone(), true)).collect();
    let out = f(&leaves);
    assert_eq!(out.value().numel(), 1, "gradient check needs a scalar function");
    let grads = out.backward();

    let eval = |inputs: &[Tensor]| -> f64 {
        let vars: Vec<Var> = inputs.iter().map(|t| Var::constant(t.clone())).collect();
        f(&vars).value().data()[0]
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = grads
            .get(leaf)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(leaf.shape()));
        for j in 0..inputs[i].numel() {
            if !select(i, j) {
                continue;
            }
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work);
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work);
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[j];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.checked == 1 {
                report.max_rel_err = err.max(report.max_rel_err);
                if err >= report.max_rel_err {
                    report.worst = (i, j);
                    report.analytic = a;
                    report.numeric = numeric;
                }
            }
        }
    }
    report
}

/// Assert that every entry passes at `tol` (step 1e-5).
pub fn check_gradients(inputs: &[Tensor], f: impl Fn(&[Var]) -> Var, tol: f64) {
    let report = finite_difference_report(inputs, f, 1e-5, |_, _| true);
    assert!(
        report.max_rel_err < tol,
        "gradient check failed: {report:?}"
    );
}
