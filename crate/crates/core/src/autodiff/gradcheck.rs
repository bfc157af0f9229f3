//! Central finite-difference gradient verification.

use super::graph::{backward, Graph, Var};
use super::tensor::ParameterSet;
use crate::error::Result;

/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding do not blow the ratio up.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares the analytic gradient of the scalar built by `f` against central
/// differences `(f(p + h) − f(p − h)) / 2h` for every element of every
/// unfrozen entry of `params`, returning the worst relative error.
pub fn finite_difference_check<F>(f: F, params: &ParameterSet<f64>, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParameterSet<f64>) -> Result<Var>,
{
    let mut analytic_set = params.clone();
    let mut g = Graph::new();
    let loss = f(&mut g, &analytic_set)?;
    backward(&mut g, loss, &mut analytic_set)?;

    let eval = |p: &ParameterSet<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = f(&mut g, p)?;
        Ok(g.value(v).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut probe = params.clone();
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| !p.frozen)
        .map(|(n, _)| n.clone())
        .collect();
    for name in names {
        let grads = analytic_set
            .get(&name)?
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; params.get(&name).map(|t| t.numel()).unwrap_or(0)]);
        for (i, &a) in grads.iter().enumerate() {
            let orig = probe.get(&name)?.data()[i];
            probe.get_mut(&name)?.data_mut()[i] = orig + step;
            let up = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig - step;
            let down = eval(&probe)?;
            probe.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
