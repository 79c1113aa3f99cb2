//! Gradient checking against central finite differences.

use super::graph::{Graph, NodeId};
use super::params::{BoundParams, ParameterSet};
use crate::error::{Error, Result};

/// Maximum relative error between analytic and central-difference
/// gradients over every coordinate of `params`.
///
/// `build` must construct the scalar loss for whatever parameters it is
/// handed; it is invoked once for the analytic pass and twice per
/// coordinate for the numeric one. The error at each coordinate is
/// `|analytic - numeric| / max(1e-12, |analytic| + |numeric|)`.
pub fn grad_check<F>(params: &ParameterSet, step: f64, mut build: F) -> Result<f64>
where
    F: FnMut(&mut Graph, &BoundParams) -> Result<NodeId>,
{
    if !(step > 0.0 && step <= 1e-2) {
        return Err(Error::Contract(format!(
            "grad_check step must be in (0, 1e-2], got {step}"
        )));
    }

    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let root = build(&mut g, &bound)?;
    let loss = g.value(root).item();
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {loss}")));
    }
    g.backward(root)?;
    let analytic = bound.gradients(&g);

    let mut eval = |p: &ParameterSet| -> Result<f64> {
        let mut g = Graph::new();
        let bound = p.bind(&mut g);
        let root = build(&mut g, &bound)?;
        let v = g.value(root).item();
        if !v.is_finite() {
            return Err(Error::Numeric(format!("perturbed loss is not finite: {v}")));
        }
        Ok(v)
    };

    let mut max_rel: f64 = 0.0;
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for (pi, name) in names.iter().enumerate() {
        let n = params.get(name).expect("known name").len();
        for i in 0..n {
            let mut plus = params.clone();
            plus.get_mut(name).expect("known name").data_mut()[i] += step;
            let fp = eval(&plus)?;
            let mut minus = params.clone();
            minus.get_mut(name).expect("known name").data_mut()[i] -= step;
            let fm = eval(&minus)?;
            let numeric = (fp - fm) / (2.0 * step);
            let a = analytic[pi].data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}
