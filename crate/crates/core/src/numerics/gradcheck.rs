//! Central finite-difference oracle for hand-written backward passes.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A fixed, ordered collection of named tensors.
///
/// Implemented by the model parameters and their gradients so the oracle,
/// the optimizer and the checkpoint writer can walk them uniformly.
pub trait ParamSet {
    fn tensors(&self) -> Vec<(&str, &Matrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;
}

/// Ad-hoc named tensor list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedTensors(pub Vec<(String, Matrix)>);

impl ParamSet for NamedTensors {
    fn tensors(&self) -> Vec<(&str, &Matrix)> {
        self.0.iter().map(|(n, m)| (n.as_str(), m)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.0.iter_mut().map(|(_, m)| m).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` for every entry of
/// every tensor in `params`, returning the worst relative error per tensor.
pub fn check_gradients<P, F>(
    loss_fn: F,
    params: &P,
    analytic: &P,
    epsilon: f64,
) -> Result<Vec<GradCheckEntry>>
where
    P: ParamSet + Clone,
    F: Fn(&P) -> f64,
{
    if !(1e-6..=1e-4).contains(&epsilon) {
        return Err(Error::arg(format!(
            "epsilon must lie in [1e-6, 1e-4], got {epsilon}"
        )));
    }
    let base = loss_fn(params);
    let again = loss_fn(params);
    if base.to_bits() != again.to_bits() {
        return Err(Error::Oracle(format!(
            "loss function is not deterministic ({base} then {again})"
        )));
    }
    if !base.is_finite() {
        return Err(Error::Oracle(format!("baseline loss is {base}")));
    }

    let names: Vec<String> = params.tensors().iter().map(|(n, _)| n.to_string()).collect();
    let grads = analytic.tensors();
    if grads.len() != names.len() {
        return Err(Error::State(format!(
            "{} parameter tensors but {} gradient tensors",
            names.len(),
            grads.len()
        )));
    }

    let mut probe = params.clone();
    let mut report = Vec::with_capacity(names.len());
    for (t, name) in names.iter().enumerate() {
        let grad = grads[t].1;
        let len = probe.tensors()[t].1.len();
        if grad.len() != len {
            return Err(Error::State(format!(
                "gradient for {name} has {} entries, parameter has {len}",
                grad.len()
            )));
        }
        let mut entry = GradCheckEntry {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..len {
            let original = probe.tensors()[t].1.values()[i];
            probe.tensors_mut()[t].values_mut()[i] = original + epsilon;
            let plus = loss_fn(&probe);
            probe.tensors_mut()[t].values_mut()[i] = original - epsilon;
            let minus = loss_fn(&probe);
            probe.tensors_mut()[t].values_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.values()[i];
            let err = relative_error(a, numeric);
            if !err.is_finite() {
                return Err(Error::Oracle(format!("{name}[{i}]: non-finite comparison")));
            }
            if err > entry.max_rel_error || i == 0 {
                entry.max_rel_error = err;
                entry.worst_index = i;
                entry.analytic = a;
                entry.numeric = numeric;
            }
        }
        report.push(entry);
    }
    Ok(report)
}
