//! Finite-difference verification of the model's backward pass on a tiny
//! random configuration.
//!
//! The numeric side evaluates `L(θ) − L(θ₀)` with an independent
//! double-double forward pass ([`reference`]), so central differences resolve
//! gradients well below the 1e-8 relative-error floor.

pub mod reference;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, init_params, ForwardTrace, Mode, ModelDims, ModelParams};
use crate::numerics::{check_gradients, DoubleDouble, GradCheckEntry, ParamSet};
use reference::reference_loss;
use crate::text::{EOS, RESERVED};

pub const MAX_GRADCHECK_HIDDEN: usize = 16;
pub const MAX_GRADCHECK_VOCAB: usize = 64;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub pooled_dim: usize,
    /// Number of decoder steps T.
    pub steps: usize,
    pub dropout: f64,
    pub epsilon: f64,
    /// When positive, every tensor is redrawn uniformly from
    /// `[-param_scale, param_scale]` instead of the training init.
    pub param_scale: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            vocab_size: 20,
            embed_dim: 10,
            hidden: 8,
            pooled_dim: 6,
            steps: 5,
            dropout: 0.5,
            epsilon: 1e-6,
            param_scale: 0.0,
            seed: 0,
        }
    }
}

impl GradCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden > MAX_GRADCHECK_HIDDEN || self.vocab_size > MAX_GRADCHECK_VOCAB {
            return Err(Error::arg(format!(
                "gradcheck needs a tiny model (hidden <= {MAX_GRADCHECK_HIDDEN}, vocab <= {MAX_GRADCHECK_VOCAB}); \
                 got hidden {} and vocab {}. Try --hidden 8 --vocab 20",
                self.hidden, self.vocab_size
            )));
        }
        if self.vocab_size <= RESERVED || self.steps == 0 {
            return Err(Error::arg("gradcheck needs vocab > 4 and at least one step"));
        }
        ModelDims::new(self.vocab_size, self.embed_dim, self.hidden, self.pooled_dim).validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckRow {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl From<GradCheckEntry> for GradCheckRow {
    fn from(e: GradCheckEntry) -> Self {
        GradCheckRow {
            name: e.name,
            max_rel_error: e.max_rel_error,
            worst_index: e.worst_index,
            analytic: e.analytic,
            numeric: e.numeric,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub config: GradCheckConfig,
    pub rows: Vec<GradCheckRow>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<28} {:>14}\n", "tensor", "max rel. error");
        for r in &self.rows {
            s.push_str(&format!("{:<28} {:>14.3e}\n", r.name, r.max_rel_error));
        }
        s.push_str(&format!(
            "seed {}: max {:.3e} (tolerance {:.0e}) {}\n",
            self.config.seed,
            self.max_rel_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        ));
        s
    }
}

/// Parameters, pooled features, inputs and targets.
pub type Problem = (ModelParams, Vec<f64>, Vec<usize>, Vec<usize>);

/// Random parameters, visual summary and caption for a gradient check.
pub fn random_problem(cfg: &GradCheckConfig) -> Result<Problem> {
    cfg.validate()?;
    let dims = ModelDims::new(cfg.vocab_size, cfg.embed_dim, cfg.hidden, cfg.pooled_dim);
    let mut params = init_params(dims, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    if cfg.param_scale > 0.0 {
        for m in params.tensors_mut() {
            for v in m.values_mut() {
                *v = rng.gen_range(-cfg.param_scale..=cfg.param_scale);
            }
        }
    }
    let pooled: Vec<f64> = (0..cfg.pooled_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut inputs = vec![crate::text::BOS];
    inputs.extend((1..cfg.steps).map(|_| rng.gen_range(RESERVED..cfg.vocab_size)));
    let mut targets = inputs[1..].to_vec();
    targets.push(EOS);
    Ok((params, pooled, inputs, targets))
}

pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    run_gradcheck_with(cfg, model::backward)
}

/// Same as [`run_gradcheck`] with a caller-supplied backward pass.
pub fn run_gradcheck_with<B>(cfg: &GradCheckConfig, backward: B) -> Result<GradCheckReport>
where
    B: Fn(&ForwardTrace, &ModelParams, &[usize]) -> Result<ModelParams>,
{
    let (params, pooled, inputs, targets) = random_problem(cfg)?;
    let mode = if cfg.dropout > 0.0 { Mode::Train } else { Mode::Eval };
    let dropout_seed = cfg.seed.wrapping_add(1);
    let trace = model::forward(&params, &pooled, &inputs, cfg.dropout, mode, dropout_seed)?;
    let analytic = backward(&trace, &params, &targets)?;
    let masks: Option<Vec<(Vec<f64>, Vec<f64>)>> = match mode {
        Mode::Train => Some(trace.steps.iter().map(|s| s.masks.clone().unwrap()).collect()),
        Mode::Eval => None,
    };
    let masks = masks.as_deref();
    let baseline: DoubleDouble = reference_loss(&params, &pooled, &inputs, &targets, masks);
    let loss_fn = |p: &ModelParams| {
        let l: DoubleDouble = reference_loss(p, &pooled, &inputs, &targets, masks);
        (l - baseline).to_f64()
    };
    let rows: Vec<GradCheckRow> = check_gradients(loss_fn, &params, &analytic, cfg.epsilon)?
        .into_iter()
        .map(GradCheckRow::from)
        .collect();
    let max_rel_error = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        config: *cfg,
        passed: max_rel_error < GRADCHECK_TOLERANCE,
        tolerance: GRADCHECK_TOLERANCE,
        max_rel_error,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oversized_models_are_refused() {
        let cfg = GradCheckConfig {
            hidden: 512,
            ..Default::default()
        };
        let err = run_gradcheck(&cfg).unwrap_err();
        assert!(err.to_string().contains("--hidden"), "{err}");
        let cfg = GradCheckConfig {
            vocab_size: 100,
            ..Default::default()
        };
        assert!(run_gradcheck(&cfg).is_err());
    }
}
