//! Dual-stream decoder: embedding, a visually seeded LSTM, a visually
//! conditioned LSTM, element-wise product fusion, output projection, softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::project_summary;
use crate::model::lstm::{lstm_step_backward, lstm_step_cached, LstmStepCache};
use crate::model::{ModelDims, ModelParams};
use crate::numerics::{cross_entropy, softmax_row, Matrix, PROBABILITY_FLOOR};
use crate::text::{TokenizedCaption, PAD};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Cached activations of one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub token: usize,
    /// Embedded input ỹ.
    pub embedded: Vec<f64>,
    pub lstm1: LstmStepCache,
    pub lstm2: LstmStepCache,
    /// Dropout masks (inverted scaling); `None` in eval mode.
    pub masks: Option<(Vec<f64>, Vec<f64>)>,
    /// Stream outputs after dropout, z̃₁ and z̃₂.
    pub stream1: Vec<f64>,
    pub stream2: Vec<f64>,
    pub fused: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub dims: ModelDims,
    /// Pooled summary f_a as given to the model.
    pub pooled: Vec<f64>,
    /// Projected visual vector (LSTM₁ initial hidden state, LSTM₂ input suffix).
    pub visual: Vec<f64>,
    pub steps: Vec<StepTrace>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Logits as a `T × vocab` matrix.
    pub fn logits(&self) -> Matrix {
        let v = self.dims.vocab_size;
        Matrix::from_fn(self.steps.len(), v, |t, k| self.steps[t].logits[k])
    }

    pub fn inputs(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.token).collect()
    }

    /// Re-runs the forward pass with the recorded inputs and dropout masks.
    pub fn replay(&self, params: &ModelParams) -> Result<Matrix> {
        let mut state = DecoderState::new(params, &self.pooled)?;
        let mut rows = Vec::with_capacity(self.steps.len());
        for s in &self.steps {
            let masks = s.masks.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
            rows.push(state.step(params, s.token, masks)?.logits);
        }
        Matrix::from_rows(&rows)
    }

    /// Mean cross-entropy over the non-PAD entries of `targets`.
    pub fn loss(&self, targets: &[usize]) -> Result<f64> {
        check_targets(self.steps.len(), targets)?;
        mean_token_loss(self.steps.iter().map(|s| s.probabilities.as_slice()), targets)
    }
}

/// Recurrent state carried between decoder steps.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub visual: Vec<f64>,
    pub h1: Vec<f64>,
    pub c1: Vec<f64>,
    pub h2: Vec<f64>,
    pub c2: Vec<f64>,
}

impl DecoderState {
    /// LSTM₁ starts from the projected visual vector (cell zero); LSTM₂ from zeros.
    pub fn new(params: &ModelParams, pooled: &[f64]) -> Result<Self> {
        if pooled.len() != params.dims.pooled_dim {
            return Err(Error::Dimension {
                op: "decoder visual input",
                left: (params.dims.pooled_dim, 1),
                right: (pooled.len(), 1),
            });
        }
        let visual = project_summary(
            pooled,
            &params.visual_projection,
            params.visual_bias.values(),
        )?;
        let h = params.dims.hidden;
        Ok(DecoderState {
            h1: visual.clone(),
            c1: vec![0.0; h],
            h2: vec![0.0; h],
            c2: vec![0.0; h],
            visual,
        })
    }

    pub fn step(
        &mut self,
        params: &ModelParams,
        token: usize,
        masks: Option<(&[f64], &[f64])>,
    ) -> Result<StepTrace> {
        let dims = params.dims;
        if token >= dims.vocab_size {
            return Err(Error::arg(format!(
                "token id {token} outside vocabulary of {}",
                dims.vocab_size
            )));
        }
        let embedded: Vec<f64> = (0..dims.embed_dim)
            .map(|r| params.embedding.get(r, token) + params.embedding_bias.values()[r])
            .collect();

        let lstm1 = lstm_step_cached(
            &params.lstm1,
            embedded.clone(),
            std::mem::take(&mut self.h1),
            std::mem::take(&mut self.c1),
        )?;
        let mut joint = embedded.clone();
        joint.extend_from_slice(&self.visual);
        let lstm2 = lstm_step_cached(
            &params.lstm2,
            joint,
            std::mem::take(&mut self.h2),
            std::mem::take(&mut self.c2),
        )?;
        self.h1.clone_from(&lstm1.h);
        self.c1.clone_from(&lstm1.c);
        self.h2.clone_from(&lstm2.h);
        self.c2.clone_from(&lstm2.c);

        let (stream1, stream2) = match masks {
            Some((m1, m2)) => (
                lstm1.h.iter().zip(m1).map(|(h, m)| h * m).collect(),
                lstm2.h.iter().zip(m2).map(|(h, m)| h * m).collect(),
            ),
            None => (lstm1.h.clone(), lstm2.h.clone()),
        };
        let fused: Vec<f64> = stream1.iter().zip(&stream2).map(|(a, b)| a * b).collect();
        let mut logits = params.output_projection.matvec(&fused)?;
        for (l, b) in logits.iter_mut().zip(params.output_bias.values()) {
            *l += b;
        }
        let probabilities = softmax_row(&logits)?;
        Ok(StepTrace {
            token,
            embedded,
            lstm1,
            lstm2,
            masks: masks.map(|(a, b)| (a.to_vec(), b.to_vec())),
            stream1,
            stream2,
            fused,
            logits,
            probabilities,
        })
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

/// Teacher-forced forward pass over `inputs` (step `t` consumes `inputs[t]`).
///
/// `pooled` is the summary f_a; the visual projection is applied here so it
/// trains with the rest of the model. In train mode each stream's output gets
/// an inverted-dropout mask drawn from `seed`.
pub fn forward(
    params: &ModelParams,
    pooled: &[f64],
    inputs: &[usize],
    dropout_rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::arg(format!("dropout rate must be in [0, 1), got {dropout_rate}")));
    }
    let mut state = DecoderState::new(params, pooled)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = params.dims.hidden;
    let mut steps = Vec::with_capacity(inputs.len());
    for &token in inputs {
        let step = match mode {
            Mode::Eval => state.step(params, token, None)?,
            Mode::Train => {
                let m1 = dropout_mask(&mut rng, h, dropout_rate);
                let m2 = dropout_mask(&mut rng, h, dropout_rate);
                state.step(params, token, Some((&m1, &m2)))?
            }
        };
        steps.push(step);
    }
    Ok(ForwardTrace {
        dims: params.dims,
        pooled: pooled.to_vec(),
        visual: state.visual,
        steps,
    })
}

fn check_targets(steps: usize, targets: &[usize]) -> Result<()> {
    if steps != targets.len() {
        return Err(Error::arg(format!(
            "{steps} timesteps but {} targets",
            targets.len()
        )));
    }
    Ok(())
}

fn mean_token_loss<'a>(
    probabilities: impl Iterator<Item = &'a [f64]>,
    targets: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, &target) in probabilities.zip(targets) {
        if target == PAD {
            continue;
        }
        total += cross_entropy(p, target)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::arg("no non-PAD targets to score"));
    }
    Ok(total / count as f64)
}

/// Mean cross-entropy of `T × vocab` logits against per-step targets,
/// skipping PAD targets.
pub fn sequence_loss(logits: &Matrix, targets: &[usize]) -> Result<f64> {
    check_targets(logits.rows(), targets)?;
    let probs = (0..logits.rows())
        .map(|t| softmax_row(logits.row(t)))
        .collect::<Result<Vec<_>>>()?;
    mean_token_loss(probs.iter().map(Vec::as_slice), targets)
}

/// Next-token loss: the logits of step `t` are scored against `ids[t + 1]`.
pub fn loss(logits: &Matrix, targets: &TokenizedCaption) -> Result<f64> {
    let ids = targets.ids();
    if logits.rows() + 1 > ids.len() {
        return Err(Error::arg(format!(
            "{} timesteps exceed the {}-slot caption",
            logits.rows(),
            ids.len()
        )));
    }
    sequence_loss(logits, &ids[1..=logits.rows()])
}

pub fn count_targets(targets: &[usize]) -> usize {
    targets.iter().filter(|&&t| t != PAD).count()
}

/// Exact gradients of the trace's mean token loss w.r.t. every parameter.
pub fn backward(trace: &ForwardTrace, params: &ModelParams, targets: &[usize]) -> Result<ModelParams> {
    let n = count_targets(targets);
    if n == 0 {
        return Err(Error::arg("no non-PAD targets to score"));
    }
    let mut grads = params.zeros_like();
    accumulate_gradients(trace, params, targets, 1.0 / n as f64, &mut grads)?;
    Ok(grads)
}

/// Adds `weight · ∂(Σ token losses)/∂θ` into `grads`.
pub fn accumulate_gradients(
    trace: &ForwardTrace,
    params: &ModelParams,
    targets: &[usize],
    weight: f64,
    grads: &mut ModelParams,
) -> Result<()> {
    if trace.dims != params.dims || grads.dims != params.dims {
        return Err(Error::State(format!(
            "trace dims {:?} do not match params {:?}",
            trace.dims, params.dims
        )));
    }
    if trace.steps.len() != targets.len() {
        return Err(Error::State(format!(
            "trace has {} steps but {} targets were given",
            trace.steps.len(),
            targets.len()
        )));
    }
    let dims = params.dims;
    let (e, h) = (dims.embed_dim, dims.hidden);

    let mut dh1_next = vec![0.0; h];
    let mut dc1_next = vec![0.0; h];
    let mut dh2_next = vec![0.0; h];
    let mut dc2_next = vec![0.0; h];
    let mut dvisual = vec![0.0; h];

    for (step, &target) in trace.steps.iter().zip(targets).rev() {
        let mut dh1 = dh1_next.clone();
        let mut dh2 = dh2_next.clone();

        if target != PAD {
            if target >= dims.vocab_size {
                return Err(Error::arg(format!("target id {target} outside vocabulary")));
            }
            let mut dlogits: Vec<f64> = step.probabilities.iter().map(|p| weight * p).collect();
            if step.probabilities[target] >= PROBABILITY_FLOOR {
                dlogits[target] -= weight;
            } else {
                // the clamped loss is constant in the logits
                dlogits.iter_mut().for_each(|d| *d = 0.0);
            }
            grads.output_projection.add_outer(&dlogits, &step.fused);
            for (b, d) in grads.output_bias.values_mut().iter_mut().zip(&dlogits) {
                *b += d;
            }
            let dfused = params.output_projection.matvec_transposed(&dlogits)?;
            for k in 0..h {
                let mut d1 = dfused[k] * step.stream2[k];
                let mut d2 = dfused[k] * step.stream1[k];
                if let Some((m1, m2)) = &step.masks {
                    d1 *= m1[k];
                    d2 *= m2[k];
                }
                dh1[k] += d1;
                dh2[k] += d2;
            }
        }

        let back1 = lstm_step_backward(&params.lstm1, &step.lstm1, &dh1, &dc1_next, &mut grads.lstm1)?;
        let back2 = lstm_step_backward(&params.lstm2, &step.lstm2, &dh2, &dc2_next, &mut grads.lstm2)?;

        // ỹ feeds both streams
        let embed_grad: Vec<f64> = (0..e).map(|r| back1.dx[r] + back2.dx[r]).collect();
        for (r, g) in embed_grad.iter().enumerate() {
            let cur = grads.embedding.get(r, step.token);
            grads.embedding.set(r, step.token, cur + g);
            grads.embedding_bias.values_mut()[r] += g;
        }
        for (dv, g) in dvisual.iter_mut().zip(&back2.dx[e..]) {
            *dv += g;
        }

        dh1_next = back1.dh_prev;
        dc1_next = back1.dc_prev;
        dh2_next = back2.dh_prev;
        dc2_next = back2.dc_prev;
    }

    // LSTM₁'s initial hidden state is the visual vector
    for (dv, g) in dvisual.iter_mut().zip(&dh1_next) {
        *dv += g;
    }
    grads.visual_projection.add_outer(&dvisual, &trace.pooled);
    for (b, d) in grads.visual_bias.values_mut().iter_mut().zip(&dvisual) {
        *b += d;
    }
    Ok(())
}

/// Teacher-forced forward + backward on one caption: returns
/// (mean token loss, gradients of that loss).
pub fn caption_gradients(
    params: &ModelParams,
    pooled: &[f64],
    caption: &TokenizedCaption,
    dropout_rate: f64,
    mode: Mode,
    seed: u64,
) -> Result<(f64, ModelParams)> {
    let trace = forward(params, pooled, caption.inputs(), dropout_rate, mode, seed)?;
    let loss = trace.loss(caption.targets())?;
    let grads = backward(&trace, params, caption.targets())?;
    Ok((loss, grads))
}
