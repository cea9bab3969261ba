//! Stand-alone loss evaluation of the captioner, generic over the scalar type.
//!
//! Shares no code with `model::forward` beyond reading the parameter tensors,
//! so agreement between the two is meaningful. Instantiated with
//! [`DoubleDouble`](crate::numerics::DoubleDouble) it serves as the
//! high-precision loss for finite differences.

use crate::model::ModelParams;
use crate::numerics::{Matrix, Scalar};
use crate::text::PAD;

fn lift<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::from_f64(x)).collect()
}

/// `w · x (+ bias)`, row by row.
fn affine<S: Scalar>(w: &Matrix, x: &[S], bias: Option<&Matrix>) -> Vec<S> {
    (0..w.rows())
        .map(|r| {
            let mut acc = bias.map_or(S::from_f64(0.0), |b| S::from_f64(b.values()[r]));
            for (c, &xc) in x.iter().enumerate() {
                acc = acc + S::from_f64(w.get(r, c)) * xc;
            }
            acc
        })
        .collect()
}

fn lstm<S: Scalar>(
    cell: &crate::model::LstmCellParams,
    x: &[S],
    h: &[S],
    c: &[S],
) -> (Vec<S>, Vec<S>) {
    let n = h.len();
    let a = affine(&cell.input_weights, x, Some(&cell.gate_bias));
    let b = affine(&cell.recurrent_weights, h, None);
    let mut h_new = Vec::with_capacity(n);
    let mut c_new = Vec::with_capacity(n);
    for k in 0..n {
        let i = (a[k] + b[k]).sigmoid();
        let f = (a[n + k] + b[n + k]).sigmoid();
        let g = (a[2 * n + k] + b[2 * n + k]).tanh();
        let o = (a[3 * n + k] + b[3 * n + k]).sigmoid();
        let ck = f * c[k] + i * g;
        h_new.push(o * ck.tanh());
        c_new.push(ck);
    }
    (h_new, c_new)
}

/// Per-step logits; `masks[t]` are the dropout multipliers of both streams.
pub fn reference_logits<S: Scalar>(
    params: &ModelParams,
    pooled: &[f64],
    inputs: &[usize],
    masks: Option<&[(Vec<f64>, Vec<f64>)]>,
) -> Vec<Vec<S>> {
    let hidden = params.dims.hidden;
    let visual = affine(&params.visual_projection, &lift::<S>(pooled), Some(&params.visual_bias));
    let mut h1 = visual.clone();
    let mut c1 = vec![S::from_f64(0.0); hidden];
    let mut h2 = vec![S::from_f64(0.0); hidden];
    let mut c2 = vec![S::from_f64(0.0); hidden];
    let mut out = Vec::with_capacity(inputs.len());
    for (t, &tok) in inputs.iter().enumerate() {
        let y: Vec<S> = (0..params.dims.embed_dim)
            .map(|r| S::from_f64(params.embedding.get(r, tok)) + S::from_f64(params.embedding_bias.values()[r]))
            .collect();
        (h1, c1) = lstm(&params.lstm1, &y, &h1, &c1);
        let mut joint = y;
        joint.extend_from_slice(&visual);
        (h2, c2) = lstm(&params.lstm2, &joint, &h2, &c2);
        let fused: Vec<S> = (0..hidden)
            .map(|k| {
                let (m1, m2) = masks.map_or((1.0, 1.0), |m| (m[t].0[k], m[t].1[k]));
                h1[k] * S::from_f64(m1) * h2[k] * S::from_f64(m2)
            })
            .collect();
        out.push(affine(&params.output_projection, &fused, Some(&params.output_bias)));
    }
    out
}

/// Mean next-token cross-entropy via log-sum-exp, PAD targets skipped.
pub fn reference_loss<S: Scalar>(
    params: &ModelParams,
    pooled: &[f64],
    inputs: &[usize],
    targets: &[usize],
    masks: Option<&[(Vec<f64>, Vec<f64>)]>,
) -> S {
    let logits = reference_logits::<S>(params, pooled, inputs, masks);
    let mut total = S::from_f64(0.0);
    let mut count = 0usize;
    for (z, &target) in logits.iter().zip(targets) {
        if target == PAD {
            continue;
        }
        let max = z.iter().copied().fold(z[0], |m, v| if v.gt(m) { v } else { m });
        let mut sum = S::from_f64(0.0);
        for &v in z {
            sum = sum + (v - max).exp();
        }
        total = total + (max + sum.ln() - z[target]);
        count += 1;
    }
    total / S::from_f64(count as f64)
}
