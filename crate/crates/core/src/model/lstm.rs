use crate::error::{Error, Result};
use crate::model::LstmCellParams;
use crate::numerics::sigmoid;

/// Activations of one LSTM step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub input_gate: Vec<f64>,
    pub forget_gate: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output_gate: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Gradients flowing out of one step.
pub struct LstmStepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

pub fn lstm_step(
    cell: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = lstm_step_cached(cell, x.to_vec(), h_prev.to_vec(), c_prev.to_vec())?;
    Ok((cache.h, cache.c))
}

pub(crate) fn lstm_step_cached(
    cell: &LstmCellParams,
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
) -> Result<LstmStepCache> {
    let h = cell.hidden();
    if h_prev.len() != h || c_prev.len() != h {
        return Err(Error::Dimension {
            op: "lstm_step (state)",
            left: (h, 1),
            right: (h_prev.len(), c_prev.len()),
        });
    }
    let mut pre = cell.input_weights.matvec(&x)?;
    let rec = cell.recurrent_weights.matvec(&h_prev)?;
    for ((p, r), b) in pre.iter_mut().zip(&rec).zip(cell.gate_bias.values()) {
        *p += r + b;
    }

    let input_gate: Vec<f64> = pre[..h].iter().map(|&v| sigmoid(v)).collect();
    let forget_gate: Vec<f64> = pre[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let candidate: Vec<f64> = pre[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
    let output_gate: Vec<f64> = pre[3 * h..].iter().map(|&v| sigmoid(v)).collect();

    let c: Vec<f64> = (0..h)
        .map(|k| forget_gate[k] * c_prev[k] + input_gate[k] * candidate[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_out: Vec<f64> = (0..h).map(|k| output_gate[k] * tanh_c[k]).collect();

    Ok(LstmStepCache {
        x,
        h_prev,
        c_prev,
        input_gate,
        forget_gate,
        candidate,
        output_gate,
        tanh_c,
        c,
        h: h_out,
    })
}

/// Backpropagates `dh`/`dc` through one step, accumulating into `grads`.
pub(crate) fn lstm_step_backward(
    cell: &LstmCellParams,
    cache: &LstmStepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmCellParams,
) -> Result<LstmStepGrads> {
    let h = cell.hidden();
    let mut dpre = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for k in 0..h {
        let (i, f, g, o) = (
            cache.input_gate[k],
            cache.forget_gate[k],
            cache.candidate[k],
            cache.output_gate[k],
        );
        let tc = cache.tanh_c[k];
        let dc_total = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dpre[k] = dc_total * g * i * (1.0 - i);
        dpre[h + k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
        dpre[2 * h + k] = dc_total * i * (1.0 - g * g);
        dpre[3 * h + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc_total * f;
    }
    grads.input_weights.add_outer(&dpre, &cache.x);
    grads.recurrent_weights.add_outer(&dpre, &cache.h_prev);
    for (b, d) in grads.gate_bias.values_mut().iter_mut().zip(&dpre) {
        *b += d;
    }
    Ok(LstmStepGrads {
        dx: cell.input_weights.matvec_transposed(&dpre)?,
        dh_prev: cell.recurrent_weights.matvec_transposed(&dpre)?,
        dc_prev,
    })
}
