use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet};
use crate::text::MAX_CONTENT_TOKENS;

pub const INIT_RANGE: f64 = 0.08;
pub const DEFAULT_HIDDEN: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub pooled_dim: usize,
    /// Content-token cap used at generation time.
    pub max_len: usize,
}

impl ModelDims {
    pub fn new(vocab_size: usize, embed_dim: usize, hidden: usize, pooled_dim: usize) -> Self {
        ModelDims {
            vocab_size,
            embed_dim,
            hidden,
            pooled_dim,
            max_len: MAX_CONTENT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ModelDims {
            vocab_size,
            embed_dim,
            hidden,
            pooled_dim,
            max_len,
        } = *self;
        if [vocab_size, embed_dim, hidden, pooled_dim, max_len].contains(&0) {
            return Err(Error::arg(format!("all model dims must be positive: {self:?}")));
        }
        if vocab_size < crate::text::RESERVED {
            return Err(Error::arg(format!(
                "vocab_size {vocab_size} cannot hold the reserved tokens"
            )));
        }
        Ok(())
    }
}

/// One LSTM cell; gate rows are stacked as [input, forget, candidate, output].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_weights: Matrix,
    pub recurrent_weights: Matrix,
    pub gate_bias: Matrix,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCellParams {
            input_weights: Matrix::zeros(4 * hidden, input_dim),
            recurrent_weights: Matrix::zeros(4 * hidden, hidden),
            gate_bias: Matrix::zeros(4 * hidden, 1),
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.cols()
    }

    fn check(&self, op: &'static str, input_dim: usize, hidden: usize) -> Result<()> {
        let want = [(4 * hidden, input_dim), (4 * hidden, hidden), (4 * hidden, 1)];
        let got = [
            self.input_weights.shape(),
            self.recurrent_weights.shape(),
            self.gate_bias.shape(),
        ];
        for (w, g) in want.iter().zip(&got) {
            if w != g {
                return Err(Error::Dimension {
                    op,
                    left: *w,
                    right: *g,
                });
            }
        }
        Ok(())
    }
}

/// Every learnable tensor of the captioner. Also used as the gradient set.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub embedding: Matrix,
    pub embedding_bias: Matrix,
    pub lstm1: LstmCellParams,
    pub lstm2: LstmCellParams,
    pub visual_projection: Matrix,
    pub visual_bias: Matrix,
    pub output_projection: Matrix,
    pub output_bias: Matrix,
}

/// Serialization and iteration order of the tensors.
pub const TENSOR_NAMES: [&str; 12] = [
    "embedding.weight",
    "embedding.bias",
    "lstm1.input_weights",
    "lstm1.recurrent_weights",
    "lstm1.gate_bias",
    "lstm2.input_weights",
    "lstm2.recurrent_weights",
    "lstm2.gate_bias",
    "visual_projection.weight",
    "visual_projection.bias",
    "output_projection.weight",
    "output_projection.bias",
];

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            vocab_size: v,
            embed_dim: e,
            hidden: h,
            pooled_dim: p,
            ..
        } = dims;
        ModelParams {
            dims,
            embedding: Matrix::zeros(e, v),
            embedding_bias: Matrix::zeros(e, 1),
            lstm1: LstmCellParams::zeros(e, h),
            lstm2: LstmCellParams::zeros(e + h, h),
            visual_projection: Matrix::zeros(h, p),
            visual_bias: Matrix::zeros(h, 1),
            output_projection: Matrix::zeros(v, h),
            output_bias: Matrix::zeros(v, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams::zeros(self.dims)
    }

    /// Rebuilds from tensors in [`TENSOR_NAMES`] order.
    pub fn from_tensors(dims: ModelDims, tensors: Vec<Matrix>) -> Result<Self> {
        if tensors.len() != TENSOR_NAMES.len() {
            return Err(Error::State(format!(
                "expected {} tensors, got {}",
                TENSOR_NAMES.len(),
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        let params = ModelParams {
            dims,
            embedding: next(),
            embedding_bias: next(),
            lstm1: LstmCellParams {
                input_weights: next(),
                recurrent_weights: next(),
                gate_bias: next(),
            },
            lstm2: LstmCellParams {
                input_weights: next(),
                recurrent_weights: next(),
                gate_bias: next(),
            },
            visual_projection: next(),
            visual_bias: next(),
            output_projection: next(),
            output_bias: next(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        let ModelDims {
            vocab_size: v,
            embed_dim: e,
            hidden: h,
            pooled_dim: p,
            ..
        } = self.dims;
        let expect = [
            ("embedding", &self.embedding, (e, v)),
            ("embedding bias", &self.embedding_bias, (e, 1)),
            ("visual projection", &self.visual_projection, (h, p)),
            ("visual bias", &self.visual_bias, (h, 1)),
            ("output projection", &self.output_projection, (v, h)),
            ("output bias", &self.output_bias, (v, 1)),
        ];
        for (name, m, shape) in expect {
            if m.shape() != shape {
                return Err(Error::arg(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    m.shape()
                )));
            }
        }
        self.lstm1.check("lstm1 params", e, h)?;
        self.lstm2.check("lstm2 params", e + h, h)?;
        for (name, m) in self.tensors() {
            if !m.is_finite() {
                return Err(Error::Numeric(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, m)| m.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.tensors_mut() {
            m.scale(s);
        }
    }

    pub fn add_scaled(&mut self, other: &ModelParams, s: f64) -> Result<()> {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, s)?;
        }
        Ok(())
    }
}

impl ParamSet for ModelParams {
    fn tensors(&self) -> Vec<(&str, &Matrix)> {
        let ms = [
            &self.embedding,
            &self.embedding_bias,
            &self.lstm1.input_weights,
            &self.lstm1.recurrent_weights,
            &self.lstm1.gate_bias,
            &self.lstm2.input_weights,
            &self.lstm2.recurrent_weights,
            &self.lstm2.gate_bias,
            &self.visual_projection,
            &self.visual_bias,
            &self.output_projection,
            &self.output_bias,
        ];
        TENSOR_NAMES.iter().copied().zip(ms).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.embedding,
            &mut self.embedding_bias,
            &mut self.lstm1.input_weights,
            &mut self.lstm1.recurrent_weights,
            &mut self.lstm1.gate_bias,
            &mut self.lstm2.input_weights,
            &mut self.lstm2.recurrent_weights,
            &mut self.lstm2.gate_bias,
            &mut self.visual_projection,
            &mut self.visual_bias,
            &mut self.output_projection,
            &mut self.output_bias,
        ]
    }
}

/// Uniform weights in [−0.08, 0.08], zero biases, forget-gate bias 1.
pub fn init_params(dims: ModelDims, seed: u64) -> Result<ModelParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::zeros(dims);
    let weights = [0usize, 2, 3, 5, 6, 8, 10];
    for (i, m) in params.tensors_mut().into_iter().enumerate() {
        if weights.contains(&i) {
            for v in m.values_mut() {
                *v = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
    }
    let h = dims.hidden;
    for bias in [&mut params.lstm1.gate_bias, &mut params.lstm2.gate_bias] {
        bias.values_mut()[h..2 * h].fill(1.0);
    }
    Ok(params)
}
