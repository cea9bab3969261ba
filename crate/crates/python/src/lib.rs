//! Python bindings: vocabulary, feature files, model, training, metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use dualcap::decoding::greedy_generate;
use dualcap::features::{self, FeatureSequence, DEFAULT_POOL_WINDOW};
use dualcap::gradcheck::{run_gradcheck, GradCheckConfig};
use dualcap::metrics;
use dualcap::model::{self, forward, init_params, load_checkpoint, save_params, Mode, ModelDims, ModelParams};
use dualcap::text::{self, CaptionRecord, TokenizedCaption, Vocabulary, DEFAULT_VOCAB_CAP, MAX_CONTENT_TOKENS};
use dualcap::training::{self, TrainOutput, TrainingConfig, TrainingExample};
use dualcap::Error;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Argument(_) | Error::Dimension { .. } | Error::Format { .. } | Error::Json { .. } => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Numeric(_) => PyArithmeticError::new_err(msg),
        Error::Oracle(_) | Error::State(_) => PyRuntimeError::new_err(msg),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for dualcap::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    text::tokenize(text)
}

#[pyclass(name = "Vocabulary", module = "dualcap", frozen)]
struct PyVocabulary {
    inner: Vocabulary,
}

#[pymethods]
impl PyVocabulary {
    /// Builds from raw caption strings, keeping the `cap` most frequent tokens.
    #[staticmethod]
    #[pyo3(signature = (captions, cap = DEFAULT_VOCAB_CAP))]
    fn build(captions: Vec<String>, cap: usize) -> PyResult<Self> {
        let tokens: Vec<Vec<String>> = captions.iter().map(|c| text::tokenize(c)).collect();
        Ok(PyVocabulary { inner: text::build_vocab(&tokens, cap).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyVocabulary { inner: Vocabulary::load(&path).py()? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn id(&self, token: &str) -> Option<usize> {
        self.inner.id(token)
    }

    fn token(&self, id: usize) -> Option<String> {
        self.inner.token(id).map(str::to_string)
    }

    /// Tokenizes and encodes into the fixed 32-slot layout.
    fn encode(&self, caption: &str) -> Vec<usize> {
        text::encode(&text::tokenize(caption), &self.inner).ids().to_vec()
    }

    fn decode(&self, ids: Vec<usize>) -> PyResult<String> {
        text::decode_ids(&ids, &self.inner).py()
    }
}

#[pyfunction]
fn write_features(path: PathBuf, video_id: String, segments: Vec<Vec<f64>>) -> PyResult<()> {
    let seq = FeatureSequence::from_segments(video_id, &segments).py()?;
    features::write_features(&path, &seq).py()
}

/// Returns `(video_id, segments)`.
#[pyfunction]
fn load_features(path: PathBuf) -> PyResult<(String, Vec<Vec<f64>>)> {
    let seq = features::load_features(&path).py()?;
    let rows = (0..seq.segment_count()).map(|i| seq.segment(i).to_vec()).collect();
    Ok((seq.video_id, rows))
}

/// Window-pools segments and returns their mean.
#[pyfunction]
#[pyo3(signature = (segments, window = DEFAULT_POOL_WINDOW))]
fn average_pool(segments: Vec<Vec<f64>>, window: usize) -> PyResult<Vec<f64>> {
    let seq = FeatureSequence::from_segments("", &segments).py()?;
    Ok(features::average_pool(&seq, window).py()?.summary)
}

#[pyclass(name = "Model", module = "dualcap", frozen)]
struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (vocab_size, embed_dim, hidden, pooled_dim, seed = 0))]
    fn new(vocab_size: usize, embed_dim: usize, hidden: usize, pooled_dim: usize, seed: u64) -> PyResult<Self> {
        let dims = ModelDims::new(vocab_size, embed_dim, hidden, pooled_dim);
        Ok(PyModel { params: init_params(dims, seed).py()? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { params: load_checkpoint(&path).py()?.params })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_params(&path, &self.params).py()
    }

    /// `(vocab_size, embed_dim, hidden, pooled_dim, max_len)`.
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize, usize) {
        let d = self.params.dims;
        (d.vocab_size, d.embed_dim, d.hidden, d.pooled_dim, d.max_len)
    }

    /// Teacher-forced logits, one row per input token.
    fn logits(&self, pooled: Vec<f64>, inputs: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let logits = forward(&self.params, &pooled, &inputs, 0.0, Mode::Eval, 0).py()?.logits();
        Ok((0..logits.rows()).map(|t| logits.row(t).to_vec()).collect())
    }

    /// Mean token cross-entropy of a 32-slot encoded caption.
    fn loss(&self, pooled: Vec<f64>, ids: Vec<usize>) -> PyResult<f64> {
        let cap = TokenizedCaption::from_ids(ids).py()?;
        let trace = forward(&self.params, &pooled, cap.inputs(), 0.0, Mode::Eval, 0).py()?;
        model::loss(&trace.logits(), &cap).py()
    }

    #[pyo3(signature = (pooled, max_len = MAX_CONTENT_TOKENS))]
    fn generate_ids(&self, pooled: Vec<f64>, max_len: usize) -> PyResult<Vec<usize>> {
        greedy_generate(&self.params, &pooled, max_len).py()
    }

    #[pyo3(signature = (pooled, vocab, max_len = MAX_CONTENT_TOKENS))]
    fn generate(&self, pooled: Vec<f64>, vocab: &PyVocabulary, max_len: usize) -> PyResult<String> {
        dualcap::decoding::generate_caption(&self.params, &pooled, &vocab.inner, max_len).py()
    }
}

/// Trains on `(pooled, 32-slot ids)` pairs; returns the model and per-epoch
/// mean losses. Unset options take the library defaults.
#[pyfunction]
#[pyo3(signature = (
    pooled, captions, vocab_size, *, learning_rate = None, batch_size = None, epochs = None,
    dropout = None, hidden = None, embed_dim = None, gradient_clip_norm = None, seed = None, out_dir = None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    pooled: Vec<Vec<f64>>,
    captions: Vec<Vec<usize>>,
    vocab_size: usize,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    dropout: Option<f64>,
    hidden: Option<usize>,
    embed_dim: Option<usize>,
    gradient_clip_norm: Option<f64>,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> PyResult<(PyModel, Vec<f64>)> {
    if pooled.len() != captions.len() {
        return Err(PyValueError::new_err(format!(
            "{} pooled vectors for {} captions",
            pooled.len(),
            captions.len()
        )));
    }
    let d = TrainingConfig::default();
    let config = TrainingConfig {
        learning_rate: learning_rate.unwrap_or(d.learning_rate),
        batch_size: batch_size.unwrap_or(d.batch_size),
        epochs: epochs.unwrap_or(d.epochs),
        dropout: dropout.unwrap_or(d.dropout),
        hidden: hidden.unwrap_or(d.hidden),
        embed_dim: embed_dim.unwrap_or(d.embed_dim),
        gradient_clip_norm: gradient_clip_norm.unwrap_or(d.gradient_clip_norm),
        seed: seed.unwrap_or(d.seed),
        ..d
    };
    let pooled_dim = pooled.first().map_or(0, Vec::len);
    let examples = pooled
        .into_iter()
        .zip(captions)
        .enumerate()
        .map(|(k, (p, ids))| {
            Ok(TrainingExample {
                video_id: format!("example{k}"),
                pooled: Arc::from(p),
                caption: TokenizedCaption::from_ids(ids).py()?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = TrainOutput {
        log_path: out_dir.as_ref().map(|d| d.join("train_log.jsonl")),
        checkpoint_dir: out_dir,
    };
    let dims = config.dims(vocab_size, pooled_dim);
    let (params, log) = py.detach(|| training::train(&examples, dims, &config, &out)).py()?;
    Ok((PyModel { params }, log.iter().map(|r| r.mean_loss).collect()))
}

/// Corpus scores for `{video_id: caption}` against `{video_id: [references]}`.
#[pyfunction]
fn evaluate(py: Python<'_>, hypotheses: BTreeMap<String, String>, references: BTreeMap<String, Vec<String>>) -> PyResult<BTreeMap<String, f64>> {
    let records: Vec<CaptionRecord> = references
        .into_iter()
        .map(|(video_id, en_cap)| CaptionRecord { video_id, en_cap })
        .collect();
    let s = py.detach(|| metrics::evaluate(&hypotheses, &records)).py()?.scores;
    Ok([
        ("bleu_1", s.bleu_1),
        ("bleu_2", s.bleu_2),
        ("bleu_3", s.bleu_3),
        ("bleu_4", s.bleu_4),
        ("meteor", s.meteor),
        ("rouge_l", s.rouge_l),
        ("cider", s.cider),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect())
}

/// Runs the finite-difference check; returns `(passed, {tensor: max relative error})`.
#[pyfunction]
#[pyo3(signature = (seed = 0, dropout = 0.5))]
fn gradcheck(py: Python<'_>, seed: u64, dropout: f64) -> PyResult<(bool, BTreeMap<String, f64>)> {
    let cfg = GradCheckConfig { seed, dropout, ..Default::default() };
    let report = py.detach(|| run_gradcheck(&cfg)).py()?;
    Ok((report.passed, report.rows.into_iter().map(|r| (r.name, r.max_rel_error)).collect()))
}

#[pymodule]
#[pyo3(name = "dualcap")]
fn dualcap_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(write_features, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(average_pool, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("PAD", text::PAD)?;
    m.add("BOS", text::BOS)?;
    m.add("EOS", text::EOS)?;
    m.add("UKN", text::UKN)?;
    m.add("ENCODED_LEN", text::ENCODED_LEN)?;
    Ok(())
}
