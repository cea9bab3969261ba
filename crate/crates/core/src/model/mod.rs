//! The dual-stream fusion decoder, forward and hand-written backward.

mod checkpoint;
mod lstm;
mod network;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, save_params,
    Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use lstm::{lstm_step, LstmStepCache};
pub use network::{
    accumulate_gradients, backward, caption_gradients, count_targets, forward, loss,
    sequence_loss, DecoderState, ForwardTrace, Mode, StepTrace,
};
pub use params::{
    init_params, LstmCellParams, ModelDims, ModelParams, DEFAULT_HIDDEN, INIT_RANGE, TENSOR_NAMES,
};
