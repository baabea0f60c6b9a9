//! Joint CTC-attention recognizer: symbols, CTC, model, checkpoints.

mod checkpoint;
mod ctc;
mod model;
mod symbols;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, NamedTensor};
pub use ctc::{argmax_rows, collapse_path, ctc_greedy_decode, ctc_loss, ctc_loss_var, min_frames, CtcOutput};
pub use model::{
    asr_loss, asr_loss_var, sinusoidal_positions, AsrModel, Cmvn, DecoderConfig, Encoded,
    EncodedSequence, EncoderConfig, ModelConfig,
};
pub use symbols::SymbolTable;
