pub mod beam;
pub mod bpe;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod layers;
pub mod matrix;
pub mod model;
pub mod params;
pub mod train;
pub mod transformer;
pub mod vocab;

pub use beam::{beam_search, ensemble_decode, greedy, Ensemble, Hypothesis};
pub use checkpoint::Seq2SeqCheckpoint;
pub use error::NeuralError;
pub use model::{Arch, ModelConfig, Pair, Seq2SeqModel, StepDecoder, Trainable};
pub use train::{train, TrainReport, TrainingConfig};
pub use vocab::Vocab;
