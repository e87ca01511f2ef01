//! Visually gated multilingual LSTM language models.
//!
//! An LSTM whose hidden state is scaled elementwise by a learned projection
//! of an image feature vector (`z = (o ⊙ tanh c) ⊙ M v`), trained with
//! hand-written backpropagation through time, plus everything needed to run
//! the grounding ablations: corpus loading, SGD with patience scheduling,
//! perplexity grids, word-similarity correlation against human norms and
//! length-constrained beam sampling.
//!
//! ```no_run
//! use mmlstm::{synth, model::{Model, Modality, ModelConfig}};
//!
//! let corpus = synth::generate(&synth::SynthConfig::default(), 7)?;
//! let cfg = ModelConfig::for_table(&corpus.embeddings, 32, corpus.features.dim(), Modality::Multimodal);
//! let model = Model::new(cfg, &corpus.embeddings, 1)?;
//! # Ok::<(), mmlstm::Error>(())
//! ```

pub mod commands;
pub mod config;
pub mod data;
mod error;
pub mod lexicon;
pub mod model;
pub mod sampler;
pub mod simeval;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
