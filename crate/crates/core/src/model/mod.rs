//! Unimodal and visually gated LSTM language models.
//!
//! The recurrence is the standard peephole-free LSTM with per-gate biases:
//!
//! ```text
//! i = σ(W_i x + V_i z' + b_i)      f = σ(W_f x + V_f z' + b_f)
//! g = tanh(W_g x + V_g z' + b_g)   o = σ(W_o x + V_o z' + b_o)
//! c = f ⊙ c' + i ⊙ g
//! z = o ⊙ tanh(c)                  (unimodal)
//! z = [o ⊙ tanh(c)] ⊙ (M v)        (multimodal, v = image feature vector)
//! ```
//!
//! The modulated `z` is both the recurrent state and the input to dropout and
//! the output projection. Gate blocks are stacked in the order i, f, g, o.

mod bptt;
pub mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{EmbeddingTable, Side};
use crate::tensor::{sigmoid, softmax_into, Matrix};

pub use bptt::{backward_sequence, forward_sequence, ForwardCache, ForwardOptions, ForwardOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Unimodal,
    Multimodal,
}

/// What replaces `M v` when a multimodal model is evaluated without its image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlindMode {
    /// Identity modulation; the step reduces to the plain LSTM.
    #[default]
    Ones,
    Zero,
    /// `M` applied to the mean training feature vector.
    MeanFeature,
}

impl std::str::FromStr for BlindMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ones" => Ok(BlindMode::Ones),
            "zero" => Ok(BlindMode::Zero),
            "mean-feature" => Ok(BlindMode::MeanFeature),
            _ => Err(Error::Config(format!("unknown blind mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub visual_dim: usize,
    pub vocab: usize,
    pub modality: Modality,
    /// `M` keeps its initial values for the whole run.
    pub frozen_modulation: bool,
    pub freeze_embeddings: bool,
    pub dropout: f64,
    pub blind_mode: BlindMode,
}

impl ModelConfig {
    pub fn for_table(table: &EmbeddingTable, hidden: usize, visual_dim: usize, modality: Modality) -> Self {
        ModelConfig {
            hidden,
            embed_dim: table.dim(),
            visual_dim,
            vocab: table.len(),
            modality,
            frozen_modulation: false,
            freeze_embeddings: false,
            dropout: 0.0,
            blind_mode: BlindMode::Ones,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed_dim == 0 || self.vocab == 0 {
            return Err(Error::Config("hidden, embed_dim and vocab must be positive".into()));
        }
        if self.modality == Modality::Multimodal && self.visual_dim == 0 {
            return Err(Error::Config("multimodal model needs a positive visual_dim".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn is_multimodal(&self) -> bool {
        self.modality == Modality::Multimodal
    }
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// Input weights, `4n × D`.
    pub w: Matrix,
    /// Recurrent weights, `4n × n`.
    pub v: Matrix,
    /// Gate biases, `4n`.
    pub b: Vec<f64>,
    /// Visual modulation matrix, `n × d_vis`.
    pub m: Matrix,
    /// Input embedding, `|V| × D`.
    pub embed: Matrix,
    /// Output projection, `|V| × n`.
    pub out: Matrix,
    pub out_bias: Vec<f64>,
}

pub const TENSOR_NAMES: [&str; 7] = ["w", "v", "b", "m", "embed", "out", "out_bias"];

impl LstmParams {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (n, d, dv, vocab) = (config.hidden, config.embed_dim, config.visual_dim, config.vocab);
        LstmParams {
            w: Matrix::zeros(4 * n, d),
            v: Matrix::zeros(4 * n, n),
            b: vec![0.0; 4 * n],
            m: Matrix::zeros(n, dv),
            embed: Matrix::zeros(vocab, d),
            out: Matrix::zeros(vocab, n),
            out_bias: vec![0.0; vocab],
        }
    }

    pub fn hidden(&self) -> usize {
        self.v.cols()
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            self.w.as_slice(),
            self.v.as_slice(),
            &self.b,
            self.m.as_slice(),
            self.embed.as_slice(),
            self.out.as_slice(),
            &self.out_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w.as_mut_slice(),
            self.v.as_mut_slice(),
            &mut self.b,
            self.m.as_mut_slice(),
            self.embed.as_mut_slice(),
            self.out.as_mut_slice(),
            &mut self.out_bias,
        ]
    }

    pub fn shapes(&self) -> [(usize, usize); 7] {
        [
            self.w.shape(),
            self.v.shape(),
            (self.b.len(), 1),
            self.m.shape(),
            self.embed.shape(),
            self.out.shape(),
            (self.out_bias.len(), 1),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Forget-gate bias slice.
    pub fn forget_bias(&self) -> &[f64] {
        let n = self.hidden();
        &self.b[n..2 * n]
    }
}

/// Draws `W`, `V`, `M`, `U` uniformly from `±1/sqrt(fan_in)`, copies the
/// embedding from the table and sets every bias to zero except the forget
/// gate, which starts at one.
pub fn init_params(config: &ModelConfig, table: &EmbeddingTable, seed: u64) -> Result<LstmParams> {
    config.validate()?;
    if table.dim() != config.embed_dim {
        return Err(Error::Shape(format!(
            "embedding table dim {} != configured embed_dim {}",
            table.dim(),
            config.embed_dim
        )));
    }
    if table.len() != config.vocab {
        return Err(Error::Shape(format!(
            "embedding table has {} pieces, config says vocab {}",
            table.len(),
            config.vocab
        )));
    }
    let (n, d, dv, vocab) = (config.hidden, config.embed_dim, config.visual_dim, config.vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fan = |k: usize| 1.0 / (k.max(1) as f64).sqrt();
    let w = Matrix::uniform(4 * n, d, fan(d), &mut rng);
    let v = Matrix::uniform(4 * n, n, fan(n), &mut rng);
    let m = Matrix::uniform(n, dv, fan(dv), &mut rng);
    let out = Matrix::uniform(vocab, n, fan(n), &mut rng);
    let mut b = vec![0.0; 4 * n];
    b[n..2 * n].iter_mut().for_each(|x| *x = 1.0);
    Ok(LstmParams {
        w,
        v,
        b,
        m,
        embed: table.vectors().clone(),
        out,
        out_bias: vec![0.0; vocab],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub z: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(n: usize) -> Self {
        LstmState {
            z: vec![0.0; n],
            c: vec![0.0; n],
        }
    }
}

/// Activated gates of one step, stacked `[i | f | g | o]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gates(pub Vec<f64>);

impl Gates {
    fn block(&self, k: usize) -> &[f64] {
        let n = self.0.len() / 4;
        &self.0[k * n..(k + 1) * n]
    }
    pub fn input(&self) -> &[f64] {
        self.block(0)
    }
    pub fn forget(&self) -> &[f64] {
        self.block(1)
    }
    pub fn cell(&self) -> &[f64] {
        self.block(2)
    }
    pub fn output(&self) -> &[f64] {
        self.block(3)
    }
}

/// One unmodulated LSTM step.
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> (LstmState, Gates) {
    let n = params.hidden();
    let mut pre = params.b.clone();
    params.w.matvec_add(x, &mut pre);
    params.v.matvec_add(&prev.z, &mut pre);
    for (k, a) in pre.iter_mut().enumerate() {
        *a = if k / n == 2 { a.tanh() } else { sigmoid(*a) };
    }
    let gates = Gates(pre);
    let (i, f, g, o) = (gates.input(), gates.forget(), gates.cell(), gates.output());
    let mut c = vec![0.0; n];
    let mut z = vec![0.0; n];
    for j in 0..n {
        c[j] = f[j] * prev.c[j] + i[j] * g[j];
        z[j] = o[j] * c[j].tanh();
    }
    (LstmState { z, c }, gates)
}

/// `z ⊙ (M v)`, with no squashing of `M v`.
pub fn visual_modulate(z: &[f64], m: &Matrix, visual: &[f64]) -> Vec<f64> {
    let gate = m.matvec(visual);
    z.iter().zip(&gate).map(|(a, b)| a * b).collect()
}

/// Configuration, parameters and the blind-mode reference feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: LstmParams,
    /// Mean training feature vector, used by [`BlindMode::MeanFeature`].
    pub mean_visual: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, table: &EmbeddingTable, seed: u64) -> Result<Self> {
        let params = init_params(&config, table, seed)?;
        let mean_visual = vec![0.0; config.visual_dim];
        Ok(Model {
            config,
            params,
            mean_visual,
        })
    }

    /// Rows used for word-level similarity lookups.
    pub fn vector_rows(&self, side: Side) -> &Matrix {
        match side {
            Side::Input => &self.params.embed,
            Side::Output => &self.params.out,
        }
    }

    /// The elementwise gate applied to `z`, or `None` for unimodal models.
    pub fn modulation(&self, visual: Option<&[f64]>, blinded: bool) -> Option<Vec<f64>> {
        if !self.config.is_multimodal() {
            return None;
        }
        let n = self.config.hidden;
        match (visual, blinded) {
            (Some(v), false) => Some(self.params.m.matvec(v)),
            _ => Some(match self.config.blind_mode {
                BlindMode::Ones => vec![1.0; n],
                BlindMode::Zero => vec![0.0; n],
                BlindMode::MeanFeature => self.params.m.matvec(&self.mean_visual),
            }),
        }
    }

    /// Advances one token in evaluation mode and returns next-token
    /// probabilities.
    pub fn step(&self, state: &LstmState, token: usize, modulation: Option<&[f64]>) -> (LstmState, Vec<f64>) {
        let (mut next, _) = lstm_step(&self.params, self.params.embed.row(token), state);
        if let Some(gate) = modulation {
            next.z.iter_mut().zip(gate).for_each(|(z, g)| *z *= g);
        }
        let mut logits = self.params.out_bias.clone();
        self.params.out.matvec_add(&next.z, &mut logits);
        let mut probs = vec![0.0; logits.len()];
        softmax_into(&logits, &mut probs);
        (next, probs)
    }
}
