#![allow(dead_code)]

use mmlstm::data::Batch;
use mmlstm::lexicon::EmbeddingTable;
use mmlstm::model::{ForwardOptions, LstmParams, Modality, Model, ModelConfig};
use mmlstm::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `words` random pieces of dimension `dim`, plus the four specials.
pub fn random_table(words: usize, dim: usize, rng: &mut ChaCha8Rng) -> EmbeddingTable {
    let pieces: Vec<String> = (0..words).map(|i| format!("w{i}")).collect();
    let data = (0..words * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingTable::new(pieces, Matrix::from_vec(words, dim, data)).unwrap()
}

pub fn random_batch(rows: usize, seq_len: usize, vocab: usize, visual_dim: usize, rng: &mut ChaCha8Rng) -> Batch {
    let mut token_ids = Vec::new();
    let mut targets = Vec::new();
    let mut mask = Vec::new();
    for _ in 0..rows {
        token_ids.push((0..seq_len).map(|_| rng.random_range(0..vocab)).collect());
        targets.push((0..seq_len).map(|_| rng.random_range(0..vocab)).collect());
        // A prefix mask of random length, at least one position.
        let len = rng.random_range(1..=seq_len);
        mask.push((0..seq_len).map(|t| t < len).collect());
    }
    let visual = Matrix::from_vec(
        rows,
        visual_dim,
        (0..rows * visual_dim).map(|_| rng.random_range(0.0..1.5)).collect(),
    );
    Batch {
        seq_len,
        token_ids,
        targets,
        mask,
        visual,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Unimodal,
    Multimodal,
    FrozenM,
}

/// A model with every tensor drawn from `±scale`, so no gradient is trivially zero.
pub fn random_model(
    kind: Kind,
    table: &EmbeddingTable,
    hidden: usize,
    visual_dim: usize,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Model {
    let modality = if kind == Kind::Unimodal {
        Modality::Unimodal
    } else {
        Modality::Multimodal
    };
    let mut cfg = ModelConfig::for_table(table, hidden, visual_dim, modality);
    cfg.frozen_modulation = kind == Kind::FrozenM;
    cfg.dropout = dropout;
    let mut model = Model::new(cfg, table, rng.random()).unwrap();
    for t in model.params.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.random_range(-0.6..0.6);
        }
    }
    model
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Worst relative error between the analytic gradient and central
/// differences, `|a - n| / max(|a|, |n|, floor)`. Tensors the model does not
/// train (a frozen `M`) must have an exactly zero analytic gradient instead.
pub fn gradient_check(model: &Model, batch: &Batch, opts: ForwardOptions, step: f64, floor: f64) -> f64 {
    let out = model.forward(batch, opts).unwrap();
    let grads: LstmParams = model.backward(&out.cache).unwrap();
    let mut worst: f64 = 0.0;
    for ti in 0..7 {
        let frozen = (ti == 3 && model.config.frozen_modulation) || (ti == 4 && model.config.freeze_embeddings);
        let analytic = grads.tensors()[ti].to_vec();
        if frozen {
            assert!(analytic.iter().all(|&g| g == 0.0), "frozen tensor {ti} has a gradient");
            continue;
        }
        for (k, &a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            plus.params.tensors_mut()[ti][k] += step;
            let mut minus = model.clone();
            minus.params.tensors_mut()[ti][k] -= step;
            let lp = plus.forward(batch, opts).unwrap().loss;
            let lm = minus.forward(batch, opts).unwrap().loss;
            let numeric = (lp - lm) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}
