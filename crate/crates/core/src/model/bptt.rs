//! Batched forward pass with activation cache, and exact reverse-mode
//! gradients of the masked mean negative log-likelihood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lstm_step, LstmParams, LstmState, Model};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::tensor::softmax_into;

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Enables dropout.
    pub train: bool,
    pub dropout_seed: u64,
    /// Substitute the blind-mode gate for every row's image.
    pub blinded: bool,
}

impl ForwardOptions {
    pub fn eval() -> Self {
        ForwardOptions::default()
    }

    pub fn eval_blinded() -> Self {
        ForwardOptions {
            blinded: true,
            ..Default::default()
        }
    }

    pub fn train(dropout_seed: u64) -> Self {
        ForwardOptions {
            train: true,
            dropout_seed,
            blinded: false,
        }
    }
}

struct StepCache {
    token: usize,
    target: Option<usize>,
    /// `[i | f | g | o]`, activated.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    /// `o ⊙ tanh(c)` before modulation.
    h: Vec<f64>,
    /// State passed to the next step (modulated when multimodal).
    z: Vec<f64>,
    /// Inverted-dropout multipliers; `None` when dropout is off.
    dropout: Option<Vec<f64>>,
    probs: Vec<f64>,
}

struct RowCache {
    modulation: Option<Vec<f64>>,
    /// Feature vector `M` was applied to, when `M` is on the gradient path.
    modulation_input: Option<Vec<f64>>,
    steps: Vec<StepCache>,
}

/// Activations kept for backpropagation.
pub struct ForwardCache {
    hidden: usize,
    vocab: usize,
    embed_dim: usize,
    visual_dim: usize,
    targets: usize,
    rows: Vec<RowCache>,
}

impl ForwardCache {
    /// Next-token distribution at `(row, t)`, if that position was evaluated.
    pub fn probabilities(&self, row: usize, t: usize) -> Option<&[f64]> {
        self.rows.get(row)?.steps.get(t).map(|s| s.probs.as_slice())
    }

    /// Hidden state emitted at `(row, t)`, after modulation.
    pub fn hidden_state(&self, row: usize, t: usize) -> Option<&[f64]> {
        self.rows.get(row)?.steps.get(t).map(|s| s.z.as_slice())
    }
}

pub struct ForwardOutput {
    /// Masked mean negative log-likelihood (0 when nothing is masked in).
    pub loss: f64,
    /// Summed negative log-likelihood over target positions.
    pub total_nll: f64,
    pub targets: usize,
    pub cache: ForwardCache,
}

impl Model {
    /// Runs every row of the batch from a zero state. Positions after a row's
    /// last target are not evaluated.
    pub fn forward(&self, batch: &Batch, opts: ForwardOptions) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let p = &self.params;
        let n = cfg.hidden;
        if batch.rows() > 0 && cfg.is_multimodal() && !opts.blinded && batch.visual.cols() != cfg.visual_dim {
            return Err(Error::Shape(format!(
                "batch visual dim {} != model visual dim {}",
                batch.visual.cols(),
                cfg.visual_dim
            )));
        }
        let drop_rate = if opts.train { cfg.dropout } else { 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.dropout_seed);
        let keep = 1.0 - drop_rate;

        let mut total_nll = 0.0;
        let mut targets = 0usize;
        let mut rows = Vec::with_capacity(batch.rows());
        for b in 0..batch.rows() {
            let len = batch.mask[b].iter().rposition(|&m| m).map_or(0, |t| t + 1);
            let visual = (batch.visual.cols() > 0).then(|| batch.visual.row(b));
            let modulation = self.modulation(visual, opts.blinded);
            let modulation_input = match (&modulation, opts.blinded) {
                (Some(_), false) => visual.map(<[f64]>::to_vec),
                (Some(_), true) if cfg.blind_mode == super::BlindMode::MeanFeature => {
                    Some(self.mean_visual.clone())
                }
                _ => None,
            };
            let mut state = LstmState::zeros(n);
            let mut steps = Vec::with_capacity(len);
            for t in 0..len {
                let token = batch.token_ids[b][t];
                if token >= cfg.vocab {
                    return Err(Error::Shape(format!("token id {token} outside vocabulary {}", cfg.vocab)));
                }
                let (next, gates) = lstm_step(p, p.embed.row(token), &state);
                let tanh_c: Vec<f64> = next.c.iter().map(|c| c.tanh()).collect();
                let h = next.z;
                let z: Vec<f64> = match &modulation {
                    Some(gate) => h.iter().zip(gate).map(|(a, g)| a * g).collect(),
                    None => h.clone(),
                };
                let dropout = (drop_rate > 0.0).then(|| {
                    (0..n)
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect::<Vec<f64>>()
                });
                let mut logits = p.out_bias.clone();
                match &dropout {
                    Some(d) => {
                        let zd: Vec<f64> = z.iter().zip(d).map(|(a, k)| a * k).collect();
                        p.out.matvec_add(&zd, &mut logits);
                    }
                    None => p.out.matvec_add(&z, &mut logits),
                }
                let mut probs = vec![0.0; cfg.vocab];
                let log_partition = softmax_into(&logits, &mut probs);
                let target = batch.mask[b][t].then(|| batch.targets[b][t]);
                if let Some(y) = target {
                    if y >= cfg.vocab {
                        return Err(Error::Shape(format!("target id {y} outside vocabulary {}", cfg.vocab)));
                    }
                    total_nll += log_partition - logits[y];
                    targets += 1;
                }
                steps.push(StepCache {
                    token,
                    target,
                    gates: gates.0,
                    c: next.c.clone(),
                    tanh_c,
                    h,
                    z: z.clone(),
                    dropout,
                    probs,
                });
                state = LstmState { z, c: next.c };
            }
            rows.push(RowCache {
                modulation,
                modulation_input,
                steps,
            });
        }
        let loss = if targets > 0 { total_nll / targets as f64 } else { 0.0 };
        Ok(ForwardOutput {
            loss,
            total_nll,
            targets,
            cache: ForwardCache {
                hidden: n,
                vocab: cfg.vocab,
                embed_dim: cfg.embed_dim,
                visual_dim: cfg.visual_dim,
                targets,
                rows,
            },
        })
    }

    /// Gradients of the masked mean NLL for the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache) -> Result<LstmParams> {
        let cfg = &self.config;
        if (cache.hidden, cache.vocab, cache.embed_dim, cache.visual_dim)
            != (cfg.hidden, cfg.vocab, cfg.embed_dim, cfg.visual_dim)
        {
            return Err(Error::Shape("forward cache does not match this model".into()));
        }
        let p = &self.params;
        let n = cfg.hidden;
        let mut grads = LstmParams::zeros(cfg);
        if cache.targets == 0 {
            return Ok(grads);
        }
        let inv_count = 1.0 / cache.targets as f64;
        let zeros = vec![0.0; n];

        let mut dlogits = vec![0.0; cfg.vocab];
        let mut dz = vec![0.0; n];
        let mut da = vec![0.0; 4 * n];
        let mut dx = vec![0.0; cfg.embed_dim];
        for row in &cache.rows {
            let mut dz_next = vec![0.0; n];
            let mut dc_next = vec![0.0; n];
            let mut dgate = vec![0.0; n];
            for (t, st) in row.steps.iter().enumerate().rev() {
                dz.copy_from_slice(&dz_next);
                if let Some(y) = st.target {
                    for (d, &pr) in dlogits.iter_mut().zip(&st.probs) {
                        *d = pr * inv_count;
                    }
                    dlogits[y] -= inv_count;
                    let zd: Vec<f64> = match &st.dropout {
                        Some(k) => st.z.iter().zip(k).map(|(a, b)| a * b).collect(),
                        None => st.z.clone(),
                    };
                    grads.out.outer_add(&dlogits, &zd);
                    crate::tensor::axpy(1.0, &dlogits, &mut grads.out_bias);
                    let mut dzd = vec![0.0; n];
                    p.out.matvec_t_add(&dlogits, &mut dzd);
                    match &st.dropout {
                        Some(k) => dz.iter_mut().zip(dzd.iter().zip(k)).for_each(|(a, (g, s))| *a += g * s),
                        None => crate::tensor::axpy(1.0, &dzd, &mut dz),
                    }
                }
                // z = h ⊙ gate
                let dh: Vec<f64> = match &row.modulation {
                    Some(gate) => {
                        for j in 0..n {
                            dgate[j] += dz[j] * st.h[j];
                        }
                        dz.iter().zip(gate).map(|(a, g)| a * g).collect()
                    }
                    None => dz.clone(),
                };
                let (c_prev, z_prev) = if t > 0 {
                    (&row.steps[t - 1].c[..], &row.steps[t - 1].z[..])
                } else {
                    (&zeros[..], &zeros[..])
                };
                let (gi, gf, gg, go) = (&st.gates[..n], &st.gates[n..2 * n], &st.gates[2 * n..3 * n], &st.gates[3 * n..]);
                for j in 0..n {
                    let tc = st.tanh_c[j];
                    let dc = dc_next[j] + dh[j] * go[j] * (1.0 - tc * tc);
                    let d_o = dh[j] * tc;
                    let d_i = dc * gg[j];
                    let d_f = dc * c_prev[j];
                    let d_g = dc * gi[j];
                    dc_next[j] = dc * gf[j];
                    da[j] = d_i * gi[j] * (1.0 - gi[j]);
                    da[n + j] = d_f * gf[j] * (1.0 - gf[j]);
                    da[2 * n + j] = d_g * (1.0 - gg[j] * gg[j]);
                    da[3 * n + j] = d_o * go[j] * (1.0 - go[j]);
                }
                let x = p.embed.row(st.token);
                grads.w.outer_add(&da, x);
                grads.v.outer_add(&da, z_prev);
                crate::tensor::axpy(1.0, &da, &mut grads.b);
                if !cfg.freeze_embeddings {
                    dx.iter_mut().for_each(|v| *v = 0.0);
                    p.w.matvec_t_add(&da, &mut dx);
                    crate::tensor::axpy(1.0, &dx, grads.embed.row_mut(st.token));
                }
                dz_next.iter_mut().for_each(|v| *v = 0.0);
                p.v.matvec_t_add(&da, &mut dz_next);
            }
            if let (Some(input), false) = (&row.modulation_input, cfg.frozen_modulation) {
                grads.m.outer_add(&dgate, input);
            }
        }
        Ok(grads)
    }
}

/// Free-function form of [`Model::forward`].
pub fn forward_sequence(model: &Model, batch: &Batch, opts: ForwardOptions) -> Result<ForwardOutput> {
    model.forward(batch, opts)
}

/// Free-function form of [`Model::backward`].
pub fn backward_sequence(model: &Model, cache: &ForwardCache) -> Result<LstmParams> {
    model.backward(cache)
}
