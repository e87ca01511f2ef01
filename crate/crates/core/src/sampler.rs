//! Length-constrained caption generation: beam search over a top-k/top-p
//! filtered candidate set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::SpecialIds;
use crate::model::{LstmState, Model};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub k: usize,
    pub p: f64,
    pub beam_width: usize,
    /// Output length in tokens, prompt included.
    pub target_length: usize,
    /// Prompt token ids.
    pub prompt: Vec<usize>,
    /// Reserved for a stochastic mode; beam ranking ignores it.
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            k: 10,
            p: 0.3,
            beam_width: 5,
            target_length: 8,
            prompt: Vec::new(),
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.beam_width == 0 {
            return Err(Error::Config("sampler k and beam_width must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!("sampler p must be in (0, 1], got {}", self.p)));
        }
        if self.target_length < self.prompt.len() {
            return Err(Error::Config(format!(
                "target length {} is shorter than the prompt ({} tokens)",
                self.target_length,
                self.prompt.len()
            )));
        }
        Ok(())
    }
}

/// Keeps the `k` most probable tokens, then the shortest prefix of those
/// whose mass reaches `p`, and renormalizes. Ties go to the lower id.
/// Returns `(token, probability)` in descending probability.
pub fn filter_top_k_top_p(dist: &[f64], k: usize, p: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
    order.truncate(k.max(1));
    let mut kept = Vec::with_capacity(order.len());
    let mut mass = 0.0;
    for id in order {
        kept.push((id, dist[id]));
        mass += dist[id];
        if mass >= p {
            break;
        }
    }
    if mass > 0.0 {
        kept.iter_mut().for_each(|(_, q)| *q /= mass);
    }
    kept
}

/// A finished hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Prompt followed by generated tokens; always `target_length` long.
    pub tokens: Vec<usize>,
    /// Sum of the generated tokens' log-probabilities, taken from the model
    /// distribution with PAD, BOS and EOS removed and renormalized.
    pub log_prob: f64,
    /// `log_prob` divided by the number of generated tokens (0 when none).
    pub score: f64,
}

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<usize>,
    log_prob: f64,
    state: LstmState,
    probs: Vec<f64>,
}

/// Probabilities with PAD, BOS and EOS removed and the rest renormalized.
/// Generation has a fixed length, so these can never be emitted.
fn candidate_distribution(probs: &[f64], special: SpecialIds) -> Vec<f64> {
    let mut d = probs.to_vec();
    for id in [special.pad, special.bos, special.eos] {
        d[id] = 0.0;
    }
    let total: f64 = d.iter().sum();
    if total > 0.0 {
        d.iter_mut().for_each(|x| *x /= total);
    }
    d
}

/// Deterministic beam search from BOS followed by the prompt.
///
/// Every hypothesis is extended over its filtered candidate set and the best
/// by cumulative log-probability survive (ties by the lexicographically
/// smaller token sequence). All hypotheses have the same length, so ranking
/// by the length-normalized score is equivalent.
///
/// Plain beam search can return a worse hypothesis at a larger width, so the
/// search runs at every width `1..=beam_width` and keeps the best result
/// (the smallest width on ties). A wider beam therefore never scores lower.
pub fn generate(model: &Model, special: SpecialIds, cfg: &SamplerConfig, visual: Option<&[f64]>) -> Result<Generation> {
    cfg.validate()?;
    let vocab = model.config.vocab;
    if let Some(&bad) = cfg.prompt.iter().find(|&&t| t >= vocab) {
        return Err(Error::Config(format!("prompt token {bad} outside vocabulary of {vocab}")));
    }
    if model.config.is_multimodal() {
        if let Some(v) = visual {
            if v.len() != model.config.visual_dim {
                return Err(Error::Shape(format!(
                    "visual feature has {} dims, model expects {}",
                    v.len(),
                    model.config.visual_dim
                )));
            }
        }
    }
    let modulation = model.modulation(visual, visual.is_none());
    let gate = modulation.as_deref();

    let mut state = LstmState::zeros(model.config.hidden);
    let (s, mut probs) = model.step(&state, special.bos, gate);
    state = s;
    for &t in &cfg.prompt {
        (state, probs) = model.step(&state, t, gate);
    }
    let root = Hypothesis {
        tokens: cfg.prompt.clone(),
        log_prob: 0.0,
        state,
        probs,
    };
    let mut best: Option<Hypothesis> = None;
    for width in 1..=cfg.beam_width {
        let h = beam_search(model, special, cfg, width, gate, root.clone());
        if best.as_ref().is_none_or(|b| h.log_prob > b.log_prob) {
            best = Some(h);
        }
    }
    let best = best.expect("beam_width >= 1");
    let generated = cfg.target_length - cfg.prompt.len();
    Ok(Generation {
        score: if generated == 0 { 0.0 } else { best.log_prob / generated as f64 },
        log_prob: best.log_prob,
        tokens: best.tokens,
    })
}

fn beam_search(
    model: &Model,
    special: SpecialIds,
    cfg: &SamplerConfig,
    width: usize,
    gate: Option<&[f64]>,
    root: Hypothesis,
) -> Hypothesis {
    let mut beams = vec![root];
    for step in cfg.prompt.len()..cfg.target_length {
        let mut expansions: Vec<(usize, usize, f64)> = Vec::new();
        for (b, hyp) in beams.iter().enumerate() {
            let cand = candidate_distribution(&hyp.probs, special);
            for (tok, _) in filter_top_k_top_p(&cand, cfg.k, cfg.p) {
                expansions.push((b, tok, hyp.log_prob + cand[tok].ln()));
            }
        }
        expansions.sort_by(|a, b| {
            b.2.total_cmp(&a.2)
                .then_with(|| beams[a.0].tokens.cmp(&beams[b.0].tokens))
                .then(a.1.cmp(&b.1))
        });
        expansions.truncate(width);
        let last = step + 1 == cfg.target_length;
        beams = expansions
            .into_iter()
            .map(|(b, tok, log_prob)| {
                let parent = &beams[b];
                let mut tokens = parent.tokens.clone();
                tokens.push(tok);
                let (state, probs) = if last {
                    (parent.state.clone(), Vec::new())
                } else {
                    model.step(&parent.state, tok, gate)
                };
                Hypothesis {
                    tokens,
                    log_prob,
                    state,
                    probs,
                }
            })
            .collect();
    }
    beams.swap_remove(0)
}

/// Plain argmax decoding over the same candidate set, for reference.
pub fn greedy(model: &Model, special: SpecialIds, prompt: &[usize], target_length: usize, visual: Option<&[f64]>) -> Vec<usize> {
    let modulation = model.modulation(visual, visual.is_none());
    let gate = modulation.as_deref();
    let mut state = LstmState::zeros(model.config.hidden);
    let (s, mut probs) = model.step(&state, special.bos, gate);
    state = s;
    for &t in prompt {
        (state, probs) = model.step(&state, t, gate);
    }
    let mut out = prompt.to_vec();
    while out.len() < target_length {
        let cand = candidate_distribution(&probs, special);
        let tok = filter_top_k_top_p(&cand, 1, 1.0)[0].0;
        out.push(tok);
        (state, probs) = model.step(&state, tok, gate);
    }
    out
}
