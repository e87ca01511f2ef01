//! SGD training with global-norm clipping and patience-based learning-rate
//! halving, perplexity evaluation, and multi-seed ablation trials.

use std::fmt::{self, Write as _};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{pack_batches, sequential_batches, Batch, CorpusSplit, EncodedCaption, FeatureStore};
use crate::error::{Error, Result};
use crate::lexicon::EmbeddingTable;
use crate::model::{BlindMode, ForwardOptions, LstmParams, Modality, Model, ModelConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ablation {
    #[serde(rename = "UM")]
    Um,
    #[serde(rename = "MM_VLVL")]
    MmVlvl,
    #[serde(rename = "MM_VLL")]
    MmVll,
    #[serde(rename = "CotM_VLVL")]
    CotmVlvl,
    #[serde(rename = "CotM_VLL")]
    CotmVll,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::Um,
        Ablation::MmVlvl,
        Ablation::MmVll,
        Ablation::CotmVlvl,
        Ablation::CotmVll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Um => "UM",
            Ablation::MmVlvl => "MM_VLVL",
            Ablation::MmVll => "MM_VLL",
            Ablation::CotmVlvl => "CotM_VLVL",
            Ablation::CotmVll => "CotM_VLL",
        }
    }

    /// The trained model this cell evaluates.
    pub fn variant(self) -> Variant {
        match self {
            Ablation::Um => Variant::Um,
            Ablation::MmVlvl | Ablation::MmVll => Variant::Mm,
            Ablation::CotmVlvl | Ablation::CotmVll => Variant::Cotm,
        }
    }

    /// Evaluated without the visual cue.
    pub fn blinded(self) -> bool {
        matches!(self, Ablation::MmVll | Ablation::CotmVll)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?}")))
    }
}

/// A distinct trained model: ablations sharing a variant differ only at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    Um,
    Mm,
    Cotm,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Um => "UM",
            Variant::Mm => "MM",
            Variant::Cotm => "CotM",
        }
    }

    pub fn model_config(self, table: &EmbeddingTable, hidden: usize, visual_dim: usize, dropout: f64) -> ModelConfig {
        let modality = match self {
            Variant::Um => Modality::Unimodal,
            _ => Modality::Multimodal,
        };
        let mut cfg = ModelConfig::for_table(table, hidden, visual_dim, modality);
        cfg.frozen_modulation = self == Variant::Cotm;
        cfg.dropout = dropout;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub patience: usize,
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub dropout: f64,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    /// Full-scale recipe: λ = 1.0, patience 3, clip 2, 15 epochs, B = T = 32,
    /// dropout 0.2, three seeds.
    fn default() -> Self {
        TrainConfig {
            lr0: 1.0,
            patience: 3,
            clip_norm: 2.0,
            epochs: 15,
            batch_size: 32,
            seq_len: 32,
            dropout: 0.2,
            seeds: vec![1, 2, 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.clip_norm > 0.0) {
            return Err(Error::Config("lr0 and clip_norm must be positive".into()));
        }
        if self.patience == 0 || self.epochs == 0 || self.batch_size == 0 || self.seq_len == 0 {
            return Err(Error::Config("patience, epochs, batch_size and seq_len must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

/// Scales every tensor by `clip_norm / ‖g‖` when the global L2 norm exceeds
/// `clip_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut LstmParams, clip_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

/// `param ← param − lr · grad`, skipping frozen tensors entirely.
pub fn sgd_update(params: &mut LstmParams, grads: &LstmParams, lr: f64, config: &ModelConfig) {
    for (k, (p, g)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        let frozen = (k == 3 && config.frozen_modulation) || (k == 4 && config.freeze_embeddings);
        if frozen {
            continue;
        }
        for (x, d) in p.iter_mut().zip(g) {
            *x -= lr * d;
        }
    }
}

/// Halves the learning rate once the best validation loss has not strictly
/// improved for `patience` consecutive epochs, then starts counting again.
#[derive(Clone, Debug)]
pub struct PatienceScheduler {
    patience: usize,
    best: f64,
    stalled: usize,
}

impl PatienceScheduler {
    pub fn new(patience: usize) -> Self {
        PatienceScheduler {
            patience: patience.max(1),
            best: f64::INFINITY,
            stalled: 0,
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    /// Feeds one epoch's validation loss; returns the learning rate to use next.
    pub fn step(&mut self, valid_loss: f64, lr: f64) -> f64 {
        if valid_loss < self.best {
            self.best = valid_loss;
            self.stalled = 0;
            return lr;
        }
        self.stalled += 1;
        if self.stalled >= self.patience {
            self.stalled = 0;
            lr / 2.0
        } else {
            lr
        }
    }
}

/// Replays the validation history and reports whether its last epoch halves `lr`.
pub fn lr_schedule_step(history: &[f64], lr: f64, patience: usize) -> f64 {
    let mut sched = PatienceScheduler::new(patience);
    let mut out = lr;
    for (i, &loss) in history.iter().enumerate() {
        let next = sched.step(loss, lr);
        if i + 1 == history.len() {
            out = next;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when the validation split is empty; the scheduler then sees the training loss.
    pub valid_loss: Option<f64>,
    pub learning_rate: f64,
    /// Excluded from equality and from serialized logs so reruns compare equal.
    #[serde(skip)]
    pub wall_time_ms: u128,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub test_perplexity: Option<f64>,
}

impl PartialEq for TrainLog {
    fn eq(&self, other: &Self) -> bool {
        self.test_perplexity == other.test_perplexity
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.epoch == b.epoch
                    && a.train_loss == b.train_loss
                    && a.valid_loss == b.valid_loss
                    && a.learning_rate == b.learning_rate
            })
    }
}

impl TrainLog {
    pub fn final_lr(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.learning_rate)
    }

    /// One JSON object per epoch, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).unwrap());
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "test_perplexity": self.test_perplexity }).to_string());
        out.push('\n');
        out
    }
}

/// Captions of each split, tokenized once, plus what evaluation needs.
#[derive(Clone, Debug)]
pub struct PreparedCorpus {
    pub train: Vec<EncodedCaption>,
    pub valid: Vec<EncodedCaption>,
    pub test: Vec<EncodedCaption>,
    pub pad: usize,
    pub seq_len: usize,
    pub visual_dim: usize,
    /// Mean training-image feature, the `mean-feature` blind substitute.
    pub mean_visual: Vec<f64>,
}

impl PreparedCorpus {
    pub fn new(split: &CorpusSplit, table: &EmbeddingTable, store: &FeatureStore, seq_len: usize) -> Result<Self> {
        let enc = |recs| crate::data::encode_captions(recs, table, Some(store), seq_len);
        let mut ids = split.train.iter().map(|r| r.image_id.as_str());
        let mean_visual = store.mean(Some(&mut ids));
        Ok(PreparedCorpus {
            train: enc(&split.train)?,
            valid: enc(&split.valid)?,
            test: enc(&split.test)?,
            pad: table.special().pad,
            seq_len,
            visual_dim: store.dim(),
            mean_visual,
        })
    }

    pub fn eval_batches(&self, captions: &[EncodedCaption], batch_size: usize) -> Vec<Batch> {
        sequential_batches(captions, batch_size, self.seq_len, self.pad)
    }
}

/// Mixes a base seed with two counters (splitmix64 finalizer).
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut x = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Summed NLL and target count over the batches, dropout off.
pub fn total_nll(model: &Model, batches: &[Batch], blinded: bool) -> Result<(f64, usize)> {
    let opts = if blinded {
        ForwardOptions::eval_blinded()
    } else {
        ForwardOptions::eval()
    };
    let mut sum = 0.0;
    let mut count = 0;
    for b in batches {
        let out = model.forward(b, opts)?;
        sum += out.total_nll;
        count += out.targets;
    }
    Ok((sum, count))
}

/// `exp` of the mean per-target negative log-likelihood.
pub fn evaluate_perplexity(model: &Model, batches: &[Batch], blinded: bool) -> Result<f64> {
    let (sum, count) = total_nll(model, batches, blinded)?;
    if count == 0 {
        return Err(Error::Config("perplexity over an empty batch set".into()));
    }
    Ok((sum / count as f64).exp())
}

/// Trains `model` in place. The run is a pure function of the model, the
/// corpus, `cfg` and `seed`.
pub fn train(model: &mut Model, corpus: &PreparedCorpus, cfg: &TrainConfig, seed: u64) -> Result<TrainLog> {
    cfg.validate()?;
    if corpus.train.is_empty() {
        return Err(Error::Config("empty training split".into()));
    }
    model.mean_visual = if corpus.mean_visual.len() == model.config.visual_dim {
        corpus.mean_visual.clone()
    } else {
        vec![0.0; model.config.visual_dim]
    };
    let valid_batches = corpus.eval_batches(&corpus.valid, cfg.batch_size);
    let mut lr = cfg.lr0;
    let mut sched = PatienceScheduler::new(cfg.patience);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let batches = pack_batches(&corpus.train, cfg.batch_size, corpus.seq_len, corpus.pad, derive_seed(seed, epoch as u64, 0));
        let mut sum = 0.0;
        let mut count = 0usize;
        for (bi, batch) in batches.iter().enumerate() {
            let out = model.forward(batch, ForwardOptions::train(derive_seed(seed, epoch as u64, bi as u64 + 1)))?;
            if !out.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: out.loss,
                });
            }
            let mut grads = model.backward(&out.cache)?;
            clip_global_norm(&mut grads, cfg.clip_norm);
            sgd_update(&mut model.params, &grads, lr, &model.config);
            sum += out.total_nll;
            count += out.targets;
        }
        if !model.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: batches.len(),
                loss: f64::NAN,
            });
        }
        let train_loss = sum / count.max(1) as f64;
        let valid_loss = if valid_batches.is_empty() {
            None
        } else {
            let (s, c) = total_nll(model, &valid_batches, false)?;
            (c > 0).then(|| s / c as f64)
        };
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            valid_loss,
            learning_rate: lr,
            wall_time_ms: started.elapsed().as_millis(),
        });
        lr = sched.step(valid_loss.unwrap_or(train_loss), lr);
    }
    Ok(log)
}

/// `(mean, standard error)` with SE = sample sd / √k; SE is 0 for one value.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

#[derive(Clone, Debug)]
pub struct TrainedRun {
    pub hidden: usize,
    pub variant: Variant,
    pub seed: u64,
    pub model: Model,
    pub log: TrainLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialCell {
    pub ablation: Ablation,
    pub hidden: usize,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub seeds: Vec<u64>,
    pub hidden_sizes: Vec<usize>,
    pub ablations: Vec<Ablation>,
    pub blind_mode: BlindMode,
    pub cells: Vec<TrialCell>,
}

impl TrialReport {
    pub fn cell(&self, ablation: Ablation, hidden: usize) -> Option<&TrialCell> {
        self.cells.iter().find(|c| c.ablation == ablation && c.hidden == hidden)
    }

    /// Table-shaped text: one row per ablation, one column per hidden size,
    /// arrows mark the direction against the UM baseline.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "Test perplexity over subword targets (lower is better), mean ± SE over {} seed(s); blind mode: {}",
            self.seeds.len(),
            blind_mode_name(self.blind_mode)
        )
        .unwrap();
        write!(out, "{:<12}", "Model").unwrap();
        for h in &self.hidden_sizes {
            write!(out, " {:>22}", format!("n={h}")).unwrap();
        }
        out.push('\n');
        for &ab in &self.ablations {
            write!(out, "{:<12}", ab.name()).unwrap();
            for &h in &self.hidden_sizes {
                let Some(cell) = self.cell(ab, h) else {
                    write!(out, " {:>22}", "-").unwrap();
                    continue;
                };
                let arrow = match (ab, self.cell(Ablation::Um, h)) {
                    (Ablation::Um, _) | (_, None) => " ",
                    (_, Some(base)) if cell.mean < base.mean => "↓",
                    (_, Some(base)) if cell.mean > base.mean => "↑",
                    _ => "=",
                };
                let mark = if self.seeds.len() == 1 { "†" } else { " " };
                write!(out, " {:>20}{mark}{arrow}", format!("{:.3} ± {:.3}", cell.mean, cell.se)).unwrap();
            }
            out.push('\n');
        }
        if self.seeds.len() == 1 {
            out.push_str("† single seed: standard error is reported as 0\n");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ablation,hidden,mean,se,n_seeds,per_seed\n");
        for c in &self.cells {
            let per: Vec<String> = c.per_seed.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(
                out,
                "{},{},{:.6},{:.6},{},{}",
                c.ablation,
                c.hidden,
                c.mean,
                c.se,
                c.per_seed.len(),
                per.join(";")
            )
            .unwrap();
        }
        out
    }
}

pub fn blind_mode_name(mode: BlindMode) -> &'static str {
    match mode {
        BlindMode::Ones => "ones",
        BlindMode::Zero => "zero",
        BlindMode::MeanFeature => "mean-feature",
    }
}

/// What to train and evaluate in one trial sweep.
#[derive(Clone, Debug)]
pub struct TrialSpec {
    pub hidden_sizes: Vec<usize>,
    pub ablations: Vec<Ablation>,
    pub train: TrainConfig,
    pub blind_mode: BlindMode,
    pub freeze_embeddings: bool,
}

/// The variants the ablation list needs, in a fixed order.
pub fn variants_for(ablations: &[Ablation]) -> Vec<Variant> {
    let mut v: Vec<Variant> = ablations.iter().map(|a| a.variant()).collect();
    v.sort();
    v.dedup();
    v
}

/// Trains every `(hidden, variant, seed)` once, in that order.
pub fn train_runs(corpus: &PreparedCorpus, table: &EmbeddingTable, spec: &TrialSpec) -> Result<Vec<TrainedRun>> {
    spec.train.validate()?;
    let mut runs = Vec::new();
    for &hidden in &spec.hidden_sizes {
        for variant in variants_for(&spec.ablations) {
            for &seed in &spec.train.seeds {
                let mut cfg = variant.model_config(table, hidden, corpus.visual_dim, spec.train.dropout);
                cfg.blind_mode = spec.blind_mode;
                cfg.freeze_embeddings = spec.freeze_embeddings;
                let mut model = Model::new(cfg, table, seed)?;
                let log = train(&mut model, corpus, &spec.train, seed)
                    .map_err(|e| e.context(format!("{} n={hidden} seed={seed}", variant.name())))?;
                runs.push(TrainedRun {
                    hidden,
                    variant,
                    seed,
                    model,
                    log,
                });
            }
        }
    }
    Ok(runs)
}

/// Test perplexity cells for already-trained runs. `blind_mode` overrides
/// what the models were configured with.
pub fn perplexity_table(
    runs: &[TrainedRun],
    corpus: &PreparedCorpus,
    spec: &TrialSpec,
    blind_mode: BlindMode,
) -> Result<TrialReport> {
    let batches = corpus.eval_batches(&corpus.test, spec.train.batch_size);
    let mut cells = Vec::new();
    for &hidden in &spec.hidden_sizes {
        for &ab in &spec.ablations {
            let mut per_seed = Vec::new();
            for &seed in &spec.train.seeds {
                let run = runs
                    .iter()
                    .find(|r| r.hidden == hidden && r.variant == ab.variant() && r.seed == seed)
                    .ok_or_else(|| Error::Config(format!("no trained {} model for n={hidden} seed={seed}", ab.variant().name())))?;
                let mut model = run.model.clone();
                model.config.blind_mode = blind_mode;
                per_seed.push(evaluate_perplexity(&model, &batches, ab.blinded())?);
            }
            let (mean, se) = mean_se(&per_seed);
            cells.push(TrialCell {
                ablation: ab,
                hidden,
                per_seed,
                mean,
                se,
            });
        }
    }
    Ok(TrialReport {
        seeds: spec.train.seeds.clone(),
        hidden_sizes: spec.hidden_sizes.clone(),
        ablations: spec.ablations.clone(),
        blind_mode,
        cells,
    })
}

/// Trains and evaluates every cell of the sweep.
pub fn run_trials(
    corpus: &PreparedCorpus,
    table: &EmbeddingTable,
    spec: &TrialSpec,
) -> Result<(TrialReport, Vec<TrainedRun>)> {
    let mut runs = train_runs(corpus, table, spec)?;
    let report = perplexity_table(&runs, corpus, spec, spec.blind_mode)?;
    let batches = corpus.eval_batches(&corpus.test, spec.train.batch_size);
    for run in &mut runs {
        run.log.test_perplexity = Some(evaluate_perplexity(&run.model, &batches, false)?);
    }
    Ok((report, runs))
}
