//! The command suite behind the `mmlstm` binary. Each command is a thin
//! orchestrator over the library modules and returns the text it would print.
//!
//! Output layout under `paths.out`:
//!
//! ```text
//! n<hidden>/<UM|MM|CotM>/<seed>.ckpt         checkpoint
//! n<hidden>/<UM|MM|CotM>/<seed>.log.jsonl    per-epoch training log
//! ppl.txt, ppl.csv                           perplexity grid
//! sim.txt, sim.csv                           similarity report
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::config::ExperimentSpec;
use crate::data::{load_captions, split_corpus, CaptionRecord, FeatureStore, Lang};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::lexicon::EmbeddingTable;
use crate::model::checkpoint::{Checkpoint, Progress, Seeds};
use crate::sampler::{generate, SamplerConfig};
use crate::simeval::convert::{convert, SimFormat};
use crate::simeval::{aggregate_seeds, evaluate_collection, LexiconSettings, ModelVectors, SimReport, SimilarityDataset};
use crate::synth;
use crate::trainer::{
    evaluate_perplexity, perplexity_table, train_runs, Ablation, PreparedCorpus, TrainLog, TrainedRun, TrialReport,
    TrialSpec, Variant,
};

pub fn checkpoint_path(out: &Path, hidden: usize, variant: Variant, seed: u64) -> PathBuf {
    out.join(format!("n{hidden}")).join(variant.name()).join(format!("{seed}.ckpt"))
}

pub fn log_path(out: &Path, hidden: usize, variant: Variant, seed: u64) -> PathBuf {
    out.join(format!("n{hidden}")).join(variant.name()).join(format!("{seed}.log.jsonl"))
}

pub fn trial_spec(spec: &ExperimentSpec) -> TrialSpec {
    TrialSpec {
        hidden_sizes: spec.hidden_sizes.clone(),
        ablations: spec.ablations.clone(),
        train: spec.train.clone(),
        blind_mode: spec.blind_mode,
        freeze_embeddings: spec.freeze_embeddings,
    }
}

/// Captions, features and embeddings named by the spec.
pub struct Inputs {
    pub captions: Vec<CaptionRecord>,
    pub features: FeatureStore,
    pub table: EmbeddingTable,
}

pub fn load_inputs(spec: &ExperimentSpec) -> Result<Inputs> {
    Ok(Inputs {
        captions: load_captions(&spec.paths.captions())?,
        features: FeatureStore::load(&spec.paths.features())?,
        table: EmbeddingTable::load(&spec.paths.embeddings())?,
    })
}

pub fn prepare(spec: &ExperimentSpec, inputs: &Inputs) -> Result<PreparedCorpus> {
    let split = split_corpus(&inputs.captions, spec.split_seed);
    PreparedCorpus::new(&split, &inputs.table, &inputs.features, spec.train.seq_len)
}

/// Writes the synthetic corpus into `paths.data`.
pub fn cmd_synth(spec: &ExperimentSpec) -> Result<String> {
    let corpus = synth::generate(&spec.synth, spec.synth_seed)?;
    let dir = &spec.paths.data;
    write_file(&spec.paths.captions(), crate::data::captions_to_jsonl(&corpus.captions))?;
    write_file(&spec.paths.features(), corpus.features.to_text())?;
    write_file(&spec.paths.embeddings(), corpus.embeddings.to_text())?;
    for d in &corpus.similarity {
        write_file(&spec.paths.sim_dir().join(format!("{}.tsv", d.name)), d.to_tsv())?;
    }
    Ok(format!(
        "wrote {} captions for {} images (gamma = {}, feature dim {}), {} embeddings and {} similarity datasets to {}\n",
        corpus.captions.len(),
        corpus.features.len(),
        spec.synth.gamma,
        corpus.features.dim(),
        corpus.embeddings.len(),
        corpus.similarity.len(),
        dir.display()
    ))
}

/// Loads every input and cross-checks them; fails on the first problem.
pub fn cmd_validate(spec: &ExperimentSpec) -> Result<String> {
    let inputs = load_inputs(spec)?;
    let mut out = String::new();
    let missing: Vec<&str> = inputs
        .captions
        .iter()
        .filter(|r| inputs.features.get(&r.image_id).is_none())
        .map(|r| r.image_id.as_str())
        .collect();
    if let Some(first) = missing.first() {
        return Err(Error::Config(format!(
            "{} captions reference images without features (first: {first})",
            missing.len()
        )));
    }
    let unk = inputs.table.special().unk;
    let (mut tokens, mut unks) = (0usize, 0usize);
    let mut langs = [0usize; 2];
    for r in &inputs.captions {
        let ids = inputs.table.tokenize(&r.text);
        tokens += ids.interior().len();
        unks += ids.interior().iter().filter(|&&t| t == unk).count();
        langs[(r.lang == Lang::Es) as usize] += 1;
    }
    let split = split_corpus(&inputs.captions, spec.split_seed);
    writeln!(
        out,
        "captions: {} ({} en, {} es), {} tokens, {} unknown",
        inputs.captions.len(),
        langs[0],
        langs[1],
        tokens,
        unks
    )
    .unwrap();
    writeln!(out, "features: {} images, dim {}", inputs.features.len(), inputs.features.dim()).unwrap();
    writeln!(out, "embeddings: {} pieces, dim {}", inputs.table.len(), inputs.table.dim()).unwrap();
    writeln!(
        out,
        "split: {} train, {} valid, {} test captions",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    )
    .unwrap();
    let files = spec.paths.dataset_files().unwrap_or_default();
    for path in files {
        let d = SimilarityDataset::load(&path)?;
        writeln!(out, "dataset {}: {} pairs", d.name, d.len()).unwrap();
    }
    Ok(out)
}

fn save_run(out: &Path, run: &TrainedRun) -> Result<()> {
    let progress = Progress {
        epochs_completed: run.log.epochs.len(),
        learning_rate: run.log.final_lr().unwrap_or(f64::NAN),
        best_valid_loss: run
            .log
            .epochs
            .iter()
            .filter_map(|e| e.valid_loss)
            .min_by(f64::total_cmp),
    };
    Checkpoint {
        model: run.model.clone(),
        seeds: Seeds {
            init: run.seed,
            train: run.seed,
        },
        progress,
    }
    .save(&checkpoint_path(out, run.hidden, run.variant, run.seed))?;
    write_file(&log_path(out, run.hidden, run.variant, run.seed), run.log.to_jsonl())
}

fn write_ppl(out: &Path, report: &TrialReport) -> Result<String> {
    let text = report.to_text();
    write_file(&out.join("ppl.txt"), &text)?;
    write_file(&out.join("ppl.csv"), report.to_csv())?;
    Ok(text)
}

/// Trains every model the sweep needs, saves checkpoints and logs, and
/// writes the perplexity grid.
pub fn cmd_train(spec: &ExperimentSpec) -> Result<String> {
    let inputs = load_inputs(spec)?;
    let corpus = prepare(spec, &inputs)?;
    let trials = trial_spec(spec);
    let mut runs = train_runs(&corpus, &inputs.table, &trials)?;
    let test = corpus.eval_batches(&corpus.test, spec.train.batch_size);
    for run in &mut runs {
        if !test.is_empty() {
            run.log.test_perplexity = Some(evaluate_perplexity(&run.model, &test, false)?);
        }
        save_run(&spec.paths.out, run)?;
    }
    let report = perplexity_table(&runs, &corpus, &trials, spec.blind_mode)?;
    write_ppl(&spec.paths.out, &report)
}

fn load_run(spec: &ExperimentSpec, hidden: usize, variant: Variant, seed: u64) -> Result<TrainedRun> {
    let path = checkpoint_path(&spec.paths.out, hidden, variant, seed);
    let ck = Checkpoint::load(&path).map_err(|e| e.context("run `train` first"))?;
    Ok(TrainedRun {
        hidden,
        variant,
        seed,
        model: ck.model,
        log: TrainLog::default(),
    })
}

/// Recomputes the perplexity grid from saved checkpoints.
pub fn cmd_ppl(spec: &ExperimentSpec) -> Result<String> {
    let inputs = load_inputs(spec)?;
    let corpus = prepare(spec, &inputs)?;
    let trials = trial_spec(spec);
    let mut runs = Vec::new();
    for &hidden in &spec.hidden_sizes {
        for variant in crate::trainer::variants_for(&spec.ablations) {
            for &seed in &spec.train.seeds {
                runs.push(load_run(spec, hidden, variant, seed)?);
            }
        }
    }
    let report = perplexity_table(&runs, &corpus, &trials, spec.blind_mode)?;
    write_ppl(&spec.paths.out, &report)
}

/// Similarity reports for already-loaded models, one block per hidden size.
/// `models[h][s]` holds `(MM, Option<UM>)` for hidden size `h` and seed `s`.
pub fn similarity_report(
    table: &EmbeddingTable,
    datasets: &[SimilarityDataset],
    hidden_sizes: &[usize],
    models: &[Vec<(crate::model::Model, Option<crate::model::Model>)>],
    settings: LexiconSettings,
) -> Vec<(usize, SimReport)> {
    let mut blocks = Vec::new();
    for (&hidden, per_seed) in hidden_sizes.iter().zip(models) {
        let mut names = vec!["MM"];
        if per_seed.first().is_some_and(|p| p.1.is_some()) {
            names.push("UM");
        }
        let outcomes: Vec<_> = per_seed
            .iter()
            .map(|(mm, um)| {
                let mut vecs = vec![ModelVectors {
                    name: "MM",
                    rows: mm.vector_rows(settings.side),
                }];
                if let Some(um) = um {
                    vecs.push(ModelVectors {
                        name: "UM",
                        rows: um.vector_rows(settings.side),
                    });
                }
                evaluate_collection(datasets, table, &vecs, settings)
            })
            .collect();
        blocks.push((hidden, aggregate_seeds(&names, &outcomes)));
    }
    blocks
}

pub fn similarity_text(blocks: &[(usize, SimReport)]) -> (String, String) {
    let mut text = String::new();
    let mut csv = String::new();
    for (i, (hidden, report)) in blocks.iter().enumerate() {
        writeln!(text, "#Hidden units={hidden}").unwrap();
        text.push_str(&report.to_text());
        text.push('\n');
        for (j, line) in report.to_csv().lines().enumerate() {
            if j == 0 {
                if i == 0 {
                    writeln!(csv, "hidden,{line}").unwrap();
                }
            } else {
                writeln!(csv, "{hidden},{line}").unwrap();
            }
        }
    }
    (text, csv)
}

/// Correlates MM (and UM, when trained) word vectors with every dataset.
pub fn cmd_sim(spec: &ExperimentSpec) -> Result<String> {
    let table = EmbeddingTable::load(&spec.paths.embeddings())?;
    let datasets = spec
        .paths
        .dataset_files()?
        .iter()
        .map(|p| SimilarityDataset::load(p))
        .collect::<Result<Vec<_>>>()?;
    if datasets.is_empty() {
        return Err(Error::Config("no similarity datasets found".into()));
    }
    let with_um = spec.ablations.contains(&Ablation::Um);
    let mut models = Vec::new();
    for &hidden in &spec.hidden_sizes {
        let mut per_seed = Vec::new();
        for &seed in &spec.train.seeds {
            let mm = load_run(spec, hidden, Variant::Mm, seed)?.model;
            let um = if with_um {
                Some(load_run(spec, hidden, Variant::Um, seed)?.model)
            } else {
                None
            };
            per_seed.push((mm, um));
        }
        models.push(per_seed);
    }
    let settings = LexiconSettings {
        side: spec.sim.side,
        mode: spec.sim.lookup,
    };
    let blocks = similarity_report(&table, &datasets, &spec.hidden_sizes, &models, settings);
    let (text, csv) = similarity_text(&blocks);
    write_file(&spec.paths.out.join("sim.txt"), &text)?;
    write_file(&spec.paths.out.join("sim.csv"), csv)?;
    Ok(text)
}

/// What to caption in `cmd_sample`.
#[derive(Clone, Debug, Default)]
pub struct SampleRequest {
    pub image_id: Option<String>,
    pub prompt: Option<String>,
    pub lang: Option<Lang>,
}

/// Generates one caption with the first configured hidden size, seed and
/// ablation. Blinded ablations and requests without an image use the blind
/// substitute.
pub fn cmd_sample(spec: &ExperimentSpec, req: &SampleRequest) -> Result<String> {
    let table = EmbeddingTable::load(&spec.paths.embeddings())?;
    let ablation = spec.ablations[0];
    let hidden = spec.hidden_sizes[0];
    let seed = spec.train.seeds[0];
    let model = load_run(spec, hidden, ablation.variant(), seed)?.model;
    let lang = req.lang.unwrap_or(Lang::En);
    let mut visual = None;
    let mut reference = None;
    if let Some(id) = &req.image_id {
        let store = FeatureStore::load(&spec.paths.features())?;
        let v = store
            .get(id)
            .ok_or_else(|| Error::Config(format!("no features for image {id:?}")))?;
        if !ablation.blinded() {
            visual = Some(v.to_vec());
        }
        if let Ok(records) = load_captions(&spec.paths.captions()) {
            reference = records.into_iter().find(|r| r.image_id == *id && r.lang == lang);
        }
    }
    let prompt_text = req.prompt.clone().unwrap_or_else(|| lang.default_prompt().to_string());
    let prompt = table.encode_words(&prompt_text);
    let target_length = spec
        .sampler
        .length
        .or_else(|| reference.as_ref().map(|r| table.encode_words(&r.text).len()))
        .unwrap_or(8)
        .max(prompt.len());
    let cfg = SamplerConfig {
        k: spec.sampler.k,
        p: spec.sampler.p,
        beam_width: spec.sampler.beam_width,
        target_length,
        prompt,
        seed,
    };
    let g = generate(&model, table.special(), &cfg, visual.as_deref())?;
    let mut out = format!("{}\t{:.4}\n", table.decode(&g.tokens), g.score);
    if let Some(r) = reference {
        writeln!(out, "reference\t{}", r.text).unwrap();
    }
    Ok(out)
}

/// Converts one upstream similarity file into the common TSV.
pub fn cmd_convert(format: SimFormat, input: &Path, output: &Path, lang: Lang) -> Result<String> {
    let d = convert(format, &read_to_string(input)?, lang).map_err(|e| e.context(input.display().to_string()))?;
    write_file(output, d.to_tsv())?;
    Ok(format!("{}: {} pairs -> {}\n", d.name, d.len(), output.display()))
}
