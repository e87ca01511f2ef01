//! Trains UM and MM on a synthetic corpus and correlates their word vectors
//! with the synthetic similarity norms, controlling MM for UM.
//!
//! cargo run --release --example similarity_eval -- [images]

use mmlstm::commands::{similarity_report, similarity_text, trial_spec};
use mmlstm::config::{ExperimentSpec, Profile};
use mmlstm::data::split_corpus;
use mmlstm::simeval::LexiconSettings;
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::{train_runs, Ablation, PreparedCorpus, Variant};

fn main() -> mmlstm::Result<()> {
    let images: usize = std::env::args().nth(1).map_or(300, |s| s.parse().expect("images"));
    let mut spec = ExperimentSpec::for_profile(Profile::Desk);
    spec.ablations = vec![Ablation::Um, Ablation::MmVlvl];
    let corpus = synth::generate(&SynthConfig { images, ..Default::default() }, 2)?;
    let split = split_corpus(&corpus.captions, spec.split_seed);
    let prepared = PreparedCorpus::new(&split, &corpus.embeddings, &corpus.features, spec.train.seq_len)?;
    let runs = train_runs(&prepared, &corpus.embeddings, &trial_spec(&spec))?;

    let pick = |variant, seed| {
        runs.iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .map(|r| r.model.clone())
            .expect("trained")
    };
    let per_seed: Vec<_> = spec
        .train
        .seeds
        .iter()
        .map(|&s| (pick(Variant::Mm, s), Some(pick(Variant::Um, s))))
        .collect();
    let blocks = similarity_report(
        &corpus.embeddings,
        &corpus.similarity,
        &spec.hidden_sizes,
        &[per_seed],
        LexiconSettings::default(),
    );
    let (text, csv) = similarity_text(&blocks);
    println!("{text}\n{csv}");
    Ok(())
}
