//! Trains UM, MM and CotM on a synthetic corpus and prints the perplexity
//! grid under each blind substitute.
//!
//! cargo run --release --example grounding_ablation -- [gamma] [images] [background dims] [corpus seed]

use std::time::Instant;

use mmlstm::config::{ExperimentSpec, Profile};
use mmlstm::data::split_corpus;
use mmlstm::model::BlindMode;
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::{perplexity_table, train_runs, PreparedCorpus};

fn main() -> mmlstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().map_or(1.0, |s| s.parse().expect("gamma"));
    let images: usize = args.next().map_or(500, |s| s.parse().expect("images"));
    let background: usize = args.next().map_or(100, |s| s.parse().expect("background dims"));
    let corpus_seed: u64 = args.next().map_or(11, |s| s.parse().expect("corpus seed"));
    let spec = ExperimentSpec::for_profile(Profile::Desk);
    let corpus = synth::generate(&SynthConfig { images, gamma, background_dims: background, ..Default::default() }, corpus_seed)?;
    let split = split_corpus(&corpus.captions, spec.split_seed);
    let prepared = PreparedCorpus::new(&split, &corpus.embeddings, &corpus.features, spec.train.seq_len)?;
    let trials = mmlstm::commands::trial_spec(&spec);

    let start = Instant::now();
    let runs = train_runs(&prepared, &corpus.embeddings, &trials)?;
    println!("trained {} models in {:.1?}", runs.len(), start.elapsed());
    for mode in [BlindMode::Ones, BlindMode::MeanFeature, BlindMode::Zero] {
        let report = perplexity_table(&runs, &prepared, &trials, mode)?;
        println!("{}", report.to_text());
    }
    Ok(())
}
