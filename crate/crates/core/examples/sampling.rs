//! Trains a small multimodal model, then captions held-out images in both
//! languages with beam search and compares the result against the reference.
//!
//! cargo run --release --example sampling -- [beam width] [k] [p]

use mmlstm::config::{ExperimentSpec, Profile};
use mmlstm::data::{split_corpus, Lang};
use mmlstm::model::Model;
use mmlstm::sampler::{generate, SamplerConfig};
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::{train, PreparedCorpus, Variant};

fn main() -> mmlstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let beam_width: usize = args.next().map_or(5, |s| s.parse().expect("beam width"));
    let k: usize = args.next().map_or(10, |s| s.parse().expect("k"));
    let p: f64 = args.next().map_or(0.3, |s| s.parse().expect("p"));

    let spec = ExperimentSpec::for_profile(Profile::Desk);
    let corpus = synth::generate(&SynthConfig { images: 300, ..Default::default() }, 6)?;
    let table = &corpus.embeddings;
    let split = split_corpus(&corpus.captions, spec.split_seed);
    let prepared = PreparedCorpus::new(&split, table, &corpus.features, spec.train.seq_len)?;
    let cfg = Variant::Mm.model_config(table, 32, corpus.features.dim(), spec.train.dropout);
    let mut model = Model::new(cfg, table, 1)?;
    train(&mut model, &prepared, &spec.train, 1)?;

    let mut seen = std::collections::BTreeSet::new();
    let firsts = split.test.iter().filter(|r| seen.insert((r.image_id.clone(), r.lang)));
    for rec in firsts.take(8) {
        let lang: Lang = rec.lang;
        let reference = table.encode_words(&rec.text);
        let cfg = SamplerConfig {
            k,
            p,
            beam_width,
            target_length: reference.len(),
            prompt: table.encode_words(lang.default_prompt()),
            seed: 0,
        };
        let v = corpus.features.get(&rec.image_id).expect("features");
        let g = generate(&model, table.special(), &cfg, Some(v))?;
        println!("{} [{lang}] {:<34} score {:>7.4}  ref: {}", rec.image_id, table.decode(&g.tokens), g.score, rec.text);
    }
    Ok(())
}
