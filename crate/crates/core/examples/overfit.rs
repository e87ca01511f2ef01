//! Memorizes ten captions and reads them back with greedy decoding.
//!
//! cargo run --release --example overfit -- [hidden] [epochs]

use mmlstm::data::encode_captions;
use mmlstm::model::Model;
use mmlstm::sampler::greedy;
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::{evaluate_perplexity, train, PreparedCorpus, TrainConfig, Variant};

fn main() -> mmlstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let hidden: usize = args.next().map_or(64, |s| s.parse().expect("hidden"));
    let epochs: usize = args.next().map_or(200, |s| s.parse().expect("epochs"));
    // The first corpus seed whose five scenes give ten distinct captions.
    let cfg = SynthConfig { images: 5, captions_per_lang: 1, ..Default::default() };
    let corpus = (0u64..)
        .map(|s| synth::generate(&cfg, s).expect("valid config"))
        .find(|c| {
            let mut texts: Vec<&str> = c.captions.iter().map(|r| r.text.as_str()).collect();
            texts.sort();
            texts.dedup();
            texts.len() == 10
        })
        .expect("some seed has distinct scenes");
    let table = &corpus.embeddings;
    let seq_len = 16;
    let prepared = PreparedCorpus {
        train: encode_captions(&corpus.captions, table, Some(&corpus.features), seq_len)?,
        valid: Vec::new(),
        test: Vec::new(),
        pad: table.special().pad,
        seq_len,
        visual_dim: corpus.features.dim(),
        mean_visual: corpus.features.mean(None),
    };
    let tc = TrainConfig { epochs, batch_size: 1, seq_len, dropout: 0.0, seeds: vec![1], ..TrainConfig::default() };
    let mut model = Model::new(Variant::Mm.model_config(table, hidden, corpus.features.dim(), 0.0), table, 1)?;
    let log = train(&mut model, &prepared, &tc, 1)?;
    let ppl = evaluate_perplexity(&model, &prepared.eval_batches(&prepared.train, 10), false)?;
    println!("{} epochs, final lr {:?}, training perplexity {ppl:.4}", log.epochs.len(), log.final_lr());

    for rec in &corpus.captions {
        let ids = table.encode_words(&rec.text);
        let v = corpus.features.get(&rec.image_id).expect("features");
        let out = greedy(&model, table.special(), &ids[..1], ids.len(), Some(v));
        let mark = if out == ids { "ok " } else { "BAD" };
        println!("{mark} {:<32} -> {}", rec.text, table.decode(&out));
    }
    Ok(())
}
