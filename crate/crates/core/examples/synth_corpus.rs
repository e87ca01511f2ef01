//! Generates the synthetic bilingual corpus and shows what is in it.
//!
//! cargo run --example synth_corpus -- [gamma] [seed]

use mmlstm::synth::{self, Scene, SynthConfig};

fn main() -> mmlstm::Result<()> {
    let mut args = std::env::args().skip(1);
    let gamma: f64 = args.next().map_or(1.0, |s| s.parse().expect("gamma"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let cfg = SynthConfig { images: 20, gamma, ..Default::default() };
    let corpus = synth::generate(&cfg, seed)?;

    println!(
        "{} captions, {} images, feature dim {}, {} pieces of dim {}",
        corpus.captions.len(),
        corpus.features.len(),
        corpus.features.dim(),
        corpus.embeddings.len(),
        corpus.embeddings.dim()
    );
    for rec in corpus.captions.iter().take(8) {
        let v = corpus.features.get(&rec.image_id).expect("every image has features");
        let scene = Scene::decode_features(v, cfg.attributes);
        println!("{} [{}] {:<32} scene {:?}", rec.image_id, rec.lang, rec.text, scene);
    }
    for d in &corpus.similarity {
        let p = &d.pairs[0];
        println!("{}: {} pairs, e.g. {}/{} {}/{} {}", d.name, d.len(), p.word1, p.lang1, p.word2, p.lang2, p.score);
    }
    Ok(())
}
