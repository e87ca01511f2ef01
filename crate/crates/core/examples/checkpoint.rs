//! Saves a model with its seeds and progress, loads it back and checks that
//! the reloaded model scores a batch identically.
//!
//! cargo run --example checkpoint

use mmlstm::data::{encode_captions, Batch};
use mmlstm::model::checkpoint::{Checkpoint, Progress, Seeds};
use mmlstm::model::{ForwardOptions, Model};
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::Variant;

fn main() -> mmlstm::Result<()> {
    let corpus = synth::generate(&SynthConfig { images: 10, ..Default::default() }, 3)?;
    let table = &corpus.embeddings;
    let cfg = Variant::Cotm.model_config(table, 16, corpus.features.dim(), 0.2);
    let model = Model::new(cfg, table, 42)?;
    let ck = Checkpoint {
        model,
        seeds: Seeds { init: 42, train: 7 },
        progress: Progress { epochs_completed: 0, learning_rate: 1.0, best_valid_loss: None },
    };

    let dir = std::env::temp_dir().join(format!("mmlstm-checkpoint-{}", std::process::id()));
    let path = dir.join("n16/CotM/42.ckpt");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;
    println!("{}: {} bytes", path.display(), std::fs::metadata(&path).map_or(0, |m| m.len()));

    let encoded = encode_captions(&corpus.captions, table, Some(&corpus.features), 16)?;
    let rows: Vec<_> = encoded.iter().take(4).collect();
    let batch = Batch::from_encoded(&rows, 16, table.special().pad);
    let a = ck.model.forward(&batch, ForwardOptions::eval())?.loss;
    let b = back.model.forward(&batch, ForwardOptions::eval())?.loss;
    println!("loss before {a:.12}, after {b:.12}, identical: {}", a.to_bits() == b.to_bits());
    println!("round trip equal: {}", back == ck);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
