//! Compares the analytic BPTT gradient with central differences on a small
//! model, for each variant, with and without dropout.
//!
//! cargo run --release --example gradient_check

use mmlstm::data::{encode_captions, Batch};
use mmlstm::model::{ForwardOptions, Model, TENSOR_NAMES};
use mmlstm::synth::{self, SynthConfig};
use mmlstm::trainer::Variant;

const STEP: f64 = 1e-5;

fn main() -> mmlstm::Result<()> {
    let corpus = synth::generate(&SynthConfig { images: 6, background_dims: 4, ..Default::default() }, 5)?;
    let table = &corpus.embeddings;
    let encoded = encode_captions(&corpus.captions, table, Some(&corpus.features), 8)?;
    let rows: Vec<_> = encoded.iter().take(3).collect();
    let batch = Batch::from_encoded(&rows, 8, table.special().pad);

    for variant in [Variant::Um, Variant::Mm, Variant::Cotm] {
        for (dropout, opts) in [(0.0, ForwardOptions::eval()), (0.3, ForwardOptions::train(9))] {
            let cfg = variant.model_config(table, 5, corpus.features.dim(), dropout);
            let model = Model::new(cfg, table, 1)?;
            let out = model.forward(&batch, opts)?;
            let grads = model.backward(&out.cache)?;
            let mut report = Vec::new();
            for (ti, name) in TENSOR_NAMES.iter().enumerate() {
                let analytic = grads.tensors()[ti];
                if ti == 3 && model.config.frozen_modulation {
                    let zero = analytic.iter().all(|&g| g == 0.0);
                    report.push(format!("{name} frozen (zero gradient: {zero})"));
                    continue;
                }
                let mut worst: f64 = 0.0;
                // Every 7th entry keeps the run short.
                for k in (0..analytic.len()).step_by(7) {
                    let mut plus = model.clone();
                    plus.params.tensors_mut()[ti][k] += STEP;
                    let mut minus = model.clone();
                    minus.params.tensors_mut()[ti][k] -= STEP;
                    let numeric = (plus.forward(&batch, opts)?.loss - minus.forward(&batch, opts)?.loss) / (2.0 * STEP);
                    let a = analytic[k];
                    worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                }
                report.push(format!("{name} {worst:.1e}"));
            }
            println!("{:<4} dropout {dropout}: {}", variant.name(), report.join("  "));
        }
    }
    Ok(())
}
