use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmlstm::commands;
use mmlstm::config::{ExperimentSpec, Overrides, Profile};
use mmlstm::data::Lang;
use mmlstm::simeval::convert::SimFormat;
use mmlstm::trainer::Ablation;

#[derive(Parser)]
#[command(name = "mmlstm", version, about = "Visually gated multilingual LSTM language models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment spec; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pins the trial seeds (and the synth generator seed) to one value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `paper` or `desk`.
    #[arg(long, global = true)]
    profile: Option<String>,
    /// Restricts the sweep; repeatable or comma separated (UM, MM_VLVL, MM_VLL, CotM_VLVL, CotM_VLL).
    #[arg(long, global = true, value_delimiter = ',')]
    ablation: Vec<String>,
    /// Restricts the sweep to one hidden size.
    #[arg(long, global = true)]
    hidden: Option<usize>,
    /// Output directory (the data directory for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic bilingual corpus.
    Synth {
        /// Grounding strength in [0, 1].
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        images: Option<usize>,
    },
    /// Load and cross-check captions, features, embeddings and datasets.
    Validate,
    /// Train every model of the sweep and write the perplexity grid.
    Train,
    /// Recompute the perplexity grid from checkpoints.
    Ppl,
    /// Word-similarity report against human norms.
    Sim,
    /// Caption an image with beam search.
    Sample {
        #[arg(long)]
        image: Option<String>,
        #[arg(long)]
        prompt: Option<String>,
        /// `en` or `es`; picks the default prompt.
        #[arg(long)]
        lang: Option<String>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Normalize an upstream similarity dataset to the common TSV.
    ConvertSimdata {
        /// simlex, men, wordsim, rg65 or rg65-cross.
        format: String,
        input: PathBuf,
        output: PathBuf,
        /// Language of monolingual RG-65 files.
        #[arg(long, default_value = "en")]
        lang: String,
    },
}

fn parse_lang(code: &str) -> mmlstm::Result<Lang> {
    Lang::from_code(code).ok_or_else(|| mmlstm::Error::Config(format!("unknown language {code:?}")))
}

fn run(cli: Cli) -> mmlstm::Result<String> {
    let c = cli.common;
    let mut flags = Overrides {
        profile: c.profile.as_deref().map(str::parse::<Profile>).transpose()?,
        seed: c.seed,
        hidden: c.hidden,
        ablations: c.ablation.iter().map(|s| s.parse::<Ablation>()).collect::<mmlstm::Result<_>>()?,
        out: c.out.clone(),
    };
    if let Command::ConvertSimdata { format, input, output, lang } = &cli.command {
        return commands::cmd_convert(format.parse::<SimFormat>()?, input, output, parse_lang(lang)?);
    }
    if matches!(cli.command, Command::Synth { .. }) {
        flags.out = None;
    }
    let mut spec = ExperimentSpec::resolve(c.config.as_deref(), &flags)?;
    match cli.command {
        Command::Synth { gamma, images } => {
            if let Some(dir) = c.out {
                spec.paths.data = dir;
            }
            if let Some(g) = gamma {
                spec.synth.gamma = g;
            }
            if let Some(n) = images {
                spec.synth.images = n;
            }
            commands::cmd_synth(&spec)
        }
        Command::Validate => commands::cmd_validate(&spec),
        Command::Train => commands::cmd_train(&spec),
        Command::Ppl => commands::cmd_ppl(&spec),
        Command::Sim => commands::cmd_sim(&spec),
        Command::Sample { image, prompt, lang, length } => {
            if length.is_some() {
                spec.sampler.length = length;
            }
            let req = commands::SampleRequest {
                image_id: image,
                prompt,
                lang: lang.as_deref().map(parse_lang).transpose()?,
            };
            commands::cmd_sample(&spec, &req)
        }
        Command::ConvertSimdata { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
