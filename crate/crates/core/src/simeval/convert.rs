//! Converters from the upstream human-norm files to the common TSV.

use std::collections::HashSet;
use std::str::FromStr;

use super::{SimilarityDataset, WordPair};
use crate::data::Lang;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimFormat {
    /// `word1 word2 POS SimLex999 ...`, tab separated, with a header row.
    SimLex,
    /// `sun-n sunlight-n 50.0` or the natural form without POS suffixes.
    Men,
    /// `Word 1,Word 2,Human (mean)` or the tab-separated variant.
    WordSim,
    /// `cord;smile;0.02`, monolingual.
    Rg65,
    /// English word, Spanish word, score.
    Rg65Cross,
}

impl SimFormat {
    pub const ALL: [SimFormat; 5] = [Self::SimLex, Self::Men, Self::WordSim, Self::Rg65, Self::Rg65Cross];

    pub fn name(self) -> &'static str {
        match self {
            Self::SimLex => "simlex",
            Self::Men => "men",
            Self::WordSim => "wordsim",
            Self::Rg65 => "rg65",
            Self::Rg65Cross => "rg65-cross",
        }
    }

    fn dataset_name(self, lang: Lang) -> String {
        match self {
            Self::SimLex => "SimLex-999".into(),
            Self::Men => "MEN".into(),
            Self::WordSim => "WordSim353".into(),
            Self::Rg65 if lang == Lang::En => "RG-65".into(),
            Self::Rg65 => format!("RG-65_{}", lang.code().to_uppercase()),
            Self::Rg65Cross => "RG-65_EN-ES".into(),
        }
    }

    fn scale(self) -> (f64, f64) {
        match self {
            Self::SimLex | Self::WordSim => (0.0, 10.0),
            Self::Men => (0.0, 50.0),
            Self::Rg65 | Self::Rg65Cross => (0.0, 4.0),
        }
    }

    fn score_column(self) -> usize {
        match self {
            Self::SimLex => 3,
            _ => 2,
        }
    }
}

impl FromStr for SimFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown dataset format {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

fn split_fields(line: &str, sep: Option<char>) -> Vec<&str> {
    match sep {
        Some(c) => line.split(c).map(str::trim).collect(),
        None => line.split_whitespace().collect(),
    }
}

fn detect_separator(text: &str) -> Option<char> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    ['\t', ';', ','].into_iter().find(|c| first.contains(*c))
}

fn strip_pos(word: &str) -> &str {
    match word.rsplit_once('-') {
        Some((w, "n" | "v" | "j")) if !w.is_empty() => w,
        _ => word,
    }
}

/// Parses an upstream file. `lang` is the language of monolingual datasets
/// (only RG-65 ships in several). Words are lowercased, one leading header
/// row is allowed, and repeated unordered pairs keep their first score.
pub fn convert(format: SimFormat, text: &str, lang: Lang) -> Result<SimilarityDataset> {
    let sep = detect_separator(text);
    let (lang1, lang2) = match format {
        SimFormat::Rg65Cross => (Lang::En, Lang::Es),
        SimFormat::Rg65 => (lang, lang),
        _ => (Lang::En, Lang::En),
    };
    let col = format.score_column();
    let (lo, hi) = format.scale();
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    let mut saw_row = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let f = split_fields(line, sep);
        let first_row = !saw_row;
        saw_row = true;
        if f.len() <= col {
            if first_row {
                continue;
            }
            return Err(Error::format(format.name(), lineno, format!("expected at least {} fields", col + 1)));
        }
        let score: f64 = match f[col].parse() {
            Ok(v) => v,
            Err(_) if first_row => continue,
            Err(_) => return Err(Error::format(format.name(), lineno, format!("bad score {:?}", f[col]))),
        };
        if !score.is_finite() || score < lo || score > hi {
            return Err(Error::format(
                format.name(),
                lineno,
                format!("score {score} outside scale {lo}..{hi}"),
            ));
        }
        let (mut w1, mut w2) = (f[0].to_lowercase(), f[1].to_lowercase());
        if format == SimFormat::Men {
            w1 = strip_pos(&w1).to_string();
            w2 = strip_pos(&w2).to_string();
        }
        if w1.is_empty() || w2.is_empty() {
            return Err(Error::format(format.name(), lineno, "empty word"));
        }
        let a = (w1.clone(), lang1);
        let b = (w2.clone(), lang2);
        let key = if a <= b { (a, b) } else { (b, a) };
        if !seen.insert(key) {
            continue;
        }
        pairs.push(WordPair {
            word1: w1,
            word2: w2,
            lang1: lang1.code().to_string(),
            lang2: lang2.code().to_string(),
            score,
        });
    }
    Ok(SimilarityDataset {
        name: format.dataset_name(lang),
        pairs,
        scale: Some((lo, hi)),
    })
}
