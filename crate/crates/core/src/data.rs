//! Caption corpora, image feature stores, the image-level 80/10/10 split and
//! caption-aligned batching.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};
use crate::lexicon::EmbeddingTable;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    En,
    Es,
}

impl Lang {
    pub fn code(self) -> &'static str {
        match self {
            Lang::En => "en",
            Lang::Es => "es",
        }
    }

    pub fn from_code(code: &str) -> Option<Lang> {
        match code {
            "en" => Some(Lang::En),
            "es" => Some(Lang::Es),
            _ => None,
        }
    }

    /// Prompt word that steers generation into this language.
    pub fn default_prompt(self) -> &'static str {
        match self {
            Lang::En => "a",
            Lang::Es => "un",
        }
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub lang: Lang,
    pub text: String,
}

#[derive(Deserialize)]
struct RawCaption {
    image_id: Option<String>,
    lang: Option<String>,
    text: Option<String>,
}

/// Parses line-delimited JSON caption records. Blank lines are skipped.
pub fn parse_captions(text: &str) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawCaption = serde_json::from_str(line)
            .map_err(|e| Error::format("captions", lineno, e.to_string()))?;
        let missing = |name| Error::format("captions", lineno, format!("missing field {name}"));
        let image_id = raw.image_id.ok_or_else(|| missing("image_id"))?;
        let lang = raw.lang.ok_or_else(|| missing("lang"))?;
        let text = raw.text.ok_or_else(|| missing("text"))?;
        if image_id.is_empty() {
            return Err(Error::format("captions", lineno, "empty image_id"));
        }
        let lang = Lang::from_code(&lang)
            .ok_or_else(|| Error::format("captions", lineno, format!("unknown lang {lang:?}")))?;
        out.push(CaptionRecord { image_id, lang, text });
    }
    Ok(out)
}

pub fn load_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    parse_captions(&read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
}

pub fn captions_to_jsonl(records: &[CaptionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("caption serializes"));
        out.push('\n');
    }
    out
}

/// Image id → visual context vector, all of one dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    map: BTreeMap<String, Vec<f64>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        FeatureStore {
            dim,
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        let id = image_id.into();
        if v.len() != self.dim {
            return Err(Error::Shape(format!(
                "feature for {id} has {} entries, store dim is {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Shape(format!("feature for {id} is not finite")));
        }
        if self.map.contains_key(&id) {
            return Err(Error::Shape(format!("duplicate image_id {id}")));
        }
        self.map.insert(id, v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&[f64]> {
        self.map.get(image_id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Mean vector over the given images (all images when `ids` is `None`).
    pub fn mean(&self, ids: Option<&mut dyn Iterator<Item = &str>>) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim];
        let mut count = 0usize;
        let mut add = |v: &[f64]| {
            crate::tensor::axpy(1.0, v, &mut mean);
            count += 1;
        };
        match ids {
            Some(ids) => ids.filter_map(|id| self.get(id)).for_each(&mut add),
            None => self.map.values().for_each(|v| add(v)),
        }
        if count > 0 {
            mean.iter_mut().for_each(|x| *x /= count as f64);
        }
        mean
    }

    /// `GFEAT1` text. `#` lines after the header are comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (count, dim) = lines
            .next()
            .and_then(|(_, header)| {
                let f: Vec<&str> = header.split_whitespace().collect();
                match f.as_slice() {
                    ["GFEAT1", c, d] => Some((c.parse::<usize>().ok()?, d.parse::<usize>().ok()?)),
                    _ => None,
                }
            })
            .filter(|&(_, d)| d > 0)
            .ok_or_else(|| Error::format("features", 1, "header mismatch: expected `GFEAT1 <count> <dim>`"))?;
        let mut store = FeatureStore::new(dim);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let id = fields.next().unwrap_or_default();
            let values = fields
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::format("features", lineno, format!("bad number {v:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(Error::format(
                    "features",
                    lineno,
                    format!("arity mismatch: expected {dim} values, found {}", values.len()),
                ));
            }
            if store.map.contains_key(id) {
                return Err(Error::format("features", lineno, format!("duplicate image_id {id:?}")));
            }
            store
                .insert(id, values)
                .map_err(|e| Error::format("features", lineno, e.to_string()))?;
        }
        if store.len() != count {
            return Err(Error::format(
                "features",
                1,
                format!("header mismatch: declares {count} entries, found {}", store.len()),
            ));
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("GFEAT1 {} {}\n", self.len(), self.dim);
        for (id, v) in &self.map {
            out.push_str(id);
            for x in v {
                write!(out, " {x}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<CaptionRecord>,
    pub valid: Vec<CaptionRecord>,
    pub test: Vec<CaptionRecord>,
}

/// Splits by image id: ids are sorted, shuffled with the seed, and the last
/// `floor(m/10)` go to test, the `floor(m/10)` before them to validation.
pub fn split_corpus(records: &[CaptionRecord], seed: u64) -> CorpusSplit {
    let mut ids: Vec<&str> = records
        .iter()
        .map(|r| r.image_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let m = ids.len();
    let tenth = m / 10;
    let train_end = m - 2 * tenth;
    let valid_end = train_end + tenth;
    let part_of: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let part = if i < train_end {
                0
            } else if i < valid_end {
                1
            } else {
                2
            };
            (*id, part)
        })
        .collect();
    let mut split = CorpusSplit::default();
    for r in records {
        match part_of[r.image_id.as_str()] {
            0 => split.train.push(r.clone()),
            1 => split.valid.push(r.clone()),
            _ => split.test.push(r.clone()),
        }
    }
    split
}

/// One caption turned into input/target ids of at most `seq_len` positions.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedCaption {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub visual: Vec<f64>,
}

/// Tokenizes captions once, truncating each to `seq_len + 1` ids with EOS kept last.
pub fn encode_captions(
    records: &[CaptionRecord],
    table: &EmbeddingTable,
    store: Option<&FeatureStore>,
    seq_len: usize,
) -> Result<Vec<EncodedCaption>> {
    if seq_len == 0 {
        return Err(Error::Config("sequence length must be at least 1".into()));
    }
    let eos = table.special().eos;
    records
        .iter()
        .map(|r| {
            let visual = match store {
                Some(s) => s
                    .get(&r.image_id)
                    .ok_or_else(|| Error::Shape(format!("no feature vector for image {}", r.image_id)))?
                    .to_vec(),
                None => Vec::new(),
            };
            let mut ids = table.tokenize(&r.text).ids;
            if ids.len() > seq_len + 1 {
                ids.truncate(seq_len + 1);
                *ids.last_mut().unwrap() = eos;
            }
            Ok(EncodedCaption {
                inputs: ids[..ids.len() - 1].to_vec(),
                targets: ids[1..].to_vec(),
                visual,
            })
        })
        .collect()
}

/// A block of caption rows, each padded to `seq_len` positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub seq_len: usize,
    /// rows × seq_len
    pub token_ids: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
    /// rows × visual dim (zero columns when no feature store was given)
    pub visual: Matrix,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.token_ids.len()
    }

    pub fn target_count(&self) -> usize {
        self.mask.iter().flatten().filter(|&&m| m).count()
    }

    pub fn from_encoded(captions: &[&EncodedCaption], seq_len: usize, pad: usize) -> Batch {
        let vdim = captions.first().map_or(0, |c| c.visual.len());
        let mut visual = Matrix::zeros(captions.len(), vdim);
        let mut token_ids = Vec::with_capacity(captions.len());
        let mut targets = Vec::with_capacity(captions.len());
        let mut mask = Vec::with_capacity(captions.len());
        for (b, cap) in captions.iter().enumerate() {
            let mut inp = vec![pad; seq_len];
            let mut tgt = vec![pad; seq_len];
            let mut m = vec![false; seq_len];
            // Inputs include the trailing EOS position; its target is padding.
            let full: Vec<usize> = cap
                .inputs
                .iter()
                .copied()
                .chain(cap.targets.last().copied())
                .collect();
            for (t, &id) in full.iter().take(seq_len).enumerate() {
                inp[t] = id;
            }
            for (t, &id) in cap.targets.iter().take(seq_len).enumerate() {
                tgt[t] = id;
                m[t] = true;
            }
            token_ids.push(inp);
            targets.push(tgt);
            mask.push(m);
            visual.row_mut(b).copy_from_slice(&cap.visual);
        }
        Batch {
            seq_len,
            token_ids,
            targets,
            mask,
            visual,
        }
    }
}

/// Shuffles captions with the seed and packs them `batch_size` rows at a
/// time. The final batch may be smaller.
pub fn pack_batches(
    captions: &[EncodedCaption],
    batch_size: usize,
    seq_len: usize,
    pad: usize,
    seed: u64,
) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..captions.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let rows: Vec<&EncodedCaption> = chunk.iter().map(|&i| &captions[i]).collect();
            Batch::from_encoded(&rows, seq_len, pad)
        })
        .collect()
}

/// Batches in file order, for evaluation.
pub fn sequential_batches(captions: &[EncodedCaption], batch_size: usize, seq_len: usize, pad: usize) -> Vec<Batch> {
    captions
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let rows: Vec<&EncodedCaption> = chunk.iter().collect();
            Batch::from_encoded(&rows, seq_len, pad)
        })
        .collect()
}

pub fn make_batches(
    records: &[CaptionRecord],
    table: &EmbeddingTable,
    store: Option<&FeatureStore>,
    batch_size: usize,
    seq_len: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let encoded = encode_captions(records, table, store, seq_len)?;
    Ok(pack_batches(&encoded, batch_size, seq_len, table.special().pad, seed))
}
