//! Pretrained subword embedding table, greedy longest-match tokenizer and
//! word-level vector lookup.
//!
//! The table is read from a plain text file:
//!
//! ```text
//! <vocab_size> <dim>
//! <piece> <v1> ... <v_dim>
//! ...
//! ```
//!
//! The four special pieces `<pad> <s> </s> <unk>` are appended with zero
//! vectors when the file does not define them. If any piece starts with the
//! SentencePiece word-boundary marker `▁`, every word is matched with the
//! marker prepended, so exported BPEmb vocabularies tokenize the way they were
//! trained.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_to_string, Error, Result};
use crate::tensor::Matrix;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Word-boundary marker used by SentencePiece vocabularies.
pub const WORD_MARKER: char = '\u{2581}';

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: usize,
    pub bos: usize,
    pub eos: usize,
    pub unk: usize,
}

impl SpecialIds {
    pub fn contains(&self, id: usize) -> bool {
        id == self.pad || id == self.bos || id == self.eos || id == self.unk
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pieces: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Matrix,
    special: SpecialIds,
    marker_mode: bool,
    max_piece_chars: usize,
}

/// Token ids for one piece of text, always framed by BOS and EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub source_text: String,
}

impl TokenSequence {
    /// The ids between BOS and EOS.
    pub fn interior(&self) -> &[usize] {
        &self.ids[1..self.ids.len() - 1]
    }
}

/// Which matrix word vectors are read from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Input,
    #[default]
    Output,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LookupMode {
    /// Only words that are a single in-vocabulary piece resolve.
    #[default]
    SingleToken,
    /// Mean over the word's non-UNK pieces.
    Average,
}

impl EmbeddingTable {
    /// Builds a table from pieces and row-major vectors, appending any missing
    /// special pieces with zero vectors.
    pub fn new(pieces: Vec<String>, vectors: Matrix) -> Result<Self> {
        if pieces.len() != vectors.rows() {
            return Err(Error::Shape(format!(
                "{} pieces but {} vector rows",
                pieces.len(),
                vectors.rows()
            )));
        }
        let dim = vectors.cols();
        let mut index = HashMap::with_capacity(pieces.len() + 4);
        for (i, p) in pieces.iter().enumerate() {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(Error::format("embeddings", i + 2, format!("invalid piece {p:?}")));
            }
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::format("embeddings", i + 2, format!("duplicate piece {p:?}")));
            }
        }
        if let Some(i) = vectors.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::format("embeddings", i / dim.max(1) + 2, "non-finite value"));
        }
        let mut pieces = pieces;
        let mut data = vectors.as_slice().to_vec();
        let mut id_of = |name: &str, pieces: &mut Vec<String>, data: &mut Vec<f64>| -> usize {
            if let Some(&id) = index.get(name) {
                return id;
            }
            let id = pieces.len();
            pieces.push(name.to_string());
            data.extend(std::iter::repeat_n(0.0, dim));
            index.insert(name.to_string(), id);
            id
        };
        let special = SpecialIds {
            pad: id_of(PAD, &mut pieces, &mut data),
            bos: id_of(BOS, &mut pieces, &mut data),
            eos: id_of(EOS, &mut pieces, &mut data),
            unk: id_of(UNK, &mut pieces, &mut data),
        };
        let marker_mode = pieces.iter().any(|p| p.starts_with(WORD_MARKER));
        let max_piece_chars = pieces.iter().map(|p| p.chars().count()).max().unwrap_or(1);
        let vectors = Matrix::from_vec(pieces.len(), dim, data);
        Ok(EmbeddingTable {
            pieces,
            index,
            vectors,
            special,
            marker_mode,
            max_piece_chars,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (vocab_size, dim) = lines
            .next()
            .and_then(|(_, header)| {
                let mut f = header.split_whitespace();
                let v = f.next()?.parse::<usize>().ok()?;
                let d = f.next()?.parse::<usize>().ok()?;
                f.next().is_none().then_some((v, d))
            })
            .filter(|&(_, d)| d > 0)
            .ok_or_else(|| Error::format("embeddings", 1, "malformed header"))?;

        let mut pieces = Vec::with_capacity(vocab_size);
        let mut data = Vec::with_capacity(vocab_size * dim);
        let mut seen = HashMap::with_capacity(vocab_size);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut fields = line.split_whitespace();
            let piece = fields.next().unwrap_or_default();
            let values: Vec<&str> = fields.collect();
            if values.len() != dim {
                return Err(Error::format(
                    "embeddings",
                    lineno,
                    format!("wrong arity: expected {dim} values, found {}", values.len()),
                ));
            }
            if seen.insert(piece.to_string(), lineno).is_some() {
                return Err(Error::format("embeddings", lineno, format!("duplicate piece {piece:?}")));
            }
            for v in values {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::format("embeddings", lineno, format!("bad number {v:?}")))?;
                if !x.is_finite() {
                    return Err(Error::format("embeddings", lineno, "non-finite value"));
                }
                data.push(x);
            }
            pieces.push(piece.to_string());
        }
        if pieces.len() != vocab_size {
            return Err(Error::format(
                "embeddings",
                1,
                format!("header declares {vocab_size} pieces, found {}", pieces.len()),
            ));
        }
        let n = pieces.len();
        EmbeddingTable::new(pieces, Matrix::from_vec(n, dim, data))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
    }

    /// Serializes every row, specials included, with shortest round-trip floats.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim());
        for (i, piece) in self.pieces.iter().enumerate() {
            out.push_str(piece);
            for v in self.vectors.row(i) {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn piece(&self, id: usize) -> &str {
        &self.pieces[id]
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index.get(piece).copied()
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    fn match_piece(&self, s: &str) -> Option<usize> {
        self.index
            .get(s)
            .copied()
            .filter(|&id| !self.special.contains(id))
    }

    fn tokenize_word(&self, word: &str, out: &mut Vec<usize>) {
        let word = if self.marker_mode {
            format!("{WORD_MARKER}{word}")
        } else {
            word.to_string()
        };
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let nchars = bounds.len() - 1;
        let mut start = 0;
        let mut in_unknown_span = false;
        while start < nchars {
            let longest = (start + 1..=nchars.min(start + self.max_piece_chars))
                .rev()
                .find_map(|end| {
                    self.match_piece(&word[bounds[start]..bounds[end]])
                        .map(|id| (id, end))
                });
            match longest {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                    in_unknown_span = false;
                }
                None => {
                    if !in_unknown_span {
                        out.push(self.special.unk);
                        in_unknown_span = true;
                    }
                    start += 1;
                }
            }
        }
    }

    /// Lowercases, splits on whitespace and segments every word by greedy
    /// longest match from the left. Uncovered spans become a single UNK.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let normalized = text.to_lowercase();
        let mut ids = vec![self.special.bos];
        for word in normalized.split_whitespace() {
            self.tokenize_word(word, &mut ids);
        }
        ids.push(self.special.eos);
        TokenSequence {
            ids,
            source_text: text.to_string(),
        }
    }

    /// Ids of the pieces only, without BOS/EOS framing.
    pub fn encode_words(&self, text: &str) -> Vec<usize> {
        let seq = self.tokenize(text);
        seq.interior().to_vec()
    }

    /// Joins pieces back into text, skipping PAD/BOS/EOS.
    pub fn decode(&self, ids: &[usize]) -> String {
        let kept = ids.iter().filter(|&&id| {
            id != self.special.pad && id != self.special.bos && id != self.special.eos
        });
        if self.marker_mode {
            let joined: String = kept.map(|&id| self.pieces[id].as_str()).collect();
            joined.replace(WORD_MARKER, " ").trim().to_string()
        } else {
            kept.map(|&id| self.pieces[id].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        }
    }

    /// Resolves a whole word to a vector drawn from `rows` (which must have one
    /// row per piece), or from the table itself when `rows` is `None`.
    ///
    /// `None` means the word cannot be represented and any pair using it is dropped.
    pub fn word_vector(&self, word: &str, rows: Option<&Matrix>, mode: LookupMode) -> Option<Vec<f64>> {
        let rows = rows.unwrap_or(&self.vectors);
        debug_assert_eq!(rows.rows(), self.len());
        let seq = self.tokenize(word);
        let interior = seq.interior();
        match mode {
            LookupMode::SingleToken => match interior {
                [id] if *id != self.special.unk => Some(rows.row(*id).to_vec()),
                _ => None,
            },
            LookupMode::Average => {
                let known: Vec<usize> = interior
                    .iter()
                    .copied()
                    .filter(|&id| id != self.special.unk)
                    .collect();
                if known.is_empty() {
                    return None;
                }
                let mut mean = vec![0.0; rows.cols()];
                for &id in &known {
                    crate::tensor::axpy(1.0, rows.row(id), &mut mean);
                }
                let k = known.len() as f64;
                mean.iter_mut().for_each(|v| *v /= k);
                Some(mean)
            }
        }
    }
}
