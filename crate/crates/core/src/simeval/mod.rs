//! Word-similarity evaluation against human norms.
//!
//! Every dataset is first normalized to one TSV layout:
//!
//! ```text
//! # name: SimLex-999
//! # scale: 0 10
//! old<TAB>new<TAB>en<TAB>en<TAB>1.58
//! ```
//!
//! Pairs are scored by the cosine of each model's word vectors. A pair is
//! dropped for *all* models as soon as any model cannot resolve one of its
//! words, so every correlation in a comparison uses the same pairs.

pub mod convert;
pub mod stats;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{read_to_string, Error, Result};
use crate::lexicon::{EmbeddingTable, LookupMode, Side};
use crate::tensor::Matrix;
use crate::trainer::mean_se;

pub use stats::{bh_adjust, cosine_similarity, p_value, partial_r, pearson_r, significance_stars};

#[derive(Clone, Debug, PartialEq)]
pub struct WordPair {
    pub word1: String,
    pub word2: String,
    pub lang1: String,
    pub lang2: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityDataset {
    pub name: String,
    pub pairs: Vec<WordPair>,
    pub scale: Option<(f64, f64)>,
}

fn pair_key(p: &WordPair) -> ((&str, &str), (&str, &str)) {
    let a = (p.word1.as_str(), p.lang1.as_str());
    let b = (p.word2.as_str(), p.lang2.as_str());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SimilarityDataset {
    /// Parses the normalized TSV. `# name:` and `# scale:` comments are
    /// honoured; other `#` lines are ignored.
    pub fn parse_tsv(default_name: &str, text: &str) -> Result<Self> {
        let mut name = default_name.to_string();
        let mut scale = None;
        let mut pairs = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("name:") {
                    name = v.trim().to_string();
                } else if let Some(v) = comment.strip_prefix("scale:") {
                    let bounds: Vec<f64> = v.split_whitespace().filter_map(|s| s.parse().ok()).collect();
                    match bounds.as_slice() {
                        [lo, hi] if lo < hi => scale = Some((*lo, *hi)),
                        _ => return Err(Error::format("similarity dataset", lineno, "bad scale comment")),
                    }
                }
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [w1, w2, l1, l2, s] = f.as_slice() else {
                return Err(Error::format(
                    "similarity dataset",
                    lineno,
                    format!("expected 5 tab-separated fields, found {}", f.len()),
                ));
            };
            let score: f64 = s
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::format("similarity dataset", lineno, format!("bad score {s:?}")))?;
            if let Some((lo, hi)) = scale {
                if score < lo || score > hi {
                    return Err(Error::format(
                        "similarity dataset",
                        lineno,
                        format!("score {score} outside scale {lo}..{hi}"),
                    ));
                }
            }
            let pair = WordPair {
                word1: w1.to_lowercase(),
                word2: w2.to_lowercase(),
                lang1: l1.to_string(),
                lang2: l2.to_string(),
                score,
            };
            let key = pair_key(&pair);
            let owned = ((key.0 .0.to_string(), key.0 .1.to_string()), (key.1 .0.to_string(), key.1 .1.to_string()));
            if !seen.insert(owned) {
                return Err(Error::format(
                    "similarity dataset",
                    lineno,
                    format!("duplicate pair {} / {}", pair.word1, pair.word2),
                ));
            }
            pairs.push(pair);
        }
        Ok(SimilarityDataset { name, pairs, scale })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        Self::parse_tsv(stem, &read_to_string(path)?).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("# name: {}\n", self.name);
        if let Some((lo, hi)) = self.scale {
            writeln!(out, "# scale: {lo} {hi}").unwrap();
        }
        for p in &self.pairs {
            writeln!(out, "{}\t{}\t{}\t{}\t{}", p.word1, p.word2, p.lang1, p.lang2, p.score).unwrap();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// How words are turned into vectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LexiconSettings {
    pub side: Side,
    pub mode: LookupMode,
}

/// One model's vector rows (one per vocabulary piece), with a display name.
#[derive(Clone, Copy, Debug)]
pub struct ModelVectors<'a> {
    pub name: &'a str,
    pub rows: &'a Matrix,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DropReason {
    OutOfVocabulary(String),
    ZeroVector(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeptPair {
    pub index: usize,
    pub human: f64,
    /// One cosine per model, in model order.
    pub cosines: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairScores {
    pub kept: Vec<KeptPair>,
    pub dropped: Vec<(usize, DropReason)>,
}

/// Scores every pair with every model, applying the shared drop rule.
pub fn score_pairs(dataset: &SimilarityDataset, table: &EmbeddingTable, models: &[ModelVectors], settings: LexiconSettings) -> PairScores {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    'pairs: for (index, pair) in dataset.pairs.iter().enumerate() {
        let mut cosines = Vec::with_capacity(models.len());
        for m in models {
            let v1 = table.word_vector(&pair.word1, Some(m.rows), settings.mode);
            let v2 = table.word_vector(&pair.word2, Some(m.rows), settings.mode);
            let (v1, v2) = match (v1, v2) {
                (Some(a), Some(b)) => (a, b),
                (None, _) => {
                    dropped.push((index, DropReason::OutOfVocabulary(pair.word1.clone())));
                    continue 'pairs;
                }
                (_, None) => {
                    dropped.push((index, DropReason::OutOfVocabulary(pair.word2.clone())));
                    continue 'pairs;
                }
            };
            match cosine_similarity(&v1, &v2) {
                Ok(c) => cosines.push(c),
                Err(_) => {
                    let zero = if v1.iter().all(|&x| x == 0.0) { &pair.word1 } else { &pair.word2 };
                    dropped.push((index, DropReason::ZeroVector(zero.clone())));
                    continue 'pairs;
                }
            }
        }
        kept.push(KeptPair {
            index,
            human: pair.score,
            cosines,
        });
    }
    PairScores { kept, dropped }
}

/// Correlations for one dataset and one set of models (one seed).
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub n_total: usize,
    pub n_used: usize,
    pub dropped: Vec<(usize, DropReason)>,
    /// Pearson r with human scores, one per model.
    pub r: Vec<f64>,
    /// Partial r of model 0 given model 1, when at least two models were given.
    pub partial_r: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_adjusted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetOutcome {
    Evaluated(EvalRow),
    Skipped {
        dataset: String,
        n_total: usize,
        n_used: usize,
        reason: String,
    },
}

/// Minimum number of usable pairs for a dataset to be reported.
pub const MIN_PAIRS: usize = 4;

/// Scores one dataset. The first model is the subject, the second the control
/// for the partial correlation. `p_adjusted` is filled by [`evaluate_collection`].
pub fn evaluate_dataset(
    dataset: &SimilarityDataset,
    table: &EmbeddingTable,
    models: &[ModelVectors],
    settings: LexiconSettings,
) -> DatasetOutcome {
    let scores = score_pairs(dataset, table, models, settings);
    let n_used = scores.kept.len();
    let skip = |reason: String| DatasetOutcome::Skipped {
        dataset: dataset.name.clone(),
        n_total: dataset.len(),
        n_used,
        reason,
    };
    if models.is_empty() {
        return skip("no models given".into());
    }
    if n_used < MIN_PAIRS {
        return skip(format!("only {n_used} usable pairs (need {MIN_PAIRS})"));
    }
    let human: Vec<f64> = scores.kept.iter().map(|k| k.human).collect();
    let per_model: Vec<Vec<f64>> = (0..models.len())
        .map(|m| scores.kept.iter().map(|k| k.cosines[m]).collect())
        .collect();
    let mut r = Vec::with_capacity(models.len());
    for (m, cos) in per_model.iter().enumerate() {
        match pearson_r(&human, cos) {
            Ok(v) => r.push(v),
            Err(e) => return skip(format!("{}: {e}", models[m].name)),
        }
    }
    let (partial, p_raw) = if models.len() >= 2 {
        let r_yz = pearson_r(&per_model[0], &per_model[1]);
        match r_yz.and_then(|ryz| partial_r(r[0], r[1], ryz)) {
            Ok(pr) => (Some(pr), p_value(pr, n_used, true).ok()),
            Err(_) => (None, None),
        }
    } else {
        (None, p_value(r[0], n_used, false).ok())
    };
    DatasetOutcome::Evaluated(EvalRow {
        dataset: dataset.name.clone(),
        n_total: dataset.len(),
        n_used,
        dropped: scores.dropped,
        r,
        partial_r: partial,
        p_raw,
        p_adjusted: None,
    })
}

/// Evaluates every dataset and BH-adjusts the raw p-values across the
/// evaluated ones (the family is one invocation's dataset collection).
/// Outcomes are ordered by dataset name.
pub fn evaluate_collection(
    datasets: &[SimilarityDataset],
    table: &EmbeddingTable,
    models: &[ModelVectors],
    settings: LexiconSettings,
) -> Vec<DatasetOutcome> {
    let mut outcomes: Vec<DatasetOutcome> = datasets
        .iter()
        .map(|d| evaluate_dataset(d, table, models, settings))
        .collect();
    outcomes.sort_by(|a, b| outcome_name(a).cmp(outcome_name(b)));
    let idx: Vec<usize> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| matches!(o, DatasetOutcome::Evaluated(EvalRow { p_raw: Some(_), .. })).then_some(i))
        .collect();
    let raw: Vec<f64> = idx
        .iter()
        .map(|&i| match &outcomes[i] {
            DatasetOutcome::Evaluated(row) => row.p_raw.unwrap(),
            _ => unreachable!(),
        })
        .collect();
    for (&i, adj) in idx.iter().zip(bh_adjust(&raw)) {
        if let DatasetOutcome::Evaluated(row) = &mut outcomes[i] {
            row.p_adjusted = Some(adj);
        }
    }
    outcomes
}

fn outcome_name(o: &DatasetOutcome) -> &str {
    match o {
        DatasetOutcome::Evaluated(r) => &r.dataset,
        DatasetOutcome::Skipped { dataset, .. } => dataset,
    }
}

/// One dataset's correlations aggregated over seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub n_total: usize,
    pub n_used: usize,
    /// Per model `(mean, se)` of r.
    pub r: Vec<(f64, f64)>,
    pub partial_r: Option<(f64, f64)>,
    pub p_raw: Option<f64>,
    pub p_adjusted: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub model_names: Vec<String>,
    pub seeds: usize,
    pub rows: Vec<ReportRow>,
    pub skipped: Vec<(String, String)>,
}

/// Averages per-seed outcomes (r and partial r as mean ± SE), derives the
/// p-value from the mean partial r over the shared `n_used`, and BH-adjusts
/// those across datasets.
pub fn aggregate_seeds(model_names: &[&str], per_seed: &[Vec<DatasetOutcome>]) -> SimReport {
    let mut names: Vec<String> = per_seed
        .iter()
        .flatten()
        .map(|o| outcome_name(o).to_string())
        .collect();
    names.sort();
    names.dedup();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for name in names {
        let evals: Vec<&EvalRow> = per_seed
            .iter()
            .flatten()
            .filter_map(|o| match o {
                DatasetOutcome::Evaluated(r) if r.dataset == name => Some(r),
                _ => None,
            })
            .collect();
        if evals.is_empty() || evals.len() < per_seed.len() {
            let reason = per_seed
                .iter()
                .flatten()
                .find_map(|o| match o {
                    DatasetOutcome::Skipped { dataset, reason, .. } if *dataset == name => Some(reason.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| "not evaluated for every seed".into());
            skipped.push((name, reason));
            continue;
        }
        let n_models = evals[0].r.len();
        let r = (0..n_models)
            .map(|m| mean_se(&evals.iter().map(|e| e.r[m]).collect::<Vec<_>>()))
            .collect();
        let partials: Option<Vec<f64>> = evals.iter().map(|e| e.partial_r).collect();
        let partial_r = partials.map(|p| mean_se(&p));
        let n_used = evals[0].n_used;
        let p_raw = match partial_r {
            Some((mean, _)) => p_value(mean, n_used, true).ok(),
            None if n_models == 1 => p_value(mean_se(&evals.iter().map(|e| e.r[0]).collect::<Vec<_>>()).0, n_used, false).ok(),
            None => None,
        };
        rows.push(ReportRow {
            dataset: name,
            n_total: evals[0].n_total,
            n_used,
            r,
            partial_r,
            p_raw,
            p_adjusted: None,
        });
    }
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].p_raw.is_some()).collect();
    let raw: Vec<f64> = idx.iter().map(|&i| rows[i].p_raw.unwrap()).collect();
    for (&i, adj) in idx.iter().zip(bh_adjust(&raw)) {
        rows[i].p_adjusted = Some(adj);
    }
    SimReport {
        model_names: model_names.iter().map(|s| s.to_string()).collect(),
        seeds: per_seed.len(),
        rows,
        skipped,
    }
}

impl SimReport {
    pub fn row(&self, dataset: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.dataset == dataset)
    }

    /// Table-shaped text: datasets as columns; rows for each model's r, the
    /// partial r of the first model given the second, and significance stars.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let subject = self.model_names.first().map_or("model", String::as_str);
        let control = self.model_names.get(1).map_or("-", String::as_str);
        writeln!(
            out,
            "Pearson r with human scores; partial r of {subject} controlling for {control}; \
             r averaged per seed over {} seed(s) (mean ± SE)",
            self.seeds
        )
        .unwrap();
        writeln!(
            out,
            "BH family: the {} dataset(s) evaluated in this run; * p < .05, ** p < .01 (adjusted)",
            self.rows.len()
        )
        .unwrap();
        let width = 16;
        write!(out, "{:<12}", "").unwrap();
        for r in &self.rows {
            write!(out, " {:>width$}", r.dataset).unwrap();
        }
        out.push('\n');
        // Control model first, as in the usual baseline-then-subject layout.
        let mut order: Vec<usize> = (0..self.model_names.len()).collect();
        if order.len() >= 2 {
            order.swap(0, 1);
        }
        for m in order {
            write!(out, "{:<12}", format!("r_{}", self.model_names[m])).unwrap();
            for r in &self.rows {
                let (mean, se) = r.r[m];
                write!(out, " {:>width$}", fmt_mean_se(mean, se, self.seeds)).unwrap();
            }
            out.push('\n');
        }
        if self.model_names.len() >= 2 {
            write!(out, "{:<12}", "partial-r").unwrap();
            for r in &self.rows {
                let cell = r.partial_r.map_or("-".to_string(), |(m, s)| fmt_mean_se(m, s, self.seeds));
                write!(out, " {:>width$}", cell).unwrap();
            }
            out.push('\n');
        }
        write!(out, "{:<12}", "p-value").unwrap();
        for r in &self.rows {
            write!(out, " {:>width$}", r.p_adjusted.map_or("", significance_stars)).unwrap();
        }
        out.push('\n');
        write!(out, "{:<12}", "pairs used").unwrap();
        for r in &self.rows {
            write!(out, " {:>width$}", format!("{}/{}", r.n_used, r.n_total)).unwrap();
        }
        out.push('\n');
        for (name, reason) in &self.skipped {
            writeln!(out, "skipped {name}: {reason}").unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,n_total,n_used");
        for name in &self.model_names {
            write!(out, ",r_{name}_mean,r_{name}_se").unwrap();
        }
        out.push_str(",partial_r_mean,partial_r_se,p_raw,p_adjusted,stars\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
        for r in &self.rows {
            write!(out, "{},{},{}", r.dataset, r.n_total, r.n_used).unwrap();
            for (m, s) in &r.r {
                write!(out, ",{m:.6},{s:.6}").unwrap();
            }
            let (pm, ps) = r.partial_r.map_or((None, None), |(m, s)| (Some(m), Some(s)));
            writeln!(
                out,
                ",{},{},{},{},{}",
                pm.map_or(String::new(), |v| format!("{v:.6}")),
                ps.map_or(String::new(), |v| format!("{v:.6}")),
                opt(r.p_raw),
                opt(r.p_adjusted),
                r.p_adjusted.map_or("", significance_stars)
            )
            .unwrap();
        }
        out
    }
}

fn fmt_mean_se(mean: f64, se: f64, seeds: usize) -> String {
    if seeds > 1 {
        format!("{mean:.3}±{se:.3}")
    } else {
        format!("{mean:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(pairs: &[(&str, &str, f64)]) -> SimilarityDataset {
        SimilarityDataset {
            name: "toy".into(),
            pairs: pairs
                .iter()
                .map(|(a, b, s)| WordPair {
                    word1: a.to_string(),
                    word2: b.to_string(),
                    lang1: "en".into(),
                    lang2: "en".into(),
                    score: *s,
                })
                .collect(),
            scale: Some((0.0, 1.0)),
        }
    }

    #[test]
    fn tsv_parse_and_round_trip() {
        let text = "# name: RG-65\n# scale: 0 4\ncord\tsmile\ten\ten\t0.02\n\ngem\tjewel\ten\ten\t3.94\n";
        let d = SimilarityDataset::parse_tsv("x", text).unwrap();
        assert_eq!(d.name, "RG-65");
        assert_eq!(d.scale, Some((0.0, 4.0)));
        assert_eq!(d.len(), 2);
        assert_eq!(SimilarityDataset::parse_tsv("x", &d.to_tsv()).unwrap(), d);
    }

    #[test]
    fn tsv_rejects_bad_rows() {
        assert!(SimilarityDataset::parse_tsv("x", "a\tb\ten\ten\n").is_err());
        assert!(SimilarityDataset::parse_tsv("x", "# scale: 0 4\na\tb\ten\ten\t5\n").is_err());
        let dup = "a\tb\ten\ten\t1\nb\ta\ten\ten\t2\n";
        assert!(SimilarityDataset::parse_tsv("x", dup).is_err());
        // Same words in different languages are different pairs.
        let cross = "a\tb\ten\ten\t1\na\tb\ten\tes\t2\n";
        assert_eq!(SimilarityDataset::parse_tsv("x", cross).unwrap().len(), 2);
    }

    fn one_hot_table(words: &[&str]) -> EmbeddingTable {
        let mut text = format!("{} {}\n", words.len(), words.len());
        for (i, w) in words.iter().enumerate() {
            text.push_str(w);
            for j in 0..words.len() {
                text.push_str(if i == j { " 1" } else { " 0" });
            }
            text.push('\n');
        }
        EmbeddingTable::parse(&text).unwrap()
    }

    #[test]
    fn oov_pairs_dropped_for_all_models() {
        let words = ["a", "b", "c", "d", "e", "f"];
        let t = one_hot_table(&words);
        let d = dataset(&[("a", "b", 0.1), ("c", "zzz", 0.5), ("d", "e", 0.3), ("e", "f", 0.2), ("a", "f", 0.9), ("b", "c", 0.4)]);
        let rows = Matrix::uniform(t.len(), 3, 1.0, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3));
        let models = [ModelVectors { name: "MM", rows: &rows }, ModelVectors { name: "UM", rows: t.vectors() }];
        let s = score_pairs(&d, &t, &models, LexiconSettings::default());
        assert_eq!(s.kept.len(), 5);
        assert_eq!(s.dropped, vec![(1, DropReason::OutOfVocabulary("zzz".into()))]);
        assert!(s.kept.iter().all(|k| k.cosines.len() == 2));
    }

    #[test]
    fn zero_vectors_dropped_with_reason() {
        let t = one_hot_table(&["a", "b"]);
        let mut rows = t.vectors().clone();
        rows.row_mut(t.id("b").unwrap()).iter_mut().for_each(|x| *x = 0.0);
        let d = dataset(&[("a", "b", 0.5)]);
        let s = score_pairs(&d, &t, &[ModelVectors { name: "m", rows: &rows }], LexiconSettings::default());
        assert_eq!(s.dropped, vec![(0, DropReason::ZeroVector("b".into()))]);
    }

    #[test]
    fn all_oov_dataset_is_skipped() {
        let t = one_hot_table(&["a", "b"]);
        let d = dataset(&[("x1", "a", 0.1), ("x2", "b", 0.2), ("x3", "a", 0.3), ("x4", "b", 0.4)]);
        match evaluate_dataset(&d, &t, &[ModelVectors { name: "m", rows: t.vectors() }], LexiconSettings::default()) {
            DatasetOutcome::Skipped { n_used, .. } => assert_eq!(n_used, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collection_is_sorted_and_adjusted() {
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let t = one_hot_table(&refs);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(9);
        let a = Matrix::uniform(t.len(), 4, 1.0, &mut rng);
        let b = Matrix::uniform(t.len(), 4, 1.0, &mut rng);
        let models = [ModelVectors { name: "MM", rows: &a }, ModelVectors { name: "UM", rows: &b }];
        let mk = |name: &str, off: usize| {
            let mut d = dataset(
                &(0..6)
                    .map(|i| (refs[(i + off) % 12], refs[(i + off + 5) % 12], i as f64 / 6.0))
                    .collect::<Vec<_>>(),
            );
            d.name = name.into();
            d
        };
        let out = evaluate_collection(&[mk("zeta", 0), mk("alpha", 3)], &t, &models, LexiconSettings::default());
        let names: Vec<&str> = out.iter().map(outcome_name).collect();
        assert_eq!(names, ["alpha", "zeta"]);
        for o in &out {
            let DatasetOutcome::Evaluated(row) = o else { panic!() };
            let (raw, adj) = (row.p_raw.unwrap(), row.p_adjusted.unwrap());
            assert!(adj >= raw && adj <= 1.0);
        }
        let report = aggregate_seeds(&["MM", "UM"], &[out.clone(), out]);
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[0].r[0].1, 0.0);
        assert!(report.to_text().contains("partial-r"));
        assert_eq!(report.to_csv().lines().count(), 3);
    }
}
