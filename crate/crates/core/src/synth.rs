//! Synthetic bilingual image-caption corpus for desk-scale experiments.
//!
//! Every image is a latent scene (noun, colour, place). Its feature vector
//! one-hot encodes the scene attributes, and every caption describes the
//! scene in English or Spanish. With probability `gamma` a caption's content
//! words come from the scene; otherwise they are drawn at random, so `gamma =
//! 0` gives features that carry no information about the text.
//!
//! Real pooled CNN features share a large common component across images.
//! The background dimensions imitate it, so `M v` for a random frozen `M`
//! sits close to `M` applied to the mean feature, as it does for real images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CaptionRecord, FeatureStore, Lang};
use crate::error::{Error, Result};
use crate::lexicon::EmbeddingTable;
use crate::simeval::{SimilarityDataset, WordPair};
use crate::tensor::Matrix;

/// `(english, spanish)` content words. Spanish nouns and colours are
/// masculine and places feminine, to agree with the fixed articles.
pub const NOUNS: [(&str, &str); 8] = [
    ("dog", "perro"),
    ("cat", "gato"),
    ("horse", "caballo"),
    ("bull", "toro"),
    ("duck", "pato"),
    ("bear", "oso"),
    ("rabbit", "conejo"),
    ("wolf", "lobo"),
];
pub const COLORS: [(&str, &str); 6] = [
    ("red", "rojo"),
    ("blue", "azul"),
    ("green", "verde"),
    ("black", "negro"),
    ("white", "blanco"),
    ("yellow", "amarillo"),
];
pub const PLACES: [(&str, &str); 6] = [
    ("beach", "playa"),
    ("street", "calle"),
    ("table", "mesa"),
    ("house", "casa"),
    ("farm", "granja"),
    ("snow", "nieve"),
];
const FUNCTION_WORDS: [&str; 9] = ["a", "on", "near", "the", "un", "en", "la", "cerca", "de"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub images: usize,
    pub captions_per_lang: usize,
    /// Grounding strength in `[0, 1]`.
    pub gamma: f64,
    /// Scene attributes encoded in the features: 1 = noun, 2 = + colour,
    /// 3 = + place. Unencoded attributes are drawn per caption.
    pub attributes: usize,
    /// Extra feature dimensions that carry no scene information: a shared
    /// level of 1 plus uniform noise of this half-width, like the dense
    /// common activation mass of pooled CNN features.
    pub background_dims: usize,
    pub background_noise: f64,
    pub embed_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            images: 500,
            captions_per_lang: 2,
            gamma: 1.0,
            attributes: 3,
            background_dims: 100,
            background_noise: 0.1,
            embed_dim: 16,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1], got {}", self.gamma)));
        }
        if !(1..=3).contains(&self.attributes) {
            return Err(Error::Config("attributes must be 1, 2 or 3".into()));
        }
        if !(0.0..1.0).contains(&self.background_noise) {
            return Err(Error::Config("background_noise must be in [0, 1)".into()));
        }
        if self.images == 0 || self.captions_per_lang == 0 || self.embed_dim == 0 {
            return Err(Error::Config("images, captions_per_lang and embed_dim must be positive".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        [NOUNS.len(), COLORS.len(), PLACES.len()][..self.attributes].iter().sum::<usize>() + self.background_dims
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scene {
    pub noun: usize,
    pub color: usize,
    pub place: usize,
}

impl Scene {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Scene {
            noun: rng.random_range(0..NOUNS.len()),
            color: rng.random_range(0..COLORS.len()),
            place: rng.random_range(0..PLACES.len()),
        }
    }

    pub fn features(&self, attributes: usize) -> Vec<f64> {
        let blocks = [(self.noun, NOUNS.len()), (self.color, COLORS.len()), (self.place, PLACES.len())];
        let mut v = Vec::new();
        for &(hot, size) in &blocks[..attributes] {
            v.extend((0..size).map(|i| if i == hot { 1.0 } else { 0.0 }));
        }
        v
    }

    /// Inverse of [`Scene::features`] for the encoded attributes.
    pub fn decode_features(v: &[f64], attributes: usize) -> Option<(usize, Option<usize>, Option<usize>)> {
        let argmax = |s: &[f64]| s.iter().position(|&x| x == 1.0);
        let noun = argmax(v.get(..NOUNS.len())?)?;
        let color = (attributes >= 2).then(|| argmax(&v[NOUNS.len()..NOUNS.len() + COLORS.len()])).flatten();
        let off = NOUNS.len() + COLORS.len();
        let place = (attributes >= 3).then(|| argmax(&v[off..off + PLACES.len()])).flatten();
        Some((noun, color, place))
    }
}

pub fn caption(scene: Scene, lang: Lang, near: bool) -> String {
    let (n, c, p) = (NOUNS[scene.noun], COLORS[scene.color], PLACES[scene.place]);
    match (lang, near) {
        (Lang::En, false) => format!("a {} {} on the {}", c.0, n.0, p.0),
        (Lang::En, true) => format!("a {} {} near the {}", c.0, n.0, p.0),
        (Lang::Es, false) => format!("un {} {} en la {}", n.1, c.1, p.1),
        (Lang::Es, true) => format!("un {} {} cerca de la {}", n.1, c.1, p.1),
    }
}

/// Every word the generator can emit, in a fixed order.
pub fn vocabulary() -> Vec<String> {
    let mut words: Vec<String> = FUNCTION_WORDS.iter().map(|s| s.to_string()).collect();
    for table in [&NOUNS[..], &COLORS[..], &PLACES[..]] {
        for (en, es) in table {
            words.push(en.to_string());
            words.push(es.to_string());
        }
    }
    words
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub captions: Vec<CaptionRecord>,
    pub features: FeatureStore,
    pub scenes: Vec<Scene>,
    pub embeddings: EmbeddingTable,
    /// Human-style similarity norms over the content words.
    pub similarity: Vec<SimilarityDataset>,
}

pub fn image_id(i: usize) -> String {
    format!("img{i:05}")
}

/// Builds the corpus. The same config and seed always give identical output.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = FeatureStore::new(cfg.feature_dim());
    let mut captions = Vec::new();
    let mut scenes = Vec::new();
    for i in 0..cfg.images {
        let scene = Scene::random(&mut rng);
        let id = image_id(i);
        let mut v = scene.features(cfg.attributes);
        v.extend((0..cfg.background_dims).map(|_| 1.0 + cfg.background_noise * rng.random_range(-1.0..=1.0)));
        features.insert(id.clone(), v)?;
        for lang in [Lang::En, Lang::Es] {
            for _ in 0..cfg.captions_per_lang {
                let grounded = rng.random::<f64>() < cfg.gamma;
                let mut described = if grounded { scene } else { Scene::random(&mut rng) };
                // Attributes absent from the features are never grounded.
                let free = Scene::random(&mut rng);
                if cfg.attributes < 2 {
                    described.color = free.color;
                }
                if cfg.attributes < 3 {
                    described.place = free.place;
                }
                let near = rng.random::<bool>();
                captions.push(CaptionRecord {
                    image_id: id.clone(),
                    lang,
                    text: caption(described, lang, near),
                });
            }
        }
        scenes.push(scene);
    }
    let embeddings = embedding_table(cfg.embed_dim, &mut rng)?;
    let similarity = similarity_norms(&mut rng);
    Ok(SynthCorpus {
        captions,
        features,
        scenes,
        embeddings,
        similarity,
    })
}

/// Random vectors in which a translation pair shares a concept vector plus
/// a little language-specific noise, imitating a multilingual space.
fn embedding_table(dim: usize, rng: &mut ChaCha8Rng) -> Result<EmbeddingTable> {
    let words = vocabulary();
    let mut m = Matrix::zeros(words.len(), dim);
    let mut row = 0;
    for _ in FUNCTION_WORDS {
        for x in m.row_mut(row) {
            *x = rng.random_range(-1.0..1.0);
        }
        row += 1;
    }
    while row < words.len() {
        let concept: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..2 {
            for (x, c) in m.row_mut(row).iter_mut().zip(&concept) {
                *x = c + 0.1 * rng.random_range(-1.0..1.0);
            }
            row += 1;
        }
    }
    EmbeddingTable::new(words, m)
}

/// Scores on a 0..4 scale from a hidden one-dimensional "meaning" per noun,
/// in English, Spanish and cross-lingual flavours.
fn similarity_norms(rng: &mut ChaCha8Rng) -> Vec<SimilarityDataset> {
    let meaning: Vec<f64> = NOUNS.iter().map(|_| rng.random::<f64>()).collect();
    let mut en = Vec::new();
    let mut es = Vec::new();
    let mut cross = Vec::new();
    for i in 0..NOUNS.len() {
        for j in i + 1..NOUNS.len() {
            let score = (4.0 * (1.0 - (meaning[i] - meaning[j]).abs())).clamp(0.0, 4.0);
            let score = (score * 100.0).round() / 100.0;
            let pair = |a: &str, la: &str, b: &str, lb: &str| WordPair {
                word1: a.into(),
                word2: b.into(),
                lang1: la.into(),
                lang2: lb.into(),
                score,
            };
            en.push(pair(NOUNS[i].0, "en", NOUNS[j].0, "en"));
            es.push(pair(NOUNS[i].1, "es", NOUNS[j].1, "es"));
            cross.push(pair(NOUNS[i].0, "en", NOUNS[j].1, "es"));
        }
    }
    let ds = |name: &str, pairs| SimilarityDataset {
        name: name.into(),
        pairs,
        scale: Some((0.0, 4.0)),
    };
    vec![ds("synth-en", en), ds("synth-es", es), ds("synth-en-es", cross)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig {
            images: 20,
            ..Default::default()
        };
        let a = generate(&cfg, 4).unwrap();
        let b = generate(&cfg, 4).unwrap();
        assert_eq!(a.captions, b.captions);
        assert_eq!(a.features.to_text(), b.features.to_text());
        assert_eq!(a.embeddings.to_text(), b.embeddings.to_text());
        assert_ne!(a.captions, generate(&cfg, 5).unwrap().captions);
        assert_eq!(a.captions.len(), 20 * 2 * 2);
    }

    #[test]
    fn gamma_one_nouns_recoverable_from_features() {
        let cfg = SynthConfig {
            images: 50,
            attributes: 2,
            ..Default::default()
        };
        let c = generate(&cfg, 1).unwrap();
        assert_eq!(cfg.feature_dim(), 14 + cfg.background_dims);
        for rec in &c.captions {
            let v = c.features.get(&rec.image_id).unwrap();
            let (noun, color, place) = Scene::decode_features(v, 2).unwrap();
            assert_eq!(place, None);
            let (n, col) = (NOUNS[noun], COLORS[color.unwrap()]);
            let (nw, cw) = match rec.lang {
                Lang::En => (n.0, col.0),
                Lang::Es => (n.1, col.1),
            };
            let words: Vec<&str> = rec.text.split(' ').collect();
            assert!(words.contains(&nw) && words.contains(&cw), "{} vs {:?}", rec.text, (nw, cw));
        }
    }

    #[test]
    fn every_caption_tokenizes_without_unk() {
        let c = generate(&SynthConfig { images: 30, gamma: 0.5, ..Default::default() }, 2).unwrap();
        let unk = c.embeddings.special().unk;
        for rec in &c.captions {
            assert!(!c.embeddings.tokenize(&rec.text).ids.contains(&unk), "{}", rec.text);
        }
        for d in &c.similarity {
            assert_eq!(d.len(), 28);
        }
    }

    #[test]
    fn invalid_gamma_rejected() {
        let cfg = SynthConfig { gamma: 1.5, ..Default::default() };
        assert!(generate(&cfg, 0).is_err());
    }
}
