//! Vocabulary, embeddings, nearest-neighbour queries and perturbation boxes.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::WordSet;

pub const PAD: &str = "<PAD>";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::format(
                    format!("words[{i}]"),
                    format!("duplicate word `{w}`"),
                ));
            }
        }
        if !index.contains_key(PAD) {
            return Err(Error::format(
                "words",
                format!("vocabulary must contain {PAD}"),
            ));
        }
        Ok(Self { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn pad_id(&self) -> usize {
        self.index[PAD]
    }
}

/// Row-per-word embedding matrix aligned with a [`Vocabulary`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dim..(id + 1) * self.dim]
    }
}

/// A vocabulary together with its embedding table, as stored in an
/// embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    vocab: Vocabulary,
    table: EmbeddingTable,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingFile {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
}

impl Embeddings {
    pub fn new(words: Vec<String>, dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::format("dim", "embedding dimension must be positive"));
        }
        if vectors.len() != words.len() {
            return Err(Error::format(
                "vectors",
                format!("{} vectors for {} words", vectors.len(), words.len()),
            ));
        }
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::format(
                    format!("vectors[{i}]"),
                    format!("length {}, expected {dim}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::format(format!("vectors[{i}]"), "non-finite entry"));
            }
        }
        let vocab = Vocabulary::new(words)?;
        let table = EmbeddingTable {
            dim,
            vectors: vectors.into_iter().flatten().collect(),
        };
        Ok(Self { vocab, table })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: EmbeddingFile = serde_json::from_str(text).map_err(|e| {
            Error::format(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        Self::new(file.words, file.dim, file.vectors)
    }

    pub fn load(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = EmbeddingFile {
            dim: self.table.dim,
            words: self.vocab.words.clone(),
            vectors: (0..self.vocab.len())
                .map(|i| self.table.vector(i).to_vec())
                .collect(),
        };
        let mut out =
            serde_json::to_string_pretty(&file).expect("embedding serialization cannot fail");
        out.push('\n');
        out
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        self.table.vector(id)
    }

    pub fn id(&self, word: &str) -> Result<usize> {
        self.vocab
            .id(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))
    }
}

/// A fixed-length, PAD-padded text and its embedded point.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInput {
    tokens: Vec<String>,
    ids: Vec<usize>,
    dim: usize,
    point: Vec<f64>,
}

impl TextInput {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.point[i * self.dim..(i + 1) * self.dim]
    }

    /// Positions holding `word`.
    pub fn positions_of(&self, word: &str) -> WordSet {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| *t == word)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Embeds `words`, right-padding with [`PAD`] to exactly `len` positions.
pub fn encode<S: AsRef<str>>(words: &[S], len: usize, emb: &Embeddings) -> Result<TextInput> {
    if words.len() > len {
        return Err(Error::TooLong {
            len: words.len(),
            max: len,
        });
    }
    let mut tokens = Vec::with_capacity(len);
    let mut ids = Vec::with_capacity(len);
    for w in words {
        let w = w.as_ref();
        ids.push(emb.id(w)?);
        tokens.push(w.to_string());
    }
    let pad = emb.vocab.pad_id();
    while tokens.len() < len {
        tokens.push(PAD.to_string());
        ids.push(pad);
    }
    let point = ids
        .iter()
        .flat_map(|&id| emb.vector(id).iter().copied())
        .collect();
    Ok(TextInput {
        tokens,
        ids,
        dim: emb.dim(),
        point,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    return 2.0;
                }
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                1.0 - dot / (na * nb)
            }
        }
    }
}

/// How each word may be perturbed in embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationSpec {
    /// ∞-norm hypercube of radius `eps` around the word's embedding.
    EpsBall { eps: f64 },
    /// Bounding box of the embeddings of the word's `k` nearest neighbours.
    KnnBox { k: usize, metric: Metric },
}

impl PerturbationSpec {
    pub fn eps(eps: f64) -> Self {
        PerturbationSpec::EpsBall { eps }
    }

    pub fn knn(k: usize, metric: Metric) -> Self {
        PerturbationSpec::KnnBox { k, metric }
    }

    pub fn validate(&self, vocab_len: usize) -> Result<()> {
        match *self {
            PerturbationSpec::EpsBall { eps } if !(eps.is_finite() && eps > 0.0) => Err(
                Error::InvalidInput(format!("epsilon must be finite and positive, got {eps}")),
            ),
            PerturbationSpec::KnnBox { k, .. } if k == 0 || k > vocab_len => Err(
                Error::InvalidInput(format!("k must be in 1..={vocab_len}, got {k}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InvalidShape("box bounds differ in length".into()));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h))
        {
            return Err(Error::InvalidInput(
                "box bounds must be finite with lo <= hi".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    /// Smallest box containing every point of `points`.
    pub fn bounding(points: impl IntoIterator<Item = impl AsRef<[f64]>>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = iter.next()?;
        let mut lo = first.as_ref().to_vec();
        let mut hi = lo.clone();
        for p in iter {
            for (i, v) in p.as_ref().iter().enumerate() {
                lo[i] = lo[i].min(*v);
                hi[i] = hi[i].max(*v);
            }
        }
        Some(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn contains_box(&self, other: &Hyperbox) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lo[i] <= other.lo[i] && other.hi[i] <= self.hi[i])
    }

    /// Clamps `x` into the box coordinatewise.
    pub fn clamp(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }
}

/// The `k` words closest to `word`, nearest first, starting with `word`
/// itself; other equal distances are ordered by vocabulary index.
pub fn knn(emb: &Embeddings, word: usize, k: usize, metric: Metric) -> Result<Vec<usize>> {
    if word >= emb.vocab.len() {
        return Err(Error::InvalidIndex {
            index: word,
            len: emb.vocab.len(),
        });
    }
    PerturbationSpec::knn(k, metric).validate(emb.vocab.len())?;
    let query = emb.vector(word);
    let mut scored: Vec<(f64, usize)> = (0..emb.vocab.len())
        .map(|id| {
            let d = if id == word {
                0.0
            } else {
                metric.distance(query, emb.vector(id))
            };
            (d, id)
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then((a.1 != word).cmp(&(b.1 != word)))
            .then(a.1.cmp(&b.1))
    });
    Ok(scored.into_iter().take(k).map(|(_, id)| id).collect())
}

/// Per-word perturbation box in `R^d`.
pub fn word_box(emb: &Embeddings, word: usize, spec: &PerturbationSpec) -> Result<Hyperbox> {
    spec.validate(emb.vocab.len())?;
    let x = emb.vector(word);
    Ok(match *spec {
        PerturbationSpec::EpsBall { eps } => Hyperbox {
            lo: x.iter().map(|v| v - eps).collect(),
            hi: x.iter().map(|v| v + eps).collect(),
        },
        PerturbationSpec::KnnBox { k, metric } => {
            let neighbours = knn(emb, word, k, metric)?;
            Hyperbox::bounding(neighbours.iter().map(|&id| emb.vector(id)))
                .expect("k >= 1 neighbours")
        }
    })
}

/// The per-position word boxes of a text, from which the text-level
/// perturbation set for any choice of fixed words is assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpace {
    point: Vec<f64>,
    dim: usize,
    word_boxes: Vec<Hyperbox>,
}

impl PerturbationSpace {
    pub fn new(text: &TextInput, spec: &PerturbationSpec, emb: &Embeddings) -> Result<Self> {
        let word_boxes = text
            .ids
            .iter()
            .map(|&id| word_box(emb, id, spec))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            point: text.point.clone(),
            dim: text.dim,
            word_boxes,
        })
    }

    /// Boxes each position with the bounding box of the given words plus the
    /// word actually present.
    pub fn from_word_sets(
        text: &TextInput,
        sets: &[Vec<String>],
        emb: &Embeddings,
    ) -> Result<Self> {
        if sets.len() != text.len() {
            return Err(Error::InvalidInput(format!(
                "{} word sets for a text of {} words",
                sets.len(),
                text.len()
            )));
        }
        let mut word_boxes = Vec::with_capacity(sets.len());
        for (i, set) in sets.iter().enumerate() {
            let mut vectors = vec![text.block(i).to_vec()];
            for w in set {
                vectors.push(emb.vector(emb.id(w)?).to_vec());
            }
            word_boxes.push(Hyperbox::bounding(vectors).expect("non-empty"));
        }
        Ok(Self {
            point: text.point.clone(),
            dim: text.dim,
            word_boxes,
        })
    }

    /// Builds a space directly from an embedded point and per-word boxes.
    pub fn from_boxes(point: Vec<f64>, word_boxes: Vec<Hyperbox>) -> Result<Self> {
        let dim = word_boxes.first().map_or(0, Hyperbox::dim);
        if dim == 0 || point.len() != dim * word_boxes.len() {
            return Err(Error::InvalidShape(
                "point does not match word boxes".into(),
            ));
        }
        for (i, b) in word_boxes.iter().enumerate() {
            if b.dim() != dim || !b.contains(&point[i * dim..(i + 1) * dim]) {
                return Err(Error::InvalidInput(format!(
                    "word box {i} does not contain its word"
                )));
            }
        }
        Ok(Self {
            point,
            dim,
            word_boxes,
        })
    }

    pub fn num_words(&self) -> usize {
        self.word_boxes.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn word_box(&self, i: usize) -> &Hyperbox {
        &self.word_boxes[i]
    }

    pub fn check_indices(&self, set: &WordSet) -> Result<()> {
        match set.iter().find(|&&i| i >= self.num_words()) {
            Some(&index) => Err(Error::InvalidIndex {
                index,
                len: self.num_words(),
            }),
            None => Ok(()),
        }
    }

    /// Text-level perturbation set: blocks in `fixed` are pinned to the
    /// input, every other block ranges over its word box.
    pub fn fixing(&self, fixed: &WordSet) -> Result<Hyperbox> {
        self.check_indices(fixed)?;
        let mut lo = Vec::with_capacity(self.point.len());
        let mut hi = Vec::with_capacity(self.point.len());
        for (i, b) in self.word_boxes.iter().enumerate() {
            if fixed.contains(&i) {
                let x = &self.point[i * self.dim..(i + 1) * self.dim];
                lo.extend_from_slice(x);
                hi.extend_from_slice(x);
            } else {
                lo.extend_from_slice(&b.lo);
                hi.extend_from_slice(&b.hi);
            }
        }
        Ok(Hyperbox { lo, hi })
    }

    /// Word positions whose block in `other` differs from the input by more
    /// than `tol` in some coordinate.
    pub fn differing_words(&self, other: &[f64], tol: f64) -> WordSet {
        differing_blocks(&self.point, other, self.dim, tol)
    }
}

pub(crate) fn differing_blocks(x: &[f64], other: &[f64], dim: usize, tol: f64) -> WordSet {
    x.chunks(dim)
        .zip(other.chunks(dim))
        .enumerate()
        .filter(|(_, (a, b))| a.iter().zip(b.iter()).any(|(u, v)| (u - v).abs() > tol))
        .map(|(i, _)| i)
        .collect()
}

/// Text-level perturbation set `B_E(t)` for the given fixed words.
pub fn build_perturbation(
    text: &TextInput,
    fixed: &WordSet,
    spec: &PerturbationSpec,
    emb: &Embeddings,
) -> Result<Hyperbox> {
    PerturbationSpace::new(text, spec, emb)?.fixing(fixed)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// `PAD -> 0, good -> 1.0, bad -> -1.0, great -> 1.2`, one dimension.
    pub fn toy_embeddings() -> Embeddings {
        Embeddings::new(
            vec![PAD.into(), "good".into(), "bad".into(), "great".into()],
            1,
            vec![vec![0.0], vec![1.0], vec![-1.0], vec![1.2]],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::toy_embeddings;
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[usize]) -> WordSet {
        items.iter().copied().collect()
    }

    #[test]
    fn toy_fixture_file_matches() {
        let loaded = Embeddings::from_json(include_str!("../fixtures/toy_emb.json")).unwrap();
        assert_eq!(loaded, toy_embeddings());
        assert_eq!(loaded.to_json(), include_str!("../fixtures/toy_emb.json"));
    }

    #[test]
    fn encode_pads() {
        let emb = toy_embeddings();
        let t = encode(&["good"], 2, &emb).unwrap();
        assert_eq!(t.tokens(), &["good".to_string(), PAD.to_string()]);
        assert_eq!(t.point(), &[1.0, 0.0]);
        let t = encode(&["good", "great"], 2, &emb).unwrap();
        assert_eq!(t.point(), &[1.0, 1.2]);
    }

    #[test]
    fn encode_errors() {
        let emb = toy_embeddings();
        assert!(matches!(encode(&["zzz"], 2, &emb), Err(Error::UnknownWord(w)) if w == "zzz"));
        assert!(matches!(
            encode(&["good", "good", "bad"], 2, &emb),
            Err(Error::TooLong { len: 3, max: 2 })
        ));
    }

    #[test]
    fn knn_on_toy_table() {
        let emb = toy_embeddings();
        let good = emb.id("good").unwrap();
        let great = emb.id("great").unwrap();
        // Brute-force distances from good: PAD 1.0, bad 2.0, great 0.2.
        let mut got = knn(&emb, good, 2, Metric::Euclidean).unwrap();
        got.sort();
        assert_eq!(got, vec![good, great]);
        for metric in [Metric::Euclidean, Metric::Cosine] {
            for w in 0..emb.vocab().len() {
                assert_eq!(knn(&emb, w, 1, metric).unwrap(), vec![w]);
            }
        }
    }

    #[test]
    fn knn_two_dimensional() {
        let emb = Embeddings::new(
            vec![PAD.into(), "a".into(), "b".into(), "c".into()],
            2,
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.9, 0.1],
                vec![-1.0, 0.0],
            ],
        )
        .unwrap();
        // a->b: sqrt(0.02); a->PAD: 1; a->c: 2.
        let got = knn(&emb, 1, 2, Metric::Euclidean).unwrap();
        assert_eq!(got, vec![1, 2]);
    }

    #[test]
    fn cosine_treats_zero_vectors_as_far() {
        let emb = toy_embeddings();
        let pad = emb.vocab().pad_id();
        assert_eq!(Metric::Cosine.distance(emb.vector(pad), emb.vector(1)), 2.0);
        // PAD's own neighbourhood: itself, then everything else at distance 2 by index.
        assert_eq!(knn(&emb, pad, 3, Metric::Cosine).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn word_boxes() {
        let emb = toy_embeddings();
        let good = emb.id("good").unwrap();
        let b = word_box(&emb, good, &PerturbationSpec::eps(0.5)).unwrap();
        assert_eq!((b.lo(), b.hi()), (&[0.5][..], &[1.5][..]));
        let b = word_box(&emb, good, &PerturbationSpec::knn(2, Metric::Euclidean)).unwrap();
        assert_eq!((b.lo(), b.hi()), (&[1.0][..], &[1.2][..]));
        let b = word_box(&emb, good, &PerturbationSpec::knn(1, Metric::Euclidean)).unwrap();
        assert!(b.is_point());
        assert_eq!(b.lo(), &[1.0]);
    }

    #[test]
    fn invalid_specs() {
        let emb = toy_embeddings();
        assert!(word_box(&emb, 1, &PerturbationSpec::eps(0.0)).is_err());
        assert!(word_box(&emb, 1, &PerturbationSpec::eps(f64::NAN)).is_err());
        assert!(word_box(&emb, 1, &PerturbationSpec::knn(5, Metric::Cosine)).is_err());
    }

    #[test]
    fn text_level_boxes() {
        let emb = toy_embeddings();
        let t = encode(&["good", "good"], 2, &emb).unwrap();
        let spec = PerturbationSpec::eps(1.5);
        let all = build_perturbation(&t, &set(&[0, 1]), &spec, &emb).unwrap();
        assert!(all.is_point());
        assert_eq!(all.lo(), t.point());
        let b = build_perturbation(&t, &set(&[0]), &spec, &emb).unwrap();
        assert_eq!(b.lo(), &[1.0, -0.5]);
        assert_eq!(b.hi(), &[1.0, 2.5]);
        let free = build_perturbation(&t, &set(&[]), &spec, &emb).unwrap();
        assert_eq!(free.lo(), &[-0.5, -0.5]);
        assert_eq!(free.hi(), &[2.5, 2.5]);
        assert!(matches!(
            build_perturbation(&t, &set(&[2]), &spec, &emb),
            Err(Error::InvalidIndex { index: 2, len: 2 })
        ));
    }

    #[test]
    fn explicit_word_sets() {
        let emb = toy_embeddings();
        let t = encode(&["good", "bad"], 2, &emb).unwrap();
        let space =
            PerturbationSpace::from_word_sets(&t, &[vec!["great".into()], vec![]], &emb).unwrap();
        let b = space.fixing(&WordSet::new()).unwrap();
        assert_eq!(b.lo(), &[1.0, -1.0]);
        assert_eq!(b.hi(), &[1.2, -1.0]);
    }

    #[test]
    fn differing_words() {
        let emb = toy_embeddings();
        let t = encode(&["good", "good"], 2, &emb).unwrap();
        let space = PerturbationSpace::new(&t, &PerturbationSpec::eps(1.5), &emb).unwrap();
        assert!(space.differing_words(&[1.0, 1.0], 1e-12).is_empty());
        assert_eq!(space.differing_words(&[-0.5, 1.0], 1e-12), set(&[0]));
        assert_eq!(space.differing_words(&[-0.5, 0.0], 1e-12), set(&[0, 1]));
    }

    fn random_embeddings(seed: u64, n: usize, dim: usize) -> Embeddings {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut words = vec![PAD.to_string()];
        words.extend((1..n).map(|i| format!("w{i}")));
        let mut vectors = vec![vec![0.0; dim]];
        vectors.extend((1..n).map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()));
        Embeddings::new(words, dim, vectors).unwrap()
    }

    proptest! {
        #[test]
        fn eps_boxes_are_monotone(seed in any::<u64>(), e1 in 0.01f64..2.0, e2 in 0.01f64..2.0) {
            let emb = random_embeddings(seed, 6, 3);
            let (small, large) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            for w in 0..6 {
                let a = word_box(&emb, w, &PerturbationSpec::eps(small)).unwrap();
                let b = word_box(&emb, w, &PerturbationSpec::eps(large)).unwrap();
                prop_assert!(b.contains_box(&a));
            }
        }

        #[test]
        fn knn_boxes_are_monotone(seed in any::<u64>(), k1 in 1usize..8, k2 in 1usize..8, cosine in any::<bool>()) {
            let emb = random_embeddings(seed, 8, 2);
            let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
            let (small, large) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            for w in 0..8 {
                let near = knn(&emb, w, small, metric).unwrap();
                prop_assert_eq!(near.len(), small);
                prop_assert!(near.contains(&w));
                let a = word_box(&emb, w, &PerturbationSpec::knn(small, metric)).unwrap();
                let b = word_box(&emb, w, &PerturbationSpec::knn(large, metric)).unwrap();
                prop_assert!(b.contains_box(&a));
                prop_assert!(a.contains(emb.vector(w)));
            }
        }

        #[test]
        fn more_fixed_words_shrink_the_box(seed in any::<u64>(), mask_a in 0u8..32, mask_b in 0u8..32, k in 1usize..6) {
            let emb = random_embeddings(seed, 7, 2);
            let words: Vec<String> = (1..6).map(|i| format!("w{i}")).collect();
            let t = encode(&words, 5, &emb).unwrap();
            let small: WordSet = (0..5).filter(|i| mask_a & (1 << i) != 0).collect();
            let large: WordSet = small.iter().copied().chain((0..5).filter(|i| mask_b & (1 << i) != 0)).collect();
            for spec in [PerturbationSpec::eps(0.3), PerturbationSpec::knn(k, Metric::Euclidean)] {
                let space = PerturbationSpace::new(&t, &spec, &emb).unwrap();
                let a = space.fixing(&small).unwrap();
                let b = space.fixing(&large).unwrap();
                prop_assert!(a.contains_box(&b));
                prop_assert!(a.contains(t.point()) && b.contains(t.point()));
            }
        }
    }
}
