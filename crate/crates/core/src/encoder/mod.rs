//! Tuple to vector composition and pairwise similarity vectors.
//!
//! A tuple is flattened into one token sequence (attribute boundaries are
//! dropped), its word vectors are averaged with smooth-inverse-frequency
//! weights, and a candidate pair becomes the elementwise absolute difference
//! of its two tuple vectors.

mod io;

use std::collections::HashMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{read_pairs, write_pairs, PairSidecar};

use crate::dataset_io::{CandidateSet, DatasetHandle, LabeledPairs, Labeled, Record};
use crate::embedding::{tokenize, EmbeddingStore, FrequencyTable};
use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};
use crate::seed;

/// Default SIF smoothing constant.
pub const DEFAULT_SIF_A: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleDoc {
    pub tuple_id: String,
    pub tokens: Vec<String>,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TupleVector<F> {
    pub tuple_id: String,
    pub vec: Vec<F>,
}

/// Similarity vector of a candidate pair plus its training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPair<F> {
    pub left_id: String,
    pub right_id: String,
    pub x: Vec<F>,
    pub label: Option<u8>,
    pub weight: F,
    pub origin: String,
}

impl<F: Scalar> EncodedPair<F> {
    pub fn new(left_id: impl Into<String>, right_id: impl Into<String>, x: Vec<F>) -> Self {
        Self {
            left_id: left_id.into(),
            right_id: right_id.into(),
            x,
            label: None,
            weight: F::one(),
            origin: String::new(),
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

impl<F> Labeled for EncodedPair<F> {
    fn label(&self) -> Option<u8> {
        self.label
    }
}

/// Flattens a tuple into a document: the tokens of every non-null attribute
/// value, in schema order.
pub fn tuple_to_document(
    tuple_id: &str,
    record: &Record,
    schema: &[String],
    origin: &str,
) -> Result<TupleDoc> {
    let tokens: Vec<String> = schema
        .iter()
        .filter_map(|a| record.get(a).and_then(Option::as_deref))
        .flat_map(tokenize)
        .collect();
    if tokens.is_empty() {
        return Err(Error::Tuple {
            tuple_id: tuple_id.to_string(),
            message: "no tokens: every attribute is null or empty".into(),
        });
    }
    Ok(TupleDoc {
        tuple_id: tuple_id.to_string(),
        tokens,
        origin: origin.to_string(),
    })
}

fn weighted_mean<F: Scalar>(
    doc: &TupleDoc,
    store: &EmbeddingStore<F>,
    weight: impl Fn(&str) -> F,
) -> Result<TupleVector<F>> {
    if doc.tokens.is_empty() {
        return Err(Error::Tuple {
            tuple_id: doc.tuple_id.clone(),
            message: "empty document".into(),
        });
    }
    let mut acc = vec![F::zero(); store.dim()];
    for tok in &doc.tokens {
        let v = store.vector_for(tok).ok_or_else(|| Error::Tuple {
            tuple_id: doc.tuple_id.clone(),
            message: format!("unresolvable token {tok:?}"),
        })?;
        let w = weight(tok);
        for (a, &x) in acc.iter_mut().zip(v) {
            *a = *a + w * x;
        }
    }
    let inv = F::one() / F::lit(doc.tokens.len() as f64);
    Ok(TupleVector {
        tuple_id: doc.tuple_id.clone(),
        vec: acc.into_iter().map(|a| a * inv).collect(),
    })
}

/// Unweighted mean of the token vectors.
pub fn encode_simple<F: Scalar>(doc: &TupleDoc, store: &EmbeddingStore<F>) -> Result<TupleVector<F>> {
    weighted_mean(doc, store, |_| F::one())
}

/// SIF weight `a / (a + p(w))`.
pub fn sif_weight<F: Scalar>(a: F, p: F) -> F {
    a / (a + p)
}

/// Mean of token vectors weighted by `a / (a + p(w))`, divided by the token
/// count. Tokens missing from `freqs` have p(w) = 0.
pub fn encode_sif<F: Scalar>(
    doc: &TupleDoc,
    store: &EmbeddingStore<F>,
    freqs: &FrequencyTable,
    a: F,
) -> Result<TupleVector<F>> {
    if !(a > F::zero()) {
        return Err(Error::invalid("SIF parameter a must be positive"));
    }
    weighted_mean(doc, store, |w| sif_weight(a, freqs.p::<F>(w)))
}

const PC_MAX_ITERS: usize = 100;
const PC_TOL: f64 = 1e-10;
const PC_SEED: u64 = 0x5eed_0f_f1c5;

/// Top right-singular direction of the stacked vectors by power iteration on
/// the Gram matrix. `None` when the matrix is all zeros. The sign is fixed so
/// the largest-magnitude component is positive.
pub fn first_principal_direction<F: Scalar>(vectors: &[Vec<F>]) -> Option<Vec<F>> {
    let d = vectors.first()?.len();
    let mut gram = vec![F::zero(); d * d];
    for v in vectors {
        for i in 0..d {
            let vi = v[i];
            if vi == F::zero() {
                continue;
            }
            for j in 0..d {
                gram[i * d + j] = gram[i * d + j] + vi * v[j];
            }
        }
    }
    if gram.iter().all(|g| *g == F::zero()) {
        return None;
    }
    let mut rng = seed::rng(PC_SEED);
    let mut u: Vec<F> = (0..d).map(|_| F::lit(rng.random::<f64>() + 0.5)).collect();
    normalize(&mut u)?;
    for _ in 0..PC_MAX_ITERS {
        let mut next: Vec<F> = (0..d)
            .map(|i| dot(&gram[i * d..(i + 1) * d], &u))
            .collect();
        normalize(&mut next)?;
        let delta: F = next
            .iter()
            .zip(&u)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>()
            .sqrt();
        u = next;
        if delta < F::lit(PC_TOL) {
            break;
        }
    }
    let lead = u
        .iter()
        .enumerate()
        .fold((0, F::zero()), |best, (i, &x)| {
            if x.abs() > best.1 {
                (i, x.abs())
            } else {
                best
            }
        })
        .0;
    if u[lead] < F::zero() {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    Some(u)
}

fn normalize<F: Scalar>(v: &mut [F]) -> Option<()> {
    let n = dot(v, v).sqrt();
    if !(n > F::zero()) || !n.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x = *x / n);
    Some(())
}

/// Removes each vector's projection on the first principal direction of the
/// whole set. An all-zero set is returned unchanged.
pub fn remove_first_pc<F: Scalar>(vectors: Vec<TupleVector<F>>) -> Result<Vec<TupleVector<F>>> {
    if vectors.len() < 2 {
        return Err(Error::invalid("principal component removal needs >= 2 vectors"));
    }
    let dim = vectors[0].vec.len();
    if let Some(bad) = vectors.iter().find(|v| v.vec.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            actual: bad.vec.len(),
        });
    }
    let raw: Vec<Vec<F>> = vectors.iter().map(|v| v.vec.clone()).collect();
    let Some(u) = first_principal_direction(&raw) else {
        return Ok(vectors);
    };
    Ok(vectors
        .into_iter()
        .map(|mut tv| {
            let proj = dot(&tv.vec, &u);
            for (x, &ui) in tv.vec.iter_mut().zip(&u) {
                *x = *x - proj * ui;
            }
            tv
        })
        .collect())
}

/// Elementwise `|left - right|`.
pub fn similarity_vector<F: Scalar>(
    left: &TupleVector<F>,
    right: &TupleVector<F>,
) -> Result<EncodedPair<F>> {
    if left.vec.len() != right.vec.len() {
        return Err(Error::Dimension {
            expected: left.vec.len(),
            actual: right.vec.len(),
        });
    }
    let x = left
        .vec
        .iter()
        .zip(&right.vec)
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    Ok(EncodedPair::new(left.tuple_id.clone(), right.tuple_id.clone(), x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Composition {
    Mean,
    Sif { a: f64 },
}

impl Default for Composition {
    fn default() -> Self {
        Composition::Sif { a: DEFAULT_SIF_A }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub composition: Composition,
    pub remove_first_pc: bool,
    pub origin: String,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        Self {
            composition: Composition::default(),
            remove_first_pc: false,
            origin: String::new(),
        }
    }
}

pub fn encode_tuple<F: Scalar>(
    doc: &TupleDoc,
    store: &EmbeddingStore<F>,
    freqs: &FrequencyTable,
    composition: Composition,
) -> Result<TupleVector<F>> {
    match composition {
        Composition::Mean => encode_simple(doc, store),
        Composition::Sif { a } => encode_sif(doc, store, freqs, F::lit(a)),
    }
}

fn encode_relation<F: Scalar>(
    ds: &DatasetHandle,
    store: &EmbeddingStore<F>,
    freqs: &FrequencyTable,
    options: &EncodeOptions,
) -> Vec<(String, Result<TupleVector<F>>)> {
    let rows: Vec<(&str, &Record)> = ds.iter().collect();
    rows.par_iter()
        .map(|(id, rec)| {
            let v = tuple_to_document(id, rec, &ds.schema, &options.origin)
                .and_then(|doc| encode_tuple(&doc, store, freqs, options.composition));
            (id.to_string(), v)
        })
        .collect()
}

/// Encodes every candidate pair. Output order equals candidate order. With
/// `remove_first_pc`, the projection is removed over all encodable tuple
/// vectors of the involved relations before differencing.
pub fn encode_dataset<F: Scalar>(
    left: &DatasetHandle,
    right: &DatasetHandle,
    candidates: &CandidateSet,
    store: &EmbeddingStore<F>,
    freqs: &FrequencyTable,
    options: &EncodeOptions,
) -> Result<Vec<EncodedPair<F>>> {
    encode_pairs(left, right, &candidates.pairs, store, freqs, options)
}

pub fn encode_pairs<F: Scalar>(
    left: &DatasetHandle,
    right: &DatasetHandle,
    pairs: &[(String, String)],
    store: &EmbeddingStore<F>,
    freqs: &FrequencyTable,
    options: &EncodeOptions,
) -> Result<Vec<EncodedPair<F>>> {
    let same = std::ptr::eq(left, right);
    let mut encoded = encode_relation(left, store, freqs, options);
    let split = encoded.len();
    if !same {
        encoded.extend(encode_relation(right, store, freqs, options));
    }
    if options.remove_first_pc {
        let ok: Vec<usize> = (0..encoded.len()).filter(|&i| encoded[i].1.is_ok()).collect();
        if ok.len() >= 2 {
            let vecs: Vec<TupleVector<F>> = ok
                .iter()
                .map(|&i| encoded[i].1.as_ref().expect("filtered ok").clone())
                .collect();
            for (&i, tv) in ok.iter().zip(remove_first_pc(vecs)?) {
                encoded[i].1 = Ok(tv);
            }
        }
    }
    let (lpart, rpart) = encoded.split_at(split);
    let lmap: HashMap<&str, &Result<TupleVector<F>>> =
        lpart.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let rmap: HashMap<&str, &Result<TupleVector<F>>> = if same {
        lmap.clone()
    } else {
        rpart.iter().map(|(id, v)| (id.as_str(), v)).collect()
    };
    pairs
        .par_iter()
        .map(|(l, r)| {
            let lv = fetch(&lmap, l, "left")?;
            let rv = fetch(&rmap, r, "right")?;
            Ok(similarity_vector(lv, rv)?.with_origin(options.origin.clone()))
        })
        .collect()
}

fn fetch<'a, F: Scalar>(
    map: &HashMap<&str, &'a Result<TupleVector<F>>>,
    id: &str,
    side: &str,
) -> Result<&'a TupleVector<F>> {
    match map.get(id) {
        None => Err(Error::Tuple {
            tuple_id: id.to_string(),
            message: format!("unknown {side} tuple id"),
        }),
        Some(Err(e)) => Err(Error::Tuple {
            tuple_id: id.to_string(),
            message: e.to_string(),
        }),
        Some(Ok(v)) => Ok(v),
    }
}

/// Sets the label of every pair present in `labels`; returns how many matched.
pub fn attach_labels<F>(pairs: &mut [EncodedPair<F>], labels: &LabeledPairs) -> usize {
    let map = labels.to_map();
    let mut hit = 0;
    for p in pairs.iter_mut() {
        if let Some(&y) = map.get(&(p.left_id.clone(), p.right_id.clone())) {
            p.label = Some(y);
            hit += 1;
        }
    }
    hit
}
