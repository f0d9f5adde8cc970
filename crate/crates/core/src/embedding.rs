//! Pre-trained word vectors, corpus word frequencies and context-based
//! inference of vectors for out-of-vocabulary words.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default half-width of an OOV context window.
pub const DEFAULT_WINDOW: usize = 5;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Normalizes a single lookup key the same way [`tokenize`] does.
pub fn normalize_token(word: &str) -> String {
    word.trim().to_lowercase()
}

/// Word to vector map with a fixed dimension.
///
/// Dictionary entries are immutable once loaded. Vectors inferred for
/// out-of-vocabulary words live in a separate cache that takes precedence
/// in [`EmbeddingStore::vector_for`].
#[derive(Debug, Clone)]
pub struct EmbeddingStore<F> {
    dim: usize,
    entries: HashMap<String, Vec<F>>,
    inferred: HashMap<String, Vec<F>>,
    source_label: String,
    duplicates: usize,
}

impl<F: Scalar> EmbeddingStore<F> {
    pub fn new(dim: usize, source_label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            entries: HashMap::new(),
            inferred: HashMap::new(),
            source_label: source_label.into(),
            duplicates: 0,
        })
    }

    /// Inserts a dictionary vector; returns `true` when it replaced an entry.
    pub fn insert(&mut self, word: &str, vector: Vec<F>) -> Result<bool> {
        let word = normalize_token(word);
        if word.is_empty() {
            return Err(Error::invalid("empty word"));
        }
        self.check_vector(&vector)?;
        let replaced = self.entries.insert(word, vector).is_some();
        if replaced {
            self.duplicates += 1;
        }
        Ok(replaced)
    }

    fn check_vector(&self, vector: &[F]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite vector component"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// Number of data lines whose word had already been seen (last one wins).
    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    /// Dictionary lookup. Never falls back to a default vector.
    pub fn lookup(&self, word: &str) -> Option<&[F]> {
        if let Some(v) = self.entries.get(word) {
            return Some(v);
        }
        self.entries.get(&normalize_token(word)).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    /// Vector used for encoding: a cached inferred vector if present, else the
    /// dictionary entry.
    pub fn vector_for(&self, word: &str) -> Option<&[F]> {
        self.inferred
            .get(word)
            .map(Vec::as_slice)
            .or_else(|| self.lookup(word))
    }

    pub fn cache_inferred(&mut self, word: &str, vector: Vec<F>) -> Result<()> {
        self.check_vector(&vector)?;
        self.inferred.insert(normalize_token(word), vector);
        Ok(())
    }

    pub fn inferred_count(&self) -> usize {
        self.inferred.len()
    }

    pub fn inferred(&self, word: &str) -> Option<&[F]> {
        self.inferred.get(word).map(Vec::as_slice)
    }

    /// Dictionary words in sorted order.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.entries.keys().map(String::as_str).collect();
        w.sort_unstable();
        w
    }

    /// Parses the text format: optional `<vocab> <dim>` header, then one
    /// `<token> <f1> ... <fd>` row per line.
    pub fn parse<R: BufRead>(
        reader: R,
        expected_dim: Option<usize>,
        source_label: &str,
    ) -> Result<Self> {
        let perr = |line: usize, message: String| Error::ParseLine {
            path: source_label.to_string(),
            line,
            message,
        };
        let mut store: Option<Self> = None;
        let mut first = true;
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::io(source_label, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if first {
                first = false;
                if fields.len() == 2 {
                    if let (Ok(_vocab), Ok(dim)) =
                        (fields[0].parse::<usize>(), fields[1].parse::<usize>())
                    {
                        if let Some(e) = expected_dim {
                            if e != dim {
                                return Err(perr(
                                    lineno,
                                    format!("header dimension {dim} differs from expected {e}"),
                                ));
                            }
                        }
                        store = Some(Self::new(dim, source_label)?);
                        continue;
                    }
                }
            }
            let arity = fields.len() - 1;
            if arity == 0 {
                return Err(perr(lineno, "row has no vector components".into()));
            }
            let st = match store.as_mut() {
                Some(s) => s,
                None => {
                    let dim = expected_dim.unwrap_or(arity);
                    store.insert(Self::new(dim, source_label)?)
                }
            };
            if arity != st.dim {
                return Err(perr(
                    lineno,
                    format!("dimension mismatch: expected {}, found {arity}", st.dim),
                ));
            }
            let mut v = Vec::with_capacity(arity);
            for f in &fields[1..] {
                let x: f64 = f
                    .parse()
                    .map_err(|_| perr(lineno, format!("invalid number {f:?}")))?;
                if !x.is_finite() {
                    return Err(perr(lineno, format!("non-finite component {f:?}")));
                }
                v.push(F::lit(x));
            }
            let word = normalize_token(fields[0]);
            if word.is_empty() {
                return Err(perr(lineno, "empty token".into()));
            }
            st.insert(&word, v)
                .map_err(|e| perr(lineno, e.to_string()))?;
        }
        match store {
            Some(s) if !s.is_empty() => {
                if s.duplicates > 0 {
                    log::warn!(
                        "{source_label}: {} duplicate words, last occurrence kept",
                        s.duplicates
                    );
                }
                Ok(s)
            }
            _ => Err(Error::Parse {
                path: source_label.to_string(),
                message: "no embedding rows".into(),
            }),
        }
    }

    /// Writes the dictionary (not the inferred cache) with a header line.
    /// Components use the shortest representation that parses back exactly.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.entries.len(), self.dim)?;
        for word in self.words() {
            write!(w, "{word}")?;
            for x in &self.entries[word] {
                write!(w, " {}", x.to_f64_lossy())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn load_embeddings<F: Scalar>(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingStore<F>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::parse(BufReader::new(file), expected_dim, &path.display().to_string())
}

/// Token counts pooled over one or more corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Exact relative frequency `count / total`.
    pub fn ratio(&self, word: &str) -> Ratio<u64> {
        Ratio::new(self.count(word), self.total)
    }

    /// Relative frequency p(w); zero for unseen words.
    pub fn p<F: Scalar>(&self, word: &str) -> F {
        F::lit(self.count(word) as f64 / self.total as f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, &c)| (w.as_str(), c))
    }

    /// The `k` most frequent words, ties broken alphabetically.
    pub fn most_frequent(&self, k: usize) -> Vec<String> {
        let mut all: Vec<(&String, &u64)> = self.counts.iter().collect();
        all.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
        all.into_iter().take(k).map(|(w, _)| w.clone()).collect()
    }
}

pub fn estimate_frequencies<S: AsRef<[String]>>(corpora: &[S]) -> Result<FrequencyTable> {
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    for stream in corpora {
        for tok in stream.as_ref() {
            *counts.entry(tok.clone()).or_insert(0u64) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("cannot estimate frequencies from empty corpora"));
    }
    Ok(FrequencyTable { counts, total })
}

/// Every context window of one word across a set of token streams.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSet {
    pub word: String,
    pub windows: Vec<Vec<String>>,
    pub window_k: usize,
}

fn window_around(stream: &[String], pos: usize, k: usize) -> Vec<String> {
    let lo = pos.saturating_sub(k);
    let hi = (pos + k + 1).min(stream.len());
    stream[lo..pos]
        .iter()
        .chain(&stream[pos + 1..hi])
        .cloned()
        .collect()
}

/// One window per occurrence: up to `k` tokens on each side, never crossing
/// the boundary of the stream the occurrence belongs to.
pub fn collect_contexts<S: AsRef<[String]>>(
    corpora: &[S],
    word: &str,
    k: usize,
) -> Result<ContextSet> {
    if k == 0 {
        return Err(Error::invalid("context window half-width must be >= 1"));
    }
    let mut windows = Vec::new();
    for stream in corpora {
        let stream = stream.as_ref();
        for (pos, tok) in stream.iter().enumerate() {
            if tok == word {
                windows.push(window_around(stream, pos, k));
            }
        }
    }
    Ok(ContextSet {
        word: word.to_string(),
        windows,
        window_k: k,
    })
}

/// Mean over windows of the mean dictionary vector in each window. Windows
/// with no dictionary token are skipped and not counted.
pub fn infer_oov<F: Scalar>(store: &EmbeddingStore<F>, ctx: &ContextSet) -> Result<Vec<F>> {
    let dim = store.dim();
    let mut acc = vec![F::zero(); dim];
    let mut used = 0usize;
    let mut window_mean = vec![F::zero(); dim];
    for window in &ctx.windows {
        window_mean.iter_mut().for_each(|v| *v = F::zero());
        let mut known = 0usize;
        for tok in window {
            if let Some(v) = store.lookup(tok) {
                for (m, &x) in window_mean.iter_mut().zip(v) {
                    *m = *m + x;
                }
                known += 1;
            }
        }
        if known == 0 {
            continue;
        }
        let inv = F::one() / F::lit(known as f64);
        for (a, &m) in acc.iter_mut().zip(&window_mean) {
            *a = *a + m * inv;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::UnresolvableOov(ctx.word.clone()));
    }
    let inv = F::one() / F::lit(used as f64);
    Ok(acc.into_iter().map(|a| a * inv).collect())
}

/// Which words get a context-inferred vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OovPolicy {
    pub window_k: usize,
    /// When set, dictionary words seen fewer than this many times in the
    /// pooled corpus are also re-inferred from context.
    pub rare_min_count: Option<u64>,
}

impl Default for OovPolicy {
    fn default() -> Self {
        Self {
            window_k: DEFAULT_WINDOW,
            rare_min_count: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OovSummary {
    pub inferred: Vec<String>,
    pub unresolved: Vec<String>,
}

/// Infers and caches a vector for every word of `vocabulary` that the policy
/// selects, drawing contexts from `corpora`. Runs in one pass before any
/// encoding so the store is read-only afterwards.
pub fn resolve_vocabulary<F: Scalar, S: AsRef<[String]>>(
    store: &mut EmbeddingStore<F>,
    vocabulary: &BTreeSet<String>,
    corpora: &[S],
    freqs: &FrequencyTable,
    policy: &OovPolicy,
) -> Result<OovSummary> {
    if policy.window_k == 0 {
        return Err(Error::invalid("context window half-width must be >= 1"));
    }
    let needs: BTreeSet<&str> = vocabulary
        .iter()
        .map(String::as_str)
        .filter(|w| {
            !store.contains(w)
                || policy
                    .rare_min_count
                    .is_some_and(|m| freqs.count(w) < m)
        })
        .collect();
    let mut windows: HashMap<&str, Vec<Vec<String>>> = HashMap::new();
    for stream in corpora {
        let stream = stream.as_ref();
        for (pos, tok) in stream.iter().enumerate() {
            if let Some(w) = needs.get(tok.as_str()) {
                windows
                    .entry(w)
                    .or_default()
                    .push(window_around(stream, pos, policy.window_k));
            }
        }
    }
    let mut summary = OovSummary::default();
    for w in needs {
        let ctx = ContextSet {
            word: w.to_string(),
            windows: windows.remove(w).unwrap_or_default(),
            window_k: policy.window_k,
        };
        match infer_oov(store, &ctx) {
            Ok(v) => {
                store.cache_inferred(w, v)?;
                summary.inferred.push(w.to_string());
            }
            Err(_) => summary.unresolved.push(w.to_string()),
        }
    }
    if !summary.unresolved.is_empty() {
        log::warn!(
            "{} out-of-vocabulary words have no resolvable context",
            summary.unresolved.len()
        );
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn cat_dog() -> EmbeddingStore<f64> {
        EmbeddingStore::parse("cat 1.0 0.0\ndog 0.0 1.0\n".as_bytes(), None, "mem").unwrap()
    }

    #[test]
    fn parses_plain_rows() {
        let s = cat_dog();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.len(), 2);
        assert_eq!(s.lookup("cat"), Some(&[1.0, 0.0][..]));
        assert_eq!(s.lookup("bird"), None);
    }

    #[test]
    fn lookup_normalizes_case() {
        let s = cat_dog();
        assert_eq!(s.lookup("CAT"), Some(&[1.0, 0.0][..]));
        let t = tokenize("CAT");
        assert_eq!(s.lookup(&t[0]), Some(&[1.0, 0.0][..]));
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = EmbeddingStore::<f64>::parse("".as_bytes(), None, "mem").unwrap_err();
        assert!(err.to_string().contains("no embedding rows"));
        let err = EmbeddingStore::<f64>::parse("3 4\n".as_bytes(), None, "mem").unwrap_err();
        assert!(err.to_string().contains("no embedding rows"));
    }

    #[test]
    fn header_sets_dimension() {
        let s =
            EmbeddingStore::<f64>::parse("2 3\na 1 2 3\nb 4 5 6\n".as_bytes(), None, "mem").unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(s.lookup("b"), Some(&[4.0, 5.0, 6.0][..]));
    }

    #[test]
    fn dimension_mismatch_names_the_line() {
        let err = EmbeddingStore::<f64>::parse("a 1 2\nb 1 2\nc 1\n".as_bytes(), None, "mem")
            .unwrap_err();
        match err {
            Error::ParseLine { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let err =
            EmbeddingStore::<f64>::parse("a 1 2\n".as_bytes(), Some(3), "mem").unwrap_err();
        assert!(matches!(err, Error::ParseLine { line: 1, .. }));
    }

    #[test]
    fn duplicates_are_last_wins_and_counted() {
        let s = EmbeddingStore::<f64>::parse("a 1\nA 2\n".as_bytes(), None, "mem").unwrap();
        assert_eq!(s.lookup("a"), Some(&[2.0][..]));
        assert_eq!(s.duplicate_count(), 1);
    }

    #[test]
    fn tokenizer_splits_on_punctuation() {
        assert_eq!(
            tokenize("Codd, E.F.  -- ACM'70"),
            toks(&["codd", "e", "f", "acm", "70"])
        );
        assert!(tokenize(" ,. ").is_empty());
    }

    #[test]
    fn frequencies_pool_streams() {
        let f = estimate_frequencies(&[toks(&["a", "a", "b", "c"])]).unwrap();
        assert_eq!(f.total(), 4);
        assert_eq!(f.p::<f64>("a"), 0.5);
        assert_eq!(f.p::<f64>("b"), 0.25);
        assert_eq!(f.p::<f64>("zzz"), 0.0);
        let f = estimate_frequencies(&[toks(&["a"]), toks(&["a"])]).unwrap();
        assert_eq!(f.p::<f64>("a"), 1.0);
        assert!(estimate_frequencies::<Vec<String>>(&[vec![], vec![]]).is_err());
    }

    #[test]
    fn most_frequent_breaks_ties_alphabetically() {
        let f = estimate_frequencies(&[toks(&["b", "a", "c", "c"])]).unwrap();
        assert_eq!(f.most_frequent(2), toks(&["c", "a"]));
    }

    #[test]
    fn context_windows() {
        let c = collect_contexts(&[toks(&["x", "w", "y"])], "w", 5).unwrap();
        assert_eq!(c.windows, vec![toks(&["x", "y"])]);
        let c = collect_contexts(&[toks(&["w"])], "w", 5).unwrap();
        assert_eq!(c.windows, vec![Vec::<String>::new()]);
        let c = collect_contexts(&[toks(&["a", "b"])], "w", 5).unwrap();
        assert!(c.windows.is_empty());
        assert!(collect_contexts(&[toks(&["w"])], "w", 0).is_err());
    }

    #[test]
    fn windows_do_not_cross_streams() {
        let c = collect_contexts(&[toks(&["a", "b"]), toks(&["w", "c"])], "w", 5).unwrap();
        assert_eq!(c.windows, vec![toks(&["c"])]);
    }

    #[test]
    fn oov_mean_of_window_means() {
        let s = cat_dog();
        let ctx = ContextSet {
            word: "w".into(),
            windows: vec![toks(&["cat", "dog"])],
            window_k: 5,
        };
        assert_eq!(infer_oov(&s, &ctx).unwrap(), vec![0.5, 0.5]);

        let mut s = cat_dog();
        s.insert("zero", vec![0.0, 0.0]).unwrap();
        let ctx = ContextSet {
            word: "w".into(),
            windows: vec![toks(&["cat"]), toks(&["zero", "unknown"]), toks(&["nope"])],
            window_k: 5,
        };
        assert_eq!(infer_oov(&s, &ctx).unwrap(), vec![0.5, 0.0]);
    }

    #[test]
    fn oov_without_known_context_fails() {
        let s = cat_dog();
        let ctx = ContextSet {
            word: "w".into(),
            windows: vec![toks(&["x"]), vec![]],
            window_k: 5,
        };
        assert!(matches!(infer_oov(&s, &ctx), Err(Error::UnresolvableOov(_))));
    }

    #[test]
    fn resolve_caches_unknown_words_only_by_default() {
        let mut s = cat_dog();
        let corpus = vec![toks(&["cat", "zork", "dog"]), toks(&["qux"])];
        let freqs = estimate_frequencies(&corpus).unwrap();
        let vocab: BTreeSet<String> = corpus.iter().flatten().cloned().collect();
        let sum = resolve_vocabulary(&mut s, &vocab, &corpus, &freqs, &OovPolicy::default())
            .unwrap();
        assert_eq!(sum.inferred, toks(&["zork"]));
        assert_eq!(sum.unresolved, toks(&["qux"]));
        assert_eq!(s.vector_for("zork"), Some(&[0.5, 0.5][..]));
        assert_eq!(s.vector_for("cat"), Some(&[1.0, 0.0][..]));

        let mut s = cat_dog();
        let policy = OovPolicy {
            rare_min_count: Some(5),
            ..OovPolicy::default()
        };
        let sum = resolve_vocabulary(&mut s, &vocab, &corpus, &freqs, &policy).unwrap();
        assert!(sum.inferred.contains(&"cat".to_string()));
        // the dictionary entry is untouched, the cache overrides it
        assert_eq!(s.lookup("cat"), Some(&[1.0, 0.0][..]));
        assert_eq!(s.vector_for("cat"), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn works_in_f32() {
        let s = EmbeddingStore::<f32>::parse("a 0.5 0.25\n".as_bytes(), None, "mem").unwrap();
        assert_eq!(s.lookup("a"), Some(&[0.5f32, 0.25][..]));
    }
}
