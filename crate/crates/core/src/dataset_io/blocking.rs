use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DatasetHandle;
use crate::embedding::estimate_frequencies;
use crate::error::{Error, Result};

/// Number of most frequent pooled tokens ignored when blocking.
pub const DEFAULT_STOP_TOKENS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub min_shared_tokens: usize,
    pub stop_tokens: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            min_shared_tokens: 1,
            stop_tokens: DEFAULT_STOP_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub pairs: Vec<(String, String)>,
    pub config: BlockConfig,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn token_sets(ds: &DatasetHandle, stop: &HashSet<String>) -> Vec<HashSet<String>> {
    ds.corpus()
        .into_iter()
        .map(|toks| toks.into_iter().filter(|t| !stop.contains(t)).collect())
        .collect()
}

fn stop_list(corpora: &[Vec<String>], k: usize) -> HashSet<String> {
    if k == 0 {
        return HashSet::new();
    }
    match estimate_frequencies(corpora) {
        Ok(f) => f.most_frequent(k).into_iter().collect(),
        Err(_) => HashSet::new(),
    }
}

fn overlap_pairs(
    left: &[HashSet<String>],
    right: &[HashSet<String>],
    min_shared: usize,
    self_join: bool,
) -> Vec<(usize, usize)> {
    let mut index: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, toks) in right.iter().enumerate() {
        for t in toks {
            index.entry(t.as_str()).or_default().push(j);
        }
    }
    left.par_iter()
        .enumerate()
        .map(|(i, toks)| {
            let mut shared: HashMap<usize, usize> = HashMap::new();
            for t in toks {
                if let Some(js) = index.get(t.as_str()) {
                    for &j in js {
                        *shared.entry(j).or_insert(0) += 1;
                    }
                }
            }
            let mut js: Vec<usize> = shared
                .into_iter()
                .filter(|&(j, c)| c >= min_shared && (!self_join || j > i))
                .map(|(j, _)| j)
                .collect();
            js.sort_unstable();
            js.into_iter().map(|j| (i, j)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Token-overlap blocking across two relations. A pair survives when the
/// tuples share at least `min_shared_tokens` tokens once the most frequent
/// pooled tokens are dropped. Pairs come out in (left row, right row) order.
pub fn block(
    left: &DatasetHandle,
    right: &DatasetHandle,
    config: &BlockConfig,
) -> Result<CandidateSet> {
    if config.min_shared_tokens == 0 {
        return Err(Error::invalid("min_shared_tokens must be >= 1"));
    }
    let lc = left.corpus();
    let rc = right.corpus();
    let pooled: Vec<Vec<String>> = lc.iter().chain(&rc).cloned().collect();
    let stop = stop_list(&pooled, config.stop_tokens);
    let ls = token_sets(left, &stop);
    let rs = token_sets(right, &stop);
    let lids: Vec<&str> = left.ids().collect();
    let rids: Vec<&str> = right.ids().collect();
    let pairs = overlap_pairs(&ls, &rs, config.min_shared_tokens, false)
        .into_iter()
        .map(|(i, j)| (lids[i].to_string(), rids[j].to_string()))
        .collect();
    Ok(CandidateSet {
        pairs,
        config: config.clone(),
    })
}

/// Deduplication blocking within one relation; emits each unordered pair once
/// with the earlier row on the left.
pub fn block_self(ds: &DatasetHandle, config: &BlockConfig) -> Result<CandidateSet> {
    if config.min_shared_tokens == 0 {
        return Err(Error::invalid("min_shared_tokens must be >= 1"));
    }
    let stop = stop_list(&ds.corpus(), config.stop_tokens);
    let sets = token_sets(ds, &stop);
    let ids: Vec<&str> = ds.ids().collect();
    let pairs = overlap_pairs(&sets, &sets, config.min_shared_tokens, true)
        .into_iter()
        .map(|(i, j)| (ids[i].to_string(), ids[j].to_string()))
        .collect();
    Ok(CandidateSet {
        pairs,
        config: config.clone(),
    })
}
