//! Relations, candidate sets, labeled pairs and the seeded samplers used to
//! control class and dataset imbalance.

mod blocking;
mod sampling;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use blocking::{block, block_self, BlockConfig, CandidateSet, DEFAULT_STOP_TOKENS};
pub use sampling::{
    importance_sample, replicate_with_replacement, undersample_balanced, ClassRatio, Labeled,
};

use crate::embedding::tokenize;
use crate::error::{Error, Result};

/// Attribute name to value; `None` for a missing cell.
pub type Record = BTreeMap<String, Option<String>>;

/// A loaded relation. `schema` lists the non-id attributes in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub name: String,
    pub schema: Vec<String>,
    pub id_attribute: String,
    tuples: IndexMap<String, Record>,
}

impl DatasetHandle {
    pub fn new(
        name: impl Into<String>,
        schema: Vec<String>,
        id_attribute: impl Into<String>,
    ) -> Result<Self> {
        if schema.is_empty() {
            return Err(Error::invalid("dataset schema has no attributes"));
        }
        Ok(Self {
            name: name.into(),
            schema,
            id_attribute: id_attribute.into(),
            tuples: IndexMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, record: Record) -> Result<()> {
        let id = id.into();
        if self.tuples.contains_key(&id) {
            return Err(Error::invalid(format!(
                "{}: duplicate id {id:?}",
                self.name
            )));
        }
        self.tuples.insert(id, record);
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R, name: &str, id_attribute: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let id_col = headers
            .iter()
            .position(|h| h == id_attribute)
            .ok_or_else(|| Error::Parse {
                path: name.to_string(),
                message: format!("missing id column {id_attribute:?}"),
            })?;
        let schema: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != id_col)
            .map(|(_, h)| h.clone())
            .collect();
        let mut ds = Self::new(name, schema, id_attribute)?;
        for row in rdr.records() {
            let row = row?;
            let id = row.get(id_col).unwrap_or_default().to_string();
            if id.is_empty() {
                return Err(Error::Parse {
                    path: name.to_string(),
                    message: format!("row {} has an empty id", ds.len() + 1),
                });
            }
            let mut rec = Record::new();
            for (i, h) in headers.iter().enumerate() {
                if i == id_col {
                    continue;
                }
                let v = row.get(i).unwrap_or_default();
                rec.insert(
                    h.clone(),
                    if v.trim().is_empty() {
                        None
                    } else {
                        Some(v.to_string())
                    },
                );
            }
            ds.insert(id, rec).map_err(|e| Error::Parse {
                path: name.to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Record> {
        self.tuples.get(id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.tuples.get_index_of(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Record)> {
        self.tuples.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tuples.keys().map(String::as_str)
    }

    /// Tokens of a tuple with attribute boundaries erased, in schema order.
    pub fn tokens(&self, id: &str) -> Option<Vec<String>> {
        let rec = self.tuples.get(id)?;
        Some(
            self.schema
                .iter()
                .filter_map(|a| rec.get(a).and_then(Option::as_deref))
                .flat_map(tokenize)
                .collect(),
        )
    }

    /// One token stream per tuple, in load order.
    pub fn corpus(&self) -> Vec<Vec<String>> {
        self.ids()
            .map(|id| self.tokens(id).unwrap_or_default())
            .collect()
    }

    /// CSV with the id column first, then the schema; nulls are empty.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(std::iter::once(&self.id_attribute).chain(&self.schema))?;
        for (id, rec) in self.iter() {
            let values = self
                .schema
                .iter()
                .map(|a| rec.get(a).cloned().flatten().unwrap_or_default());
            wtr.write_record(std::iter::once(id.to_string()).chain(values))?;
        }
        wtr.flush().map_err(|e| Error::io(&self.name, e))?;
        Ok(())
    }
}

pub fn save_dataset(ds: &DatasetHandle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    ds.write_to(f)
}

pub fn load_dataset(path: impl AsRef<Path>, id_attribute: &str) -> Result<DatasetHandle> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    DatasetHandle::from_reader(file, &name, id_attribute).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub left_id: String,
    pub right_id: String,
    pub label: u8,
}

/// Ground-truth labels for tuple pairs; each pair appears once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledPairs {
    pub entries: Vec<LabeledPair>,
}

impl LabeledPairs {
    pub fn new(entries: Vec<LabeledPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.label > 1 {
                return Err(Error::invalid(format!("label {} is not 0/1", e.label)));
            }
            if !seen.insert((e.left_id.as_str(), e.right_id.as_str())) {
                return Err(Error::invalid(format!(
                    "duplicate labeled pair ({}, {})",
                    e.left_id, e.right_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_map(&self) -> std::collections::HashMap<(String, String), u8> {
        self.entries
            .iter()
            .map(|e| ((e.left_id.clone(), e.right_id.clone()), e.label))
            .collect()
    }

    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse {
                    path: source.to_string(),
                    message: format!("missing column {name:?}"),
                })
        };
        let (l, r, y) = (col("left_id")?, col("right_id")?, col("label")?);
        let mut entries = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let label = match row.get(y).map(str::trim) {
                Some("0") => 0,
                Some("1") => 1,
                other => {
                    return Err(Error::ParseLine {
                        path: source.to_string(),
                        line: i + 2,
                        message: format!("label must be 0 or 1, found {:?}", other.unwrap_or("")),
                    })
                }
            };
            entries.push(LabeledPair {
                left_id: row.get(l).unwrap_or_default().to_string(),
                right_id: row.get(r).unwrap_or_default().to_string(),
                label,
            });
        }
        Self::new(entries).map_err(|e| Error::Parse {
            path: source.to_string(),
            message: e.to_string(),
        })
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["left_id", "right_id", "label"])?;
        for e in &self.entries {
            wtr.write_record([e.left_id.as_str(), e.right_id.as_str(), &e.label.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabeledPairs> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    LabeledPairs::from_reader(file, &path.display().to_string())
}

pub fn save_labels(labels: &LabeledPairs, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    labels.write_to(file)
}
