use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::dataset_io::LabeledPairs;
use crate::error::{Error, Result};

/// Source of ground-truth labels for sampled pairs.
pub trait LabelOracle {
    fn label(&mut self, left_id: &str, right_id: &str) -> Result<u8>;

    /// Number of distinct pairs asked about so far.
    fn query_count(&self) -> usize;
}

/// Answers from a labeled file.
#[derive(Debug, Clone)]
pub struct FileOracle {
    labels: HashMap<(String, String), u8>,
    asked: HashSet<(String, String)>,
}

impl FileOracle {
    pub fn new(labels: &LabeledPairs) -> Self {
        Self {
            labels: labels.to_map(),
            asked: HashSet::new(),
        }
    }
}

impl LabelOracle for FileOracle {
    fn label(&mut self, left_id: &str, right_id: &str) -> Result<u8> {
        let key = (left_id.to_string(), right_id.to_string());
        let label = *self
            .labels
            .get(&key)
            .ok_or_else(|| Error::invalid(format!("oracle has no label for ({left_id}, {right_id})")))?;
        self.asked.insert(key);
        Ok(label)
    }

    fn query_count(&self) -> usize {
        self.asked.len()
    }
}

/// Asks a person on a line-oriented stream; answers are cached.
pub struct PromptOracle<R, W> {
    input: R,
    output: W,
    answers: HashMap<(String, String), u8>,
}

impl<R: BufRead, W: Write> PromptOracle<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self {
            input,
            output,
            answers: HashMap::new(),
        }
    }
}

impl<R: BufRead, W: Write> LabelOracle for PromptOracle<R, W> {
    fn label(&mut self, left_id: &str, right_id: &str) -> Result<u8> {
        let key = (left_id.to_string(), right_id.to_string());
        if let Some(&l) = self.answers.get(&key) {
            return Ok(l);
        }
        let io = |e| Error::io("<prompt>", e);
        loop {
            write!(self.output, "duplicate? {left_id} {right_id} [0/1]: ").map_err(io)?;
            self.output.flush().map_err(io)?;
            let mut line = String::new();
            if self.input.read_line(&mut line).map_err(io)? == 0 {
                return Err(Error::invalid("label input closed"));
            }
            match line.trim() {
                "0" | "1" => {
                    let l = u8::from(line.trim() == "1");
                    self.answers.insert(key, l);
                    return Ok(l);
                }
                _ => writeln!(self.output, "please answer 0 or 1").map_err(io)?,
            }
        }
    }

    fn query_count(&self) -> usize {
        self.answers.len()
    }
}
