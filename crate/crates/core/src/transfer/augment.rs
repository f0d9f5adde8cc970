//! Block feature maps for source, target and unlabeled target vectors.
//!
//! With `n` sources an augmented vector has `n + 2` blocks of width `d`:
//! block 0 is shared, blocks `1..=n` belong to the sources and block `n + 1`
//! to the target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn blank<F: Scalar>(d: usize, n: usize) -> Vec<F> {
    vec![F::zero(); (n + 2) * d]
}

fn put<F: Scalar>(out: &mut [F], block: usize, x: &[F], negate: bool) {
    let d = x.len();
    for (o, &v) in out[block * d..(block + 1) * d].iter_mut().zip(x) {
        *o = if negate { -v } else { v };
    }
}

/// Block 0 and block `i` hold `x`.
pub fn phi_source<F: Scalar>(x: &[F], i: usize, n: usize) -> Result<Vec<F>> {
    if i == 0 || i > n {
        return Err(Error::invalid(format!(
            "source index {i} outside 1..={n}"
        )));
    }
    let mut out = blank(x.len(), n);
    put(&mut out, 0, x, false);
    put(&mut out, i, x, false);
    Ok(out)
}

/// Block 0 and block `n + 1` hold `x`.
pub fn phi_target<F: Scalar>(x: &[F], n: usize) -> Vec<F> {
    let mut out = blank(x.len(), n);
    put(&mut out, 0, x, false);
    put(&mut out, n + 1, x, false);
    out
}

/// Block `n` holds `x` and block `n + 1` holds `-x`.
pub fn phi_unlabeled<F: Scalar>(x: &[F], n: usize) -> Vec<F> {
    let mut out = blank(x.len(), n);
    put(&mut out, n, x, false);
    put(&mut out, n + 1, x, true);
    out
}

/// Block `block` of an augmented vector with block width `d`.
pub fn extract_block<F>(v: &[F], block: usize, d: usize) -> Result<&[F]> {
    if d == 0 || v.len() % d != 0 || (block + 1) * d > v.len() {
        return Err(Error::invalid(format!(
            "block {block} of width {d} not present in a vector of length {}",
            v.len()
        )));
    }
    Ok(&v[block * d..(block + 1) * d])
}

/// How raw similarity vectors become model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    Plain {
        dim: usize,
    },
    /// Block augmentation over `sources` sources. With `bias` a constant 1
    /// is appended to `x` first, giving each block its own offset.
    Augmented {
        dim: usize,
        sources: usize,
        bias: bool,
    },
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match *self {
            FeatureMap::Plain { dim } | FeatureMap::Augmented { dim, .. } => dim,
        }
    }

    pub fn model_dim(&self) -> usize {
        match *self {
            FeatureMap::Plain { dim } => dim,
            FeatureMap::Augmented { dim, sources, bias } => (sources + 2) * (dim + usize::from(bias)),
        }
    }

    fn base<F: Scalar>(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut v = x.to_vec();
        if let FeatureMap::Augmented { bias: true, .. } = self {
            v.push(F::one());
        }
        Ok(v)
    }

    fn sources(&self) -> Result<usize> {
        match *self {
            FeatureMap::Augmented { sources, .. } => Ok(sources),
            FeatureMap::Plain { .. } => Err(Error::invalid("plain feature map has no blocks")),
        }
    }

    /// Model input for a labeled pair from source `i` (1-based).
    pub fn source<F: Scalar>(&self, x: &[F], i: usize) -> Result<Vec<F>> {
        match self {
            FeatureMap::Plain { .. } => self.base(x),
            FeatureMap::Augmented { .. } => phi_source(&self.base(x)?, i, self.sources()?),
        }
    }

    /// Model input for a target pair; used for training and prediction.
    pub fn target<F: Scalar>(&self, x: &[F]) -> Result<Vec<F>> {
        match self {
            FeatureMap::Plain { .. } => self.base(x),
            FeatureMap::Augmented { .. } => Ok(phi_target(&self.base(x)?, self.sources()?)),
        }
    }

    pub fn unlabeled<F: Scalar>(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(phi_unlabeled(&self.base(x)?, self.sources()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::dot;

    #[test]
    fn worked_examples() {
        let x = [0.1, 0.9];
        assert_eq!(phi_source(&x, 1, 1).unwrap(), vec![0.1, 0.9, 0.1, 0.9, 0.0, 0.0]);
        assert_eq!(phi_target(&x, 1), vec![0.1, 0.9, 0.0, 0.0, 0.1, 0.9]);
        assert_eq!(phi_unlabeled(&x, 1), vec![0.0, 0.0, 0.1, 0.9, -0.1, -0.9]);
    }

    #[test]
    fn second_of_three_sources() {
        let x = [1.0, 2.0];
        let v = phi_source(&x, 2, 3).unwrap();
        let z = [0.0, 0.0];
        for (b, want) in [x, z, x, z, z].iter().enumerate() {
            assert_eq!(extract_block(&v, b, 2).unwrap(), want);
        }
        assert!(phi_source(&x, 0, 3).is_err());
        assert!(phi_source(&x, 4, 3).is_err());
    }

    #[test]
    fn unlabeled_cross_products() {
        let x = [0.3_f64, -0.2, 0.5];
        let y = [0.7, 0.1, -0.4];
        let u = phi_unlabeled(&x, 1);
        let xy = dot(&x, &y);
        assert!((dot(&u, &phi_target(&y, 1)) + xy).abs() < 1e-15);
        assert!((dot(&u, &phi_source(&y, 1, 1).unwrap()) - xy).abs() < 1e-15);
    }

    #[test]
    fn bias_map_dimensions() {
        let m = FeatureMap::Augmented {
            dim: 3,
            sources: 2,
            bias: true,
        };
        assert_eq!(m.model_dim(), 16);
        let t = m.target(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.len(), 16);
        assert_eq!(extract_block(&t, 3, 4).unwrap(), &[1.0, 2.0, 3.0, 1.0]);
        assert!(m.target(&[1.0]).is_err());
        let plain = FeatureMap::Plain { dim: 2 };
        assert_eq!(plain.source(&[1.0, 2.0], 1).unwrap(), vec![1.0, 2.0]);
        assert!(plain.unlabeled(&[1.0, 2.0]).is_err());
    }
}
