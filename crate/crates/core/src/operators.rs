//! Metrological generators: diagonal `½ Σ_j w_j Z_j` operators and the
//! staggered transverse field `O_X = ½ Σ_j (-1)^j X_j`.
//!
//! `Z_j |n_j> = (1 - 2 n_j) |n_j>`, so an occupied site contributes `-w_j/2`.

use crate::error::{Error, Result};
use crate::model::{BitIter, Configuration, OperatorKind, OperatorSpec};

/// `(-1)^j` for 1-indexed `j`.
#[inline]
pub fn stagger(j: usize) -> f64 {
    if j.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Segment signs of the three-block operator: `+1` on the outer quarters,
/// `-1` on the central half (floor boundaries at `L/4` and `3L/4`).
pub fn eta(len: usize) -> Vec<f64> {
    let lo = len / 4;
    let hi = 3 * len / 4;
    (1..=len).map(|j| if j <= lo || j > hi { 1.0 } else { -1.0 }).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator {
    weights: Vec<f64>,
    half_total: f64,
}

impl DiagonalOperator {
    pub fn new(weights: Vec<f64>) -> Self {
        let half_total = 0.5 * weights.iter().sum::<f64>();
        Self { weights, half_total }
    }

    pub fn staggered(len: usize) -> Self {
        Self::new((1..=len).map(stagger).collect())
    }

    pub fn star(len: usize) -> Self {
        Self::new(eta(len))
    }

    /// Builds the diagonal operator for `spec`; `O_X` is rejected.
    pub fn from_spec(spec: &OperatorSpec, len: usize) -> Result<Self> {
        spec.validate(len)?;
        match spec.kind {
            OperatorKind::OZ => Ok(Self::staggered(len)),
            OperatorKind::OStar => Ok(Self::star(len)),
            OperatorKind::CustomDiagonal => Ok(Self::new(spec.coefficients.clone().unwrap_or_default())),
            OperatorKind::OX => Err(Error::NotDiagonal),
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `O(n)` from raw bits.
    #[inline]
    pub fn value_bits(&self, bits: u64) -> f64 {
        let occ: f64 = BitIter(bits).map(|j| self.weights[j - 1]).sum();
        self.half_total - occ
    }

    /// `Tr(O²) / 2^L = ¼ Σ_j w_j²`.
    pub fn mean_square_trace(&self) -> f64 {
        0.25 * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Multiplies every weight by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self::new(self.weights.iter().map(|w| w * lambda).collect())
    }
}

/// `½ Σ_j w_j (1 - 2 n_j)`.
pub fn diagonal_value(op: &DiagonalOperator, n: &Configuration) -> f64 {
    op.value_bits(n.bits())
}

/// `<n'| ½(-1)^j X_j |n>`.
pub fn ox_single_flip_element(j: usize, n: &Configuration, n_prime: &Configuration) -> f64 {
    if n.len() != n_prime.len() || j == 0 || j > n.len() {
        return 0.0;
    }
    if n.flip(j) == *n_prime {
        0.5 * stagger(j)
    } else {
        0.0
    }
}

/// `<m| O_X |n>` for arbitrary configurations (single flips only).
pub fn ox_element(n: &Configuration, m: &Configuration) -> f64 {
    let diff = n.bits() ^ m.bits();
    if diff.count_ones() == 1 {
        0.5 * stagger(diff.trailing_zeros() as usize + 1)
    } else {
        0.0
    }
}

/// `<m| O_X² |n>` over the full space: `L/4` on the diagonal, and
/// `½ (-1)^{j+l}` for a double flip at sites `j ≠ l`.
pub fn ox_squared_element(n: &Configuration, m: &Configuration) -> f64 {
    let diff = n.bits() ^ m.bits();
    match diff.count_ones() {
        0 => 0.25 * n.len() as f64,
        2 => {
            let j = diff.trailing_zeros() as usize + 1;
            let l = 64 - diff.leading_zeros() as usize;
            0.5 * stagger(j) * stagger(l)
        }
        _ => 0.0,
    }
}

/// Number-conserving part of `O_X²` acting on `n`, as raw bits.
///
/// Yields `(n, L/4)` first, then each hop `j ↔ l` (`j < l`, exactly one of
/// them occupied) with weight `½ (-1)^{j+l}`, in lexicographic `(j, l)`.
#[derive(Clone, Debug)]
pub struct OxPairIter {
    bits: u64,
    len: usize,
    j: usize,
    l: usize,
    started: bool,
}

impl OxPairIter {
    pub fn new(bits: u64, len: usize) -> Self {
        Self {
            bits,
            len,
            j: 1,
            l: 1,
            started: false,
        }
    }
}

impl Iterator for OxPairIter {
    /// `(target bits, weight, j, l)`; `j = l = 0` marks the diagonal term.
    type Item = (u64, f64, usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if !self.started {
            self.started = true;
            return Some((self.bits, 0.25 * self.len as f64, 0, 0));
        }
        loop {
            self.l += 1;
            if self.l > self.len {
                self.j += 1;
                self.l = self.j + 1;
                if self.l > self.len {
                    return None;
                }
            }
            let (j, l) = (self.j, self.l);
            let oj = (self.bits >> (j - 1)) & 1;
            let ol = (self.bits >> (l - 1)) & 1;
            if oj != ol {
                let target = self.bits ^ (1u64 << (j - 1)) ^ (1u64 << (l - 1));
                let w = if (j + l) % 2 == 0 { 0.5 } else { -0.5 };
                return Some((target, w, j, l));
            }
        }
    }
}

/// Matrix elements `<target| O_X² |n>` within the particle-number sector of `n`.
pub fn ox_pair_terms(n: &Configuration, particles: usize) -> Result<impl Iterator<Item = (Configuration, f64)>> {
    if n.particle_count() != particles {
        return Err(Error::WrongSector {
            expected: particles,
            got: n.particle_count(),
        });
    }
    let len = n.len();
    Ok(OxPairIter::new(n.bits(), len).map(move |(t, w, _, _)| (Configuration::from_bits(t, len), w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sector_configurations;
    use std::collections::HashMap;

    #[test]
    fn diagonal_examples() {
        let oz = DiagonalOperator::staggered(4);
        assert_eq!(diagonal_value(&oz, &Configuration::neel(4, true)), 2.0);
        assert_eq!(diagonal_value(&oz, &Configuration::neel(4, false)), -2.0);
        let star = DiagonalOperator::star(8);
        assert_eq!(star.weights(), &[1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0]);
        let block = Configuration::from_sites(8, &[3, 4, 5, 6]);
        assert_eq!(diagonal_value(&star, &block), 4.0);
        assert_eq!(
            DiagonalOperator::from_spec(&OperatorSpec::ox(), 8),
            Err(Error::NotDiagonal)
        );
    }

    #[test]
    fn single_flip_examples() {
        let n = Configuration::from_occupations(&[1, 0]);
        let m = Configuration::from_occupations(&[0, 0]);
        assert_eq!(ox_single_flip_element(1, &n, &m), -0.5);
        assert_eq!(ox_single_flip_element(1, &n, &n), 0.0);
        let far = Configuration::from_occupations(&[0, 1]);
        assert_eq!(ox_single_flip_element(1, &n, &far), 0.0);
        assert_eq!(ox_single_flip_element(2, &n, &far), 0.0);
    }

    #[test]
    fn pair_terms_two_sites() {
        let n = Configuration::from_occupations(&[1, 0]);
        let terms: Vec<_> = ox_pair_terms(&n, 1).unwrap().collect();
        assert_eq!(terms, vec![(n, 0.5), (Configuration::from_occupations(&[0, 1]), -0.5)]);
        assert!(ox_pair_terms(&n, 2).is_err());
    }

    #[test]
    fn pair_terms_count() {
        let n = Configuration::neel(10, true);
        assert_eq!(ox_pair_terms(&n, 5).unwrap().count(), 1 + 25);
    }

    /// Dense `O_X` squared over the full space, restricted to the sector.
    #[test]
    fn pair_terms_match_dense_square() {
        for len in [2usize, 4, 6, 8] {
            let dim = 1usize << len;
            let mut ox = vec![0.0; dim * dim];
            for b in 0..dim {
                for j in 1..=len {
                    let t = b ^ (1 << (j - 1));
                    ox[t * dim + b] += 0.5 * stagger(j);
                }
            }
            let sector = sector_configurations(len, len / 2);
            let mut from_iter = HashMap::new();
            for n in &sector {
                for (t, w) in ox_pair_terms(n, len / 2).unwrap() {
                    *from_iter.entry((t.bits(), n.bits())).or_insert(0.0) += w;
                }
            }
            for m in &sector {
                for n in &sector {
                    let (mi, ni) = (m.bits() as usize, n.bits() as usize);
                    let dense: f64 = (0..dim).map(|k| ox[mi * dim + k] * ox[k * dim + ni]).sum();
                    let got = from_iter.get(&(m.bits(), n.bits())).copied().unwrap_or(0.0);
                    assert!((dense - got).abs() < 1e-14, "L={len} {m} {n}");
                    assert!((ox_squared_element(n, m) - dense).abs() < 1e-14);
                    let back = from_iter.get(&(n.bits(), m.bits())).copied().unwrap_or(0.0);
                    assert_eq!(got, back);
                }
            }
        }
    }

    #[test]
    fn traceless_weights_sum_to_zero() {
        for len in [4usize, 8, 12] {
            for op in [DiagonalOperator::staggered(len), DiagonalOperator::star(len)] {
                let total: f64 = sector_configurations(len, len / 2)
                    .iter()
                    .map(|c| diagonal_value(&op, c))
                    .sum();
                assert!(total.abs() < 1e-9, "L={len}");
            }
        }
    }
}
