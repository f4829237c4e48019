//! Square bit matrix shared by templates, estimates and binarized images.

use crate::error::{Error, Result};

/// Row-major square matrix of bits stored as 0/1 bytes.
/// Convention used project-wide: 1 = black ink, 0 = white paper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGrid {
    size: usize,
    bits: Vec<u8>,
}

impl BitGrid {
    /// All-white grid of side `size`.
    pub fn new(size: usize) -> Self {
        BitGrid {
            size,
            bits: vec![0; size * size],
        }
    }

    pub fn from_bits(size: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != size * size {
            return Err(Error::Dimension(format!(
                "expected {}x{}={} bits, got {}",
                size,
                size,
                size * size,
                bits.len()
            )));
        }
        if let Some(v) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Parameter(format!(
                "bit values must be 0 or 1, found {v}"
            )));
        }
        Ok(BitGrid { size, bits })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.bits[row * self.size + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits[row * self.size + col] = bit;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Fraction of black symbols.
    pub fn ones_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count_ones() as f64 / self.bits.len() as f64
    }

    /// Elementwise complement.
    pub fn complement(&self) -> BitGrid {
        BitGrid {
            size: self.size,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    /// Number of positions where the two grids differ.
    pub fn hamming(&self, other: &BitGrid) -> Result<usize> {
        if self.size != other.size {
            return Err(Error::Dimension(format!(
                "bit grids of size {} and {} cannot be compared",
                self.size, other.size
            )));
        }
        Ok(self
            .bits
            .iter()
            .zip(other.bits.iter())
            .filter(|(a, b)| a != b)
            .count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_bits_validates() {
        assert!(BitGrid::from_bits(2, vec![0, 1, 1, 0]).is_ok());
        assert!(BitGrid::from_bits(2, vec![0, 1, 1]).is_err());
        assert!(BitGrid::from_bits(2, vec![0, 1, 2, 0]).is_err());
    }

    #[test]
    fn hamming_and_complement() {
        let g = BitGrid::from_bits(2, vec![0, 1, 1, 0]).unwrap();
        assert_eq!(g.hamming(&g).unwrap(), 0);
        assert_eq!(g.hamming(&g.complement()).unwrap(), 4);
        assert_eq!(g.count_ones(), 2);
        assert!((g.ones_fraction() - 0.5).abs() < 1e-12);
    }
}
