//! Feature-based white-box model watermarking.
//!
//! A secret key expands to a ±1 projection matrix `E` (k×d). Bits are
//! extracted from a parameter slice `w` as sign(E·w) and embedded by
//! minimizing a hinge loss that pushes every projection past a margin in
//! the direction of its target bit. All operations here are pure.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WatermarkError {
    #[error("bad dimensions: k={k}, d={d}")]
    BadDimensions { k: usize, d: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("embedding did not reach full detection within {0} steps")]
    EmbeddingFailed(usize),
}

/// Secret projection key. `matrix` is row-major k×d with entries in
/// {+1, −1}, a pure function of (key_seed, k, d): entry (i, j) is drawn
/// from the low bit of successive ChaCha20 words, generator seeded with
/// key_seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatermarkKey {
    pub key_seed: u64,
    pub k: usize,
    pub d: usize,
    matrix: Vec<i8>,
}

impl WatermarkKey {
    pub fn derive(key_seed: u64, k: usize, d: usize) -> Result<Self, WatermarkError> {
        if k == 0 || k > d {
            return Err(WatermarkError::BadDimensions { k, d });
        }
        let mut rng = ChaCha20Rng::seed_from_u64(key_seed);
        let matrix = (0..k * d)
            .map(|_| if rng.next_u32() & 1 == 1 { 1i8 } else { -1i8 })
            .collect();
        Ok(WatermarkKey { key_seed, k, d, matrix })
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.matrix[i * self.d..(i + 1) * self.d]
    }

    /// E·w for a d-length slice.
    pub fn project(&self, slice: &[f64]) -> Result<Vec<f64>, WatermarkError> {
        if slice.len() != self.d {
            return Err(WatermarkError::LengthMismatch { expected: self.d, got: slice.len() });
        }
        Ok((0..self.k)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(slice)
                    .map(|(&e, &w)| e as f64 * w)
                    .sum()
            })
            .collect())
    }
}

/// sign(E·w) per bit, with sign(0) = +1 so extraction is total.
pub fn extract(slice: &[f64], key: &WatermarkKey) -> Result<Vec<i8>, WatermarkError> {
    let proj = key.project(slice)?;
    Ok(proj.iter().map(|&p| if p >= 0.0 { 1 } else { -1 }).collect())
}

/// Hinge embedding loss and its gradient with respect to the slice:
/// loss = Σ_i max(0, γ − b_i (E·w)_i). A term exactly at the kink is
/// treated as inactive.
pub fn regularizer(
    slice: &[f64],
    key: &WatermarkKey,
    target: &[i8],
    margin: f64,
) -> Result<(f64, Vec<f64>), WatermarkError> {
    if target.len() != key.k {
        return Err(WatermarkError::LengthMismatch { expected: key.k, got: target.len() });
    }
    let proj = key.project(slice)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; key.d];
    for i in 0..key.k {
        let b = target[i] as f64;
        let slack = margin - b * proj[i];
        if slack > 0.0 {
            loss += slack;
            for (g, &e) in grad.iter_mut().zip(key.row(i)) {
                *g -= b * e as f64;
            }
        }
    }
    Ok((loss, grad))
}

/// Fraction of positions where the two bit vectors agree.
pub fn detection_rate(extracted: &[i8], target: &[i8]) -> Result<f64, WatermarkError> {
    if extracted.len() != target.len() {
        return Err(WatermarkError::LengthMismatch {
            expected: target.len(),
            got: extracted.len(),
        });
    }
    let matches = extracted.iter().zip(target).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / target.len() as f64)
}

/// SHA-256 over the canonical bit encoding (0x01 per +1 bit, 0x00 per −1)
/// followed by the big-endian key seed. Must agree bit-for-bit with the
/// on-chain verification rule.
pub fn commitment(bits: &[i8], key_seed: u64) -> [u8; 32] {
    let mut buf = Vec::with_capacity(bits.len() + 8);
    for &b in bits {
        buf.push(if b > 0 { 0x01 } else { 0x00 });
    }
    buf.extend_from_slice(&key_seed.to_be_bytes());
    crate::codec::sha256(&buf)
}

/// Gradient-descend the hinge loss on the slice until every target bit
/// extracts correctly. Returns the embedded slice and the step count.
pub fn embed(
    slice: &[f64],
    key: &WatermarkKey,
    target: &[i8],
    margin: f64,
    learning_rate: f64,
    max_steps: usize,
) -> Result<(Vec<f64>, usize), WatermarkError> {
    let mut w = slice.to_vec();
    for step in 0..=max_steps {
        let extracted = extract(&w, key)?;
        if detection_rate(&extracted, target)? == 1.0 {
            return Ok((w, step));
        }
        let (_, grad) = regularizer(&w, key, target, margin)?;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= learning_rate * gi;
        }
    }
    Err(WatermarkError::EmbeddingFailed(max_steps))
}
