//! Named, independently seeded random substreams.
//!
//! Every stream is keyed by `(master_seed, label)`. Adding a node or a new
//! consumer creates a new label and leaves every other stream's sequence
//! untouched, which is what makes step-1/step-2 pairing work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub struct RngStream {
    label: String,
    rng: ChaCha12Rng,
}

/// Derives a 32-byte seed from the master seed and a label.
pub fn derive_seed(master_seed: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    seed
}

/// Derives a child master seed, e.g. one per replication.
pub fn derive_u64(master_seed: u64, label: &str) -> u64 {
    let seed = derive_seed(master_seed, label);
    u64::from_le_bytes(seed[..8].try_into().expect("8 bytes"))
}

impl RngStream {
    pub fn new(master_seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let rng = ChaCha12Rng::from_seed(derive_seed(master_seed, &label));
        Self { label, rng }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        Ok(self.rng.random_range(lo..=hi))
    }

    /// Uniform integer in `[0, hi]`.
    pub fn uniform_u32(&mut self, hi: u32) -> u32 {
        self.rng.random_range(0..=hi)
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return lo;
        }
        self.rng.random_range(lo..hi)
    }

    /// Exponential draw with the given rate (events per unit).
    pub fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate)
            .expect("positive rate")
            .sample(&mut self.rng)
    }

    /// Normal draw; `sigma == 0` returns the mean exactly.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return mean;
        }
        Normal::new(mean, sigma)
            .expect("finite sigma")
            .sample(&mut self.rng)
    }
}

/// Free-function form of [`RngStream::uniform_int`].
pub fn uniform_int(stream: &mut RngStream, lo: i64, hi: i64) -> Result<i64> {
    stream.uniform_int(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_range() {
        let mut s = RngStream::new(1, "x");
        for _ in 0..10 {
            assert_eq!(s.uniform_int(5, 5).unwrap(), 5);
        }
    }

    #[test]
    fn inverted_range_rejected() {
        let mut s = RngStream::new(1, "x");
        assert!(matches!(
            s.uniform_int(3, 2),
            Err(Error::InvalidRange { lo: 3, hi: 2 })
        ));
    }

    #[test]
    fn same_seed_and_label_reproduce() {
        let mut a = RngStream::new(42, "laa.backoff.node3");
        let mut b = RngStream::new(42, "laa.backoff.node3");
        let xs: Vec<i64> = (0..1000).map(|_| a.uniform_int(0, 1023).unwrap()).collect();
        let ys: Vec<i64> = (0..1000).map(|_| b.uniform_int(0, 1023).unwrap()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn labels_are_independent() {
        let mut a = RngStream::new(42, "laa.backoff.node3");
        let mut b = RngStream::new(42, "laa.backoff.node4");
        let xs: Vec<i64> = (0..64).map(|_| a.uniform_int(0, 1 << 30).unwrap()).collect();
        let ys: Vec<i64> = (0..64).map(|_| b.uniform_int(0, 1 << 30).unwrap()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn platform_stable_first_draws() {
        // frozen from a reference run; guards against silent generator changes
        let mut s = RngStream::new(7, "golden");
        let got: Vec<i64> = (0..4).map(|_| s.uniform_int(0, 1_000_000).unwrap()).collect();
        assert_eq!(got, vec![499534, 407173, 765937, 105315]);
        assert_eq!(derive_u64(7, "golden"), 17469803456978464385);
        assert_ne!(derive_u64(0, "a"), derive_u64(1, "a"));
    }

    #[test]
    fn sixteen_bins_are_uniform_within_five_sigma() {
        let n = 1_000_000u64;
        let mut counts = [0u64; 16];
        let mut s = RngStream::new(2024, "uniformity");
        for _ in 0..n {
            counts[s.uniform_int(0, 15).unwrap() as usize] += 1;
        }
        let p = 1.0 / 16.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "bin {c} vs {mean}");
            chi2 += (c as f64 - mean).powi(2) / mean;
        }
        // 15 dof; 99.99th percentile is about 44.3
        assert!(chi2 < 44.3, "chi2 {chi2}");
    }
}
