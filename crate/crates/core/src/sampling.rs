//! Reproducible Gaussian increments from counter-based streams.
//!
//! Every recursion frame of an estimator owns a [`StreamKey`]: the root seed
//! plus the list of `(level, replica, slot)` entries that lead to it. The key
//! is absorbed into a 256-bit ChaCha key, so a stream depends only on its
//! path and never on the order in which frames are scheduled.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Maximum number of frames a key path may hold.
pub const MAX_PATH_DEPTH: usize = 32;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a 64-bit seed with an index; used to derive per-replication seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(GOLDEN)).rotate_left(17))
}

/// One recursion frame in a stream path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathEntry {
    pub level: u32,
    pub replica: u64,
    pub slot: u32,
}

/// Identifies an independent random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    seed: u64,
    path: Vec<PathEntry>,
    digest: [u64; 4],
}

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        let mut digest = [0u64; 4];
        for (k, lane) in digest.iter_mut().enumerate() {
            *lane = mix64(seed ^ mix64(GOLDEN.wrapping_mul(k as u64 + 1)));
        }
        StreamKey {
            seed,
            path: Vec::new(),
            digest,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &[PathEntry] {
        &self.path
    }

    /// Appends `(level, replica, slot)` to the path.
    ///
    /// Panics if the path already holds [`MAX_PATH_DEPTH`] entries.
    pub fn child(&self, level: u32, replica: u64, slot: u32) -> StreamKey {
        assert!(
            self.path.len() < MAX_PATH_DEPTH,
            "stream path deeper than {MAX_PATH_DEPTH} frames"
        );
        let mut path = Vec::with_capacity(self.path.len() + 1);
        path.extend_from_slice(&self.path);
        path.push(PathEntry {
            level,
            replica,
            slot,
        });
        let words = [
            u64::from(level) | (u64::from(slot) << 32),
            replica,
            path.len() as u64,
        ];
        let mut digest = self.digest;
        for (k, lane) in digest.iter_mut().enumerate() {
            let salt = GOLDEN.wrapping_mul(2 * k as u64 + 1);
            let mut h = *lane;
            for &w in &words {
                h = mix64(h ^ mix64(w.wrapping_add(salt)));
            }
            *lane = h;
        }
        StreamKey {
            seed: self.seed,
            path,
            digest,
        }
    }

    fn chacha_seed(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (chunk, lane) in out.chunks_exact_mut(8).zip(self.digest) {
            chunk.copy_from_slice(&lane.to_le_bytes());
        }
        out
    }
}

/// Free-function form of [`StreamKey::child`].
pub fn child_key(key: &StreamKey, level: u32, replica: u64, slot: u32) -> StreamKey {
    key.child(level, replica, slot)
}

/// A `d`-dimensional Brownian increment over a time step `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianIncrement {
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Sequential standard-normal draws from one keyed stream.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    draws: u64,
}

impl GaussianStream {
    pub fn new(key: &StreamKey) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::from_seed(key.chacha_seed()),
            draws: 0,
        }
    }

    /// Number of scalar normals drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    fn open_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1); not counted as a normal draw.
    pub fn uniform(&mut self) -> f64 {
        self.open_uniform()
    }

    /// One standard normal via the inverse CDF.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        let u = self.open_uniform();
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
    }

    /// Overwrites `out` with i.i.d. `N(0, dt)` values. `dt` must be positive.
    #[inline]
    pub fn fill_increment(&mut self, dt: f64, out: &mut [f64]) {
        debug_assert!(dt > 0.0);
        let scale = dt.sqrt();
        for v in out.iter_mut() {
            *v = scale * self.standard_normal();
        }
    }

    pub fn increment(&mut self, dim: usize, dt: f64) -> Result<GaussianIncrement> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidVariance(dt));
        }
        if dim == 0 {
            return Err(Error::InvalidDimension(dim));
        }
        let mut values = vec![0.0; dim];
        self.fill_increment(dt, &mut values);
        Ok(GaussianIncrement { dt, values })
    }
}

/// The first increment of the stream identified by `key`.
pub fn draw_increment(key: &StreamKey, dim: usize, dt: f64) -> Result<GaussianIncrement> {
    GaussianStream::new(key).increment(dim, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let mut sab = 0.0;
        let mut saa = 0.0;
        let mut sbb = 0.0;
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma) * (x - ma);
            sbb += (y - mb) * (y - mb);
        }
        sab / (saa * sbb).sqrt()
    }

    fn first_draws(key: &StreamKey, n: usize) -> Vec<f64> {
        let mut s = GaussianStream::new(key);
        (0..n).map(|_| s.standard_normal()).collect()
    }

    #[test]
    fn same_key_same_samples() {
        let k = StreamKey::root(7).child(3, 11, 2);
        let a = draw_increment(&k, 5, 0.3).unwrap();
        let b = draw_increment(&k, 5, 0.3).unwrap();
        assert_eq!(a, b);
        let mut s1 = GaussianStream::new(&k);
        let mut s2 = GaussianStream::new(&k);
        for _ in 0..10 {
            assert_eq!(s1.increment(3, 1.0).unwrap(), s2.increment(3, 1.0).unwrap());
        }
        assert_eq!(s1.draws(), 30);
    }

    #[test]
    fn invalid_variance_and_dimension() {
        let k = StreamKey::root(1);
        assert_eq!(draw_increment(&k, 2, 0.0), Err(Error::InvalidVariance(0.0)));
        assert_eq!(draw_increment(&k, 2, -1.0), Err(Error::InvalidVariance(-1.0)));
        assert_eq!(draw_increment(&k, 0, 1.0), Err(Error::InvalidDimension(0)));
    }

    #[test]
    fn child_keys_are_injective() {
        let k = StreamKey::root(99);
        assert_ne!(child_key(&k, 2, 5, 0), child_key(&k, 2, 5, 1));
        assert_ne!(child_key(&k, 2, 5, 0).digest, child_key(&k, 2, 5, 1).digest);
        let nested = child_key(&child_key(&k, 1, 0, 0), 2, 3, 1);
        assert_eq!(nested, child_key(&child_key(&k, 1, 0, 0), 2, 3, 1));
        assert_eq!(nested.path().len(), 2);
        for level in 0..4 {
            for replica in 0..50 {
                for slot in 0..4 {
                    assert_ne!(nested.digest, k.child(level, replica, slot).digest);
                }
            }
        }
        assert_ne!(StreamKey::root(1).digest, StreamKey::root(2).digest);
    }

    #[test]
    fn moments_of_unit_variance_draws() {
        let mut s = GaussianStream::new(&StreamKey::root(2024));
        let n = 1_000_000;
        let mut buf = [0.0; 4];
        let mut sums = [0.0; 4];
        for _ in 0..n / 4 {
            s.fill_increment(1.0, &mut buf);
            for (acc, v) in sums.iter_mut().zip(buf) {
                *acc += v;
            }
        }
        for acc in sums {
            // 4 / sqrt(n / 4) per component
            assert!((acc / (n / 4) as f64).abs() < 0.008);
        }
        let all = first_draws(&StreamKey::root(5), n);
        let mean = all.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.004, "mean {mean}");
    }

    #[test]
    fn variance_of_quarter_step() {
        let mut s = GaussianStream::new(&StreamKey::root(31).child(0, 0, 0));
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut buf = [0.0; 1];
        for _ in 0..n {
            s.fill_increment(0.25, &mut buf);
            sum += buf[0];
            sq += buf[0] * buf[0];
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((var - 0.25).abs() < 0.002, "var {var}");
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let root = StreamKey::root(17);
        let streams: Vec<Vec<f64>> = (1..=1000)
            .map(|i| first_draws(&child_key(&root, 1, i, 0), 10_000))
            .collect();
        let mut worst: f64 = 0.0;
        for w in streams.windows(2) {
            worst = worst.max(correlation(&w[0], &w[1]).abs());
        }
        // A deterministic scatter of non-adjacent pairs.
        for p in 0..2000usize {
            let i = (p * 7919) % 1000;
            let j = (p * 104_729 + 13) % 1000;
            if i != j {
                worst = worst.max(correlation(&streams[i], &streams[j]).abs());
            }
        }
        assert!(worst < 0.05, "max |corr| = {worst}");
    }

    #[test]
    fn sign_patterns_independent() {
        // 2x2 contingency table of signs for pairs of streams; chi-squared with
        // one degree of freedom, 99.99% quantile 15.14.
        let root = StreamKey::root(8);
        for i in 0..50u64 {
            let a = first_draws(&root.child(2, i, 0), 20_000);
            let b = first_draws(&root.child(2, i, 1), 20_000);
            let mut table = [[0.0f64; 2]; 2];
            for (x, y) in a.iter().zip(&b) {
                table[usize::from(*x > 0.0)][usize::from(*y > 0.0)] += 1.0;
            }
            let n = a.len() as f64;
            let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
            let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
            let mut chi2 = 0.0;
            for r in 0..2 {
                for c in 0..2 {
                    let e = rows[r] * cols[c] / n;
                    chi2 += (table[r][c] - e).powi(2) / e;
                }
            }
            assert!(chi2 < 15.14, "pair {i}: chi2 = {chi2}");
        }
    }

    #[test]
    #[should_panic(expected = "stream path deeper")]
    fn depth_cap_enforced() {
        let mut k = StreamKey::root(0);
        for i in 0..=MAX_PATH_DEPTH {
            k = k.child(i as u32, 0, 0);
        }
    }
}
