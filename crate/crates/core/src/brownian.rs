//! Brownian increment grids on the dyadic ladder `delta_l = T / 2^l`.
//!
//! A path is built top-down by midpoint bridge refinement: level 0 holds
//! `W_T`, and every level splits each increment into two children using one
//! fresh normal. The normal used for node `p` of level `l` (for coordinate
//! `d`) is draw number `(2^(l-1) + p) * dims + d` of the `(seed, path_index)`
//! stream, independent of the finest level requested. Hence
//!
//! * any slot can be regenerated bit-for-bit from `(seed, path_index, level, slot)`;
//! * `sample_path(.., L + 1)` equals `sample_path(.., L).refine()` exactly.
//!
//! Coarse increments used by the schemes are exact left-to-right sums of the
//! fine children, so a coarse and a fine Euler scheme see the same path.

use crate::error::{Error, Result};
use crate::rng::{CounterStream, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPathGrid {
    pub horizon: f64,
    pub finest_level: u32,
    pub dims: usize,
    pub seed: u64,
    pub path_index: u64,
    /// Row-major `2^L x dims` increments of variance `T / 2^L`.
    increments: Vec<f64>,
}

/// Hard cap on the finest level (the fine grid is stored densely).
pub const MAX_LEVEL: u32 = 24;

fn slots_for(level: u32, dims: usize) -> Result<usize> {
    if level > MAX_LEVEL || level >= usize::BITS - 1 {
        return Err(Error::InvalidParameter(format!("level {level} exceeds the supported maximum {MAX_LEVEL}")));
    }
    (1usize << level).checked_mul(dims).ok_or_else(|| Error::InvalidParameter(format!("2^{level} x {dims} increments overflow")))
}

/// Index of the normal driving node `p` of `level` (level 0 is `W_T`).
#[inline]
fn node_index(level: u32, p: usize) -> usize {
    if level == 0 {
        0
    } else {
        (1usize << (level - 1)) + p
    }
}

/// Generate the path of `path_index` under `seed` down to level `finest_level`.
pub fn sample_path(seed: u64, path_index: u64, horizon: f64, finest_level: u32, dims: usize) -> Result<BrownianPathGrid> {
    if !(horizon > 0.0) || dims == 0 {
        return Err(Error::InvalidParameter(format!("need T > 0 and dims >= 1 (T = {horizon}, dims = {dims})")));
    }
    let total = slots_for(finest_level, dims)?;
    let mut stream = CounterStream::new(seed, Purpose::Brownian, path_index);
    let mut normals = vec![0.0; total];
    stream.fill_normal(&mut normals);
    let mut increments = vec![0.0; total];
    let root = horizon.sqrt();
    for d in 0..dims {
        increments[d] = root * normals[d];
    }
    refine_in_place(&mut increments, &normals, 0, finest_level, dims, horizon, 0);
    Ok(BrownianPathGrid { horizon, finest_level, dims, seed, path_index, increments })
}

/// Split levels `from + 1 ..= to` in place. `normals[i - offset]` must hold
/// draw number `i` of the stream.
fn refine_in_place(a: &mut [f64], normals: &[f64], from: u32, to: u32, dims: usize, horizon: f64, offset: usize) {
    for level in from + 1..=to {
        let parents = 1usize << (level - 1);
        let parent_step = horizon / parents as f64;
        let spread = (0.25 * parent_step).sqrt();
        for p in (0..parents).rev() {
            let z_base = node_index(level, p) * dims - offset;
            for d in 0..dims {
                let delta = a[p * dims + d];
                let left = 0.5 * delta + spread * normals[z_base + d];
                a[2 * p * dims + d] = left;
                a[(2 * p + 1) * dims + d] = delta - left;
            }
        }
    }
}

impl BrownianPathGrid {
    /// Fine step `T / 2^L`.
    pub fn step(&self) -> f64 {
        self.horizon / (1u64 << self.finest_level) as f64
    }

    /// Number of fine increments, `2^L`.
    pub fn len(&self) -> usize {
        1usize << self.finest_level
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Increment `k` (all coordinates).
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dims..(k + 1) * self.dims]
    }

    /// Increments at step `T / 2^level`; each is the left-to-right sum of its
    /// `2^(L - level)` fine children.
    pub fn coarsen(&self, level: u32) -> Result<Vec<f64>> {
        if level > self.finest_level {
            return Err(Error::InvalidParameter(format!("coarsening level {level} exceeds finest level {}", self.finest_level)));
        }
        let ratio = 1usize << (self.finest_level - level);
        let n = 1usize << level;
        let mut out = vec![0.0; n * self.dims];
        for j in 0..n {
            for k in j * ratio..(j + 1) * ratio {
                for d in 0..self.dims {
                    out[j * self.dims + d] += self.increments[k * self.dims + d];
                }
            }
        }
        Ok(out)
    }

    /// `W(k * delta_L)`: left-to-right cumulative sum of the first `k` increments.
    pub fn value_at(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.len() {
            return Err(Error::InvalidParameter(format!("fine index {k} beyond 2^L = {}", self.len())));
        }
        let mut w = vec![0.0; self.dims];
        for inc in self.increments[..k * self.dims].chunks_exact(self.dims) {
            for (a, b) in w.iter_mut().zip(inc) {
                *a += b;
            }
        }
        Ok(w)
    }

    /// The same path refined by one dyadic level.
    pub fn refine(&self) -> Result<BrownianPathGrid> {
        let level = self.finest_level + 1;
        let total = slots_for(level, self.dims)?;
        let first = node_index(level, 0) * self.dims;
        let mut stream = CounterStream::new(self.seed, Purpose::Brownian, self.path_index);
        stream.seek(first as u64);
        let mut normals = vec![0.0; total - first];
        stream.fill_normal(&mut normals);
        let mut increments = self.increments.clone();
        increments.resize(total, 0.0);
        refine_in_place(&mut increments, &normals, self.finest_level, level, self.dims, self.horizon, first);
        Ok(BrownianPathGrid { finest_level: level, increments, ..self.clone() })
    }

    /// Negated path (same grid), used for symmetry checks.
    pub fn negated(&self) -> BrownianPathGrid {
        BrownianPathGrid { increments: self.increments.iter().map(|x| -x).collect(), ..self.clone() }
    }

    /// A grid with caller-supplied increments (row-major `2^L x dims`).
    pub fn from_increments(horizon: f64, finest_level: u32, dims: usize, increments: Vec<f64>) -> Result<Self> {
        let total = slots_for(finest_level, dims)?;
        if increments.len() != total || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("expected {total} increments for level {finest_level} x {dims} dims")));
        }
        Ok(BrownianPathGrid { horizon, finest_level, dims, seed: 0, path_index: 0, increments })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_stderr;

    #[test]
    fn deterministic_and_sized() {
        let a = sample_path(1, 0, 1.0, 10, 2).unwrap();
        let b = sample_path(1, 0, 1.0, 10, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1024);
        assert_eq!(a.increments().len(), 2048);
        let c = sample_path(1, 1, 1.0, 10, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn refine_matches_direct_sampling() {
        let a = sample_path(9, 4, 2.0, 7, 3).unwrap();
        let b = sample_path(9, 4, 2.0, 8, 3).unwrap();
        assert_eq!(a.refine().unwrap(), b);
    }

    #[test]
    fn coarsen_identity_and_total() {
        let p = sample_path(3, 2, 1.0, 6, 1).unwrap();
        assert_eq!(p.coarsen(6).unwrap(), p.increments());
        let top = p.coarsen(0).unwrap();
        let total = p.value_at(64).unwrap();
        assert!((top[0] - total[0]).abs() <= 1e-12 * total[0].abs().max(1.0));
        assert!(p.coarsen(7).is_err());
    }

    #[test]
    fn coarse_levels_track_the_bridge_parents() {
        // coarsening the fine path reproduces the lower-level bridge nodes
        let fine = sample_path(5, 0, 1.0, 12, 1).unwrap();
        let coarse = sample_path(5, 0, 1.0, 5, 1).unwrap();
        let summed = fine.coarsen(5).unwrap();
        for (a, b) in summed.iter().zip(coarse.increments()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn value_at_edges() {
        let p = sample_path(3, 2, 1.0, 5, 2).unwrap();
        assert_eq!(p.value_at(0).unwrap(), vec![0.0, 0.0]);
        let w5 = p.value_at(5).unwrap();
        let w4 = p.value_at(4).unwrap();
        for d in 0..2 {
            assert!((w5[d] - w4[d] - p.increment(4)[d]).abs() < 1e-15);
        }
        assert!(p.value_at(33).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(sample_path(0, 0, 1.0, 64, 1).is_err());
        assert!(sample_path(0, 0, 0.0, 3, 1).is_err());
        assert!(sample_path(0, 0, 1.0, 3, 0).is_err());
    }

    #[test]
    fn first_increment_mean_is_zero() {
        // CLT oracle: stderr = sqrt(delta_L / M)
        let m = 100_000;
        let level = 10;
        let xs: Vec<f64> = (0..m).map(|i| sample_path(11, i as u64, 1.0, level, 1).unwrap().increment(0)[0]).collect();
        let (mean, _) = mean_stderr(&xs);
        let stderr = (1.0 / 1024.0 / m as f64).sqrt();
        assert!(mean.abs() < 4.0 * stderr, "mean {mean} vs stderr {stderr}");
    }
}
