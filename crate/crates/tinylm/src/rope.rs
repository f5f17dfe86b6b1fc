//! Rotary position embeddings.
//!
//! Pair `j` of a head vector (coordinates `2j`, `2j+1`) is rotated by the angle
//! `pos * base^(-j / rope_dim)`. Only the first `2 * rope_dim` coordinates are
//! rotated; any remaining coordinates pass through unchanged.

use crate::Scalar;

/// Rotation angle for pair `pair` at `position`. Computed in `f64` so large
/// positions do not lose precision in `f32` models.
pub fn rope_angle(position: usize, pair: usize, rope_dim: usize, base: f64) -> f64 {
    let inv_freq = base.powf(-(pair as f64) / rope_dim as f64);
    position as f64 * inv_freq
}

/// Rotates one head vector in place.
pub fn rope_rotate<F: Scalar>(x: &mut [F], position: usize, rope_dim: usize, base: f64) {
    debug_assert!(2 * rope_dim <= x.len());
    for j in 0..rope_dim {
        let (sin, cos) = rope_angle(position, j, rope_dim, base).sin_cos();
        rotate_pair(x, j, F::lit(cos), F::lit(sin));
    }
}

/// Rotates every `head_size` chunk of the row-major matrix `rows` (one row
/// per position) and returns the result.
pub fn rope_apply<F: Scalar>(
    rows: &[F],
    head_size: usize,
    positions: &[usize],
    rope_dim: usize,
    base: f64,
) -> Vec<F> {
    let width = rows.len() / positions.len().max(1);
    let mut out = rows.to_vec();
    for (r, &pos) in positions.iter().enumerate() {
        for head in out[r * width..(r + 1) * width].chunks_mut(head_size) {
            rope_rotate(head, pos, rope_dim, base);
        }
    }
    out
}

#[inline]
fn rotate_pair<F: Scalar>(x: &mut [F], j: usize, cos: F, sin: F) {
    let a = x[2 * j];
    let b = x[2 * j + 1];
    x[2 * j] = a * cos - b * sin;
    x[2 * j + 1] = a * sin + b * cos;
}

/// Precomputed cos/sin for a contiguous run of positions.
pub(crate) struct RopeTable<F> {
    rope_dim: usize,
    cos: Vec<F>,
    sin: Vec<F>,
}

impl<F: Scalar> RopeTable<F> {
    pub fn new(start: usize, len: usize, rope_dim: usize, base: f64) -> Self {
        let mut cos = Vec::with_capacity(len * rope_dim);
        let mut sin = Vec::with_capacity(len * rope_dim);
        for t in 0..len {
            for j in 0..rope_dim {
                let (s, c) = rope_angle(start + t, j, rope_dim, base).sin_cos();
                cos.push(F::lit(c));
                sin.push(F::lit(s));
            }
        }
        Self { rope_dim, cos, sin }
    }

    pub fn rotate(&self, head: &mut [F], t: usize) {
        for j in 0..self.rope_dim {
            let i = t * self.rope_dim + j;
            rotate_pair(head, j, self.cos[i], self.sin[i]);
        }
    }

    /// Applies the transpose rotation; used to pull gradients back through RoPE.
    pub fn rotate_back(&self, head: &mut [F], t: usize) {
        for j in 0..self.rope_dim {
            let i = t * self.rope_dim + j;
            rotate_pair(head, j, self.cos[i], -self.sin[i]);
        }
    }
}
