//! Seeded initial-condition presets.
//!
//! Noise presets use a counter-based SplitMix64 generator keyed on
//! `(seed, cell index)`, so a given seed reproduces the same field on every
//! platform and regardless of evaluation order.

use crate::error::Result;
use crate::grid::VoxelFields;

/// SplitMix64 output function for one counter value.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Uniform value in [0, 1) for cell `index` under `seed`.
#[inline]
pub fn uniform01(seed: u64, index: u64) -> f64 {
    let bits = splitmix64(seed.wrapping_add(index.wrapping_mul(0xA0761D6478BD642F)));
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `mean + amplitude * U(-1, 1)` per cell; the usual spinodal seed.
pub fn spinodal_noise(vf: &mut VoxelFields, name: &str, mean: f64, amplitude: f64, seed: u64) -> Result<()> {
    let n = vf.grid().len();
    let mut data = Vec::with_capacity(n);
    for idx in 0..n {
        data.push(mean + amplitude * (2.0 * uniform01(seed, idx as u64) - 1.0));
    }
    vf.add_from(name, data)
}

/// Equilibrium-profile sphere: 1 inside, 0 outside, tanh transition of
/// width scale `eps` centered on radius `radius`.
pub fn sphere(vf: &mut VoxelFields, name: &str, center: [f64; 3], radius: f64, eps: f64) -> Result<()> {
    vf.add_with(name, |x, y, z| {
        let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2)).sqrt();
        0.5 * (1.0 - (1.5 * (r - radius) / eps).tanh())
    })
}

/// Half-space smooth step: 1 below `position` along `axis`, 0 above.
pub fn slab(vf: &mut VoxelFields, name: &str, axis: usize, position: f64, eps: f64) -> Result<()> {
    vf.add_with(name, |x, y, z| {
        let d = [x, y, z][axis] - position;
        0.5 * (1.0 - (1.5 * d / eps).tanh())
    })
}
