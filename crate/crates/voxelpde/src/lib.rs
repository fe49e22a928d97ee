//! Voxel-grid PDE solvers with Fourier-spectral semi-implicit time stepping.
//!
//! The crate simulates reaction–diffusion and phase-field problems on uniform
//! cell-centered 3D grids of the kind produced by segmented tomography:
//!
//! * [`grid`] — the [`VoxelFields`](grid::VoxelFields) container, grid
//!   geometry and boundary conditions;
//! * [`ghost`] — ghost-cell padding implementing the boundary rules;
//! * [`stencil`] — finite-difference operators (laplacian, conservative
//!   variable-coefficient divergence, gradient magnitude, normal laplacian);
//! * [`spectral`] — per-axis FFT/DST/DCT transforms selected by boundary
//!   condition, wavenumbers and the stabilizing symbol;
//! * [`problem`] — the PDE catalog (diffusion, Gray–Scott, Cahn–Hilliard,
//!   Allen–Cahn and variants, multiphase, smoothed-boundary transport);
//! * [`stepper`] — explicit Euler, semi-implicit (IMEX) and exponential
//!   (ETD1) time integration plus the simulation runner;
//! * [`verify`] — manufactured solutions, observed-order measurement and a
//!   dense brute-force reference stepper;
//! * [`inverse`] — scalar-parameter fitting against field snapshots;
//! * [`io`] — VTK legacy output and raw little-endian volumes with JSON
//!   sidecars;
//! * [`preset`] — seeded, platform-independent initial conditions.

pub mod error;
pub mod ghost;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod preset;
pub mod problem;
pub mod spectral;
pub mod stencil;
pub mod stepper;
pub mod verify;

pub use error::{Error, Result};
pub use ghost::{fill_ghosts, Padded};
pub use grid::{AxisBc, BcSide, BoundarySpec, GridSpec, VoxelFields};

/// Deterministic pairwise sum (fixed reduction tree, independent of threading).
pub fn pairwise_sum(x: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if x.len() <= BLOCK {
        return x.iter().sum();
    }
    let mid = (x.len() / 2).next_multiple_of(BLOCK);
    let mid = mid.min(x.len());
    pairwise_sum(&x[..mid]) + pairwise_sum(&x[mid..])
}

#[cfg(test)]
mod tests {
    use super::pairwise_sum;

    #[test]
    fn pairwise_matches_exact_on_integers() {
        let x: Vec<f64> = (0..10_001).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&x), 10_000.0 * 10_001.0 / 2.0);
    }

    #[test]
    fn pairwise_close_to_compensated() {
        // Neumaier-compensated reference.
        let x: Vec<f64> = (0..50_000)
            .map(|i| ((i as f64) * 0.7).sin() * 1e-3 + 1.0)
            .collect();
        let mut s = 0.0;
        let mut c = 0.0;
        for &v in &x {
            let t = s + v;
            c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
            s = t;
        }
        let reference = s + c;
        let got = pairwise_sum(&x);
        assert!(((got - reference) / reference).abs() < 1e-14);
    }
}
