//! Ghost-cell padding.
//!
//! Stencils evaluate on a copy of the field with one ghost layer per side of
//! every simulated axis. Ghost values encode the boundary condition:
//!
//! * periodic        — wrap
//! * Dirichlet(g)    — `ghost = 2 g − u_first`, so the value at the face
//!                     midpoint equals `g` to second order
//! * zero flux       — mirror, `ghost = u_first`
//! * Flux(j)         — `ghost = u_first + j h`, injecting the flux at the
//!                     face for a unit coefficient (variable-coefficient
//!                     divergences override the face flux directly instead)
//!
//! Flat axes (single cell) are not padded.

use crate::error::Result;
use crate::grid::{BcSide, BoundarySpec, GridSpec};

/// A field copy with ghost layers on simulated axes.
#[derive(Debug, Clone)]
pub struct Padded {
    data: Vec<f64>,
    dims: [usize; 3],
    pad: [usize; 3],
    pdims: [usize; 3],
}

impl Padded {
    /// Uninitialized (zeroed) padded buffer shaped for `grid`.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let dims = grid.dims;
        let pad = [
            if dims[0] > 1 { 1 } else { 0 },
            if dims[1] > 1 { 1 } else { 0 },
            if dims[2] > 1 { 1 } else { 0 },
        ];
        let pdims = [dims[0] + 2 * pad[0], dims[1] + 2 * pad[1], dims[2] + 2 * pad[2]];
        Padded { data: vec![0.0; pdims[0] * pdims[1] * pdims[2]], dims, pad, pdims }
    }

    /// Ghost-filled copy of `field` under `bc`.
    pub fn from_field(field: &[f64], grid: &GridSpec, bc: &BoundarySpec) -> Result<Self> {
        let mut p = Self::for_grid(grid);
        p.fill(field, grid, bc)?;
        Ok(p)
    }

    pub fn bytes(&self) -> usize {
        self.data.capacity() * std::mem::size_of::<f64>()
    }

    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [1, self.pdims[0], self.pdims[0] * self.pdims[1]]
    }

    /// Flat index of interior cell (i, j, k) inside the padded layout.
    #[inline]
    pub fn interior_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i + self.pad[0]) + self.pdims[0] * ((j + self.pad[1]) + self.pdims[1] * (k + self.pad[2]))
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pad(&self) -> [usize; 3] {
        self.pad
    }

    /// Copies the interior values back out (inverse of the fill).
    pub fn interior_into(&self, out: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        assert_eq!(out.len(), nx * ny * nz);
        for k in 0..nz {
            for j in 0..ny {
                let src = self.interior_index(0, j, k);
                let dst = nx * (j + ny * k);
                out[dst..dst + nx].copy_from_slice(&self.data[src..src + nx]);
            }
        }
    }

    /// Copies `field` into the interior and fills all ghost layers.
    ///
    /// Ghosts are filled axis by axis, each pass extending over the already
    /// padded extent of the previous axes, which also defines edge and corner
    /// ghosts consistently.
    pub fn fill(&mut self, field: &[f64], grid: &GridSpec, bc: &BoundarySpec) -> Result<()> {
        assert_eq!(grid.dims, self.dims, "padded buffer shaped for a different grid");
        if field.len() != grid.len() {
            return Err(crate::error::Error::SizeMismatch { expected: grid.len(), got: field.len() });
        }
        bc.validate()?;
        let [nx, ny, nz] = self.dims;
        for k in 0..nz {
            for j in 0..ny {
                let dst = self.interior_index(0, j, k);
                let src = nx * (j + ny * k);
                self.data[dst..dst + nx].copy_from_slice(&field[src..src + nx]);
            }
        }
        self.fill_ghosts_only(grid, bc);
        Ok(())
    }

    /// Re-derives the ghost layers from the current interior contents.
    pub fn refill_ghosts(&mut self, grid: &GridSpec, bc: &BoundarySpec) {
        assert_eq!(grid.dims, self.dims);
        self.fill_ghosts_only(grid, bc);
    }

    fn fill_ghosts_only(&mut self, grid: &GridSpec, bc: &BoundarySpec) {
        let [sx, sy, sz] = self.strides();
        let strides = [sx, sy, sz];
        for axis in 0..3 {
            if self.pad[axis] == 0 {
                continue;
            }
            let n = self.dims[axis];
            let h = grid.spacing[axis];
            let s = strides[axis];
            // Span of the two perpendicular axes: interior plus any ghost
            // layers already written by earlier passes.
            let (pa, pb) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (ra, rb) = (self.cross_range(axis, pa), self.cross_range(axis, pb));
            let (sa, sb) = (strides[pa], strides[pb]);
            let side = bc.axes[axis];
            for b in rb.clone() {
                for a in ra.clone() {
                    // Base of this line at interior index 0 along `axis`.
                    let base = self.pad[axis] * s + a * sa + b * sb;
                    let first = self.data[base];
                    let last = self.data[base + (n - 1) * s];
                    let lo = match side.lo {
                        BcSide::Periodic => last,
                        BcSide::Dirichlet(g) => 2.0 * g - first,
                        BcSide::ZeroFlux => first,
                        BcSide::Flux(j) => first + j * h,
                    };
                    let hi = match side.hi {
                        BcSide::Periodic => first,
                        BcSide::Dirichlet(g) => 2.0 * g - last,
                        BcSide::ZeroFlux => last,
                        BcSide::Flux(j) => last + j * h,
                    };
                    self.data[base - s] = lo;
                    self.data[base + n * s] = hi;
                }
            }
        }
    }

    /// Index range along a perpendicular axis for a ghost-fill pass:
    /// earlier axes are covered including their ghosts, later axes interior only.
    fn cross_range(&self, filling_axis: usize, perp_axis: usize) -> std::ops::Range<usize> {
        if perp_axis < filling_axis {
            0..self.pdims[perp_axis]
        } else {
            self.pad[perp_axis]..self.pad[perp_axis] + self.dims[perp_axis]
        }
    }
}

/// One-ghost-layer padded copy of `field` under `bc` (see module docs for the
/// ghost rules).
pub fn fill_ghosts(field: &[f64], grid: &GridSpec, bc: &BoundarySpec) -> Result<Padded> {
    Padded::from_field(field, grid, bc)
}
