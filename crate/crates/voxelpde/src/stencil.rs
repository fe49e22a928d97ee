//! Finite-difference spatial operators on ghost-padded fields.
//!
//! All operators are second order on the cell-centered grid and write into
//! caller-provided buffers; the allocating wrappers exist for convenience.
//! The conservative divergence uses arithmetic face means of the cell
//! coefficient, so `div_flux(1, u)` reproduces `laplacian(u)` bit for bit and
//! face fluxes telescope exactly under periodic and zero-flux conditions.

use crate::error::{Error, Result};
use crate::ghost::Padded;
use crate::grid::{BcSide, BoundarySpec, GridSpec};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Grid plus boundary conditions, the context every operator needs.
#[derive(Debug, Clone, Copy)]
pub struct StencilContext {
    pub grid: GridSpec,
    pub bc: BoundarySpec,
}

impl StencilContext {
    pub fn new(grid: GridSpec, bc: BoundarySpec) -> Result<Self> {
        bc.validate()?;
        Ok(StencilContext { grid, bc })
    }
}

/// Cell-centered coefficient entering a conservative divergence.
#[derive(Clone, Copy)]
pub enum FaceCoef<'a> {
    /// Spatially constant coefficient.
    Const(f64),
    /// Per-cell values; faces take the arithmetic mean of the two neighbors.
    Field(&'a [f64]),
    /// Values derived pointwise from a base field (e.g. a mobility law),
    /// averaged at faces like `Field`.
    Map(&'a [f64], &'a (dyn Fn(f64) -> f64 + Sync)),
}

impl<'a> FaceCoef<'a> {
    #[inline]
    fn cell(&self, idx: usize) -> f64 {
        match self {
            FaceCoef::Const(c) => *c,
            FaceCoef::Field(g) => g[idx],
            FaceCoef::Map(base, f) => f(base[idx]),
        }
    }

    #[inline]
    fn face(&self, a: usize, b: usize) -> f64 {
        match self {
            FaceCoef::Const(c) => *c,
            _ => 0.5 * (self.cell(a) + self.cell(b)),
        }
    }
}

/// How a kernel combines its result with the output buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accum {
    Set,
    Add,
    Sub,
}

fn for_each_plane<F>(out: &mut [f64], plane_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(plane_len).enumerate().for_each(|(k, p)| f(k, p));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(plane_len).enumerate().for_each(|(k, p)| f(k, p));
}

/// Conservative divergence `∇·(Γ ∇u)` of a padded field, accumulated into
/// `out` according to `mode`. No sign restriction on the coefficient; the
/// public [`div_flux`] wrapper enforces `Γ ≥ 0`.
pub(crate) fn divergence_accum(
    gamma: &FaceCoef<'_>,
    u: &Padded,
    ctx: &StencilContext,
    mode: Accum,
    out: &mut [f64],
) {
    let grid = &ctx.grid;
    let [nx, ny, _] = grid.dims;
    assert_eq!(out.len(), grid.len());
    let pstr = u.strides();
    let gstr = [1usize, nx, nx * ny];
    let pdata = u.data();
    let plane_len = nx * ny;

    let inv_h2 = [
        1.0 / (grid.spacing[0] * grid.spacing[0]),
        1.0 / (grid.spacing[1] * grid.spacing[1]),
        1.0 / (grid.spacing[2] * grid.spacing[2]),
    ];

    for_each_plane(out, plane_len, |k, out_plane| {
        let mut first_axis = true;
        for axis in 0..3 {
            if !grid.simulated(axis) {
                continue;
            }
            let n = grid.dims[axis];
            let h = grid.spacing[axis];
            let ps = pstr[axis];
            let gs = gstr[axis];
            let side = ctx.bc.axes[axis];
            let scale = inv_h2[axis];
            let wrap_back = (n - 1) * gs;

            for j in 0..ny {
                for i in 0..nx {
                    let gidx = i + nx * (j + ny * k);
                    let pidx = u.interior_index(i, j, k);
                    let pos = [i, j, k][axis];

                    let f_lo = if pos > 0 {
                        gamma.face(gidx - gs, gidx) * (pdata[pidx] - pdata[pidx - ps])
                    } else {
                        match side.lo {
                            BcSide::Periodic => {
                                gamma.face(gidx + wrap_back, gidx) * (pdata[pidx] - pdata[pidx - ps])
                            }
                            BcSide::Dirichlet(_) | BcSide::ZeroFlux => {
                                gamma.cell(gidx) * (pdata[pidx] - pdata[pidx - ps])
                            }
                            BcSide::Flux(jv) => -jv * h,
                        }
                    };

                    let f_hi = if pos + 1 < n {
                        gamma.face(gidx, gidx + gs) * (pdata[pidx + ps] - pdata[pidx])
                    } else {
                        match side.hi {
                            BcSide::Periodic => {
                                gamma.face(gidx - wrap_back, gidx) * (pdata[pidx + ps] - pdata[pidx])
                            }
                            BcSide::Dirichlet(_) | BcSide::ZeroFlux => {
                                gamma.cell(gidx) * (pdata[pidx + ps] - pdata[pidx])
                            }
                            BcSide::Flux(jv) => jv * h,
                        }
                    };

                    let val = (f_hi - f_lo) * scale;
                    let o = i + nx * j;
                    if first_axis {
                        match mode {
                            Accum::Set => out_plane[o] = val,
                            Accum::Add => out_plane[o] += val,
                            Accum::Sub => out_plane[o] -= val,
                        }
                    } else {
                        match mode {
                            Accum::Set | Accum::Add => out_plane[o] += val,
                            Accum::Sub => out_plane[o] -= val,
                        }
                    }
                }
            }
            first_axis = false;
        }
        if first_axis && mode == Accum::Set {
            // No simulated axis contributes (degenerate 1x1x1 grid).
            out_plane.fill(0.0);
        }
    });
}

// Periodic wrap faces must use one coefficient-pair ordering on both sides so
// the two flux evaluations are bit-identical; `face(gidx + wrap_back, gidx)`
// at pos 0 and `face(gidx - wrap_back, gidx)` at pos n-1 both average the
// pair (n-1, 0).

/// 7-point laplacian of `u`, written into `out`; `pad` is scratch.
pub fn laplacian_into(
    u: &[f64],
    ctx: &StencilContext,
    pad: &mut Padded,
    out: &mut [f64],
) -> Result<()> {
    pad.fill(u, &ctx.grid, &ctx.bc)?;
    divergence_accum(&FaceCoef::Const(1.0), pad, ctx, Accum::Set, out);
    Ok(())
}

/// Allocating wrapper around [`laplacian_into`].
pub fn laplacian(u: &[f64], ctx: &StencilContext) -> Result<Vec<f64>> {
    let mut pad = Padded::for_grid(&ctx.grid);
    let mut out = vec![0.0; ctx.grid.len()];
    laplacian_into(u, ctx, &mut pad, &mut out)?;
    Ok(out)
}

/// Conservative `∇·(Γ ∇u)` with per-cell coefficient `gamma ≥ 0`.
///
/// Prescribed-flux boundaries replace the face flux with the given value, so
/// mass enters the balance exactly at the face.
pub fn div_flux_into(
    gamma: &[f64],
    u: &[f64],
    ctx: &StencilContext,
    pad: &mut Padded,
    out: &mut [f64],
) -> Result<()> {
    if gamma.len() != ctx.grid.len() {
        return Err(Error::SizeMismatch { expected: ctx.grid.len(), got: gamma.len() });
    }
    if gamma.iter().any(|&g| g < 0.0 || !g.is_finite()) {
        return Err(Error::InvalidParam("div_flux coefficient must be finite and ≥ 0".into()));
    }
    pad.fill(u, &ctx.grid, &ctx.bc)?;
    divergence_accum(&FaceCoef::Field(gamma), pad, ctx, Accum::Set, out);
    Ok(())
}

/// Allocating wrapper around [`div_flux_into`].
pub fn div_flux(gamma: &[f64], u: &[f64], ctx: &StencilContext) -> Result<Vec<f64>> {
    let mut pad = Padded::for_grid(&ctx.grid);
    let mut out = vec![0.0; ctx.grid.len()];
    div_flux_into(gamma, u, ctx, &mut pad, &mut out)?;
    Ok(out)
}

/// Central-difference gradient magnitude of a padded field.
pub(crate) fn grad_norm_from_padded(u: &Padded, ctx: &StencilContext, out: &mut [f64]) {
    let grid = &ctx.grid;
    let [nx, ny, _] = grid.dims;
    let pstr = u.strides();
    let pdata = u.data();
    let inv_2h = [
        0.5 / grid.spacing[0],
        0.5 / grid.spacing[1],
        0.5 / grid.spacing[2],
    ];
    let sim = [grid.simulated(0), grid.simulated(1), grid.simulated(2)];
    for_each_plane(out, nx * ny, |k, out_plane| {
        for j in 0..ny {
            for i in 0..nx {
                let pidx = u.interior_index(i, j, k);
                let mut acc = 0.0;
                for axis in 0..3 {
                    if sim[axis] {
                        let d = (pdata[pidx + pstr[axis]] - pdata[pidx - pstr[axis]]) * inv_2h[axis];
                        acc += d * d;
                    }
                }
                out_plane[i + nx * j] = acc.sqrt();
            }
        }
    });
}

/// `|∇u|` with central differences per axis.
pub fn grad_norm_into(
    u: &[f64],
    ctx: &StencilContext,
    pad: &mut Padded,
    out: &mut [f64],
) -> Result<()> {
    pad.fill(u, &ctx.grid, &ctx.bc)?;
    grad_norm_from_padded(pad, ctx, out);
    Ok(())
}

/// Allocating wrapper around [`grad_norm_into`].
pub fn grad_norm(u: &[f64], ctx: &StencilContext) -> Result<Vec<f64>> {
    let mut pad = Padded::for_grid(&ctx.grid);
    let mut out = vec![0.0; ctx.grid.len()];
    grad_norm_into(u, ctx, &mut pad, &mut out)?;
    Ok(out)
}

/// Default regularization floor for gradient magnitudes, `1e-9 / h_min`.
pub fn default_grad_floor(grid: &GridSpec) -> f64 {
    let h_min = grid.spacing.iter().copied().fold(f64::INFINITY, f64::min);
    1e-9 / h_min
}

/// Boundary conditions adopted by the gradient-magnitude field: periodic
/// where the base field is periodic, mirrored elsewhere.
pub(crate) fn magnitude_bc(bc: &BoundarySpec) -> BoundarySpec {
    let derive = |s: BcSide| match s {
        BcSide::Periodic => BcSide::Periodic,
        _ => BcSide::ZeroFlux,
    };
    BoundarySpec {
        axes: [
            crate::grid::AxisBc { lo: derive(bc.axes[0].lo), hi: derive(bc.axes[0].hi) },
            crate::grid::AxisBc { lo: derive(bc.axes[1].lo), hi: derive(bc.axes[1].hi) },
            crate::grid::AxisBc { lo: derive(bc.axes[2].lo), hi: derive(bc.axes[2].hi) },
        ],
    }
}

/// Normal part of the laplacian, `∇|∇φ| · ∇φ / max(|∇φ|, eta)`.
///
/// `phi_pad` must already hold the ghost-filled `phi`; `g_buf` is scratch for
/// the gradient-magnitude field. The magnitude gradient handles its boundary
/// ghosts inline (periodic where `phi` is periodic, mirrored elsewhere), so
/// no second padded buffer is needed.
pub fn normal_laplacian_from_padded(
    phi_pad: &Padded,
    ctx: &StencilContext,
    eta: f64,
    g_buf: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParam("gradient floor eta must be > 0".into()));
    }
    let grid = &ctx.grid;
    grad_norm_from_padded(phi_pad, ctx, g_buf);
    let g_bc = magnitude_bc(&ctx.bc);

    let [nx, ny, _] = grid.dims;
    let dims = grid.dims;
    let pstr = phi_pad.strides();
    let gstr = [1usize, nx, nx * ny];
    let pd = phi_pad.data();
    let inv_2h = [
        0.5 / grid.spacing[0],
        0.5 / grid.spacing[1],
        0.5 / grid.spacing[2],
    ];
    let sim = [grid.simulated(0), grid.simulated(1), grid.simulated(2)];
    let g_buf = &*g_buf;
    for_each_plane(out, nx * ny, |k, out_plane| {
        for j in 0..ny {
            for i in 0..nx {
                let pidx = phi_pad.interior_index(i, j, k);
                let gidx = i + nx * (j + ny * k);
                let mut dot = 0.0;
                for axis in 0..3 {
                    if !sim[axis] {
                        continue;
                    }
                    let pos = [i, j, k][axis];
                    let n = dims[axis];
                    let gs = gstr[axis];
                    let g_lo = if pos > 0 {
                        g_buf[gidx - gs]
                    } else if g_bc.axes[axis].lo == BcSide::Periodic {
                        g_buf[gidx + (n - 1) * gs]
                    } else {
                        g_buf[gidx] // mirror
                    };
                    let g_hi = if pos + 1 < n {
                        g_buf[gidx + gs]
                    } else if g_bc.axes[axis].hi == BcSide::Periodic {
                        g_buf[gidx - (n - 1) * gs]
                    } else {
                        g_buf[gidx]
                    };
                    let dphi = (pd[pidx + pstr[axis]] - pd[pidx - pstr[axis]]) * inv_2h[axis];
                    let dg = (g_hi - g_lo) * inv_2h[axis];
                    dot += dg * dphi;
                }
                let denom = g_buf[gidx].max(eta);
                out_plane[i + nx * j] = dot / denom;
            }
        }
    });
    Ok(())
}

/// Allocating wrapper: normal laplacian of `phi` with gradient floor `eta`.
pub fn normal_laplacian(phi: &[f64], ctx: &StencilContext, eta: f64) -> Result<Vec<f64>> {
    let phi_pad = Padded::from_field(phi, &ctx.grid, &ctx.bc)?;
    let mut g_buf = vec![0.0; ctx.grid.len()];
    let mut out = vec![0.0; ctx.grid.len()];
    normal_laplacian_from_padded(&phi_pad, ctx, eta, &mut g_buf, &mut out)?;
    Ok(out)
}
