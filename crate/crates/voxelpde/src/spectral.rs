//! Per-axis fast transforms, wavenumbers and the stabilizing symbol.
//!
//! The transform family of each axis follows its boundary condition:
//! periodic axes use the FFT (real-to-complex along the first periodic axis,
//! complex along any further ones), Dirichlet pairs the DST-II and zero-flux
//! pairs the DCT-II — the cell-centered trig transforms whose basis vectors
//! satisfy the corresponding ghost rules exactly.
//!
//! Normalization: forward transforms are unnormalized (the zero mode of a
//! periodic axis is `N * mean`); the inverse applies the full normalization
//! in one final pass, so `inverse(forward(u)) == u` to round-off.
//!
//! With [`WavenumberMode::ModifiedFd`] the per-mode eigenvalues are those of
//! the 7-point stencil, `2(1-cos θ)/h²`, so a semi-implicit step solves the
//! discrete linear operator exactly; [`WavenumberMode::Continuous`] keeps the
//! analytic `k²` of pseudo-spectral convention.

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, GridSpec, SpectralAxisKind};
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustdct::{DctPlanner, TransformType2And3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

pub type C64 = Complex<f64>;

/// Which per-mode eigenvalue enters the symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavenumberMode {
    /// Eigenvalues of the discrete 7-point laplacian (default).
    ModifiedFd,
    /// Analytic wavenumbers squared.
    Continuous,
}

enum AxisOp {
    /// Flat axis, nothing to transform.
    Identity,
    R2c {
        fwd: Arc<dyn RealToComplex<f64>>,
        inv: Arc<dyn ComplexToReal<f64>>,
    },
    Fft {
        fwd: Arc<dyn Fft<f64>>,
        inv: Arc<dyn Fft<f64>>,
    },
    Sin(Arc<dyn TransformType2And3<f64>>),
    Cos(Arc<dyn TransformType2And3<f64>>),
}

/// Coefficient storage: real when every axis is trigonometric, complex once
/// any axis is periodic (the first periodic axis is stored half-spectrum).
#[derive(Debug, Clone)]
pub enum CoeffData {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

/// Transform-space coefficients shaped `coeff_dims`, x-fastest.
#[derive(Debug, Clone)]
pub struct SpectralCoeffs {
    pub dims: [usize; 3],
    pub data: CoeffData,
}

impl SpectralCoeffs {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bytes(&self) -> usize {
        match &self.data {
            CoeffData::Real(v) => v.capacity() * 8,
            CoeffData::Complex(v) => v.capacity() * 16,
        }
    }

    #[inline]
    pub fn index(&self, m: [usize; 3]) -> usize {
        m[0] + self.dims[0] * (m[1] + self.dims[1] * m[2])
    }

    /// Multiplies every mode by the matching real factor.
    pub fn scale_by(&mut self, factors: &[f64]) {
        match &mut self.data {
            CoeffData::Real(v) => {
                for (x, f) in v.iter_mut().zip(factors) {
                    *x *= f;
                }
            }
            CoeffData::Complex(v) => {
                for (x, f) in v.iter_mut().zip(factors) {
                    *x *= *f;
                }
            }
        }
    }
}

/// Reusable work areas for transform execution.
pub struct TransformScratch {
    work: Vec<f64>,
    rline: Vec<f64>,
    cline: Vec<C64>,
    fft_scratch: Vec<C64>,
    trig_scratch: Vec<f64>,
}

impl TransformScratch {
    pub fn bytes(&self) -> usize {
        self.work.capacity() * 8
            + self.rline.capacity() * 8
            + self.cline.capacity() * 16
            + self.fft_scratch.capacity() * 16
            + self.trig_scratch.capacity() * 8
    }
}

/// Immutable, shareable plan for the axis-separable transforms of one grid
/// and boundary combination.
pub struct TransformPlan {
    real_dims: [usize; 3],
    coeff_dims: [usize; 3],
    spacing: [f64; 3],
    axes: [AxisOp; 3],
    kinds: [Option<SpectralAxisKind>; 3],
    r2c_axis: Option<usize>,
    inv_scale: f64,
    work_needed: bool,
}

fn stride_of(dims: [usize; 3], axis: usize) -> usize {
    match axis {
        0 => 1,
        1 => dims[0],
        _ => dims[0] * dims[1],
    }
}

fn for_each_line(dims: [usize; 3], axis: usize, mut f: impl FnMut(usize)) {
    let (p, q) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (sp, sq) = (stride_of(dims, p), stride_of(dims, q));
    for b in 0..dims[q] {
        for a in 0..dims[p] {
            f(a * sp + b * sq);
        }
    }
}

impl TransformPlan {
    pub fn new(grid: &GridSpec, bc: &BoundarySpec) -> Result<Self> {
        bc.validate()?;
        let mut fft_planner = FftPlanner::new();
        let mut real_planner = RealFftPlanner::new();
        let mut dct_planner = DctPlanner::new();

        let mut kinds = [None; 3];
        let mut r2c_axis = None;
        for ax in 0..3 {
            if !grid.simulated(ax) {
                continue;
            }
            let kind = bc.spectral_axis_kind(ax)?;
            kinds[ax] = Some(kind);
            if kind == SpectralAxisKind::Periodic && r2c_axis.is_none() {
                r2c_axis = Some(ax);
            }
        }

        let mut coeff_dims = grid.dims;
        let mut inv_scale = 1.0;
        let mut work_needed = false;
        let axes: [AxisOp; 3] = std::array::from_fn(|ax| {
            let n = grid.dims[ax];
            match kinds[ax] {
                None => AxisOp::Identity,
                Some(SpectralAxisKind::Periodic) => {
                    inv_scale /= n as f64;
                    if r2c_axis == Some(ax) {
                        coeff_dims[ax] = n / 2 + 1;
                        AxisOp::R2c {
                            fwd: real_planner.plan_fft_forward(n),
                            inv: real_planner.plan_fft_inverse(n),
                        }
                    } else {
                        AxisOp::Fft {
                            fwd: fft_planner.plan_fft_forward(n),
                            inv: fft_planner.plan_fft_inverse(n),
                        }
                    }
                }
                Some(SpectralAxisKind::DirichletPair) => {
                    inv_scale *= 2.0 / n as f64;
                    work_needed = true;
                    AxisOp::Sin(dct_planner.plan_dst2(n))
                }
                Some(SpectralAxisKind::ZeroFluxPair) => {
                    inv_scale *= 2.0 / n as f64;
                    work_needed = true;
                    AxisOp::Cos(dct_planner.plan_dct2(n))
                }
            }
        });
        // Work copy only matters when trig passes precede a real-to-complex pass.
        let work_needed = work_needed && r2c_axis.is_some();

        Ok(TransformPlan {
            real_dims: grid.dims,
            coeff_dims,
            spacing: grid.spacing,
            axes,
            kinds,
            r2c_axis,
            inv_scale,
            work_needed,
        })
    }

    pub fn coeff_dims(&self) -> [usize; 3] {
        self.coeff_dims
    }

    pub fn coeff_len(&self) -> usize {
        self.coeff_dims[0] * self.coeff_dims[1] * self.coeff_dims[2]
    }

    fn real_len(&self) -> usize {
        self.real_dims[0] * self.real_dims[1] * self.real_dims[2]
    }

    /// Forward transforms are unnormalized; the inverse carries this factor.
    pub fn normalization(&self) -> f64 {
        self.inv_scale
    }

    pub fn make_coeffs(&self) -> SpectralCoeffs {
        let data = if self.r2c_axis.is_some() {
            CoeffData::Complex(vec![C64::new(0.0, 0.0); self.coeff_len()])
        } else {
            CoeffData::Real(vec![0.0; self.coeff_len()])
        };
        SpectralCoeffs { dims: self.coeff_dims, data }
    }

    pub fn make_scratch(&self) -> TransformScratch {
        let max_real_n = *self.real_dims.iter().max().unwrap();
        let mut cline = 0usize;
        let mut fft_scratch = 0usize;
        let mut trig_scratch = 0usize;
        for ax in 0..3 {
            match &self.axes[ax] {
                AxisOp::R2c { fwd, inv } => {
                    cline = cline.max(self.coeff_dims[ax]);
                    fft_scratch = fft_scratch.max(fwd.get_scratch_len()).max(inv.get_scratch_len());
                }
                AxisOp::Fft { fwd, inv } => {
                    cline = cline.max(self.coeff_dims[ax]);
                    fft_scratch =
                        fft_scratch.max(fwd.get_inplace_scratch_len()).max(inv.get_inplace_scratch_len());
                }
                AxisOp::Sin(p) | AxisOp::Cos(p) => {
                    trig_scratch = trig_scratch.max(p.get_scratch_len());
                }
                AxisOp::Identity => {}
            }
        }
        TransformScratch {
            work: vec![0.0; if self.work_needed { self.real_len() } else { 0 }],
            rline: vec![0.0; max_real_n],
            cline: vec![C64::new(0.0, 0.0); cline],
            fft_scratch: vec![C64::new(0.0, 0.0); fft_scratch],
            trig_scratch: vec![0.0; trig_scratch],
        }
    }

    fn trig_pass(&self, data: &mut [f64], ws_trig: &mut [f64], forward: bool) {
        for ax in 0..3 {
            let n = self.real_dims[ax];
            let s = stride_of(self.real_dims, ax);
            match &self.axes[ax] {
                AxisOp::Sin(p) => {
                    let plan = Arc::clone(p);
                    apply_trig(data, self.real_dims, ax, n, s, ws_trig, |line, scratch| {
                        if forward {
                            plan.process_dst2_with_scratch(line, scratch);
                        } else {
                            plan.process_dst3_with_scratch(line, scratch);
                        }
                    });
                }
                AxisOp::Cos(p) => {
                    let plan = Arc::clone(p);
                    apply_trig(data, self.real_dims, ax, n, s, ws_trig, |line, scratch| {
                        if forward {
                            plan.process_dct2_with_scratch(line, scratch);
                        } else {
                            plan.process_dct3_with_scratch(line, scratch);
                        }
                    });
                }
                _ => {}
            }
        }
    }

    /// Unnormalized forward transform of `field` into `out`.
    pub fn forward(&self, field: &[f64], out: &mut SpectralCoeffs, ws: &mut TransformScratch) {
        assert_eq!(field.len(), self.real_len());
        assert_eq!(out.dims, self.coeff_dims);
        match (&mut out.data, self.r2c_axis) {
            (CoeffData::Real(coeffs), None) => {
                coeffs.copy_from_slice(field);
                self.trig_pass(coeffs, &mut ws.trig_scratch, true);
            }
            (CoeffData::Complex(coeffs), Some(r2c_ax)) => {
                let src: &[f64] = if self.work_needed {
                    ws.work.copy_from_slice(field);
                    self.trig_pass(&mut ws.work, &mut ws.trig_scratch, true);
                    &ws.work
                } else {
                    field
                };
                // Real-to-complex along the first periodic axis.
                let n = self.real_dims[r2c_ax];
                let half = self.coeff_dims[r2c_ax];
                let rs = stride_of(self.real_dims, r2c_ax);
                let cs = stride_of(self.coeff_dims, r2c_ax);
                let AxisOp::R2c { fwd, .. } = &self.axes[r2c_ax] else { unreachable!() };
                // Cross-axis layout matches: only the transformed axis differs.
                for_each_line_pair(self.real_dims, self.coeff_dims, r2c_ax, |rbase, cbase| {
                    for m in 0..n {
                        ws.rline[m] = src[rbase + m * rs];
                    }
                    fwd.process_with_scratch(
                        &mut ws.rline[..n],
                        &mut ws.cline[..half],
                        &mut ws.fft_scratch,
                    )
                    .expect("matching buffer lengths");
                    for m in 0..half {
                        coeffs[cbase + m * cs] = ws.cline[m];
                    }
                });
                // Full complex FFT along any remaining periodic axes.
                for ax in 0..3 {
                    if let AxisOp::Fft { fwd, .. } = &self.axes[ax] {
                        complex_pass(coeffs, self.coeff_dims, ax, fwd, ws);
                    }
                }
            }
            _ => panic!("coefficient buffer does not match the plan layout"),
        }
    }

    /// Inverse transform; `coeffs` is consumed as scratch.
    pub fn inverse(&self, coeffs: &mut SpectralCoeffs, out: &mut [f64], ws: &mut TransformScratch) {
        assert_eq!(out.len(), self.real_len());
        assert_eq!(coeffs.dims, self.coeff_dims);
        match (&mut coeffs.data, self.r2c_axis) {
            (CoeffData::Real(c), None) => {
                out.copy_from_slice(c);
                self.trig_pass(out, &mut ws.trig_scratch, false);
            }
            (CoeffData::Complex(c), Some(r2c_ax)) => {
                for ax in 0..3 {
                    if let AxisOp::Fft { inv, .. } = &self.axes[ax] {
                        complex_pass(c, self.coeff_dims, ax, inv, ws);
                    }
                }
                let n = self.real_dims[r2c_ax];
                let half = self.coeff_dims[r2c_ax];
                let rs = stride_of(self.real_dims, r2c_ax);
                let cs = stride_of(self.coeff_dims, r2c_ax);
                let AxisOp::R2c { inv, .. } = &self.axes[r2c_ax] else { unreachable!() };
                let even = n % 2 == 0;
                for_each_line_pair(self.real_dims, self.coeff_dims, r2c_ax, |rbase, cbase| {
                    for m in 0..half {
                        ws.cline[m] = c[cbase + m * cs];
                    }
                    // Conjugate-symmetric spectra have real DC and Nyquist.
                    ws.cline[0].im = 0.0;
                    if even {
                        ws.cline[half - 1].im = 0.0;
                    }
                    inv.process_with_scratch(
                        &mut ws.cline[..half],
                        &mut ws.rline[..n],
                        &mut ws.fft_scratch,
                    )
                    .expect("matching buffer lengths");
                    for m in 0..n {
                        out[rbase + m * rs] = ws.rline[m];
                    }
                });
                self.trig_pass(out, &mut ws.trig_scratch, false);
            }
            _ => panic!("coefficient buffer does not match the plan layout"),
        }
        for v in out.iter_mut() {
            *v *= self.inv_scale;
        }
    }

    /// Per-mode eigenvalue array `k² ≥ 0` over the coefficient layout.
    pub fn wavenumbers_sq(&self, mode: WavenumberMode) -> Vec<f64> {
        let per_axis: [Vec<f64>; 3] = std::array::from_fn(|ax| self.axis_eigenvalues(ax, mode));
        let [cx, cy, cz] = self.coeff_dims;
        let mut out = Vec::with_capacity(self.coeff_len());
        for mz in 0..cz {
            for my in 0..cy {
                for mx in 0..cx {
                    out.push(per_axis[0][mx] + per_axis[1][my] + per_axis[2][mz]);
                }
            }
        }
        out
    }

    fn axis_eigenvalues(&self, ax: usize, mode: WavenumberMode) -> Vec<f64> {
        let n = self.real_dims[ax];
        let h = self.spacing[ax];
        let cn = self.coeff_dims[ax];
        let theta_and_k = |m: usize| -> (f64, f64) {
            match self.kinds[ax] {
                None => (0.0, 0.0),
                Some(SpectralAxisKind::Periodic) => {
                    // Signed frequency for the continuous wavenumber.
                    let freq = if self.r2c_axis == Some(ax) || m <= n / 2 { m } else { n - m };
                    (2.0 * PI * m as f64 / n as f64, 2.0 * PI * freq as f64 / (n as f64 * h))
                }
                Some(SpectralAxisKind::DirichletPair) => {
                    let t = PI * (m as f64 + 1.0) / n as f64;
                    (t, t / h)
                }
                Some(SpectralAxisKind::ZeroFluxPair) => {
                    let t = PI * m as f64 / n as f64;
                    (t, t / h)
                }
            }
        };
        (0..cn)
            .map(|m| {
                let (theta, k) = theta_and_k(m);
                match mode {
                    WavenumberMode::ModifiedFd => 2.0 * (1.0 - theta.cos()) / (h * h),
                    WavenumberMode::Continuous => k * k,
                }
            })
            .collect()
    }

    /// Parseval-weighted squared norm of a coefficient array; equals the
    /// squared 2-norm of the original field.
    pub fn coeff_norm_sq(&self, coeffs: &SpectralCoeffs) -> f64 {
        let weights: [Vec<f64>; 3] = std::array::from_fn(|ax| {
            let n = self.real_dims[ax] as f64;
            let cn = self.coeff_dims[ax];
            match self.kinds[ax] {
                None => vec![1.0],
                Some(SpectralAxisKind::Periodic) => {
                    if self.r2c_axis == Some(ax) {
                        let even = self.real_dims[ax] % 2 == 0;
                        (0..cn)
                            .map(|m| {
                                let edge = m == 0 || (even && m == cn - 1);
                                if edge {
                                    1.0 / n
                                } else {
                                    2.0 / n
                                }
                            })
                            .collect()
                    } else {
                        vec![1.0 / n; cn]
                    }
                }
                Some(SpectralAxisKind::DirichletPair) => (0..cn)
                    .map(|m| if m == cn - 1 { 1.0 / n } else { 2.0 / n })
                    .collect(),
                Some(SpectralAxisKind::ZeroFluxPair) => (0..cn)
                    .map(|m| if m == 0 { 1.0 / n } else { 2.0 / n })
                    .collect(),
            }
        });
        let [cx, cy, cz] = self.coeff_dims;
        let mut total = 0.0;
        let mut idx = 0usize;
        for mz in 0..cz {
            for my in 0..cy {
                let wyz = weights[1][my] * weights[2][mz];
                for mx in 0..cx {
                    let w = weights[0][mx] * wyz;
                    let mag2 = match &coeffs.data {
                        CoeffData::Real(v) => v[idx] * v[idx],
                        CoeffData::Complex(v) => v[idx].norm_sqr(),
                    };
                    total += w * mag2;
                    idx += 1;
                }
            }
        }
        total
    }
}

/// Iterates matching line bases of the real and coefficient layouts; the two
/// layouts differ only along `axis`.
fn for_each_line_pair(
    rdims: [usize; 3],
    cdims: [usize; 3],
    axis: usize,
    mut f: impl FnMut(usize, usize),
) {
    let (p, q) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (rp, rq) = (stride_of(rdims, p), stride_of(rdims, q));
    let (cp, cq) = (stride_of(cdims, p), stride_of(cdims, q));
    for b in 0..rdims[q] {
        for a in 0..rdims[p] {
            f(a * rp + b * rq, a * cp + b * cq);
        }
    }
}

fn apply_trig(
    data: &mut [f64],
    dims: [usize; 3],
    axis: usize,
    n: usize,
    stride: usize,
    ws_trig: &mut [f64],
    mut process: impl FnMut(&mut [f64], &mut [f64]),
) {
    if axis == 0 {
        for_each_line(dims, axis, |base| {
            process(&mut data[base..base + n], ws_trig);
        });
    } else {
        let mut line = vec![0.0; n];
        for_each_line(dims, axis, |base| {
            for m in 0..n {
                line[m] = data[base + m * stride];
            }
            process(&mut line, ws_trig);
            for m in 0..n {
                data[base + m * stride] = line[m];
            }
        });
    }
}

fn complex_pass(
    data: &mut [C64],
    dims: [usize; 3],
    axis: usize,
    fft: &Arc<dyn Fft<f64>>,
    ws: &mut TransformScratch,
) {
    let n = dims[axis];
    let s = stride_of(dims, axis);
    for_each_line(dims, axis, |base| {
        for m in 0..n {
            ws.cline[m] = data[base + m * s];
        }
        fft.process_with_scratch(&mut ws.cline[..n], &mut ws.fft_scratch);
        for m in 0..n {
            data[base + m * s] = ws.cline[m];
        }
    });
}

/// Allocating convenience wrapper for [`TransformPlan::forward`].
pub fn forward(field: &[f64], plan: &TransformPlan) -> SpectralCoeffs {
    let mut out = plan.make_coeffs();
    let mut ws = plan.make_scratch();
    plan.forward(field, &mut out, &mut ws);
    out
}

/// Allocating convenience wrapper for [`TransformPlan::inverse`].
pub fn inverse(mut coeffs: SpectralCoeffs, plan: &TransformPlan) -> Vec<f64> {
    let mut out = vec![0.0; plan.real_len()];
    let mut ws = plan.make_scratch();
    plan.inverse(&mut coeffs, &mut out, &mut ws);
    out
}

/// Per-mode `k²` array for a grid/boundary combination.
pub fn wavenumbers_sq(grid: &GridSpec, bc: &BoundarySpec, mode: WavenumberMode) -> Result<Vec<f64>> {
    Ok(TransformPlan::new(grid, bc)?.wavenumbers_sq(mode))
}

/// Stabilizer family declared by a problem for one evolved field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolKind {
    /// `S = -coef * k²` (diffusion-type operators).
    Laplacian { coef: f64 },
    /// `S = -coef * k⁴` (conserved fourth-order operators).
    Biharmonic { coef: f64 },
}

/// Per-mode stabilizer `S ≤ 0` over the coefficient layout.
#[derive(Debug, Clone)]
pub struct SpectralSymbol {
    pub values: Vec<f64>,
    pub mode: WavenumberMode,
}

/// Maps `k²` values to symbol values for one stabilizer family.
pub fn symbol_values_from_ksq(kind: SymbolKind, ksq: &[f64]) -> Result<Vec<f64>> {
    let coef = match kind {
        SymbolKind::Laplacian { coef } | SymbolKind::Biharmonic { coef } => coef,
    };
    if !(coef >= 0.0) || !coef.is_finite() {
        return Err(Error::InvalidParam(format!(
            "stabilizer coefficient must be finite and ≥ 0, got {coef}"
        )));
    }
    Ok(match kind {
        SymbolKind::Laplacian { coef } => ksq.iter().map(|&k2| -coef * k2).collect(),
        SymbolKind::Biharmonic { coef } => ksq.iter().map(|&k2| -coef * k2 * k2).collect(),
    })
}

impl SpectralSymbol {
    pub fn build(kind: SymbolKind, plan: &TransformPlan, mode: WavenumberMode) -> Result<Self> {
        let ksq = plan.wavenumbers_sq(mode);
        let values = symbol_values_from_ksq(kind, &ksq)?;
        debug_assert!(values.iter().all(|&s| s <= 0.0));
        Ok(SpectralSymbol { values, mode })
    }

    pub fn bytes(&self) -> usize {
        self.values.capacity() * 8
    }
}
