//! Phase-transformation problems driven by the double-well free energy
//!
//! `F = γ0 ∫ ε |∇φ|² + (9/ε) φ²(1-φ)² dV`,
//!
//! whose planar equilibrium profile is `φ(x) = (1 - tanh(1.5 x / ε)) / 2`
//! and whose interfacial energy calibrates to exactly `γ0` per unit area.

use super::{double_well_slope, Forcing, Problem, Scratch, ScratchSpec};
use crate::error::{Error, Result};
use crate::ghost::Padded;
use crate::grid::{BcSide, BoundarySpec, VoxelFields};
use crate::spectral::SymbolKind;
use crate::stencil::{
    default_grad_floor, divergence_accum, grad_norm_from_padded, normal_laplacian_from_padded,
    Accum, FaceCoef, StencilContext,
};

/// Boundary conditions adopted by derived fields (chemical potential):
/// periodic where the base field is periodic, no-flux elsewhere.
fn derived_bc(bc: &BoundarySpec) -> BoundarySpec {
    let map = |s: BcSide| match s {
        BcSide::Periodic => BcSide::Periodic,
        _ => BcSide::ZeroFlux,
    };
    BoundarySpec {
        axes: std::array::from_fn(|ax| crate::grid::AxisBc {
            lo: map(bc.axes[ax].lo),
            hi: map(bc.axes[ax].hi),
        }),
    }
}

/// `μ = γ0 g(φ) - 2 γ0 ε ∇²φ` written into `out`; `pad` is scratch.
pub fn chemical_potential_into(
    phi: &[f64],
    gamma0: f64,
    eps: f64,
    ctx: &StencilContext,
    pad: &mut Padded,
    out: &mut [f64],
) -> Result<()> {
    if !(gamma0 > 0.0 && eps > 0.0) {
        return Err(Error::InvalidParam("gamma0 and eps must be > 0".into()));
    }
    pad.fill(phi, &ctx.grid, &ctx.bc)?;
    divergence_accum(&FaceCoef::Const(1.0), pad, ctx, Accum::Set, out);
    for (o, &p) in out.iter_mut().zip(phi) {
        *o = gamma0 * double_well_slope(p, eps) - 2.0 * gamma0 * eps * *o;
    }
    Ok(())
}

/// Allocating wrapper around [`chemical_potential_into`].
pub fn chemical_potential(phi: &[f64], gamma0: f64, eps: f64, ctx: &StencilContext) -> Result<Vec<f64>> {
    let mut pad = Padded::for_grid(&ctx.grid);
    let mut out = vec![0.0; ctx.grid.len()];
    chemical_potential_into(phi, gamma0, eps, ctx, &mut pad, &mut out)?;
    Ok(out)
}

/// Total free energy by midpoint quadrature, using `pad`/`work` as scratch.
pub fn compute_energy_with(
    phi: &[f64],
    gamma0: f64,
    eps: f64,
    ctx: &StencilContext,
    pad: &mut Padded,
    work: &mut [f64],
) -> Result<f64> {
    if !(gamma0 > 0.0 && eps > 0.0) {
        return Err(Error::InvalidParam("gamma0 and eps must be > 0".into()));
    }
    pad.fill(phi, &ctx.grid, &ctx.bc)?;
    grad_norm_from_padded(pad, ctx, work);
    for (w, &p) in work.iter_mut().zip(phi) {
        let well = p * p * (1.0 - p) * (1.0 - p);
        *w = eps * *w * *w + (9.0 / eps) * well;
    }
    Ok(gamma0 * ctx.grid.cell_volume() * crate::pairwise_sum(work))
}

/// Allocating wrapper around [`compute_energy_with`].
pub fn compute_energy(phi: &[f64], gamma0: f64, eps: f64, ctx: &StencilContext) -> Result<f64> {
    let mut pad = Padded::for_grid(&ctx.grid);
    let mut work = vec![0.0; ctx.grid.len()];
    compute_energy_with(phi, gamma0, eps, ctx, &mut pad, &mut work)
}

/// Conserved phase evolution `∂φ/∂t = ∇·(M ∇μ) + f` with degenerate
/// mobility `M = D0 clamp(φ(1-φ), 0, 1/4)`.
///
/// The clamp keeps the mobility nonnegative when spinodal dynamics overshoot
/// `[0, 1]` transiently. The chemical potential adopts no-flux ghosts on
/// non-periodic boundaries. When no stabilizer mobility `m0` is given it
/// resolves to `max(D0/4, D0 max φ(1-φ))` against the initial field.
#[derive(Debug, Clone)]
pub struct CahnHilliard {
    pub gamma0: f64,
    pub eps: f64,
    pub d0: f64,
    pub m0: Option<f64>,
    pub forcing: Forcing,
    resolved_m0: f64,
}

impl CahnHilliard {
    pub fn new(gamma0: f64, eps: f64, d0: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && eps > 0.0 && d0 > 0.0) {
            return Err(Error::InvalidParam("gamma0, eps, d0 must be > 0".into()));
        }
        Ok(CahnHilliard { gamma0, eps, d0, m0: None, forcing: Forcing::None, resolved_m0: d0 / 4.0 })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_stabilizer_mobility(mut self, m0: f64) -> Self {
        self.m0 = Some(m0);
        self.resolved_m0 = m0;
        self
    }

    fn mobility(&self) -> impl Fn(f64) -> f64 {
        let d0 = self.d0;
        move |phi: f64| d0 * (phi * (1.0 - phi)).clamp(0.0, 0.25)
    }
}

impl Problem for CahnHilliard {
    fn name(&self) -> &'static str {
        "cahn-hilliard"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["phi".into()]
    }

    fn prepare(&mut self, fields: &VoxelFields, _ctx: &StencilContext) -> Result<()> {
        let phi = fields.field("phi")?;
        self.resolved_m0 = match self.m0 {
            Some(m0) => m0,
            None => {
                let max_mob = phi
                    .iter()
                    .map(|&p| p * (1.0 - p))
                    .fold(f64::NEG_INFINITY, f64::max);
                (self.d0 / 4.0).max(self.d0 * max_mob)
            }
        };
        Ok(())
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let phi = fields.field("phi")?;
        let rhs = &mut out[0];
        // Stage μ in the output buffer, re-pad it, then overwrite with the
        // divergence of the mobility flux.
        chemical_potential_into(phi, self.gamma0, self.eps, ctx, &mut scratch.pad_a, rhs)?;
        let mu_ctx = StencilContext { grid: ctx.grid, bc: derived_bc(&ctx.bc) };
        scratch.pad_a.fill(rhs, &ctx.grid, &mu_ctx.bc)?;
        let mobility = self.mobility();
        divergence_accum(
            &FaceCoef::Map(phi, &mobility),
            &scratch.pad_a,
            &mu_ctx,
            Accum::Set,
            rhs,
        );
        self.forcing.add_to(rhs, phi, &ctx.grid, t);
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Biharmonic { coef: 2.0 * self.eps * self.gamma0 * self.resolved_m0 })
    }

    fn energy(
        &self,
        fields: &VoxelFields,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        work: &mut [f64],
    ) -> Option<f64> {
        let phi = fields.field("phi").ok()?;
        compute_energy_with(phi, self.gamma0, self.eps, ctx, &mut scratch.pad_a, work).ok()
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "gamma0" => self.gamma0 = value,
            "eps" => self.eps = value,
            "d0" => self.d0 = value,
            "m0" => {
                self.m0 = Some(value);
                self.resolved_m0 = value;
            }
            _ => return Err(Error::InvalidParam(format!("cahn-hilliard has no parameter \"{name}\""))),
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "gamma0" => Some(self.gamma0),
            "eps" => Some(self.eps),
            "d0" => Some(self.d0),
            "m0" => Some(self.resolved_m0),
            _ => None,
        }
    }
}

/// Non-conserved relaxation `∂φ/∂t = (M/ε)(2 γ0 ε ∇²φ - γ0 g(φ))`;
/// interfaces move by curvature with normal velocity `-M γ0 κ`.
#[derive(Debug, Clone)]
pub struct AllenCahn {
    pub gamma0: f64,
    pub eps: f64,
    pub mobility: f64,
    pub forcing: Forcing,
}

impl AllenCahn {
    pub fn new(gamma0: f64, eps: f64, mobility: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && eps > 0.0 && mobility > 0.0) {
            return Err(Error::InvalidParam("gamma0, eps, mobility must be > 0".into()));
        }
        Ok(AllenCahn { gamma0, eps, mobility, forcing: Forcing::None })
    }
}

impl Problem for AllenCahn {
    fn name(&self) -> &'static str {
        "allen-cahn"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["phi".into()]
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let phi = fields.field("phi")?;
        let rhs = &mut out[0];
        scratch.pad_a.fill(phi, &ctx.grid, &ctx.bc)?;
        divergence_accum(&FaceCoef::Const(1.0), &scratch.pad_a, ctx, Accum::Set, rhs);
        let (m, g0, eps) = (self.mobility, self.gamma0, self.eps);
        for (o, &p) in rhs.iter_mut().zip(phi) {
            *o = (m / eps) * (2.0 * g0 * eps * *o - g0 * double_well_slope(p, eps));
        }
        self.forcing.add_to(rhs, phi, &ctx.grid, t);
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Laplacian { coef: 2.0 * self.mobility * self.gamma0 })
    }

    fn energy(
        &self,
        fields: &VoxelFields,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        work: &mut [f64],
    ) -> Option<f64> {
        let phi = fields.field("phi").ok()?;
        compute_energy_with(phi, self.gamma0, self.eps, ctx, &mut scratch.pad_a, work).ok()
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "gamma0" => self.gamma0 = value,
            "eps" => self.eps = value,
            "mobility" => self.mobility = value,
            _ => return Err(Error::InvalidParam(format!("allen-cahn has no parameter \"{name}\""))),
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "gamma0" => Some(self.gamma0),
            "eps" => Some(self.eps),
            "mobility" => Some(self.mobility),
            _ => None,
        }
    }
}

/// Curvature-free interface relaxation,
/// `∂φ/∂t = M γ0 (2 ∇_n²φ - g(φ)/ε)`,
/// built on the direct normal-laplacian identity: profiles smooth along the
/// surface normal without curvature-driven shape change.
#[derive(Debug, Clone)]
pub struct AllenCahnNoCurvature {
    pub gamma0: f64,
    pub eps: f64,
    pub mobility: f64,
    /// Gradient-magnitude floor; defaults to `1e-9 / h_min` at prepare.
    pub eta: Option<f64>,
    resolved_eta: f64,
}

impl AllenCahnNoCurvature {
    pub fn new(gamma0: f64, eps: f64, mobility: f64) -> Result<Self> {
        if !(gamma0 > 0.0 && eps > 0.0 && mobility > 0.0) {
            return Err(Error::InvalidParam("gamma0, eps, mobility must be > 0".into()));
        }
        Ok(AllenCahnNoCurvature { gamma0, eps, mobility, eta: None, resolved_eta: 1e-9 })
    }

    pub fn with_grad_floor(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self.resolved_eta = eta;
        self
    }
}

impl Problem for AllenCahnNoCurvature {
    fn name(&self) -> &'static str {
        "allen-cahn-nocurv"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["phi".into()]
    }

    fn scratch_spec(&self) -> ScratchSpec {
        ScratchSpec { fields: 1, masks: 0 }
    }

    fn prepare(&mut self, _fields: &VoxelFields, ctx: &StencilContext) -> Result<()> {
        self.resolved_eta = self.eta.unwrap_or_else(|| default_grad_floor(&ctx.grid));
        Ok(())
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        _t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let phi = fields.field("phi")?;
        let rhs = &mut out[0];
        scratch.pad_a.fill(phi, &ctx.grid, &ctx.bc)?;
        let g_buf = &mut scratch.fields[0];
        normal_laplacian_from_padded(&scratch.pad_a, ctx, self.resolved_eta, g_buf, rhs)?;
        let (m, g0, eps) = (self.mobility, self.gamma0, self.eps);
        for (o, &p) in rhs.iter_mut().zip(phi) {
            *o = m * g0 * (2.0 * *o - double_well_slope(p, eps) / eps);
        }
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Laplacian { coef: 2.0 * self.mobility * self.gamma0 })
    }

    fn energy(
        &self,
        fields: &VoxelFields,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        work: &mut [f64],
    ) -> Option<f64> {
        let phi = fields.field("phi").ok()?;
        compute_energy_with(phi, self.gamma0, self.eps, ctx, &mut scratch.pad_a, work).ok()
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "gamma0" => self.gamma0 = value,
            "eps" => self.eps = value,
            "mobility" => self.mobility = value,
            _ => {
                return Err(Error::InvalidParam(format!(
                    "allen-cahn-nocurv has no parameter \"{name}\""
                )))
            }
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "gamma0" => Some(self.gamma0),
            "eps" => Some(self.eps),
            "mobility" => Some(self.mobility),
            "eta" => Some(self.resolved_eta),
            _ => None,
        }
    }
}

/// N-phase evolution as pairwise interactions,
/// `∂φ_α/∂t = -Σ_{β≠α} M_{αβ}/(ε Ñ) (δF/δφ_α - δF/δφ_β)`,
/// where `Ñ` counts the locally present phases and a pair only acts where
/// both of its phases are present (at the voxel or a stencil neighbor).
#[derive(Debug, Clone)]
pub struct MultiPhase {
    pub gamma0: f64,
    pub eps: f64,
    mobility: Vec<Vec<f64>>,
    n_phases: usize,
    pub presence_threshold: f64,
}

impl MultiPhase {
    pub fn new(gamma0: f64, eps: f64, mobility: Vec<Vec<f64>>) -> Result<Self> {
        let n = mobility.len();
        if n < 2 {
            return Err(Error::InvalidParam("multiphase needs at least 2 phases".into()));
        }
        if !(gamma0 > 0.0 && eps > 0.0) {
            return Err(Error::InvalidParam("gamma0 and eps must be > 0".into()));
        }
        for (a, row) in mobility.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidParam("mobility matrix must be square".into()));
            }
            for (b, &m) in row.iter().enumerate() {
                if m < 0.0 || !m.is_finite() {
                    return Err(Error::InvalidParam("mobilities must be finite and ≥ 0".into()));
                }
                if (m - mobility[b][a]).abs() > 0.0 {
                    return Err(Error::InvalidParam("mobility matrix must be symmetric".into()));
                }
                if a == b && m != 0.0 {
                    return Err(Error::InvalidParam("mobility diagonal must be zero".into()));
                }
            }
        }
        Ok(MultiPhase { gamma0, eps, mobility, n_phases: n, presence_threshold: 1e-6 })
    }

    pub fn n_phases(&self) -> usize {
        self.n_phases
    }

    pub fn phase_name(index: usize) -> String {
        format!("phi{index}")
    }
}

impl Problem for MultiPhase {
    fn name(&self) -> &'static str {
        "multiphase"
    }

    fn evolved(&self) -> Vec<String> {
        (0..self.n_phases).map(Self::phase_name).collect()
    }

    fn scratch_spec(&self) -> ScratchSpec {
        ScratchSpec { fields: self.n_phases, masks: self.n_phases }
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        _t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let grid = &ctx.grid;
        let n = self.n_phases;
        let thr = self.presence_threshold;

        // Per phase: presence mask (self or any stencil neighbor above the
        // threshold) and the functional derivative δF/δφ.
        for alpha in 0..n {
            let phi = fields.field(&Self::phase_name(alpha))?;
            scratch.pad_a.fill(phi, grid, &ctx.bc)?;
            let pstr = scratch.pad_a.strides();
            let mask = &mut scratch.masks[alpha];
            let pdata = scratch.pad_a.data();
            let [nx, ny, nz] = grid.dims;
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let pid = scratch.pad_a.interior_index(i, j, k);
                        let mut present = pdata[pid] > thr;
                        for ax in 0..3 {
                            if grid.simulated(ax) {
                                present = present
                                    || pdata[pid + pstr[ax]] > thr
                                    || pdata[pid - pstr[ax]] > thr;
                            }
                        }
                        mask[grid.index(i, j, k)] = present as u8;
                    }
                }
            }
            let df = &mut scratch.fields[alpha];
            divergence_accum(&FaceCoef::Const(1.0), &scratch.pad_a, ctx, Accum::Set, df);
            for (d, &p) in df.iter_mut().zip(phi) {
                *d = self.gamma0 * double_well_slope(p, self.eps) - 2.0 * self.gamma0 * self.eps * *d;
            }
        }

        for rhs in out.iter_mut() {
            rhs.fill(0.0);
        }
        let cells = grid.len();
        for idx in 0..cells {
            let ntilde = (0..n).filter(|&g| scratch.masks[g][idx] != 0).count();
            if ntilde < 2 {
                continue;
            }
            let scale = 1.0 / (self.eps * ntilde as f64);
            for alpha in 0..n {
                if scratch.masks[alpha][idx] == 0 {
                    continue;
                }
                let mut acc = 0.0;
                for beta in 0..n {
                    if beta == alpha || scratch.masks[beta][idx] == 0 {
                        continue;
                    }
                    acc -= self.mobility[alpha][beta]
                        * scale
                        * (scratch.fields[alpha][idx] - scratch.fields[beta][idx]);
                }
                out[alpha][idx] = acc;
            }
        }
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        // One shared stabilizer for all phases: identical prefactors keep the
        // pointwise partition sum exact under spectral stepping.
        let max_row: f64 = self
            .mobility
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .fold(0.0, f64::max);
        Some(SymbolKind::Laplacian { coef: self.gamma0 * max_row })
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "gamma0" => self.gamma0 = value,
            "eps" => self.eps = value,
            _ => return Err(Error::InvalidParam(format!("multiphase has no parameter \"{name}\""))),
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "gamma0" => Some(self.gamma0),
            "eps" => Some(self.eps),
            _ => None,
        }
    }
}
