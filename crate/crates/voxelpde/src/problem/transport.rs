//! Reaction-diffusion and smoothed-boundary transport problems.

use super::{Coefficient, Forcing, Problem, Scratch, ScratchSpec};
use crate::error::{Error, Result};
use crate::grid::VoxelFields;
use crate::spectral::SymbolKind;
use crate::stencil::{divergence_accum, grad_norm, Accum, FaceCoef, StencilContext};

fn coefficient_face<'a>(
    coef: &'a Coefficient,
    fields: &'a VoxelFields,
    state: &'a [f64],
) -> Result<FaceCoef<'a>> {
    Ok(match coef {
        Coefficient::Constant(c) => FaceCoef::Const(*c),
        Coefficient::FieldRef(name) => FaceCoef::Field(fields.field(name)?),
        Coefficient::OfState(f) => FaceCoef::Map(state, f.as_ref()),
    })
}

fn validate_coefficient(coef: &Coefficient, fields: &VoxelFields, state: &[f64]) -> Result<()> {
    let bad = |what: &str| Error::InvalidParam(format!("diffusivity {what} must be finite and ≥ 0"));
    match coef {
        Coefficient::Constant(c) => {
            if *c < 0.0 || !c.is_finite() {
                return Err(bad("constant"));
            }
        }
        Coefficient::FieldRef(name) => {
            if fields.field(name)?.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                return Err(bad(&format!("field \"{name}\"")));
            }
        }
        Coefficient::OfState(f) => {
            if state.iter().any(|&s| {
                let v = f(s);
                v < 0.0 || !v.is_finite()
            }) {
                return Err(bad("law evaluated on the initial state"));
            }
        }
    }
    Ok(())
}

/// Fickian reaction-diffusion, `∂c/∂t = ∇·(D ∇c) + f(c, t)`.
#[derive(Debug, Clone)]
pub struct Diffusion {
    pub diffusivity: Coefficient,
    /// Bulk scale entering the stabilizer `S = -D0 k²`.
    pub d0: f64,
    pub forcing: Forcing,
}

impl Diffusion {
    /// Constant-diffusivity problem; the stabilizer scale is the diffusivity.
    pub fn constant(d: f64) -> Result<Self> {
        Self::new(Coefficient::Constant(d), d)
    }

    pub fn new(diffusivity: Coefficient, d0: f64) -> Result<Self> {
        if !(d0 > 0.0) || !d0.is_finite() {
            return Err(Error::InvalidParam("stabilizer scale d0 must be > 0".into()));
        }
        if let Coefficient::Constant(c) = &diffusivity {
            if *c < 0.0 || !c.is_finite() {
                return Err(Error::InvalidParam("diffusivity must be finite and ≥ 0".into()));
            }
        }
        Ok(Diffusion { diffusivity, d0, forcing: Forcing::None })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }
}

impl Problem for Diffusion {
    fn name(&self) -> &'static str {
        "diffusion"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["c".into()]
    }

    fn required(&self) -> Vec<String> {
        let mut names = self.evolved();
        if let Coefficient::FieldRef(name) = &self.diffusivity {
            names.push(name.clone());
        }
        names
    }

    fn prepare(&mut self, fields: &VoxelFields, _ctx: &StencilContext) -> Result<()> {
        validate_coefficient(&self.diffusivity, fields, fields.field("c")?)
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let c = fields.field("c")?;
        let rhs = &mut out[0];
        scratch.pad_a.fill(c, &ctx.grid, &ctx.bc)?;
        let gamma = coefficient_face(&self.diffusivity, fields, c)?;
        divergence_accum(&gamma, &scratch.pad_a, ctx, Accum::Set, rhs);
        self.forcing.add_to(rhs, c, &ctx.grid, t);
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Laplacian { coef: self.d0 })
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "d" => {
                self.diffusivity = Coefficient::Constant(value);
                self.d0 = value;
            }
            "d0" => self.d0 = value,
            _ => return Err(Error::InvalidParam(format!("diffusion has no parameter \"{name}\""))),
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match (name, &self.diffusivity) {
            ("d", Coefficient::Constant(c)) => Some(*c),
            ("d0", _) => Some(self.d0),
            _ => None,
        }
    }
}

/// Chemical-potential-driven diffusion, `∂c/∂t = ∇·(M ∇μ(c)) + f(c, t)`,
/// with a caller-supplied potential law `μ(c)` and a bound on `∂μ/∂c` for
/// the stabilizer scale.
pub struct MuDiffusion {
    pub mobility: Coefficient,
    pub mu: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Upper bound on `∂μ/∂c` over the expected state range.
    pub dmu_max: f64,
    /// Mobility scale entering the stabilizer `S = -m0 dmu_max k²`.
    pub m0: f64,
    pub forcing: Forcing,
}

impl MuDiffusion {
    pub fn new(
        mobility: Coefficient,
        mu: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        dmu_max: f64,
        m0: f64,
    ) -> Result<Self> {
        if !(dmu_max > 0.0 && m0 > 0.0) {
            return Err(Error::InvalidParam("dmu_max and m0 must be > 0".into()));
        }
        Ok(MuDiffusion { mobility, mu, dmu_max, m0, forcing: Forcing::None })
    }
}

impl Problem for MuDiffusion {
    fn name(&self) -> &'static str {
        "mu-diffusion"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["c".into()]
    }

    fn required(&self) -> Vec<String> {
        let mut names = self.evolved();
        if let Coefficient::FieldRef(name) = &self.mobility {
            names.push(name.clone());
        }
        names
    }

    fn scratch_spec(&self) -> ScratchSpec {
        ScratchSpec { fields: 1, masks: 0 }
    }

    fn prepare(&mut self, fields: &VoxelFields, _ctx: &StencilContext) -> Result<()> {
        validate_coefficient(&self.mobility, fields, fields.field("c")?)
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let c = fields.field("c")?;
        let mu_field = &mut scratch.fields[0];
        for (m, &v) in mu_field.iter_mut().zip(c) {
            *m = (self.mu)(v);
        }
        scratch.pad_a.fill(mu_field, &ctx.grid, &ctx.bc)?;
        let gamma = coefficient_face(&self.mobility, fields, c)?;
        let rhs = &mut out[0];
        divergence_accum(&gamma, &scratch.pad_a, ctx, Accum::Set, rhs);
        self.forcing.add_to(rhs, c, &ctx.grid, t);
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Laplacian { coef: self.m0 * self.dmu_max })
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m0" => self.m0 = value,
            "dmu_max" => self.dmu_max = value,
            _ => {
                return Err(Error::InvalidParam(format!("mu-diffusion has no parameter \"{name}\"")))
            }
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "m0" => Some(self.m0),
            "dmu_max" => Some(self.dmu_max),
            _ => None,
        }
    }
}

/// Two-species Gray-Scott kinetics:
/// `∂a/∂t = D_A ∇²a - a b² + f (1 - a)`,
/// `∂b/∂t = D_B ∇²b + a b² - k b`.
#[derive(Debug, Clone)]
pub struct GrayScott {
    pub d_a: f64,
    pub d_b: f64,
    pub feed: f64,
    pub kill: f64,
}

impl GrayScott {
    pub fn new(d_a: f64, d_b: f64, feed: f64, kill: f64) -> Result<Self> {
        if d_a < 0.0 || d_b < 0.0 {
            return Err(Error::InvalidParam("diffusivities must be ≥ 0".into()));
        }
        Ok(GrayScott { d_a, d_b, feed, kill })
    }
}

impl Problem for GrayScott {
    fn name(&self) -> &'static str {
        "gray-scott"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        _t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        let a = fields.field("a")?;
        let b = fields.field("b")?;
        let [rhs_a, rhs_b] = out else {
            return Err(Error::InvalidParam("gray-scott expects two output buffers".into()));
        };
        scratch.pad_a.fill(a, &ctx.grid, &ctx.bc)?;
        divergence_accum(&FaceCoef::Const(self.d_a), &scratch.pad_a, ctx, Accum::Set, rhs_a);
        scratch.pad_a.fill(b, &ctx.grid, &ctx.bc)?;
        divergence_accum(&FaceCoef::Const(self.d_b), &scratch.pad_a, ctx, Accum::Set, rhs_b);
        for i in 0..a.len() {
            let reaction = a[i] * b[i] * b[i];
            rhs_a[i] += -reaction + self.feed * (1.0 - a[i]);
            rhs_b[i] += reaction - self.kill * b[i];
        }
        Ok(())
    }

    fn symbol_kind(&self, field_index: usize) -> Option<SymbolKind> {
        let coef = if field_index == 0 { self.d_a } else { self.d_b };
        Some(SymbolKind::Laplacian { coef })
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "d_a" => self.d_a = value,
            "d_b" => self.d_b = value,
            "feed" => self.feed = value,
            "kill" => self.kill = value,
            _ => return Err(Error::InvalidParam(format!("gray-scott has no parameter \"{name}\""))),
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match name {
            "d_a" => Some(self.d_a),
            "d_b" => Some(self.d_b),
            "feed" => Some(self.feed),
            "kill" => Some(self.kill),
            _ => None,
        }
    }
}

/// Boundary flux entering the smoothed-boundary source term `|∇ψ| j_N`.
#[derive(Debug, Clone)]
pub enum BoundaryFlux {
    Constant(f64),
    FieldRef(String),
}

/// Diffusion confined to a microstructure by a static indicator `ψ ∈ [0,1]`,
/// evolved in the product variable `z = ψ c`:
///
/// `∂z/∂t = ∇·(D ∇z) - ∇·(D z/max(ψ,ψ_min) ∇ψ) + |∇ψ| j_N + ψ f(c, t)`.
///
/// Both divergences share the conservative face discretization; the second
/// face-averages the full coefficient `D z / ψ`. With `ψ ≡ 1` the problem
/// reduces exactly to [`Diffusion`].
pub struct SmoothedBoundary {
    pub diffusivity: Coefficient,
    pub d0: f64,
    pub psi_field: String,
    pub boundary_flux: BoundaryFlux,
    pub psi_min: f64,
    pub forcing: Forcing,
    grad_psi: Vec<f64>,
}

impl SmoothedBoundary {
    pub fn new(diffusivity: Coefficient, d0: f64, psi_field: &str) -> Result<Self> {
        if !(d0 > 0.0) {
            return Err(Error::InvalidParam("stabilizer scale d0 must be > 0".into()));
        }
        if matches!(diffusivity, Coefficient::OfState(_)) {
            return Err(Error::InvalidParam(
                "smoothed-boundary diffusivity must be a constant or a static field".into(),
            ));
        }
        Ok(SmoothedBoundary {
            diffusivity,
            d0,
            psi_field: psi_field.to_string(),
            boundary_flux: BoundaryFlux::Constant(0.0),
            psi_min: 1e-6,
            forcing: Forcing::None,
        grad_psi: Vec::new(),
        })
    }

    pub fn with_boundary_flux(mut self, flux: BoundaryFlux) -> Self {
        self.boundary_flux = flux;
        self
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    #[inline]
    fn diffusivity_at(&self, fields: &VoxelFields, idx: usize) -> f64 {
        match &self.diffusivity {
            Coefficient::Constant(c) => *c,
            Coefficient::FieldRef(name) => fields.field(name).map(|f| f[idx]).unwrap_or(0.0),
            Coefficient::OfState(_) => unreachable!("rejected at construction"),
        }
    }
}

impl Problem for SmoothedBoundary {
    fn name(&self) -> &'static str {
        "smoothed-boundary"
    }

    fn evolved(&self) -> Vec<String> {
        vec!["z".into()]
    }

    fn required(&self) -> Vec<String> {
        let mut names = vec!["z".into(), self.psi_field.clone()];
        if let Coefficient::FieldRef(name) = &self.diffusivity {
            names.push(name.clone());
        }
        if let BoundaryFlux::FieldRef(name) = &self.boundary_flux {
            names.push(name.clone());
        }
        names
    }

    fn scratch_spec(&self) -> ScratchSpec {
        ScratchSpec { fields: 1, masks: 0 }
    }

    fn prepare(&mut self, fields: &VoxelFields, ctx: &StencilContext) -> Result<()> {
        let psi = fields.field(&self.psi_field)?;
        if psi.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidParam(format!(
                "indicator field \"{}\" must lie in [0, 1]",
                self.psi_field
            )));
        }
        validate_coefficient(&self.diffusivity, fields, fields.field("z")?)?;
        // The indicator is static over a run; its gradient magnitude is
        // precomputed once.
        self.grad_psi = grad_norm(psi, ctx)?;
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
        let z = fields.field("z")?;
        let psi = fields.field(&self.psi_field)?;
        let rhs = &mut out[0];

        scratch.pad_a.fill(z, &ctx.grid, &ctx.bc)?;
        let gamma = coefficient_face(&self.diffusivity, fields, z)?;
        divergence_accum(&gamma, &scratch.pad_a, ctx, Accum::Set, rhs);

        // Counter-gradient term, face-averaged like the first divergence.
        // The coefficient can change sign with z, so it bypasses div_flux.
        let coef = &mut scratch.fields[0];
        for i in 0..z.len() {
            coef[i] = self.diffusivity_at(fields, i) * z[i] / psi[i].max(self.psi_min);
        }
        scratch.pad_a.fill(psi, &ctx.grid, &ctx.bc)?;
        divergence_accum(&FaceCoef::Field(coef), &scratch.pad_a, ctx, Accum::Sub, rhs);

        debug_assert_eq!(self.grad_psi.len(), z.len(), "prepare() not called");
        match &self.boundary_flux {
            BoundaryFlux::Constant(j) => {
                if *j != 0.0 {
                    for (r, g) in rhs.iter_mut().zip(&self.grad_psi) {
                        *r += g * j;
                    }
                }
            }
            BoundaryFlux::FieldRef(name) => {
                let j = fields.field(name)?;
                for ((r, g), jv) in rhs.iter_mut().zip(&self.grad_psi).zip(j) {
                    *r += g * jv;
                }
            }
        }

        if !self.forcing.is_none() {
            // Forcing acts on the physical concentration c = z / ψ and is
            // weighted by the indicator.
            let c_state = &mut scratch.fields[0];
            for i in 0..z.len() {
                c_state[i] = z[i] / psi[i].max(self.psi_min);
            }
            self.forcing.add_weighted(rhs, psi, c_state, &ctx.grid, t);
        }
        Ok(())
    }

    fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
        Some(SymbolKind::Laplacian { coef: self.d0 })
    }

    fn persistent_bytes(&self) -> usize {
        self.grad_psi.capacity() * 8
    }

    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "d" => {
                self.diffusivity = Coefficient::Constant(value);
                self.d0 = value;
            }
            "d0" => self.d0 = value,
            "psi_min" => self.psi_min = value,
            _ => {
                return Err(Error::InvalidParam(format!(
                    "smoothed-boundary has no parameter \"{name}\""
                )))
            }
        }
        Ok(())
    }

    fn param(&self, name: &str) -> Option<f64> {
        match (name, &self.diffusivity) {
            ("d", Coefficient::Constant(c)) => Some(*c),
            ("d0", _) => Some(self.d0),
            ("psi_min", _) => Some(self.psi_min),
            _ => None,
        }
    }
}
