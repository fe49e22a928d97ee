//! The PDE catalog.
//!
//! A [`Problem`] packages parameters, the right-hand-side evaluator over
//! named fields, the stabilizer it declares for spectral stepping, and its
//! diagnostics (mass, free energy). The runner owns the scratch buffers a
//! problem asks for through [`ScratchSpec`], so repeated evaluations never
//! allocate.

mod phase_field;
mod transport;

pub use phase_field::{
    chemical_potential, chemical_potential_into, compute_energy, compute_energy_with, AllenCahn,
    AllenCahnNoCurvature, CahnHilliard, MultiPhase,
};
pub use transport::{BoundaryFlux, Diffusion, GrayScott, MuDiffusion, SmoothedBoundary};

use crate::error::{Error, Result};
use crate::ghost::Padded;
use crate::grid::{GridSpec, VoxelFields};
use crate::spectral::{SpectralSymbol, SymbolKind, TransformPlan, WavenumberMode};
use crate::stencil::StencilContext;
use std::sync::Arc;

/// Optional source/sink hook `f`, always evaluated explicitly at `t_n`.
#[derive(Clone)]
pub enum Forcing {
    None,
    Constant(f64),
    /// Per-voxel values.
    Field(Vec<f64>),
    /// Pointwise `f(state, t)`.
    OfState(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// `f(x, t)` at cell centers (manufactured solutions).
    SpaceTime(Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::None => write!(f, "Forcing::None"),
            Forcing::Constant(c) => write!(f, "Forcing::Constant({c})"),
            Forcing::Field(_) => write!(f, "Forcing::Field(..)"),
            Forcing::OfState(_) => write!(f, "Forcing::OfState(..)"),
            Forcing::SpaceTime(_) => write!(f, "Forcing::SpaceTime(..)"),
        }
    }
}

impl Forcing {
    pub fn is_none(&self) -> bool {
        matches!(self, Forcing::None)
    }

    /// `out[i] += f_i`.
    pub fn add_to(&self, out: &mut [f64], state: &[f64], grid: &GridSpec, t: f64) {
        match self {
            Forcing::None => {}
            Forcing::Constant(c) => {
                for v in out.iter_mut() {
                    *v += c;
                }
            }
            Forcing::Field(f) => {
                for (v, fv) in out.iter_mut().zip(f) {
                    *v += fv;
                }
            }
            Forcing::OfState(f) => {
                for (v, s) in out.iter_mut().zip(state) {
                    *v += f(*s, t);
                }
            }
            Forcing::SpaceTime(f) => {
                let [nx, ny, nz] = grid.dims;
                let mut idx = 0;
                for k in 0..nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            out[idx] += f(grid.cell_center(i, j, k), t);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }

    /// `out[i] += w_i * f_i` (indicator-weighted forcing).
    pub fn add_weighted(&self, out: &mut [f64], weight: &[f64], state: &[f64], grid: &GridSpec, t: f64) {
        match self {
            Forcing::None => {}
            Forcing::Constant(c) => {
                for (v, w) in out.iter_mut().zip(weight) {
                    *v += w * c;
                }
            }
            Forcing::Field(f) => {
                for ((v, w), fv) in out.iter_mut().zip(weight).zip(f) {
                    *v += w * fv;
                }
            }
            Forcing::OfState(f) => {
                for ((v, w), s) in out.iter_mut().zip(weight).zip(state) {
                    *v += w * f(*s, t);
                }
            }
            Forcing::SpaceTime(f) => {
                let [nx, ny, nz] = grid.dims;
                let mut idx = 0;
                for k in 0..nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            out[idx] += weight[idx] * f(grid.cell_center(i, j, k), t);
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

/// A transport coefficient: constant, a named static field, or a pointwise
/// function of the evolved state.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    FieldRef(String),
    OfState(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Coefficient::Constant({c})"),
            Coefficient::FieldRef(n) => write!(f, "Coefficient::FieldRef({n:?})"),
            Coefficient::OfState(_) => write!(f, "Coefficient::OfState(..)"),
        }
    }
}

/// Scratch buffers a problem evaluation may use, owned by the runner.
pub struct Scratch {
    pub pad_a: Padded,
    pub fields: Vec<Vec<f64>>,
    pub masks: Vec<Vec<u8>>,
}

impl Scratch {
    pub fn for_problem(problem: &dyn Problem, grid: &GridSpec) -> Self {
        let spec = problem.scratch_spec();
        Scratch {
            pad_a: Padded::for_grid(grid),
            fields: (0..spec.fields).map(|_| vec![0.0; grid.len()]).collect(),
            masks: (0..spec.masks).map(|_| vec![0u8; grid.len()]).collect(),
        }
    }

    pub fn bytes(&self) -> usize {
        self.pad_a.bytes()
            + self.fields.iter().map(|f| f.capacity() * 8).sum::<usize>()
            + self.masks.iter().map(|m| m.capacity()).sum::<usize>()
    }
}

/// How much scratch a problem wants (field-sized arrays, presence masks).
#[derive(Debug, Clone, Copy, Default)]
pub struct ScratchSpec {
    pub fields: usize,
    pub masks: usize,
}

/// A PDE problem: fields, right-hand side, stabilizer and diagnostics.
pub trait Problem: Send {
    fn name(&self) -> &'static str;

    /// Names of the evolved fields, in evaluation order.
    fn evolved(&self) -> Vec<String>;

    /// All fields the problem reads (evolved plus static ones).
    fn required(&self) -> Vec<String> {
        self.evolved()
    }

    fn scratch_spec(&self) -> ScratchSpec {
        ScratchSpec::default()
    }

    /// One-time validation and derived-parameter resolution against the
    /// initial fields. Called by the runner before the first step and before
    /// symbols are built.
    fn prepare(&mut self, _fields: &VoxelFields, _ctx: &StencilContext) -> Result<()> {
        Ok(())
    }

    /// Writes the right-hand side of every evolved field into `out`.
    fn eval_rhs(
        &self,
        fields: &VoxelFields,
        t: f64,
        ctx: &StencilContext,
        scratch: &mut Scratch,
        out: &mut [Vec<f64>],
    ) -> Result<()>;

    /// Stabilizer declared for evolved field `field_index`, if spectral
    /// stepping is supported. Meaningful after [`Problem::prepare`].
    fn symbol_kind(&self, field_index: usize) -> Option<SymbolKind>;

    /// Free energy of the current state, when the problem defines one.
    /// `work` is a field-sized buffer lent by the caller.
    fn energy(
        &self,
        _fields: &VoxelFields,
        _ctx: &StencilContext,
        _scratch: &mut Scratch,
        _work: &mut [f64],
    ) -> Option<f64> {
        None
    }

    /// Bytes of problem-owned persistent buffers (precomputed fields).
    fn persistent_bytes(&self) -> usize {
        0
    }

    /// Named-scalar access for parameter fitting.
    fn set_param(&mut self, name: &str, _value: f64) -> Result<()> {
        Err(Error::InvalidParam(format!("{} has no parameter \"{name}\"", self.name())))
    }

    fn param(&self, _name: &str) -> Option<f64> {
        None
    }
}

/// Stabilizing symbol for one evolved field of a prepared problem, or the
/// error pointing at explicit Euler when none is declared.
pub fn build_symbol(
    problem: &dyn Problem,
    field_index: usize,
    plan: &TransformPlan,
    mode: WavenumberMode,
) -> Result<SpectralSymbol> {
    match problem.symbol_kind(field_index) {
        Some(kind) => SpectralSymbol::build(kind, plan, mode),
        None => Err(Error::NoSymbol(problem.name().to_string())),
    }
}

/// Volume integral of a field, `Σ f h³`, with deterministic pairwise summation.
pub fn compute_mass(field: &[f64], grid: &GridSpec) -> f64 {
    crate::pairwise_sum(field) * grid.cell_volume()
}

/// Double-well derivative `g(φ) = (18/ε) φ (1-φ) (1-2φ)`.
#[inline]
pub(crate) fn double_well_slope(phi: f64, eps: f64) -> f64 {
    (18.0 / eps) * phi * (1.0 - phi) * (1.0 - 2.0 * phi)
}
