//! Time integration engines and the simulation runner.
//!
//! Three steppers share one contract: evaluate the problem's right-hand side
//! explicitly at `t_n`, then update in place.
//!
//! * explicit Euler — `u += dt * rhs`;
//! * IMEX — `u += F⁻¹[ dt/(1 - dt S) F[rhs] ]`, the semi-implicit Fourier
//!   spectral scheme; with the modified-FD symbol this equals implicit Euler
//!   on the discrete linear part;
//! * ETD1 — `û' = e^{dt S} û + dt φ1(dt S)(F[rhs] - S û)`, first-order
//!   exponential time differencing on the same splitting.
//!
//! The runner owns every buffer a run needs (right-hand sides, ghost padding,
//! transform workspace), allocates them once up front, and reports their
//! measured bytes in the run metrics; no per-step allocation happens.

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, VoxelFields};
use crate::problem::{build_symbol, compute_mass, Problem, Scratch};
use crate::spectral::{CoeffData, SpectralCoeffs, SpectralSymbol, TransformPlan, TransformScratch, WavenumberMode};
use crate::stencil::StencilContext;
use std::time::Instant;

/// Time integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepperKind {
    Euler,
    Imex,
    Etd1,
}

impl StepperKind {
    pub fn is_spectral(self) -> bool {
        !matches!(self, StepperKind::Euler)
    }
}

/// Stepper selection plus run length and sampling cadence.
#[derive(Debug, Clone, Copy)]
pub struct StepperSpec {
    pub kind: StepperKind,
    pub dt: f64,
    pub steps: usize,
    /// Metrics/callback cadence in steps (0 treated as 1); the initial state
    /// and the final step are always sampled.
    pub sample_every: usize,
}

impl StepperSpec {
    pub fn new(kind: StepperKind, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParam(format!("stepper.dt must be > 0, got {dt}")));
        }
        Ok(StepperSpec { kind, dt, steps, sample_every: 1 })
    }

    pub fn with_sampling(mut self, every: usize) -> Self {
        self.sample_every = every;
        self
    }
}

/// One sampled row of run diagnostics.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub step: usize,
    pub t: f64,
    /// Volume integral per evolved field.
    pub mass: Vec<f64>,
    pub energy: Option<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub wall_ms: f64,
}

/// Diagnostics time series plus measured buffer accounting.
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub evolved: Vec<String>,
    pub rows: Vec<MetricsRow>,
    /// Bytes of every buffer the run held, measured at allocation.
    pub peak_field_bytes: usize,
    pub mem_breakdown: Vec<(String, usize)>,
}

/// Run failure; a NaN abort preserves the metrics collected so far.
#[derive(Debug)]
pub enum RunError {
    NanAbort { step: usize, metrics: Box<RunMetrics> },
    Setup(Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::NanAbort { step, .. } => {
                write!(f, "non-finite field values detected at step {step}")
            }
            RunError::Setup(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Setup(e)
    }
}

/// Measured allocation ledger for one run.
#[derive(Debug, Default, Clone)]
pub struct MemLedger {
    entries: Vec<(String, usize)>,
}

impl MemLedger {
    pub fn add(&mut self, label: &str, bytes: usize) {
        self.entries.push((label.to_string(), bytes));
    }

    pub fn total(&self) -> usize {
        self.entries.iter().map(|(_, b)| b).sum()
    }

    pub fn entries(&self) -> &[(String, usize)] {
        &self.entries
    }
}

/// Field-sized allocation that reports failure instead of aborting.
pub fn try_alloc_field(len: usize) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = Vec::new();
    v.try_reserve_exact(len).map_err(|_| Error::Alloc { bytes: len * 8 })?;
    v.resize(len, 0.0);
    Ok(v)
}

/// `u += dt * rhs`, in place.
pub fn euler_step(u: &mut [f64], rhs: &[f64], dt: f64) {
    for (x, r) in u.iter_mut().zip(rhs) {
        *x += dt * r;
    }
}

/// IMEX prefactor `dt / (1 - dt S)` per mode; `S ≤ 0` keeps it in `(0, dt]`.
pub fn imex_prefactor(symbol: &SpectralSymbol, dt: f64) -> Vec<f64> {
    symbol.values.iter().map(|&s| dt / (1.0 - dt * s)).collect()
}

/// ETD1 factors: modal decay `e^{dt S}` and `dt φ1(dt S)`.
pub fn etd1_factors(symbol: &SpectralSymbol, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let decay = symbol.values.iter().map(|&s| (dt * s).exp()).collect();
    let phi1dt = symbol.values.iter().map(|&s| dt * phi1(dt * s)).collect();
    (decay, phi1dt)
}

/// `φ1(z) = (e^z - 1)/z`, series branch near zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

/// Combines ETD1 terms in transform space:
/// `result = decay û + phi1dt (r̂ - S û)`, written over `rhat`.
fn etd1_combine(
    uhat: &SpectralCoeffs,
    rhat: &mut SpectralCoeffs,
    decay: &[f64],
    phi1dt: &[f64],
    symbol: &[f64],
) {
    match (&uhat.data, &mut rhat.data) {
        (CoeffData::Real(u), CoeffData::Real(r)) => {
            for m in 0..u.len() {
                r[m] = decay[m] * u[m] + phi1dt[m] * (r[m] - symbol[m] * u[m]);
            }
        }
        (CoeffData::Complex(u), CoeffData::Complex(r)) => {
            for m in 0..u.len() {
                r[m] = decay[m] * u[m] + phi1dt[m] * (r[m] - symbol[m] * u[m]);
            }
        }
        _ => panic!("mismatched coefficient layouts"),
    }
}

/// One standalone IMEX step (allocates its own workspace; the runner uses
/// preallocated buffers instead).
pub fn imex_step(
    plan: &TransformPlan,
    symbol: &SpectralSymbol,
    dt: f64,
    u: &mut [f64],
    rhs: &[f64],
) {
    let pref = imex_prefactor(symbol, dt);
    let mut coeffs = plan.make_coeffs();
    let mut ws = plan.make_scratch();
    let mut delta = vec![0.0; u.len()];
    plan.forward(rhs, &mut coeffs, &mut ws);
    coeffs.scale_by(&pref);
    plan.inverse(&mut coeffs, &mut delta, &mut ws);
    euler_step(u, &delta, 1.0);
}

/// One standalone ETD1 step (allocating; see [`imex_step`]).
pub fn etd1_step(
    plan: &TransformPlan,
    symbol: &SpectralSymbol,
    dt: f64,
    u: &mut [f64],
    rhs: &[f64],
) {
    let (decay, phi1dt) = etd1_factors(symbol, dt);
    let mut uhat = plan.make_coeffs();
    let mut rhat = plan.make_coeffs();
    let mut ws = plan.make_scratch();
    plan.forward(u, &mut uhat, &mut ws);
    plan.forward(rhs, &mut rhat, &mut ws);
    etd1_combine(&uhat, &mut rhat, &decay, &phi1dt, &symbol.values);
    plan.inverse(&mut rhat, u, &mut ws);
}

/// Options beyond the stepper spec itself.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub wavenumber_mode: WavenumberMode,
    /// Abort when a field grows by this factor over its initial magnitude.
    /// Degenerate mobilities can freeze a diverged state at large finite
    /// values without ever reaching Inf/NaN; the guard fails those runs
    /// loudly too. `None` disables it.
    pub divergence_factor: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { wavenumber_mode: WavenumberMode::ModifiedFd, divergence_factor: Some(1e6) }
    }
}

struct SpectralEngine {
    plan: TransformPlan,
    ws: TransformScratch,
    coeffs: SpectralCoeffs,
    /// Second coefficient buffer, ETD1 only.
    coeffs_u: Option<SpectralCoeffs>,
    /// Per evolved field.
    prefactor: Vec<Vec<f64>>,
    decay: Vec<Vec<f64>>,
    phi1dt: Vec<Vec<f64>>,
    symbols: Vec<Vec<f64>>,
}

/// Advances `fields` by `spec.steps` steps of `problem` under `bc`.
///
/// The callback receives `(step, t, fields)` read-only after every step (and
/// once for the initial state); field dumps at a cadence are the caller's
/// filter. On a non-finite field value the run aborts, preserving metrics.
pub fn run(
    problem: &mut dyn Problem,
    fields: &mut VoxelFields,
    bc: &BoundarySpec,
    spec: &StepperSpec,
    opts: &RunOptions,
    mut callback: Option<&mut dyn FnMut(usize, f64, &VoxelFields)>,
) -> std::result::Result<RunMetrics, RunError> {
    let start = Instant::now();
    let grid = *fields.grid();
    let ctx = StencilContext::new(grid, *bc).map_err(RunError::Setup)?;
    if !(spec.dt > 0.0) {
        return Err(RunError::Setup(Error::InvalidParam("stepper.dt must be > 0".into())));
    }
    let evolved = problem.evolved();
    for name in problem.required() {
        if !fields.contains(&name) {
            return Err(RunError::Setup(Error::NoSuchField(name)));
        }
    }
    problem.prepare(fields, &ctx)?;

    let mut ledger = MemLedger::default();
    ledger.add("fields", fields.field_bytes());
    ledger.add("problem.persistent", problem.persistent_bytes());

    let mut scratch = Scratch::for_problem(problem, &grid);
    ledger.add("scratch", scratch.bytes());

    let n = grid.len();
    let mut rhs_bufs: Vec<Vec<f64>> = Vec::with_capacity(evolved.len());
    for _ in 0..evolved.len() {
        rhs_bufs.push(try_alloc_field(n)?);
    }
    ledger.add("rhs", rhs_bufs.iter().map(|b| b.capacity() * 8).sum());

    let mut engine = match spec.kind {
        StepperKind::Euler => None,
        kind => {
            let plan = TransformPlan::new(&grid, bc)?;
            let ws = plan.make_scratch();
            let coeffs = plan.make_coeffs();
            let coeffs_u = (kind == StepperKind::Etd1).then(|| plan.make_coeffs());
            let mut prefactor = Vec::new();
            let mut decay = Vec::new();
            let mut phi1dt = Vec::new();
            let mut symbols = Vec::new();
            for i in 0..evolved.len() {
                let sym = build_symbol(problem, i, &plan, opts.wavenumber_mode)?;
                match kind {
                    StepperKind::Imex => prefactor.push(imex_prefactor(&sym, spec.dt)),
                    StepperKind::Etd1 => {
                        let (d, p) = etd1_factors(&sym, spec.dt);
                        decay.push(d);
                        phi1dt.push(p);
                    }
                    StepperKind::Euler => unreachable!(),
                }
                symbols.push(sym.values);
            }
            let mut bytes = ws.bytes() + coeffs.bytes();
            bytes += coeffs_u.as_ref().map_or(0, |c| c.bytes());
            for v in prefactor.iter().chain(&decay).chain(&phi1dt).chain(&symbols) {
                bytes += v.capacity() * 8;
            }
            ledger.add("transform", bytes);
            Some(SpectralEngine { plan, ws, coeffs, coeffs_u, prefactor, decay, phi1dt, symbols })
        }
    };

    let mut metrics = RunMetrics {
        evolved: evolved.clone(),
        rows: Vec::new(),
        peak_field_bytes: ledger.total(),
        mem_breakdown: ledger.entries().to_vec(),
    };

    let blowup_bound = opts.divergence_factor.map(|factor| {
        let mut m0 = 0.0f64;
        for name in &evolved {
            let (lo, hi) = min_max(fields.field(name).expect("checked above"));
            m0 = m0.max(lo.abs()).max(hi.abs());
        }
        factor * (1.0 + m0)
    });

    let cadence = spec.sample_every.max(1);
    let sample = |problem: &dyn Problem,
                  fields: &VoxelFields,
                  scratch: &mut Scratch,
                  work: &mut [f64],
                  step: usize,
                  t: f64,
                  start: &Instant,
                  ranges: Option<&[(f64, f64)]>|
     -> MetricsRow {
        let mut mass = Vec::with_capacity(evolved.len());
        let mut mins = Vec::with_capacity(evolved.len());
        let mut maxs = Vec::with_capacity(evolved.len());
        for (i, name) in evolved.iter().enumerate() {
            let f = fields.field(name).expect("evolved field present");
            mass.push(compute_mass(f, &grid));
            match ranges {
                Some(r) => {
                    mins.push(r[i].0);
                    maxs.push(r[i].1);
                }
                None => {
                    let (lo, hi) = min_max(f);
                    mins.push(lo);
                    maxs.push(hi);
                }
            }
        }
        let energy = problem.energy(fields, &ctx, scratch, work);
        MetricsRow {
            step,
            t,
            mass,
            energy,
            min: mins,
            max: maxs,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    };

    // Initial sample and callback.
    {
        let (head, _) = rhs_bufs.split_at_mut(1);
        metrics.rows.push(sample(problem, fields, &mut scratch, &mut head[0], 0, 0.0, &start, None));
    }
    if let Some(cb) = callback.as_deref_mut() {
        cb(0, 0.0, fields);
    }

    for step in 1..=spec.steps {
        let t_n = (step - 1) as f64 * spec.dt;
        problem.eval_rhs(fields, t_n, &ctx, &mut scratch, &mut rhs_bufs)?;

        match (spec.kind, engine.as_mut()) {
            (StepperKind::Euler, _) => {
                for (i, name) in evolved.iter().enumerate() {
                    let u = fields.field_mut(name)?;
                    euler_step(u, &rhs_bufs[i], spec.dt);
                }
            }
            (StepperKind::Imex, Some(eng)) => {
                for (i, name) in evolved.iter().enumerate() {
                    let rhs = &mut rhs_bufs[i];
                    eng.plan.forward(rhs, &mut eng.coeffs, &mut eng.ws);
                    eng.coeffs.scale_by(&eng.prefactor[i]);
                    // The inverse lands in the spent rhs buffer.
                    eng.plan.inverse(&mut eng.coeffs, rhs, &mut eng.ws);
                    let u = fields.field_mut(name)?;
                    euler_step(u, rhs, 1.0);
                }
            }
            (StepperKind::Etd1, Some(eng)) => {
                for (i, name) in evolved.iter().enumerate() {
                    let uhat = eng.coeffs_u.as_mut().expect("allocated for ETD1");
                    {
                        let u = fields.field(name)?;
                        eng.plan.forward(u, uhat, &mut eng.ws);
                    }
                    eng.plan.forward(&rhs_bufs[i], &mut eng.coeffs, &mut eng.ws);
                    etd1_combine(uhat, &mut eng.coeffs, &eng.decay[i], &eng.phi1dt[i], &eng.symbols[i]);
                    let u = fields.field_mut(name)?;
                    eng.plan.inverse(&mut eng.coeffs, u, &mut eng.ws);
                }
            }
            _ => unreachable!(),
        }

        let t = step as f64 * spec.dt;

        // Cheap min/max reduction doubles as the NaN/divergence check.
        let mut ranges = Vec::with_capacity(evolved.len());
        let mut finite = true;
        for name in &evolved {
            let (lo, hi) = min_max(fields.field(name)?);
            finite &= lo.is_finite() && hi.is_finite();
            if let Some(bound) = blowup_bound {
                finite &= lo.abs() <= bound && hi.abs() <= bound;
            }
            ranges.push((lo, hi));
        }
        if !finite {
            let (head, _) = rhs_bufs.split_at_mut(1);
            metrics.rows.push(sample(
                problem, fields, &mut scratch, &mut head[0], step, t, &start,
                Some(&ranges),
            ));
            return Err(RunError::NanAbort { step, metrics: Box::new(metrics) });
        }

        if step % cadence == 0 || step == spec.steps {
            let (head, _) = rhs_bufs.split_at_mut(1);
            metrics.rows.push(sample(
                problem, fields, &mut scratch, &mut head[0], step, t, &start,
                Some(&ranges),
            ));
        }
        if let Some(cb) = callback.as_deref_mut() {
            cb(step, t, fields);
        }
    }
    drop(engine.take());
    Ok(metrics)
}

fn min_max(v: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut nan = false;
    for &x in v {
        nan |= x.is_nan();
        if x < lo {
            lo = x;
        }
        if x > hi {
            hi = x;
        }
    }
    if nan {
        (f64::NAN, f64::NAN)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::problem::{CahnHilliard, Diffusion};
    use crate::spectral::SymbolKind;
    use std::f64::consts::PI;

    #[test]
    fn euler_trivial_cases() {
        let mut u = vec![1.0, 2.0];
        euler_step(&mut u, &[0.0, 0.0], 0.5);
        assert_eq!(u, vec![1.0, 2.0]);

        let mut u = vec![0.0; 4];
        euler_step(&mut u, &[1.0; 4], 0.5);
        assert!(u.iter().all(|&v| v == 0.5));

        // Linear decay u' = -u, ten Euler steps of dt = 0.1 from u = 1.
        let mut u = vec![1.0];
        for _ in 0..10 {
            let rhs = [-u[0]];
            euler_step(&mut u, &rhs, 0.1);
        }
        assert!((u[0] - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn imex_with_zero_symbol_reduces_to_euler() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let bc = BoundarySpec::periodic();
        let plan = TransformPlan::new(&grid, &bc).unwrap();
        let symbol = SpectralSymbol {
            values: vec![0.0; plan.coeff_len()],
            mode: WavenumberMode::ModifiedFd,
        };
        let rhs: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut u_imex = vec![0.25; grid.len()];
        let mut u_euler = u_imex.clone();
        imex_step(&plan, &symbol, 0.5, &mut u_imex, &rhs);
        euler_step(&mut u_euler, &rhs, 0.5);
        for (a, b) in u_imex.iter().zip(&u_euler) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn imex_with_zero_rhs_is_identity() {
        let grid = GridSpec::new([8, 4, 4], [1.0; 3]).unwrap();
        let plan = TransformPlan::new(&grid, &BoundarySpec::periodic()).unwrap();
        let symbol =
            SpectralSymbol::build(SymbolKind::Laplacian { coef: 2.0 }, &plan, WavenumberMode::ModifiedFd)
                .unwrap();
        let mut u: Vec<f64> = (0..grid.len()).map(|i| (i as f64).cos()).collect();
        let before = u.clone();
        imex_step(&plan, &symbol, 1.0, &mut u, &vec![0.0; grid.len()]);
        assert_eq!(u, before);
    }

    #[test]
    fn imex_equals_implicit_euler_on_an_eigenmode() {
        // Pure diffusion on a single Fourier mode: one IMEX step divides the
        // mode by (1 + dt Γ0 k²_mod), the implicit Euler modal answer.
        let n = 16;
        let grid = GridSpec::new([n, 2, 2], [1.0; 3]).unwrap();
        let bc = BoundarySpec::periodic();
        let plan = TransformPlan::new(&grid, &bc).unwrap();
        let gamma0 = 0.7;
        let dt = 2.5;
        let symbol = SpectralSymbol::build(
            SymbolKind::Laplacian { coef: gamma0 },
            &plan,
            WavenumberMode::ModifiedFd,
        )
        .unwrap();

        let l = grid.extent()[0];
        let mut vf = VoxelFields::create(grid);
        vf.add_with("u", |x, _, _| (2.0 * PI * x / l).sin()).unwrap();
        let u0 = vf.field("u").unwrap().to_vec();

        let ctx = StencilContext::new(grid, bc).unwrap();
        let rhs: Vec<f64> = crate::stencil::laplacian(&u0, &ctx)
            .unwrap()
            .iter()
            .map(|v| gamma0 * v)
            .collect();
        let mut u = u0.clone();
        imex_step(&plan, &symbol, dt, &mut u, &rhs);

        let h = 1.0;
        let k2_mod = 2.0 * (1.0 - (2.0 * PI / n as f64).cos()) / (h * h);
        let factor = 1.0 / (1.0 + dt * gamma0 * k2_mod);
        for (a, &b) in u.iter().zip(&u0) {
            assert!((a - factor * b).abs() < 1e-12, "{a} vs {}", factor * b);
        }
    }

    #[test]
    fn etd1_with_zero_symbol_reduces_to_euler() {
        let grid = GridSpec::new([8, 8, 4], [1.0; 3]).unwrap();
        let plan = TransformPlan::new(&grid, &BoundarySpec::periodic()).unwrap();
        let symbol = SpectralSymbol {
            values: vec![0.0; plan.coeff_len()],
            mode: WavenumberMode::ModifiedFd,
        };
        let rhs: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut u_etd: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut u_euler = u_etd.clone();
        etd1_step(&plan, &symbol, 0.25, &mut u_etd, &rhs);
        euler_step(&mut u_euler, &rhs, 0.25);
        for (a, b) in u_etd.iter().zip(&u_euler) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn etd1_exact_modal_decay_on_linear_diffusion() {
        let n = 16;
        let grid = GridSpec::new([n, 2, 2], [1.0; 3]).unwrap();
        let bc = BoundarySpec::periodic();
        let plan = TransformPlan::new(&grid, &bc).unwrap();
        let gamma0 = 1.3;
        let dt = 0.8;
        let symbol = SpectralSymbol::build(
            SymbolKind::Laplacian { coef: gamma0 },
            &plan,
            WavenumberMode::ModifiedFd,
        )
        .unwrap();
        let l = grid.extent()[0];
        let mut vf = VoxelFields::create(grid);
        vf.add_with("u", |x, _, _| (2.0 * PI * x / l).sin()).unwrap();
        let u0 = vf.field("u").unwrap().to_vec();
        let ctx = StencilContext::new(grid, bc).unwrap();
        let rhs: Vec<f64> = crate::stencil::laplacian(&u0, &ctx)
            .unwrap()
            .iter()
            .map(|v| gamma0 * v)
            .collect();
        let mut u = u0.clone();
        etd1_step(&plan, &symbol, dt, &mut u, &rhs);

        let k2_mod = 2.0 * (1.0 - (2.0 * PI / n as f64).cos());
        let factor = (-dt * gamma0 * k2_mod).exp();
        for (a, &b) in u.iter().zip(&u0) {
            assert!((a - factor * b).abs() < 1e-12, "{a} vs {}", factor * b);
        }
    }

    #[test]
    fn phi1_series_matches_direct_branch() {
        for z in [-1e-5, 1e-5, -9.9e-5] {
            let series = phi1(z);
            let direct = f64::exp_m1(z) / z;
            assert!((series - direct).abs() < 1e-15);
        }
        assert_eq!(phi1(0.0), 1.0);
    }

    #[test]
    fn zero_steps_returns_initial_sample_only() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        vf.add_uniform("c", 0.3).unwrap();
        let before = vf.field("c").unwrap().to_vec();
        let mut problem = Diffusion::constant(1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 1.0, 0).unwrap();
        let metrics = run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .unwrap();
        assert_eq!(metrics.rows.len(), 1);
        assert_eq!(metrics.rows[0].step, 0);
        assert_eq!(vf.field("c").unwrap(), before.as_slice());
    }

    #[test]
    fn runs_are_bit_deterministic() {
        let grid = GridSpec::new([16, 16, 16], [1.0; 3]).unwrap();
        let run_once = || {
            let mut vf = VoxelFields::create(grid);
            crate::preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 42).unwrap();
            let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
            let spec = StepperSpec::new(StepperKind::Imex, 1.0, 20).unwrap();
            let metrics = run(
                &mut problem,
                &mut vf,
                &BoundarySpec::periodic(),
                &spec,
                &RunOptions::default(),
                None,
            )
            .unwrap();
            (vf.field("phi").unwrap().to_vec(), metrics)
        };
        let (phi_a, ma) = run_once();
        let (phi_b, mb) = run_once();
        assert_eq!(phi_a, phi_b);
        for (ra, rb) in ma.rows.iter().zip(mb.rows.iter()) {
            assert_eq!(ra.mass, rb.mass);
            assert_eq!(ra.min, rb.min);
            assert_eq!(ra.max, rb.max);
            assert_eq!(ra.energy, rb.energy);
        }
    }

    #[test]
    fn euler_aborts_with_nan_on_stiff_problem() {
        // Cahn-Hilliard at dt = 1 is far beyond the explicit stability bound.
        let grid = GridSpec::new([16, 16, 16], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        crate::preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 42).unwrap();
        let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Euler, 1.0, 50).unwrap();
        match run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        ) {
            Err(RunError::NanAbort { step, metrics }) => {
                assert!(step <= 50, "aborted at step {step}");
                assert!(!metrics.rows.is_empty());
                assert_eq!(metrics.rows.last().unwrap().step, step);
            }
            other => panic!("expected NaN abort, got {other:?}"),
        }
    }

    #[test]
    fn imex_keeps_spinodal_run_stable_where_euler_blows_up() {
        let grid = GridSpec::new([16, 16, 16], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        crate::preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 42).unwrap();
        let mass0 = compute_mass(vf.field("phi").unwrap(), &grid);
        let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 1.0, 100).unwrap();
        let metrics = run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .unwrap();
        let last = metrics.rows.last().unwrap();
        assert!(last.min[0] > -0.1 && last.max[0] < 1.1, "range {:?}", (last.min[0], last.max[0]));
        let drift = (last.mass[0] - mass0).abs() / mass0.abs();
        assert!(drift < 1e-12, "mass drift {drift}");
    }

    #[test]
    fn spectral_stepper_without_symbol_is_rejected() {
        struct NoSymbol;
        impl Problem for NoSymbol {
            fn name(&self) -> &'static str {
                "custom"
            }
            fn evolved(&self) -> Vec<String> {
                vec!["u".into()]
            }
            fn eval_rhs(
                &self,
                _fields: &VoxelFields,
                _t: f64,
                _ctx: &StencilContext,
                _scratch: &mut Scratch,
                out: &mut [Vec<f64>],
            ) -> Result<()> {
                out[0].fill(0.0);
                Ok(())
            }
            fn symbol_kind(&self, _field_index: usize) -> Option<SymbolKind> {
                None
            }
        }
        let grid = GridSpec::new([4, 4, 4], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        vf.add_uniform("u", 0.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 0.1, 1).unwrap();
        let err = run(
            &mut NoSymbol,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("explicit Euler"), "message: {msg}");
    }

    #[test]
    fn memory_ledger_within_budget() {
        // fields + 3 scratch buffers per evolved field (ghost-padded size
        // class) + transform workspace.
        let grid = GridSpec::new([32, 32, 32], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        crate::preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 1).unwrap();
        let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 1.0, 2).unwrap();
        let metrics = run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .unwrap();
        let field_bytes = grid.len() * 8;
        let padded_bytes = 34 * 34 * 34 * 8;
        let transform: usize = metrics
            .mem_breakdown
            .iter()
            .filter(|(k, _)| k == "transform")
            .map(|(_, b)| *b)
            .sum();
        let budget = field_bytes + 3 * padded_bytes + transform;
        assert!(
            metrics.peak_field_bytes <= budget,
            "peak {} exceeds budget {budget} ({:?})",
            metrics.peak_field_bytes,
            metrics.mem_breakdown
        );
    }
}
