//! Gradient-based scalar-parameter estimation from field snapshots.
//!
//! The loss is the masked sum of squared differences between the forward
//! trajectory and observed snapshots at their nearest steps. Gradients are
//! central finite differences (a handful of scalar parameters keeps the
//! 2P extra forward runs cheap; an adjoint pass is the documented extension
//! point), and the fit is projected gradient descent with a backtracking
//! line search. Forward runs are deterministic, so the loss is smooth in
//! the parameters down to finite-difference resolution.

use crate::error::{Error, Result};
use crate::grid::{BoundarySpec, VoxelFields};
use crate::problem::Problem;
use crate::stepper::{run, RunError, RunOptions, StepperSpec};

/// One scalar parameter to estimate.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    /// Magnitude scale used for finite-difference steps and stop tests.
    pub scale: f64,
}

impl ParamSpec {
    pub fn new(name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParam(format!(
                "parameter \"{name}\" needs finite bounds with lo < hi"
            )));
        }
        let scale = (hi - lo).abs().max(f64::MIN_POSITIVE);
        Ok(ParamSpec { name: name.into(), lo, hi, scale })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn fd_step(&self, p: f64) -> f64 {
        1e-4 * p.abs().max(self.scale)
    }
}

/// A field snapshot at one observation time, optionally masked.
#[derive(Debug, Clone)]
pub struct Observation {
    pub t: f64,
    pub field: String,
    pub data: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

/// The forward simulation a fit drives: problem factory, initial state,
/// boundary conditions and stepper.
pub struct ForwardModel {
    pub build_problem: Box<dyn Fn(&[f64]) -> Result<Box<dyn Problem>> + Send + Sync>,
    pub initial_fields: Box<dyn Fn() -> Result<VoxelFields> + Send + Sync>,
    pub bc: BoundarySpec,
    pub stepper: StepperSpec,
    pub options: RunOptions,
}

/// Loss evaluation outcome; aborted forward runs poison the value.
#[derive(Debug, Clone, Copy)]
pub struct LossValue {
    pub value: f64,
    pub aborted: bool,
}

/// An inverse problem: forward model, target parameters, observations.
pub struct InverseProblem {
    pub model: ForwardModel,
    pub params: Vec<ParamSpec>,
    pub observations: Vec<Observation>,
}

impl InverseProblem {
    fn check_bounds(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::SizeMismatch { expected: self.params.len(), got: values.len() });
        }
        for (v, spec) in values.iter().zip(&self.params) {
            if !(spec.lo..=spec.hi).contains(v) {
                return Err(Error::InvalidParam(format!(
                    "parameter \"{}\" = {v} outside [{}, {}]",
                    spec.name, spec.lo, spec.hi
                )));
            }
        }
        let horizon = self.model.stepper.dt * self.model.stepper.steps as f64;
        for obs in &self.observations {
            if obs.t < 0.0 || obs.t > horizon * (1.0 + 1e-12) {
                return Err(Error::InvalidParam(format!(
                    "observation at t = {} outside the run horizon {horizon}",
                    obs.t
                )));
            }
        }
        Ok(())
    }

    /// Masked sum of squared differences at the observation times.
    pub fn loss(&self, values: &[f64]) -> Result<LossValue> {
        self.check_bounds(values)?;
        let mut problem = (self.model.build_problem)(values)?;
        let mut fields = (self.model.initial_fields)()?;
        let dt = self.model.stepper.dt;

        // Observations keyed by their nearest step.
        let mut targets: Vec<(usize, usize)> = self
            .observations
            .iter()
            .enumerate()
            .map(|(i, o)| ((o.t / dt).round() as usize, i))
            .collect();
        targets.sort_unstable();

        let observations = &self.observations;
        let mut sse = 0.0;
        let mut sample_err: Option<Error> = None;
        {
            let mut on_step = |step: usize, _t: f64, state: &VoxelFields| {
                for &(target_step, idx) in &targets {
                    if target_step != step {
                        continue;
                    }
                    let obs = &observations[idx];
                    let field = match state.field(&obs.field) {
                        Ok(f) => f,
                        Err(e) => {
                            sample_err.get_or_insert(e);
                            return;
                        }
                    };
                    match &obs.mask {
                        None => {
                            for (a, b) in field.iter().zip(&obs.data) {
                                let d = a - b;
                                sse += d * d;
                            }
                        }
                        Some(mask) => {
                            for ((a, b), &m) in field.iter().zip(&obs.data).zip(mask) {
                                if m {
                                    let d = a - b;
                                    sse += d * d;
                                }
                            }
                        }
                    }
                }
            };
            match run(
                problem.as_mut(),
                &mut fields,
                &self.model.bc,
                &self.model.stepper,
                &self.model.options,
                Some(&mut on_step),
            ) {
                Ok(_) => {}
                Err(RunError::NanAbort { .. }) => {
                    return Ok(LossValue { value: f64::INFINITY, aborted: true })
                }
                Err(RunError::Setup(e)) => return Err(e),
            }
        }
        if let Some(e) = sample_err {
            return Err(e);
        }
        Ok(LossValue { value: sse, aborted: false })
    }

    /// Central finite-difference gradient of the loss.
    pub fn gradient(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.check_bounds(values)?;
        for (v, spec) in values.iter().zip(&self.params) {
            let d = spec.fd_step(*v);
            if *v - d < spec.lo || *v + d > spec.hi {
                return Err(Error::InvalidParam(format!(
                    "parameter \"{}\" too close to its bounds for a central difference",
                    spec.name
                )));
            }
        }
        fd_gradient(&|p| self.loss(p), values, &self.params)
    }

    /// Projected gradient descent from `p0`; see [`minimize`].
    pub fn fit(&self, p0: &[f64]) -> Result<FitResult> {
        self.check_bounds(p0)?;
        minimize(&|p| self.loss(p), p0, &self.params, &FitOptions::default())
    }
}

/// Central finite differences of an arbitrary loss closure (the test seam
/// for the fit machinery).
pub fn fd_gradient(
    f: &dyn Fn(&[f64]) -> Result<LossValue>,
    values: &[f64],
    specs: &[ParamSpec],
) -> Result<Vec<f64>> {
    let mut grad = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let d = specs[i].fd_step(values[i]);
        let mut hi = values.to_vec();
        hi[i] += d;
        let mut lo = values.to_vec();
        lo[i] -= d;
        let fh = f(&hi)?;
        let fl = f(&lo)?;
        if fh.aborted || fl.aborted {
            return Err(Error::InvalidParam(format!(
                "forward run aborted while differentiating \"{}\"",
                specs[i].name
            )));
        }
        grad.push((fh.value - fl.value) / (2.0 * d));
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iters: 200, rel_tol: 1e-6, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// No descent direction was found away from the stop tolerance.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct FitIterate {
    pub iter: usize,
    pub params: Vec<f64>,
    pub loss: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub loss: f64,
    pub status: FitStatus,
    pub iterations: usize,
    pub trace: Vec<FitIterate>,
}

fn clamp_interior(p: &mut [f64], specs: &[ParamSpec]) {
    for (v, spec) in p.iter_mut().zip(specs) {
        // Keep a finite-difference step of room inside the bounds.
        let d = spec.fd_step(*v);
        *v = v.clamp(spec.lo + d, spec.hi - d);
    }
}

/// Projected gradient descent with a backtracking line search: halve the
/// step until the loss decreases (at most `max_halvings` times), stop when
/// the accepted update is below `rel_tol` per parameter or after
/// `max_iters` iterations. Returns the best parameters seen.
pub fn minimize(
    f: &dyn Fn(&[f64]) -> Result<LossValue>,
    p0: &[f64],
    specs: &[ParamSpec],
    opts: &FitOptions,
) -> Result<FitResult> {
    let mut p = p0.to_vec();
    clamp_interior(&mut p, specs);
    let first = f(&p)?;
    if first.aborted {
        return Err(Error::InvalidParam("forward run aborted at the initial parameters".into()));
    }
    let mut loss = first.value;
    let mut trace = vec![FitIterate { iter: 0, params: p.clone(), loss, step: 0.0 }];
    let mut step_scale: Option<f64> = None;

    for iter in 1..=opts.max_iters {
        let grad = fd_gradient(f, &p, specs)?;
        let gmax = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if gmax == 0.0 {
            return Ok(FitResult {
                params: p.clone(),
                loss,
                status: FitStatus::Converged,
                iterations: iter,
                trace,
            });
        }
        // First move targets ~10% of the smallest parameter scale.
        let mut s = step_scale.unwrap_or_else(|| {
            specs
                .iter()
                .zip(&grad)
                .filter(|(_, g)| g.abs() > 0.0)
                .map(|(spec, g)| 0.1 * spec.scale / g.abs())
                .fold(f64::INFINITY, f64::min)
        });

        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut candidate: Vec<f64> = p.iter().zip(&grad).map(|(v, g)| v - s * g).collect();
            clamp_interior(&mut candidate, specs);
            let cand_loss = f(&candidate)?;
            if !cand_loss.aborted && cand_loss.value < loss {
                let delta_small = candidate
                    .iter()
                    .zip(&p)
                    .zip(specs)
                    .all(|((a, b), spec)| (a - b).abs() <= opts.rel_tol * b.abs().max(spec.scale));
                p = candidate;
                loss = cand_loss.value;
                trace.push(FitIterate { iter, params: p.clone(), loss, step: s });
                step_scale = Some(s * 2.0);
                accepted = true;
                if delta_small {
                    return Ok(FitResult {
                        params: p,
                        loss,
                        status: FitStatus::Converged,
                        iterations: iter,
                        trace,
                    });
                }
                break;
            }
            s *= 0.5;
        }

        if !accepted {
            // The smallest attempted move could not reduce the loss; if that
            // move was below tolerance we are converged, otherwise stalled.
            let tiny = p
                .iter()
                .zip(&grad)
                .zip(specs)
                .all(|((v, g), spec)| (s * g).abs() <= opts.rel_tol * v.abs().max(spec.scale));
            let status = if tiny { FitStatus::Converged } else { FitStatus::Stalled };
            return Ok(FitResult { params: p, loss, status, iterations: iter, trace });
        }
    }
    Ok(FitResult {
        params: p,
        loss,
        status: FitStatus::MaxIterations,
        iterations: opts.max_iters,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::problem::Diffusion;
    use crate::stepper::StepperKind;

    fn quadratic_spec() -> Vec<ParamSpec> {
        vec![ParamSpec::new("p", -10.0, 10.0).unwrap().with_scale(1.0)]
    }

    #[test]
    fn fd_gradient_on_injected_quadratic() {
        let f = |p: &[f64]| Ok(LossValue { value: (p[0] - 1.0) * (p[0] - 1.0), aborted: false });
        let specs = quadratic_spec();
        for p in [0.0, 0.5, 2.0, -3.0] {
            let g = fd_gradient(&f, &[p], &specs).unwrap();
            assert!((g[0] - 2.0 * (p - 1.0)).abs() < 1e-8, "at {p}: {}", g[0]);
        }
    }

    #[test]
    fn minimize_quadratic_converges_with_monotone_trace() {
        let f = |p: &[f64]| Ok(LossValue { value: (p[0] - 1.0) * (p[0] - 1.0), aborted: false });
        let specs = quadratic_spec();
        let result = minimize(&f, &[5.0], &specs, &FitOptions::default()).unwrap();
        assert_eq!(result.status, FitStatus::Converged);
        assert!((result.params[0] - 1.0).abs() < 1e-4, "got {}", result.params[0]);
        for w in result.trace.windows(2) {
            assert!(w[1].loss <= w[0].loss, "trace not non-increasing");
        }
    }

    #[test]
    fn minimize_started_at_optimum_converges_immediately() {
        let f = |p: &[f64]| Ok(LossValue { value: (p[0] - 1.0) * (p[0] - 1.0), aborted: false });
        let specs = quadratic_spec();
        let result = minimize(&f, &[1.0], &specs, &FitOptions::default()).unwrap();
        assert_eq!(result.status, FitStatus::Converged);
        assert!(result.iterations <= 2, "took {} iterations", result.iterations);
    }

    fn diffusion_inverse(true_d: f64, grid: GridSpec, steps: usize) -> InverseProblem {
        let stepper = StepperSpec::new(StepperKind::Imex, 0.05, steps).unwrap();
        let make_initial = move || -> Result<VoxelFields> {
            let mut vf = VoxelFields::create(grid);
            crate::preset::spinodal_noise(&mut vf, "c", 0.5, 0.3, 77)?;
            Ok(vf)
        };
        // Synthetic observations from the generating parameters.
        let sample_steps = [steps / 2, steps];
        let mut observations = Vec::new();
        {
            let mut problem = Diffusion::constant(true_d).unwrap();
            let mut vf = make_initial().unwrap();
            let mut obs_cb = |step: usize, t: f64, state: &VoxelFields| {
                if sample_steps.contains(&step) && step > 0 {
                    observations.push(Observation {
                        t,
                        field: "c".into(),
                        data: state.field("c").unwrap().to_vec(),
                        mask: None,
                    });
                }
            };
            run(
                &mut problem,
                &mut vf,
                &BoundarySpec::periodic(),
                &stepper,
                &RunOptions::default(),
                Some(&mut obs_cb),
            )
            .unwrap();
        }
        InverseProblem {
            model: ForwardModel {
                build_problem: Box::new(|p| Ok(Box::new(Diffusion::constant(p[0])?))),
                initial_fields: Box::new(make_initial),
                bc: BoundarySpec::periodic(),
                stepper,
                options: RunOptions::default(),
            },
            params: vec![ParamSpec::new("d", 0.05, 10.0).unwrap().with_scale(1.0)],
            observations,
        }
    }

    #[test]
    fn loss_vanishes_at_generating_parameters() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let at_truth = inv.loss(&[1.0]).unwrap();
        assert!(!at_truth.aborted);
        assert!(at_truth.value <= 1e-20, "loss {}", at_truth.value);
    }

    #[test]
    fn loss_with_empty_mask_is_zero() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let mut inv = diffusion_inverse(1.0, grid, 20);
        for obs in &mut inv.observations {
            obs.mask = Some(vec![false; grid.len()]);
        }
        let loss = inv.loss(&[1.7]).unwrap();
        assert_eq!(loss.value, 0.0);
    }

    #[test]
    fn loss_grows_with_parameter_distance() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let l5 = inv.loss(&[1.05]).unwrap().value;
        let l10 = inv.loss(&[1.10]).unwrap().value;
        assert!(l5 > 0.0);
        assert!(l10 > l5, "{l10} vs {l5}");
    }

    #[test]
    fn gradient_sign_brackets_the_optimum() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let below = inv.gradient(&[0.8]).unwrap();
        let above = inv.gradient(&[1.2]).unwrap();
        assert!(below[0] < 0.0, "gradient below truth {}", below[0]);
        assert!(above[0] > 0.0, "gradient above truth {}", above[0]);
    }

    #[test]
    fn gradient_near_truth_is_small() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let g = inv.gradient(&[1.0]).unwrap();
        // Curvature scale from a bracketing evaluation.
        let l = inv.loss(&[1.01]).unwrap().value;
        let curvature = l / (0.01f64 * 0.01);
        assert!(g[0].abs() <= 1e-6 * curvature, "gradient {} curvature {curvature}", g[0]);
    }

    #[test]
    fn fit_recovers_diffusivity() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let result = inv.fit(&[0.5]).unwrap();
        assert!(
            (result.params[0] - 1.0).abs() < 0.01,
            "recovered {} (status {:?})",
            result.params[0],
            result.status
        );
    }

    #[test]
    fn fit_from_truth_converges_quickly() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let inv = diffusion_inverse(1.0, grid, 20);
        let result = inv.fit(&[1.0]).unwrap();
        assert_eq!(result.status, FitStatus::Converged);
        assert!(result.iterations <= 2, "iterations {}", result.iterations);
    }

    #[test]
    fn observation_outside_horizon_rejected() {
        let grid = GridSpec::new([8, 8, 8], [1.0; 3]).unwrap();
        let mut inv = diffusion_inverse(1.0, grid, 20);
        inv.observations[0].t = 100.0;
        assert!(inv.loss(&[1.0]).is_err());
    }
}
