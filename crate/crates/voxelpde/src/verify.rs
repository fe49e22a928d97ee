//! Convergence verification: manufactured solutions, observed-order
//! measurement, and a dense brute-force reference stepper for small grids.
//!
//! The registered suite covers the spatial order of the diffusion
//! discretization on all three boundary families and the temporal order of
//! the two spectral steppers on Allen-Cahn dynamics. Each case reports its
//! error ladder and the least-squares slope of log(error) against log(h) or
//! log(dt).

use crate::error::{Error, Result};
use crate::grid::{AxisBc, BcSide, BoundarySpec, GridSpec, VoxelFields};
use crate::problem::{AllenCahn, Diffusion, Forcing};
use crate::stepper::{run, RunOptions, StepperKind, StepperSpec};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::Arc;

/// Error norm used by a convergence case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    LInf,
}

/// Which discretization parameter the ladder refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseAxis {
    Spatial,
    Temporal,
}

/// An analytic solution with the closures the harness needs; it never
/// differentiates symbolically.
#[derive(Clone)]
pub struct ManufacturedSolution {
    /// `u*(x, t)`.
    pub u: Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>,
    /// `∂u*/∂t`.
    pub du_dt: Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>,
    /// Continuous right-hand side evaluated on `u*` (without forcing).
    pub rhs: Arc<dyn Fn([f64; 3], f64) -> f64 + Send + Sync>,
}

/// The forcing that makes `u*` an exact solution: `f* = ∂u*/∂t - RHS(u*)`.
pub fn manufactured_forcing(mms: &ManufacturedSolution) -> Forcing {
    let du_dt = Arc::clone(&mms.du_dt);
    let rhs = Arc::clone(&mms.rhs);
    Forcing::SpaceTime(Arc::new(move |x, t| du_dt(x, t) - rhs(x, t)))
}

/// L2 norm of the difference, volume-weighted.
pub fn l2_error(a: &[f64], b: &[f64], grid: &GridSpec) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum * grid.cell_volume()).sqrt()
}

pub fn linf_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One registered convergence measurement.
pub struct ConvergenceCase {
    pub name: String,
    pub axis: CaseAxis,
    pub norm: NormKind,
    pub nominal_order: f64,
    pub tolerance: f64,
    /// Refinement parameter per rung (h or dt), strictly decreasing.
    pub ladder: Vec<f64>,
    eval: Box<dyn Fn(usize) -> Result<f64> + Send + Sync>,
}

/// Outcome of one case.
#[derive(Debug, Clone)]
pub struct CaseReport {
    pub name: String,
    pub ladder: Vec<f64>,
    pub errors: Vec<f64>,
    pub observed: Option<f64>,
    pub nominal: f64,
    pub pass: bool,
    pub note: String,
}

/// Least-squares slope of `log(error)` against `log(param)`.
///
/// Errors must decrease strictly along the ladder; a non-monotone ladder is
/// a diagnostic failure, not an order.
pub fn observed_order(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParam("order needs at least two ladder points".into()));
    }
    for w in points.windows(2) {
        if !(w[1].1 < w[0].1) {
            return Err(Error::InvalidParam(format!(
                "error ladder not strictly decreasing: {} -> {}",
                w[0].1, w[1].1
            )));
        }
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in logs {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    Ok(num / den)
}

/// Runs every rung of a case and judges the observed order.
pub fn run_case(case: &ConvergenceCase) -> CaseReport {
    let mut errors = Vec::with_capacity(case.ladder.len());
    for i in 0..case.ladder.len() {
        match (case.eval)(i) {
            Ok(e) => errors.push(e),
            Err(err) => {
                return CaseReport {
                    name: case.name.clone(),
                    ladder: case.ladder.clone(),
                    errors,
                    observed: None,
                    nominal: case.nominal_order,
                    pass: false,
                    note: format!("rung {i} failed: {err}"),
                }
            }
        }
    }
    let points: Vec<(f64, f64)> = case.ladder.iter().copied().zip(errors.iter().copied()).collect();
    match observed_order(&points) {
        Ok(order) => {
            let pass = (order - case.nominal_order).abs() <= case.tolerance;
            CaseReport {
                name: case.name.clone(),
                ladder: case.ladder.clone(),
                errors,
                observed: Some(order),
                nominal: case.nominal_order,
                pass,
                note: String::new(),
            }
        }
        Err(err) => CaseReport {
            name: case.name.clone(),
            ladder: case.ladder.clone(),
            errors,
            observed: None,
            nominal: case.nominal_order,
            pass: false,
            note: err.to_string(),
        },
    }
}

/// Implicit-Euler reference step on a dense assembly of the FD diffusion
/// operator; the brute-force oracle for the spectral steppers. Capped at
/// 4096 voxels.
///
/// The matrix and boundary source are assembled here directly from the
/// boundary-condition definitions, independent of the stencil kernels.
pub fn dense_oracle_step(
    u: &[f64],
    gamma0: f64,
    grid: &GridSpec,
    bc: &BoundarySpec,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = grid.len();
    if n > 4096 {
        return Err(Error::InvalidParam(format!("dense oracle capped at 4096 voxels, got {n}")));
    }
    if u.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: u.len() });
    }
    bc.validate()?;

    let mut lmat = DMatrix::<f64>::zeros(n, n);
    let mut bvec = DVector::<f64>::zeros(n);
    let [nx, ny, nz] = grid.dims;
    let strides = [1usize, nx, nx * ny];

    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let row = grid.index(i, j, k);
                for axis in 0..3 {
                    if !grid.simulated(axis) {
                        continue;
                    }
                    let nn = grid.dims[axis];
                    let h = grid.spacing[axis];
                    let inv_h2 = 1.0 / (h * h);
                    let pos = [i, j, k][axis];
                    let s = strides[axis];

                    // Low face.
                    if pos > 0 {
                        lmat[(row, row - s)] += inv_h2;
                        lmat[(row, row)] -= inv_h2;
                    } else {
                        match bc.axes[axis].lo {
                            BcSide::Periodic => {
                                lmat[(row, row + (nn - 1) * s)] += inv_h2;
                                lmat[(row, row)] -= inv_h2;
                            }
                            BcSide::Dirichlet(g) => {
                                // ghost = 2g - u: flux (u - ghost) = 2u - 2g.
                                lmat[(row, row)] -= 2.0 * inv_h2;
                                bvec[row] += 2.0 * g * inv_h2;
                            }
                            BcSide::ZeroFlux => {}
                            BcSide::Flux(jv) => bvec[row] += jv / h,
                        }
                    }

                    // High face.
                    if pos + 1 < nn {
                        lmat[(row, row + s)] += inv_h2;
                        lmat[(row, row)] -= inv_h2;
                    } else {
                        match bc.axes[axis].hi {
                            BcSide::Periodic => {
                                lmat[(row, row - (nn - 1) * s)] += inv_h2;
                                lmat[(row, row)] -= inv_h2;
                            }
                            BcSide::Dirichlet(g) => {
                                lmat[(row, row)] -= 2.0 * inv_h2;
                                bvec[row] += 2.0 * g * inv_h2;
                            }
                            BcSide::ZeroFlux => {}
                            BcSide::Flux(jv) => bvec[row] += jv / h,
                        }
                    }
                }
            }
        }
    }

    // One implicit-Euler step composed the same way as the spectral update:
    // u' = u + (I - dt Γ0 L)^{-1} dt Γ0 (L u + b).
    let uv = DVector::from_column_slice(u);
    let rhs = (&lmat * &uv + &bvec) * (dt * gamma0);
    let system = DMatrix::<f64>::identity(n, n) - &lmat * (dt * gamma0);
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParam("singular implicit system in dense oracle".into()))?;
    Ok((uv + x).data.as_vec().clone())
}

/// Optional fault injection for harness self-checks: the convergence suite
/// must detect a first-order-inconsistent boundary treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SuiteSeam {
    #[default]
    None,
    /// Perturbs the Dirichlet boundary values by O(h), emulating a botched
    /// ghost rule; the Dirichlet case must then report order ≈ 1.
    BreakDirichletGhost,
}

fn relax_to_steady(
    dims: [usize; 3],
    spacing: f64,
    bc: BoundarySpec,
    forcing: Forcing,
    exact: impl Fn([f64; 3]) -> f64,
) -> Result<f64> {
    let grid = GridSpec::new(dims, [spacing; 3])?;
    let mut vf = VoxelFields::create(grid);
    vf.add_uniform("c", 0.0)?;
    let mut problem = Diffusion::constant(1.0)?.with_forcing(forcing);
    // With the modified-FD symbol each IMEX step is exact implicit Euler, so
    // a handful of large steps lands on the discrete steady state.
    let k1 = 3.0 * (2.0 * PI / (dims[0] as f64 * spacing)).powi(2);
    let dt = 50.0 / k1;
    let spec = StepperSpec::new(StepperKind::Imex, dt, 40)?.with_sampling(40);
    run(&mut problem, &mut vf, &bc, &spec, &RunOptions::default(), None)
        .map_err(|e| Error::InvalidParam(format!("steady relaxation failed: {e}")))?;
    let mut reference = VoxelFields::create(grid);
    reference.add_with("exact", |x, y, z| exact([x, y, z]))?;
    Ok(l2_error(
        vf.field("c")?,
        reference.field("exact")?,
        &grid,
    ))
}

fn spatial_imex_case(
    name: &str,
    family: SpectralFamily,
    seam: SuiteSeam,
) -> ConvergenceCase {
    let resolutions = [8usize, 16, 32, 64];
    let length = 8.0;
    let ladder: Vec<f64> = resolutions.iter().map(|&n| length / n as f64).collect();
    let eval = move |rung: usize| -> Result<f64> {
        let n = resolutions[rung];
        let h = length / n as f64;
        let d = 1.0;
        match family {
            SpectralFamily::Periodic => {
                let k = 2.0 * PI / length;
                let lam = 3.0 * d * k * k;
                let forcing = Forcing::SpaceTime(Arc::new(move |x: [f64; 3], _| {
                    lam * (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).sin()
                }));
                relax_to_steady([n, n, n], h, BoundarySpec::periodic(), forcing, |x| {
                    (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).sin()
                })
            }
            SpectralFamily::Dirichlet => {
                let k = PI / length;
                let lam = 3.0 * d * k * k;
                let forcing = Forcing::SpaceTime(Arc::new(move |x: [f64; 3], _| {
                    lam * (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).sin()
                }));
                let g = if seam == SuiteSeam::BreakDirichletGhost { 0.5 * h } else { 0.0 };
                let bc = BoundarySpec {
                    axes: [AxisBc::dirichlet(g, g); 3],
                };
                relax_to_steady([n, n, n], h, bc, forcing, |x| {
                    (k * x[0]).sin() * (k * x[1]).sin() * (k * x[2]).sin()
                })
            }
            SpectralFamily::ZeroFlux => {
                let k = PI / length;
                let lam = 3.0 * d * k * k;
                let forcing = Forcing::SpaceTime(Arc::new(move |x: [f64; 3], _| {
                    lam * (k * x[0]).cos() * (k * x[1]).cos() * (k * x[2]).cos()
                }));
                relax_to_steady([n, n, n], h, BoundarySpec::zero_flux(), forcing, |x| {
                    (k * x[0]).cos() * (k * x[1]).cos() * (k * x[2]).cos()
                })
            }
        }
    };
    ConvergenceCase {
        name: name.to_string(),
        axis: CaseAxis::Spatial,
        norm: NormKind::L2,
        nominal_order: 2.0,
        tolerance: 0.1,
        ladder,
        eval: Box::new(eval),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SpectralFamily {
    Periodic,
    Dirichlet,
    ZeroFlux,
}

fn euler_decay_case() -> ConvergenceCase {
    // Eigenfunction decay with dt ∝ h²: both error sources are second order.
    let resolutions = [8usize, 16, 32, 64];
    let length = 8.0;
    let ladder: Vec<f64> = resolutions.iter().map(|&n| length / n as f64).collect();
    let eval = move |rung: usize| -> Result<f64> {
        let n = resolutions[rung];
        let h = length / n as f64;
        let d = 1.0;
        let k = 2.0 * PI / length;
        let lam = d * k * k;
        let t_final = 1.0;
        let dt = 0.2 * h * h / d;
        let steps = (t_final / dt).round() as usize;
        let dt = t_final / steps as f64;

        let grid = GridSpec::new([n, 4, 4], [h, 1.0, 1.0])?;
        let mut vf = VoxelFields::create(grid);
        vf.add_with("c", |x, _, _| (k * x).sin())?;
        let mut problem = Diffusion::constant(d)?;
        let spec = StepperSpec::new(StepperKind::Euler, dt, steps)?.with_sampling(steps);
        run(&mut problem, &mut vf, &BoundarySpec::periodic(), &spec, &RunOptions::default(), None)
            .map_err(|e| Error::InvalidParam(format!("euler run failed: {e}")))?;

        let decay = (-lam * t_final).exp();
        let mut reference = VoxelFields::create(grid);
        reference.add_with("exact", |x, _, _| decay * (k * x).sin())?;
        Ok(l2_error(vf.field("c")?, reference.field("exact")?, &grid))
    };
    ConvergenceCase {
        name: "diffusion euler periodic spatial".into(),
        axis: CaseAxis::Spatial,
        norm: NormKind::L2,
        nominal_order: 2.0,
        tolerance: 0.1,
        ladder,
        eval: Box::new(eval),
    }
}

fn allen_cahn_state(dims: [usize; 3]) -> (GridSpec, VoxelFields) {
    let grid = GridSpec::new(dims, [1.0; 3]).unwrap();
    let l = grid.extent()[0];
    let mut vf = VoxelFields::create(grid);
    vf.add_with("phi", |x, y, z| {
        0.5 + 0.3 * (2.0 * PI * x / l).sin() * (2.0 * PI * y / l).cos()
            + 0.1 * (2.0 * PI * z / l).sin()
    })
    .unwrap();
    (grid, vf)
}

fn temporal_case(kind: StepperKind, label: &str) -> ConvergenceCase {
    // The ladder starts at dt|S| ≈ 3 for the stiffest mode; coarser steps
    // sit outside the asymptotic first-order regime.
    let t_final = 1.0;
    let steps_ladder = [16usize, 32, 64, 128];
    let ladder: Vec<f64> = steps_ladder.iter().map(|&s| t_final / s as f64).collect();
    let reference: Arc<std::sync::OnceLock<Vec<f64>>> = Arc::new(std::sync::OnceLock::new());

    let eval = move |rung: usize| -> Result<f64> {
        let dims = [16usize, 16, 16];
        let reference = Arc::clone(&reference);
        let run_to = |steps: usize| -> Result<Vec<f64>> {
            let (_, mut vf) = allen_cahn_state(dims);
            let mut problem = AllenCahn::new(1.0, 2.0, 1.0)?;
            let spec =
                StepperSpec::new(kind, t_final / steps as f64, steps)?.with_sampling(steps);
            run(&mut problem, &mut vf, &BoundarySpec::periodic(), &spec, &RunOptions::default(), None)
                .map_err(|e| Error::InvalidParam(format!("temporal run failed: {e}")))?;
            Ok(vf.field("phi")?.to_vec())
        };
        let coarse = run_to(steps_ladder[rung])?;
        if reference.get().is_none() {
            let fine = run_to(steps_ladder[0] * 1024)?;
            let _ = reference.set(fine);
        }
        let grid = GridSpec::new(dims, [1.0; 3])?;
        Ok(l2_error(&coarse, reference.get().expect("set above"), &grid))
    };
    ConvergenceCase {
        name: label.to_string(),
        axis: CaseAxis::Temporal,
        norm: NormKind::L2,
        nominal_order: 1.0,
        tolerance: 0.1,
        ladder,
        eval: Box::new(eval),
    }
}

/// The registered convergence suite.
pub fn default_suite() -> Vec<ConvergenceCase> {
    suite_with_seam(SuiteSeam::None)
}

/// Suite with optional fault injection (harness self-checks).
pub fn suite_with_seam(seam: SuiteSeam) -> Vec<ConvergenceCase> {
    vec![
        spatial_imex_case("diffusion imex periodic spatial", SpectralFamily::Periodic, seam),
        spatial_imex_case("diffusion imex dirichlet spatial", SpectralFamily::Dirichlet, seam),
        spatial_imex_case("diffusion imex zero-flux spatial", SpectralFamily::ZeroFlux, seam),
        euler_decay_case(),
        temporal_case(StepperKind::Imex, "allen-cahn imex temporal"),
        temporal_case(StepperKind::Etd1, "allen-cahn etd1 temporal"),
    ]
}
