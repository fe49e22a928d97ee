//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them). Heavy shared
//! runs are computed once.
//!
//! 1.  IMEX stability at dt = 1 on the 64³ spinodal benchmark
//! 2.  mass conservation there; explicit Euler aborts
//! 3.  convergence orders (spatial 2nd, temporal 1st)
//! 4.  IMEX equals the dense implicit-Euler oracle on 8³
//! 5.  Allen-Cahn curvature flow and its curvature-free variant on 96³
//! 6.  multiphase partition preservation
//! 7.  smoothed-boundary reduction and slab residual decay
//! 8.  memory linearity across 32³/64³/128³
//! 9.  inverse recovery of diffusion and Cahn-Hilliard coefficients
//! 10. bit-identical seeded reruns through the CLI

use std::sync::OnceLock;
use std::time::Instant;
use voxelpde::grid::{AxisBc, BoundarySpec, GridSpec, VoxelFields};
use voxelpde::inverse::{ForwardModel, InverseProblem, Observation, ParamSpec};
use voxelpde::preset;
use voxelpde::problem::{
    compute_mass, CahnHilliard, Coefficient, Diffusion, MultiPhase, Problem, SmoothedBoundary,
};
use voxelpde::stepper::{run, RunError, RunMetrics, RunOptions, StepperKind, StepperSpec};

fn variance(v: &[f64]) -> f64 {
    let mean = voxelpde::pairwise_sum(v) / v.len() as f64;
    let sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    voxelpde::pairwise_sum(&sq) / v.len() as f64
}

struct Spinodal64 {
    metrics: RunMetrics,
    var0: f64,
    var_final: f64,
    elapsed_s: f64,
}

fn spinodal_64() -> &'static Spinodal64 {
    static RUN: OnceLock<Spinodal64> = OnceLock::new();
    RUN.get_or_init(|| {
        let grid = GridSpec::new([64, 64, 64], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 42).unwrap();
        let var0 = variance(vf.field("phi").unwrap());
        let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 1.0, 1000).unwrap().with_sampling(10);
        let t0 = Instant::now();
        let metrics = run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .expect("1000 IMEX steps at dt = 1 complete without abort");
        let elapsed_s = t0.elapsed().as_secs_f64();
        let var_final = variance(vf.field("phi").unwrap());
        Spinodal64 { metrics, var0, var_final, elapsed_s }
    })
}

#[test]
fn criterion_01_imex_stable_at_unit_dt() {
    let r = spinodal_64();
    let last = r.metrics.rows.last().unwrap();
    assert_eq!(last.step, 1000);
    assert!(last.min[0] > -0.1, "phi min {}", last.min[0]);
    assert!(last.max[0] < 1.1, "phi max {}", last.max[0]);
    let growth = r.var_final / r.var0;
    assert!(growth >= 10.0, "variance growth {growth:.1}x");
    assert!(r.elapsed_s <= 300.0, "runtime {:.1}s exceeds 5 min", r.elapsed_s);
    println!(
        "acceptance 01 PASS — 1000 IMEX steps at dt=1 on 64³: phi in [{:.3}, {:.3}], variance x{:.0}, {:.1}s",
        last.min[0], last.max[0], growth, r.elapsed_s
    );
}

#[test]
fn criterion_02_mass_conserved_and_euler_aborts() {
    let r = spinodal_64();
    let mass0 = r.metrics.rows[0].mass[0];
    let drift = r
        .metrics
        .rows
        .iter()
        .map(|row| ((row.mass[0] - mass0) / mass0).abs())
        .fold(0.0f64, f64::max);
    assert!(drift <= 1e-12, "relative mass drift {drift:.3e}");

    let grid = GridSpec::new([64, 64, 64], [1.0; 3]).unwrap();
    let mut vf = VoxelFields::create(grid);
    preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 42).unwrap();
    let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
    let spec = StepperSpec::new(StepperKind::Euler, 1.0, 50).unwrap();
    let abort_step = match run(
        &mut problem,
        &mut vf,
        &BoundarySpec::periodic(),
        &spec,
        &RunOptions::default(),
        None,
    ) {
        Err(RunError::NanAbort { step, .. }) => step,
        other => panic!("explicit Euler at dt=1 should abort, got {other:?}"),
    };
    assert!(abort_step <= 50);
    println!(
        "acceptance 02 PASS — relative mass drift {drift:.2e} over 1000 steps; Euler dt=1 aborted at step {abort_step}"
    );
}

#[test]
fn criterion_03_convergence_orders() {
    let t0 = Instant::now();
    let mut lines = Vec::new();
    for case in voxelpde::verify::default_suite() {
        let report = voxelpde::verify::run_case(&case);
        let observed = report.observed.unwrap_or(f64::NAN);
        assert!(
            report.pass,
            "case {} failed: observed {observed:.3} vs nominal {} ({})",
            report.name, report.nominal, report.note
        );
        lines.push(format!("{} -> {:.3}", report.name, observed));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed <= 600.0, "suite took {elapsed:.0}s, budget 10 min");
    println!("acceptance 03 PASS — {}; {elapsed:.0}s", lines.join("; "));
}

#[test]
fn criterion_04_imex_matches_dense_oracle() {
    use voxelpde::spectral::{SpectralSymbol, SymbolKind, TransformPlan, WavenumberMode};
    let gamma0 = 1.3;
    let dt = 2.0;
    let mut worst_overall: f64 = 0.0;
    for (label, bc) in [
        ("periodic", BoundarySpec::periodic()),
        ("dirichlet", BoundarySpec::dirichlet(0.7)),
        ("zero-flux", BoundarySpec::zero_flux()),
    ] {
        let grid = GridSpec::new([8, 8, 8], [0.8, 1.0, 1.2]).unwrap();
        let u0: Vec<f64> = (0..grid.len())
            .map(|i| 2.0 * preset::uniform01(11, i as u64) - 0.5)
            .collect();
        let oracle = voxelpde::verify::dense_oracle_step(&u0, gamma0, &grid, &bc, dt).unwrap();

        let ctx = voxelpde::stencil::StencilContext::new(grid, bc).unwrap();
        let mut vf = VoxelFields::create(grid);
        vf.add_from("c", u0.clone()).unwrap();
        let mut problem = Diffusion::constant(gamma0).unwrap();
        problem.prepare(&vf, &ctx).unwrap();
        let mut scratch = voxelpde::problem::Scratch::for_problem(&problem, &grid);
        let mut rhs = vec![vec![0.0; grid.len()]];
        problem.eval_rhs(&vf, 0.0, &ctx, &mut scratch, &mut rhs).unwrap();

        let plan = TransformPlan::new(&grid, &bc).unwrap();
        let symbol = SpectralSymbol::build(
            SymbolKind::Laplacian { coef: gamma0 },
            &plan,
            WavenumberMode::ModifiedFd,
        )
        .unwrap();
        let mut u = u0.clone();
        voxelpde::stepper::imex_step(&plan, &symbol, dt, &mut u, &rhs[0]);

        let scale = oracle.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        let worst = u
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / scale;
        assert!(worst <= 1e-10, "{label}: IMEX vs dense oracle mismatch {worst:.2e}");
        worst_overall = worst_overall.max(worst);
    }
    println!(
        "acceptance 04 PASS — IMEX equals dense implicit Euler on 8³ within {worst_overall:.2e} (tol 1e-10), all BC families"
    );
}

#[test]
fn criterion_05_curvature_flow_and_no_curvature_variant() {
    use voxelpde::problem::{AllenCahn, AllenCahnNoCurvature};
    let n = 96;
    let (m, gamma0) = (1.0, 1.0);
    let eps = 3.0;
    let r0 = 30.0; // = 10 eps
    let t_final = 16.0;
    let grid = GridSpec::new([n, n, n], [1.0; 3]).unwrap();
    let center = 0.5 * n as f64;

    let sphere_volume = |vf: &VoxelFields| compute_mass(vf.field("phi").unwrap(), &grid);
    let radius_of = |v: f64| (3.0 * v / (4.0 * std::f64::consts::PI)).powf(1.0 / 3.0);

    // Sharp-interface limit of this kinetic normalization: the equilibrium
    // profile satisfies 2γ0ε φ'' = γ0 g, so a curved interface moves with
    // v = -2Mγ0 κ and a sphere obeys d(R²)/dt = -8Mγ0 (κ = 2/R). The same
    // constant follows from energy dissipation, dF/dt = -∫ L (δF/δφ)².
    // The shrinkage itself is held to 10%, which is stricter than 10% of R².
    let mut vf = VoxelFields::create(grid);
    preset::sphere(&mut vf, "phi", [center; 3], r0, eps).unwrap();
    let v0 = sphere_volume(&vf);
    let r0_eff = radius_of(v0);
    let mut ac = AllenCahn::new(gamma0, eps, m).unwrap();
    let dt = 0.1;
    let steps = (t_final / dt) as usize;
    let spec = StepperSpec::new(StepperKind::Imex, dt, steps).unwrap().with_sampling(steps);
    run(&mut ac, &mut vf, &BoundarySpec::zero_flux(), &spec, &RunOptions::default(), None).unwrap();
    let shrink_measured = r0_eff * r0_eff - radius_of(sphere_volume(&vf)).powi(2);
    let shrink_predicted = 8.0 * m * gamma0 * t_final;
    let rel = ((shrink_measured - shrink_predicted) / shrink_predicted).abs();
    assert!(
        rel <= 0.10,
        "ΔR² = {shrink_measured:.1} vs predicted {shrink_predicted:.1} ({:.1}% off)",
        rel * 100.0
    );

    // Curvature-free variant over the same horizon: enclosed volume holds
    // while the standard flow removed a fifth of it. The variant has no
    // tangential stiffness, so grid-scale interface modes are neutrally
    // stable; the larger step lets the semi-implicit prefactor damp them.
    let mut vf = VoxelFields::create(grid);
    preset::sphere(&mut vf, "phi", [center; 3], r0, eps).unwrap();
    let mut nc = AllenCahnNoCurvature::new(gamma0, eps, m).unwrap();
    let nc_dt = 0.2;
    let nc_steps = (t_final / nc_dt) as usize;
    let nc_spec = StepperSpec::new(StepperKind::Imex, nc_dt, nc_steps).unwrap().with_sampling(nc_steps);
    run(&mut nc, &mut vf, &BoundarySpec::zero_flux(), &nc_spec, &RunOptions::default(), None).unwrap();
    let v_final = sphere_volume(&vf);
    let v_change = ((v_final - v0) / v0).abs();
    assert!(v_change <= 0.01, "curvature-free volume changed {:.2}%", v_change * 100.0);

    println!(
        "acceptance 05 PASS — curvature flow ΔR² {shrink_measured:.1} vs 8Mγ0t = {shrink_predicted:.1} ({:.1}% off, tol 10%); curvature-free volume change {:.3}% (tol 1%)",
        rel * 100.0,
        v_change * 100.0
    );
}

#[test]
fn criterion_06_multiphase_partition() {
    let grid = GridSpec::new([12, 12, 12], [1.0; 3]).unwrap();
    let l = grid.extent()[0];
    let mut vf = VoxelFields::create(grid);
    vf.add_with("phi0", |x, _, _| 0.5 * (1.0 - (1.5 * (x - 0.3 * l) / 2.0).tanh()))
        .unwrap();
    vf.add_with("phi1", |x, y, _| {
        let a = 0.5 * (1.0 + (1.5 * (x - 0.3 * l) / 2.0).tanh());
        let b = 0.5 * (1.0 - (1.5 * (y - 0.5 * l) / 2.0).tanh());
        a * b
    })
    .unwrap();
    let p0 = vf.field("phi0").unwrap().to_vec();
    let p1 = vf.field("phi1").unwrap().to_vec();
    vf.add_from("phi2", p0.iter().zip(&p1).map(|(a, b)| 1.0 - a - b).collect())
        .unwrap();

    let mobility = vec![
        vec![0.0, 1.0, 0.5],
        vec![1.0, 0.0, 2.0],
        vec![0.5, 2.0, 0.0],
    ];
    let mut problem = MultiPhase::new(1.0, 2.0, mobility).unwrap();
    let spec = StepperSpec::new(StepperKind::Imex, 0.05, 100).unwrap().with_sampling(100);
    run(&mut problem, &mut vf, &BoundarySpec::zero_flux(), &spec, &RunOptions::default(), None)
        .unwrap();

    let f0 = vf.field("phi0").unwrap();
    let f1 = vf.field("phi1").unwrap();
    let f2 = vf.field("phi2").unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        worst = worst.max((f0[i] + f1[i] + f2[i] - 1.0).abs());
    }
    assert!(worst <= 1e-8, "pointwise partition drift {worst:.3e}");
    println!("acceptance 06 PASS — three-phase partition drift {worst:.2e} over 100 steps (tol 1e-8)");
}

#[test]
fn criterion_07_smoothed_boundary_reduction_and_slab_residual() {
    // Part 1: psi = 1 trajectory equals plain diffusion step for step.
    let grid = GridSpec::new([12, 12, 12], [1.0; 3]).unwrap();
    let spec = StepperSpec::new(StepperKind::Imex, 0.5, 50).unwrap();

    let mut sb_fields = VoxelFields::create(grid);
    preset::spinodal_noise(&mut sb_fields, "z", 0.5, 0.3, 5).unwrap();
    sb_fields.add_uniform("psi", 1.0).unwrap();
    let mut plain_fields = VoxelFields::create(grid);
    plain_fields
        .add_from("c", sb_fields.field("z").unwrap().to_vec())
        .unwrap();

    let mut sb = SmoothedBoundary::new(Coefficient::Constant(1.0), 1.0, "psi").unwrap();
    let mut plain = Diffusion::constant(1.0).unwrap();
    let mut traj_sb = Vec::new();
    let mut grab_sb = |_s: usize, _t: f64, f: &VoxelFields| {
        traj_sb.push(f.field("z").unwrap().to_vec());
    };
    run(&mut sb, &mut sb_fields, &BoundarySpec::zero_flux(), &spec, &RunOptions::default(), Some(&mut grab_sb))
        .unwrap();
    let mut traj_plain = Vec::new();
    let mut grab_plain = |_s: usize, _t: f64, f: &VoxelFields| {
        traj_plain.push(f.field("c").unwrap().to_vec());
    };
    run(
        &mut plain,
        &mut plain_fields,
        &BoundarySpec::zero_flux(),
        &spec,
        &RunOptions::default(),
        Some(&mut grab_plain),
    )
    .unwrap();
    let mut worst_step: f64 = 0.0;
    for (a, b) in traj_sb.iter().zip(&traj_plain) {
        for (x, y) in a.iter().zip(b) {
            worst_step = worst_step.max((x - y).abs());
        }
    }
    assert!(worst_step <= 1e-12, "reduction trajectories diverge by {worst_step:.3e}");

    // Part 2: uniform concentration on a diffuse slab. The conservative face
    // discretization cancels the two divergences exactly, so the interior
    // residual sits at round-off — under the second-order envelope at every
    // resolution.
    let residual_at = |n: usize| -> f64 {
        let h = 16.0 / n as f64;
        let grid = GridSpec::new([n, 4, 4], [h, 1.0, 1.0]).unwrap();
        let ctx =
            voxelpde::stencil::StencilContext::new(grid, BoundarySpec::zero_flux()).unwrap();
        let c0 = 0.8;
        let mut vf = VoxelFields::create(grid);
        vf.add_with("psi", |x, _, _| {
            let s = |d: f64| 0.5 * (1.0 - (1.5 * d / 1.5).tanh());
            s(x - 12.0) - s(x - 4.0)
        })
        .unwrap();
        let psi = vf.field("psi").unwrap().to_vec();
        vf.add_from("z", psi.iter().map(|p| p * c0).collect()).unwrap();
        let mut sb = SmoothedBoundary::new(Coefficient::Constant(1.0), 1.0, "psi").unwrap();
        sb.prepare(&vf, &ctx).unwrap();
        let mut scratch = voxelpde::problem::Scratch::for_problem(&sb, &grid);
        let mut out = vec![vec![0.0; grid.len()]];
        sb.eval_rhs(&vf, 0.0, &ctx, &mut scratch, &mut out).unwrap();
        out[0]
            .iter()
            .zip(&psi)
            .filter(|(_, &p)| p > 0.5)
            .map(|(r, _)| r.abs())
            .fold(0.0f64, f64::max)
    };
    let r32 = residual_at(32);
    let r64 = residual_at(64);
    let envelope = (r32 * 0.25 * 1.5).max(1e-10); // second-order decay with slack
    assert!(r32 <= 1e-10, "slab residual at N=32 is {r32:.3e}");
    assert!(r64 <= envelope, "slab residual {r64:.3e} above envelope {envelope:.3e}");

    println!(
        "acceptance 07 PASS — unit-indicator trajectory matches diffusion within {worst_step:.2e}/step; slab residuals {r32:.2e} -> {r64:.2e} under the h² envelope"
    );
}

#[test]
fn criterion_08_memory_linear_in_voxels() {
    let mut per_voxel = Vec::new();
    for n in [32usize, 64, 128] {
        let grid = GridSpec::new([n, n, n], [1.0; 3]).unwrap();
        let mut vf = VoxelFields::create(grid);
        preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 3).unwrap();
        let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
        let spec = StepperSpec::new(StepperKind::Imex, 1.0, 2).unwrap().with_sampling(2);
        let metrics = run(
            &mut problem,
            &mut vf,
            &BoundarySpec::periodic(),
            &spec,
            &RunOptions::default(),
            None,
        )
        .unwrap();
        let bpv = metrics.peak_field_bytes as f64 / grid.len() as f64;
        // Six 8-byte field equivalents is the budget for the whole pipeline.
        assert!(
            metrics.peak_field_bytes <= 6 * grid.len() * 8,
            "{n}³: {} B exceeds 6 field-equivalents",
            metrics.peak_field_bytes
        );
        per_voxel.push((n, bpv));
    }
    let mean = per_voxel.iter().map(|(_, b)| b).sum::<f64>() / per_voxel.len() as f64;
    for (n, bpv) in &per_voxel {
        let dev = ((bpv - mean) / mean).abs();
        assert!(dev <= 0.05, "{n}³: {bpv:.2} B/voxel deviates {:.1}% from mean", dev * 100.0);
    }
    println!(
        "acceptance 08 PASS — measured bytes/voxel {:?} (mean {mean:.2}, max deviation {:.1}%, all ≤ 6 field-equivalents)",
        per_voxel
            .iter()
            .map(|(n, b)| format!("{n}³: {b:.2}"))
            .collect::<Vec<_>>(),
        per_voxel
            .iter()
            .map(|(_, b)| ((b - mean) / mean).abs())
            .fold(0.0f64, f64::max)
            * 100.0
    );
}

fn synthetic_observations(
    problem: &mut dyn Problem,
    initial: &dyn Fn() -> VoxelFields,
    bc: &BoundarySpec,
    stepper: &StepperSpec,
    field: &str,
    sample_steps: &[usize],
) -> Vec<Observation> {
    let mut vf = initial();
    let mut observations = Vec::new();
    let mut grab = |step: usize, t: f64, state: &VoxelFields| {
        if step > 0 && sample_steps.contains(&step) {
            observations.push(Observation {
                t,
                field: field.to_string(),
                data: state.field(field).unwrap().to_vec(),
                mask: None,
            });
        }
    };
    run(problem, &mut vf, bc, stepper, &RunOptions::default(), Some(&mut grab)).unwrap();
    observations
}

#[test]
fn criterion_09_inverse_recovery() {
    let t0 = Instant::now();
    let grid = GridSpec::new([16, 16, 16], [1.0; 3]).unwrap();

    // Diffusion coefficient from five snapshots; start at half the truth.
    let stepper = StepperSpec::new(StepperKind::Imex, 0.05, 50).unwrap();
    let initial = move || {
        let mut vf = VoxelFields::create(grid);
        preset::spinodal_noise(&mut vf, "c", 0.5, 0.3, 13).unwrap();
        vf
    };
    let mut truth = Diffusion::constant(1.0).unwrap();
    let observations = synthetic_observations(
        &mut truth,
        &initial,
        &BoundarySpec::periodic(),
        &stepper,
        "c",
        &[10, 20, 30, 40, 50],
    );
    let inverse = InverseProblem {
        model: ForwardModel {
            build_problem: Box::new(|p| Ok(Box::new(Diffusion::constant(p[0])?))),
            initial_fields: Box::new(move || Ok(initial())),
            bc: BoundarySpec::periodic(),
            stepper,
            options: RunOptions::default(),
        },
        params: vec![ParamSpec::new("d", 0.05, 10.0).unwrap().with_scale(1.0)],
        observations,
    };
    let fit = inverse.fit(&[0.5]).unwrap();
    let d_err = (fit.params[0] - 1.0).abs();
    assert!(d_err <= 0.01, "D fit {} off by {d_err:.4}", fit.params[0]);

    // Cahn-Hilliard mobility scale from two spinodal snapshots; start at 2x.
    let ch_stepper = StepperSpec::new(StepperKind::Imex, 1.0, 50).unwrap();
    let ch_initial = move || {
        let mut vf = VoxelFields::create(grid);
        preset::spinodal_noise(&mut vf, "phi", 0.5, 0.05, 29).unwrap();
        vf
    };
    let mut ch_truth = CahnHilliard::new(1.0, 1.0, 1.0).unwrap();
    let ch_observations = synthetic_observations(
        &mut ch_truth,
        &ch_initial,
        &BoundarySpec::periodic(),
        &ch_stepper,
        "phi",
        &[25, 50],
    );
    let ch_inverse = InverseProblem {
        model: ForwardModel {
            build_problem: Box::new(|p| {
                let problem = CahnHilliard::new(1.0, 1.0, p[0])?;
                Ok(Box::new(problem))
            }),
            initial_fields: Box::new(move || Ok(ch_initial())),
            bc: BoundarySpec::periodic(),
            stepper: ch_stepper,
            options: RunOptions::default(),
        },
        params: vec![ParamSpec::new("d0", 0.25, 8.0).unwrap().with_scale(1.0)],
        observations: ch_observations,
    };
    let ch_fit = ch_inverse.fit(&[2.0]).unwrap();
    let d0_err = (ch_fit.params[0] - 1.0).abs();
    assert!(d0_err <= 0.05, "D0 fit {} off by {d0_err:.4}", ch_fit.params[0]);

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed <= 120.0, "fits took {elapsed:.0}s, budget 2 min");
    println!(
        "acceptance 09 PASS — D recovered to {:.4} ({d_err:.2e} off, tol 1%), CH D0 to {:.4} ({d0_err:.2e} off, tol 5%), {elapsed:.0}s",
        fit.params[0], ch_fit.params[0]
    );
}

#[test]
fn criterion_10_seeded_runs_bit_identical() {
    let bin = env!("CARGO_BIN_EXE_voxelpde");
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
[grid]
dims = [16, 16, 16]
spacing = [1.0, 1.0, 1.0]

[bc]
x = "periodic"
y = "periodic"
z = "periodic"

[problem]
name = "cahn-hilliard"
gamma0 = 1.0
eps = 1.0
d0 = 1.0

[initial.phi]
preset = "spinodal-noise"
mean = 0.5
amplitude = 0.05
seed = 42

[stepper]
kind = "imex"
dt = 1.0
steps = 100

[output]
formats = ["raw"]
"#;
    let config_path = dir.path().join("run.toml");
    std::fs::write(&config_path, config).unwrap();
    for out in ["a", "b"] {
        let status = std::process::Command::new(bin)
            .current_dir(dir.path())
            .args(["run", "--config", config_path.to_str().unwrap(), "--out", out])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let raw_a = std::fs::read(dir.path().join("a/phi_final.raw")).unwrap();
    let raw_b = std::fs::read(dir.path().join("b/phi_final.raw")).unwrap();
    assert_eq!(raw_a, raw_b, "final raw dumps differ");

    // Wall-clock is the one nondeterministic column; everything else must
    // match bit for bit.
    let strip_wall = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect()
    };
    let ma = strip_wall(&std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap());
    let mb = strip_wall(&std::fs::read_to_string(dir.path().join("b/metrics.csv")).unwrap());
    assert_eq!(ma.len(), 102);
    assert_eq!(ma, mb, "metrics differ beyond wall time");
    println!(
        "acceptance 10 PASS — two seeded CLI runs: {} byte raw dumps identical, 101 metric rows identical",
        raw_a.len()
    );
}

#[test]
fn acceptance_bc_families_in_oracle_include_flux_and_mixed() {
    // Supplementary to criterion 4: the mixed and flux boundary handling
    // also matches the dense assembly.
    let gamma0 = 0.9;
    let dt = 1.5;
    let bc = BoundarySpec::new([
        AxisBc::periodic(),
        AxisBc::dirichlet(0.25, -0.5),
        AxisBc { lo: voxelpde::grid::BcSide::ZeroFlux, hi: voxelpde::grid::BcSide::ZeroFlux },
    ])
    .unwrap();
    let grid = GridSpec::new([8, 8, 8], [1.0, 0.9, 1.1]).unwrap();
    let u0: Vec<f64> = (0..grid.len())
        .map(|i| preset::uniform01(3, i as u64) - 0.25)
        .collect();
    let oracle = voxelpde::verify::dense_oracle_step(&u0, gamma0, &grid, &bc, dt).unwrap();

    use voxelpde::spectral::{SpectralSymbol, SymbolKind, TransformPlan, WavenumberMode};
    let ctx = voxelpde::stencil::StencilContext::new(grid, bc).unwrap();
    let mut vf = VoxelFields::create(grid);
    vf.add_from("c", u0.clone()).unwrap();
    let mut problem = Diffusion::constant(gamma0).unwrap();
    problem.prepare(&vf, &ctx).unwrap();
    let mut scratch = voxelpde::problem::Scratch::for_problem(&problem, &grid);
    let mut rhs = vec![vec![0.0; grid.len()]];
    problem.eval_rhs(&vf, 0.0, &ctx, &mut scratch, &mut rhs).unwrap();
    let plan = TransformPlan::new(&grid, &bc).unwrap();
    let symbol =
        SpectralSymbol::build(SymbolKind::Laplacian { coef: gamma0 }, &plan, WavenumberMode::ModifiedFd)
            .unwrap();
    let mut u = u0;
    voxelpde::stepper::imex_step(&plan, &symbol, dt, &mut u, &rhs[0]);
    let scale = oracle.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
    for (a, b) in u.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-10 * scale);
    }
}
