//! `voxelpde` — run voxel-grid PDE simulations from TOML configs, execute
//! the convergence suite, benchmark scaling, and fit parameters.
//!
//! Exit codes: 0 success, 1 config error, 2 NaN/divergence abort,
//! 3 convergence failure, 4 fit hit the iteration limit.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, ConfigResult, RunConfig};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use voxelpde::grid::VoxelFields;
use voxelpde::inverse::FitStatus;
use voxelpde::stepper::{run, RunError, RunMetrics, RunOptions, StepperKind, StepperSpec};
use voxelpde::verify::{run_case, suite_with_seam, SuiteSeam};

#[derive(Parser)]
#[command(name = "voxelpde", version, about = "Voxel-grid PDE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: machine parallelism; env VOXELPDE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config value by dotted path, e.g. --set stepper.dt=0.5.
    #[arg(long = "set", value_parser = parse_set)]
    set: Vec<(String, String)>,
    /// Print the effective config and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a config file.
    Run(ConfigArgs),
    /// Run the convergence suite.
    Converge {
        /// Only run cases whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Per-step wall time and measured buffer bytes across grid sizes.
    Bench {
        /// Comma-separated cube edge lengths, e.g. 32,64,128.
        #[arg(long, value_delimiter = ',', default_value = "32,64")]
        sizes: Vec<usize>,
        /// Timed steps per size.
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Fit parameters against observations ([inverse] config section).
    Fit(ConfigArgs),
}

fn parse_set(raw: &str) -> Result<(String, String), String> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("--set expects key=value, got \"{raw}\""))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(cli.threads);
    let code = match cli.command {
        Command::Run(args) => cmd_run(&args, cli.out.as_deref()),
        Command::Converge { filter } => cmd_converge(filter.as_deref(), cli.out.as_deref()),
        Command::Bench { sizes, steps } => cmd_bench(&sizes, steps, cli.out.as_deref()),
        Command::Fit(args) => cmd_fit(&args, cli.out.as_deref()),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("VOXELPDE_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_config(args: &ConfigArgs) -> ConfigResult<(RunConfig, PathBuf)> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", args.config.display())))?;
    let config = config::parse_config(&text, &args.set)?;
    let dir = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, dir))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn write_metrics_csv(path: &Path, metrics: &RunMetrics) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "step,t,mass,energy,min,max,wall_ms")?;
    for row in &metrics.rows {
        writeln!(
            f,
            "{},{:?},{:?},{},{:?},{:?},{:?}",
            row.step,
            row.t,
            row.mass[0],
            fmt_opt(row.energy),
            row.min[0],
            row.max[0],
            row.wall_ms
        )?;
    }
    f.flush()
}

fn dump_fields(
    vf: &VoxelFields,
    formats: &[config::OutputFormat],
    dir: &Path,
    tag: &str,
) -> voxelpde::Result<()> {
    for format in formats {
        match format {
            config::OutputFormat::Vtk => {
                voxelpde::io::write_vtk(vf, &dir.join(format!("fields_{tag}.vtk")))?;
            }
            config::OutputFormat::Raw => {
                for name in vf.names().map(str::to_string).collect::<Vec<_>>() {
                    voxelpde::io::write_raw(
                        vf,
                        &name,
                        voxelpde::io::Dtype::F64,
                        &dir.join(format!("{name}_{tag}.raw")),
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &ConfigArgs, out_override: Option<&Path>) -> ConfigResult<ExitCode> {
    let (config, config_dir) = load_config(args)?;
    if args.print_config {
        print!("{}", config::print_config(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let mut problem = config.problem.build()?;
    let bc = config::build_bc(&config)?;
    let stepper = config::build_stepper(&config)?;
    let mut fields =
        config::build_fields(&config, problem.name(), &problem.required(), &config_dir)?;

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&out_dir)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", out_dir.display())))?;

    let cadence = config.output.cadence;
    let formats = config.output.formats.clone();
    let steps = stepper.steps;
    let mut dump_err: Option<voxelpde::Error> = None;
    let result = {
        let out_dir = out_dir.clone();
        let mut on_step = |step: usize, _t: f64, state: &VoxelFields| {
            let due = cadence > 0 && step % cadence == 0 && step < steps;
            if due && dump_err.is_none() {
                if let Err(e) = dump_fields(state, &formats, &out_dir, &format!("step{step:06}")) {
                    dump_err = Some(e);
                }
            }
        };
        run(
            problem.as_mut(),
            &mut fields,
            &bc,
            &stepper,
            &RunOptions::default(),
            Some(&mut on_step),
        )
    };
    if let Some(e) = dump_err {
        return Err(ConfigError(format!("output write failed: {e}")));
    }

    match result {
        Ok(metrics) => {
            dump_fields(&fields, &formats, &out_dir, "final")
                .map_err(|e| ConfigError(format!("output write failed: {e}")))?;
            write_metrics_csv(&out_dir.join("metrics.csv"), &metrics)
                .map_err(|e| ConfigError(format!("metrics write failed: {e}")))?;
            let last = metrics.rows.last().expect("at least the initial sample");
            println!(
                "completed {} steps of {} to t = {:?}; mass {:?}, range [{:?}, {:?}], peak buffers {} B",
                steps,
                problem.name(),
                last.t,
                last.mass[0],
                last.min[0],
                last.max[0],
                metrics.peak_field_bytes
            );
            Ok(ExitCode::SUCCESS)
        }
        Err(RunError::NanAbort { step, metrics }) => {
            write_metrics_csv(&out_dir.join("metrics.csv"), &metrics)
                .map_err(|e| ConfigError(format!("metrics write failed: {e}")))?;
            eprintln!("aborted: non-finite or diverged field values at step {step}; partial metrics kept");
            Ok(ExitCode::from(2))
        }
        Err(RunError::Setup(e)) => Err(ConfigError(e.to_string())),
    }
}

fn cmd_converge(filter: Option<&str>, out_override: Option<&Path>) -> ConfigResult<ExitCode> {
    // Test seam: a deliberately first-order-inconsistent boundary treatment,
    // used to prove the suite detects wrong orders.
    let seam = if std::env::var("VOXELPDE_BREAK_STENCIL").is_ok_and(|v| v == "1") {
        SuiteSeam::BreakDirichletGhost
    } else {
        SuiteSeam::None
    };
    let suite = suite_with_seam(seam);
    let mut all_pass = true;
    let mut rows = Vec::new();
    println!("{:42} {:>9} {:>8} {:>6}", "case", "observed", "nominal", "pass");
    for case in &suite {
        if let Some(f) = filter {
            if !case.name.contains(f) {
                continue;
            }
        }
        let report = run_case(case);
        all_pass &= report.pass;
        println!(
            "{:42} {:>9} {:>8} {:>6}{}",
            report.name,
            report
                .observed
                .map(|o| format!("{o:.3}"))
                .unwrap_or_else(|| "-".into()),
            format!("{:.1}", report.nominal),
            if report.pass { "ok" } else { "FAIL" },
            if report.note.is_empty() { String::new() } else { format!("  ({})", report.note) }
        );
        rows.push(report);
    }
    if rows.is_empty() {
        println!("no cases match the filter");
    }

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut csv = String::from("case,resolutions,errors,observed_order,nominal,pass\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.name,
            r.ladder.iter().map(|h| format!("{h:?}")).collect::<Vec<_>>().join(";"),
            r.errors.iter().map(|e| format!("{e:e}")).collect::<Vec<_>>().join(";"),
            r.observed.map(|o| format!("{o:.4}")).unwrap_or_default(),
            r.nominal,
            r.pass
        ));
    }
    fs::write(out_dir.join("converge.csv"), csv)
        .map_err(|e| ConfigError(format!("report write failed: {e}")))?;

    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn cmd_bench(sizes: &[usize], steps: usize, out_override: Option<&Path>) -> ConfigResult<ExitCode> {
    use voxelpde::grid::{BoundarySpec, GridSpec};
    use voxelpde::problem::CahnHilliard;

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut csv = String::from("size,voxels,per_step_wall_ms,peak_field_bytes,bytes_per_voxel\n");
    println!("{:>6} {:>12} {:>16} {:>18} {:>16}", "size", "voxels", "per_step_ms", "peak_bytes", "bytes/voxel");
    for &n in sizes {
        let voxels = n * n * n;
        // Pre-flight estimate: fields + scratch + transform, about 6 field
        // equivalents for the Cahn-Hilliard IMEX pipeline.
        let estimate = voxels * 8 * 6;
        println!("# size {n}: estimated peak field buffers ~{:.1} MiB", estimate as f64 / 1048576.0);

        let attempt = || -> Result<(f64, usize), RunError> {
            let grid = GridSpec::new([n, n, n], [1.0; 3]).map_err(RunError::Setup)?;
            let mut vf = VoxelFields::create(grid);
            // Allocation of the largest buffers happens inside the run; the
            // field itself is allocated here through the fallible path.
            let data = voxelpde::stepper::try_alloc_field(voxels).map_err(RunError::Setup)?;
            let mut noisy = data;
            for (i, v) in noisy.iter_mut().enumerate() {
                *v = 0.5 + 0.05 * (2.0 * voxelpde::preset::uniform01(7, i as u64) - 1.0);
            }
            vf.add_from("phi", noisy).map_err(RunError::Setup)?;
            let mut problem = CahnHilliard::new(1.0, 1.0, 1.0).map_err(RunError::Setup)?;
            // Warm-up step, then timed steps.
            let warm = StepperSpec::new(StepperKind::Imex, 1.0, 1).map_err(RunError::Setup)?;
            run(&mut problem, &mut vf, &BoundarySpec::periodic(), &warm, &RunOptions::default(), None)?;
            if steps == 0 {
                return Ok((0.0, 0));
            }
            let spec = StepperSpec::new(StepperKind::Imex, 1.0, steps)
                .map_err(RunError::Setup)?
                .with_sampling(steps);
            let t0 = std::time::Instant::now();
            let metrics =
                run(&mut problem, &mut vf, &BoundarySpec::periodic(), &spec, &RunOptions::default(), None)?;
            let per_step = t0.elapsed().as_secs_f64() * 1e3 / steps as f64;
            Ok((per_step, metrics.peak_field_bytes))
        };

        match attempt() {
            Ok((per_step, peak)) if steps > 0 => {
                let bpv = peak as f64 / voxels as f64;
                println!("{n:>6} {voxels:>12} {per_step:>16.3} {peak:>18} {bpv:>16.2}");
                csv.push_str(&format!("{n},{voxels},{per_step:?},{peak},{bpv:?}\n"));
            }
            Ok(_) => {}
            Err(RunError::Setup(voxelpde::Error::Alloc { bytes })) => {
                eprintln!("warning: size {n} skipped, allocation of {bytes} bytes failed");
            }
            Err(e) => return Err(ConfigError(format!("bench run failed at size {n}: {e}"))),
        }
    }
    fs::write(out_dir.join("bench.csv"), &csv)
        .map_err(|e| ConfigError(format!("report write failed: {e}")))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(args: &ConfigArgs, out_override: Option<&Path>) -> ConfigResult<ExitCode> {
    let (config, config_dir) = load_config(args)?;
    if args.print_config {
        print!("{}", config::print_config(&config)?);
        return Ok(ExitCode::SUCCESS);
    }
    let (inverse, p0) = config::build_inverse(&config, &config_dir)?;
    let result = inverse.fit(&p0).map_err(|e| ConfigError(e.to_string()))?;

    let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| config.output.dir.clone());
    fs::create_dir_all(&out_dir)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", out_dir.display())))?;
    let names: Vec<&str> = inverse.params.iter().map(|p| p.name.as_str()).collect();
    let mut csv = format!("iter,{},loss,step_size\n", names.join(","));
    for it in &result.trace {
        csv.push_str(&format!(
            "{},{},{:?},{:?}\n",
            it.iter,
            it.params.iter().map(|p| format!("{p:?}")).collect::<Vec<_>>().join(","),
            it.loss,
            it.step
        ));
    }
    fs::write(out_dir.join("fit_trace.csv"), csv)
        .map_err(|e| ConfigError(format!("trace write failed: {e}")))?;

    for (name, value) in names.iter().zip(&result.params) {
        println!("{name} = {value:?}");
    }
    println!(
        "loss = {:?} after {} iterations ({:?})",
        result.loss, result.iterations, result.status
    );
    Ok(match result.status {
        FitStatus::MaxIterations => ExitCode::from(4),
        _ => ExitCode::SUCCESS,
    })
}
