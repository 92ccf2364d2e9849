use std::path::Path;

use serde_json::Value;
use stablepca::dual::{dual_solve, DualOptions, DualStep};
use stablepca::moments::{compute_second_moment, load_moment_matrices, load_sources, SourceLayout};
use stablepca::simulate::{
    bench_timing, certificate_grid, certificate_table, convergence, factor_comparison, settings,
    write_rows_csv, BenchConfig, CertificateGridConfig, ConvergenceConfig, FactorConfig, MetricRow,
    SettingsConfig,
};
use stablepca::{solve_variant, Error, Execution, Result, SecondMomentSet, SolveOptions, StepSizes};

use crate::args::{BenchArgs, Command, DualArgs, FitArgs, InputArgs, Scenario, SimulateArgs};
use crate::report::{add_dual_report, add_solve_report, sibling, write_atomic, Report};

/// What a finished command wants printed to stdout.
pub type Summary = String;

pub fn run(command: &Command) -> Result<Summary> {
    match command {
        Command::Fit(a) => fit(a),
        Command::Dual(a) => dual(a),
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => bench(a),
    }
}

/// Loaded moments plus the provenance fields shared by `fit` and `dual`.
fn load(input: &InputArgs, report: &mut Report) -> Result<SecondMomentSet> {
    let header = input.header.into();
    let m = if !input.moments.is_empty() {
        report.set("center", Value::Null);
        load_moment_matrices(&input.moments, header)?
    } else {
        let layout = match &input.source_column {
            Some(col) => {
                let [path] = input.input.as_slice() else {
                    return Err(Error::InvalidArgument(
                        "--source-column takes exactly one --input file".into(),
                    ));
                };
                SourceLayout::SingleFile {
                    path: path.clone(),
                    source_column: col.clone(),
                }
            }
            None => SourceLayout::PerFile(input.input.clone()),
        };
        let samples = load_sources(&layout, header)?;
        report.set("center", input.center.into());
        compute_second_moment(&samples, input.center)?
    };
    report.set("sources", m.labels().to_vec().into());
    report.set(
        "sample_sizes",
        m.sample_sizes().map_or(Value::Null, |n| n.to_vec().into()),
    );
    report.set("dim", m.dim().into());
    report.set("rho_max", m.rho_max().into());
    Ok(m)
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

fn fit(a: &FitArgs) -> Result<Summary> {
    let mut report = Report::new(&a.out);
    let m = load(&a.input, &mut report)?;
    let k = a.k as usize;
    let variant = a.variant.into();
    let mut opts = SolveOptions {
        eta_scale: positive("--eta-scale", a.eta_scale)?,
        gap_stride: a.gap_stride.map(|s| s as usize),
        gap_tolerance: a.gap_tol.map(|t| positive("--gap-tol", t)).transpose()?,
        ..SolveOptions::default()
    };
    if let (Some(em), Some(eo)) = (a.eta_m, a.eta_omega) {
        opts.steps = Some(StepSizes::new(em, eo)?);
    }
    if let Some(t) = a.tight_tol {
        opts.tight_tol = positive("--tight-tol", t)?;
    }
    let r = solve_variant(&m, k, a.iterations as usize, variant, &opts)?;

    report.set("command", "fit".into());
    report.set("variant", variant.name().into());
    report.set("k", k.into());
    report.set("eta_scale", opts.eta_scale.into());
    report.set("tight_tol", opts.tight_tol.into());
    add_solve_report(&mut report, &r);
    report.write()?;
    Ok(format!(
        "tau = {:.6e}  worst_case_ev = {:.6e}  tight = {}  -> {}",
        r.tau,
        r.worst_case_ev,
        r.tight,
        a.out.display()
    ))
}

fn dual(a: &DualArgs) -> Result<Summary> {
    let mut report = Report::new(&a.out);
    let m = load(&a.input, &mut report)?;
    let k = a.k as usize;
    let opts = DualOptions {
        step: a
            .dual_eta
            .map(|e| positive("--dual-eta", e).map(DualStep::Constant))
            .transpose()?,
        gap_tol: a.gap_tol.map(|t| positive("--gap-tol", t)).transpose()?,
        trace_stride: a.gap_stride.map(|s| s as usize),
        ..DualOptions::default()
    };
    let r = dual_solve(&m, k, a.iterations as usize, &opts)?;

    report.set("command", "dual".into());
    report.set("k", k.into());
    add_dual_report(&mut report, &r);
    report.write()?;
    Ok(format!(
        "phi = {:.6e}  eigengap = {:.6e}  tight = {}  -> {}",
        r.phi_at_avg,
        r.eigengap,
        r.tight,
        a.out.display()
    ))
}

fn rows_csv(rows: &[MetricRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, rows)?;
    Ok(buf)
}

fn single(name: &str, list: &Option<Vec<usize>>) -> Result<Option<usize>> {
    match list.as_deref() {
        None => Ok(None),
        Some([v]) => Ok(Some(*v)),
        Some(_) => Err(Error::InvalidArgument(format!(
            "{name} takes a single value for this scenario"
        ))),
    }
}

fn simulate(a: &SimulateArgs) -> Result<Summary> {
    let exec = Execution::default();
    let eta_scale = a.eta_scale.map(|e| positive("--eta-scale", e)).transpose()?;
    let (rows, table) = match a.scenario {
        Scenario::Settings => {
            let mut cfg = SettingsConfig {
                heteroscedastic: !a.homoscedastic,
                ..SettingsConfig::default()
            };
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.iterations, a.iterations.map(|t| t as usize));
            set(&mut cfg.eta_scale, eta_scale);
            (settings(&cfg, exec)?, None)
        }
        Scenario::Factor => {
            let mut cfg = FactorConfig::default();
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.iterations, a.iterations.map(|t| t as usize));
            set(&mut cfg.k, a.k.map(|k| k as usize));
            set(&mut cfg.reps, a.reps.map(|r| r as usize));
            set(&mut cfg.d, single("--dims", &a.dims)?);
            set(&mut cfg.n, single("--ns", &a.ns)?);
            set(&mut cfg.source_counts, a.sources.clone());
            set(&mut cfg.eta_scale, eta_scale);
            (factor_comparison(&cfg, exec)?, None)
        }
        Scenario::CertificateGrid => {
            let mut cfg = CertificateGridConfig::default();
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.iterations, a.iterations.map(|t| t as usize));
            set(&mut cfg.k, a.k.map(|k| k as usize));
            set(&mut cfg.reps, a.reps.map(|r| r as usize));
            set(&mut cfg.dims, a.dims.clone());
            set(&mut cfg.ns, a.ns.clone());
            set(&mut cfg.sources, single("--sources", &a.sources)?);
            set(&mut cfg.eta_scale, eta_scale);
            let rows = certificate_grid(&cfg, exec)?;
            let table = certificate_table(&cfg, &rows);
            (rows, Some(table))
        }
        Scenario::Convergence => {
            let mut cfg = ConvergenceConfig::default();
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.iterations, a.iterations.map(|t| t as usize));
            set(&mut cfg.k, a.k.map(|k| k as usize));
            set(&mut cfg.reps, a.reps.map(|r| r as usize));
            set(&mut cfg.dims, a.dims.clone());
            set(&mut cfg.ns, a.ns.clone());
            set(&mut cfg.sources, single("--sources", &a.sources)?);
            set(&mut cfg.eta_scale, eta_scale);
            (convergence(&cfg, exec)?, None)
        }
    };
    let written = match table {
        Some(table) => {
            let long = sibling(&a.out, "rows");
            write_atomic(&long, &rows_csv(&rows)?)?;
            write_atomic(&a.out, table.as_bytes())?;
            format!("{} and {}", a.out.display(), long.display())
        }
        None => {
            write_atomic(&a.out, &rows_csv(&rows)?)?;
            a.out.display().to_string()
        }
    };
    Ok(format!("{} metric rows -> {written}", rows.len()))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn bench(a: &BenchArgs) -> Result<Summary> {
    if a.dims.is_empty() || a.dims.contains(&0) {
        return Err(Error::InvalidArgument("--dims needs positive dimensions".into()));
    }
    let cfg = BenchConfig {
        dims: a.dims.clone(),
        iterations: a.iterations as usize,
        sources: a.sources as usize,
        k: a.k as usize,
        seed: a.seed,
    };
    let rows = bench_timing(&cfg, Execution::default())?;
    let mut out = String::from("d,iterations,total_seconds,per_iteration_seconds\n");
    let mut summary = String::new();
    for r in &rows {
        out.push_str(&format!(
            "{},{},{:?},{:?}\n",
            r.d, r.iterations, r.total_seconds, r.per_iteration_seconds
        ));
        summary.push_str(&format!(
            "d = {:>4}  {:.3e} s/iteration\n",
            r.d, r.per_iteration_seconds
        ));
    }
    write_atomic(&a.out, out.as_bytes())?;
    summary.push_str(&format!("-> {}", a.out.display()));
    Ok(summary)
}

/// Applies `ROBUST_MSPCA_THREADS` to the global worker pool.
pub fn configure_threads(value: Option<&str>) -> std::result::Result<(), String> {
    let Some(raw) = value else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("ROBUST_MSPCA_THREADS must be a positive integer, got {raw:?}"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Output paths must name a file.
pub fn check_out(path: &Path) -> Result<()> {
    if path.file_name().is_none() || path.is_dir() {
        return Err(Error::InvalidArgument(format!(
            "--out {} is not a file path",
            path.display()
        )));
    }
    Ok(())
}
