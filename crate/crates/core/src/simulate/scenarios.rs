use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mirrorprox::{solve, SolveOptions};
use crate::moments::{compute_second_moment_with, SecondMomentSet, SourceSamples};
use crate::parallel::Execution;
use crate::spectral::ProjectionMatrix;
use crate::variants::{solve_variant, VariantKind};

use super::{
    angle_to_axis_deg, capture_error, derive_seed, gen_factor_sources, gen_two_feature_sources,
    leading_direction, normal_matrix, ood_eval, pooled_pca, recovery_error, rng_for, stream,
    worst_case_explained_variance, FactorModelSpec, TwoFeatureSpec,
};

/// The four multi-source PCA methods compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Stable,
    Pooled,
    Squared,
    Fair,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Stable, Method::Pooled, Method::Squared, Method::Fair];

    pub fn name(self) -> &'static str {
        match self {
            Method::Stable => "StablePCA",
            Method::Pooled => "PooledPCA",
            Method::Squared => "SquaredPCA",
            Method::Fair => "FairPCA",
        }
    }

    fn variant(self) -> Option<VariantKind> {
        match self {
            Method::Stable => Some(VariantKind::Stable),
            Method::Squared => Some(VariantKind::Squared),
            Method::Fair => Some(VariantKind::Fair),
            Method::Pooled => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One long-form result: a metric for one method in one replication of one
/// sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: &'static str,
    /// Position of the cell in the sweep; rows sort by `(cell, replication)`.
    pub cell: usize,
    pub key: String,
    pub replication: usize,
    pub method: Method,
    pub metric: &'static str,
    pub value: f64,
}

fn row(
    scenario: &'static str,
    cell: usize,
    key: &str,
    replication: usize,
    method: Method,
    metric: &'static str,
    value: f64,
) -> MetricRow {
    MetricRow {
        scenario,
        cell,
        key: key.to_string(),
        replication,
        method,
        metric,
        value,
    }
}

fn sorted(mut rows: Vec<MetricRow>) -> Vec<MetricRow> {
    // Stable sort: within a (cell, replication) the emission order is kept.
    rows.sort_by_key(|r| (r.cell, r.replication));
    rows
}

/// Writes rows as CSV with a header line.
pub fn write_rows_csv<W: io::Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Io {
        path: "<csv>".into(),
        source: io::Error::other(e),
    };
    w.write_record(["scenario", "cell", "key", "replication", "method", "metric", "value"])
        .map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.scenario.to_string(),
            r.cell.to_string(),
            r.key.clone(),
            r.replication.to_string(),
            r.method.name().to_string(),
            r.metric.to_string(),
            format!("{:?}", r.value),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

fn solver_options(eta_scale: f64) -> SolveOptions {
    SolveOptions {
        eta_scale,
        check_iterates: false,
        exec: Execution::Sequential,
        ..SolveOptions::default()
    }
}

/// Fits `method` and returns the projector and, for the saddle-point
/// methods, the certificate.
fn fit(
    method: Method,
    samples: &SourceSamples,
    moments: &SecondMomentSet,
    k: usize,
    iterations: usize,
    opts: &SolveOptions,
) -> Result<(ProjectionMatrix, Option<f64>)> {
    match method.variant() {
        Some(v) => {
            let r = solve_variant(moments, k, iterations, v, opts)?;
            Ok((r.p_rounded, Some(r.tau)))
        }
        None => Ok((pooled_pca(samples, k, false)?, None)),
    }
}

/// Settings 1–3 of the two-feature example with `k = 1`.
#[derive(Debug, Clone)]
pub struct SettingsConfig {
    pub seed: u64,
    pub iterations: usize,
    pub eta_scale: f64,
    /// Also run the heteroscedastic-noise version used to contrast the
    /// three robust variants.
    pub heteroscedastic: bool,
}

impl Default for SettingsConfig {
    fn default() -> Self {
        SettingsConfig {
            seed: 2024,
            iterations: 500,
            eta_scale: 1.0,
            heteroscedastic: true,
        }
    }
}

/// Leading direction, its angle to the `X₁` axis and the worst-case
/// explained variance for every method in every setting.
pub fn settings(cfg: &SettingsConfig, exec: Execution) -> Result<Vec<MetricRow>> {
    let mut cells: Vec<(String, TwoFeatureSpec)> = Vec::new();
    for s in 1..=3u8 {
        let seed = derive_seed(cfg.seed, &[stream::REPLICATION, s as u64]);
        cells.push((format!("setting{s}"), TwoFeatureSpec::setting(s, seed)?));
    }
    if cfg.heteroscedastic {
        for s in 1..=3u8 {
            let seed = derive_seed(cfg.seed, &[stream::REPLICATION, 10 + s as u64]);
            cells.push((format!("setting{s}-hetero"), TwoFeatureSpec::heteroscedastic(s, seed)?));
        }
    }
    let opts = solver_options(cfg.eta_scale);
    let per_cell = exec.map(cells.len(), |c| -> Result<Vec<MetricRow>> {
        let (key, spec) = &cells[c];
        let samples = gen_two_feature_sources(spec)?;
        let moments = compute_second_moment_with(&samples, false, Execution::Sequential)?;
        let mut rows = Vec::new();
        for method in Method::ALL {
            let (p, tau) = fit(method, &samples, &moments, 1, cfg.iterations, &opts)?;
            let v = leading_direction(&p)?;
            // Orient into the right half-plane so directions compare.
            let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
            let s = "settings";
            rows.push(row(s, c, key, 0, method, "direction_x1", sign * v[0]));
            rows.push(row(s, c, key, 0, method, "direction_x2", sign * v[1]));
            rows.push(row(s, c, key, 0, method, "angle_x1_deg", angle_to_axis_deg(&v, 0)));
            rows.push(row(
                s,
                c,
                key,
                0,
                method,
                "worst_case_ev",
                worst_case_explained_variance(&p, &moments)?,
            ));
            if let Some(t) = tau {
                rows.push(row(s, c, key, 0, method, "tau", t));
            }
        }
        Ok(rows)
    });
    Ok(sorted(per_cell.into_iter().collect::<Result<Vec<_>>>()?.concat()))
}

/// The generalization comparison on the factor model.
#[derive(Debug, Clone)]
pub struct FactorConfig {
    pub source_counts: Vec<usize>,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    pub iterations: usize,
    pub l_out: usize,
    pub seed: u64,
    pub eta_scale: f64,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            source_counts: vec![2, 4, 6, 8, 10],
            d: 40,
            n: 2000,
            k: 3,
            reps: 20,
            iterations: 500,
            l_out: 100,
            seed: 2024,
            eta_scale: 1.0,
        }
    }
}

/// Recovery (or capture) error, in-distribution and out-of-distribution
/// worst-case explained variance for each method, per `(L, replication)`.
pub fn factor_comparison(cfg: &FactorConfig, exec: Execution) -> Result<Vec<MetricRow>> {
    let tasks: Vec<(usize, usize)> = (0..cfg.source_counts.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let opts = solver_options(cfg.eta_scale);
    let per_task = exec.map(tasks.len(), |i| -> Result<Vec<MetricRow>> {
        let (c, rep) = tasks[i];
        let sources = cfg.source_counts[c];
        let key = format!("L={sources}");
        let spec = FactorModelSpec {
            d: cfg.d,
            sources,
            n: cfg.n,
            seed: derive_seed(cfg.seed, &[stream::REPLICATION, sources as u64, rep as u64]),
            ..FactorModelSpec::default()
        };
        let draw = gen_factor_sources(&spec)?;
        let moments = compute_second_moment_with(&draw.samples, false, Execution::Sequential)?;
        let ood_seed = derive_seed(spec.seed, &[stream::INSTANCE]);
        let mut rows = Vec::new();
        for method in Method::ALL {
            let (p, tau) = fit(method, &draw.samples, &moments, cfg.k, cfg.iterations, &opts)?;
            let s = "factor";
            if cfg.k == spec.shared_rank {
                rows.push(row(s, c, &key, rep, method, "recovery_error", recovery_error(&p, &draw.shared)?));
            }
            if cfg.k >= spec.shared_rank {
                rows.push(row(s, c, &key, rep, method, "capture_error", capture_error(&p, &draw.shared)?));
            }
            rows.push(row(
                s,
                c,
                &key,
                rep,
                method,
                "in_dist_ev",
                worst_case_explained_variance(&p, &moments)?,
            ));
            rows.push(row(s, c, &key, rep, method, "ood_ev", ood_eval(&p, &spec, cfg.l_out, ood_seed)?));
            if let Some(t) = tau {
                rows.push(row(s, c, &key, rep, method, "tau", t));
            }
        }
        Ok(rows)
    });
    Ok(sorted(per_task.into_iter().collect::<Result<Vec<_>>>()?.concat()))
}

/// The certificate table: `τ` over a `d × n` grid.
#[derive(Debug, Clone)]
pub struct CertificateGridConfig {
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub sources: usize,
    pub k: usize,
    pub reps: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eta_scale: f64,
}

impl Default for CertificateGridConfig {
    fn default() -> Self {
        CertificateGridConfig {
            dims: vec![10, 20, 30],
            ns: vec![100, 300, 600, 1200, 2500],
            sources: 4,
            k: 3,
            reps: 10,
            iterations: 500,
            seed: 2024,
            eta_scale: 1.0,
        }
    }
}

/// One `tau` row per `(d, n, replication)`, cells in row-major `(d, n)`
/// order.
pub fn certificate_grid(cfg: &CertificateGridConfig, exec: Execution) -> Result<Vec<MetricRow>> {
    let cells: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.ns.iter().map(move |&n| (d, n)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let opts = solver_options(cfg.eta_scale);
    let per_task = exec.map(tasks.len(), |i| -> Result<MetricRow> {
        let (c, rep) = tasks[i];
        let (d, n) = cells[c];
        let spec = FactorModelSpec {
            d,
            sources: cfg.sources,
            n,
            seed: derive_seed(cfg.seed, &[stream::REPLICATION, d as u64, n as u64, rep as u64]),
            ..FactorModelSpec::default()
        };
        let draw = gen_factor_sources(&spec)?;
        let moments = compute_second_moment_with(&draw.samples, false, Execution::Sequential)?;
        let r = solve(&moments, cfg.k, cfg.iterations, &opts)?;
        Ok(row("certificate-grid", c, &format!("d={d},n={n}"), rep, Method::Stable, "tau", r.tau))
    });
    Ok(sorted(per_task.into_iter().collect::<Result<Vec<_>>>()?))
}

/// Mean `τ` per cell laid out with one row per `d` and one column per `n`.
pub fn certificate_table(cfg: &CertificateGridConfig, rows: &[MetricRow]) -> String {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == "tau") {
        let e = sums.entry(r.cell).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
    }
    let mut out = String::from("d\\n");
    for n in &cfg.ns {
        out.push_str(&format!(",{n}"));
    }
    out.push('\n');
    for (di, d) in cfg.dims.iter().enumerate() {
        out.push_str(&d.to_string());
        for ni in 0..cfg.ns.len() {
            match sums.get(&(di * cfg.ns.len() + ni)) {
                Some((s, c)) => out.push_str(&format!(",{:?}", s / *c as f64)),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Finite-sample convergence: the empirical solution against the solution
/// on the population second moments.
#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub dims: Vec<usize>,
    pub ns: Vec<usize>,
    pub sources: usize,
    pub k: usize,
    pub reps: usize,
    pub iterations: usize,
    pub seed: u64,
    pub eta_scale: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            dims: vec![10, 30],
            ns: vec![300, 1000, 3000, 10000],
            sources: 4,
            k: 3,
            reps: 10,
            iterations: 500,
            seed: 2024,
            eta_scale: 1.0,
        }
    }
}

/// `objective_gap = min_l⟨Σ⁽ˡ⁾, M*⟩ − min_l⟨Σ⁽ˡ⁾, M̂⟩` and
/// `estimation_error = ‖M̂ − M*‖_F`, both on the population moments.
pub fn convergence(cfg: &ConvergenceConfig, exec: Execution) -> Result<Vec<MetricRow>> {
    let cells: Vec<(usize, usize)> = cfg
        .dims
        .iter()
        .flat_map(|&d| cfg.ns.iter().map(move |&n| (d, n)))
        .collect();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.reps).map(move |r| (c, r)))
        .collect();
    let opts = solver_options(cfg.eta_scale);
    let per_task = exec.map(tasks.len(), |i| -> Result<Vec<MetricRow>> {
        let (c, rep) = tasks[i];
        let (d, n) = cells[c];
        // The population instance depends on (d, rep) only, so every n in a
        // row of the grid targets the same M*.
        let spec = FactorModelSpec {
            d,
            sources: cfg.sources,
            n,
            seed: derive_seed(cfg.seed, &[stream::REPLICATION, d as u64, rep as u64]),
            ..FactorModelSpec::default()
        };
        let draw = gen_factor_sources(&spec)?;
        let population = SecondMomentSet::from_matrices(draw.population_moments())?;
        let empirical = compute_second_moment_with(&draw.samples, false, Execution::Sequential)?;
        let star = solve(&population, cfg.k, cfg.iterations, &opts)?;
        let hat = solve(&empirical, cfg.k, cfg.iterations, &opts)?;
        let worst = |m: &DMatrix<f64>| {
            population
                .matrices()
                .iter()
                .map(|a| a.dot(m))
                .fold(f64::INFINITY, f64::min)
        };
        let key = format!("d={d},n={n}");
        let gap = worst(star.m_avg.matrix()) - worst(hat.m_avg.matrix());
        let err = (star.m_avg.matrix() - hat.m_avg.matrix()).norm();
        Ok(vec![
            row("convergence", c, &key, rep, Method::Stable, "objective_gap", gap),
            row("convergence", c, &key, rep, Method::Stable, "estimation_error", err),
        ])
    });
    Ok(sorted(per_task.into_iter().collect::<Result<Vec<_>>>()?.concat()))
}

/// Per-iteration timing over a dimension sweep.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub iterations: usize,
    pub sources: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            dims: vec![30, 50, 100, 200],
            iterations: 100,
            sources: 4,
            k: 3,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub d: usize,
    pub iterations: usize,
    pub total_seconds: f64,
    pub per_iteration_seconds: f64,
}

/// Random instance `Σ⁽ˡ⁾ = G Gᵀ / d` with Gaussian `G`.
pub fn wishart_instance(d: usize, sources: usize, seed: u64) -> Result<SecondMomentSet> {
    let matrices = (0..sources)
        .map(|l| {
            let g = normal_matrix(&mut rng_for(seed, &[stream::INSTANCE, d as u64, l as u64]), d, d, 1.0);
            (&g * g.transpose()) / d as f64
        })
        .collect();
    SecondMomentSet::from_matrices(matrices)
}

/// Times `T` Mirror-Prox iterations at each dimension, one dimension at a
/// time so the measurements do not compete for cores.
pub fn bench_timing(cfg: &BenchConfig, exec: Execution) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(cfg.dims.len());
    for &d in &cfg.dims {
        let m = wishart_instance(d, cfg.sources, cfg.seed)?;
        let opts = SolveOptions {
            gap_stride: Some(cfg.iterations),
            check_iterates: false,
            exec,
            ..SolveOptions::default()
        };
        let start = Instant::now();
        let r = solve(&m, cfg.k, cfg.iterations, &opts)?;
        let total = start.elapsed().as_secs_f64();
        rows.push(BenchRow {
            d,
            iterations: r.iterations,
            total_seconds: total,
            per_iteration_seconds: total / r.iterations.max(1) as f64,
        });
    }
    Ok(rows)
}
