//! Acceptance gate: runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stablepca::dual::{dual_solve, phi, phi_subgrad, DualOptions};
use stablepca::mirrorprox::{
    solve, solve_observed, waterfill_nu, IterateView, SimplexWeights, SolveOptions, Stage,
};
use stablepca::moments::SecondMomentSet;
use stablepca::parallel::Execution;
use stablepca::simulate::{
    bench_timing, certificate_grid, factor_comparison, settings, wishart_instance, BenchConfig,
    CertificateGridConfig, FactorConfig, Method, MetricRow, SettingsConfig,
};
use stablepca::spectral::{inner, top_k_projector, ProjectionMatrix};
use stablepca::variants::{solve_variant, VariantKind};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

fn line(theta: f64) -> ProjectionMatrix {
    ProjectionMatrix::from_orthonormal(&DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]))
}

fn dominated_pair() -> Outcome {
    let start = Instant::now();
    let m = SecondMomentSet::from_matrices(vec![diag(&[3.0, 1.0]), diag(&[2.0, 1.0])]).unwrap();

    // Grid oracle: max over projector angle of min over a weight grid.
    let mut oracle = f64::NEG_INFINITY;
    for i in 0..=1800 {
        let p = line(i as f64 * std::f64::consts::PI / 1800.0);
        let worst = (0..=100)
            .map(|j| {
                let w = j as f64 / 100.0;
                inner(&m.mixture(&[w, 1.0 - w]), p.matrix())
            })
            .fold(f64::INFINITY, f64::min);
        oracle = oracle.max(worst);
    }

    let r = solve(&m, 1, 500, &SolveOptions::default()).unwrap();
    let p_err = (r.p_rounded.matrix() - diag(&[1.0, 0.0])).norm();
    let d = dual_solve(&m, 1, 2000, &DualOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = (oracle - 2.0).abs() <= 1e-3
        && (r.worst_case_ev - 2.0).abs() <= 1e-3
        && p_err <= 1e-3
        && r.tau.abs() <= 1e-3
        && d.omega_avg.as_slice()[1] >= 0.99
        && (d.phi_at_avg - 2.0).abs() <= 1e-3
        && (d.eigengap - 1.0).abs() <= 1e-3
        && d.tight
        && elapsed < 1.0;
    outcome(
        pass,
        format!(
            "oracle={oracle:.6} ev={:.6} |P-e1e1'|={p_err:.2e} tau={:.2e} w2={:.4} phi={:.6} gap={:.4} tight={} t={elapsed:.3}s",
            r.worst_case_ev,
            r.tau,
            d.omega_avg.as_slice()[1],
            d.phi_at_avg,
            d.eigengap,
            d.tight
        ),
    )
}

fn degenerate_crossing() -> Outcome {
    let m = SecondMomentSet::from_matrices(vec![diag(&[2.0, 1.0]), diag(&[1.0, 2.0])]).unwrap();
    let r = solve(&m, 1, 500, &SolveOptions::default()).unwrap();
    let m_err = (r.m_avg.matrix() - DMatrix::identity(2, 2) * 0.5).amax();
    let pass = m_err <= 1e-8
        && (r.relaxed_value - 1.5).abs() <= 1e-9
        && (r.tau - 0.5).abs() <= 1e-6
        && !r.tight;
    outcome(
        pass,
        format!(
            "|M-I/2|max={m_err:.2e} relaxed={:.12} tau={:.9} tight={}",
            r.relaxed_value, r.tau, r.tight
        ),
    )
}

fn classical_reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_p = 0.0f64;
    let mut worst_tau = 0.0f64;
    for trial in 0..10 {
        let d = 3 + trial % 5;
        let k = 1 + trial % (d - 1);
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let a = &g * g.transpose();
        let expected = top_k_projector(&a, k).unwrap();
        let single = SecondMomentSet::from_matrices(vec![a.clone()]).unwrap();
        let copies = SecondMomentSet::from_matrices(vec![a.clone(); 3]).unwrap();
        for m in [&single, &copies] {
            for v in VariantKind::ALL {
                let r = solve_variant(m, k, 200, v, &SolveOptions::default()).unwrap();
                worst_p = worst_p.max((r.p_rounded.matrix() - expected.matrix()).norm());
                worst_tau = worst_tau.max(r.tau.abs());
            }
        }
    }
    outcome(
        worst_p <= 1e-8 && worst_tau == 0.0,
        format!("max |P-P_classical|={worst_p:.2e} max |tau|={worst_tau:.2e} over 60 fits"),
    )
}

fn certificate_grid_check() -> Outcome {
    let cfg = CertificateGridConfig {
        dims: vec![10, 20],
        ns: vec![300, 2500],
        reps: 10,
        iterations: 500,
        ..CertificateGridConfig::default()
    };
    let start = Instant::now();
    let rows = certificate_grid(&cfg, Execution::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let max_tau = rows.iter().map(|r| r.value.abs()).fold(0.0, f64::max);
    let mean_tau = rows.iter().map(|r| r.value).sum::<f64>() / rows.len() as f64;
    outcome(
        rows.len() == 40 && max_tau < 0.01 && elapsed < 120.0,
        format!("{} solves, max|tau|={max_tau:.4} mean tau={mean_tau:.4} t={elapsed:.1}s", rows.len()),
    )
}

fn gap_decay() -> Outcome {
    let m = wishart_instance(20, 4, 17).unwrap();
    let gap = |t| solve(&m, 3, t, &SolveOptions::default()).unwrap().gap;
    let (g100, g800) = (gap(100), gap(800));
    outcome(
        g800 <= 0.25 * g100,
        format!("gap(100)={g100:.4e} gap(800)={g800:.4e} ratio={:.3}", g800 / g100),
    )
}

fn metric<'a>(rows: &'a [MetricRow], key: &'a str, method: Method, name: &'a str) -> impl Iterator<Item = f64> + 'a {
    rows.iter()
        .filter(move |r| r.key == key && r.method == method && r.metric == name)
        .map(|r| r.value)
}

fn settings_geometry() -> Outcome {
    let cfg = SettingsConfig {
        heteroscedastic: false,
        ..SettingsConfig::default()
    };
    let rows = settings(&cfg, Execution::default()).unwrap();
    let angle = |s: u8, m| metric(&rows, &format!("setting{s}"), m, "angle_x1_deg").next().unwrap();
    let stable: Vec<f64> = (1..=3).map(|s| angle(s, Method::Stable)).collect();
    let pooled: Vec<f64> = (1..=3).map(|s| angle(s, Method::Pooled)).collect();
    outcome(
        stable.iter().all(|a| *a < 5.0) && pooled[2] > 15.0,
        format!("StablePCA angles {stable:.2?} deg, PooledPCA angles {pooled:.2?} deg"),
    )
}

fn generalization_ordering() -> Outcome {
    let cfg = FactorConfig {
        source_counts: vec![6],
        d: 40,
        n: 1000,
        k: 3,
        reps: 20,
        ..FactorConfig::default()
    };
    let rows = factor_comparison(&cfg, Execution::default()).unwrap();
    let mean = |m, name| {
        let v: Vec<f64> = metric(&rows, "L=6", m, name).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let rec = |m| mean(m, "recovery_error");
    let mut pass = rec(Method::Stable) < 0.5 * rec(Method::Pooled);
    let mut detail = format!("recovery stable={:.3} pooled={:.3};", rec(Method::Stable), rec(Method::Pooled));
    for name in ["in_dist_ev", "ood_ev"] {
        let ours = mean(Method::Stable, name);
        detail.push_str(&format!(" {name} stable={ours:.3}"));
        for m in [Method::Pooled, Method::Squared, Method::Fair] {
            let theirs = mean(m, name);
            pass &= ours >= theirs;
            detail.push_str(&format!(" {}={theirs:.3}", m.name()));
        }
        detail.push(';');
    }
    outcome(pass, detail)
}

fn sion_consistency() -> Outcome {
    let mut below = 0.0f64;
    let mut max_diff = 0.0f64;
    let opts = SolveOptions {
        check_iterates: false,
        ..SolveOptions::default()
    };
    for i in 0..20 {
        let m = wishart_instance(10, 3, 1000 + i).unwrap();
        let p = solve(&m, 2, 2000, &opts).unwrap();
        let d = dual_solve(&m, 2, 5000, &DualOptions::default()).unwrap();
        below = below.min(d.phi_at_avg - p.relaxed_value);
        max_diff = max_diff.max((d.phi_at_avg - p.relaxed_value).abs());
    }
    outcome(
        below >= -1e-8 && max_diff <= 1e-2,
        format!("min(phi_dual - primal)={below:.2e} max|phi_dual - primal|={max_diff:.2e}"),
    )
}

/// Reference water-filling: try every count `c` of coordinates clipped at 1.
fn waterfill_oracle(lambda: &[f64], k: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..lambda.len()).collect();
    order.sort_by(|&a, &b| lambda[b].total_cmp(&lambda[a]));
    for c in 0..k {
        let rest: f64 = order[c..].iter().map(|&j| lambda[j].exp()).sum();
        let nu = ((k - c) as f64).ln() - rest.ln();
        let clipped_ok = c == 0 || lambda[order[c - 1]] + nu >= -1e-12;
        let free_ok = lambda[order[c]] + nu <= 1e-12;
        if clipped_ok && free_ok {
            return lambda.iter().map(|&l| (l + nu).exp().min(1.0)).collect();
        }
    }
    unreachable!("some clip count is always consistent")
}

fn property_suites() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let mut wf_dev = 0.0f64;
    for case in 0..1000 {
        let d = rng.random_range(2..30);
        let k = rng.random_range(1..d);
        let spread = [0.1, 2.0, 20.0][case % 3];
        let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(-spread..spread)).collect();
        let (_, xi) = waterfill_nu(&lambda, k).unwrap();
        let oracle = waterfill_oracle(&lambda, k);
        for (a, b) in xi.iter().zip(&oracle) {
            wf_dev = wf_dev.max((a - b).abs());
        }
    }

    let mut slack = f64::INFINITY;
    for _ in 0..1000 {
        let d = rng.random_range(2..8);
        let l = rng.random_range(2..5);
        let k = rng.random_range(1..=d);
        let ms = (0..l)
            .map(|_| {
                let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                &g * g.transpose()
            })
            .collect();
        let m = SecondMomentSet::from_matrices(ms).unwrap();
        let draw = |rng: &mut ChaCha8Rng| {
            SimplexWeights::normalized((0..l).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
        };
        let (w, w2) = (draw(&mut rng), draw(&mut rng));
        let g = phi_subgrad(&m, &w, k).unwrap();
        let lin: f64 = g
            .iter()
            .zip(w2.as_slice().iter().zip(w.as_slice()))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        slack = slack.min(phi(&m, &w2, k).unwrap() - phi(&m, &w, k).unwrap() - lin);
    }

    let mut checked = 0usize;
    let mut violations = 0usize;
    for seed in 0..5 {
        let m = wishart_instance(8, 3, 50 + seed).unwrap();
        let opts = SolveOptions {
            check_iterates: true,
            ..SolveOptions::default()
        };
        let mut observer = |v: IterateView<'_>| {
            checked += 1;
            if v.m.check().is_err() || v.omega.check().is_err() {
                violations += 1;
            }
        };
        solve_observed(m.matrices(), m.matrices(), 3, 200, &opts, &mut observer).unwrap();
    }

    let m = wishart_instance(6, 3, 77).unwrap();
    let trajectory = |m: &SecondMomentSet| {
        let mut out: Vec<(DMatrix<f64>, Vec<f64>)> = Vec::new();
        let mut observer = |v: IterateView<'_>| {
            if v.stage == Stage::Full {
                out.push((v.m.matrix().clone(), v.omega.as_slice().to_vec()));
            }
        };
        solve_observed(m.matrices(), m.matrices(), 2, 200, &SolveOptions::default(), &mut observer).unwrap();
        out
    };
    let base = trajectory(&m);
    let mut scale_dev = 0.0f64;
    for c in [0.1, 10.0] {
        let scaled = trajectory(&m.scaled(c));
        for ((a, wa), (b, wb)) in base.iter().zip(&scaled) {
            scale_dev = scale_dev.max((a - b).amax());
            for (x, y) in wa.iter().zip(wb) {
                scale_dev = scale_dev.max((x - y).abs());
            }
        }
    }

    outcome(
        wf_dev <= 1e-9 && slack >= -1e-8 && violations == 0 && checked == 2000 && scale_dev <= 1e-9,
        format!(
            "(a) waterfill dev={wf_dev:.2e} (b) subgradient slack={slack:.2e} (c) {violations} violations in {checked} iterates (d) scale dev={scale_dev:.2e}"
        ),
    )
}

fn runtime_scaling() -> Outcome {
    let cfg = BenchConfig {
        dims: vec![30, 50, 100, 200],
        iterations: 100,
        ..BenchConfig::default()
    };
    let start = Instant::now();
    let rows = bench_timing(&cfg, Execution::Sequential).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let per = |d| rows.iter().find(|r| r.d == d).unwrap().per_iteration_seconds;
    let ratio = per(200) / per(100);
    let times: Vec<String> = rows
        .iter()
        .map(|r| format!("d={}:{:.2}ms", r.d, 1e3 * r.per_iteration_seconds))
        .collect();
    outcome(
        (4.0..=16.0).contains(&ratio) && elapsed < 120.0,
        format!("{} ratio t200/t100={ratio:.2} total={elapsed:.1}s", times.join(" ")),
    )
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("dominated-pair oracle", dominated_pair),
        ("degenerate crossing", degenerate_crossing),
        ("classical reductions", classical_reductions),
        ("certificate grid", certificate_grid_check),
        ("O(1/T) gap decay", gap_decay),
        ("settings geometry", settings_geometry),
        ("generalization ordering", generalization_ordering),
        ("primal-dual consistency", sion_consistency),
        ("property suites", property_suites),
        ("runtime scaling", runtime_scaling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
