//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use spfts::commands;
use spfts::config::{ExperimentConfig, Mode, CONFIG_SCHEMA_VERSION};
use spfts::pipeline::{write_long_csv, IngestOptions, RawPanel, Schema, Transform};
use spfts_core::basis::{build_fourier_basis, FunctionalPanel};
use spfts_core::dgp::{
    make_covariance, make_loadings, simulate_with_loadings, CovarianceSetting, LoadingScheme,
    ModelConfig, NoiseSetting,
};
use spfts_core::diagnostics::{spurious_vector, theory_share, PersistenceCutoffs, SpectralReport};
use spfts_core::experiment::run_replicate;
use spfts_core::operator::{
    adjoint, build_omega, hs_norm, sandwich, trace, KernelOperator, OperatorMatrix,
};
use spfts_core::rank::{
    effective_rank, order_tag, per_direction_stats, sandwich_hook_counts, trace_ce_omega,
};
use spfts_core::rng::{replicate_seed, stream_rng, Stream};
use spfts_core::spectral::{
    centering_matrix, cumulation_matrix, gram_matrix, mtheta_svd, sample_covariance, w_matrix,
};
use spfts_core::stats::{mann_whitney, mean, median, ols_slope, standard_error};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    (m.transpose() * m - DMatrix::identity(m.ncols(), m.ncols())).amax()
}

fn c1_mtheta_closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut sigma_last = 0.0f64;
    for t_len in [8, 64, 200] {
        let svd = mtheta_svd(t_len).unwrap();
        let direct = centering_matrix(t_len) * cumulation_matrix(t_len).transpose();
        worst.0 = worst.0.max((direct - svd.reconstruct()).norm());
        worst.1 = worst.1.max(orthogonality_defect(&svd.left));
        worst.2 = worst.2.max(orthogonality_defect(&svd.right));
        sigma_last = sigma_last.max(svd.sigma[t_len - 1].abs());
    }
    let elapsed = start.elapsed();
    check(
        worst.0 < 1e-8 && worst.1 < 1e-10 && worst.2 < 1e-10 && sigma_last == 0.0 && within(elapsed, 1),
        format!(
            "max |M Theta' - W S V'|_F = {:.2e}, W defect {:.2e}, V defect {:.2e}, sigma_T = {sigma_last}, {elapsed:.2?}",
            worst.0, worst.1, worst.2
        ),
    )
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn c2_operator_identities() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(2, Stream::Auxiliary);
    let (mut adj, mut tr, mut hs) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let (k, q) = (rng.random_range(1..=4), rng.random_range(1..=8));
        let blocks = (0..k * k).map(|_| uniform_matrix(&mut rng, q, q)).collect();
        let om = OperatorMatrix::new(k, k, q, blocks).unwrap();
        let c1 = KernelOperator::new(uniform_matrix(&mut rng, q, q)).unwrap();
        let c2 = KernelOperator::new(uniform_matrix(&mut rng, q, q)).unwrap();
        let s = sandwich(&c1, &om, &c2).unwrap();
        let lhs = adjoint(&s).assemble();
        let rhs = sandwich(&c2.adjoint(), &adjoint(&om), &c1.adjoint())
            .unwrap()
            .assemble();
        adj = adj.max((&lhs - &rhs).amax() / lhs.amax());
        let blockwise: f64 = (0..k)
            .map(|i| (c1.matrix() * om.block(i, i) * c2.matrix()).trace())
            .sum();
        tr = tr.max(rel(trace(&s).unwrap(), blockwise));
        let frob: f64 = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| s.block(i, j).norm_squared())
            .sum::<f64>()
            .sqrt();
        hs = hs.max(rel(hs_norm(&s), frob));
    }
    let elapsed = start.elapsed();
    check(
        adj < 1e-12 && tr < 1e-12 && hs < 1e-12 && within(elapsed, 1),
        format!(
            "100 instances: adjoint {adj:.1e}, trace {tr:.1e}, HS {hs:.1e} relative, {elapsed:.2?}"
        ),
    )
}

fn c3_gram_duality() -> Outcome {
    let start = Instant::now();
    let mut rng = stream_rng(3, Stream::Auxiliary);
    let mut worst = 0.0f64;
    for p in 2..=5 {
        for t_len in 2..=5 {
            for q in 2..=5 {
                let values: Vec<f64> = (0..p * t_len * q)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let panel = FunctionalPanel::from_tensor(p, t_len, q, &values).unwrap();
                let sort = |m: DMatrix<f64>| {
                    let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
                    v.sort_by(|a, b| b.total_cmp(a));
                    v
                };
                let small = sort(gram_matrix(&panel).into_matrix());
                let big = sort(sample_covariance(&panel));
                let common = small.len().min(big.len());
                for k in 0..common {
                    worst = worst.max((small[k] - big[k]).abs());
                }
                for v in small[common..].iter().chain(&big[common..]) {
                    worst = worst.max(v.abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-8 && within(elapsed, 5),
        format!("64 shapes, max eigenvalue gap {worst:.2e}, {elapsed:.2?}"),
    )
}

fn c4_bilinear_first_moment() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        t_len: 32,
        p: 8,
        q: 4,
        k: 2,
        covariance: CovarianceSetting::LocalizedGeometric,
        loadings: LoadingScheme::FullRank,
        noise: NoiseSetting::Zero,
        seed: 4,
    };
    let loadings = cfg.loading_spec().unwrap();
    let om = build_omega(&loadings);
    let target = trace_ce_omega(&cfg.covariance_spec().unwrap(), &om).unwrap();
    let v = spurious_vector(1, cfg.t_len).unwrap();
    let draws: Vec<f64> = (0..500)
        .map(|r| {
            let sim = simulate_with_loadings(
                &cfg.with_seed(replicate_seed(cfg.seed, r)),
                loadings.clone(),
            )
            .unwrap();
            let w = w_matrix(&sim.innovations, &om).unwrap();
            (v.transpose() * w * &v)[(0, 0)]
        })
        .collect();
    let (m, se) = (mean(&draws), standard_error(&draws));
    let elapsed = start.elapsed();
    check(
        (m - target).abs() <= 3.0 * se && within(elapsed, 10),
        format!("mean v'Wv = {m:.3} vs <C_eps Omega> = {target:.3} (se {se:.3}), {elapsed:.2?}"),
    )
}

fn replicates(cfg: &ModelConfig, n: u64, k_max: usize) -> Vec<SpectralReport> {
    (0..n)
        .map(|r| run_replicate(cfg, r, k_max, 20).unwrap())
        .collect()
}

fn alignment_column(reports: &[SpectralReport], k: usize) -> Vec<f64> {
    reports.iter().map(|r| r.alignments[k]).collect()
}

fn c5_spurious_regime(setting1: &[SpectralReport], elapsed: Duration) -> Outcome {
    let aligns: Vec<f64> = (0..3)
        .map(|k| median(&alignment_column(setting1, k)))
        .collect();
    let share = median(
        &setting1
            .iter()
            .map(|r| r.variance_shares[0])
            .collect::<Vec<_>>(),
    );
    let lambda = mean(
        &setting1
            .iter()
            .map(|r| r.eigenvalues[0])
            .collect::<Vec<_>>(),
    );
    let limit = mean(
        &setting1
            .iter()
            .map(|r| r.theory_eigenvalues.as_ref().unwrap()[0])
            .collect::<Vec<_>>(),
    );
    let ratio = lambda / limit;
    check(
        aligns.iter().all(|a| *a >= 0.9)
            && (share - 6.0 / (PI * PI)).abs() <= 0.1
            && (ratio - 1.0).abs() <= 0.2
            && within(elapsed, 120),
        format!(
            "median alignments {:.3}/{:.3}/{:.3}, median share {share:.3} (limit {:.3}), mean lambda_1 / limit = {ratio:.3}, {elapsed:.2?} single-threaded",
            aligns[0],
            aligns[1],
            aligns[2],
            theory_share(1)
        ),
    )
}

fn c6_few_strong_factors() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::setting(2, 2, 6).unwrap();
    let reports = replicates(&cfg, 50, 3);
    let aligns: Vec<f64> = (0..3)
        .map(|k| median(&alignment_column(&reports, k)))
        .collect();
    let elapsed = start.elapsed();
    check(
        aligns.iter().all(|a| *a >= 0.9) && within(elapsed, 120),
        format!(
            "setting 2, K = 2: median alignments {:.3}/{:.3}/{:.3}, {elapsed:.2?}",
            aligns[0], aligns[1], aligns[2]
        ),
    )
}

fn c7_non_spurious_contrast(setting1: &[SpectralReport]) -> Outcome {
    let start = Instant::now();
    let cases: [(u8, usize); 8] = [
        (4, 2),
        (4, 10),
        (4, 50),
        (6, 2),
        (6, 10),
        (6, 50),
        (3, 2),
        (5, 2),
    ];
    let mut notes = Vec::new();
    let mut all = true;
    for (s, k) in cases {
        let cfg = ModelConfig::setting(s, k, 70 + s as u64).unwrap();
        let reports = replicates(&cfg, 50, 5);
        // The first k <= 5 whose median falls below 0.8 and separates from setting 1.
        let hit = (0..5).find_map(|j| {
            let col = alignment_column(&reports, j);
            let med = median(&col);
            let test = mann_whitney(&col, &alignment_column(setting1, j))?;
            (med < 0.8 && test.p_value < 0.01).then_some((j + 1, med, test.p_value))
        });
        match hit {
            Some((j, med, p)) => notes.push(format!("S{s}/K{k}: k={j} med {med:.2} p={p:.0e}")),
            None => {
                all = false;
                notes.push(format!("S{s}/K{k}: none"));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        all && within(elapsed, 300),
        format!("{}, {elapsed:.2?}", notes.join("; ")),
    )
}

fn c8_low_eff_rank_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    let mut at_two = f64::NAN;
    for k in 1..=40 {
        let loadings = make_loadings(&LoadingScheme::LowEffRank, 100, k, 20, 8).unwrap();
        let target = 3.0 * (1.0 - 2f64.powi(-(k as i32))).powi(2) / (1.0 - 4f64.powi(-(k as i32)));
        for s in per_direction_stats(&loadings) {
            worst = worst.max((s.ratio * s.ratio - target).abs());
            if k == 2 {
                at_two = s.ratio * s.ratio;
            }
        }
    }
    check(
        worst < 1e-8 && (at_two - 1.8).abs() < 1e-8,
        format!("K = 1..40 max deviation {worst:.1e}, K = 2 gives {at_two:.10}"),
    )
}

fn c9_rank_orders() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut all = true;
    for s in 1..=6u8 {
        let standard = ModelConfig::setting(s, 1, 0).unwrap();
        let tag = order_tag(&standard.covariance, &standard.loadings).unwrap();
        let mut pred = Vec::new();
        let mut size = Vec::new();
        let mut measured = Vec::new();
        for q in [5usize, 10, 20, 40] {
            for k in [5usize, 10, 20, 40] {
                let base = ModelConfig::setting(s, k, 9).unwrap();
                let cfg = ModelConfig { q, ..base };
                let cov = make_covariance(&cfg.covariance, q).unwrap();
                let r = effective_rank(&cov, &build_omega(&cfg.loading_spec().unwrap())).unwrap();
                pred.push(tag.predicted(q, k).ln());
                size.push(((q * k) as f64).ln());
                measured.push(r.ln());
            }
        }
        // A bounded order has no spread to regress on; its slope against q K must vanish instead.
        let (slope, target) = match ols_slope(&pred, &measured) {
            Some(b) => (b, 1.0),
            None => (ols_slope(&size, &measured).unwrap(), 0.0),
        };
        let ok = (slope - target).abs() <= 0.15;
        all &= ok;
        notes.push(format!("S{s} {} slope {slope:.3}", tag.label()));
    }
    let elapsed = start.elapsed();
    check(
        all && within(elapsed, 60),
        format!("{}, {elapsed:.2?}", notes.join("; ")),
    )
}

fn c10_probe() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        k: 10,
        covariance: CovarianceSetting::LocalizedRank2,
        loadings: LoadingScheme::ReducedRank { rank: 3 },
        ..ModelConfig::setting(5, 10, 10).unwrap()
    };
    let reports = replicates(&cfg, 50, 8);
    let cut = PersistenceCutoffs::default();
    let hits = reports
        .iter()
        .filter(|r| {
            let acf = r.lag1_acf();
            acf[..6].iter().all(|v| *v > cut.persistent_above)
                && acf[6..8].iter().all(|v| *v < cut.white_noise_below)
        })
        .count();
    let elapsed = start.elapsed();
    check(
        2 * hits > reports.len() && within(elapsed, 120),
        format!("split after eigenvector 6 in {hits}/50 replicates, {elapsed:.2?}"),
    )
}

fn c11_sandwich_hook() -> Outcome {
    let (checked, failed) = sandwich_hook_counts();
    check(
        checked > 0 && failed == 0,
        format!("{checked} spectra checked in this run, {failed} violations"),
    )
}

fn analyze_csv(
    panel: &FunctionalPanel,
    q: usize,
    dir: &std::path::Path,
    name: &str,
) -> SpectralReport {
    let ctx = build_fourier_basis(q, 4 * q + 1).unwrap();
    let path = dir.join(format!("{name}.csv"));
    write_long_csv(&RawPanel::from_functional(panel, &ctx, true), &path).unwrap();
    let cfg = ExperimentConfig {
        schema_version: CONFIG_SCHEMA_VERSION,
        mode: Mode::Analyze,
        model: None,
        models: Vec::new(),
        replicates: 1,
        k_max: 5,
        acf_lags: 5,
        data: Some(path),
        ingest: Some(IngestOptions {
            schema: Schema::Long,
            q,
            tail_cutoff: None,
            transform: Transform::Log,
        }),
        out: None,
        seed: None,
    };
    commands::analyze(&cfg, Some(&dir.join(name)))
        .unwrap()
        .report
}

fn c12_pipeline() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    // Setting 1 model, thinned in p and q to keep the CSV small.
    let cfg = ModelConfig {
        p: 50,
        q: 10,
        ..ModelConfig::setting(1, 20, 12).unwrap()
    };
    let sim = simulate_with_loadings(&cfg, cfg.loading_spec().unwrap()).unwrap();
    let walk = analyze_csv(&sim.panel.scaled(0.1), cfg.q, dir.path(), "random_walk");

    let mut rng = stream_rng(12, Stream::Auxiliary);
    let noise: Vec<f64> = (0..cfg.p * cfg.t_len * cfg.q)
        .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let iid = FunctionalPanel::from_tensor(cfg.p, cfg.t_len, cfg.q, &noise).unwrap();
    let stationary = analyze_csv(&iid, cfg.q, dir.path(), "iid");

    let walk_ok = walk.alignments[..3].iter().all(|a| *a >= 0.9);
    let iid_ok = stationary.alignments[..5].iter().all(|a| *a < 0.5);
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|a| format!("{a:.2}"))
            .collect::<Vec<_>>()
            .join("/")
    };
    check(
        walk_ok && iid_ok,
        format!(
            "random walk k<=3: {}; i.i.d. k<=5: {}, {:.2?}",
            fmt(&walk.alignments[..3]),
            fmt(&stationary.alignments[..5]),
            start.elapsed()
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, &str, Outcome)> = Vec::new();
    let mut run = |id: &'static str, name: &'static str, f: &dyn Fn() -> Outcome| {
        let outcome = f();
        println!(
            "ACCEPTANCE {id:>2} {} {name}: {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
        results.push((id, name, outcome));
    };
    run("1", "closed-form SVD of M Theta'", &c1_mtheta_closed_form);
    run("2", "operator-matrix identities", &c2_operator_identities);
    run("3", "Gram / covariance duality", &c3_gram_duality);
    run("4", "bilinear first moment", &c4_bilinear_first_moment);

    let start = Instant::now();
    let setting1 = replicates(&ModelConfig::setting(1, 50, 5).unwrap(), 50, 5);
    let s1_elapsed = start.elapsed();
    run("5", "spurious regime, setting 1", &|| {
        c5_spurious_regime(&setting1, s1_elapsed)
    });
    run("6", "few strong factors, setting 2", &c6_few_strong_factors);
    run("7", "non-spurious contrast", &|| {
        c7_non_spurious_contrast(&setting1)
    });
    run(
        "8",
        "low effective rank closed form",
        &c8_low_eff_rank_closed_form,
    );
    run("9", "effective rank orders", &c9_rank_orders);
    run("10", "persistence split probe", &c10_probe);
    run("12", "end-to-end CSV pipeline", &c12_pipeline);
    run("11", "l1/l2 sandwich hook", &c11_sandwich_hook);

    let failed: Vec<&str> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
