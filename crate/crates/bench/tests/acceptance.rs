//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! `cargo test --release -p sib-bench --test acceptance -- 4 5` runs a subset.

use std::cell::OnceCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use sib_bench::output::write_raw_rows;
use sib_bench::{raw_rows, run_experiment, run_trace, ExperimentConfig, RunRecord};
use sib_core::{
    epoch_score, estimate, stream, theoretical_lambda, theoretical_tau, ContextDistribution, EstimatorConfig,
    GaussianContext, KernelFit, LinkFunction, SampleBatch, SibEnvironment, SimRng,
};
use statrs::distribution::{ContinuousCDF, Normal};

const DELTA: f64 = 0.05;
const SIGMA: f64 = 0.5;
const LINKS: [&str; 4] = ["linear", "poisson", "square", "fifth"];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn config(name: &str, body: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(body, Path::new(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn grid(name: &str, link: &str, reps: usize, policies: &str) -> ExperimentConfig {
    let body = format!(
        "name = \"{name}\"\nhorizon = 10000\ndim = 15\narms = 20\nlink = \"{link}\"\n\
         noise_sigma = {SIGMA}\nrepetitions = {reps}\nmaster_seed = 2024\n{policies}"
    );
    config(name, &body)
}

fn run(config: &ExperimentConfig) -> Vec<RunRecord> {
    let records = run_experiment(config, 0).expect("worker pool");
    for r in &records {
        assert!(
            r.is_complete(),
            "{} {} rep {}: {:?}",
            config.name,
            r.policy,
            r.repetition,
            r.error
        );
    }
    records
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    s / n as f64
}

fn mean_final(records: &[RunRecord], policy: &str) -> f64 {
    mean(records.iter().filter(|r| r.policy == policy).map(|r| r.final_regret))
}

fn mean_at(records: &[RunRecord], policy: &str, t: usize) -> f64 {
    mean(records.iter().filter(|r| r.policy == policy).map(|r| {
        r.trace
            .iter()
            .find(|&&(s, _)| s == t)
            .map(|&(_, v)| v)
            .expect("round kept by the trace")
    }))
}

fn mean_seconds(records: &[RunRecord], policy: &str) -> f64 {
    mean(records.iter().filter(|r| r.policy == policy).map(|r| r.policy_seconds))
}

/// Linear-link samples `y = x'θ + σε` on standard normal contexts.
fn linear_batch(theta: &DVector<f64>, n: usize, rng: &mut SimRng) -> SampleBatch {
    let dist = GaussianContext::standard(theta.len()).unwrap();
    let mut batch = SampleBatch::with_capacity(n);
    for _ in 0..n {
        let x = dist.sample(rng);
        let y = x.dot(theta) + SIGMA * rng.sample::<f64, _>(StandardNormal);
        batch.push(x, y).unwrap();
    }
    batch
}

fn random_direction(d: usize, s: usize, rng: &mut SimRng) -> DVector<f64> {
    let env = SibEnvironment::generate(
        Arc::new(GaussianContext::standard(d).unwrap()),
        3,
        LinkFunction::Linear,
        SIGMA,
        Some(s),
        rng,
    )
    .unwrap();
    env.theta_star().clone()
}

fn stein_identity() -> Verdict {
    let (d, n) = (15, 100_000);
    let mut rng = stream(1, 0);
    let theta = random_direction(d, d, &mut rng);
    let batch = linear_batch(&theta, n, &mut rng);
    let mut sum = DVector::zeros(d);
    let mut sq = DVector::zeros(d);
    for (x, y) in batch.iter() {
        let v = x * y;
        sq += v.component_mul(&v);
        sum += v;
    }
    let m = &sum / n as f64;
    let worst = (0..d)
        .map(|j| {
            let var = (sq[j] / n as f64 - m[j] * m[j]) * n as f64 / (n - 1) as f64;
            (m[j] - theta[j]).abs() / (var / n as f64).sqrt()
        })
        .fold(0.0, f64::max);
    Verdict::new(worst <= 3.0, format!("max |mean - θ*| = {worst:.2} standard errors"))
}

fn l2_error(n: usize, d: usize, s: usize, lambda_mult: f64, reps: usize, seed: u64) -> f64 {
    let dist = GaussianContext::standard(d).unwrap();
    let tau = theoretical_tau(n, d, DELTA, 1.0, 1.0).unwrap();
    let lambda = if lambda_mult > 0.0 {
        theoretical_lambda(n, d, DELTA, 1.0, lambda_mult).unwrap()
    } else {
        0.0
    };
    let cfg = EstimatorConfig::new(tau, lambda).unwrap();
    mean((0..reps).map(|r| {
        let mut rng = stream(seed, r as u64);
        let theta = random_direction(d, s, &mut rng);
        let batch = linear_batch(&theta, n, &mut rng);
        let est = estimate(&batch, |x| dist.score(x), cfg).unwrap();
        (est.theta_hat - &theta).norm()
    }))
}

fn estimator_rate() -> Verdict {
    let small = l2_error(1000, 15, 15, 0.0, 50, 2);
    let large = l2_error(4000, 15, 15, 0.0, 50, 3);
    let ratio = large / small;
    Verdict::new(
        (0.40..=0.60).contains(&ratio),
        format!("mean error {small:.4} at n=1000, {large:.4} at n=4000, ratio {ratio:.3}"),
    )
}

fn sparse_estimator() -> Verdict {
    let mult = 1.0 / 11.0;
    let lasso10 = l2_error(1000, 60, 10, mult, 50, 4);
    let plain10 = l2_error(1000, 60, 10, 0.0, 50, 4);
    let lasso40 = l2_error(1000, 60, 40, mult, 50, 5);
    Verdict::new(
        lasso10 < plain10 && lasso40 > lasso10,
        format!("s=10: λ>0 {lasso10:.4} vs λ=0 {plain10:.4}; s=40: λ>0 {lasso40:.4}"),
    )
}

/// Projected gradient on the split `θ = u - v`, `u, v ≥ 0`, of
/// `‖θ‖² - 2b'θ + λ‖θ‖₁` with `b` the mean truncated product.
fn projected_gradient(batch: &SampleBatch, tau: f64, lambda: f64) -> DVector<f64> {
    let d = batch.dim().unwrap();
    let mut b = DVector::zeros(d);
    for (x, y) in batch.iter() {
        for j in 0..d {
            b[j] += (y * x[j]).max(-tau).min(tau);
        }
    }
    b /= batch.len() as f64;
    let step = 0.25;
    let mut u = DVector::<f64>::zeros(d);
    let mut v = DVector::<f64>::zeros(d);
    for _ in 0..100_000 {
        let g = 2.0 * (&u - &v) - 2.0 * &b;
        let u_next = (&u - step * (&g + DVector::repeat(d, lambda))).map(|c| c.max(0.0));
        let v_next = (&v - step * (-&g + DVector::repeat(d, lambda))).map(|c| c.max(0.0));
        let moved = (&u_next - &u).amax().max((&v_next - &v).amax());
        u = u_next;
        v = v_next;
        if moved < 1e-15 {
            break;
        }
    }
    u - v
}

fn closed_form() -> Verdict {
    let dist = GaussianContext::standard(5).unwrap();
    let mut rng = stream(6, 0);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let lambda = [0.0, 0.05, 0.5][i % 3];
        let n = rng.random_range(1..=60);
        let tau = rng.random_range(0.2..3.0);
        let mut batch = SampleBatch::with_capacity(n);
        for _ in 0..n {
            let x = dist.sample(&mut rng);
            batch.push(x, rng.random_range(-2.0..2.0)).unwrap();
        }
        let est = estimate(&batch, |x| dist.score(x), EstimatorConfig::new(tau, lambda).unwrap()).unwrap();
        let oracle = projected_gradient(&batch, tau, lambda);
        worst = worst.max((est.theta_hat - oracle).amax());
    }
    Verdict::new(worst <= 1e-8, format!("max coordinate gap {worst:.2e}"))
}

/// `log p_K(x)` of the arm chosen greedily along `θ` among `K` draws.
fn log_epoch_density(mean: &DVector<f64>, cov: &DMatrix<f64>, theta: &DVector<f64>, k: usize, x: &DVector<f64>) -> f64 {
    let prec = cov.clone().lu().try_inverse().unwrap();
    let det = cov.clone().lu().determinant();
    let r = x - mean;
    let d = x.len() as f64;
    let log_normal = -0.5 * (r.dot(&(&prec * &r)) + d * (2.0 * std::f64::consts::PI).ln() + det.ln());
    let s = theta.dot(&(cov * theta)).sqrt();
    let u = (x.dot(theta) - mean.dot(theta)) / s;
    let phi = Normal::standard().cdf(u);
    (k as f64).ln() + log_normal + (k as f64 - 1.0) * phi.ln()
}

fn epoch_score_check() -> Verdict {
    let mut rng = stream(7, 0);
    let mut worst_fd = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.5;
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let dist = GaussianContext::new(mean.clone(), cov.clone()).unwrap();
        let theta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let k = rng.random_range(1..=20);
        let x = dist.sample(&mut rng);
        let score = epoch_score(&dist, &theta, k, &x).unwrap();
        let h = 1e-5;
        let fd = DVector::from_fn(d, |j, _| {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[j] += h;
            lo[j] -= h;
            -(log_epoch_density(&mean, &cov, &theta, k, &hi) - log_epoch_density(&mean, &cov, &theta, k, &lo))
                / (2.0 * h)
        });
        worst_fd = worst_fd.max((&fd - &score).amax() / score.amax());
        for c in [1e-3, 0.5, 7.0, 1e3] {
            let scaled = epoch_score(&dist, &(&theta * c), k, &x).unwrap();
            worst_scale = worst_scale.max((scaled - &score).amax());
        }
    }
    Verdict::new(
        worst_fd <= 1e-4 && worst_scale <= 1e-10,
        format!("finite-difference relative gap {worst_fd:.2e}, scale gap {worst_scale:.2e}"),
    )
}

fn estor_sublinear() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for link in LINKS {
        let cfg = grid(
            &format!("estor_{link}"),
            link,
            20,
            "[[policy]]\nkind = \"estor\"\n[[policy]]\nkind = \"uniform\"\n",
        );
        let records = run(&cfg);
        let growth = mean_final(&records, "ESTOR") / mean_at(&records, "ESTOR", 5000);
        let versus = mean_final(&records, "ESTOR") / mean_final(&records, "Uniform");
        pass &= growth <= 1.65 && versus < 0.5;
        parts.push(format!("{link}: R_T/R_T/2 {growth:.3}, vs uniform {versus:.3}"));
    }
    Verdict::new(pass, parts.join("; "))
}

fn stor_phases() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for link in LINKS {
        let cfg = grid(&format!("stor_{link}"), link, 20, "[[policy]]\nkind = \"stor\"\n");
        let (mut explore, mut commit) = ((0.0, 0usize), (0.0, 0usize));
        for r in 0..cfg.repetitions {
            let trace = run_trace(&cfg, 0, r).unwrap();
            assert!(trace.aborted.is_none());
            for (regret, exploring) in trace.instant.iter().zip(&trace.exploring) {
                let slot = if *exploring { &mut explore } else { &mut commit };
                slot.0 += regret;
                slot.1 += 1;
            }
        }
        let (e, c) = (explore.0 / explore.1 as f64, commit.0 / commit.1 as f64);
        pass &= c < e;
        parts.push(format!("{link}: explore {e:.3}, commit {c:.3}"));
    }
    Verdict::new(pass, parts.join("; "))
}

/// Records of the two misspecification grids, keyed by data link.
type Grids = BTreeMap<&'static str, Vec<RunRecord>>;

fn misspecification_grids() -> Grids {
    let mut grids = Grids::new();
    for (link, wrong) in [("square", "fifth"), ("fifth", "square")] {
        let policies = format!(
            "[[policy]]\nkind = \"estor\"\n[[policy]]\nkind = \"stor\"\n\
             [[policy]]\nkind = \"ucb_glm\"\n\
             [[policy]]\nkind = \"ucb_glm\"\nmodel = \"{wrong}\"\n\
             [[policy]]\nkind = \"glm_tsl\"\n"
        );
        grids.insert(link, run(&grid(&format!("misspecified_{link}"), link, 20, &policies)));
    }
    grids
}

fn misspecification(grids: &Grids) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (link, records) in grids {
        let wrong = if *link == "square" { "fifth" } else { "square" };
        let correct = mean_final(records, "UCB-GLM");
        let misfit = mean_final(records, &format!("UCB-GLM[{wrong}]"));
        let best = correct.min(mean_final(records, "GLM-TSL"));
        let estor = mean_final(records, "ESTOR");
        pass &= misfit > correct && estor <= 2.0 * best;
        parts.push(format!(
            "{link}: UCB-GLM {correct:.1}, UCB-GLM[{wrong}] {misfit:.1}, best baseline {best:.1}, ESTOR {estor:.1} ({:.2}x)",
            estor / best
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn kernel_mae(n: usize, reps: usize) -> f64 {
    let d = 5;
    mean((0..reps).map(|r| {
        let mut rng = stream(9, (n * 1000 + r) as u64);
        let theta = random_direction(d, d, &mut rng);
        let batch = linear_batch(&theta, n, &mut rng);
        let window = 2.0 * theta.norm();
        let fit = KernelFit::fit(&batch, &theta, (n as f64).powf(-1.0 / 3.0), window, 0.0).unwrap();
        let grid = 201;
        mean((0..grid).map(|i| {
            let z = -window + 2.0 * window * i as f64 / (grid - 1) as f64;
            (fit.predict(z) - z).abs()
        }))
    }))
}

fn gstor_consistency() -> Verdict {
    let small = kernel_mae(1000, 20);
    let large = kernel_mae(8000, 20);
    let drop = 1.0 - large / small;
    let cfg = grid(
        "gstor_quadratic",
        "quadratic",
        10,
        "[[policy]]\nkind = \"gstor\"\n[[policy]]\nkind = \"uniform\"\n",
    );
    let records = run(&cfg);
    let versus = mean_final(&records, "GSTOR") / mean_final(&records, "Uniform");
    Verdict::new(
        drop >= 0.30 && versus < 0.70,
        format!(
            "kernel MAE {small:.4} -> {large:.4} (drop {:.0}%); GSTOR vs uniform {versus:.3}",
            100.0 * drop
        ),
    )
}

fn timing(grids: &Grids) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (link, records) in grids {
        let fast = mean_seconds(records, "STOR").max(mean_seconds(records, "ESTOR"));
        let slow = mean_seconds(records, "UCB-GLM").min(mean_seconds(records, "GLM-TSL"));
        pass &= slow >= 10.0 * fast;
        parts.push(format!(
            "{link}: STOR {:.4}s, ESTOR {:.4}s, UCB-GLM {:.2}s, GLM-TSL {:.2}s (ratio {:.0})",
            mean_seconds(records, "STOR"),
            mean_seconds(records, "ESTOR"),
            mean_seconds(records, "UCB-GLM"),
            mean_seconds(records, "GLM-TSL"),
            slow / fast
        ));
    }
    Verdict::new(pass, parts.join("; "))
}

fn determinism() -> Verdict {
    let body = "name = \"determinism\"\nhorizon = 1500\ndim = 6\narms = 5\nlink = \"poisson\"\n\
                noise_sigma = 0.5\nrepetitions = 4\nmaster_seed = 99\nthin = 7\n\
                [[policy]]\nkind = \"estor\"\n[[policy]]\nkind = \"stor\"\n[[policy]]\nkind = \"gstor\"\n\
                [[policy]]\nkind = \"lints\"\n[[policy]]\nkind = \"glm_tsl\"\n[[policy]]\nkind = \"uniform\"\n";
    let cfg = config("determinism", body);
    let bytes = |workers: usize| {
        let records = run_experiment(&cfg, workers).expect("worker pool");
        let mut buf = Vec::new();
        write_raw_rows(&raw_rows(&records), &mut buf).unwrap();
        buf
    };
    let serial = bytes(1);
    let parallel = bytes(4);
    Verdict::new(
        serial == parallel,
        format!("{} bytes serial, {} bytes with 4 workers", serial.len(), parallel.len()),
    )
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| selected.is_empty() || selected.contains(&i);
    let mut failures = 0;
    let mut report = |i: usize, title: &str, limit: Option<f64>, check: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let mut verdict = check();
        let elapsed = start.elapsed();
        if let Some(limit) = limit {
            if !within(elapsed, limit) {
                verdict.pass = false;
                verdict.detail.push_str(&format!("; over the {limit} s limit"));
            }
        }
        let status = if verdict.pass { "PASS" } else { "FAIL" };
        println!(
            "[{status}] criterion {i:>2} {title}: {} ({:.1} s)",
            verdict.detail,
            elapsed.as_secs_f64()
        );
        if !verdict.pass {
            failures += 1;
        }
    };

    if wanted(1) {
        report(1, "Stein identity", Some(5.0), &mut stein_identity);
    }
    if wanted(2) {
        report(2, "estimator rate", Some(30.0), &mut estimator_rate);
    }
    if wanted(3) {
        report(3, "sparse estimator", Some(60.0), &mut sparse_estimator);
    }
    if wanted(4) {
        report(4, "closed-form optimality", Some(10.0), &mut closed_form);
    }
    if wanted(5) {
        report(5, "epoch score", Some(5.0), &mut epoch_score_check);
    }
    if wanted(6) {
        report(6, "ESTOR sublinearity", Some(240.0), &mut estor_sublinear);
    }
    if wanted(7) {
        report(7, "STOR phase shape", Some(120.0), &mut stor_phases);
    }
    // criteria 8 and 10 share one set of grid runs; the first to run pays for it
    let grids = OnceCell::new();
    if wanted(8) {
        report(8, "misspecification", None, &mut || {
            misspecification(grids.get_or_init(misspecification_grids))
        });
    }
    if wanted(9) {
        report(9, "GSTOR kernel consistency", None, &mut gstor_consistency);
    }
    if wanted(10) {
        report(10, "timing separation", None, &mut || {
            timing(grids.get_or_init(misspecification_grids))
        });
    }
    if wanted(11) {
        report(11, "harness determinism", None, &mut determinism);
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
