//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use sitconf::corrections::{
    adaptive_theta_update, build_deformation, estimate_beta_hat, fit_chi_squared, fixed_theta_update, laplace_loglik,
    BetaEstimatorConfig, CorrectionEvent, LearningMode, ThetaUpdateConfig,
};
use sitconf::demo::{build_default_grids, logsumexp, JointBelief};
use sitconf::harness::{
    calibrate_beta_model, run_correction_study, run_reference_demos, CorrectionContext, DemoContext, ExperimentConfig,
    ReferenceReport,
};
use sitconf::model::{
    smoothed_features, EnvironmentSpec, Feature, FeatureConfig, FeatureVector, Trajectory, WeightVector,
};
use sitconf::optimizer::{
    minimal_effort_correction, trajectory_cost_and_gradient, CorrectionProblem, CorrectionSolution, OptimizerConfig,
};

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn desk() -> ExperimentConfig {
    ExperimentConfig::load(&configs().join("desk.json")).expect("desk config")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference(set_size: usize) -> Result<(ReferenceReport, Duration), String> {
    let mut cfg = desk();
    cfg.set_size = set_size;
    let start = Instant::now();
    let env = cfg.load_environment().map_err(|e| e.to_string())?.env;
    let ctx = DemoContext::new(&cfg, env).map_err(|e| e.to_string())?;
    let report = run_reference_demos(&cfg, &ctx).map_err(|e| e.to_string())?;
    Ok((report, start.elapsed()))
}

/// Criteria 1 to 3 hold at the default set size and at the larger one.
fn at_each_size(reports: &[(ReferenceReport, Duration)], f: impl Fn(&ReferenceReport, Duration) -> Outcome) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (r, took) in reports {
        let out = f(r, *took);
        ok &= out.is_ok();
        parts.push(format!("[{}] {}", r.set_size, out.unwrap_or_else(|e| e)));
    }
    check(ok, parts.join("; "))
}

fn criterion_1(r: &ReferenceReport, took: Duration) -> Outcome {
    let p = &r.demo("perfect").ok_or("no perfect demo")?.posterior;
    check(
        p.argmax_theta == [0.0, 1.0, 0.0] && p.argmax_beta == 100.0 && took.as_secs_f64() < 60.0,
        format!(
            "argmax θ {:?} β {} in {:.2}s",
            p.argmax_theta,
            p.argmax_beta,
            took.as_secs_f64()
        ),
    )
}

fn criterion_2(r: &ReferenceReport) -> Outcome {
    let p = &r.demo("perfect").ok_or("no perfect demo")?.posterior;
    let n = &r.demo("noisy").ok_or("no noisy demo")?.posterior;
    check(
        n.argmax_theta == [0.0, 1.0, 0.0] && n.argmax_beta < 100.0 && n.max_probability < p.max_probability,
        format!(
            "argmax θ {:?} β {}, peak {:.4} vs perfect {:.4}",
            n.argmax_theta, n.argmax_beta, n.max_probability, p.max_probability
        ),
    )
}

fn criterion_3(r: &ReferenceReport) -> Outcome {
    let d = r.demo("misspecified").ok_or("no misspecified demo")?;
    let ratio = d.posterior.theta_entropy_ratio;
    check(
        d.misspecified_flag && r.epsilon_calibrated && ratio >= 0.9,
        format!(
            "flag {} with calibrated ε {:.4}, θ entropy {:.3} of uniform",
            d.misspecified_flag, r.epsilon, ratio
        ),
    )
}

fn criterion_4() -> Outcome {
    let cfg = desk();
    let start = Instant::now();
    let env = cfg.load_correction_environment().map_err(|e| e.to_string())?.env;
    let ctx = CorrectionContext::new(&cfg, env).map_err(|e| e.to_string())?;
    let r = calibrate_beta_model(&cfg, &ctx).map_err(|e| e.to_string())?;
    let took = start.elapsed().as_secs_f64();
    let explained = r.samples.iter().filter(|s| s.explained).count();
    let unexplained = r.samples.len() - explained;
    check(
        r.events_per_style >= 50
            && explained >= 50
            && unexplained >= 50
            && r.mean_beta_explained >= 2.0 * r.mean_beta_unexplained
            && took < 300.0,
        format!(
            "mean β̂ {:.3} (E=1, {explained}) vs {:.3} (E=0, {unexplained}) in {took:.2}s",
            r.mean_beta_explained, r.mean_beta_unexplained
        ),
    )
}

fn criterion_5() -> Outcome {
    let cfg = desk();
    let env = cfg.load_correction_environment().map_err(|e| e.to_string())?.env;
    let ctx = CorrectionContext::new(&cfg, env).map_err(|e| e.to_string())?;
    let model = calibrate_beta_model(&cfg, &ctx).map_err(|e| e.to_string())?.model;
    let r = run_correction_study(&cfg, &ctx, Some(&model), &[LearningMode::Fixed, LearningMode::Adaptive])
        .map_err(|e| e.to_string())?;
    let mut ok = r.seeds >= 20;
    let mut parts = vec![format!("{} seeds", r.seeds)];
    for t in &r.tasks {
        let fixed = &t.mode(LearningMode::Fixed).ok_or("no fixed run")?.mean_regret;
        let adaptive = &t.mode(LearningMode::Adaptive).ok_or("no adaptive run")?.mean_regret;
        let good = if t.explained {
            let (f, a) = (fixed.iter().sum::<f64>(), adaptive.iter().sum::<f64>());
            let rel = if f.max(a) > 1e-9 {
                (a - f).abs() / f.max(1e-12)
            } else {
                0.0
            };
            parts.push(format!("{} rel {:.3}", t.name, rel));
            rel <= 0.1
        } else {
            parts.push(format!("{} adaptive {:.4?} fixed {:.4?}", t.name, adaptive, fixed));
            adaptive.iter().zip(fixed).all(|(a, f)| a < f || a.max(*f) < 1e-9)
        };
        ok &= good;
    }
    check(ok, parts.join("; "))
}

fn unit_solution(u_star: Vec<f64>) -> CorrectionSolution {
    let k = u_star.len();
    CorrectionSolution {
        u_star,
        hessian: DMatrix::identity(k, k),
        log_det_hessian: 0.0,
        constraint_residual: 0.0,
        converged: true,
        kappa: 1e6,
    }
}

fn criterion_6() -> Outcome {
    let cfg = BetaEstimatorConfig {
        lambda: 0.5,
        k: 2,
        ..BetaEstimatorConfig::default()
    };
    let beta = estimate_beta_hat(&[1.0, 1.0], &unit_solution(vec![0.0, 0.0]), &cfg).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut endpoints = true;
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let theta = WeightVector((0..3).map(|_| rng.random_range(0.0..3.0)).collect());
        let delta = FeatureVector((0..3).map(|_| rng.random_range(-2.0..2.0)).collect());
        let up = ThetaUpdateConfig {
            alpha: rng.random_range(0.01..2.0),
            nu: rng.random_range(0.1..20.0),
            ..ThetaUpdateConfig::default()
        };
        let none = adaptive_theta_update(&theta, &delta, 0.0, &up, 3).map_err(|e| e.to_string())?;
        let full = adaptive_theta_update(&theta, &delta, 1.0, &up, 3).map_err(|e| e.to_string())?;
        let fixed = fixed_theta_update(&theta, &delta, up.alpha).map_err(|e| e.to_string())?;
        endpoints &= none.theta == theta && full.theta == fixed;
        let p = rng.random_range(0.001..0.999);
        let mid = adaptive_theta_update(&theta, &delta, p, &up, 3).map_err(|e| e.to_string())?;
        worst = worst.max(mid.residual);
    }
    check(
        beta == 1.0 && endpoints && worst <= 1e-8,
        format!("β̂ {beta}, exact endpoints {endpoints}, worst fixed-point residual {worst:.2e}"),
    )
}

fn jittered(env: &EnvironmentSpec, rng: &mut impl Rng) -> Trajectory {
    let n = env.n;
    let mut flat = Trajectory::straight_line(&env.start, &env.goal, env.horizon).into_flat();
    let len = flat.len();
    for v in &mut flat[n..len - n] {
        *v += 0.6 * (rng.random::<f64>() - 0.5);
    }
    Trajectory::from_flat(n, flat).unwrap()
}

fn worst_gradient_error(env: &EnvironmentSpec) -> f64 {
    let cfg = FeatureConfig::new(Feature::ALL.to_vec(), vec![20.0, 8.0, 1.5, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let traj = jittered(env, &mut rng);
        let theta = WeightVector((0..4).map(|_| rng.random::<f64>()).collect());
        let (_, grad) = trajectory_cost_and_gradient(&theta, &traj, env, &cfg).unwrap();
        let cost = |flat: Vec<f64>| {
            let t = Trajectory::from_flat(env.n, flat).unwrap();
            trajectory_cost_and_gradient(&theta, &t, env, &cfg).unwrap().0
        };
        let scale = grad.iter().map(|g| g.abs()).fold(1e-8, f64::max);
        for j in 0..grad.len() {
            let h = 1e-6;
            let mut up = traj.as_flat().to_vec();
            let mut down = up.clone();
            up[j] += h;
            down[j] -= h;
            let numeric = (cost(up) - cost(down)) / (2.0 * h);
            worst = worst.max((grad[j] - numeric).abs() / scale);
        }
    }
    worst
}

/// Largest relative gap between the Laplace and quadrature log-likelihoods of
/// a push along a line, over a range of β.
fn worst_laplace_gap() -> f64 {
    let env = EnvironmentSpec {
        n: 1,
        horizon: 10,
        dt: 0.1,
        table_offset: 0.0,
        laptop_center: vec![0.0],
        laptop_radius: 0.5,
        human_center: vec![2.0],
        human_radius: 0.1,
        start: vec![0.2],
        goal: vec![0.2],
        workspace_min: None,
        workspace_max: None,
    };
    let features = FeatureConfig::unnormalized(vec![Feature::Laptop]);
    let op = build_deformation(&env, 0.5).unwrap();
    let base = Trajectory::straight_line(&env.start, &env.goal, env.horizon);
    let (t, u_h, lambda) = (5, [0.6], 0.5);
    let deformed = op.deform(&base, &CorrectionEvent { t, u_h: u_h.to_vec() }).unwrap();
    let target = smoothed_features(&deformed, &env, &features).unwrap();
    let opt = OptimizerConfig {
        kappa_max: 50.0,
        ..OptimizerConfig::default()
    };
    let problem = CorrectionProblem {
        env: &env,
        features: &features,
        operator: &op,
        base: &base,
        t,
        target: &target,
        effort_weight: lambda,
    };
    let sol = minimal_effort_correction(problem, &opt, Some(&u_h)).unwrap();
    let cfg = BetaEstimatorConfig {
        lambda,
        k: 1,
        ..BetaEstimatorConfig::default()
    };
    let f = |u: f64| {
        let d = op.deform(&base, &CorrectionEvent { t, u_h: vec![u] }).unwrap();
        let r = smoothed_features(&d, &env, &features).unwrap()[0] - target[0];
        lambda * u * u + sol.kappa * r * r
    };
    let mut worst = 0.0f64;
    for beta in [0.5, 2.0, 10.0, 50.0] {
        let width = 12.0 / (beta * sol.hessian[(0, 0)]).sqrt();
        let steps = 40_000;
        let h = 2.0 * width / steps as f64;
        let f_star = f(sol.u_star[0]);
        let z: f64 = (0..=steps)
            .map(|i| {
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * (-beta * (f(sol.u_star[0] - width + i as f64 * h) - f_star)).exp()
            })
            .sum();
        let quad = -beta * (f(u_h[0]) - f_star) - (z * h).ln();
        let lap = laplace_loglik(&u_h, &sol, beta, &cfg).unwrap();
        worst = worst.max((lap - quad).abs() / quad.abs());
    }
    worst
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lse = 0.0f64;
    for _ in 0..200 {
        let len = rng.random_range(1..40);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-30.0..30.0)).collect();
        let naive = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        lse = lse.max((logsumexp(&v).unwrap() - naive).abs());
    }
    let extremes = [
        logsumexp(&[1000.0, 1000.0]).unwrap(),
        logsumexp(&[-1000.0, -1000.0]).unwrap(),
    ];
    let finite = extremes.iter().all(|v| v.is_finite());

    let cfg = desk();
    let env = cfg.load_environment().map_err(|e| e.to_string())?.env;
    let ctx = DemoContext::new(&cfg, env.clone()).map_err(|e| e.to_string())?;
    let mut belief: JointBelief = ctx.uniform_belief().map_err(|e| e.to_string())?;
    let mut drift = 0.0f64;
    for _ in 0..100 {
        let m = &ctx.set.members[rng.random_range(0..ctx.set.len())];
        let demo = FeatureVector(m.features.iter().map(|v| v * rng.random_range(0.9..1.1)).collect());
        belief = belief.update(&demo, &ctx.set).map_err(|e| e.to_string())?;
        drift = drift.max((belief.total_mass() - 1.0).abs());
    }

    let grad = worst_gradient_error(&env);
    let laplace = worst_laplace_gap();
    check(
        lse < 1e-12 && finite && drift < 1e-9 && grad < 1e-4 && laplace < 0.1,
        format!(
            "logsumexp {lse:.1e}, finite at ±1000 {finite}, mass drift {drift:.1e}, gradient {grad:.1e}, laplace {laplace:.3}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let (thetas, betas) = build_default_grids(3).map_err(|e| e.to_string())?;
    check(
        thetas.len() == 19 && betas.values() == [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0],
        format!("{} directions, β {:?}", thetas.len(), betas.values()),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dist = ChiSquared::new(3.0).unwrap();
    let samples: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
    let fit = fit_chi_squared(&samples).map_err(|e| e.to_string())?;
    check((fit.df - 3.0).abs() / 3.0 < 0.1, format!("fitted df {:.4}", fit.df))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        files.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).unwrap(),
        );
    }
    files
}

fn criterion_10() -> Outcome {
    let config = configs().join("desk.json");
    let commands: [&[&str]; 6] = [
        &["demo-infer"],
        &["case-study"],
        &["calibrate-beta"],
        &["run-online", "--mode", "fixed"],
        &["run-online"],
        &["sample-trajectories"],
    ];
    let mut failures = Vec::new();
    let mut files = 0;
    for args in commands {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let out = tempfile::tempdir().map_err(|e| e.to_string())?;
            let status = Command::new(env!("CARGO_BIN_EXE_sitconf"))
                .args(args)
                .arg("--config")
                .arg(&config)
                .arg("--out")
                .arg(out.path())
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!(
                    "{} failed: {}",
                    args.join(" "),
                    String::from_utf8_lossy(&status.stderr)
                ));
            }
            runs.push((snapshot(out.path()), status.stdout));
        }
        files += runs[0].0.len();
        if runs[0] != runs[1] || runs[0].0.is_empty() {
            failures.push(args.join(" "));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} invocations, {files} files compared, differing: {failures:?}",
            commands.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    match [300, 1500].into_iter().map(reference).collect::<Result<Vec<_>, _>>() {
        Ok(reports) => {
            results.push((1, at_each_size(&reports, criterion_1)));
            results.push((2, at_each_size(&reports, |r, _| criterion_2(r))));
            results.push((3, at_each_size(&reports, |r, _| criterion_3(r))));
        }
        Err(e) => {
            for n in [1, 2, 3] {
                results.push((n, Err(e.clone())));
            }
        }
    }
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    results.push((6, criterion_6()));
    results.push((7, criterion_7()));
    results.push((8, criterion_8()));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));

    let mut failed = false;
    for (n, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {detail}"),
            Err(detail) => {
                failed = true;
                println!("criterion {n}: FAIL {detail}");
            }
        }
    }
    if failed {
        std::process::exit(1);
    }
}
