//! Acceptance gate: one check per release criterion, each printing a single
//! PASS/FAIL line (harness = false so the lines always reach the terminal).
//! Criteria marked "full scale" run the complete quadrature sizes; the
//! design criteria run the desk-scale recipe documented in the README (same
//! code paths, smaller reference levels). A positional argument filters
//! checks by substring, e.g. `cargo test --test acceptance -- "criterion 5"`.

use qbarrier_core::constants::PhysicalConstants;
use qbarrier_core::device::{BiasPoint, Convention, DeviceSpec, TargetResponse};
use qbarrier_core::objective::{
    cost_deterministic, cost_random, cost_value, gradient_deterministic, robust_moments,
    CollocationEvaluator, Quadrature, RobustSpec,
};
use qbarrier_core::optimizer::{
    solve_deterministic, solve_robust, GradientMode, OptimizerConfig,
};
use qbarrier_core::sparse_grid::{adaptive_moments, build_grid, integrate, SparseGridSpec};
use qbarrier_core::transmission::{
    layer_blocks, transmission_device, transmission_pcpm, DeviceOptions,
};
use qbarrier_core::wkb::{transmission_single_closed, transmission_single_matrix};
use qbarrier_core::{transmission_fd, Result};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NM: f64 = 1e-9;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn reference_device(constants: &PhysicalConstants) -> DeviceSpec {
    let ev = constants.e;
    DeviceSpec::new(
        vec![0.0, NM, 2.0 * NM, 3.0 * NM, 4.0 * NM],
        vec![0.7 * ev; 4],
        0.0,
        0.0,
        (0.7 * ev, 1.7 * ev),
    )
    .unwrap()
}

fn reference_target(constants: &PhysicalConstants) -> TargetResponse {
    TargetResponse::linear(2e-5, 9.9e-6, 0.25, 10, 0.026 * constants.e).unwrap()
}

fn reference_optimum() -> [f64; 4] {
    [0.70, 1.31, 1.54, 0.70]
}

fn criterion_01_closed_form_matches_matrix_route() -> Outcome {
    let c = PhysicalConstants::default();
    let m = c.mass();
    let ev = c.e;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut count_over = 0;
    let mut count_under = 0;
    while count_over < 1000 || count_under < 1000 {
        let e = (0.05 + 0.95 * rng.gen::<f64>()) * ev;
        let u = (0.05 + 1.45 * rng.gen::<f64>()) * ev;
        let v_bias = 0.3 * rng.gen::<f64>();
        let width = (0.3 + 4.7 * rng.gen::<f64>()) * NM;
        let de_l = e - u;
        let de_r = de_l + c.e * v_bias;
        let over = de_l > 0.0 && de_r > 0.0;
        let under = de_l < 0.0 && de_r < 0.0;
        if (over && count_over >= 1000) || (under && count_under >= 1000) || (!over && !under) {
            continue;
        }
        let closed = transmission_single_closed(e, u, v_bias, 0.0, width, m, c.e, c.hbar).unwrap();
        let matrix = transmission_single_matrix(e, u, v_bias, 0.0, width, m, c.e, c.hbar).unwrap();
        worst = worst.max(((closed.t - matrix.t) / matrix.t).abs());
        if over {
            count_over += 1;
        } else {
            count_under += 1;
        }
    }
    outcome(worst < 1e-10, format!("worst relative deviation {worst:.3e}"))
}

fn criterion_02_fd_and_pcpm_oracles_agree() -> Outcome {
    let c = PhysicalConstants::default();
    let ev = c.e;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cases: Vec<(DeviceSpec, BiasPoint)> = Vec::new();
    // the reference four-layer configuration at several biases
    let spec = reference_device(&c);
    for v in [0.05, 0.15, 0.25] {
        cases.push((
            spec.with_potentials(&[0.70 * ev, 1.31 * ev, 1.54 * ev, 0.70 * ev]),
            BiasPoint {
                v_bias: v,
                e: 0.026 * ev,
            },
        ));
    }
    while cases.len() < 100 {
        let layers = 2 + (rng.gen::<u64>() % 4) as usize;
        let mut boundaries = vec![0.0];
        for _ in 0..layers {
            boundaries.push(boundaries.last().unwrap() + (0.5 + 1.5 * rng.gen::<f64>()) * NM);
        }
        let u: Vec<f64> = (0..layers)
            .map(|_| (0.3 + 1.4 * rng.gen::<f64>()) * ev)
            .collect();
        let spec = DeviceSpec::new(boundaries, u, 0.0, 0.0, (0.0, 2.0 * ev)).unwrap();
        let bias = BiasPoint {
            v_bias: 0.3 * rng.gen::<f64>(),
            e: (0.02 + 0.9 * rng.gen::<f64>()) * ev,
        };
        cases.push((spec, bias));
    }
    let options = DeviceOptions::default();
    let mut worst = 0.0f64;
    for (spec, bias) in &cases {
        let pcpm = transmission_pcpm(spec, bias, &c, &options).unwrap().t;
        let fd = transmission_fd(spec, bias, 4000, &c, Convention::FluxRatio)
            .unwrap()
            .t;
        worst = worst.max(((pcpm - fd) / fd).abs());
    }
    outcome(worst < 1e-4, format!("worst relative deviation {worst:.3e}"))
}

fn criterion_03_wkb_tracks_exact_inside_validity() -> Outcome {
    let c = PhysicalConstants::default();
    let ev = c.e;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let options = DeviceOptions::default();
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 40 {
        let layers = 1 + (rng.gen::<u64>() % 3) as usize;
        let mut boundaries = vec![0.0];
        for _ in 0..layers {
            boundaries.push(boundaries.last().unwrap() + (0.8 + 1.2 * rng.gen::<f64>()) * NM);
        }
        let u: Vec<f64> = (0..layers)
            .map(|_| (0.4 + 1.0 * rng.gen::<f64>()) * ev)
            .collect();
        let spec = DeviceSpec::new(boundaries, u.clone(), 0.0, 0.0, (0.0, 2.0 * ev)).unwrap();
        let bias = BiasPoint {
            v_bias: 0.2 * rng.gen::<f64>(),
            e: (0.05 + 1.1 * rng.gen::<f64>()) * ev,
        };
        let parts = match layer_blocks(&spec, &bias, &c, 200, false, false) {
            Ok(p) => p,
            Err(_) => continue,
        };
        // demand a margin of at least half the kinetic offset on every layer
        let qualified = (0..layers).all(|j| parts.margins[j] > 0.5 * parts.refs[j]);
        if !qualified {
            continue;
        }
        let wkb = transmission_device(&spec, &bias, &c, &options).unwrap();
        let fd = transmission_fd(&spec, &bias, 4000, &c, Convention::FluxRatio)
            .unwrap()
            .t;
        worst = worst.max(((wkb.t - fd) / fd).abs());
        checked += 1;
    }
    outcome(
        worst < 0.25,
        format!("worst relative deviation {worst:.3e} over {checked} devices"),
    )
}

fn criterion_04_analytic_gradient_matches_central_differences() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-7;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let u: Vec<f64> = (0..4).map(|_| 0.7 + rng.gen::<f64>()).collect();
        let grad = gradient_deterministic(&u, &target, &spec, &c).unwrap();
        for j in 0..4 {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (cost_value(&up, &target, &spec, &c).unwrap()
                - cost_value(&dn, &target, &spec, &c).unwrap())
                / (2.0 * h);
            worst = worst.max((grad[j] - fd).abs() / grad[j].abs().max(fd.abs()));
        }
    }
    outcome(worst <= 1e-6, format!("worst relative deviation {worst:.3e}"))
}

fn criterion_05_deterministic_design_reaches_reference_scale() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let mut config = OptimizerConfig::new(vec![0.7; 4], (0.7, 1.7));
    config.max_iterations = 400;
    let analytic = solve_deterministic(&spec, &target, &config, &c).unwrap();
    let mut fd_config = config.clone();
    fd_config.gradient_mode = GradientMode::FiniteDifference;
    let numeric = solve_deterministic(&spec, &target, &fd_config, &c).unwrap();
    let ok = analytic.objective <= 1e-11
        && numeric.objective <= 1e-10
        && analytic.objective <= numeric.objective;
    outcome(
        ok,
        format!(
            "J_analytic = {:.3e} at {:?} ({} iterations), J_numeric = {:.3e} at {:?}",
            analytic.objective,
            analytic
                .u_opt
                .iter()
                .map(|u| (u * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
            analytic.iterations,
            numeric.objective,
            numeric
                .u_opt
                .iter()
                .map(|u| (u * 100.0).round() / 100.0)
                .collect::<Vec<_>>(),
        ),
    )
}

fn criterion_06_sparse_grid_exactness_and_decay() -> Outcome {
    fn moment_uniform(beta: &[usize]) -> f64 {
        beta.iter()
            .map(|&b| if b % 2 == 1 { 0.0 } else { 1.0 / (b + 1) as f64 })
            .product()
    }
    let mut worst = 0.0f64;
    for dim in 1..=4usize {
        for level in 0..=4usize {
            let grid = build_grid(&SparseGridSpec::unit(dim, level).unwrap()).unwrap();
            let mut beta = vec![0usize; dim];
            loop {
                if beta.iter().sum::<usize>() <= level {
                    let b = beta.clone();
                    let got = integrate(&grid, |z| {
                        Ok(z.iter()
                            .zip(b.iter())
                            .map(|(&zi, &bi)| zi.powi(bi as i32))
                            .product())
                    })
                    .unwrap();
                    worst = worst.max((got - moment_uniform(&beta)).abs());
                }
                let mut d = 0;
                while d < dim {
                    beta[d] += 1;
                    if beta[d] <= level {
                        break;
                    }
                    beta[d] = 0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
        }
    }
    // error decay on a separable analytic integrand, dimension 4
    let exact = 1.0f64.sinh().powi(4);
    let mut errs = Vec::new();
    for level in 1..=7 {
        let grid = build_grid(&SparseGridSpec::unit(4, level).unwrap()).unwrap();
        let got = integrate(&grid, |z| Ok(z.iter().map(|&x| x.exp()).product())).unwrap();
        errs.push(((got - exact) / exact).abs());
    }
    let decaying = errs.windows(2).all(|w| w[1] < w[0]);
    let steep = errs[6] < errs[2] * 1e-4;
    outcome(
        worst < 1e-12 && decaying && steep,
        format!("worst moment error {worst:.3e}, decay trace {errs:?}"),
    )
}

fn criterion_07_adaptive_loop_converges_at_full_scale() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let u = reference_optimum();
    let eval = CollocationEvaluator::new(&u, &target, &spec, &c).unwrap();
    let report = adaptive_moments(&[0.05; 4], 1e-7, 20, &eval).unwrap();
    outcome(
        report.converged && report.level_opt < 20,
        format!(
            "level {} of {}, last errors {:?}",
            report.level_opt,
            report.reference_level,
            report.errors_by_level.last()
        ),
    )
}

fn robust_design(
    alpha: f64,
    a: f64,
    epsilon: f64,
    level_max: usize,
    c: &PhysicalConstants,
) -> Result<(Vec<f64>, usize)> {
    let spec = reference_device(c);
    let target = reference_target(c);
    let robust = RobustSpec {
        half_widths: vec![a; 4],
        alpha,
        quadrature: Quadrature::Adaptive { epsilon, level_max },
    };
    let mut config = OptimizerConfig::new(vec![0.7; 4], (0.7, 1.7));
    config.max_iterations = 200;
    let result = solve_robust(&spec, &target, &robust, &config, c)?;
    let level = result.adaptive.as_ref().map(|r| r.level_opt).unwrap_or(0);
    Ok((result.u_opt, level))
}

fn criterion_08_robust_designs_reproduce_orderings() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let mut config = OptimizerConfig::new(vec![0.7; 4], (0.7, 1.7));
    config.max_iterations = 400;
    let det = solve_deterministic(&spec, &target, &config, &c).unwrap();

    // desk-scale recipe: reduced tolerance and reference level
    let mut lines = Vec::new();
    let mut all_ok = true;
    for &(a, alpha_pos, epsilon, level_max, eval_level) in &[
        (0.05, 1e12, 1e-4, 12, 8),
        (0.2, 1e10, 1e-2, 10, 8),
    ] {
        let (u_mean, _) = robust_design(0.0, a, epsilon, level_max, &c).unwrap();
        let (u_var, _) = robust_design(alpha_pos, a, epsilon, level_max, &c).unwrap();
        let box_a = vec![a; 4];
        let (m_det, m2_det) =
            robust_moments(&det.u_opt, &target, &spec, &box_a, eval_level, &c).unwrap();
        let (m_mean, m2_mean) =
            robust_moments(&u_mean, &target, &spec, &box_a, eval_level, &c).unwrap();
        let (m_var, m2_var) =
            robust_moments(&u_var, &target, &spec, &box_a, eval_level, &c).unwrap();
        let std_det = (m2_det - m_det * m_det).max(0.0).sqrt();
        let std_mean = (m2_mean - m_mean * m_mean).max(0.0).sqrt();
        let std_var = (m2_var - m_var * m_var).max(0.0).sqrt();
        let mean_ordered = m_mean <= m_det;
        let std_ordered = std_var <= std_mean;
        all_ok &= mean_ordered && std_ordered;
        lines.push(format!(
            "a = {a}: E(det) = {m_det:.3e}, E(a=0) = {m_mean:.3e}, std(a=0) = {std_mean:.3e}, std(a>0) = {std_var:.3e}, std(det) = {std_det:.3e}"
        ));
        if a == 0.2 {
            let reduction = (m_det - m_mean) / m_det;
            all_ok &= (0.15..=0.60).contains(&reduction);
            lines.push(format!("a = 0.2 mean reduction {:.1}%", reduction * 100.0));
        }
    }
    outcome(all_ok, lines.join("; "))
}

fn criterion_09_reference_moment_magnitudes_at_the_optimum() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let u = reference_optimum();
    let (mean, m2) = robust_moments(&u, &target, &spec, &[0.05; 4], 10, &c).unwrap();
    let std = (m2 - mean * mean).max(0.0).sqrt();
    // quadrature self-check: one level up moves the moments by < 5%
    let (mean_up, m2_up) = robust_moments(&u, &target, &spec, &[0.05; 4], 11, &c).unwrap();
    let stable =
        ((mean_up - mean) / mean_up).abs() < 0.05 && ((m2_up - m2) / m2_up).abs() < 0.05;
    let mean_ok = mean > 1.737e-11 / 3.0 && mean < 1.737e-11 * 3.0;
    let std_ok = std > 2.143e-11 / 3.0 && std < 2.143e-11 * 3.0;
    outcome(
        mean_ok && std_ok && stable,
        format!("mean = {mean:.4e} (ref 1.737e-11), std = {std:.4e} (ref 2.143e-11)"),
    )
}

fn criterion_10_sparse_mean_agrees_with_monte_carlo() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let u = reference_optimum();
    let a = 0.05;
    let (sparse_mean, _) = robust_moments(&u, &target, &spec, &[a; 4], 10, &c).unwrap();
    let samples = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let z: Vec<f64> = (0..4).map(|_| a * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        let j = cost_random(&u, &z, &target, &spec, &c).unwrap();
        sum += j;
        sum_sq += j * j;
    }
    let mc_mean = sum / samples as f64;
    let mc_var = (sum_sq / samples as f64 - mc_mean * mc_mean).max(0.0);
    let se = (mc_var / samples as f64).sqrt();
    let dev = (sparse_mean - mc_mean).abs();
    outcome(
        dev <= 3.0 * se,
        format!(
            "sparse {sparse_mean:.5e}, MC {mc_mean:.5e} +- {se:.2e} (dev/se = {:.2})",
            dev / se
        ),
    )
}

/// Ties the acceptance device to the library invariant the criteria rely on:
/// the reported objective is exactly the residual sum of squares.
fn cost_definition_consistency() -> Outcome {
    let c = PhysicalConstants::default();
    let spec = reference_device(&c);
    let target = reference_target(&c);
    let report = cost_deterministic(&reference_optimum(), &target, &spec, &c).unwrap();
    let direct: f64 = report.per_point_residuals.iter().map(|r| r * r).sum();
    let dev = (report.value - direct).abs();
    outcome(dev <= 1e-14 * report.value, format!("deviation {dev:.3e}"))
}

fn main() {
    type Check = (&'static str, &'static str, fn() -> Outcome);
    let checks: &[Check] = &[
        (
            "criterion 1",
            "closed-form vs matrix WKB, 1000 cases per regime",
            criterion_01_closed_form_matches_matrix_route,
        ),
        (
            "criterion 2",
            "FD(4000) vs PCPM(1000) on 100 configurations",
            criterion_02_fd_and_pcpm_oracles_agree,
        ),
        (
            "criterion 3",
            "WKB within 25% of FD where margins exceed half the offset",
            criterion_03_wkb_tracks_exact_inside_validity,
        ),
        (
            "criterion 4",
            "analytic vs central-difference gradient on 50 points",
            criterion_04_analytic_gradient_matches_central_differences,
        ),
        (
            "criterion 5",
            "design from the flat start reaches J <= 1e-11 (analytic) / 1e-10 (numeric)",
            criterion_05_deterministic_design_reaches_reference_scale,
        ),
        (
            "criterion 6",
            "polynomial exactness to 1e-12 and exponential decay",
            criterion_06_sparse_grid_exactness_and_decay,
        ),
        (
            "criterion 7",
            "a = 0.05 adaptive scan at epsilon = 1e-7, reference level 20",
            criterion_07_adaptive_loop_converges_at_full_scale,
        ),
        (
            "criterion 8",
            "robust-design mean/std orderings at both noise levels",
            criterion_08_robust_designs_reproduce_orderings,
        ),
        (
            "criterion 9",
            "mean/std at the reference optimum within 3x of reference values",
            criterion_09_reference_moment_magnitudes_at_the_optimum,
        ),
        (
            "criterion 10",
            "sparse-grid mean within 3 standard errors of 1e5-sample MC",
            criterion_10_sparse_mean_agrees_with_monte_carlo,
        ),
        (
            "consistency",
            "objective equals the residual sum of squares",
            cost_definition_consistency,
        ),
    ];

    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    let mut ran = 0;
    for (name, label, run) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let started = std::time::Instant::now();
        let result = std::panic::catch_unwind(run);
        let elapsed = started.elapsed().as_secs_f64();
        let (ok, detail) = match result {
            Ok(o) => (o.ok, o.detail),
            Err(p) => {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        println!(
            "{name:>12}: {} [{elapsed:7.2}s] {label} ({detail})",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failures += 1;
        }
    }
    if ran == 0 {
        println!("no acceptance check matches the filter {filters:?}");
        std::process::exit(2);
    }
    if failures > 0 {
        println!("{failures} of {ran} acceptance checks failed");
        std::process::exit(1);
    }
    println!("all {ran} acceptance checks passed");
}
