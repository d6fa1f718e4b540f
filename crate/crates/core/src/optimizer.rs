//! Bound-constrained minimization of the design objectives: a projected
//! L-BFGS iteration with Armijo backtracking along the projected path.
//! Stops on projected-gradient norm, relative objective decrease, or the
//! iteration cap; the accepted-objective sequence is monotone.

use crate::constants::PhysicalConstants;
use crate::device::{DeviceSpec, TargetResponse};
use crate::error::{CoreError, Result};
use crate::objective::{
    cost_deterministic, cost_robust, cost_value, robust_moments, CollocationEvaluator,
    Quadrature, RobustSpec,
};
use crate::sparse_grid::{adaptive_moments, AdaptiveReport, MAX_LEVEL};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// History pairs kept by the limited-memory update.
const LBFGS_MEMORY: usize = 10;

/// Reference-level escalation schedule: +5 per retry, hard cap.
const ESCALATION_STEP: usize = 5;
const ESCALATION_CAP: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    #[default]
    Analytic,
    FiniteDifference,
}

/// Optional Latin-hypercube multi-start over the bound box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiStart {
    pub starts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Relative objective-decrease threshold.
    pub tolerance: f64,
    /// Projected-gradient infinity-norm threshold.
    pub pg_tolerance: f64,
    /// Start point in eV.
    pub initial_u: Vec<f64>,
    /// (U_L, U_R) in eV.
    pub bounds: (f64, f64),
    pub gradient_mode: GradientMode,
    pub multistart: Option<MultiStart>,
}

impl OptimizerConfig {
    pub fn new(initial_u: Vec<f64>, bounds: (f64, f64)) -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-15,
            pg_tolerance: 1e-12,
            initial_u,
            bounds,
            gradient_mode: GradientMode::Analytic,
            multistart: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial_u.is_empty() {
            return Err(CoreError::InvalidSpec("empty start point".into()));
        }
        if !(self.bounds.0 < self.bounds.1) {
            return Err(CoreError::InvalidSpec(format!(
                "bounds ({}, {}) are not an interval",
                self.bounds.0, self.bounds.1
            )));
        }
        if self.tolerance < 0.0 || self.pg_tolerance < 0.0 {
            return Err(CoreError::InvalidSpec("tolerances must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub u_opt: Vec<f64>,
    pub objective: f64,
    /// Projected-gradient infinity norm at u_opt.
    pub gradient_norm: f64,
    pub iterations: usize,
    /// (objective, accepted step length) per iteration.
    pub trace: Vec<(f64, f64)>,
    pub converged: bool,
    pub gradient_mode: GradientMode,
    /// Quadrature audit when the robust path chose the level adaptively.
    pub adaptive: Option<AdaptiveReport>,
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    for v in x.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Projected gradient: zero out components pushing past an active bound.
fn projected_gradient(x: &[f64], g: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    x.iter()
        .zip(g.iter())
        .map(|(&xi, &gi)| {
            if xi <= lo {
                gi.min(0.0)
            } else if xi >= hi {
                gi.max(0.0)
            } else {
                gi
            }
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

/// Two-loop recursion: d = −H·g with H seeded by the latest curvature pair.
fn lbfgs_direction(g: &[f64], history: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y.iter()) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = history.last() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), &alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s.iter()) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Minimizes an objective-with-gradient over the box. The evaluator returns
/// (value, gradient); errors abort with the iterate attached.
pub fn minimize<F>(mut eval: F, config: &OptimizerConfig) -> Result<OptimizationResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    config.validate()?;
    let (lo, hi) = config.bounds;
    let mut x = config.initial_u.clone();
    project(&mut x, lo, hi);

    let checked = |x: &[f64], k: usize, eval: &mut F| -> Result<(f64, Vec<f64>)> {
        let (f, g) = eval(x).map_err(|e| e.at(format!("iterate {k} at U = {x:?}")))?;
        if !f.is_finite() || g.len() != x.len() || g.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite(format!("objective at iterate {k}")));
        }
        Ok((f, g))
    };

    let (mut f, mut g) = checked(&x, 0, &mut eval)?;
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for k in 0..config.max_iterations {
        let pg = projected_gradient(&x, &g, lo, hi);
        if inf_norm(&pg) <= config.pg_tolerance {
            converged = true;
            break;
        }
        let mut d = lbfgs_direction(&g, &history);
        if dot(&g, &d) >= 0.0 {
            // curvature memory gave an ascent direction; restart steepest
            history.clear();
            d = g.iter().map(|&v| -v).collect();
        }
        let t0 = if history.is_empty() {
            (1.0f64).min(1.0 / inf_norm(&g).max(f64::MIN_POSITIVE))
        } else {
            1.0
        };
        let mut t = t0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(d.iter()).map(|(&xi, &di)| xi + t * di).collect();
            project(&mut xt, lo, hi);
            let step: Vec<f64> = xt.iter().zip(x.iter()).map(|(&a, &b)| a - b).collect();
            if inf_norm(&step) == 0.0 {
                break; // projection pinned every component
            }
            let (ft, gt) = checked(&xt, k + 1, &mut eval)?;
            if ft <= f + 1e-4 * dot(&g, &step) {
                accepted = Some((xt, step, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((xt, step, ft, gt)) = accepted else {
            // no decrease representable along the projected path
            converged = true;
            break;
        };
        debug_assert!(ft <= f, "descent violated: {ft} > {f}");
        debug_assert!(xt.iter().all(|&v| v >= lo && v <= hi));
        let y: Vec<f64> = gt.iter().zip(g.iter()).map(|(&a, &b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-10 * dot(&step, &step).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == LBFGS_MEMORY {
                history.remove(0);
            }
            history.push((step.clone(), y, 1.0 / sy));
        }
        let decrease = f - ft;
        x = xt;
        g = gt;
        let f_prev = f;
        f = ft;
        iterations = k + 1;
        trace.push((f, t));
        if decrease <= config.tolerance * f_prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    let pg = projected_gradient(&x, &g, lo, hi);
    Ok(OptimizationResult {
        u_opt: x,
        objective: f,
        gradient_norm: inf_norm(&pg),
        iterations,
        trace,
        converged,
        gradient_mode: GradientMode::Analytic,
        adaptive: None,
    })
}

/// Forward-difference gradient with step 1e−8·max(1, |U_j|).
fn forward_difference<F>(x: &[f64], f0: f64, mut value: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let h = 1e-8 * x[j].abs().max(1.0);
        probe[j] = x[j] + h;
        g[j] = (value(&probe)? - f0) / h;
        probe[j] = x[j];
    }
    Ok(g)
}

/// Latin-hypercube start points over the box, one stratum per start in
/// every coordinate.
fn latin_hypercube(n: usize, starts: usize, bounds: (f64, f64), seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = bounds;
    let width = (hi - lo) / starts as f64;
    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut strata: Vec<usize> = (0..starts).collect();
        strata.shuffle(&mut rng);
        columns.push(strata);
    }
    (0..starts)
        .map(|s| {
            (0..n)
                .map(|j| lo + (columns[j][s] as f64 + rng.gen::<f64>()) * width)
                .collect()
        })
        .collect()
}

fn run_with_starts<F>(config: &OptimizerConfig, mut solve_one: F) -> Result<OptimizationResult>
where
    F: FnMut(&OptimizerConfig) -> Result<OptimizationResult>,
{
    let Some(ms) = config.multistart else {
        return solve_one(config);
    };
    if ms.starts == 0 {
        return Err(CoreError::InvalidSpec("multistart needs at least one start".into()));
    }
    let mut best = solve_one(&OptimizerConfig {
        multistart: None,
        ..config.clone()
    })?;
    for start in latin_hypercube(config.initial_u.len(), ms.starts, config.bounds, ms.seed) {
        let candidate = solve_one(&OptimizerConfig {
            initial_u: start,
            multistart: None,
            ..config.clone()
        })?;
        if candidate.objective < best.objective {
            best = candidate;
        }
    }
    Ok(best)
}

/// Deterministic design: minimize J(U) over the box.
pub fn solve_deterministic(
    spec: &DeviceSpec,
    target: &TargetResponse,
    config: &OptimizerConfig,
    constants: &PhysicalConstants,
) -> Result<OptimizationResult> {
    run_with_starts(config, |cfg| {
        let mut result = match cfg.gradient_mode {
            GradientMode::Analytic => minimize(
                |u| {
                    let report = cost_deterministic(u, target, spec, constants)?;
                    Ok((report.value, report.gradient))
                },
                cfg,
            )?,
            GradientMode::FiniteDifference => minimize(
                |u| {
                    let f = cost_value(u, target, spec, constants)?;
                    let g = forward_difference(u, f, |p| cost_value(p, target, spec, constants))?;
                    Ok((f, g))
                },
                cfg,
            )?,
        };
        result.gradient_mode = cfg.gradient_mode;
        Ok(result)
    })
}

/// Quadrature level for the robust functional: fixed, or chosen by the
/// reference scan anchored at the start point, escalating ℓ̄ by 5 (capped)
/// until the scan converges. The chosen level is then frozen for the whole
/// optimization.
fn resolve_level(
    spec: &DeviceSpec,
    target: &TargetResponse,
    robust: &RobustSpec,
    anchor_u: &[f64],
    constants: &PhysicalConstants,
) -> Result<(usize, Option<AdaptiveReport>)> {
    match robust.quadrature {
        Quadrature::Fixed { level } => Ok((level, None)),
        Quadrature::Adaptive { epsilon, level_max } => {
            let eval = CollocationEvaluator::new(anchor_u, target, spec, constants)?;
            let mut reference = level_max;
            loop {
                let report = adaptive_moments(&robust.half_widths, epsilon, reference, &eval)?;
                if report.converged {
                    let level = report.level_opt;
                    return Ok((level, Some(report)));
                }
                let next = reference + ESCALATION_STEP;
                if next > ESCALATION_CAP || next > MAX_LEVEL {
                    return Err(CoreError::AdaptiveExhausted {
                        level_max: reference,
                    });
                }
                reference = next;
            }
        }
    }
}

/// Robust design: minimize J_α(U) = E(J) + α·Var(J) over the box.
pub fn solve_robust(
    spec: &DeviceSpec,
    target: &TargetResponse,
    robust: &RobustSpec,
    config: &OptimizerConfig,
    constants: &PhysicalConstants,
) -> Result<OptimizationResult> {
    robust.validate(spec.layer_count())?;
    let (level, adaptive) = resolve_level(spec, target, robust, &config.initial_u, constants)?;
    let result = run_with_starts(config, |cfg| {
        let mut result = match cfg.gradient_mode {
            GradientMode::Analytic => minimize(
                |u| {
                    let report = cost_robust(u, target, spec, robust, level, constants)?;
                    Ok((report.value, report.gradient))
                },
                cfg,
            )?,
            GradientMode::FiniteDifference => {
                let value = |u: &[f64]| -> Result<f64> {
                    let (m1, m2) =
                        robust_moments(u, target, spec, &robust.half_widths, level, constants)?;
                    Ok(m1 + robust.alpha * (m2 - m1 * m1).max(0.0))
                };
                minimize(
                    |u| {
                        let f = value(u)?;
                        let g = forward_difference(u, f, value)?;
                        Ok((f, g))
                    },
                    cfg,
                )?
            }
        };
        result.gradient_mode = cfg.gradient_mode;
        Ok(result)
    })?;
    Ok(OptimizationResult { adaptive, ..result })
}
