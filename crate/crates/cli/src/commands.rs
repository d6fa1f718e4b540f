//! The five subcommands. Each reads the shared RunConfig, runs one pipeline
//! and emits CSV/table files plus a key-value scalar file where appropriate.

use qbarrier_core::objective::cost_robust;
use qbarrier_core::optimizer::{solve_deterministic, solve_robust, GradientMode, OptimizationResult};
use qbarrier_core::sparse_grid::build_grid;
use qbarrier_core::transmission::SolverRegistry;
use qbarrier_core::wkb::{wkb_validity, Method};
use qbarrier_core::{BiasPoint, Quadrature, RobustSpec, SparseGridSpec};

use crate::config::RunConfig;
use crate::output::{num, Emitter};
use crate::{core_error, CliError};

fn method_name(m: Method) -> &'static str {
    match m {
        Method::ClosedFormOver => "wkb-closed-over",
        Method::ClosedFormUnder => "wkb-closed-under",
        Method::MatrixWkb => "wkb",
        Method::PiecewiseConstantFallback => "pcpm-fallback",
        Method::FiniteDifference => "fd",
    }
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn sweep_of<'a>(config: &'a RunConfig) -> Result<&'a crate::config::SweepSection, CliError> {
    config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs a [sweep] section".into()))
}

pub fn transmission(config: &RunConfig, out: &Emitter) -> Result<(), CliError> {
    let constants = config.constants.resolve();
    let spec = config.device.to_spec(&constants)?;
    let sweep = sweep_of(config)?;
    let options = config.solver.options()?;
    let registry = SolverRegistry::with_defaults();
    let solver = registry
        .get(config.solver.solver_name())
        .map_err(core_error)?;
    let mut rows = Vec::new();
    for v in sweep.biases() {
        let bias = BiasPoint {
            v_bias: v,
            e: sweep.energy_ev * constants.e,
        };
        let r = solver
            .transmission(&spec, &bias, &constants, &options)
            .map_err(core_error)?;
        rows.push(vec![
            num(v),
            num(r.t),
            method_name(r.method).to_string(),
            num(r.validity_margin / constants.e),
        ]);
    }
    out.table(
        "transmission.csv",
        &["v_bias", "t", "method", "validity_margin_ev"],
        &rows,
    )
}

/// Validity margin F(V_bias) of the device extent treated as one uniform
/// barrier at each listed potential; the single-layer case is exact.
pub fn validate_wkb(config: &RunConfig, out: &Emitter) -> Result<(), CliError> {
    let constants = config.constants.resolve();
    let spec = config.device.to_spec(&constants)?;
    let sweep = sweep_of(config)?;
    let us: Vec<f64> = sweep.u_ev.clone().unwrap_or_else(|| config.device.u_ev.clone());
    if us.is_empty() {
        return Err(CliError::Config("validate-wkb needs at least one potential".into()));
    }
    let labels: Vec<String> = us.iter().map(|u| format!("f_u={u}")).collect();
    let mut header = vec!["v_bias".to_string()];
    header.extend(labels);
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let (x1, x2) = (spec.boundaries[0], spec.boundaries[spec.layer_count()]);
    let mut rows = Vec::new();
    for v in sweep.biases() {
        let mut row = vec![num(v)];
        for &u in &us {
            let (f, _) = wkb_validity(
                sweep.energy_ev * constants.e,
                u * constants.e,
                v,
                x1,
                x2,
                constants.mass(),
                constants.e,
                constants.hbar,
            )
            .map_err(core_error)?;
            row.push(num(f / constants.e));
        }
        rows.push(row);
    }
    out.table("validity.csv", &header_refs, &rows)
}

pub fn oracle_compare(config: &RunConfig, out: &Emitter) -> Result<(), CliError> {
    let constants = config.constants.resolve();
    let spec = config.device.to_spec(&constants)?;
    let sweep = sweep_of(config)?;
    let options = config.solver.options()?;
    let registry = SolverRegistry::with_defaults();
    let mut rows = Vec::new();
    for v in sweep.biases() {
        let bias = BiasPoint {
            v_bias: v,
            e: sweep.energy_ev * constants.e,
        };
        let mut t = [0.0; 3];
        for (k, name) in ["hybrid-wkb", "pcpm", "fd"].iter().enumerate() {
            t[k] = registry
                .get(name)
                .map_err(core_error)?
                .transmission(&spec, &bias, &constants, &options)
                .map_err(core_error)?
                .t;
        }
        rows.push(vec![
            num(v),
            num(t[0]),
            num(t[1]),
            num(t[2]),
            num(relative_deviation(t[0], t[1])),
            num(relative_deviation(t[0], t[2])),
            num(relative_deviation(t[1], t[2])),
        ]);
    }
    out.table(
        "oracle_compare.csv",
        &[
            "v_bias",
            "t_wkb",
            "t_pcpm",
            "t_fd",
            "dev_wkb_pcpm",
            "dev_wkb_fd",
            "dev_pcpm_fd",
        ],
        &rows,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    Deterministic,
    Robust,
}

pub fn design(config: &RunConfig, mode: DesignMode, out: &Emitter) -> Result<(), CliError> {
    let constants = config.constants.resolve();
    let spec = config.device.to_spec(&constants)?;
    let target = config
        .target
        .as_ref()
        .ok_or_else(|| CliError::Config("design needs a [target] section".into()))?
        .to_target(&constants)?;
    let opt_config = config.optimizer.to_config(&config.device)?;
    let gradient = match opt_config.gradient_mode {
        GradientMode::Analytic => "analytic",
        GradientMode::FiniteDifference => "finite-difference",
    };

    let n = spec.layer_count();
    let u_header: Vec<String> = (1..=n).map(|j| format!("u_{j}")).collect();
    let mut scalars: Vec<(String, String)> = Vec::new();
    let result: OptimizationResult;
    match mode {
        DesignMode::Deterministic => {
            result = solve_deterministic(&spec, &target, &opt_config, &constants)
                .map_err(core_error)?;
            let mut header = vec!["gradient", "j"];
            header.extend(u_header.iter().map(|s| s.as_str()));
            let mut row = vec![gradient.to_string(), num(result.objective)];
            row.extend(result.u_opt.iter().map(|&u| num(u)));
            out.table("design_table.csv", &header, &[row])?;
            scalars.push(("mode".into(), "deterministic".into()));
            scalars.push(("objective".into(), num(result.objective)));
        }
        DesignMode::Robust => {
            let robust: RobustSpec = config
                .robust
                .as_ref()
                .ok_or_else(|| CliError::Config("design --mode robust needs a [robust] section".into()))?
                .to_spec(n)?;
            result =
                solve_robust(&spec, &target, &robust, &opt_config, &constants).map_err(core_error)?;
            let level = match (&result.adaptive, &robust.quadrature) {
                (Some(r), _) => r.level_opt,
                (None, Quadrature::Fixed { level }) => *level,
                (None, Quadrature::Adaptive { .. }) => {
                    return Err(CliError::Numeric(
                        "adaptive solve returned no level report".into(),
                    ))
                }
            };
            let report = cost_robust(&result.u_opt, &target, &spec, &robust, level, &constants)
                .map_err(core_error)?;
            let mut header = vec!["alpha", "mean", "std"];
            header.extend(u_header.iter().map(|s| s.as_str()));
            let mut row = vec![num(robust.alpha), num(report.mean), num(report.std_dev)];
            row.extend(result.u_opt.iter().map(|&u| num(u)));
            out.table("design_table.csv", &header, &[row])?;
            scalars.push(("mode".into(), "robust".into()));
            scalars.push(("alpha".into(), num(robust.alpha)));
            scalars.push(("objective".into(), num(result.objective)));
            scalars.push(("mean".into(), num(report.mean)));
            scalars.push(("variance".into(), num(report.variance)));
            scalars.push(("std".into(), num(report.std_dev)));
            scalars.push(("quadrature_level".into(), level.to_string()));
            scalars.push(("quadrature_nodes".into(), report.node_count.to_string()));
            if let Some(adaptive) = &result.adaptive {
                let rows: Vec<Vec<String>> = adaptive
                    .errors_by_level
                    .iter()
                    .map(|&(l, em, em2)| vec![l.to_string(), num(em), num(em2)])
                    .collect();
                out.table(
                    "adaptive_trace.csv",
                    &["level", "mean_rel_dev", "second_moment_rel_dev"],
                    &rows,
                )?;
                scalars.push(("reference_level".into(), adaptive.reference_level.to_string()));
                scalars.push(("adaptive_converged".into(), adaptive.converged.to_string()));
            }
        }
    }

    let trace_rows: Vec<Vec<String>> = result
        .trace
        .iter()
        .enumerate()
        .map(|(k, &(f, step))| vec![(k + 1).to_string(), num(f), num(step)])
        .collect();
    out.table("design_trace.csv", &["iteration", "objective", "step"], &trace_rows)?;

    for (j, &u) in result.u_opt.iter().enumerate() {
        scalars.push((format!("u_{}", j + 1), num(u)));
    }
    scalars.push(("gradient_mode".into(), gradient.into()));
    scalars.push(("gradient_norm".into(), num(result.gradient_norm)));
    scalars.push(("iterations".into(), result.iterations.to_string()));
    scalars.push(("converged".into(), result.converged.to_string()));
    out.scalars("design_summary.txt", &scalars)?;

    if !result.converged {
        return Err(CliError::NonConvergence(format!(
            "optimizer stopped at the iteration cap ({})",
            result.iterations
        )));
    }
    Ok(())
}

pub fn quadrature_export(config: &RunConfig, out: &Emitter) -> Result<(), CliError> {
    let q = config
        .quadrature
        .as_ref()
        .ok_or_else(|| CliError::Config("quadrature-export needs a [quadrature] section".into()))?;
    let dimension = q.dimension.unwrap_or(config.device.u_ev.len());
    let half_widths = q
        .half_widths_ev
        .clone()
        .or_else(|| {
            config.robust.as_ref().and_then(|r| {
                r.half_widths_ev
                    .clone()
                    .or_else(|| r.half_width_ev.map(|a| vec![a; dimension]))
            })
        })
        .unwrap_or_else(|| vec![1.0; dimension]);
    let spec = SparseGridSpec::new(dimension, q.level, half_widths).map_err(core_error)?;
    let grid = build_grid(&spec).map_err(core_error)?;
    let mut header: Vec<String> = (1..=dimension).map(|d| format!("z_{d}")).collect();
    header.push("weight".into());
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    let rows: Vec<Vec<String>> = (0..grid.node_count())
        .map(|r| {
            let mut row: Vec<String> = grid.node(r).iter().map(|&z| num(z)).collect();
            row.push(num(grid.weights[r]));
            row
        })
        .collect();
    out.table("quadrature.csv", &header_refs, &rows)
}
