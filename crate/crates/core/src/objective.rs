//! Least-squares design objective J(U) = Σ_i (T0_i − T(V_i, U))², its
//! analytic gradient, the perturbed cost J(U+z), and the robust functional
//! J_α(U) = E[J(U,·)] + α·Var(J(U,·)) over a uniform uncertainty box.
//!
//! Potentials cross this interface in eV (gradients in 1/eV); everything
//! below it runs in Joules. Transmissions use the amplitude-ratio
//! convention, which is the scale the target response is stated in.

use crate::constants::PhysicalConstants;
use crate::device::{BiasPoint, Convention, DeviceSpec, TargetResponse};
use crate::error::{CoreError, Result};
use crate::mat2::Mat2;
use crate::sparse_grid::{
    stream_moments, stream_robust, Chunk, ChunkEvaluator, SparseGridSpec,
};
use crate::transmission::{chain_t, layer_block_for, lead_row_col, lead_wavenumbers};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Fallback slice count inside design objectives; the objective is smooth
/// in U only if this stays fixed across evaluations.
pub const DESIGN_SLICES: usize = 200;

#[derive(Debug, Clone)]
pub struct ObjectiveReport {
    pub value: f64,
    /// ∂J/∂U_j in 1/eV.
    pub gradient: Vec<f64>,
    /// T0_i − T_i per bias point.
    pub per_point_residuals: Vec<f64>,
    pub transmissions: Vec<f64>,
}

fn check_layout(u: &[f64], spec: &DeviceSpec) -> Result<()> {
    if u.len() != spec.layer_count() {
        return Err(CoreError::InvalidSpec(format!(
            "{} potentials for {} layers",
            u.len(),
            spec.layer_count()
        )));
    }
    Ok(())
}

/// dT/dU_j (1/J) via dm11_j = row·M_1⋯M_{j−1}·dM_j·M_{j+1}⋯M_N·col and
/// dT/dU_j = −2T·Re(dm11_j/m11); the lead factors are U-independent.
fn chain_gradient(
    blocks: &[Mat2],
    dblocks: &[Mat2],
    kappa_in: f64,
    kappa_out: f64,
    hbar: f64,
    t: f64,
) -> Result<Vec<f64>> {
    let n = blocks.len();
    let ((r0, r1), (c0, c1)) = lead_row_col(kappa_in, kappa_out, hbar);
    let mut cols = vec![(c0, c1); n + 1];
    for j in (0..n).rev() {
        let (x, y) = cols[j + 1];
        let b = &blocks[j];
        cols[j] = (b.a * x + b.b * y, b.c * x + b.d * y);
    }
    let mut row = (r0, r1);
    let mut grad = vec![0.0; n];
    for j in 0..n {
        let (cx, cy) = cols[j + 1];
        let b = &blocks[j];
        let d = &dblocks[j];
        let m11 = row.0 * (b.a * cx + b.b * cy) + row.1 * (b.c * cx + b.d * cy);
        if m11.norm() == 0.0 {
            return Err(CoreError::NonFinite("vanishing chain element".into()));
        }
        let dm11 = row.0 * (d.a * cx + d.b * cy) + row.1 * (d.c * cx + d.d * cy);
        grad[j] = -2.0 * t * (dm11 / m11).re;
        row = (
            row.0 * b.a + row.1 * b.c,
            row.0 * b.b + row.1 * b.d,
        );
    }
    Ok(grad)
}

/// T(V_i) for every target bias, optionally with dT/dU rows (1/J).
fn device_response(
    u_joule: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    constants: &PhysicalConstants,
    with_gradient: bool,
) -> Result<(Vec<f64>, Option<Vec<Vec<f64>>>)> {
    let n = spec.layer_count();
    let mut ts = Vec::with_capacity(target.len());
    let mut grads = with_gradient.then(|| Vec::with_capacity(target.len()));
    for (i, bias) in target.bias_points().iter().enumerate() {
        let ctx = format!("bias point {} (V = {} V)", i + 1, bias.v_bias);
        let (kin, kout) =
            lead_wavenumbers(spec, bias, constants).map_err(|e| e.at(ctx.clone()))?;
        let mut blocks = Vec::with_capacity(n);
        let mut dblocks = with_gradient.then(|| Vec::with_capacity(n));
        for j in 0..n {
            let r = layer_block_for(
                spec,
                bias,
                j,
                u_joule[j],
                constants,
                DESIGN_SLICES,
                false,
                with_gradient,
            )
            .map_err(|e| e.at(ctx.clone()))?;
            blocks.push(r.m);
            if let Some(d) = dblocks.as_mut() {
                d.push(r.dm.unwrap());
            }
        }
        let t = chain_t(&blocks, kin, kout, constants.hbar, Convention::AmplitudeOnly)
            .map_err(|e| e.at(ctx.clone()))?;
        ts.push(t);
        if let Some(g) = grads.as_mut() {
            g.push(
                chain_gradient(
                    &blocks,
                    dblocks.as_ref().unwrap(),
                    kin,
                    kout,
                    constants.hbar,
                    t,
                )
                .map_err(|e| e.at(ctx))?,
            );
        }
    }
    Ok((ts, grads))
}

/// Cost, residuals, and analytic gradient at U (eV).
pub fn cost_deterministic(
    u_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    constants: &PhysicalConstants,
) -> Result<ObjectiveReport> {
    check_layout(u_ev, spec)?;
    let u_joule: Vec<f64> = u_ev.iter().map(|&u| u * constants.e).collect();
    let (ts, grads) = device_response(&u_joule, target, spec, constants, true)?;
    let grads = grads.unwrap();
    let n = spec.layer_count();
    let mut value = 0.0;
    let mut gradient = vec![0.0; n];
    let mut residuals = Vec::with_capacity(ts.len());
    for (i, &t) in ts.iter().enumerate() {
        let r = target.samples[i].1 - t;
        value += r * r;
        residuals.push(r);
        for j in 0..n {
            // d/dU_j in 1/eV: chain through U_joule = U_ev·e
            gradient[j] += -2.0 * r * grads[i][j] * constants.e;
        }
    }
    Ok(ObjectiveReport {
        value,
        gradient,
        per_point_residuals: residuals,
        transmissions: ts,
    })
}

/// Gradient alone (1/eV).
pub fn gradient_deterministic(
    u_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    Ok(cost_deterministic(u_ev, target, spec, constants)?.gradient)
}

/// Cost value alone; skips all derivative work.
pub fn cost_value(
    u_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    constants: &PhysicalConstants,
) -> Result<f64> {
    check_layout(u_ev, spec)?;
    let u_joule: Vec<f64> = u_ev.iter().map(|&u| u * constants.e).collect();
    let (ts, _) = device_response(&u_joule, target, spec, constants, false)?;
    Ok(ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let r = target.samples[i].1 - t;
            r * r
        })
        .sum())
}

/// Randomized cost J(U, ω) = J(U + z); identical to the cost evaluated at
/// the shifted potentials, bit for bit.
pub fn cost_random(
    u_ev: &[f64],
    z_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    constants: &PhysicalConstants,
) -> Result<f64> {
    if z_ev.len() != u_ev.len() {
        return Err(CoreError::InvalidSpec(format!(
            "{} perturbations for {} potentials",
            z_ev.len(),
            u_ev.len()
        )));
    }
    let shifted: Vec<f64> = u_ev.iter().zip(z_ev.iter()).map(|(&u, &z)| u + z).collect();
    cost_value(&shifted, target, spec, constants)
}

/// Quadrature policy for the uncertainty box.
#[derive(Debug, Clone, PartialEq)]
pub enum Quadrature {
    Fixed { level: usize },
    /// Level chosen by the reference scan at tolerance `epsilon` with
    /// reference level `level_max`, escalating the reference if needed.
    Adaptive { epsilon: f64, level_max: usize },
}

#[derive(Debug, Clone)]
pub struct RobustSpec {
    /// Box half-widths a_j in eV.
    pub half_widths: Vec<f64>,
    pub alpha: f64,
    pub quadrature: Quadrature,
}

impl RobustSpec {
    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.half_widths.len() != layers {
            return Err(CoreError::InvalidSpec(format!(
                "{} half-widths for {} layers",
                self.half_widths.len(),
                layers
            )));
        }
        if self.half_widths.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(CoreError::InvalidSpec("half-widths must be ≥ 0".into()));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(CoreError::InvalidSpec("alpha must be ≥ 0".into()));
        }
        match self.quadrature {
            Quadrature::Fixed { .. } => Ok(()),
            Quadrature::Adaptive { epsilon, level_max } => {
                if epsilon <= 0.0 {
                    return Err(CoreError::InvalidSpec("epsilon must be positive".into()));
                }
                if level_max == 0 {
                    return Err(CoreError::InvalidSpec("reference level must be ≥ 1".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobustReport {
    /// J_α = mean + α·variance.
    pub value: f64,
    /// ∇J_α in 1/eV.
    pub gradient: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    pub std_dev: f64,
    pub second_moment: f64,
    pub level: usize,
    pub node_count: usize,
}

/// Streams J(U+z) (and ∇J) over the sparse grid, caching layer blocks per
/// distinct perturbation value so each (layer, value, bias) block is built
/// once per chunk instead of once per node.
pub struct CollocationEvaluator<'a> {
    u_ev: Vec<f64>,
    target: &'a TargetResponse,
    spec: &'a DeviceSpec,
    constants: &'a PhysicalConstants,
    biases: Vec<BiasPoint>,
    rows: Vec<(C64, C64)>,
    cols: Vec<(C64, C64)>,
}

impl<'a> CollocationEvaluator<'a> {
    pub fn new(
        u_ev: &[f64],
        target: &'a TargetResponse,
        spec: &'a DeviceSpec,
        constants: &'a PhysicalConstants,
    ) -> Result<Self> {
        check_layout(u_ev, spec)?;
        let biases = target.bias_points();
        let mut rows = Vec::with_capacity(biases.len());
        let mut cols = Vec::with_capacity(biases.len());
        for (i, bias) in biases.iter().enumerate() {
            let (kin, kout) = lead_wavenumbers(spec, bias, constants)
                .map_err(|e| e.at(format!("bias point {} (V = {} V)", i + 1, bias.v_bias)))?;
            let (r, c) = lead_row_col(kin, kout, constants.hbar);
            rows.push(r);
            cols.push(c);
        }
        Ok(Self {
            u_ev: u_ev.to_vec(),
            target,
            spec,
            constants,
            biases,
            rows,
            cols,
        })
    }

    /// Blocks (and optionally derivatives) for every (dim, value, bias)
    /// triple of the chunk, built in parallel, flattened value-major.
    fn build_cache(
        &self,
        chunk: &Chunk,
        with_gradient: bool,
    ) -> Result<(Vec<Vec<Mat2>>, Vec<Vec<Mat2>>)> {
        let nb = self.biases.len();
        let mut cache = Vec::with_capacity(chunk.dim);
        let mut dcache = Vec::with_capacity(if with_gradient { chunk.dim } else { 0 });
        for d in 0..chunk.dim {
            let vals = &chunk.values[chunk.value_offsets[d]..chunk.value_offsets[d + 1]];
            let entries: Result<Vec<(Mat2, Option<Mat2>)>> = (0..vals.len() * nb)
                .into_par_iter()
                .map(|f| {
                    let (v, i) = (f / nb, f % nb);
                    let u_j = (self.u_ev[d] + vals[v]) * self.constants.e;
                    let r = layer_block_for(
                        self.spec,
                        &self.biases[i],
                        d,
                        u_j,
                        self.constants,
                        DESIGN_SLICES,
                        false,
                        with_gradient,
                    )
                    .map_err(|e| {
                        e.at(format!(
                            "layer {} at {} eV, bias point {}",
                            d + 1,
                            self.u_ev[d] + vals[v],
                            i + 1
                        ))
                    })?;
                    Ok((r.m, r.dm))
                })
                .collect();
            let entries = entries?;
            cache.push(entries.iter().map(|e| e.0).collect());
            if with_gradient {
                dcache.push(entries.into_iter().map(|e| e.1.unwrap()).collect());
            }
        }
        Ok((cache, dcache))
    }
}

impl ChunkEvaluator for CollocationEvaluator<'_> {
    fn eval(&self, chunk: &Chunk, out: &mut Vec<f64>) -> Result<()> {
        let (cache, _) = self.build_cache(chunk, false)?;
        let dim = chunk.dim;
        let nb = self.biases.len();
        // row chains per dim and bias; consecutive nodes share slow-dim
        // prefixes, so only dims from the first changed slot are redone
        let zero = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let mut chains = vec![zero; dim * nb];
        let mut prev = vec![u32::MAX; dim];
        for r in 0..chunk.count {
            let slots = &chunk.slots[r * dim..(r + 1) * dim];
            let first = (0..dim).find(|&d| slots[d] != prev[d]).unwrap_or(dim);
            for d in first..dim {
                for i in 0..nb {
                    let m = &cache[d][slots[d] as usize * nb + i];
                    let (a, b) = if d == 0 {
                        self.rows[i]
                    } else {
                        chains[(d - 1) * nb + i]
                    };
                    chains[d * nb + i] = (a * m.a + b * m.c, a * m.b + b * m.d);
                }
                prev[d] = slots[d];
            }
            let mut j = 0.0;
            for i in 0..nb {
                let (a, b) = chains[(dim - 1) * nb + i];
                let (cx, cy) = self.cols[i];
                let m11 = a * cx + b * cy;
                let t = 1.0 / m11.norm_sqr();
                if !t.is_finite() {
                    return Err(CoreError::NonFinite(format!(
                        "transmission at chunk node {}, bias point {}",
                        r,
                        i + 1
                    )));
                }
                let resid = self.target.samples[i].1 - t;
                j += resid * resid;
            }
            out.push(j);
        }
        Ok(())
    }

    fn eval_with_gradient(
        &self,
        chunk: &Chunk,
        values: &mut Vec<f64>,
        gradients: &mut Vec<f64>,
    ) -> Result<()> {
        let (cache, dcache) = self.build_cache(chunk, true)?;
        let dim = chunk.dim;
        let nb = self.biases.len();
        let mut blocks = vec![Mat2::identity(); dim];
        let mut dblocks = vec![Mat2::identity(); dim];
        for r in 0..chunk.count {
            let slots = &chunk.slots[r * dim..(r + 1) * dim];
            let mut j = 0.0;
            let mut grad = vec![0.0; dim];
            for i in 0..nb {
                for d in 0..dim {
                    blocks[d] = cache[d][slots[d] as usize * nb + i];
                    dblocks[d] = dcache[d][slots[d] as usize * nb + i];
                }
                let (cx0, cy0) = self.cols[i];
                let mut cols = vec![(cx0, cy0); dim + 1];
                for d in (0..dim).rev() {
                    let (x, y) = cols[d + 1];
                    let b = &blocks[d];
                    cols[d] = (b.a * x + b.b * y, b.c * x + b.d * y);
                }
                let (mut ra, mut rb) = self.rows[i];
                let m11_full = ra * cols[0].0 + rb * cols[0].1;
                let t = 1.0 / m11_full.norm_sqr();
                if !t.is_finite() {
                    return Err(CoreError::NonFinite(format!(
                        "transmission at chunk node {}, bias point {}",
                        r,
                        i + 1
                    )));
                }
                let resid = self.target.samples[i].1 - t;
                j += resid * resid;
                for d in 0..dim {
                    let (cx, cy) = cols[d + 1];
                    let b = &blocks[d];
                    let db = &dblocks[d];
                    let m11 = ra * (b.a * cx + b.b * cy) + rb * (b.c * cx + b.d * cy);
                    let dm11 = ra * (db.a * cx + db.b * cy) + rb * (db.c * cx + db.d * cy);
                    let dt = -2.0 * t * (dm11 / m11).re;
                    grad[d] += -2.0 * resid * dt * self.constants.e;
                    let (na, nb2) = (ra * b.a + rb * b.c, ra * b.b + rb * b.d);
                    ra = na;
                    rb = nb2;
                }
            }
            values.push(j);
            gradients.extend_from_slice(&grad);
        }
        Ok(())
    }
}

/// First and second moments of J(U+z) over the box at a fixed level.
pub fn robust_moments(
    u_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    half_widths: &[f64],
    level: usize,
    constants: &PhysicalConstants,
) -> Result<(f64, f64)> {
    let grid = SparseGridSpec::new(spec.layer_count(), level, half_widths.to_vec())?;
    let eval = CollocationEvaluator::new(u_ev, target, spec, constants)?;
    stream_moments(&grid, &eval)
}

/// Robust functional and gradient at a fixed quadrature level. Negative
/// variance from quadrature cancellation is clamped to zero; cancellation
/// beyond 1e−3 of the second moment is a numerics failure.
pub fn cost_robust(
    u_ev: &[f64],
    target: &TargetResponse,
    spec: &DeviceSpec,
    robust: &RobustSpec,
    level: usize,
    constants: &PhysicalConstants,
) -> Result<RobustReport> {
    robust.validate(spec.layer_count())?;
    let grid = SparseGridSpec::new(spec.layer_count(), level, robust.half_widths.clone())?;
    let eval = CollocationEvaluator::new(u_ev, target, spec, constants)?;
    let acc = stream_robust(&grid, &eval)?;
    let mean = acc.m1;
    let raw_var = acc.m2 - mean * mean;
    if raw_var < 0.0 && -raw_var > 1e-3 * acc.m2.abs() {
        return Err(CoreError::Solver(format!(
            "second-moment cancellation: m2 = {}, mean² = {}",
            acc.m2,
            mean * mean
        )));
    }
    let variance = raw_var.max(0.0);
    let value = mean + robust.alpha * variance;
    let gradient: Vec<f64> = (0..spec.layer_count())
        .map(|d| {
            acc.grad_mean[d]
                + robust.alpha * (2.0 * acc.grad_cross[d] - 2.0 * mean * acc.grad_mean[d])
        })
        .collect();
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(CoreError::NonFinite("robust objective".into()));
    }
    Ok(RobustReport {
        value,
        gradient,
        mean,
        variance,
        std_dev: variance.sqrt(),
        second_moment: acc.m2,
        level,
        node_count: acc.node_count,
    })
}
