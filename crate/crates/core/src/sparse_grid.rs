//! Isotropic Smolyak sparse-grid quadrature on the box ∏[−a_j, a_j] with
//! the uniform density, built from nested Clenshaw-Curtis rules of sizes
//! R_1 = 1, R_i = 2^{i−1}+1.
//!
//! The combination form Q_ℓ = Σ_q (−1)^{ℓ−q} C(N−1, ℓ−q) Σ_{|i−1|=q} Q_i is
//! evaluated by streaming over disjoint blocks of "new" nodes, one block per
//! multi-index λ of canonical node levels. Each merged node appears in
//! exactly one block and carries the combined weight
//! Ω(x) = Σ_{i ⊇ λ(x)} c_i ∏_n W_{i_n}[pos_n(x)], so grids never have to be
//! materialized unless asked for. Node identity is the integer (level, k)
//! ancestry, never floating-point comparison.

use crate::error::{CoreError, Result};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Largest supported Smolyak level; 1D tables go one level higher. Beyond
/// this the weight tables alone outgrow desk memory.
pub const MAX_LEVEL: usize = 25;

/// Nodes per chunk handed to evaluators.
pub const CHUNK_CAP: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rule1d {
    #[default]
    ClenshawCurtisNested,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseGridSpec {
    pub dimension: usize,
    pub level: usize,
    pub rule: Rule1d,
    /// Box half-widths a_j; nodes are emitted in these physical units.
    pub half_widths: Vec<f64>,
}

impl SparseGridSpec {
    pub fn new(dimension: usize, level: usize, half_widths: Vec<f64>) -> Result<Self> {
        if dimension == 0 {
            return Err(CoreError::InvalidSpec("dimension must be at least 1".into()));
        }
        if half_widths.len() != dimension {
            return Err(CoreError::InvalidSpec(format!(
                "{} half-widths for dimension {}",
                half_widths.len(),
                dimension
            )));
        }
        if half_widths.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(CoreError::InvalidSpec("half-widths must be ≥ 0".into()));
        }
        if level > MAX_LEVEL {
            return Err(CoreError::InvalidSpec(format!(
                "level {level} exceeds the supported maximum {MAX_LEVEL}"
            )));
        }
        Ok(Self {
            dimension,
            level,
            rule: Rule1d::ClenshawCurtisNested,
            half_widths,
        })
    }

    /// Unit box of the same shape, used by tests on [−1,1]^N.
    pub fn unit(dimension: usize, level: usize) -> Result<Self> {
        Self::new(dimension, level, vec![1.0; dimension])
    }
}

pub fn rule_size(i: usize) -> usize {
    if i <= 1 {
        1
    } else {
        (1usize << (i - 1)) + 1
    }
}

/// Density-normalized Clenshaw-Curtis weights for n+1 points (n ≥ 2 even):
/// the classical weights halved so they integrate the uniform density on
/// [−1, 1] (Σ w = 1). Interior weights come from the cosine sum
/// w_k = (2/n)[1 − Σ_j 2cos(2jθ_k)/(4j²−1) − cos(nθ_k)/(n²−1)], evaluated
/// for all k at once by one FFT of the symmetric coefficient sequence.
fn cc_density_weights(n: usize) -> Vec<f64> {
    debug_assert!(n >= 2 && n.is_power_of_two());
    let mut beta = vec![Complex::new(0.0, 0.0); n];
    beta[0] = Complex::new(1.0, 0.0);
    for j in 1..n / 2 {
        let c = -1.0 / ((4 * j * j - 1) as f64);
        beta[j] = Complex::new(c, 0.0);
        beta[n - j] = Complex::new(c, 0.0);
    }
    beta[n / 2] = Complex::new(-1.0 / ((n * n - 1) as f64), 0.0);
    FftPlanner::new().plan_fft_forward(n).process(&mut beta);
    let mut w = vec![0.0; n + 1];
    let endpoint = 0.5 / ((n * n - 1) as f64);
    w[0] = endpoint;
    w[n] = endpoint;
    for k in 1..n {
        // density weight = classical/2 = Re(Σ β ω^{jk})/n
        w[k] = beta[k].re / n as f64;
    }
    w
}

/// 1D rule i: nodes cos(πk/(R−1)) in decreasing order and density weights.
pub fn nodes_1d(i: usize) -> (Vec<f64>, Vec<f64>) {
    if i <= 1 {
        return (vec![0.0], vec![1.0]);
    }
    let n = rule_size(i) - 1;
    let nodes = (0..=n)
        .map(|k| (std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect();
    (nodes, cc_density_weights(n))
}

/// Multi-indices i ≥ 1 with Σ(i_n − 1) ≤ level, lexicographic.
pub fn index_set(level: usize, dimension: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![1usize; dimension];
    fn rec(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, d: usize, budget: usize) {
        if d == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 1..=budget + 1 {
            cur[d] = v;
            rec(out, cur, d + 1, budget - (v - 1));
        }
    }
    rec(&mut out, &mut cur, 0, level);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Nodes first appearing at level v: (coordinate, index k within rule v).
fn new_nodes(v: usize) -> Vec<(f64, u32)> {
    match v {
        0 | 1 => vec![(0.0, 0)],
        2 => vec![(1.0, 0), (-1.0, 2)],
        _ => {
            let n = rule_size(v) - 1;
            (1..n)
                .step_by(2)
                .map(|k| ((std::f64::consts::PI * k as f64 / n as f64).cos(), k as u32))
                .collect()
        }
    }
}

fn new_node_count(v: usize) -> usize {
    match v {
        0 | 1 => 1,
        2 => 2,
        _ => 1usize << (v - 2),
    }
}

/// Position of a canonical node (lvl, k) inside rule i ≥ lvl.
#[inline]
fn position_in_rule(lvl: usize, k: u32, i: usize) -> usize {
    if lvl <= 1 {
        (rule_size(i) - 1) / 2
    } else {
        (k as usize) << (i - lvl)
    }
}

/// One batch of merged nodes with combined weights.
pub struct Chunk<'a> {
    pub dim: usize,
    pub count: usize,
    /// Node coordinates, count × dim, box units.
    pub coords: &'a [f64],
    /// Signed combined quadrature weights, density-normalized.
    pub weights: &'a [f64],
    /// Per node and dim, index into this chunk's distinct-value list.
    pub slots: &'a [u32],
    /// Distinct coordinate values per dim: values[value_offsets[d]..value_offsets[d+1]].
    pub values: &'a [f64],
    pub value_offsets: &'a [usize],
}

/// Batch evaluator of the integrand over a chunk of nodes. Evaluations at
/// distinct nodes must not share mutable state; the caller reduces results
/// in node order, so runs are reproducible at any worker count.
pub trait ChunkEvaluator: Sync {
    /// Appends one value per node to `out`.
    fn eval(&self, chunk: &Chunk, out: &mut Vec<f64>) -> Result<()>;

    /// Appends values and gradients (count × dim, node-major).
    fn eval_with_gradient(
        &self,
        chunk: &Chunk,
        values: &mut Vec<f64>,
        gradients: &mut Vec<f64>,
    ) -> Result<()> {
        let _ = (chunk, values, gradients);
        Err(CoreError::InvalidSpec(
            "evaluator does not provide gradients".into(),
        ))
    }
}

/// Plain-function adaptor evaluating nodes independently in parallel.
pub struct FnEvaluator<F>(pub F);

impl<F: Fn(&[f64]) -> Result<f64> + Sync> ChunkEvaluator for FnEvaluator<F> {
    fn eval(&self, chunk: &Chunk, out: &mut Vec<f64>) -> Result<()> {
        let dim = chunk.dim;
        let results: Result<Vec<f64>> = chunk
            .coords
            .par_chunks(dim)
            .enumerate()
            .map(|(r, z)| {
                (self.0)(z).map_err(|e| e.at(format!("node {r} of chunk at {z:?}")))
            })
            .collect();
        out.extend(results?);
        Ok(())
    }
}

/// Weight tables W[i] for 1D rules up to `max_rule` inclusive.
struct Tables {
    weights: Vec<Vec<f64>>,
    news: Vec<Vec<(f64, u32)>>,
}

impl Tables {
    fn build(max_rule: usize) -> Self {
        let mut weights = vec![Vec::new()];
        let mut news = vec![Vec::new()];
        for i in 1..=max_rule {
            weights.push(nodes_1d(i).1);
            news.push(new_nodes(i));
        }
        Self { weights, news }
    }
}

/// Grids of the combination at `level` in `dim` dimensions: coefficient and
/// the admissible |i−1| band.
fn active_band(level: usize, dim: usize) -> (usize, usize) {
    let lo = level.saturating_sub(dim - 1);
    (lo, level)
}

/// Active multi-indices i ≥ λ with |i−1| in the band, with coefficients;
/// flattened dim-major.
fn active_grids(lambda: &[usize], level: usize, dim: usize) -> (Vec<f64>, Vec<usize>) {
    let (lo, hi) = active_band(level, dim);
    let base: usize = lambda.iter().map(|&v| v - 1).sum();
    let mut coeffs = Vec::new();
    let mut levels = Vec::new();
    let mut cur = lambda.to_vec();
    fn rec(
        coeffs: &mut Vec<f64>,
        levels: &mut Vec<usize>,
        cur: &mut Vec<usize>,
        lambda: &[usize],
        d: usize,
        total: usize,
        lo: usize,
        hi: usize,
        level: usize,
        dim: usize,
    ) {
        if d == cur.len() {
            if total >= lo {
                coeffs.push(
                    if (level - total) % 2 == 0 { 1.0 } else { -1.0 }
                        * binomial(dim - 1, level - total),
                );
                levels.extend_from_slice(cur);
            }
            return;
        }
        for v in lambda[d]..=lambda[d] + (hi - total) {
            cur[d] = v;
            rec(coeffs, levels, cur, lambda, d + 1, total + (v - lambda[d]), lo, hi, level, dim);
        }
    }
    rec(
        &mut coeffs, &mut levels, &mut cur, lambda, 0, base, lo, hi, level, dim,
    );
    (coeffs, levels)
}

/// Streams every merged node of the level-`level` grid exactly once, in a
/// fixed deterministic order, as chunks of at most CHUNK_CAP nodes.
fn for_each_chunk(
    spec: &SparseGridSpec,
    mut consume: impl FnMut(&Chunk) -> Result<()>,
) -> Result<()> {
    let dim = spec.dimension;
    let level = spec.level;
    let tables = Tables::build(level + 1);
    let blocks = index_set(level, dim);

    let mut coords = Vec::with_capacity(CHUNK_CAP * dim);
    let mut weights = Vec::with_capacity(CHUNK_CAP);
    let mut slots = Vec::with_capacity(CHUNK_CAP * dim);
    let mut values = Vec::new();
    let mut value_offsets = vec![0usize; dim + 1];

    for lambda in &blocks {
        let lens: Vec<usize> = lambda.iter().map(|&v| new_node_count(v)).collect();
        let total: usize = lens.iter().product();
        let mut strides = vec![1usize; dim];
        for d in (0..dim.saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * lens[d + 1];
        }
        let (coeffs, grid_levels) = active_grids(lambda, level, dim);

        let mut start = 0usize;
        while start < total {
            let count = CHUNK_CAP.min(total - start);
            let last = start + count - 1;

            // per-dim touched digit range; a wrapped range falls back to full
            let mut lo = vec![0usize; dim];
            let mut hi = vec![0usize; dim];
            for d in 0..dim {
                let period = strides[d] * lens[d];
                if d == 0 || start / period == last / period {
                    lo[d] = (start / strides[d]) % lens[d];
                    hi[d] = (last / strides[d]) % lens[d];
                } else {
                    lo[d] = 0;
                    hi[d] = lens[d] - 1;
                }
            }

            values.clear();
            for d in 0..dim {
                value_offsets[d] = values.len();
                for t in lo[d]..=hi[d] {
                    values.push(tables.news[lambda[d]][t].0 * spec.half_widths[d]);
                }
            }
            value_offsets[dim] = values.len();

            coords.clear();
            weights.clear();
            slots.clear();
            let mut digits: Vec<usize> = (0..dim)
                .map(|d| (start / strides[d]) % lens[d])
                .collect();
            let mut ks = vec![0u32; dim];
            for _ in 0..count {
                for d in 0..dim {
                    let (coord, k) = tables.news[lambda[d]][digits[d]];
                    coords.push(coord * spec.half_widths[d]);
                    slots.push((digits[d] - lo[d]) as u32);
                    ks[d] = k;
                }
                // combined weight: sum over active grids of coeff × ∏ W
                let mut omega = 0.0;
                for (gi, &c) in coeffs.iter().enumerate() {
                    let mut w = c;
                    for d in 0..dim {
                        let i_d = grid_levels[gi * dim + d];
                        w *= tables.weights[i_d][position_in_rule(lambda[d], ks[d], i_d)];
                    }
                    omega += w;
                }
                weights.push(omega);
                // increment mixed-radix counter (dim−1 fastest)
                for d in (0..dim).rev() {
                    digits[d] += 1;
                    if digits[d] < lens[d] {
                        break;
                    }
                    digits[d] = 0;
                }
            }

            consume(&Chunk {
                dim,
                count,
                coords: &coords,
                weights: &weights,
                slots: &slots,
                values: &values,
                value_offsets: &value_offsets,
            })?;
            start += count;
        }
    }
    Ok(())
}

/// First and second moment of the integrand, Σ w F and Σ w F², streamed.
pub fn stream_moments<E: ChunkEvaluator>(spec: &SparseGridSpec, eval: &E) -> Result<(f64, f64)> {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    let mut buf = Vec::with_capacity(CHUNK_CAP);
    for_each_chunk(spec, |chunk| {
        buf.clear();
        eval.eval(chunk, &mut buf)?;
        for (&w, &f) in chunk.weights.iter().zip(buf.iter()) {
            m1 += w * f;
            m2 += w * f * f;
        }
        Ok(())
    })?;
    Ok((m1, m2))
}

/// Moment and gradient accumulators for the robust functional:
/// m1 = Σ wJ, m2 = Σ wJ², grad_mean = Σ w∇J, grad_cross = Σ wJ∇J.
pub struct RobustAccumulators {
    pub m1: f64,
    pub m2: f64,
    pub grad_mean: Vec<f64>,
    pub grad_cross: Vec<f64>,
    pub node_count: usize,
}

pub fn stream_robust<E: ChunkEvaluator>(
    spec: &SparseGridSpec,
    eval: &E,
) -> Result<RobustAccumulators> {
    let dim = spec.dimension;
    let mut acc = RobustAccumulators {
        m1: 0.0,
        m2: 0.0,
        grad_mean: vec![0.0; dim],
        grad_cross: vec![0.0; dim],
        node_count: 0,
    };
    let mut vals = Vec::with_capacity(CHUNK_CAP);
    let mut grads = Vec::with_capacity(CHUNK_CAP * dim);
    for_each_chunk(spec, |chunk| {
        vals.clear();
        grads.clear();
        eval.eval_with_gradient(chunk, &mut vals, &mut grads)?;
        for r in 0..chunk.count {
            let w = chunk.weights[r];
            let j = vals[r];
            acc.m1 += w * j;
            acc.m2 += w * j * j;
            for d in 0..dim {
                let g = grads[r * dim + d];
                acc.grad_mean[d] += w * g;
                acc.grad_cross[d] += w * j * g;
            }
        }
        acc.node_count += chunk.count;
        Ok(())
    })?;
    Ok(acc)
}

/// Materialized sparse grid: merged nodes (box units) and combined weights.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub dimension: usize,
    pub level: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    pub fn node(&self, r: usize) -> &[f64] {
        &self.nodes[r * self.dimension..(r + 1) * self.dimension]
    }
}

pub fn build_grid(spec: &SparseGridSpec) -> Result<QuadratureGrid> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for_each_chunk(spec, |chunk| {
        nodes.extend_from_slice(chunk.coords);
        weights.extend_from_slice(chunk.weights);
        Ok(())
    })?;
    Ok(QuadratureGrid {
        dimension: spec.dimension,
        level: spec.level,
        nodes,
        weights,
    })
}

/// Σ_r w_r F(node_r) with deterministic summation order; node evaluations
/// run in parallel without shared mutable state.
pub fn integrate<F: Fn(&[f64]) -> Result<f64> + Sync>(grid: &QuadratureGrid, f: F) -> Result<f64> {
    let dim = grid.dimension;
    let values: Result<Vec<f64>> = grid
        .nodes
        .par_chunks(dim)
        .enumerate()
        .map(|(r, z)| f(z).map_err(|e| e.at(format!("node {r} at {z:?}"))))
        .collect();
    let values = values?;
    Ok(grid
        .weights
        .iter()
        .zip(values.iter())
        .map(|(&w, &v)| w * v)
        .sum())
}

#[derive(Debug, Clone)]
pub struct AdaptiveReport {
    pub level_opt: usize,
    pub reference_level: usize,
    /// (ℓ, relative mean deviation, relative second-moment deviation).
    pub errors_by_level: Vec<(usize, f64, f64)>,
    pub converged: bool,
    /// Moments at level_opt (at the reference level when unconverged).
    pub mean: f64,
    pub second_moment: f64,
}

/// Level scan against enriched references at `level_max`: the first ℓ with
/// max(|m1̄−m1|/m1̄, |m2̄−m2|/m2̄) ≤ ε wins. Unconverged by ℓ̄−1 reports
/// converged = false so the caller can escalate the reference.
pub fn adaptive_moments<E: ChunkEvaluator>(
    half_widths: &[f64],
    epsilon: f64,
    level_max: usize,
    eval: &E,
) -> Result<AdaptiveReport> {
    if epsilon <= 0.0 {
        return Err(CoreError::InvalidSpec("epsilon must be positive".into()));
    }
    if level_max == 0 {
        return Err(CoreError::InvalidSpec("reference level must be ≥ 1".into()));
    }
    let dim = half_widths.len();
    let ref_spec = SparseGridSpec::new(dim, level_max, half_widths.to_vec())?;
    let (m1_ref, m2_ref) = stream_moments(&ref_spec, eval)?;
    if m1_ref <= 0.0 || m2_ref <= 0.0 {
        return Err(CoreError::ReferenceDegenerate {
            m1: m1_ref,
            m2: m2_ref,
        });
    }
    let mut errors_by_level = Vec::new();
    for level in 1..level_max {
        let spec = SparseGridSpec::new(dim, level, half_widths.to_vec())?;
        let (m1, m2) = stream_moments(&spec, eval)?;
        let e1 = (m1_ref - m1).abs() / m1_ref;
        let e2 = (m2_ref - m2).abs() / m2_ref;
        errors_by_level.push((level, e1, e2));
        if e1.max(e2) <= epsilon {
            return Ok(AdaptiveReport {
                level_opt: level,
                reference_level: level_max,
                errors_by_level,
                converged: true,
                mean: m1,
                second_moment: m2,
            });
        }
    }
    Ok(AdaptiveReport {
        level_opt: level_max,
        reference_level: level_max,
        errors_by_level,
        converged: false,
        mean: m1_ref,
        second_moment: m2_ref,
    })
}
