//! Multi-layer device transmission and the solver registry.
//!
//! Every solver maps a (ψ, ψ′) state across the device with right-to-left
//! layer blocks and closes the chain with plane-wave leads:
//! (A_in, B_in)ᵀ = L · M_1 ⋯ M_N · R · (A_out, 0)ᵀ, T = pref/|M_11|².
//! The hybrid solver uses the closed WKB block wherever the layer has no
//! interior turning point and a positive validity margin, and falls back to
//! piecewise-constant slices elsewhere.

use crate::constants::PhysicalConstants;
use crate::device::{wavenumber, BiasPoint, Convention, DeviceSpec};
use crate::error::{CoreError, Result};
use crate::fd::transmission_fd;
use crate::mat2::{C64, Mat2, ScaledMat2};
use crate::pcpm::pcpm_layer_block;
use crate::wkb::{clamp_probability, wkb_layer_block, Method, TransmissionResult};

#[derive(Debug, Clone, Copy)]
pub struct DeviceOptions {
    pub convention: Convention,
    /// Slices per layer when the hybrid solver falls back.
    pub fallback_slices: usize,
    /// Slices per layer for the full piecewise-constant solver.
    pub pcpm_slices: usize,
    /// Grid nodes for the finite-difference solver.
    pub fd_points: usize,
}

impl Default for DeviceOptions {
    fn default() -> Self {
        Self {
            convention: Convention::FluxRatio,
            fallback_slices: 200,
            pcpm_slices: 1000,
            fd_points: 4000,
        }
    }
}

/// Per-layer chain blocks plus diagnostics. `dblocks[j]` is ∂M_j/∂U_j.
pub struct LayerBlocks {
    pub blocks: Vec<Mat2>,
    pub dblocks: Option<Vec<Mat2>>,
    /// Validity margin F_j, Joules; ≤ 0 forces the fallback.
    pub margins: Vec<f64>,
    /// Reference kinetic energy |E−V_j| entering F_j, Joules.
    pub refs: Vec<f64>,
    pub fell_back: Vec<bool>,
    pub kappa_in: f64,
    pub kappa_out: f64,
}

/// Lead wave numbers of the biased device; errors when either lead is
/// evanescent at energy E.
pub fn lead_wavenumbers(
    spec: &DeviceSpec,
    bias: &BiasPoint,
    constants: &PhysicalConstants,
) -> Result<(f64, f64)> {
    let m = constants.mass();
    let de_in = bias.e - spec.u_outer_left;
    if de_in <= 0.0 {
        return Err(CoreError::NoIncidentWave {
            e: bias.e,
            u0: spec.u_outer_left,
        });
    }
    let de_out = bias.e - spec.u_outer_right + constants.e * bias.v_bias;
    if de_out <= 0.0 {
        return Err(CoreError::EvanescentOutput {
            e_out: bias.e,
            u_right: spec.u_outer_right - constants.e * bias.v_bias,
        });
    }
    Ok((wavenumber(m, de_in)?.0, wavenumber(m, de_out)?.0))
}

pub struct LayerBlockResult {
    pub m: Mat2,
    pub dm: Option<Mat2>,
    pub margin: f64,
    pub de_ref: f64,
    pub fell_back: bool,
}

/// Block of layer `j` with its potential overridden to `u_j` (Joules).
/// WKB when the layer is regime-classified with positive margin, else
/// piecewise-constant slices; the derivative is taken through the branch
/// that was selected.
pub fn layer_block_for(
    spec: &DeviceSpec,
    bias: &BiasPoint,
    j: usize,
    u_j: f64,
    constants: &PhysicalConstants,
    slices: usize,
    force_fallback: bool,
    with_derivative: bool,
) -> Result<LayerBlockResult> {
    let m = constants.mass();
    let hbar = constants.hbar;
    let x0 = spec.boundaries[0];
    let slope = constants.e * bias.v_bias / spec.length();
    let xl = spec.boundaries[j];
    let xr = spec.boundaries[j + 1];
    let de_l = bias.e - u_j + slope * (xl - x0);
    let de_r = bias.e - u_j + slope * (xr - x0);
    let classified = (de_l > 0.0 && de_r > 0.0) || (de_l < 0.0 && de_r < 0.0);
    let (margin, de_ref) = if classified {
        let de_ref = if de_l > 0.0 { de_l } else { de_r.abs() };
        (de_ref - hbar * slope / (2.0 * m * de_ref).sqrt(), de_ref)
    } else {
        // interior turning point: no WKB reference energy exists
        let near = de_l.abs().min(de_r.abs());
        (-near, near)
    };
    if classified && margin > 0.0 && !force_fallback {
        let block = wkb_layer_block(de_l, de_r, slope, xr - xl, m, hbar, with_derivative)
            .map_err(|e| e.at(format!("layer {}", j + 1)))?;
        Ok(LayerBlockResult {
            m: block.m,
            dm: block.dm_du,
            margin,
            de_ref,
            fell_back: false,
        })
    } else {
        let (block, dblock) = pcpm_layer_block(de_l, de_r, xr - xl, slices, m, hbar, with_derivative)
            .map_err(|e| e.at(format!("layer {}", j + 1)))?;
        Ok(LayerBlockResult {
            m: block,
            dm: dblock,
            margin,
            de_ref,
            fell_back: true,
        })
    }
}

/// Builds the right-to-left block of every layer. WKB where admissible
/// unless `force_fallback`; piecewise-constant slices otherwise.
pub fn layer_blocks(
    spec: &DeviceSpec,
    bias: &BiasPoint,
    constants: &PhysicalConstants,
    slices: usize,
    force_fallback: bool,
    with_derivative: bool,
) -> Result<LayerBlocks> {
    let (kappa_in, kappa_out) = lead_wavenumbers(spec, bias, constants)?;
    let n = spec.layer_count();
    let mut blocks = Vec::with_capacity(n);
    let mut dblocks = with_derivative.then(|| Vec::with_capacity(n));
    let mut margins = Vec::with_capacity(n);
    let mut refs = Vec::with_capacity(n);
    let mut fell_back = Vec::with_capacity(n);
    for j in 0..n {
        let r = layer_block_for(
            spec,
            bias,
            j,
            spec.u[j],
            constants,
            slices,
            force_fallback,
            with_derivative,
        )?;
        blocks.push(r.m);
        if let Some(d) = dblocks.as_mut() {
            d.push(r.dm.unwrap());
        }
        margins.push(r.margin);
        refs.push(r.de_ref);
        fell_back.push(r.fell_back);
    }
    Ok(LayerBlocks {
        blocks,
        dblocks,
        margins,
        refs,
        fell_back,
        kappa_in,
        kappa_out,
    })
}

/// Lead row/column closing the chain: T = pref/|row·(∏M_j)·col|². The lead
/// phase factors e^{−ik·x} are unit modulus and dropped.
pub(crate) fn lead_row_col(kappa_in: f64, kappa_out: f64, hbar: f64) -> ((C64, C64), (C64, C64)) {
    let k_in = kappa_in / hbar;
    let k_out = kappa_out / hbar;
    (
        (C64::new(0.5, 0.0), C64::new(0.0, -0.5 / k_in)),
        (C64::new(1.0, 0.0), C64::new(0.0, k_out)),
    )
}

pub(crate) fn chain_t(
    blocks: &[Mat2],
    kappa_in: f64,
    kappa_out: f64,
    hbar: f64,
    convention: Convention,
) -> Result<f64> {
    let mut acc = ScaledMat2::identity();
    for b in blocks {
        acc = acc.mul(&ScaledMat2::from_mat(*b));
    }
    let ((r0, r1), (c0, c1)) = lead_row_col(kappa_in, kappa_out, hbar);
    let p = acc.m;
    let m11 = r0 * (p.a * c0 + p.b * c1) + r1 * (p.c * c0 + p.d * c1);
    if m11.norm() == 0.0 {
        return Err(CoreError::NonFinite("vanishing chain element".into()));
    }
    let pref = match convention {
        Convention::FluxRatio => kappa_out / kappa_in,
        Convention::AmplitudeOnly => 1.0,
    };
    let log_t = pref.ln() - 2.0 * (m11.norm().ln() + acc.log_scale);
    clamp_probability(log_t.exp())
}

fn chain_transmission(parts: &LayerBlocks, convention: Convention, hbar: f64) -> Result<f64> {
    chain_t(
        &parts.blocks,
        parts.kappa_in,
        parts.kappa_out,
        hbar,
        convention,
    )
}

/// Hybrid WKB transmission of the biased device.
pub fn transmission_device(
    spec: &DeviceSpec,
    bias: &BiasPoint,
    constants: &PhysicalConstants,
    options: &DeviceOptions,
) -> Result<TransmissionResult> {
    let parts = layer_blocks(spec, bias, constants, options.fallback_slices, false, false)?;
    let t = chain_transmission(&parts, options.convention, constants.hbar)?;
    let any_fallback = parts.fell_back.iter().any(|&f| f);
    Ok(TransmissionResult {
        t,
        method: if any_fallback {
            Method::PiecewiseConstantFallback
        } else {
            Method::MatrixWkb
        },
        validity_margin: parts.margins.iter().copied().fold(f64::INFINITY, f64::min),
        per_layer_valid: parts.margins.iter().map(|&f| f > 0.0).collect(),
    })
}

/// Full piecewise-constant transmission; the first exact reference.
pub fn transmission_pcpm(
    spec: &DeviceSpec,
    bias: &BiasPoint,
    constants: &PhysicalConstants,
    options: &DeviceOptions,
) -> Result<TransmissionResult> {
    let parts = layer_blocks(spec, bias, constants, options.pcpm_slices, true, false)?;
    let t = chain_transmission(&parts, options.convention, constants.hbar)?;
    Ok(TransmissionResult {
        t,
        method: Method::PiecewiseConstantFallback,
        validity_margin: parts.margins.iter().copied().fold(f64::INFINITY, f64::min),
        per_layer_valid: parts.margins.iter().map(|&f| f > 0.0).collect(),
    })
}

/// A transmission strategy selectable by name at run time.
pub trait TransmissionSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn transmission(
        &self,
        spec: &DeviceSpec,
        bias: &BiasPoint,
        constants: &PhysicalConstants,
        options: &DeviceOptions,
    ) -> Result<TransmissionResult>;
}

pub struct HybridWkbSolver;

impl TransmissionSolver for HybridWkbSolver {
    fn name(&self) -> &'static str {
        "hybrid-wkb"
    }

    fn transmission(
        &self,
        spec: &DeviceSpec,
        bias: &BiasPoint,
        constants: &PhysicalConstants,
        options: &DeviceOptions,
    ) -> Result<TransmissionResult> {
        transmission_device(spec, bias, constants, options)
    }
}

pub struct PcpmSolver;

impl TransmissionSolver for PcpmSolver {
    fn name(&self) -> &'static str {
        "pcpm"
    }

    fn transmission(
        &self,
        spec: &DeviceSpec,
        bias: &BiasPoint,
        constants: &PhysicalConstants,
        options: &DeviceOptions,
    ) -> Result<TransmissionResult> {
        transmission_pcpm(spec, bias, constants, options)
    }
}

pub struct FdSolver;

impl TransmissionSolver for FdSolver {
    fn name(&self) -> &'static str {
        "fd"
    }

    fn transmission(
        &self,
        spec: &DeviceSpec,
        bias: &BiasPoint,
        constants: &PhysicalConstants,
        options: &DeviceOptions,
    ) -> Result<TransmissionResult> {
        transmission_fd(spec, bias, options.fd_points, constants, options.convention)
    }
}

/// Name-indexed solver collection. Custom strategies can be registered
/// alongside the built-in three.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn TransmissionSolver>>,
}

impl SolverRegistry {
    pub fn with_defaults() -> Self {
        let mut r = Self {
            solvers: Vec::new(),
        };
        r.register(Box::new(HybridWkbSolver));
        r.register(Box::new(PcpmSolver));
        r.register(Box::new(FdSolver));
        r
    }

    /// Later registrations shadow earlier ones with the same name.
    pub fn register(&mut self, solver: Box<dyn TransmissionSolver>) {
        self.solvers.retain(|s| s.name() != solver.name());
        self.solvers.push(solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn TransmissionSolver> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|s| s.as_ref())
            .ok_or_else(|| {
                CoreError::InvalidSpec(format!(
                    "unknown solver '{name}'; available: {}",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wkb::transmission_single_matrix;

    const NM: f64 = 1e-9;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn single_layer_device_reduces_to_single_barrier() {
        let c = consts();
        for (e_ev, u_ev, vb) in [(0.7, 0.48, 0.1), (0.026, 0.7, 0.1), (0.3, 1.4, 0.05)] {
            let spec = DeviceSpec::new(
                vec![0.0, NM],
                vec![u_ev * c.e],
                0.0,
                0.0,
                (0.0, 2.0 * c.e),
            )
            .unwrap();
            let bias = BiasPoint {
                v_bias: vb,
                e: e_ev * c.e,
            };
            let dev = transmission_device(&spec, &bias, &c, &DeviceOptions::default()).unwrap();
            let single =
                transmission_single_matrix(e_ev * c.e, u_ev * c.e, vb, 0.0, NM, c.mass(), c.e, c.hbar)
                    .unwrap();
            assert!(
                rel(dev.t, single.t) < 1e-12,
                "E={e_ev} U={u_ev}: {} vs {}",
                dev.t,
                single.t
            );
        }
    }

    #[test]
    fn equal_layers_merge_to_one_rectangular_barrier() {
        // 4 × 1 nm at 0.7 eV, zero bias, E = 0.026 eV: analytic rectangular
        // value for the merged 4 nm barrier
        let c = consts();
        let spec = DeviceSpec::new(
            vec![0.0, NM, 2.0 * NM, 3.0 * NM, 4.0 * NM],
            vec![0.7 * c.e; 4],
            0.0,
            0.0,
            (0.7 * c.e, 1.7 * c.e),
        )
        .unwrap();
        let bias = BiasPoint {
            v_bias: 0.0,
            e: 0.026 * c.e,
        };
        let expect = 7.7907645515258237e-5;
        let dev = transmission_device(&spec, &bias, &c, &DeviceOptions::default()).unwrap();
        assert!(rel(dev.t, expect) < 1e-10, "wkb {} vs {expect}", dev.t);
        assert_eq!(dev.method, Method::MatrixWkb);
        let pc = transmission_pcpm(&spec, &bias, &c, &DeviceOptions::default()).unwrap();
        assert!(rel(pc.t, expect) < 1e-10, "pcpm {} vs {expect}", pc.t);
    }

    #[test]
    fn hybrid_is_continuous_through_a_turning_point() {
        // zero bias, sweep E through U of the second layer: flat-layer WKB
        // and the constant-slice fallback are both exact there
        let c = consts();
        let spec = DeviceSpec::new(
            vec![0.0, NM, 2.0 * NM],
            vec![0.3 * c.e, 0.48 * c.e],
            0.0,
            0.0,
            (0.0, 2.0 * c.e),
        )
        .unwrap();
        let opts = DeviceOptions::default();
        let t_at = |e_ev: f64| {
            transmission_device(
                &spec,
                &BiasPoint {
                    v_bias: 0.0,
                    e: e_ev * c.e,
                },
                &c,
                &opts,
            )
            .unwrap()
        };
        let below = t_at(0.48 * (1.0 - 1e-8));
        let at = t_at(0.48);
        let above = t_at(0.48 * (1.0 + 1e-8));
        assert_eq!(below.method, Method::MatrixWkb);
        assert_eq!(at.method, Method::PiecewiseConstantFallback);
        assert_eq!(above.method, Method::MatrixWkb);
        assert!(rel(below.t, at.t) < 1e-6, "{} vs {}", below.t, at.t);
        assert!(rel(above.t, at.t) < 1e-6, "{} vs {}", above.t, at.t);
    }

    #[test]
    fn fallback_is_continuous_across_layer_classification() {
        // V_bias = 0.25 V over 1 nm: margin is negative on both sides of the
        // de_right = 0 boundary, so the fallback handles both and T is smooth
        let c = consts();
        let opts = DeviceOptions::default();
        let t_at = |u_ev: f64| {
            let spec = DeviceSpec::new(
                vec![0.0, NM],
                vec![u_ev * c.e],
                0.0,
                0.0,
                (0.0, 2.0 * c.e),
            )
            .unwrap();
            transmission_device(
                &spec,
                &BiasPoint {
                    v_bias: 0.25,
                    e: 0.7 * c.e,
                },
                &c,
                &opts,
            )
            .unwrap()
        };
        let below = t_at(0.95 - 1e-9);
        let above = t_at(0.95 + 1e-9);
        assert_eq!(below.method, Method::PiecewiseConstantFallback);
        assert_eq!(above.method, Method::PiecewiseConstantFallback);
        assert!(rel(below.t, above.t) < 1e-8);
    }

    #[test]
    fn solvers_agree_on_a_biased_tunneling_device() {
        let c = consts();
        let spec = DeviceSpec::new(
            vec![0.0, NM, 2.0 * NM, 3.0 * NM, 4.0 * NM],
            vec![0.7 * c.e, 1.31 * c.e, 1.54 * c.e, 0.7 * c.e],
            0.0,
            0.0,
            (0.7 * c.e, 1.7 * c.e),
        )
        .unwrap();
        let bias = BiasPoint {
            v_bias: 0.1,
            e: 0.026 * c.e,
        };
        let reg = SolverRegistry::with_defaults();
        let opts = DeviceOptions::default();
        let wkb = reg.get("hybrid-wkb").unwrap().transmission(&spec, &bias, &c, &opts).unwrap();
        let pcpm = reg.get("pcpm").unwrap().transmission(&spec, &bias, &c, &opts).unwrap();
        let fd = reg.get("fd").unwrap().transmission(&spec, &bias, &c, &opts).unwrap();
        assert!(rel(pcpm.t, fd.t) < 1e-4, "pcpm {} vs fd {}", pcpm.t, fd.t);
        assert!(rel(wkb.t, fd.t) < 0.25, "wkb {} vs fd {}", wkb.t, fd.t);
    }

    #[test]
    fn convention_ratio_is_the_velocity_factor() {
        let c = consts();
        let spec = DeviceSpec::new(vec![0.0, NM], vec![0.7 * c.e], 0.0, 0.0, (0.0, 2.0 * c.e))
            .unwrap();
        let bias = BiasPoint {
            v_bias: 0.2,
            e: 0.026 * c.e,
        };
        let mut opts = DeviceOptions::default();
        let flux = transmission_device(&spec, &bias, &c, &opts).unwrap().t;
        opts.convention = Convention::AmplitudeOnly;
        let amp = transmission_device(&spec, &bias, &c, &opts).unwrap().t;
        let expect = ((0.026 + 0.2) / 0.026f64).sqrt();
        assert!(rel(flux / amp, expect) < 1e-12);
    }

    #[test]
    fn unknown_solver_names_available_ones() {
        let reg = SolverRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["hybrid-wkb", "pcpm", "fd"]);
        match reg.get("shooting") {
            Err(CoreError::InvalidSpec(msg)) => {
                assert!(msg.contains("hybrid-wkb"), "{msg}");
            }
            other => panic!("expected invalid-spec error, got {:?}", other.map(|s| s.name())),
        }
    }
}
