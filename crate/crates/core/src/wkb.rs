//! WKB transmission of a single linear-ramp barrier and the transfer-matrix
//! building blocks for multi-layer chains.
//!
//! In a barrier region the potential is V(x) = U − e·V_bias·(x−x1)/(x2−x1)
//! and the WKB solutions are κ^{−1/2}·exp(±(i/ħ)∫κ dx) (oscillatory) or
//! κ̄^{−1/2}·exp(±(1/ħ)∫κ̄ dx) (evanescent), with κ = √(2m(E−V)) and
//! κ̄ = √(2m(V−E)) in momentum units. Interface matrices map plane-wave or
//! WKB amplitude pairs to the (ψ, ψ′) state vector, which is continuous
//! across layer boundaries. The closed forms below were pinned against the
//! full matrix product symbolically and at 50-digit precision.

use crate::error::{CoreError, Result};
use crate::mat2::{C64, Mat2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    OverBarrier,
    UnderBarrier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseIntegral {
    /// Action ∫κ dx across the barrier, J·s. Divide by ħ for the phase.
    pub value: f64,
    pub regime: Regime,
}

/// Ramp force constant C = m·e·V_bias/(x2−x1), kg·J/m.
///
/// With it, dκ/dx = C/κ over the barrier and dκ̄/dx = −C/κ̄ under it.
pub fn ramp_constant_c(m: f64, e: f64, v_bias: f64, x1: f64, x2: f64) -> f64 {
    m * e * v_bias / (x2 - x1)
}

/// Relative kinetic-energy drop below which the bracket form of the phase
/// integral suffers catastrophic cancellation and the flat-barrier series
/// branch takes over.
const ZERO_BIAS_SWITCH: f64 = 1e-6;

/// ∫√(2m·k(x)) dx for k(x) linear from `de_left` to `de_right` over `width`.
/// Both endpoint kinetic energies must be positive; the caller picks the
/// regime by feeding E−V or V−E.
fn phase_action(de_left: f64, de_right: f64, width: f64, m: f64) -> f64 {
    let drop = de_right - de_left;
    if drop.abs() <= ZERO_BIAS_SWITCH * de_left.abs() {
        // flat-barrier limit; midpoint value keeps the switch continuous
        let mid = 0.5 * (de_left + de_right);
        return width * (2.0 * m * mid).sqrt();
    }
    2.0 * (2.0 * m).sqrt() * width / (3.0 * drop) * (de_right.powf(1.5) - de_left.powf(1.5))
}

/// d(phase_action)/dU where both endpoint kinetic energies shift by
/// `sign` per unit U (−1 over the barrier, +1 under it).
fn dphase_action_du(de_left: f64, de_right: f64, width: f64, m: f64, sign: f64) -> f64 {
    let drop = de_right - de_left;
    if drop.abs() <= ZERO_BIAS_SWITCH * de_left.abs() {
        let mid = 0.5 * (de_left + de_right);
        return sign * width * m / (2.0 * m * mid).sqrt();
    }
    sign * (2.0 * m).sqrt() * width / drop * (de_right.sqrt() - de_left.sqrt())
}

/// Phase action I over an E>V barrier: requires E−U > 0 and E−U+eV_bias > 0.
pub fn phase_integral_over(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
) -> Result<PhaseIntegral> {
    let de_left = e_energy - u;
    let de_right = de_left + e_charge * v_bias;
    if de_left <= 0.0 || de_right <= 0.0 {
        return Err(CoreError::Regime(format!(
            "over-barrier phase integral needs E−V > 0 at both ends, got {de_left:.3e}, {de_right:.3e} J"
        )));
    }
    Ok(PhaseIntegral {
        value: phase_action(de_left, de_right, x2 - x1, m),
        regime: Regime::OverBarrier,
    })
}

/// Decay action Ī under an E<V barrier: requires U−E > 0 and U−E−eV_bias > 0.
pub fn phase_integral_under(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
) -> Result<PhaseIntegral> {
    let de_left = u - e_energy;
    let de_right = de_left - e_charge * v_bias;
    if de_left <= 0.0 || de_right <= 0.0 {
        return Err(CoreError::Regime(format!(
            "under-barrier phase integral needs V−E > 0 at both ends, got {de_left:.3e}, {de_right:.3e} J"
        )));
    }
    Ok(PhaseIntegral {
        // endpoints swap so the bracket is (U−E)^{3/2} − (U−E−eVb)^{3/2} > 0
        value: phase_action(de_right, de_left, x2 - x1, m),
        regime: Regime::UnderBarrier,
    })
}

/// Plane-wave amplitude-to-state matrix K(κ) = [[1, 1], [iκ/ħ, −iκ/ħ]].
pub fn k_plane(kappa: f64, hbar: f64) -> Mat2 {
    let ik = C64::new(0.0, kappa / hbar);
    Mat2::new(C64::new(1.0, 0.0), C64::new(1.0, 0.0), ik, -ik)
}

/// Plane-wave phase matrix E(κ, x) = diag(e^{iκx/ħ}, e^{−iκx/ħ}).
pub fn e_plane(kappa: f64, x: f64, hbar: f64) -> Mat2 {
    let p = C64::new(0.0, kappa * x / hbar).exp();
    Mat2::new(p, C64::new(0.0, 0.0), C64::new(0.0, 0.0), 1.0 / p)
}

/// WKB amplitude-to-state matrix 𝒦. The −C/(2κ²) terms come from
/// differentiating the κ^{−1/2} prefactor.
pub fn kcal(kappa: f64, c: f64, hbar: f64, regime: Regime) -> Mat2 {
    let one = C64::new(1.0, 0.0);
    match regime {
        Regime::OverBarrier => {
            let re = -c / (2.0 * kappa * kappa);
            let im = kappa / hbar;
            Mat2::new(one, one, C64::new(re, im), C64::new(re, -im))
        }
        Regime::UnderBarrier => {
            let re = c / (2.0 * kappa * kappa);
            let d = kappa / hbar;
            Mat2::new(
                one,
                one,
                C64::new(re + d, 0.0),
                C64::new(re - d, 0.0),
            )
        }
    }
}

/// WKB phase matrix ℰ = diag(e^{iφ}, e^{−iφ})/√κ (oscillatory) or
/// diag(e^{φ}, e^{−φ})/√κ̄ (evanescent); φ is the accumulated phase from the
/// barrier entry, dimensionless.
pub fn ecal(kappa: f64, phase: f64, regime: Regime) -> Mat2 {
    let rs = 1.0 / kappa.sqrt();
    let zero = C64::new(0.0, 0.0);
    match regime {
        Regime::OverBarrier => {
            let p = C64::new(0.0, phase).exp() * rs;
            let q = C64::new(0.0, -phase).exp() * rs;
            Mat2::new(p, zero, zero, q)
        }
        Regime::UnderBarrier => Mat2::new(
            C64::new(phase.exp() * rs, 0.0),
            zero,
            zero,
            C64::new((-phase).exp() * rs, 0.0),
        ),
    }
}

/// The two matrix pairs that meet at a plane-wave/WKB interface at x:
/// (K(κ_plane)·E(κ_plane, x), 𝒦(κ_wkb)·ℰ(κ_wkb, phase)).
pub fn interface_matrices(
    kappa_plane: f64,
    kappa_wkb: f64,
    c: f64,
    x: f64,
    phase: f64,
    regime: Regime,
    hbar: f64,
) -> Result<(Mat2, Mat2)> {
    if kappa_plane == 0.0 {
        return Err(CoreError::TurningPoint(0.0));
    }
    if kappa_wkb == 0.0 {
        return Err(CoreError::TurningPoint(0.0));
    }
    let plane = k_plane(kappa_plane, hbar).mul(&e_plane(kappa_plane, x, hbar));
    let wkb = kcal(kappa_wkb, c, hbar, regime).mul(&ecal(kappa_wkb, phase, regime));
    Ok((plane, wkb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedFormOver,
    ClosedFormUnder,
    MatrixWkb,
    PiecewiseConstantFallback,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionResult {
    /// Transmission probability in [0, 1].
    pub t: f64,
    pub method: Method,
    /// Minimum WKB validity margin F over the barrier layers, Joules.
    pub validity_margin: f64,
    pub per_layer_valid: Vec<bool>,
}

/// Values in (1, 1+1e−9] are rounding of a unitary bound; larger means a bug.
pub fn clamp_probability(t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(CoreError::NonFinite(format!("transmission = {t}")));
    }
    if t < 0.0 {
        return Err(CoreError::Solver(format!("negative transmission {t:.3e}")));
    }
    if t > 1.0 {
        if t <= 1.0 + 1e-9 {
            return Ok(1.0);
        }
        return Err(CoreError::Solver(format!("transmission {t} exceeds 1")));
    }
    Ok(t)
}

struct SingleBarrier {
    k1: f64,
    k3: f64,
    c: f64,
    width: f64,
    de_left: f64,
    de_right: f64,
}

/// Common setup for the single-barrier forms: plane waves at potential 0 on
/// the left and −eV_bias on the right of the barrier [x1, x2].
fn single_setup(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
    hbar: f64,
) -> Result<(SingleBarrier, Regime)> {
    let _ = hbar;
    if x2 <= x1 {
        return Err(CoreError::InvalidSpec("barrier needs x2 > x1".into()));
    }
    if e_energy <= 0.0 {
        return Err(CoreError::NoIncidentWave { e: e_energy, u0: 0.0 });
    }
    let de_left = e_energy - u;
    let de_right = de_left + e_charge * v_bias;
    let regime = if de_left > 0.0 && de_right > 0.0 {
        Regime::OverBarrier
    } else if de_left < 0.0 && de_right < 0.0 {
        Regime::UnderBarrier
    } else {
        return Err(CoreError::Regime(format!(
            "interior turning point: E−V = {de_left:.3e} J at x1, {de_right:.3e} J at x2"
        )));
    };
    let sb = SingleBarrier {
        k1: (2.0 * m * e_energy).sqrt(),
        k3: (2.0 * m * (e_energy + e_charge * v_bias)).sqrt(),
        c: ramp_constant_c(m, e_charge, v_bias, x1, x2),
        width: x2 - x1,
        de_left,
        de_right,
    };
    Ok((sb, regime))
}

/// Closed-form WKB transmission of one linear-ramp barrier, flux convention
/// T = (κ3/κ1)·(κ2(x1)/κ2(x2))·[A² + B²]⁻¹.
pub fn transmission_single_closed(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
    hbar: f64,
) -> Result<TransmissionResult> {
    let (sb, regime) = single_setup(e_energy, u, v_bias, x1, x2, m, e_charge, hbar)?;
    let SingleBarrier {
        k1,
        k3,
        c,
        width,
        de_left,
        de_right,
    } = sb;
    let (t, method) = match regime {
        Regime::OverBarrier => {
            let ka = (2.0 * m * de_left).sqrt();
            let kb = (2.0 * m * de_right).sqrt();
            let i = phase_action(de_left, de_right, width, m) / hbar;
            let (si, ci) = i.sin_cos();
            let a = hbar * c * ci / (4.0 * k1 * ka * ka)
                - hbar * ka * c * ci / (4.0 * k1 * kb.powi(3))
                - ka * si / (2.0 * k1)
                - hbar * hbar * c * c * si / (8.0 * k1 * ka * ka * kb.powi(3))
                - k3 * si / (2.0 * kb);
            let b = ci / 2.0 + k3 * ka * ci / (2.0 * k1 * kb)
                - hbar * c * si / (4.0 * kb.powi(3))
                + hbar * c * k3 * si / (4.0 * k1 * ka * ka * kb);
            (
                (k3 / k1) * (ka / kb) / (a * a + b * b),
                Method::ClosedFormOver,
            )
        }
        Regime::UnderBarrier => {
            let ka = (-2.0 * m * de_left).sqrt();
            let kb = (-2.0 * m * de_right).sqrt();
            let i = phase_action(-de_right, -de_left, width, m) / hbar;
            let (sh, ch) = (i.sinh(), i.cosh());
            let a = ka * sh / (2.0 * k1) - hbar * c * ch / (4.0 * k1 * ka * ka)
                + hbar * c * ka * ch / (4.0 * k1 * kb.powi(3))
                - hbar * hbar * c * c * sh / (8.0 * k1 * ka * ka * kb.powi(3))
                - k3 * sh / (2.0 * kb);
            let b = ch / 2.0 + ka * k3 * ch / (2.0 * k1 * kb)
                + hbar * c * sh / (4.0 * kb.powi(3))
                - hbar * c * k3 * sh / (4.0 * k1 * ka * ka * kb);
            (
                (k3 / k1) * (ka / kb) / (a * a + b * b),
                Method::ClosedFormUnder,
            )
        }
    };
    let f = validity_margin_inner(de_left, de_right, e_charge * v_bias / width, m, hbar)?;
    Ok(TransmissionResult {
        t: clamp_probability(t)?,
        method,
        validity_margin: f,
        per_layer_valid: vec![f > 0.0],
    })
}

/// Same barrier through the eight-matrix product
/// E⁻¹(κ1,x1) K⁻¹(κ1) 𝒦(κ2,x1) ℰ(κ2,x1) ℰ⁻¹(κ2,x2) 𝒦⁻¹(κ2,x2) K(κ3) E(κ3,x2),
/// T = (κ3/κ1)·|1/M11|².
pub fn transmission_single_matrix(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
    hbar: f64,
) -> Result<TransmissionResult> {
    let (sb, regime) = single_setup(e_energy, u, v_bias, x1, x2, m, e_charge, hbar)?;
    let SingleBarrier {
        k1,
        k3,
        c,
        width,
        de_left,
        de_right,
    } = sb;
    let (ka, kb, phase_end) = match regime {
        Regime::OverBarrier => {
            let ka = (2.0 * m * de_left).sqrt();
            let kb = (2.0 * m * de_right).sqrt();
            (ka, kb, phase_action(de_left, de_right, width, m) / hbar)
        }
        Regime::UnderBarrier => {
            let ka = (-2.0 * m * de_left).sqrt();
            let kb = (-2.0 * m * de_right).sqrt();
            (ka, kb, phase_action(-de_right, -de_left, width, m) / hbar)
        }
    };
    let m_total = e_plane(k1, x1, hbar)
        .inv()
        .mul(&k_plane(k1, hbar).inv())
        .mul(&kcal(ka, c, hbar, regime))
        .mul(&ecal(ka, 0.0, regime))
        .mul(&ecal(kb, phase_end, regime).inv())
        .mul(&kcal(kb, c, hbar, regime).inv())
        .mul(&k_plane(k3, hbar))
        .mul(&e_plane(k3, x2, hbar));
    let t = (k3 / k1) / m_total.a.norm_sqr();
    let f = validity_margin_inner(de_left, de_right, e_charge * v_bias / width, m, hbar)?;
    Ok(TransmissionResult {
        t: clamp_probability(t)?,
        method: Method::MatrixWkb,
        validity_margin: f,
        per_layer_valid: vec![f > 0.0],
    })
}

/// F margin for a linear ramp with endpoint kinetic energies de_left/de_right
/// and potential slope (J/m). Over a barrier the margin is tightest at the
/// entry (smallest κ), under it at the exit (smallest κ̄).
fn validity_margin_inner(
    de_left: f64,
    de_right: f64,
    slope: f64,
    m: f64,
    hbar: f64,
) -> Result<f64> {
    let de_ref = if de_left > 0.0 && de_right > 0.0 {
        de_left
    } else {
        de_right.abs()
    };
    if de_ref == 0.0 {
        return Err(CoreError::TurningPoint(de_ref));
    }
    Ok(de_ref - hbar * slope.abs() / (2.0 * m * de_ref).sqrt())
}

/// WKB validity of a single barrier per the F functions: over a barrier
/// F = |E−U| − eħV_bias/((x2−x1)·√(2m|E−U|)); under it the reference margin
/// is |E−U+eV_bias| at the exit.
pub fn wkb_validity(
    e_energy: f64,
    u: f64,
    v_bias: f64,
    x1: f64,
    x2: f64,
    m: f64,
    e_charge: f64,
    hbar: f64,
) -> Result<(f64, bool)> {
    let de_left = e_energy - u;
    let de_right = de_left + e_charge * v_bias;
    let slope = e_charge * v_bias / (x2 - x1);
    let de_ref = if de_left > 0.0 { de_left } else { de_right.abs() };
    if de_ref == 0.0 {
        return Err(CoreError::TurningPoint(de_ref));
    }
    let f = de_ref - hbar * slope.abs() / (2.0 * m * de_ref).sqrt();
    Ok((f, f > 0.0))
}

/// One WKB layer block M_j = W(x_left)·W(x_right)⁻¹ in (ψ, ψ′) space, with
/// W = 𝒦ℰ, plus its ∂/∂U_j when requested. The layer sees endpoint kinetic
/// energies de_left/de_right (signs equal) and ramp slope `slope` (J/m).
pub struct WkbLayerBlock {
    pub m: Mat2,
    pub dm_du: Option<Mat2>,
    pub regime: Regime,
}

pub fn wkb_layer_block(
    de_left: f64,
    de_right: f64,
    slope: f64,
    width: f64,
    m: f64,
    hbar: f64,
    with_derivative: bool,
) -> Result<WkbLayerBlock> {
    let regime = if de_left > 0.0 && de_right > 0.0 {
        Regime::OverBarrier
    } else if de_left < 0.0 && de_right < 0.0 {
        Regime::UnderBarrier
    } else {
        return Err(CoreError::Regime("turning point inside layer".into()));
    };
    // c is the ramp force constant m·(dV/dx); slope = e·V_bias/L for a device
    let c = m * slope;
    let (ka, kb, phase, sign) = match regime {
        Regime::OverBarrier => (
            (2.0 * m * de_left).sqrt(),
            (2.0 * m * de_right).sqrt(),
            phase_action(de_left, de_right, width, m) / hbar,
            -1.0,
        ),
        Regime::UnderBarrier => (
            (-2.0 * m * de_left).sqrt(),
            (-2.0 * m * de_right).sqrt(),
            phase_action(-de_right, -de_left, width, m) / hbar,
            1.0,
        ),
    };
    let wl = kcal(ka, c, hbar, regime).mul(&ecal(ka, 0.0, regime));
    let wr = kcal(kb, c, hbar, regime).mul(&ecal(kb, phase, regime));
    let wr_inv = wr.inv();
    let block = wl.mul(&wr_inv);
    let dm_du = if with_derivative {
        // dκ/dU = −m/κ over, +m/κ̄ under; only the right factor carries phase
        let dka = sign * m / ka;
        let dkb = sign * m / kb;
        let dphase = match regime {
            Regime::OverBarrier => dphase_action_du(de_left, de_right, width, m, -1.0) / hbar,
            Regime::UnderBarrier => dphase_action_du(-de_right, -de_left, width, m, 1.0) / hbar,
        };
        let dwl = dw_dkappa(ka, c, 0.0, hbar, regime).scale(C64::new(dka, 0.0));
        let dwr = dw_dkappa(kb, c, phase, hbar, regime)
            .scale(C64::new(dkb, 0.0))
            .add(&dw_dphase(kb, c, phase, hbar, regime).scale(C64::new(dphase, 0.0)));
        // d(W_l · W_r⁻¹) = dW_l·W_r⁻¹ − W_l·W_r⁻¹·dW_r·W_r⁻¹
        let term1 = dwl.mul(&wr_inv);
        let term2 = block.mul(&dwr).mul(&wr_inv);
        Some(term1.add(&term2.scale(C64::new(-1.0, 0.0))))
    } else {
        None
    };
    Ok(WkbLayerBlock {
        m: block,
        dm_du,
        regime,
    })
}

/// ∂(𝒦ℰ)/∂κ at fixed phase.
fn dw_dkappa(kappa: f64, c: f64, phase: f64, hbar: f64, regime: Regime) -> Mat2 {
    let e = ecal(kappa, phase, regime);
    let zero = C64::new(0.0, 0.0);
    let dk = match regime {
        Regime::OverBarrier => {
            let re = c / kappa.powi(3);
            Mat2::new(zero, zero, C64::new(re, 1.0 / hbar), C64::new(re, -1.0 / hbar))
        }
        Regime::UnderBarrier => {
            let re = -c / kappa.powi(3);
            Mat2::new(
                zero,
                zero,
                C64::new(re + 1.0 / hbar, 0.0),
                C64::new(re - 1.0 / hbar, 0.0),
            )
        }
    };
    // ∂ℰ/∂κ = −ℰ/(2κ)
    let k = kcal(kappa, c, hbar, regime);
    dk.mul(&e)
        .add(&k.mul(&e).scale(C64::new(-1.0 / (2.0 * kappa), 0.0)))
}

/// ∂(𝒦ℰ)/∂phase at fixed κ.
fn dw_dphase(kappa: f64, c: f64, phase: f64, hbar: f64, regime: Regime) -> Mat2 {
    let k = kcal(kappa, c, hbar, regime);
    let e = ecal(kappa, phase, regime);
    let de = match regime {
        // ∂/∂φ diag(e^{iφ}, e^{−iφ}) = diag(i e^{iφ}, −i e^{−iφ})
        Regime::OverBarrier => Mat2::new(
            e.a * C64::new(0.0, 1.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            e.d * C64::new(0.0, -1.0),
        ),
        Regime::UnderBarrier => Mat2::new(
            e.a,
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            -e.d,
        ),
    };
    k.mul(&de)
}
