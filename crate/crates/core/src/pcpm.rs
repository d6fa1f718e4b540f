//! Piecewise-constant propagation matrices. Each slice of width d at
//! constant potential V propagates the (ψ, ψ′) state exactly; a ramp layer
//! is approximated by midpoint-valued slices. Independent of the WKB
//! machinery, so it doubles as an oracle for it.

use crate::error::{CoreError, Result};
use crate::mat2::{C64, Mat2};

/// Kinetic parameter below which sin/sinh are evaluated by series to avoid
/// 0/0; |q|·d² at the switch keeps both branches within 1e−12.
const SERIES_SWITCH: f64 = 1e-6;

/// cos(√q d) and sin(√q d)/√q for signed q (cosh/sinh when q < 0).
fn c_and_s(q: f64, d: f64) -> (f64, f64) {
    let z = q * d * d;
    if z.abs() < SERIES_SWITCH {
        let c = 1.0 - z / 2.0 + z * z / 24.0;
        let s = d * (1.0 - z / 6.0 + z * z / 120.0);
        (c, s)
    } else if q > 0.0 {
        let r = q.sqrt();
        ((r * d).cos(), (r * d).sin() / r)
    } else {
        let r = (-q).sqrt();
        ((r * d).cosh(), (r * d).sinh() / r)
    }
}

/// d/dq of (C, S): dC/dq = −(d/2)·S, dS/dq = (d·C − S)/(2q).
fn dc_and_ds(q: f64, d: f64, c: f64, s: f64) -> (f64, f64) {
    let dc = -0.5 * d * s;
    let z = q * d * d;
    let ds = if z.abs() < SERIES_SWITCH {
        let d3 = d * d * d;
        -d3 / 6.0 + q * d3 * d * d / 60.0
    } else {
        (d * c - s) / (2.0 * q)
    };
    (dc, ds)
}

/// Backward propagator over one slice: state(x) = P · state(x+d) with
/// q = 2m(E−V)/ħ². P = [[C, −S], [qS, C]], det P = 1.
pub fn slice_propagator(q: f64, d: f64) -> Mat2 {
    let (c, s) = c_and_s(q, d);
    Mat2::new(
        C64::new(c, 0.0),
        C64::new(-s, 0.0),
        C64::new(q * s, 0.0),
        C64::new(c, 0.0),
    )
}

/// ∂P/∂q for the backward propagator.
pub fn slice_propagator_dq(q: f64, d: f64) -> Mat2 {
    let (c, s) = c_and_s(q, d);
    let (dc, ds) = dc_and_ds(q, d, c, s);
    Mat2::new(
        C64::new(dc, 0.0),
        C64::new(-ds, 0.0),
        C64::new(s + q * ds, 0.0),
        C64::new(dc, 0.0),
    )
}

/// Right-to-left block over a linear ramp layer, discretized into `slices`
/// midpoint-valued constant pieces, with optional ∂/∂U (all slices shift by
/// dq/dU = −2m/ħ² together).
pub fn pcpm_layer_block(
    de_left: f64,
    de_right: f64,
    width: f64,
    slices: usize,
    m: f64,
    hbar: f64,
    with_derivative: bool,
) -> Result<(Mat2, Option<Mat2>)> {
    if slices == 0 {
        return Err(CoreError::InvalidSpec("slice count must be positive".into()));
    }
    if width <= 0.0 {
        return Err(CoreError::InvalidSpec("layer width must be positive".into()));
    }
    let d = width / slices as f64;
    let qs: Vec<f64> = (0..slices)
        .map(|s| {
            let de = de_left + (s as f64 + 0.5) / slices as f64 * (de_right - de_left);
            2.0 * m * de / (hbar * hbar)
        })
        .collect();
    let mut block = Mat2::identity();
    for &q in &qs {
        block = block.mul(&slice_propagator(q, d));
    }
    let deriv = if with_derivative {
        // suffix[s] = P_s ⋯ P_{S−1}; dM = Σ prefix·dP_s·suffix[s+1]
        let mut suffix = vec![Mat2::identity(); slices + 1];
        for s in (0..slices).rev() {
            suffix[s] = slice_propagator(qs[s], d).mul(&suffix[s + 1]);
        }
        let dq_du = -2.0 * m / (hbar * hbar);
        let mut acc = Mat2::new(
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
        );
        let mut prefix = Mat2::identity();
        for s in 0..slices {
            let dp = slice_propagator_dq(qs[s], d).scale(C64::new(dq_du, 0.0));
            acc = acc.add(&prefix.mul(&dp).mul(&suffix[s + 1]));
            prefix = prefix.mul(&slice_propagator(qs[s], d));
        }
        Some(acc)
    } else {
        None
    };
    Ok((block, deriv))
}
