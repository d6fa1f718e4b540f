//! Device geometry, potential profile and local wave numbers.
//!
//! The device occupies [x_0, x_N], split into N layers by the boundaries.
//! Inside, the potential is the layer value minus a linear bias ramp
//! e·V_bias·(x − x_0)/L; outside it is U_0 on the left and U_{N+1} − e·V_bias
//! on the right. Layer intervals are half-open [x_{j−1}, x_j).

use crate::constants::PhysicalConstants;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    /// Layer boundaries x_0 < x_1 < … < x_N, meters.
    pub boundaries: Vec<f64>,
    /// Layer potentials U_1..U_N, Joules.
    pub u: Vec<f64>,
    /// Outer potential U_0 left of the device, Joules.
    pub u_outer_left: f64,
    /// Outer potential U_{N+1} right of the device (before the −eV_bias shift), Joules.
    pub u_outer_right: f64,
    /// Design bounds (U_L, U_R) on every layer potential, Joules.
    pub bounds: (f64, f64),
}

impl DeviceSpec {
    pub fn new(
        boundaries: Vec<f64>,
        u: Vec<f64>,
        u_outer_left: f64,
        u_outer_right: f64,
        bounds: (f64, f64),
    ) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(CoreError::InvalidSpec(
                "need at least two boundaries (one layer)".into(),
            ));
        }
        if u.len() != boundaries.len() - 1 {
            return Err(CoreError::InvalidSpec(format!(
                "{} boundaries require {} layer potentials, got {}",
                boundaries.len(),
                boundaries.len() - 1,
                u.len()
            )));
        }
        if !boundaries.windows(2).all(|w| w[1] > w[0]) {
            return Err(CoreError::InvalidSpec(
                "boundaries must be strictly increasing".into(),
            ));
        }
        if bounds.0 > bounds.1 {
            return Err(CoreError::InvalidSpec("bounds must satisfy U_L <= U_R".into()));
        }
        Ok(Self {
            boundaries,
            u,
            u_outer_left,
            u_outer_right,
            bounds,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.u.len()
    }

    pub fn length(&self) -> f64 {
        self.boundaries[self.u.len()] - self.boundaries[0]
    }

    /// Clone with a replaced potential vector (optimization iterate).
    pub fn with_potentials(&self, u: &[f64]) -> Self {
        let mut s = self.clone();
        s.u.copy_from_slice(u);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    /// Applied bias, volts. Nonnegative.
    pub v_bias: f64,
    /// Incident electron energy, Joules.
    pub e: f64,
}

/// How T is extracted from the amplitude ratio. FluxRatio carries the
/// κ_out/κ_in velocity factor and conserves probability current; it is the
/// default everywhere. AmplitudeOnly is |A_out/A_in|², the quantity the
/// design objective tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    FluxRatio,
    AmplitudeOnly,
}

/// Potential profile of the biased device, total on ℝ.
pub fn potential_at(spec: &DeviceSpec, v_bias: f64, x: f64, constants: &PhysicalConstants) -> f64 {
    let x0 = spec.boundaries[0];
    let xn = spec.boundaries[spec.layer_count()];
    if x < x0 {
        return spec.u_outer_left;
    }
    if x > xn {
        return spec.u_outer_right - constants.e * v_bias;
    }
    let ramp = constants.e * v_bias * (x - x0) / (xn - x0);
    // half-open layers [x_{j-1}, x_j); x == x_N falls to the last layer
    let j = match spec
        .boundaries
        .windows(2)
        .position(|w| x >= w[0] && x < w[1])
    {
        Some(j) => j,
        None => spec.layer_count() - 1,
    };
    spec.u[j] - ramp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveKind {
    Propagating,
    Evanescent,
}

/// Local wave number magnitude √(2m·|dE|) in kg·m/s with the branch flag.
/// dE is the local kinetic energy E − V.
pub fn wavenumber(m: f64, de: f64) -> Result<(f64, WaveKind)> {
    if de == 0.0 {
        return Err(CoreError::TurningPoint(de));
    }
    let kind = if de > 0.0 {
        WaveKind::Propagating
    } else {
        WaveKind::Evanescent
    };
    Ok(((2.0 * m * de.abs()).sqrt(), kind))
}

/// Desired transmission samples (V_i, T0_i), strictly increasing in V, all
/// probed at one incident electron energy (Joules).
#[derive(Debug, Clone, PartialEq)]
pub struct TargetResponse {
    pub samples: Vec<(f64, f64)>,
    pub energy: f64,
}

impl TargetResponse {
    pub fn new(samples: Vec<(f64, f64)>, energy: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(CoreError::InvalidSpec("target needs at least one sample".into()));
        }
        if !samples.windows(2).all(|w| w[1].0 > w[0].0) {
            return Err(CoreError::InvalidSpec(
                "target bias points must be strictly increasing".into(),
            ));
        }
        if !samples.iter().all(|&(_, t)| t > 0.0 && t < 1.0) {
            return Err(CoreError::InvalidSpec("target T0 values must lie in (0,1)".into()));
        }
        if !(energy > 0.0) || !energy.is_finite() {
            return Err(CoreError::InvalidSpec("probe energy must be positive".into()));
        }
        Ok(Self { samples, energy })
    }

    /// Linear shorthand T0 = slope·V + intercept sampled at V_i = i·V_max/M,
    /// i = 1..M.
    pub fn linear(
        slope: f64,
        intercept: f64,
        v_max: f64,
        points: usize,
        energy: f64,
    ) -> Result<Self> {
        let samples = (1..=points)
            .map(|i| {
                let v = i as f64 * v_max / points as f64;
                (v, slope * v + intercept)
            })
            .collect();
        Self::new(samples, energy)
    }

    /// Bias points pairing each sample voltage with the probe energy.
    pub fn bias_points(&self) -> Vec<BiasPoint> {
        self.samples
            .iter()
            .map(|&(v, _)| BiasPoint {
                v_bias: v,
                e: self.energy,
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four_layer() -> DeviceSpec {
        let nm = 1e-9;
        let ev = 1.602e-19;
        DeviceSpec::new(
            vec![0.0, nm, 2.0 * nm, 3.0 * nm, 4.0 * nm],
            vec![0.7 * ev; 4],
            0.0,
            0.0,
            (0.7 * ev, 1.7 * ev),
        )
        .unwrap()
    }

    #[test]
    fn zero_bias_is_layer_value() {
        let c = PhysicalConstants::default();
        let d = four_layer();
        let v = potential_at(&d, 0.0, 1.5e-9, &c);
        assert_eq!(v, 0.7 * 1.602e-19);
    }

    #[test]
    fn ramp_vanishes_at_left_edge() {
        let c = PhysicalConstants::default();
        let d = four_layer();
        assert_eq!(potential_at(&d, 0.25, 0.0, &c), 0.7 * 1.602e-19);
    }

    #[test]
    fn full_drop_at_right_edge() {
        // 4 x 1 nm layers at 0.7 eV, V_bias = 0.25 V: potential at x_4 is 0.45 eV
        let c = PhysicalConstants::default();
        let d = four_layer();
        let v = potential_at(&d, 0.25, 4.0e-9, &c);
        let expect = (0.7 - 0.25) * 1.602e-19;
        assert!((v - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn boundary_jump_equals_potential_step() {
        let c = PhysicalConstants::default();
        let nm = 1e-9;
        let ev = 1.602e-19;
        let d = DeviceSpec::new(
            vec![0.0, nm, 2.0 * nm],
            vec![0.5 * ev, 1.2 * ev],
            0.0,
            0.0,
            (0.0, 2.0 * ev),
        )
        .unwrap();
        let eps = 1e-15;
        let left = potential_at(&d, 0.1, nm - eps, &c);
        let right = potential_at(&d, 0.1, nm, &c);
        let jump = right - left;
        assert!((jump - 0.7 * ev).abs() < 1e-6 * ev);
    }

    #[test]
    fn outside_values() {
        let c = PhysicalConstants::default();
        let d = four_layer();
        assert_eq!(potential_at(&d, 0.25, -1.0e-9, &c), 0.0);
        let right = potential_at(&d, 0.25, 5.0e-9, &c);
        assert_eq!(right, -0.25 * 1.602e-19);
    }

    #[test]
    fn wavenumber_constant() {
        // sqrt(2 * 0.07 * 9.10939e-31 * 0.7 * 1.602e-19), oracle to 12 digits
        let m = 0.07 * 9.10939e-31;
        let (k, kind) = wavenumber(m, 0.7 * 1.602e-19).unwrap();
        assert_eq!(kind, WaveKind::Propagating);
        assert!((k - 1.1958836868358e-25).abs() < 1e-37);
    }

    #[test]
    fn wavenumber_sign_symmetry_and_turning_point() {
        let m = 0.07 * 9.10939e-31;
        let de = 0.3 * 1.602e-19;
        let (kp, _) = wavenumber(m, de).unwrap();
        let (km, kind) = wavenumber(m, -de).unwrap();
        assert_eq!(kp, km);
        assert_eq!(kind, WaveKind::Evanescent);
        assert!(matches!(wavenumber(m, 0.0), Err(CoreError::TurningPoint(_))));
    }

    #[test]
    fn linear_target_matches_shorthand() {
        let t = TargetResponse::linear(2e-5, 9.9e-6, 0.25, 10, 0.026 * 1.602e-19).unwrap();
        assert_eq!(t.len(), 10);
        assert!((t.samples[0].0 - 0.025).abs() < 1e-15);
        assert!((t.samples[9].0 - 0.25).abs() < 1e-15);
        assert!((t.samples[9].1 - 1.49e-5).abs() < 1e-18);
    }

    #[test]
    fn spec_validation_rejects_bad_input() {
        let ev = 1.602e-19;
        assert!(DeviceSpec::new(vec![0.0], vec![], 0.0, 0.0, (0.0, ev)).is_err());
        assert!(DeviceSpec::new(vec![0.0, 1e-9], vec![ev, ev], 0.0, 0.0, (0.0, ev)).is_err());
        assert!(DeviceSpec::new(vec![1e-9, 0.0], vec![ev], 0.0, 0.0, (0.0, ev)).is_err());
    }
}
