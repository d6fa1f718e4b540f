//! Physical constants and unit conversions.
//!
//! Internal unit convention: SI throughout (Joules, meters, kilograms,
//! seconds). Electron-volts, nanometers and volts appear only at ingestion
//! and emission boundaries. Wave numbers carry momentum units, kg·m/s
//! (no 1/ħ baked in); every phase is (1/ħ)·∫κ dx.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.05457e-34;
/// Free electron mass, kg.
pub const M0: f64 = 9.10939e-31;
/// Elementary charge, C. Also the eV → J conversion factor.
pub const E_CHARGE: f64 = 1.602e-19;
/// Default effective-mass factor (GaAs-like conduction band).
pub const EFFECTIVE_MASS_FACTOR: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Free electron mass, kg.
    pub m0: f64,
    /// Elementary charge, C.
    pub e: f64,
    /// Effective mass = factor · m0.
    pub effective_mass_factor: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: HBAR,
            m0: M0,
            e: E_CHARGE,
            effective_mass_factor: EFFECTIVE_MASS_FACTOR,
        }
    }
}

impl PhysicalConstants {
    /// Effective mass in kg.
    pub fn mass(&self) -> f64 {
        self.effective_mass_factor * self.m0
    }

    pub fn ev_to_joule(&self, ev: f64) -> f64 {
        ev * self.e
    }

    pub fn joule_to_ev(&self, j: f64) -> f64 {
        j / self.e
    }
}

pub const NM: f64 = 1e-9;

pub fn nm_to_m(nm: f64) -> f64 {
    nm * NM
}

pub fn m_to_nm(m: f64) -> f64 {
    m / NM
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_bit_match() {
        let c = PhysicalConstants::default();
        assert_eq!(c.hbar, 1.05457e-34);
        assert_eq!(c.m0, 9.10939e-31);
        assert_eq!(c.e, 1.602e-19);
        assert_eq!(c.effective_mass_factor, 0.07);
    }

    #[test]
    fn unit_round_trip_12_digits() {
        let c = PhysicalConstants::default();
        for &ev in &[0.026, 0.7, 1.31, 1.7] {
            let back = c.joule_to_ev(c.ev_to_joule(ev));
            assert!((back - ev).abs() <= 1e-12 * ev);
        }
        for &nm in &[0.5, 1.0, 4.0] {
            let back = m_to_nm(nm_to_m(nm));
            assert!((back - nm).abs() <= 1e-12 * nm);
        }
    }
}
