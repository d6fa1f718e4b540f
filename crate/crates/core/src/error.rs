use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Wave number vanishes; WKB matrices are singular there.
    #[error("turning point: local kinetic energy {0:.3e} J is zero")]
    TurningPoint(f64),

    /// E − V changes sign across a barrier, or the requested closed form
    /// does not cover the input regime.
    #[error("regime violation: {0}")]
    Regime(String),

    /// No propagating incident wave: E ≤ U_0.
    #[error("no incident wave: E = {e:.6e} J does not exceed U_0 = {u0:.6e} J")]
    NoIncidentWave { e: f64, u0: f64 },

    /// Transmitted side is evanescent: E + eV_bias ≤ U_{N+1}.
    #[error("evanescent output: E + eV_bias = {e_out:.6e} J does not exceed U_N+1 = {u_right:.6e} J")]
    EvanescentOutput { e_out: f64, u_right: f64 },

    #[error("solver failure: {0}")]
    Solver(String),

    /// FD grid too coarse for the shortest local wavelength.
    #[error("under-resolved grid: {points_per_wavelength:.1} points per wavelength, need >= {required}")]
    Resolution {
        points_per_wavelength: f64,
        required: f64,
    },

    /// Reference moment is nonpositive; relative error is undefined.
    #[error("degenerate reference moment: m1 = {m1:.6e}, m2 = {m2:.6e}")]
    ReferenceDegenerate { m1: f64, m2: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Objective evaluation failed at a quadrature node or bias point.
    #[error("evaluation failed at {context}: {source}")]
    Evaluation {
        context: String,
        #[source]
        source: Box<CoreError>,
    },

    /// Adaptive loop exhausted the reference-level escalation cap.
    #[error("adaptive quadrature did not converge by reference level {level_max}")]
    AdaptiveExhausted { level_max: usize },
}

impl CoreError {
    pub fn at(self, context: impl Into<String>) -> Self {
        CoreError::Evaluation {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
