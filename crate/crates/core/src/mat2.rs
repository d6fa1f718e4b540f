//! 2×2 complex matrices for transfer-matrix chains, with an optional
//! factored-out exponential scale to keep evanescent products inside f64
//! range.

use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2 {
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

pub const ZERO2: Mat2 = Mat2 {
    a: C64::new(0.0, 0.0),
    b: C64::new(0.0, 0.0),
    c: C64::new(0.0, 0.0),
    d: C64::new(0.0, 0.0),
};

impl Mat2 {
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { a, b, c, d }
    }

    pub fn identity() -> Self {
        Self::new(
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        )
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn det(&self) -> C64 {
        self.a * self.d - self.b * self.c
    }

    /// Analytic inverse. Caller guarantees the determinant is nonzero.
    pub fn inv(&self) -> Mat2 {
        let det = self.det();
        Mat2 {
            a: self.d / det,
            b: -self.b / det,
            c: -self.c / det,
            d: self.a / det,
        }
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        Mat2 {
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
            d: self.d * s,
        }
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        Mat2 {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .norm()
            .max(self.b.norm())
            .max(self.c.norm())
            .max(self.d.norm())
    }

    pub fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.d]
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Matrix together with a factored scale: the represented matrix is
/// m · e^{log_scale}. Products renormalize so entries of `m` stay O(1).
#[derive(Debug, Clone, Copy)]
pub struct ScaledMat2 {
    pub m: Mat2,
    pub log_scale: f64,
}

impl ScaledMat2 {
    pub fn identity() -> Self {
        Self {
            m: Mat2::identity(),
            log_scale: 0.0,
        }
    }

    pub fn from_mat(m: Mat2) -> Self {
        Self { m, log_scale: 0.0 }.normalized()
    }

    pub fn normalized(mut self) -> Self {
        let mag = self.m.max_abs();
        if mag > 0.0 && mag.is_finite() {
            let f = 1.0 / mag;
            self.m = self.m.scale(C64::new(f, 0.0));
            self.log_scale += mag.ln();
        }
        self
    }

    pub fn mul(&self, o: &ScaledMat2) -> ScaledMat2 {
        ScaledMat2 {
            m: self.m.mul(&o.m),
            log_scale: self.log_scale + o.log_scale,
        }
        .normalized()
    }

    /// |entry (0,0)|² · e^{2·log_scale}, as a logarithm to stay in range.
    pub fn log_abs2_a(&self) -> f64 {
        2.0 * (self.m.a.norm().ln() + self.log_scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Mat2::new(c(1.0, 2.0), c(-0.5, 0.3), c(2.0, -1.0), c(0.1, 0.9));
        let p = m.mul(&m.inv());
        assert!((p.a - c(1.0, 0.0)).norm() < 1e-14);
        assert!((p.b).norm() < 1e-14);
        assert!((p.c).norm() < 1e-14);
        assert!((p.d - c(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn scaled_product_tracks_growth() {
        // repeated multiplication by diag(e^40, e^-40) must not overflow
        let big = Mat2::new(c(1e40, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1e-40, 0.0));
        let mut acc = ScaledMat2::identity();
        for _ in 0..12 {
            acc = acc.mul(&ScaledMat2::from_mat(big));
        }
        assert!(acc.m.is_finite());
        // log |a|^2 = 2 * 12 * ln(1e40)
        let expect = 24.0 * (1e40f64).ln();
        assert!((acc.log_abs2_a() - expect).abs() < 1e-6 * expect.abs());
    }
}
