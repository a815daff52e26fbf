use serde::{Deserialize, Serialize};

use super::GpError;

/// A location in the plane, in grid units.
pub type Point = [f64; 2];

#[inline]
pub fn squared_distance(u: &Point, v: &Point) -> f64 {
    let dx = u[0] - v[0];
    let dy = u[1] - v[1];
    dx * dx + dy * dy
}

/// Squared-exponential covariance `s² exp(-d² / (2 l²))`.
///
/// `signal` is the amplitude `s`, so the prior variance at any location is
/// `signal²`. Both parameters are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub signal: f64,
    pub length_scale: f64,
}

impl Kernel {
    pub fn new(signal: f64, length_scale: f64) -> Result<Self, GpError> {
        let kernel = Self {
            signal,
            length_scale,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.signal.is_finite() && self.signal > 0.0) {
            return Err(GpError::InvalidKernel {
                signal: self.signal,
                length_scale: self.length_scale,
            });
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return Err(GpError::InvalidKernel {
                signal: self.signal,
                length_scale: self.length_scale,
            });
        }
        Ok(())
    }

    /// Prior variance `s²`.
    #[inline]
    pub fn variance(&self) -> f64 {
        self.signal * self.signal
    }

    #[inline]
    pub fn eval(&self, u: &Point, v: &Point) -> f64 {
        self.eval_sq_dist(squared_distance(u, v))
    }

    #[inline]
    pub fn eval_sq_dist(&self, d2: f64) -> f64 {
        self.variance() * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
    }

    /// Parameters as `(ln s, ln l)`, the coordinates hyperparameter fitting works in.
    pub fn to_log(&self) -> [f64; 2] {
        [self.signal.ln(), self.length_scale.ln()]
    }

    pub fn from_log(theta: [f64; 2]) -> Self {
        Self {
            signal: theta[0].exp(),
            length_scale: theta[1].exp(),
        }
    }
}
