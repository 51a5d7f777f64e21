//! Pointwise chemistry on the pore-solid interface.
//!
//! Precipitation follows a Langmuir-type rate `R(u, v)`; dissolution is
//! `k_d * z` with `z` selected from the Heaviside graph of the precipitate
//! `w`, regularized here by a linear ramp of width `delta`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Kinetic and diffusive constants plus the time grid of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d1: f64,
    pub d2: f64,
    pub k_f: f64,
    pub k_d: f64,
    pub k1: f64,
    pub k2: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Number of time steps between regular samples.
    pub sample_stride: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            d1: 1.0,
            d2: 2.0,
            k_f: 1.8,
            k_d: 2.2,
            k1: 1.0,
            k2: 1.0,
            delta: 0.01,
            epsilon: 0.2,
            dt: 0.01,
            t_final: 20.0,
            sample_stride: 10,
        }
    }
}

impl ModelParams {
    /// Ratio `k_f / k_d` scaling the precipitation rate.
    pub fn k(&self) -> f64 {
        self.k_f / self.k_d
    }

    /// Number of time steps covering `[0, t_final]`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d1", self.d1),
            ("d2", self.d2),
            ("k_d", self.k_d),
            ("delta", self.delta),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (name, v) in [("k_f", self.k_f), ("k1", self.k1), ("k2", self.k2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if self.dt > self.t_final {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds t_final = {}",
                self.dt, self.t_final
            )));
        }
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final = {} is not a whole number of steps dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.sample_stride == 0 {
            return Err(Error::InvalidParameter(
                "sample_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Langmuir precipitation rate; zero off the open positive quadrant.
pub fn reaction_rate(u: f64, v: f64, p: &ModelParams) -> f64 {
    if u > 0.0 && v > 0.0 {
        let a = p.k1 * u;
        let b = p.k2 * v;
        let d = 1.0 + (a + b);
        p.k() * (a * b) / (d * d)
    } else {
        0.0
    }
}

/// Ramp regularization of the dissolution graph: `clamp(w / delta, 0, 1)`.
pub fn psi_reg(w: f64, delta: f64) -> f64 {
    (w / delta).clamp(0.0, 1.0)
}

/// Right-hand side of the precipitate equation with `z = psi_reg(w)`.
pub fn w_rhs(u: f64, v: f64, w: f64, p: &ModelParams) -> f64 {
    p.k_d * (reaction_rate(u, v, p) - psi_reg(w, p.delta))
}

/// One step of `w' = k_d (rate - psi(w))` with the rate frozen and the ramp
/// taken implicitly: returns the unique root of
/// `x = w + dt k_d (rate - psi_reg(x))`.
///
/// The map is monotone, so the root never overshoots below zero when
/// `w >= 0` and `rate >= 0`.
pub fn advance_precipitate(w: f64, rate: f64, p: &ModelParams) -> f64 {
    let c = p.dt * p.k_d;
    let free = w + c * rate;
    let saturated = free - c;
    if saturated >= p.delta {
        saturated
    } else if free <= 0.0 {
        free
    } else {
        free / (1.0 + c / p.delta)
    }
}
