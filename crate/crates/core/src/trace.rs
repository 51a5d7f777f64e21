//! Sampling schedule and recorded time series shared by both solvers.

use serde::{Deserialize, Serialize};

use crate::kinetics::ModelParams;
use crate::mesh::Point;
use crate::{Error, Result};

/// Which steps are sampled and which points are traced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRequest {
    pub points: Vec<Point>,
    /// Extra samples are taken every `burst_stride` steps while `t <= burst_end`.
    pub burst_end: f64,
    pub burst_stride: usize,
}

impl Default for TraceRequest {
    fn default() -> Self {
        TraceRequest {
            points: vec![[0.6, 0.5]],
            burst_end: 0.5,
            burst_stride: 1,
        }
    }
}

/// One entry of the sampling schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub index: usize,
    pub step: usize,
    pub time: f64,
    /// Sampled by the regular stride (as opposed to the initial burst only).
    pub regular: bool,
}

impl TraceRequest {
    pub fn validate(&self) -> Result<()> {
        if self.burst_stride == 0 {
            return Err(Error::InvalidParameter(
                "burst_stride must be at least 1".into(),
            ));
        }
        if !(self.burst_end >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "burst_end must be non-negative, got {}",
                self.burst_end
            )));
        }
        Ok(())
    }

    /// All sampled steps of a run, in increasing order. Step 0 and the final
    /// step are always included.
    pub fn schedule(&self, p: &ModelParams) -> Vec<Sample> {
        let n = p.n_steps();
        let mut out = Vec::new();
        for step in 0..=n {
            let time = step as f64 * p.dt;
            let regular = step % p.sample_stride == 0;
            let burst = time <= self.burst_end + 1e-9 * p.dt && step % self.burst_stride == 0;
            if regular || burst || step == n {
                out.push(Sample {
                    index: out.len(),
                    step,
                    time,
                    regular,
                });
            }
        }
        out
    }
}

/// Values of `u` and `v` at one traced point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PointSeries {
    pub point: Point,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Time series recorded at the sampled steps of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub steps: Vec<usize>,
    pub regular: Vec<bool>,
    pub points: Vec<PointSeries>,
    /// Conserved total of species 1: volume mass plus scaled precipitate mass.
    pub total_u: Vec<f64>,
    pub total_v: Vec<f64>,
    /// Scaled precipitate mass alone.
    pub total_w: Vec<f64>,
    pub min_u: Vec<f64>,
    pub min_v: Vec<f64>,
    pub min_w: Vec<f64>,
    pub min_z: Vec<f64>,
    pub max_z: Vec<f64>,
    /// Species-1 energy from the quadratic term plus accumulated dissipation.
    pub energy_dissipation: Vec<f64>,
    /// Species-1 energy from the initial term minus the accumulated interface work.
    pub energy_flux: Vec<f64>,
}

impl Trace {
    pub fn new(points: &[Point]) -> Self {
        Trace {
            points: points
                .iter()
                .map(|&point| PointSeries {
                    point,
                    ..Default::default()
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Named columns in the fixed order used for CSV output.
    pub fn columns(&self) -> Vec<(String, &[f64])> {
        let mut cols: Vec<(String, &[f64])> = Vec::new();
        for (k, s) in self.points.iter().enumerate() {
            cols.push((format!("u_p{k}"), &s.u));
            cols.push((format!("v_p{k}"), &s.v));
        }
        cols.push(("total_u".into(), &self.total_u));
        cols.push(("total_v".into(), &self.total_v));
        cols.push(("total_w".into(), &self.total_w));
        cols.push(("min_u".into(), &self.min_u));
        cols.push(("min_v".into(), &self.min_v));
        cols.push(("min_w".into(), &self.min_w));
        cols.push(("min_z".into(), &self.min_z));
        cols.push(("max_z".into(), &self.max_z));
        cols.push(("energy_dissipation".into(), &self.energy_dissipation));
        cols.push(("energy_flux".into(), &self.energy_flux));
        cols
    }

    /// Largest relative deviation of a conserved series from its first value.
    pub fn relative_drift(series: &[f64]) -> f64 {
        let Some(&first) = series.first() else {
            return 0.0;
        };
        let scale = first.abs().max(f64::MIN_POSITIVE);
        series
            .iter()
            .map(|v| (v - first).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// Series lengths all equal the number of samples and times increase.
    pub fn check_consistency(&self) -> bool {
        let n = self.times.len();
        let increasing = self.times.windows(2).all(|w| w[1] > w[0]);
        increasing
            && self.steps.len() == n
            && self.regular.len() == n
            && self.points.iter().all(|p| p.u.len() == n && p.v.len() == n)
            && self.columns().iter().all(|(_, c)| c.len() == n)
    }
}

/// Minimum of a slice, `+inf` for an empty one.
pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

pub(crate) fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_counts() {
        let p = ModelParams::default();
        let s = TraceRequest::default().schedule(&p);
        assert_eq!(s.iter().filter(|s| s.regular).count(), 201);
        // steps 1..=50 minus the five multiples of 10
        assert_eq!(s.len(), 201 + 45);
        assert!(s.windows(2).all(|w| w[1].step > w[0].step));
        assert_eq!(s.last().unwrap().step, 2000);
        assert!(s.iter().enumerate().all(|(i, x)| x.index == i));
    }

    #[test]
    fn final_step_always_sampled() {
        let p = ModelParams {
            t_final: 0.25,
            dt: 0.01,
            sample_stride: 10,
            ..Default::default()
        };
        let req = TraceRequest {
            burst_end: 0.0,
            ..Default::default()
        };
        let steps: Vec<usize> = req.schedule(&p).iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn empty_trace_is_consistent() {
        let t = Trace::new(&[[0.6, 0.5]]);
        assert!(t.is_empty());
        assert!(t.check_consistency());
        assert_eq!(Trace::relative_drift(&[]), 0.0);
        assert!((Trace::relative_drift(&[2.0, 2.0, 2.2]) - 0.1).abs() < 1e-12);
    }
}
