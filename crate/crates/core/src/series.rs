//! Ground-truth range series preprocessing (gap filling, uniform resampling,
//! zero-phase IIR smoothing, clock-offset correction) and the distance error
//! metrics reported against it.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A scalar time series with strictly increasing timestamps (seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    samples: Vec<(f64, f64)>,
}

impl TimeSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        for pair in samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::Value(format!(
                    "timestamps must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Linear interpolation at time `t`; `None` outside the sampled span.
    pub fn interpolate(&self, t: f64) -> Option<f64> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if t < first.0 || t > last.0 {
            return None;
        }
        let idx = self.samples.partition_point(|(st, _)| *st < t);
        if idx == 0 {
            return Some(first.1);
        }
        if idx == self.samples.len() {
            return Some(last.1);
        }
        let (t0, v0) = self.samples[idx - 1];
        let (t1, v1) = self.samples[idx];
        if t == t1 {
            return Some(v1);
        }
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

/// One second-order IIR section with a0 normalized to 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sos {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Sos {
    pub fn identity() -> Self {
        Self { b0: 1.0, b1: 0.0, b2: 0.0, a1: 0.0, a2: 0.0 }
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2)
    }
}

/// Single forward pass of one section (direct form II transposed), with the
/// internal state initialized to its steady-state response for the first
/// sample so a constant input produces a constant output from sample zero.
fn sosfilt_section(section: &Sos, values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let g = section.dc_gain();
    let x0 = values[0];
    let mut z1 = (g - section.b0) * x0;
    let mut z2 = (section.b2 - section.a2 * g) * x0;
    for v in values.iter_mut() {
        let x = *v;
        let y = section.b0 * x + z1;
        z1 = section.b1 * x - section.a1 * y + z2;
        z2 = section.b2 * x - section.a2 * y;
        *v = y;
    }
}

/// Zero-phase filtering: run the cascade forward, then backward. Doubles the
/// magnitude response and cancels the phase.
pub fn filtfilt(sections: &[Sos], values: &mut [f64]) {
    for pass in 0..2 {
        for section in sections {
            sosfilt_section(section, values);
        }
        if pass == 0 {
            values.reverse();
        }
    }
    values.reverse();
}

/// Resample onto the uniform grid `t_first + i / rate` by linear
/// interpolation; sparse stretches are filled by the same interpolation.
pub fn resample_uniform(series: &TimeSeries, rate_hz: f64) -> Result<TimeSeries> {
    if rate_hz <= 0.0 {
        return Err(Error::Config(format!("resample rate must be > 0, got {rate_hz}")));
    }
    if series.len() < 2 {
        return Err(Error::Value(format!(
            "cannot resample a series of {} sample(s)",
            series.len()
        )));
    }
    let t_first = series.samples[0].0;
    let t_last = series.samples[series.len() - 1].0;
    let step = 1.0 / rate_hz;
    let count = ((t_last - t_first) / step + 1e-9).floor() as usize + 1;
    let samples = (0..count)
        .map(|i| {
            let t = t_first + i as f64 * step;
            let v = series.interpolate(t.min(t_last)).expect("grid point inside span");
            (t, v)
        })
        .collect();
    TimeSeries::new(samples)
}

/// Full ground-truth preprocessing: resample to the target rate (filling gaps
/// by linear interpolation), apply the zero-phase IIR cascade, then shift
/// every timestamp by the clock synchronization offset.
pub fn preprocess_groundtruth(
    series: &TimeSeries,
    target_rate_hz: f64,
    sections: &[Sos],
    sync_offset_s: f64,
) -> Result<TimeSeries> {
    let resampled = resample_uniform(series, target_rate_hz)?;
    let mut values: Vec<f64> = resampled.samples.iter().map(|(_, v)| *v).collect();
    filtfilt(sections, &mut values);
    let samples = resampled
        .samples
        .iter()
        .zip(values)
        .map(|(&(t, _), v)| (t + sync_offset_s, v))
        .collect();
    TimeSeries::new(samples)
}

/// Error metrics over the ground-truth instants that found a prediction
/// within the matching tolerance. The error fields are `None` when nothing
/// matched.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub median_abs_error_m: Option<f64>,
    pub median_rel_error: Option<f64>,
    pub rmse_m: Option<f64>,
    /// Detected ground-truth instants over all ground-truth instants.
    pub success_rate: f64,
    pub detected: usize,
    pub total: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Compare a predicted distance series against ground truth: every gt instant
/// with a prediction within `match_tolerance_s` counts as detected, and the
/// error statistics are computed over detected instants only.
pub fn distance_error_metrics(
    pred: &TimeSeries,
    gt: &TimeSeries,
    match_tolerance_s: f64,
) -> ErrorReport {
    let mut abs_errors = Vec::new();
    let mut rel_errors = Vec::new();
    let mut sq_sum = 0.0f64;
    let total = gt.len();
    for &(t_g, v_g) in gt.samples() {
        // Nearest prediction by time.
        let idx = pred.samples.partition_point(|(t, _)| *t < t_g);
        let candidates = [idx.checked_sub(1), Some(idx)];
        let nearest = candidates
            .iter()
            .flatten()
            .filter_map(|&i| pred.samples.get(i))
            .min_by(|a, b| {
                (a.0 - t_g).abs().partial_cmp(&(b.0 - t_g).abs()).expect("finite times")
            });
        if let Some(&(t_p, v_p)) = nearest {
            if (t_p - t_g).abs() <= match_tolerance_s {
                let err = v_p - v_g;
                abs_errors.push(err.abs());
                rel_errors.push(err.abs() / v_g.abs());
                sq_sum += err * err;
            }
        }
    }
    let detected = abs_errors.len();
    if detected == 0 {
        return ErrorReport {
            median_abs_error_m: None,
            median_rel_error: None,
            rmse_m: None,
            success_rate: 0.0,
            detected: 0,
            total,
        };
    }
    abs_errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    rel_errors.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    ErrorReport {
        median_abs_error_m: Some(median(&abs_errors)),
        median_rel_error: Some(median(&rel_errors)),
        rmse_m: Some((sq_sum / detected as f64).sqrt()),
        success_rate: detected as f64 / total as f64,
        detected,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(samples: &[(f64, f64)]) -> TimeSeries {
        TimeSeries::new(samples.to_vec()).unwrap()
    }

    #[test]
    fn rejects_nonincreasing_times_and_tiny_resample() {
        assert!(TimeSeries::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(resample_uniform(&series(&[(0.0, 1.0)]), 10.0).is_err());
    }

    #[test]
    fn resample_interpolates_gaps() {
        let s = series(&[(0.0, 1.0), (2.0, 3.0)]);
        let r = resample_uniform(&s, 1.0).unwrap();
        assert_eq!(r.samples(), &[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
    }

    #[test]
    fn identity_filter_and_offset() {
        let s = series(&[(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)]);
        let out = preprocess_groundtruth(&s, 1.0, &[Sos::identity()], 0.0).unwrap();
        assert_eq!(out.samples(), s.samples());

        let shifted = preprocess_groundtruth(&s, 1.0, &[], 0.719).unwrap();
        for (a, b) in s.samples().iter().zip(shifted.samples()) {
            assert!((b.0 - a.0 - 0.719).abs() < 1e-12);
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn zero_phase_preserves_constants_for_unity_dc_gain() {
        // A gentle low-pass biquad with unity DC gain.
        let section = Sos { b0: 0.25, b1: 0.5, b2: 0.25, a1: -0.1, a2: 0.1 };
        assert!((section.dc_gain() - 1.0).abs() < 1e-12);
        let mut values = vec![3.5; 64];
        filtfilt(&[section], &mut values);
        for v in values {
            assert!((v - 3.5).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_phase_smooths_a_spike_symmetrically() {
        let section = Sos { b0: 0.25, b1: 0.5, b2: 0.25, a1: 0.0, a2: 0.0 };
        let mut values = vec![0.0; 21];
        values[10] = 1.0;
        filtfilt(&[section], &mut values);
        // Symmetric response around the spike means zero phase shift.
        for k in 1..10 {
            assert!((values[10 - k] - values[10 + k]).abs() < 1e-12);
        }
        assert!(values[10] < 1.0);
        assert!(values[9] > 0.0);
    }

    #[test]
    fn error_metrics_exact_match() {
        let gt = series(&[(0.0, 30.0), (1.0, 31.0), (2.0, 32.0)]);
        let report = distance_error_metrics(&gt, &gt, 0.01);
        assert_eq!(report.median_abs_error_m, Some(0.0));
        assert_eq!(report.rmse_m, Some(0.0));
        assert_eq!(report.success_rate, 1.0);
    }

    #[test]
    fn error_metrics_constant_offset() {
        let gt = series(&[(0.0, 30.0), (1.0, 30.0), (2.0, 30.0)]);
        let pred = series(&[(0.0, 30.1), (1.0, 30.1), (2.0, 30.1)]);
        let report = distance_error_metrics(&pred, &gt, 0.01);
        let abs = report.median_abs_error_m.unwrap();
        assert!((abs - 0.1).abs() < 1e-9);
        assert!((report.median_rel_error.unwrap() - 0.1 / 30.0).abs() < 1e-9);
        assert!((report.rmse_m.unwrap() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn error_metrics_partial_coverage() {
        let gt = series(&[(0.0, 30.0), (1.0, 30.0), (2.0, 30.0), (3.0, 30.0)]);
        let pred = series(&[(0.0, 30.0), (2.0, 30.0)]);
        let report = distance_error_metrics(&pred, &gt, 0.25);
        assert_eq!(report.detected, 2);
        assert_eq!(report.total, 4);
        assert!((report.success_rate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn error_metrics_nothing_detected() {
        let gt = series(&[(0.0, 30.0), (1.0, 30.0)]);
        let pred = series(&[(10.0, 30.0)]);
        let report = distance_error_metrics(&pred, &gt, 0.1);
        assert_eq!(report.median_abs_error_m, None);
        assert_eq!(report.success_rate, 0.0);
    }
}
