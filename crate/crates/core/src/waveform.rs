use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum WaveformError {
    #[error("segment {0} has non-positive duration")]
    NonPositiveDuration(usize),
    #[error("waveform must end at 0 V (last segment ends at {0})")]
    NonZeroEnd(f64),
    #[error("waveform has no segments")]
    Empty,
}

/// Piecewise-linear voltage waveform starting at 0 V.
///
/// Each segment is `(duration, end_voltage)`; the voltage ramps linearly
/// from the previous segment's end voltage. The waveform must end back at
/// 0 V. Outside `[0, duration]` the value is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseWaveform<F: Scalar = f64> {
    segments: Vec<(F, F)>,
}

impl<F: Scalar> PulseWaveform<F> {
    pub fn new(segments: Vec<(F, F)>) -> Result<Self, WaveformError> {
        if segments.is_empty() {
            return Err(WaveformError::Empty);
        }
        for (i, (d, _)) in segments.iter().enumerate() {
            if *d <= F::zero() {
                return Err(WaveformError::NonPositiveDuration(i));
            }
        }
        let end = segments.last().unwrap().1;
        if end != F::zero() {
            return Err(WaveformError::NonZeroEnd(end.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { segments })
    }

    /// Trapezoid pulse: 0 -> amplitude over `rise`, hold for `width`,
    /// back to 0 over `fall`.
    pub fn trapezoid(rise: F, width: F, fall: F, amplitude: F) -> Result<Self, WaveformError> {
        Self::new(vec![(rise, amplitude), (width, amplitude), (fall, F::zero())])
    }

    pub fn segments(&self) -> &[(F, F)] {
        &self.segments
    }

    pub fn duration(&self) -> F {
        self.segments
            .iter()
            .fold(F::zero(), |acc, (d, _)| acc + *d)
    }

    /// Peak absolute voltage.
    pub fn amplitude(&self) -> F {
        self.segments
            .iter()
            .fold(F::zero(), |acc, (_, v)| acc.max(v.abs()))
    }

    /// Voltage at time `t` (0 outside the waveform).
    pub fn value(&self, t: F) -> F {
        if t <= F::zero() {
            return F::zero();
        }
        let mut t0 = F::zero();
        let mut v0 = F::zero();
        for (d, v1) in &self.segments {
            let t1 = t0 + *d;
            if t <= t1 {
                let frac = (t - t0) / *d;
                return v0 + (*v1 - v0) * frac;
            }
            t0 = t1;
            v0 = *v1;
        }
        F::zero()
    }

    /// Longest contiguous time interval with value >= `level`.
    ///
    /// Assumes a non-negative waveform (all gate and programming pulses are).
    pub fn max_contiguous_time_at_or_above(&self, level: F) -> F {
        let mut best = F::zero();
        let mut run = F::zero();
        let mut t0 = F::zero();
        let mut v0 = F::zero();
        for (d, v1) in &self.segments {
            let (d, v1) = (*d, *v1);
            if v0 >= level && v1 >= level {
                run = run + d;
            } else if v0 < level && v1 >= level {
                // crosses upward inside the segment
                let tc = d * (level - v0) / (v1 - v0);
                run = d - tc;
            } else if v0 >= level && v1 < level {
                let tc = d * (v0 - level) / (v0 - v1);
                run = run + tc;
                best = best.max(run);
                run = F::zero();
            } else {
                best = best.max(run);
                run = F::zero();
            }
            t0 = t0 + d;
            v0 = v1;
        }
        let _ = t0;
        best.max(run)
    }

    /// Last time at which the value is >= `level`, if ever reached.
    pub fn last_time_at_or_above(&self, level: F) -> Option<F> {
        let mut last = None;
        let mut t0 = F::zero();
        let mut v0 = F::zero();
        for (d, v1) in &self.segments {
            let (d, v1) = (*d, *v1);
            let t1 = t0 + d;
            if v1 >= level {
                last = Some(t1);
            } else if v0 >= level {
                // crosses downward inside the segment
                let tc = d * (v0 - level) / (v0 - v1);
                last = Some(t0 + tc);
            }
            t0 = t1;
            v0 = v1;
        }
        last
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trap() -> PulseWaveform {
        // 30/50/30 ns at 3 V
        PulseWaveform::trapezoid(30e-9, 50e-9, 30e-9, 3.0).unwrap()
    }

    #[test]
    fn value_interpolates() {
        let w = trap();
        assert_eq!(w.value(0.0), 0.0);
        assert!((w.value(15e-9) - 1.5).abs() < 1e-12);
        assert_eq!(w.value(50e-9), 3.0);
        assert!((w.value(95e-9) - 1.5).abs() < 1e-12);
        assert_eq!(w.value(200e-9), 0.0);
        assert!((w.duration() - 110e-9).abs() < 1e-18);
    }

    #[test]
    fn time_above_level() {
        let w = trap();
        // above 2.5 V: last 5 ns of rise + 50 ns width + first 5 ns of fall
        let t = w.max_contiguous_time_at_or_above(2.5);
        assert!((t - 60e-9).abs() < 1e-15, "t = {t}");
        let last = w.last_time_at_or_above(2.5).unwrap();
        assert!((last - 85e-9).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(
            PulseWaveform::<f64>::new(vec![]),
            Err(WaveformError::Empty)
        );
        assert!(matches!(
            PulseWaveform::new(vec![(0.0, 1.0), (1e-9, 0.0)]),
            Err(WaveformError::NonPositiveDuration(0))
        ));
        assert!(matches!(
            PulseWaveform::new(vec![(1e-9, 1.0)]),
            Err(WaveformError::NonZeroEnd(_))
        ));
    }

    #[test]
    fn works_in_f32() {
        let w = PulseWaveform::<f32>::trapezoid(30e-9, 50e-9, 30e-9, 3.0).unwrap();
        assert!((w.value(50e-9) - 3.0).abs() < 1e-6);
    }
}
