//! Behavioral model of a single confined PCM cell.
//!
//! The cell is a two-phase state machine (amorphous / crystalline) with an
//! Ovonic ON state in between: when an amorphous cell sees a voltage above
//! `v_th` for `t_delay` it snaps into a low-resistance dynamic ON state, and
//! once it has spent `t_cryst` in that state above `v_hold` it crystallizes.
//! Dropping below `v_hold` before that reverts the cell to the amorphous
//! phase with no partial states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Scalar};
use crate::waveform::PulseWaveform;

#[derive(Debug, Error, PartialEq)]
pub enum DeviceError {
    #[error("step dt {dt} outside (0, t_delay/4 = {max}]")]
    ResolutionTooCoarse { dt: f64, max: f64 },
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}

/// Phase of the chalcogenide volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Crystalline,
    Amorphous,
}

/// Logic interpretation of a read resistance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogicLevel {
    Zero,
    One,
    Indeterminate,
}

impl LogicLevel {
    pub fn as_bit(self) -> Option<bool> {
        match self {
            LogicLevel::Zero => Some(false),
            LogicLevel::One => Some(true),
            LogicLevel::Indeterminate => None,
        }
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            LogicLevel::One
        } else {
            LogicLevel::Zero
        }
    }
}

/// HRS band edge: resistance at or above this reads as logical 0.
pub const HRS_MIN_OHMS: f64 = 100e3;
/// LRS band edge: resistance at or below this reads as logical 1.
pub const LRS_MAX_OHMS: f64 = 10e3;

/// Map a resistance to a logic value using the default read bands.
pub fn logic_value<F: Scalar>(resistance: F) -> LogicLevel {
    logic_value_in(resistance, lit(LRS_MAX_OHMS), lit(HRS_MIN_OHMS))
}

/// Map a resistance to a logic value using explicit band edges.
pub fn logic_value_in<F: Scalar>(resistance: F, lrs_max: F, hrs_min: F) -> LogicLevel {
    debug_assert!(resistance > F::zero());
    if resistance >= hrs_min {
        LogicLevel::Zero
    } else if resistance <= lrs_max {
        LogicLevel::One
    } else {
        LogicLevel::Indeterminate
    }
}

/// Physical parameters of one cell. All voltages in volts, resistances in
/// ohms, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams<F: Scalar = f64> {
    /// Threshold-switching voltage of the amorphous phase.
    pub v_th: F,
    /// Crystalline (LRS) resistance.
    pub r_lrs: F,
    /// Amorphous (HRS) resistance.
    pub r_hrs: F,
    /// Dynamic ON-state resistance during threshold switching.
    pub r_on: F,
    /// Minimum voltage that sustains the ON state.
    pub v_hold: F,
    /// Time above `v_th` before the ON state engages.
    pub t_delay: F,
    /// Cumulative ON-state time to complete crystallization.
    pub t_cryst: F,
    /// Cell voltage required to melt.
    pub v_reset: F,
    /// Time at or above `v_reset` required to melt.
    pub t_melt: F,
    /// Maximum fall time that still quenches into the amorphous phase.
    pub t_quench_max: F,
    /// Guaranteed non-disturbing read amplitude.
    pub v_read_max: F,
}

impl<F: Scalar> Default for DeviceParams<F> {
    fn default() -> Self {
        DeviceParams {
            v_th: lit(1.0),
            r_lrs: lit(5e3),
            r_hrs: lit(1e6),
            r_on: lit(4e3),
            v_hold: lit(0.3),
            t_delay: lit(100e-9),
            t_cryst: lit(400e-9),
            v_reset: lit(2.5),
            t_melt: lit(20e-9),
            t_quench_max: lit(100e-9),
            v_read_max: lit(0.25),
        }
    }
}

impl<F: Scalar> DeviceParams<F> {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |msg: &str| Err(DeviceError::InvalidParams(msg.to_string()));
        if !(self.r_on < self.r_lrs && self.r_lrs < self.r_hrs) {
            return bad("need r_on < r_lrs < r_hrs");
        }
        if !(F::zero() < self.v_hold && self.v_hold < self.v_th && self.v_th < self.v_reset) {
            return bad("need 0 < v_hold < v_th < v_reset");
        }
        for (t, name) in [
            (self.t_delay, "t_delay"),
            (self.t_cryst, "t_cryst"),
            (self.t_melt, "t_melt"),
            (self.t_quench_max, "t_quench_max"),
        ] {
            if t <= F::zero() {
                return bad(&format!("{name} must be > 0"));
            }
        }
        if !(F::zero() < self.v_read_max && self.v_read_max < self.v_hold) {
            return bad("need 0 < v_read_max < v_hold");
        }
        Ok(())
    }
}

/// Switching events emitted while stepping a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchEvent {
    /// ON-state entry (Ovonic threshold switching).
    Threshold,
    /// Crystallization completed; the cell is now LRS.
    Set,
}

/// Event with its time offset inside the step that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedEvent<F: Scalar = f64> {
    pub offset: F,
    pub kind: SwitchEvent,
}

/// State of one PCM cell. Plain value; all operations are state-in/state-out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState<F: Scalar = f64> {
    pub phase: Phase,
    /// Ovonic ON state currently active (amorphous phase only).
    pub dynamic_on: bool,
    /// Accumulated ON-state time toward `t_cryst`.
    pub cryst_progress: F,
    /// Number of completed set events (endurance counter).
    pub switch_count: u64,
    pub params: DeviceParams<F>,
    /// Continuous time spent at or above `v_th` (ON-delay timer).
    above_th_time: F,
}

impl<F: Scalar> CellState<F> {
    pub fn new(phase: Phase, params: DeviceParams<F>) -> Self {
        CellState {
            phase,
            dynamic_on: false,
            cryst_progress: F::zero(),
            switch_count: 0,
            params,
            above_th_time: F::zero(),
        }
    }

    pub fn amorphous(params: DeviceParams<F>) -> Self {
        Self::new(Phase::Amorphous, params)
    }

    pub fn crystalline(params: DeviceParams<F>) -> Self {
        Self::new(Phase::Crystalline, params)
    }

    /// Build a cell holding the given logic value at nominal resistances.
    pub fn with_bit(bit: bool, params: DeviceParams<F>) -> Self {
        if bit {
            Self::crystalline(params)
        } else {
            Self::amorphous(params)
        }
    }

    /// Instantaneous small-signal conductance seen by the nodal solver.
    pub fn conductance(&self) -> F {
        if self.dynamic_on {
            self.params.r_on.recip()
        } else {
            match self.phase {
                Phase::Crystalline => self.params.r_lrs.recip(),
                Phase::Amorphous => self.params.r_hrs.recip(),
            }
        }
    }

    /// DC read resistance (non-destructive; the ON state never survives a
    /// read because read amplitudes are below `v_hold`).
    pub fn read_resistance(&self) -> F {
        match self.phase {
            Phase::Crystalline => self.params.r_lrs,
            Phase::Amorphous => self.params.r_hrs,
        }
    }

    pub fn logic_value(&self) -> LogicLevel {
        logic_value(self.read_resistance())
    }

    /// Advance the set-dynamics state machine by `dt` with a constant cell
    /// voltage `v_across`. Returns the events fired inside the step with
    /// their offsets from the step start.
    pub fn step(&mut self, v_across: F, dt: F) -> Result<Vec<TimedEvent<F>>, DeviceError> {
        let max_dt = self.params.t_delay / lit(4.0);
        if dt <= F::zero() || dt > max_dt {
            return Err(DeviceError::ResolutionTooCoarse {
                dt: dt.to_f64().unwrap_or(f64::NAN),
                max: max_dt.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mut events = Vec::new();
        if self.phase == Phase::Crystalline {
            // unaffected by sub-melt voltages; melting is modeled only by
            // apply_reset_pulse
            return Ok(events);
        }
        let va = v_across.abs();
        if self.dynamic_on {
            if va >= self.params.v_hold {
                self.accumulate_cryst(dt, F::zero(), &mut events);
            } else {
                // incomplete set reverts fully to HRS
                self.dynamic_on = false;
                self.cryst_progress = F::zero();
                self.above_th_time = F::zero();
            }
        } else if va >= self.params.v_th {
            let before = self.above_th_time;
            self.above_th_time = before + dt;
            if self.above_th_time >= self.params.t_delay {
                let on_offset = self.params.t_delay - before;
                self.dynamic_on = true;
                events.push(TimedEvent {
                    offset: on_offset,
                    kind: SwitchEvent::Threshold,
                });
                let rem = dt - on_offset;
                if rem > F::zero() && va >= self.params.v_hold {
                    self.accumulate_cryst(rem, on_offset, &mut events);
                }
            }
        } else {
            self.above_th_time = F::zero();
        }
        Ok(events)
    }

    fn accumulate_cryst(&mut self, dt: F, base_offset: F, events: &mut Vec<TimedEvent<F>>) {
        let before = self.cryst_progress;
        self.cryst_progress = before + dt;
        if self.cryst_progress >= self.params.t_cryst {
            let offset = base_offset + (self.params.t_cryst - before);
            self.phase = Phase::Crystalline;
            self.dynamic_on = false;
            self.cryst_progress = F::zero();
            self.above_th_time = F::zero();
            self.switch_count += 1;
            events.push(TimedEvent {
                offset,
                kind: SwitchEvent::Set,
            });
        }
    }

    /// Apply a full waveform across the cell, stepping the set dynamics at
    /// resolution `dt`. Used for direct programming (set pulses) and single
    /// cell characterization.
    pub fn apply_waveform(
        &mut self,
        w: &PulseWaveform<F>,
        dt: F,
    ) -> Result<Vec<TimedEvent<F>>, DeviceError> {
        let mut events = Vec::new();
        let total = w.duration();
        let mut t = F::zero();
        while t < total {
            let step_dt = dt.min(total - t);
            let v = w.value(t + step_dt);
            let t_before = t;
            for ev in self.step(v, step_dt)? {
                events.push(TimedEvent {
                    offset: t_before + ev.offset,
                    kind: ev.kind,
                });
            }
            t = t + step_dt;
        }
        Ok(events)
    }

    /// Apply a reset-shaped pulse. Melting requires the cell voltage to stay
    /// at or above `v_reset` for at least `t_melt`; a quench faster than
    /// `t_quench_max` amorphizes, a slower fall recrystallizes.
    pub fn apply_reset_pulse(&mut self, w: &PulseWaveform<F>) -> &mut Self {
        let melt_time = w.max_contiguous_time_at_or_above(self.params.v_reset);
        if melt_time >= self.params.t_melt {
            let t_last = w
                .last_time_at_or_above(self.params.v_reset)
                .expect("melt time positive implies level reached");
            let quench = w.duration() - t_last;
            self.phase = if quench <= self.params.t_quench_max {
                Phase::Amorphous
            } else {
                Phase::Crystalline
            };
            self.dynamic_on = false;
            self.cryst_progress = F::zero();
            self.above_th_time = F::zero();
        }
        self
    }
}
