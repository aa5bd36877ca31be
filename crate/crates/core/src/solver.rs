//! Transient and steady-state solver for N cells joined at one shared
//! bottom-electrode node with parasitic capacitance and an optional grounded
//! fixed resistor.
//!
//! The node obeys `C_P dV_B/dt = sum_i G_i (V_i - V_B) - G_fix V_B` over the
//! non-floating cells. Integration is implicit (backward) Euler on the single
//! node state with a fixed base step; threshold crossings of the cells are
//! located by bisecting the step.

use std::io::Write as IoWrite;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{CellState, DeviceError, Phase, SwitchEvent};
use crate::scalar::{lit, Scalar};
use crate::waveform::PulseWaveform;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("isolated node: every terminal floating and no fixed resistor")]
    IsolatedNode,
    #[error("implicit step failed to converge after refinement budget")]
    NonConvergence,
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Drive attached to a cell's top electrode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TeDrive<F: Scalar = f64> {
    Waveform(PulseWaveform<F>),
    Grounded,
    Floating,
}

impl<F: Scalar> TeDrive<F> {
    /// Terminal voltage at time `t`; `None` for a floating terminal.
    pub fn voltage(&self, t: F) -> Option<F> {
        match self {
            TeDrive::Waveform(w) => Some(w.value(t)),
            TeDrive::Grounded => Some(F::zero()),
            TeDrive::Floating => None,
        }
    }

    pub fn is_floating(&self) -> bool {
        matches!(self, TeDrive::Floating)
    }
}

/// Bottom-electrode configuration of the shared node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BeMode<F: Scalar = f64> {
    Floating,
    Resistor(F),
}

impl<F: Scalar> BeMode<F> {
    fn g_fix(&self) -> F {
        match self {
            BeMode::Floating => F::zero(),
            BeMode::Resistor(r) => r.recip(),
        }
    }
}

/// One gate circuit: cells, their TE drives, the BE mode and the parasitic
/// capacitance at the shared node.
#[derive(Debug, Clone)]
pub struct CircuitConfig<F: Scalar = f64> {
    pub cells: Vec<CellState<F>>,
    pub drives: Vec<TeDrive<F>>,
    pub be_mode: BeMode<F>,
    pub c_p: F,
}

impl<F: Scalar> CircuitConfig<F> {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.cells.len() < 2 {
            return Err(SolverError::InvalidCircuit(
                "need at least 2 cells".to_string(),
            ));
        }
        if self.cells.len() != self.drives.len() {
            return Err(SolverError::InvalidCircuit(
                "cells and drives length mismatch".to_string(),
            ));
        }
        if let BeMode::Resistor(r) = self.be_mode {
            if r <= F::zero() {
                return Err(SolverError::InvalidCircuit(
                    "r_fix must be > 0".to_string(),
                ));
            }
        }
        if self.c_p < F::zero() {
            return Err(SolverError::InvalidCircuit("c_p must be >= 0".to_string()));
        }
        if matches!(self.be_mode, BeMode::Floating) && self.drives.iter().all(|d| d.is_floating())
        {
            return Err(SolverError::IsolatedNode);
        }
        Ok(())
    }
}

/// Integration policy for `solve_transient`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy<F: Scalar = f64> {
    /// Base step. Must satisfy the device resolution guard dt <= t_delay/4.
    pub dt: F,
    /// Bisection tolerance when locating threshold crossings.
    pub event_tol: F,
    /// Record every k-th committed sample (0 = endpoints only).
    pub record_stride: usize,
    /// Freeze cell state machines (conductances stay constant); used by
    /// linearity checks.
    pub freeze_cells: bool,
}

impl<F: Scalar> Default for StepPolicy<F> {
    fn default() -> Self {
        StepPolicy {
            dt: lit(1e-9),
            event_tol: lit(1e-10),
            record_stride: 1,
            freeze_cells: false,
        }
    }
}

/// Switching event at the circuit level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeEvent<F: Scalar = f64> {
    pub time: F,
    pub cell: usize,
    pub kind: SwitchEvent,
}

/// Recorded time series of a transient solve.
#[derive(Debug, Clone, Default)]
pub struct SimTrace<F: Scalar = f64> {
    pub time: Vec<F>,
    pub v_be: Vec<F>,
    /// Per cell, per sample: voltage across the cell (0 for floating TEs).
    pub cell_v: Vec<Vec<F>>,
    /// Per cell, per sample: small-signal resistance.
    pub cell_r: Vec<Vec<F>>,
    pub events: Vec<NodeEvent<F>>,
}

impl<F: Scalar> SimTrace<F> {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    /// CSV export: `time_s,v_be_V,cell0_v_V,cell0_r_ohm,cell1_v_V,...`
    pub fn write_csv<W: IoWrite>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "time_s,v_be_V")?;
        for i in 0..self.cell_v.len() {
            write!(out, ",cell{i}_v_V,cell{i}_r_ohm")?;
        }
        writeln!(out)?;
        for s in 0..self.time.len() {
            write!(out, "{},{}", self.time[s], self.v_be[s])?;
            for c in 0..self.cell_v.len() {
                write!(out, ",{},{}", self.cell_v[c][s], self.cell_r[c][s])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Events sidecar: JSON list of `{t, cell, kind}`.
    pub fn events_json(&self) -> String {
        let items: Vec<serde_json::Value> = self
            .events
            .iter()
            .map(|e| {
                serde_json::json!({
                    "t": e.time.to_f64(),
                    "cell": e.cell,
                    "kind": match e.kind {
                        SwitchEvent::Threshold => "threshold",
                        SwitchEvent::Set => "set",
                    },
                })
            })
            .collect();
        serde_json::to_string_pretty(&items).expect("serializable")
    }
}

/// Result of a transient solve: trace plus final cell states.
#[derive(Debug, Clone)]
pub struct TransientResult<F: Scalar = f64> {
    pub trace: SimTrace<F>,
    pub cells: Vec<CellState<F>>,
    pub v_be_final: F,
}

/// Closed-form node voltage for frozen terminal voltages and conductances.
///
/// `V_B = sum_i G_i V_i / (sum_i G_i + G_fix)` over non-floating cells
/// (`te_volts[i] = None` marks a floating terminal).
pub fn steady_state_node_voltage<F: Scalar>(
    te_volts: &[Option<F>],
    conductances: &[F],
    be_mode: &BeMode<F>,
) -> Result<F, SolverError> {
    assert_eq!(te_volts.len(), conductances.len());
    let g_fix = be_mode.g_fix();
    let mut num = F::zero();
    let mut den = g_fix;
    let mut any_path = g_fix > F::zero();
    for (v, g) in te_volts.iter().zip(conductances) {
        if let Some(v) = v {
            num = num + *g * *v;
            den = den + *g;
            any_path = true;
        }
    }
    if !any_path || den <= F::zero() {
        return Err(SolverError::IsolatedNode);
    }
    Ok(num / den)
}

struct NodeState<F: Scalar> {
    v_b: F,
    v_across: Vec<Option<F>>,
}

/// Integrate the shared-node circuit for `duration` seconds.
///
/// With `c_p = 0` the solve is quasi-static: the node voltage equals the
/// steady-state divider at every sample. Cell state machines advance with
/// the per-cell voltages; all switching events are timestamped.
pub fn solve_transient<F: Scalar>(
    config: &CircuitConfig<F>,
    duration: F,
    policy: &StepPolicy<F>,
) -> Result<TransientResult<F>, SolverError> {
    config.validate()?;
    if duration <= F::zero() {
        return Err(SolverError::InvalidCircuit(
            "duration must be > 0".to_string(),
        ));
    }
    if policy.dt <= F::zero() {
        return Err(SolverError::InvalidCircuit("dt must be > 0".to_string()));
    }
    for cell in &config.cells {
        if policy.dt > cell.params.t_delay / lit(4.0) {
            return Err(SolverError::Device(DeviceError::ResolutionTooCoarse {
                dt: policy.dt.to_f64().unwrap_or(f64::NAN),
                max: (cell.params.t_delay / lit(4.0)).to_f64().unwrap_or(f64::NAN),
            }));
        }
    }

    let n = config.cells.len();
    let mut cells = config.cells.clone();
    let g_fix = config.be_mode.g_fix();
    let mut trace = SimTrace {
        cell_v: vec![Vec::new(); n],
        cell_r: vec![Vec::new(); n],
        ..Default::default()
    };

    let eval = |cells: &[CellState<F>], v_b_prev: F, t_end: F, dt: F| -> Result<NodeState<F>, SolverError> {
        let mut num = F::zero();
        let mut den = g_fix;
        let mut te = vec![None; n];
        for i in 0..n {
            if let Some(v) = config.drives[i].voltage(t_end) {
                let g = cells[i].conductance();
                num = num + g * v;
                den = den + g;
                te[i] = Some(v);
            }
        }
        let v_b = if config.c_p == F::zero() {
            if den <= F::zero() {
                return Err(SolverError::IsolatedNode);
            }
            num / den
        } else {
            let a = config.c_p / dt;
            (a * v_b_prev + num) / (a + den)
        };
        let v_across = te
            .iter()
            .map(|v| v.map(|v| v - v_b))
            .collect();
        Ok(NodeState { v_b, v_across })
    };

    // a cell's set dynamics change behavior when |v| crosses v_th (waiting
    // for ON) or v_hold (holding ON)
    let boundary = |cell: &CellState<F>| -> Option<F> {
        if cell.phase == Phase::Crystalline {
            None
        } else if cell.dynamic_on {
            Some(cell.params.v_hold)
        } else {
            Some(cell.params.v_th)
        }
    };
    let crosses = |cells: &[CellState<F>], prev: &[Option<F>], next: &[Option<F>]| -> bool {
        (0..n).any(|i| match (boundary(&cells[i]), prev[i], next[i]) {
            (Some(b), Some(p), Some(q)) => (p.abs() >= b) != (q.abs() >= b),
            _ => false,
        })
    };

    let mut t = F::zero();
    // initial condition: the steady state of the initial drives (all
    // waveforms start at 0 V, so this is 0 for fully pulsed circuits)
    let init = eval(&cells, F::zero(), F::zero(), lit(1.0))?;
    let mut v_b = if config.c_p == F::zero() {
        init.v_b
    } else {
        // with c_p > 0 the capacitor sets the initial node voltage; start
        // discharged unless a DC drive pins it, which eval covers via the
        // implicit form below. Pulses start at 0 V so 0 is the consistent IC.
        F::zero()
    };
    let mut v_prev: Vec<Option<F>> = (0..n)
        .map(|i| config.drives[i].voltage(F::zero()).map(|v| v - v_b))
        .collect();

    let record =
        |trace: &mut SimTrace<F>, t: F, v_b: F, v_across: &[Option<F>], cells: &[CellState<F>]| {
            trace.time.push(t);
            trace.v_be.push(v_b);
            for i in 0..n {
                trace.cell_v[i].push(v_across[i].unwrap_or(F::zero()));
                trace.cell_r[i].push(cells[i].conductance().recip());
            }
        };
    record(&mut trace, t, v_b, &v_prev, &cells);

    let mut committed: usize = 0;
    let two = lit::<F>(2.0);
    while t < duration {
        let mut remaining = policy.dt.min(duration - t);
        while remaining > F::zero() {
            let full = eval(&cells, v_b, t + remaining, remaining)?;
            let mut commit_dt = remaining;
            let mut commit_state = full;
            if crosses(&cells, &v_prev, &commit_state.v_across) && remaining > policy.event_tol {
                // bisect for the largest prefix of the step with no crossing
                let mut lo = F::zero();
                let mut hi = remaining;
                let mut budget = 200;
                while hi - lo > policy.event_tol {
                    if budget == 0 {
                        return Err(SolverError::NonConvergence);
                    }
                    budget -= 1;
                    let mid = (lo + hi) / two;
                    if mid <= F::zero() || mid >= remaining {
                        break;
                    }
                    let probe = eval(&cells, v_b, t + mid, mid)?;
                    if crosses(&cells, &v_prev, &probe.v_across) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                if lo > F::zero() {
                    // commit the crossing-free prefix first
                    commit_dt = lo;
                    commit_state = eval(&cells, v_b, t + lo, lo)?;
                } else {
                    // crossing at the very start: take one tolerance-sized
                    // step across it
                    commit_dt = policy.event_tol.min(remaining);
                    commit_state = eval(&cells, v_b, t + commit_dt, commit_dt)?;
                }
            }

            if !policy.freeze_cells {
                for i in 0..n {
                    if let Some(v) = commit_state.v_across[i] {
                        for ev in cells[i].step(v, commit_dt)? {
                            trace.events.push(NodeEvent {
                                time: t + ev.offset,
                                cell: i,
                                kind: ev.kind,
                            });
                        }
                    }
                }
            }
            v_b = commit_state.v_b;
            t = t + commit_dt;
            v_prev = commit_state.v_across;
            remaining = remaining - commit_dt;
            committed += 1;
            let at_end = t >= duration;
            if (policy.record_stride > 0 && committed % policy.record_stride == 0) || at_end {
                record(&mut trace, t, v_b, &v_prev, &cells);
            }
        }
    }

    Ok(TransientResult {
        trace,
        cells,
        v_be_final: v_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceParams;

    fn hrs_cell() -> CellState {
        CellState::amorphous(DeviceParams::default())
    }

    fn lrs_cell() -> CellState {
        CellState::crystalline(DeviceParams::default())
    }

    #[test]
    fn two_resistor_divider() {
        // single driven cell against a grounded cell, floating BE
        let v = steady_state_node_voltage::<f64>(
            &[Some(1.0), Some(0.0)],
            &[1e-4, 1e-4],
            &BeMode::Floating,
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_is_an_error() {
        let err = steady_state_node_voltage::<f64>(&[None, None], &[1e-4, 1e-4], &BeMode::Floating);
        assert_eq!(err, Err(SolverError::IsolatedNode));
        // a fixed resistor is a path even with all TEs floating
        let v = steady_state_node_voltage::<f64>(
            &[None, None],
            &[1e-4, 1e-4],
            &BeMode::Resistor(10e3),
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn kcl_residual_is_tiny() {
        let te = [Some(1.2), Some(0.6), None, Some(0.0)];
        let g = [1e-6, 2e-4, 1e-5, 1e-4];
        let be = BeMode::Resistor(10e3);
        let v_b = steady_state_node_voltage::<f64>(&te, &g, &be).unwrap();
        let mut residual = -v_b / 10e3;
        for (v, g) in te.iter().zip(&g) {
            if let Some(v) = v {
                residual += g * (v - v_b);
            }
        }
        assert!(residual.abs() < 1e-12 * v_b.abs().max(1.0));
    }

    #[test]
    fn quasi_static_matches_steady_state() {
        let w = PulseWaveform::trapezoid(10e-9, 200e-9, 10e-9, 0.5).unwrap();
        let config = CircuitConfig {
            cells: vec![hrs_cell(), lrs_cell()],
            drives: vec![TeDrive::Waveform(w), TeDrive::Grounded],
            be_mode: BeMode::Resistor(10e3),
            c_p: 0.0,
        };
        let res = solve_transient(&config, 250e-9, &StepPolicy::default()).unwrap();
        for (idx, t) in res.trace.time.iter().enumerate() {
            let te0 = config.drives[0].voltage(*t).unwrap();
            let expected = steady_state_node_voltage(
                &[Some(te0), Some(0.0)],
                &[1e-6, 2e-4],
                &config.be_mode,
            )
            .unwrap();
            assert!(
                (res.trace.v_be[idx] - expected).abs() < 1e-12,
                "t={t} v={} expected={expected}",
                res.trace.v_be[idx]
            );
        }
        assert!(res.trace.events.is_empty());
    }

    #[test]
    fn small_cp_converges_to_quasi_static() {
        let w = PulseWaveform::trapezoid(50e-9, 200e-9, 50e-9, 0.5).unwrap();
        let mk = |c_p: f64| CircuitConfig {
            cells: vec![hrs_cell(), lrs_cell()],
            drives: vec![TeDrive::Waveform(w.clone()), TeDrive::Grounded],
            be_mode: BeMode::Resistor(10e3),
            c_p,
        };
        let a = solve_transient(&mk(0.0), 300e-9, &StepPolicy::default()).unwrap();
        let b = solve_transient(&mk(1e-15), 300e-9, &StepPolicy::default()).unwrap();
        let max_dv = a
            .trace
            .v_be
            .iter()
            .zip(&b.trace.v_be)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dv < 1e-3, "max dv = {max_dv}");
    }

    #[test]
    fn rc_charging_follows_analytic_solution() {
        // Constant-conductance circuit: two frozen HRS cells, one driven
        // with a fast step to 1 V, BE floating. tau = c_p / (g1 + g2).
        let w = PulseWaveform::new(vec![(1e-9, 1.0), (5e-6, 1.0), (1e-9, 0.0)]).unwrap();
        let c_p = 100e-12;
        let config = CircuitConfig {
            cells: vec![hrs_cell(), hrs_cell()],
            drives: vec![TeDrive::Waveform(w), TeDrive::Grounded],
            be_mode: BeMode::Floating,
            c_p,
        };
        let policy = StepPolicy {
            freeze_cells: true,
            ..Default::default()
        };
        let res = solve_transient(&config, 4e-6, &policy).unwrap();
        let tau = c_p / 2e-6;
        // compare at t = 2 us (well after the 1 ns rise)
        let idx = res
            .trace
            .time
            .iter()
            .position(|t| *t >= 2e-6)
            .unwrap();
        let t = res.trace.time[idx];
        let expected = 0.5 * (1.0 - (-(t - 1e-9) / tau).exp());
        let got = res.trace.v_be[idx];
        // backward Euler at dt = tau/50: ~1% local error is expected
        assert!((got - expected).abs() < 0.01, "got {got} expected {expected}");
    }

    #[test]
    fn superposition_on_frozen_conductances() {
        let mk = |a1: f64, a2: f64| {
            let w1 = PulseWaveform::trapezoid(10e-9, 100e-9, 10e-9, a1).unwrap();
            let w2 = PulseWaveform::trapezoid(10e-9, 100e-9, 10e-9, a2).unwrap();
            CircuitConfig {
                cells: vec![hrs_cell(), lrs_cell(), hrs_cell()],
                drives: vec![TeDrive::Waveform(w1), TeDrive::Waveform(w2), TeDrive::Grounded],
                be_mode: BeMode::Resistor(10e3),
                c_p: 1e-12,
            }
        };
        let policy = StepPolicy {
            freeze_cells: true,
            ..Default::default()
        };
        let a = solve_transient(&mk(0.7, 0.0), 150e-9, &policy).unwrap();
        let b = solve_transient(&mk(0.0, 0.4), 150e-9, &policy).unwrap();
        let ab = solve_transient(&mk(0.7, 0.4), 150e-9, &policy).unwrap();
        for i in 0..a.trace.len() {
            let lin = a.trace.v_be[i] + b.trace.v_be[i];
            assert!((ab.trace.v_be[i] - lin).abs() < 1e-12);
        }
    }

    #[test]
    fn set_event_is_preceded_by_threshold_event() {
        // Drive an HRS cell hard against a grounded LRS companion.
        let w = PulseWaveform::trapezoid(10e-9, 2e-6, 10e-9, 2.2).unwrap();
        let config = CircuitConfig {
            cells: vec![hrs_cell(), lrs_cell()],
            drives: vec![TeDrive::Waveform(w), TeDrive::Grounded],
            be_mode: BeMode::Floating,
            c_p: 0.0,
        };
        let res = solve_transient(&config, 2.1e-6, &StepPolicy::default()).unwrap();
        let ev: Vec<_> = res.trace.events.iter().filter(|e| e.cell == 0).collect();
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].kind, SwitchEvent::Threshold);
        assert_eq!(ev[1].kind, SwitchEvent::Set);
        assert!(ev[0].time < ev[1].time);
        assert_eq!(res.cells[0].phase, Phase::Crystalline);
    }

    #[test]
    fn floating_cells_carry_no_current_and_report_zero_volts() {
        let w = PulseWaveform::trapezoid(10e-9, 100e-9, 10e-9, 0.6).unwrap();
        let config = CircuitConfig {
            cells: vec![hrs_cell(), hrs_cell(), lrs_cell()],
            drives: vec![
                TeDrive::Waveform(w),
                TeDrive::Floating,
                TeDrive::Grounded,
            ],
            be_mode: BeMode::Floating,
            c_p: 0.0,
        };
        let res = solve_transient(&config, 150e-9, &StepPolicy::default()).unwrap();
        assert!(res.trace.cell_v[1].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn energy_is_never_created() {
        // capacitor energy change <= integral of source power
        let w = PulseWaveform::trapezoid(100e-9, 1e-6, 100e-9, 1.0).unwrap();
        let config = CircuitConfig {
            cells: vec![hrs_cell(), hrs_cell()],
            drives: vec![TeDrive::Waveform(w.clone()), TeDrive::Grounded],
            be_mode: BeMode::Resistor(10e3),
            c_p: 50e-12,
        };
        let policy = StepPolicy {
            freeze_cells: true,
            ..Default::default()
        };
        let res = solve_transient(&config, 1.3e-6, &policy).unwrap();
        let tr = &res.trace;
        let mut source_energy = 0.0;
        for i in 1..tr.len() {
            let dt = tr.time[i] - tr.time[i - 1];
            let te = w.value(tr.time[i]);
            let i_src = tr.cell_v[0][i] / tr.cell_r[0][i];
            source_energy += te * i_src * dt;
        }
        let c = config.c_p;
        let de = 0.5 * c * tr.v_be.last().unwrap().powi(2) - 0.5 * c * tr.v_be[0].powi(2);
        assert!(de <= source_energy + 1e-18, "de={de} src={source_energy}");
    }

    #[test]
    fn trace_time_strictly_increases() {
        let w = PulseWaveform::trapezoid(10e-9, 500e-9, 10e-9, 1.4).unwrap();
        let config = CircuitConfig {
            cells: vec![hrs_cell(), lrs_cell()],
            drives: vec![TeDrive::Waveform(w), TeDrive::Grounded],
            be_mode: BeMode::Floating,
            c_p: 1e-12,
        };
        let res = solve_transient(&config, 600e-9, &StepPolicy::default()).unwrap();
        for i in 1..res.trace.len() {
            assert!(res.trace.time[i] > res.trace.time[i - 1]);
        }
    }

    #[test]
    fn f32_solver_smoke() {
        let w = PulseWaveform::<f32>::trapezoid(10e-9, 100e-9, 10e-9, 0.5).unwrap();
        let config = CircuitConfig::<f32> {
            cells: vec![
                CellState::amorphous(DeviceParams::default()),
                CellState::crystalline(DeviceParams::default()),
            ],
            drives: vec![TeDrive::Waveform(w), TeDrive::Grounded],
            be_mode: BeMode::Resistor(10e3),
            c_p: 0.0,
        };
        let res = solve_transient(&config, 130e-9, &StepPolicy::<f32>::default()).unwrap();
        assert!(res.trace.len() > 100);
    }
}
