//! The four stateful gates (NOR, IMPLY, OR, NIMP): terminal configurations,
//! pulse schemes, circuit-level execution via the shared-node solver, and
//! the pure Boolean accumulation semantics they implement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{logic_value, CellState, DeviceError, LogicLevel};
use crate::solver::{
    solve_transient, BeMode, CircuitConfig, NodeEvent, SimTrace, SolverError, StepPolicy, TeDrive,
};
use crate::waveform::PulseWaveform;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("output cell must be initialized to HRS before a non-destructive gate")]
    OutputNotInitialized,
    #[error("cell {0} starts between the resistance bands")]
    IndeterminateState(usize),
    #[error("write-verify failed after {attempts} attempts")]
    VerifyFailed { attempts: u32 },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// The native gate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Nor,
    Imply,
    Or,
    Nimp,
}

impl GateKind {
    pub const ALL: [GateKind; 4] = [GateKind::Nor, GateKind::Imply, GateKind::Or, GateKind::Nimp];

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Nor => "NOR",
            GateKind::Imply => "IMPLY",
            GateKind::Or => "OR",
            GateKind::Nimp => "NIMP",
        }
    }

    pub fn parse(s: &str) -> Option<GateKind> {
        match s.to_ascii_uppercase().as_str() {
            "NOR" => Some(GateKind::Nor),
            "IMPLY" => Some(GateKind::Imply),
            "OR" => Some(GateKind::Or),
            "NIMP" => Some(GateKind::Nimp),
            _ => None,
        }
    }

    /// IMPLY reads OUT as its second operand and overwrites it.
    pub fn is_destructive(self) -> bool {
        matches!(self, GateKind::Imply)
    }

    /// Number of explicit input operands (IMPLY takes one; OUT is the other).
    pub fn input_arity(self) -> usize {
        match self {
            GateKind::Imply => 1,
            _ => 2,
        }
    }
}

/// Applied voltage levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateLevels {
    /// Set amplitude applied to the driving terminal.
    pub v_app: f64,
    /// Half-select level for NOR/IMPLY inputs.
    pub v_half: f64,
    /// TE_IN2 level for NIMP. Defaults to the idealized v_app/3; anything
    /// much lower lets an HRS IN1 cell see more than `v_th` when IN2 and an
    /// already-set OUT are both LRS (the XOR accumulation corner).
    pub v_in2_nimp: f64,
}

impl Default for GateLevels {
    fn default() -> Self {
        GateLevels {
            v_app: 1.2,
            v_half: 0.6,
            v_in2_nimp: 0.4,
        }
    }
}

/// Pulse-scheme timing knobs.
///
/// NOR/IMPLY use a two-part pulse (all terminals at `v_half` for `settle`,
/// then OUT raised to `v_app` for `evaluate`); OR/NIMP use a single pulse
/// with a long `rise` and a `hold` plateau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateTimings {
    pub edge: f64,
    pub settle: f64,
    pub evaluate: f64,
    pub rise: f64,
    pub hold: f64,
    pub fall: f64,
    /// Zero-volt tail simulated after the pulses end.
    pub tail: f64,
}

impl Default for GateTimings {
    fn default() -> Self {
        GateTimings {
            edge: 10e-9,
            settle: 3e-6,
            evaluate: 1e-6,
            rise: 70e-6,
            hold: 1e-6,
            fall: 1e-6,
            tail: 0.2e-6,
        }
    }
}

impl GateTimings {
    /// Short settle and ramp times, adequate once the shared-node
    /// capacitance drops to on-chip values (fF instead of the tens of pF of
    /// a probe-station setup). The evaluate/hold plateaus keep their full
    /// length: crystallization still needs `t_delay + t_cryst`.
    pub fn fast() -> Self {
        GateTimings {
            edge: 10e-9,
            settle: 200e-9,
            evaluate: 1e-6,
            rise: 100e-9,
            hold: 1e-6,
            fall: 100e-9,
            tail: 0.1e-6,
        }
    }
}

/// Everything needed to run a gate at circuit level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSetup {
    pub levels: GateLevels,
    pub timings: GateTimings,
    pub r_fix: f64,
    pub c_p: f64,
    pub dt: f64,
    pub event_tol: f64,
    pub record_stride: usize,
}

impl Default for GateSetup {
    fn default() -> Self {
        GateSetup {
            levels: GateLevels::default(),
            timings: GateTimings::default(),
            r_fix: 10e3,
            // Probe-station parasitics. Large enough that a 10 ns edge holds
            // an all-HRS output above v_th past t_delay (the spurious
            // threshold-switching hazard the slow ramp exists to avoid), but
            // small enough that such a transient ON window stays well under
            // t_cryst: a spurious event reverts instead of crystallizing,
            // which also keeps the 70 us ramp robust under device spread.
            c_p: 20e-12,
            dt: 1e-9,
            event_tol: 0.1e-9,
            record_stride: 1,
        }
    }
}

impl GateSetup {
    /// Fast timings, 10 fF node capacitance, no trace recording.
    pub fn fast() -> Self {
        GateSetup {
            timings: GateTimings::fast(),
            c_p: 10e-15,
            record_stride: 0,
            ..Default::default()
        }
    }

    pub fn policy(&self) -> StepPolicy {
        StepPolicy {
            dt: self.dt,
            event_tol: self.event_tol,
            record_stride: self.record_stride,
            freeze_cells: false,
        }
    }
}

/// Static drive applied to one top electrode during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TerminalSpec {
    /// Pulsed at the given plateau amplitude.
    Pulse { amplitude: f64 },
    Grounded,
    Floating,
}

/// Terminal configuration of one gate kind (one row of the voltage /
/// configuration summary).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub kind: GateKind,
    pub te_in1: TerminalSpec,
    pub te_in2: TerminalSpec,
    pub te_out: TerminalSpec,
    pub be_mode: BeMode,
    /// OUT must be HRS before the gate fires (all kinds except IMPLY, where
    /// OUT doubles as an operand).
    pub requires_out_init: bool,
    pub destructive: bool,
}

/// Terminal configuration for a gate kind at the given levels.
pub fn gate_config_with(kind: GateKind, levels: &GateLevels, r_fix: f64) -> GateConfig {
    let pulse = |amplitude: f64| TerminalSpec::Pulse { amplitude };
    match kind {
        GateKind::Nor => GateConfig {
            kind,
            te_in1: pulse(levels.v_half),
            te_in2: pulse(levels.v_half),
            te_out: pulse(levels.v_app),
            be_mode: BeMode::Resistor(r_fix),
            requires_out_init: true,
            destructive: false,
        },
        GateKind::Imply => GateConfig {
            kind,
            te_in1: pulse(levels.v_half),
            te_in2: TerminalSpec::Floating,
            te_out: pulse(levels.v_app),
            be_mode: BeMode::Resistor(r_fix),
            requires_out_init: false,
            destructive: true,
        },
        GateKind::Or => GateConfig {
            kind,
            te_in1: TerminalSpec::Grounded,
            te_in2: TerminalSpec::Grounded,
            te_out: pulse(levels.v_app),
            be_mode: BeMode::Floating,
            requires_out_init: true,
            destructive: false,
        },
        GateKind::Nimp => GateConfig {
            kind,
            te_in1: pulse(levels.v_app),
            te_in2: pulse(levels.v_in2_nimp),
            te_out: TerminalSpec::Grounded,
            be_mode: BeMode::Floating,
            requires_out_init: true,
            destructive: false,
        },
    }
}

/// Terminal configuration at the default levels and 10 kOhm fixed resistor.
pub fn gate_config(kind: GateKind) -> GateConfig {
    gate_config_with(kind, &GateLevels::default(), 10e3)
}

/// Plateau voltage of each terminal during the evaluation phase
/// (`None` = floating). Used by margin analysis.
pub fn plateau_voltages(config: &GateConfig) -> [Option<f64>; 3] {
    [config.te_in1, config.te_in2, config.te_out].map(|t| match t {
        TerminalSpec::Pulse { amplitude } => Some(amplitude),
        TerminalSpec::Grounded => Some(0.0),
        TerminalSpec::Floating => None,
    })
}

/// Build the per-terminal drive waveforms and the solve duration.
pub fn gate_drives(config: &GateConfig, timings: &GateTimings) -> (Vec<TeDrive>, f64) {
    let two_part = |first: f64, second: f64| {
        PulseWaveform::new(vec![
            (timings.edge, first),
            (timings.settle, first),
            (timings.edge, second),
            (timings.evaluate, second),
            (timings.edge, 0.0),
        ])
        .expect("valid two-part pulse")
    };
    let ramp = |amplitude: f64| {
        PulseWaveform::new(vec![
            (timings.rise, amplitude),
            (timings.hold, amplitude),
            (timings.fall, 0.0),
        ])
        .expect("valid ramp pulse")
    };
    let two_part_gate = matches!(config.kind, GateKind::Nor | GateKind::Imply);
    let drive = |spec: TerminalSpec, is_out: bool| match spec {
        TerminalSpec::Grounded => TeDrive::Grounded,
        TerminalSpec::Floating => TeDrive::Floating,
        TerminalSpec::Pulse { amplitude } => {
            if two_part_gate {
                // inputs stay at their level through both parts; OUT is
                // raised for the evaluate window
                if is_out {
                    TeDrive::Waveform(two_part(amplitude / 2.0, amplitude))
                } else {
                    TeDrive::Waveform(two_part(amplitude, amplitude))
                }
            } else {
                TeDrive::Waveform(ramp(amplitude))
            }
        }
    };
    let drives = vec![
        drive(config.te_in1, false),
        drive(config.te_in2, false),
        drive(config.te_out, true),
    ];
    let pulse_len = drives
        .iter()
        .filter_map(|d| match d {
            TeDrive::Waveform(w) => Some(w.duration()),
            _ => None,
        })
        .fold(0.0f64, f64::max);
    (drives, pulse_len + timings.tail)
}

/// Pure Boolean semantics: `out_new = out_old | f(inputs)`.
///
/// `f` is NOR / OR / NIMP of `(in1, in2)`, or NOT of `in1` for IMPLY (whose
/// second operand is `out_old` itself).
pub fn execute_gate_functional(
    kind: GateKind,
    in1: bool,
    in2: Option<bool>,
    out_old: bool,
) -> bool {
    let f = match kind {
        GateKind::Nor => !in1 && !in2.expect("NOR takes two inputs"),
        GateKind::Imply => {
            debug_assert!(in2.is_none(), "IMPLY takes no in2");
            !in1
        }
        GateKind::Or => in1 || in2.expect("OR takes two inputs"),
        GateKind::Nimp => in1 && !in2.expect("NIMP takes two inputs"),
    };
    out_old || f
}

/// Outcome of one circuit-level gate evaluation.
#[derive(Debug, Clone)]
pub struct GateResult {
    pub kind: GateKind,
    pub output: LogicLevel,
    pub out_old: LogicLevel,
    pub pre_resistance: Vec<f64>,
    pub post_resistance: Vec<f64>,
    /// max_i |r_post - r_pre| / r_pre over the input cells
    pub max_input_drift: f64,
    pub input_logic_preserved: bool,
    pub trace: SimTrace,
    pub events: Vec<NodeEvent>,
    pub cells_after: Vec<CellState>,
}

/// Indices of the operand input cells within [in1, in2, out].
fn input_indices(kind: GateKind) -> &'static [usize] {
    match kind {
        GateKind::Imply => &[0],
        _ => &[0, 1],
    }
}

/// Run one gate at circuit level on three cells ordered [in1, in2, out].
///
/// `allow_uninitialized_out` skips the OUT = HRS precondition (used for the
/// accumulation semantics on the crossbar and for destructive IMPLY runs).
pub fn execute_gate_circuit(
    kind: GateKind,
    cells: &[CellState; 3],
    setup: &GateSetup,
    allow_uninitialized_out: bool,
) -> Result<GateResult, GateError> {
    let config = gate_config_with(kind, &setup.levels, setup.r_fix);
    let active: Vec<usize> = match kind {
        GateKind::Imply => vec![0, 2],
        _ => vec![0, 1, 2],
    };
    for &i in &active {
        if cells[i].logic_value() == LogicLevel::Indeterminate {
            return Err(GateError::IndeterminateState(i));
        }
    }
    if config.requires_out_init
        && !allow_uninitialized_out
        && cells[2].logic_value() != LogicLevel::Zero
    {
        return Err(GateError::OutputNotInitialized);
    }

    let (drives, duration) = gate_drives(&config, &setup.timings);
    let circuit = CircuitConfig {
        cells: cells.to_vec(),
        drives,
        be_mode: config.be_mode,
        c_p: setup.c_p,
    };
    let res = solve_transient(&circuit, duration, &setup.policy())?;

    let pre_resistance: Vec<f64> = cells.iter().map(|c| c.read_resistance()).collect();
    let post_resistance: Vec<f64> = res.cells.iter().map(|c| c.read_resistance()).collect();
    let inputs = input_indices(kind);
    let max_input_drift = inputs
        .iter()
        .map(|&i| (post_resistance[i] - pre_resistance[i]).abs() / pre_resistance[i])
        .fold(0.0f64, f64::max);
    let input_logic_preserved = inputs
        .iter()
        .all(|&i| logic_value(post_resistance[i]) == logic_value(pre_resistance[i]));

    Ok(GateResult {
        kind,
        output: res.cells[2].logic_value(),
        out_old: cells[2].logic_value(),
        pre_resistance,
        post_resistance,
        max_input_drift,
        input_logic_preserved,
        events: res.trace.events.clone(),
        trace: res.trace,
        cells_after: res.cells,
    })
}

/// Input-stability verdict: drift within `tolerance` (inclusive) and no
/// input changed its logic value.
pub fn input_stability(result: &GateResult, tolerance: f64) -> bool {
    result.max_input_drift <= tolerance && result.input_logic_preserved
}

/// Truth-table evaluation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalMode {
    Functional,
    Circuit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRow {
    pub in1: bool,
    pub in2: Option<bool>,
    pub out_old: bool,
    pub out: bool,
}

/// Operand combinations enumerated by truth tables, margins and Monte Carlo:
/// `(in1, in2, out_old)`. IMPLY ranges over (in1, out_old); the others over
/// (in1, in2) with OUT pre-initialized to 0.
pub fn operand_combinations(kind: GateKind) -> Vec<(bool, Option<bool>, bool)> {
    match kind {
        GateKind::Imply => vec![
            (false, None, false),
            (false, None, true),
            (true, None, false),
            (true, None, true),
        ],
        _ => vec![
            (false, Some(false), false),
            (false, Some(true), false),
            (true, Some(false), false),
            (true, Some(true), false),
        ],
    }
}

/// Enumerate the gate's truth table in the requested mode.
pub fn truth_table(
    kind: GateKind,
    mode: EvalMode,
    setup: &GateSetup,
) -> Result<Vec<TruthRow>, GateError> {
    let mut rows = Vec::new();
    for (in1, in2, out_old) in operand_combinations(kind) {
        let out = match mode {
            EvalMode::Functional => execute_gate_functional(kind, in1, in2, out_old),
            EvalMode::Circuit => {
                let params = Default::default();
                let cells = [
                    CellState::with_bit(in1, params),
                    CellState::with_bit(in2.unwrap_or(false), params),
                    CellState::with_bit(out_old, params),
                ];
                let result = execute_gate_circuit(kind, &cells, setup, kind.is_destructive())?;
                match result.output.as_bit() {
                    Some(b) => b,
                    None => return Err(GateError::IndeterminateState(2)),
                }
            }
        };
        rows.push(TruthRow {
            in1,
            in2,
            out_old,
            out,
        });
    }
    Ok(rows)
}

/// Programming pulses used by write-verify.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramPulses {
    pub set: PulseWaveform,
    pub reset: PulseWaveform,
    pub dt: f64,
}

impl Default for ProgramPulses {
    fn default() -> Self {
        ProgramPulses {
            set: PulseWaveform::trapezoid(30e-9, 500e-9, 500e-9, 1.2).expect("valid set pulse"),
            reset: PulseWaveform::trapezoid(30e-9, 50e-9, 30e-9, 3.0).expect("valid reset pulse"),
            dt: 1e-9,
        }
    }
}

/// Program-read-repeat until the cell's logic value matches `target`.
/// Returns the new state and the number of pulses applied (0 when the cell
/// already holds the target).
pub fn write_verify(
    cell: &CellState,
    target: bool,
    max_attempts: u32,
    pulses: &ProgramPulses,
) -> Result<(CellState, u32), GateError> {
    let mut cell = cell.clone();
    let want = LogicLevel::from_bit(target);
    if cell.logic_value() == want {
        return Ok((cell, 0));
    }
    for attempt in 1..=max_attempts {
        if target {
            cell.apply_waveform(&pulses.set, pulses.dt)?;
        } else {
            cell.apply_reset_pulse(&pulses.reset);
        }
        if cell.logic_value() == want {
            return Ok((cell, attempt));
        }
    }
    Err(GateError::VerifyFailed {
        attempts: max_attempts,
    })
}
