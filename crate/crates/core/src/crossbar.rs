//! A rows x cols array of PCM cells with one shared bottom-electrode line
//! per row, executing micro-op programs with row-level parallelism.
//!
//! During a circuit-mode gate the three operand cells of a row form the
//! shared-node circuit; every other column in the row is driven floating
//! (no sneak paths, no selector devices). Rows of one step are solved
//! independently.

use std::collections::BTreeSet;
use std::fmt::Write as FmtWrite;

use serde::Serialize;
use thiserror::Error;

use crate::device::{CellState, DeviceParams, LogicLevel};
use crate::gates::{
    execute_gate_circuit, execute_gate_functional, write_verify, EvalMode, GateError, GateKind,
    GateSetup, ProgramPulses,
};
use crate::solver::NodeEvent;
use crate::variability::{sample_device, SamplingError, VariabilitySpec};

#[derive(Debug, Error)]
pub enum CrossbarError {
    #[error("crossbar dimensions must be >= 1 (got {rows}x{cols})")]
    EmptyArray { rows: usize, cols: usize },
    #[error("address ({row},{col}) out of range for {rows}x{cols} array")]
    AddressOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("invalid step: {0}")]
    InvalidStep(String),
    #[error("cell ({row},{col}) reads between the resistance bands")]
    IndeterminateState { row: usize, col: usize },
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
}

/// Cell address, row-major and zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Addr {
    pub row: usize,
    pub col: usize,
}

impl Addr {
    pub fn new(row: usize, col: usize) -> Self {
        Addr { row, col }
    }
}

/// One native operation on the array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum MicroOp {
    /// Reset the target cells to logical 0.
    Init(Vec<Addr>),
    /// One stateful gate within a row. `in2 = None` for IMPLY.
    Gate {
        kind: GateKind,
        row: usize,
        in1: usize,
        in2: Option<usize>,
        out: usize,
    },
}

/// Micro-ops executed simultaneously. Gate steps are SIMD across rows: the
/// same kind and column triple on pairwise-distinct rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Step(pub Vec<MicroOp>);

pub type Program = Vec<Step>;

/// Array-level execution settings.
#[derive(Debug, Clone)]
pub struct CrossbarSetup {
    pub params: DeviceParams,
    pub variability: VariabilitySpec,
    pub gate: GateSetup,
    pub pulses: ProgramPulses,
    pub write_max_attempts: u32,
}

impl Default for CrossbarSetup {
    fn default() -> Self {
        CrossbarSetup {
            params: DeviceParams::default(),
            variability: VariabilitySpec::none(),
            gate: GateSetup::default(),
            pulses: ProgramPulses::default(),
            write_max_attempts: 10,
        }
    }
}

impl CrossbarSetup {
    /// Fast gate timings and fF-scale node capacitance; the usual choice
    /// for circuit-mode program runs.
    pub fn fast() -> Self {
        CrossbarSetup {
            gate: GateSetup::fast(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub gate_ops: usize,
    pub init_ops: usize,
    pub events: Vec<NodeEvent>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProgramReport {
    pub steps: Vec<StepReport>,
    /// Gate steps only; Init steps are not computation.
    pub computation_steps: usize,
    pub init_ops: usize,
    pub total_set_events: u64,
    pub max_switch_count: u64,
    pub final_map: Vec<Vec<LogicLevel>>,
}

#[derive(Debug, Clone)]
pub struct Crossbar {
    rows: usize,
    cols: usize,
    cells: Vec<CellState>,
    setup: CrossbarSetup,
}

impl Crossbar {
    /// Create an array of independently sampled, initially amorphous cells.
    pub fn create(
        rows: usize,
        cols: usize,
        setup: CrossbarSetup,
        seed: u64,
    ) -> Result<Self, CrossbarError> {
        if rows == 0 || cols == 0 {
            return Err(CrossbarError::EmptyArray { rows, cols });
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for idx in 0..rows * cols {
            let params = sample_device(&setup.params, &setup.variability, seed ^ (idx as u64) << 1)?;
            cells.push(CellState::amorphous(params));
        }
        Ok(Crossbar {
            rows,
            cols,
            cells,
            setup,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn index(&self, addr: Addr) -> Result<usize, CrossbarError> {
        if addr.row >= self.rows || addr.col >= self.cols {
            return Err(CrossbarError::AddressOutOfRange {
                row: addr.row,
                col: addr.col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(addr.row * self.cols + addr.col)
    }

    pub fn cell(&self, addr: Addr) -> Result<&CellState, CrossbarError> {
        Ok(&self.cells[self.index(addr)?])
    }

    /// Write-verify one bit.
    pub fn write(&mut self, addr: Addr, bit: bool) -> Result<(), CrossbarError> {
        let idx = self.index(addr)?;
        let (cell, _) = write_verify(
            &self.cells[idx],
            bit,
            self.setup.write_max_attempts,
            &self.setup.pulses,
        )?;
        self.cells[idx] = cell;
        Ok(())
    }

    /// Non-destructive read.
    pub fn read(&self, addr: Addr) -> Result<bool, CrossbarError> {
        let cell = self.cell(addr)?;
        cell.logic_value()
            .as_bit()
            .ok_or(CrossbarError::IndeterminateState {
                row: addr.row,
                col: addr.col,
            })
    }

    pub fn logic_map(&self) -> Vec<Vec<LogicLevel>> {
        (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.cells[r * self.cols + c].logic_value())
                    .collect()
            })
            .collect()
    }

    /// Array state dump as CSV of logic values (`0`, `1`, `?`).
    pub fn dump_logic_csv(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<&str> = (0..self.cols)
                .map(|c| match self.cells[r * self.cols + c].logic_value() {
                    LogicLevel::Zero => "0",
                    LogicLevel::One => "1",
                    LogicLevel::Indeterminate => "?",
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Array state dump as JSON of read resistances (row-major nested lists).
    pub fn dump_resistance_json(&self) -> String {
        let grid: Vec<Vec<f64>> = (0..self.rows)
            .map(|r| {
                (0..self.cols)
                    .map(|c| self.cells[r * self.cols + c].read_resistance())
                    .collect()
            })
            .collect();
        serde_json::to_string_pretty(&grid).expect("serializable")
    }

    fn validate_step(&self, step: &Step) -> Result<(), CrossbarError> {
        let mut gate_sig: Option<(GateKind, usize, Option<usize>, usize)> = None;
        let mut rows_used = BTreeSet::new();
        let mut has_init = false;
        let mut has_gate = false;
        for op in &step.0 {
            match op {
                MicroOp::Init(addrs) => {
                    has_init = true;
                    for a in addrs {
                        self.index(*a)?;
                    }
                }
                MicroOp::Gate {
                    kind,
                    row,
                    in1,
                    in2,
                    out,
                } => {
                    has_gate = true;
                    let mut cols = vec![*in1, *out];
                    if let Some(c2) = in2 {
                        cols.push(*c2);
                    }
                    let distinct: BTreeSet<usize> = cols.iter().copied().collect();
                    if distinct.len() != cols.len() {
                        return Err(CrossbarError::InvalidStep(
                            "gate operand columns must be distinct".to_string(),
                        ));
                    }
                    if (*kind == GateKind::Imply) != in2.is_none() {
                        return Err(CrossbarError::InvalidStep(
                            "in2 must be absent exactly for IMPLY".to_string(),
                        ));
                    }
                    for c in &cols {
                        self.index(Addr::new(*row, *c))?;
                    }
                    let sig = (*kind, *in1, *in2, *out);
                    match &gate_sig {
                        None => gate_sig = Some(sig),
                        Some(existing) if *existing != sig => {
                            return Err(CrossbarError::InvalidStep(
                                "all gate ops in a step must share kind and columns".to_string(),
                            ))
                        }
                        _ => {}
                    }
                    if !rows_used.insert(*row) {
                        return Err(CrossbarError::InvalidStep(format!(
                            "row {row} used twice in one step"
                        )));
                    }
                }
            }
        }
        if has_init && has_gate {
            return Err(CrossbarError::InvalidStep(
                "a step may not mix INIT and GATE micro-ops".to_string(),
            ));
        }
        Ok(())
    }

    /// Execute one step. The commit is transactional: on error the array is
    /// left untouched.
    pub fn execute_step(&mut self, step: &Step, mode: EvalMode) -> Result<StepReport, CrossbarError> {
        self.validate_step(step)?;
        let mut staged = self.cells.clone();
        let mut report = StepReport {
            gate_ops: 0,
            init_ops: 0,
            events: Vec::new(),
        };
        for op in &step.0 {
            match op {
                MicroOp::Init(addrs) => {
                    for a in addrs {
                        let idx = self.index(*a)?;
                        report.init_ops += 1;
                        match mode {
                            EvalMode::Functional => {
                                let count = staged[idx].switch_count;
                                staged[idx] = CellState::amorphous(staged[idx].params);
                                staged[idx].switch_count = count;
                            }
                            EvalMode::Circuit => {
                                let (cell, _) = write_verify(
                                    &staged[idx],
                                    false,
                                    self.setup.write_max_attempts,
                                    &self.setup.pulses,
                                )?;
                                staged[idx] = cell;
                            }
                        }
                    }
                }
                MicroOp::Gate {
                    kind,
                    row,
                    in1,
                    in2,
                    out,
                } => {
                    report.gate_ops += 1;
                    let events = self.execute_gate(&mut staged, *kind, *row, *in1, *in2, *out, mode)?;
                    report.events.extend(events);
                }
            }
        }
        self.cells = staged;
        Ok(report)
    }

    #[allow(clippy::too_many_arguments)]
    fn execute_gate(
        &self,
        staged: &mut [CellState],
        kind: GateKind,
        row: usize,
        in1: usize,
        in2: Option<usize>,
        out: usize,
        mode: EvalMode,
    ) -> Result<Vec<NodeEvent>, CrossbarError> {
        let idx = |col: usize| row * self.cols + col;
        let read_bit = |cell: &CellState, col: usize| -> Result<bool, CrossbarError> {
            cell.logic_value()
                .as_bit()
                .ok_or(CrossbarError::IndeterminateState { row, col })
        };
        match mode {
            EvalMode::Functional => {
                let b1 = read_bit(&staged[idx(in1)], in1)?;
                let b2 = in2.map(|c| read_bit(&staged[idx(c)], c)).transpose()?;
                let out_cell = &staged[idx(out)];
                let old = read_bit(out_cell, out)?;
                let new = execute_gate_functional(kind, b1, b2, old);
                let mut events = Vec::new();
                if new && !old {
                    let count = staged[idx(out)].switch_count;
                    staged[idx(out)] = CellState::crystalline(staged[idx(out)].params);
                    staged[idx(out)].switch_count = count + 1;
                    events.push(NodeEvent {
                        time: 0.0,
                        cell: out,
                        kind: crate::device::SwitchEvent::Set,
                    });
                }
                Ok(events)
            }
            EvalMode::Circuit => {
                let in2_col = in2.unwrap_or_else(|| {
                    // IMPLY keeps a floating placeholder; any distinct column
                    // works since floating cells are excluded from the KCL.
                    (0..self.cols)
                        .find(|c| *c != in1 && *c != out)
                        .unwrap_or(in1)
                });
                let cells = [
                    staged[idx(in1)].clone(),
                    staged[idx(in2_col)].clone(),
                    staged[idx(out)].clone(),
                ];
                // accumulation semantics: an already-LRS output simply stays
                // set, so the HRS precondition is relaxed on the array
                let result = execute_gate_circuit(kind, &cells, &self.setup.gate, true)?;
                staged[idx(in1)] = result.cells_after[0].clone();
                if let Some(c2) = in2 {
                    staged[idx(c2)] = result.cells_after[1].clone();
                }
                staged[idx(out)] = result.cells_after[2].clone();
                let mut events = result.events;
                for e in &mut events {
                    e.cell = match e.cell {
                        0 => in1,
                        1 => in2.unwrap_or(in2_col),
                        _ => out,
                    };
                }
                Ok(events)
            }
        }
    }

    /// Execute a program step by step.
    pub fn run_program(
        &mut self,
        program: &[Step],
        mode: EvalMode,
    ) -> Result<ProgramReport, CrossbarError> {
        let mut steps = Vec::new();
        let mut computation_steps = 0;
        let mut init_ops = 0;
        let mut total_set_events = 0u64;
        for step in program {
            let report = self.execute_step(step, mode)?;
            if report.gate_ops > 0 {
                computation_steps += 1;
            }
            init_ops += report.init_ops;
            total_set_events += report
                .events
                .iter()
                .filter(|e| e.kind == crate::device::SwitchEvent::Set)
                .count() as u64;
            steps.push(report);
        }
        let max_switch_count = self.cells.iter().map(|c| c.switch_count).max().unwrap_or(0);
        Ok(ProgramReport {
            steps,
            computation_steps,
            init_ops,
            total_set_events,
            max_switch_count,
            final_map: self.logic_map(),
        })
    }
}

/// Parse the program text format: one micro-op per line, steps separated by
/// `---`. `INIT r,c [r,c ...]` and `GATE <KIND> row=<r> in1=<c> in2=<c|-> out=<c>`.
pub fn parse_program(text: &str) -> Result<Program, CrossbarError> {
    let mut steps = Vec::new();
    let mut current: Vec<MicroOp> = Vec::new();
    let bad = |line_no: usize, msg: String| {
        CrossbarError::InvalidStep(format!("line {}: {}", line_no + 1, msg))
    };
    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line == "---" {
            if !current.is_empty() {
                steps.push(Step(std::mem::take(&mut current)));
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("INIT") => {
                let mut addrs = Vec::new();
                for tok in parts {
                    let (r, c) = tok
                        .split_once(',')
                        .ok_or_else(|| bad(line_no, format!("bad address '{tok}'")))?;
                    let row = r
                        .parse()
                        .map_err(|_| bad(line_no, format!("bad row '{r}'")))?;
                    let col = c
                        .parse()
                        .map_err(|_| bad(line_no, format!("bad col '{c}'")))?;
                    addrs.push(Addr::new(row, col));
                }
                if addrs.is_empty() {
                    return Err(bad(line_no, "INIT needs at least one address".to_string()));
                }
                current.push(MicroOp::Init(addrs));
            }
            Some("GATE") => {
                let kind_tok = parts
                    .next()
                    .ok_or_else(|| bad(line_no, "missing gate kind".to_string()))?;
                let kind = GateKind::parse(kind_tok)
                    .ok_or_else(|| bad(line_no, format!("unknown gate kind '{kind_tok}'")))?;
                let mut row = None;
                let mut in1 = None;
                let mut in2: Option<Option<usize>> = None;
                let mut out = None;
                for tok in parts {
                    let (key, val) = tok
                        .split_once('=')
                        .ok_or_else(|| bad(line_no, format!("bad field '{tok}'")))?;
                    let parsed: Option<usize> = if val == "-" {
                        None
                    } else {
                        Some(val.parse().map_err(|_| {
                            bad(line_no, format!("bad value '{val}' for '{key}'"))
                        })?)
                    };
                    match key {
                        "row" => row = parsed,
                        "in1" => in1 = parsed,
                        "in2" => in2 = Some(parsed),
                        "out" => out = parsed,
                        _ => return Err(bad(line_no, format!("unknown field '{key}'"))),
                    }
                }
                let (row, in1, in2, out) = match (row, in1, in2, out) {
                    (Some(r), Some(a), Some(b), Some(o)) => (r, a, b, o),
                    _ => {
                        return Err(bad(
                            line_no,
                            "GATE needs row=, in1=, in2= and out=".to_string(),
                        ))
                    }
                };
                current.push(MicroOp::Gate {
                    kind,
                    row,
                    in1,
                    in2,
                    out,
                });
            }
            Some(other) => return Err(bad(line_no, format!("unknown micro-op '{other}'"))),
            None => {}
        }
    }
    if !current.is_empty() {
        steps.push(Step(current));
    }
    Ok(steps)
}

/// Emit the program text format.
pub fn format_program(program: &[Step]) -> String {
    let mut out = String::new();
    for (i, step) in program.iter().enumerate() {
        if i > 0 {
            out.push_str("---\n");
        }
        for op in &step.0 {
            match op {
                MicroOp::Init(addrs) => {
                    let list: Vec<String> = addrs
                        .iter()
                        .map(|a| format!("{},{}", a.row, a.col))
                        .collect();
                    let _ = writeln!(out, "INIT {}", list.join(" "));
                }
                MicroOp::Gate {
                    kind,
                    row,
                    in1,
                    in2,
                    out: o,
                } => {
                    let in2s = in2.map_or("-".to_string(), |c| c.to_string());
                    let _ = writeln!(
                        out,
                        "GATE {} row={row} in1={in1} in2={in2s} out={o}",
                        kind.name()
                    );
                }
            }
        }
    }
    out
}
