//! Lower a combinational netlist onto the native stateful gate set and a
//! single crossbar row, then verify the result against the reference
//! Boolean evaluator.
//!
//! Lowerings exploit the accumulation semantics (`out_new = out_old | f`)
//! to avoid temporaries:
//!
//! * `NOT a`      -> IMPLY(a) into a fresh 0 cell, 1 step
//! * `NAND a b`   -> IMPLY(b); IMPLY(a), 2 steps, no temps
//! * `XOR a b`    -> NIMP(a,b); NIMP(b,a), 2 steps, no temps
//! * `AND a b`    -> t = IMPLY(b); NIMP(a,t), 2 steps, 1 temp
//! * `IMPLY a b`  -> OR(b, zero); IMPLY(a), 2 steps, shared zero cell
//!
//! INIT micro-ops reset cells and are not counted as computation steps.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::crossbar::{Addr, Crossbar, CrossbarError, CrossbarSetup, MicroOp, Program, Step};
use crate::gates::{EvalMode, GateKind};
use crate::netlist::{NetOp, Netlist, NetlistError};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error("row needs {peak} cells but only {available} are available")]
    RowOverflow { peak: usize, available: usize },
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error("programs have different step shapes at step {step}")]
    ShapeMismatch { step: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct CompileStats {
    /// Steps containing gate micro-ops; INIT steps excluded.
    pub computation_steps: usize,
    pub init_ops: usize,
    /// Peak number of simultaneously live cells.
    pub cells_used: usize,
    /// Native gate op counts by kind name.
    pub gate_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompiledProgram {
    /// Micro-op steps, all addressed to row 0.
    pub steps: Program,
    /// Signal name -> column.
    pub allocation: BTreeMap<String, usize>,
    pub input_columns: Vec<usize>,
    pub output_columns: Vec<usize>,
    /// Columns the row must provide (peak usage).
    pub num_cols: usize,
    pub stats: CompileStats,
}

struct Allocator {
    free: BTreeSet<usize>,
    next: usize,
    limit: usize,
    live: usize,
    peak: usize,
}

impl Allocator {
    fn new(limit: usize) -> Self {
        Allocator {
            free: BTreeSet::new(),
            next: 0,
            limit,
            live: 0,
            peak: 0,
        }
    }

    fn alloc(&mut self) -> Result<usize, CompileError> {
        let col = match self.free.pop_first() {
            Some(c) => c,
            None => {
                let c = self.next;
                self.next += 1;
                c
            }
        };
        self.live += 1;
        self.peak = self.peak.max(self.live);
        if self.next > self.limit {
            return Err(CompileError::RowOverflow {
                peak: self.peak,
                available: self.limit,
            });
        }
        Ok(col)
    }

    fn release(&mut self, col: usize) {
        self.live -= 1;
        self.free.insert(col);
    }
}

struct Lowering<'a> {
    netlist: &'a Netlist,
    alloc: Allocator,
    columns: BTreeMap<String, usize>,
    steps: Program,
    gate_counts: BTreeMap<String, u64>,
    init_ops: usize,
    zero_col: Option<usize>,
    /// index of the last assignment reading each signal
    last_use: BTreeMap<&'a str, usize>,
}

impl<'a> Lowering<'a> {
    fn init(&mut self, col: usize) {
        self.steps
            .push(Step(vec![MicroOp::Init(vec![Addr::new(0, col)])]));
        self.init_ops += 1;
    }

    fn gate(&mut self, kind: GateKind, in1: usize, in2: Option<usize>, out: usize) {
        self.steps.push(Step(vec![MicroOp::Gate {
            kind,
            row: 0,
            in1,
            in2,
            out,
        }]));
        *self.gate_counts.entry(kind.name().to_string()).or_insert(0) += 1;
    }

    fn fresh(&mut self) -> Result<usize, CompileError> {
        let col = self.alloc.alloc()?;
        self.init(col);
        Ok(col)
    }

    /// The shared constant-0 cell, allocated on first use and never freed.
    fn zero(&mut self) -> Result<usize, CompileError> {
        if let Some(c) = self.zero_col {
            return Ok(c);
        }
        let c = self.fresh()?;
        self.zero_col = Some(c);
        Ok(c)
    }

    /// Both arguments on the same cell: native gates cannot drive one
    /// column twice, so rewrite through the Boolean identity.
    fn lower_degenerate(&mut self, op: NetOp, a: usize) -> Result<usize, CompileError> {
        match op {
            NetOp::Nor | NetOp::Nand => {
                // NOR(a,a) = NAND(a,a) = NOT a
                let out = self.fresh()?;
                self.gate(GateKind::Imply, a, None, out);
                Ok(out)
            }
            NetOp::Or | NetOp::And => {
                // copy
                let z = self.zero()?;
                let out = self.fresh()?;
                self.gate(GateKind::Or, a, Some(z), out);
                Ok(out)
            }
            NetOp::Xor | NetOp::Nimp => self.fresh(), // constant 0
            NetOp::Imply => {
                // a -> a = 1
                let z = self.zero()?;
                let out = self.fresh()?;
                self.gate(GateKind::Or, a, Some(z), out);
                self.gate(GateKind::Imply, a, None, out);
                Ok(out)
            }
            NetOp::Not => unreachable!("NOT is unary"),
        }
    }

    fn lower_assignment(&mut self, idx: usize, op: NetOp, args: &[usize]) -> Result<usize, CompileError> {
        let a = args[0];
        let b = args.get(1).copied();
        if b == Some(a) {
            let out = self.lower_degenerate(op, a)?;
            self.release_dead_args(idx);
            return Ok(out);
        }
        let out = match op {
            NetOp::Nor | NetOp::Or | NetOp::Nimp => {
                let kind = match op {
                    NetOp::Nor => GateKind::Nor,
                    NetOp::Or => GateKind::Or,
                    _ => GateKind::Nimp,
                };
                let out = self.fresh()?;
                self.gate(kind, a, b, out);
                out
            }
            NetOp::Not => {
                let out = self.fresh()?;
                self.gate(GateKind::Imply, a, None, out);
                out
            }
            NetOp::Nand => {
                let out = self.fresh()?;
                self.gate(GateKind::Imply, b.unwrap(), None, out);
                self.gate(GateKind::Imply, a, None, out);
                out
            }
            NetOp::Xor => {
                let b = b.unwrap();
                let out = self.fresh()?;
                self.gate(GateKind::Nimp, a, Some(b), out);
                self.gate(GateKind::Nimp, b, Some(a), out);
                out
            }
            NetOp::And => {
                let t = self.fresh()?;
                self.gate(GateKind::Imply, b.unwrap(), None, t);
                let out = self.fresh()?;
                self.gate(GateKind::Nimp, a, Some(t), out);
                self.alloc.release(t);
                out
            }
            NetOp::Imply => {
                let z = self.zero()?;
                let out = self.fresh()?;
                self.gate(GateKind::Or, b.unwrap(), Some(z), out);
                self.gate(GateKind::Imply, a, None, out);
                out
            }
        };
        self.release_dead_args(idx);
        Ok(out)
    }

    /// Free argument cells after their last use, unless they are inputs or
    /// declared outputs.
    fn release_dead_args(&mut self, idx: usize) {
        let assignment = &self.netlist.assignments[idx];
        let mut freed = Vec::new();
        for arg in &assignment.args {
            if self.last_use.get(arg.as_str()) == Some(&idx)
                && !self.netlist.inputs.contains(arg)
                && !self.netlist.outputs.contains(arg)
                && !freed.contains(arg)
            {
                freed.push(arg.clone());
                let col = self.columns[arg];
                self.alloc.release(col);
            }
        }
    }
}

/// Lower a netlist onto one crossbar row with at most `max_cols` cells.
pub fn lower(netlist: &Netlist, max_cols: usize) -> Result<CompiledProgram, CompileError> {
    let mut last_use: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, a) in netlist.assignments.iter().enumerate() {
        for arg in &a.args {
            last_use.insert(arg, i);
        }
    }
    let mut lowering = Lowering {
        netlist,
        alloc: Allocator::new(max_cols),
        columns: BTreeMap::new(),
        steps: Vec::new(),
        gate_counts: BTreeMap::new(),
        init_ops: 0,
        zero_col: None,
        last_use,
    };
    let mut input_columns = Vec::new();
    for name in &netlist.inputs {
        let col = lowering.alloc.alloc()?;
        lowering.columns.insert(name.clone(), col);
        input_columns.push(col);
    }
    for idx in 0..netlist.assignments.len() {
        let a = &netlist.assignments[idx];
        let args: Vec<usize> = a.args.iter().map(|s| lowering.columns[s]).collect();
        let (target, op) = (a.target.clone(), a.op);
        let out = lowering.lower_assignment(idx, op, &args)?;
        lowering.columns.insert(target, out);
    }
    let output_columns = netlist
        .outputs
        .iter()
        .map(|o| lowering.columns[o])
        .collect();
    let computation_steps = lowering
        .steps
        .iter()
        .filter(|s| s.0.iter().any(|op| matches!(op, MicroOp::Gate { .. })))
        .count();
    let stats = CompileStats {
        computation_steps,
        init_ops: lowering.init_ops,
        cells_used: lowering.alloc.peak,
        gate_counts: lowering.gate_counts,
    };
    Ok(CompiledProgram {
        steps: lowering.steps,
        allocation: lowering.columns,
        input_columns,
        output_columns,
        num_cols: lowering.alloc.next,
        stats,
    })
}

/// Merge per-row programs of identical step shape into one row-parallel
/// program: step `i` of row `r` becomes a micro-op with `row = r`.
pub fn schedule_rows(programs: &[CompiledProgram]) -> Result<Program, CompileError> {
    let Some(first) = programs.first() else {
        return Ok(Vec::new());
    };
    let n_steps = first.steps.len();
    for p in programs {
        if p.steps.len() != n_steps {
            return Err(CompileError::ShapeMismatch { step: n_steps.min(p.steps.len()) });
        }
    }
    let mut merged = Vec::with_capacity(n_steps);
    for si in 0..n_steps {
        let mut ops = Vec::new();
        for (row, p) in programs.iter().enumerate() {
            for op in &p.steps[si].0 {
                let reassigned = match op {
                    MicroOp::Init(addrs) => MicroOp::Init(
                        addrs.iter().map(|a| Addr::new(row, a.col)).collect(),
                    ),
                    MicroOp::Gate {
                        kind,
                        in1,
                        in2,
                        out,
                        ..
                    } => MicroOp::Gate {
                        kind: *kind,
                        row,
                        in1: *in1,
                        in2: *in2,
                        out: *out,
                    },
                };
                // all rows of a step must agree on kind and columns
                if row > 0 {
                    let reference = &first.steps[si].0;
                    let matches_shape = reference.iter().any(|r| match (r, &reassigned) {
                        (MicroOp::Init(_), MicroOp::Init(_)) => true,
                        (
                            MicroOp::Gate {
                                kind: k1,
                                in1: a1,
                                in2: b1,
                                out: o1,
                                ..
                            },
                            MicroOp::Gate {
                                kind: k2,
                                in1: a2,
                                in2: b2,
                                out: o2,
                                ..
                            },
                        ) => k1 == k2 && a1 == a2 && b1 == b2 && o1 == o2,
                        _ => false,
                    });
                    if !matches_shape {
                        return Err(CompileError::ShapeMismatch { step: si });
                    }
                }
                ops.push(reassigned);
            }
        }
        merged.push(Step(ops));
    }
    Ok(merged)
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    pub inputs: Vec<bool>,
    pub expected: Vec<bool>,
    pub got: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub vectors_checked: u64,
    pub exhaustive: bool,
    pub mismatches: Vec<Mismatch>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// How many random vectors to draw when the input space is too large to
/// enumerate.
pub const SAMPLED_VECTORS: u64 = 4096;
const MAX_EXHAUSTIVE_INPUTS: usize = 16;

/// Run the compiled program on a fresh one-row array for every input
/// vector (exhaustively up to 16 inputs, sampled above) and compare the
/// read-back outputs with the reference evaluation.
pub fn verify(
    netlist: &Netlist,
    compiled: &CompiledProgram,
    mode: EvalMode,
    setup: &CrossbarSetup,
    seed: u64,
) -> Result<VerifyReport, CompileError> {
    let n = netlist.inputs.len();
    let exhaustive = n <= MAX_EXHAUSTIVE_INPUTS;
    let vectors: Vec<u64> = if exhaustive {
        (0..1u64 << n).collect()
    } else {
        // fixed multiplicative stream keyed on the run seed
        (0..SAMPLED_VECTORS)
            .map(|i| {
                let mut z = seed
                    .wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                z ^ (z >> 31)
            })
            .collect()
    };
    let mut mismatches = Vec::new();
    for &v in &vectors {
        let bits: Vec<bool> = (0..n).map(|i| v >> i & 1 == 1).collect();
        let expected = netlist.evaluate(&bits)?;
        let mut array = Crossbar::create(1, compiled.num_cols, setup.clone(), seed)?;
        for (col, &bit) in compiled.input_columns.iter().zip(&bits) {
            array.write(Addr::new(0, *col), bit)?;
        }
        array.run_program(&compiled.steps, mode)?;
        let got: Result<Vec<bool>, _> = compiled
            .output_columns
            .iter()
            .map(|&c| array.read(Addr::new(0, c)))
            .collect();
        let got = got?;
        if got != expected {
            mismatches.push(Mismatch {
                inputs: bits,
                expected,
                got,
            });
        }
    }
    Ok(VerifyReport {
        vectors_checked: vectors.len() as u64,
        exhaustive,
        mismatches,
    })
}
