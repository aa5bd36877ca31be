//! Monte Carlo robustness: sample devices, write-verify the operands, run
//! the gate at circuit level, and check logical correctness plus input
//! stability for every operand combination.

use serde::Serialize;

use crate::device::{CellState, LogicLevel};
use crate::gates::{
    execute_gate_circuit, execute_gate_functional, input_stability, operand_combinations,
    write_verify, GateError, GateKind, GateSetup, ProgramPulses,
};
use crate::variability::{sample_device, SamplingError, VariabilitySpec};
use crate::device::DeviceParams;

#[derive(Debug, thiserror::Error)]
pub enum MonteCarloError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("iterations must be >= 1")]
    NoIterations,
}

/// Why one iteration failed.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub iteration: u64,
    pub combo: usize,
    pub seed: u64,
    pub reason: String,
}

/// One scatter point: post-gate read resistance of one cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScatterPoint {
    pub iteration: u64,
    pub combo: usize,
    pub cell: usize,
    pub resistance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComboStats {
    pub in1: bool,
    pub in2: Option<bool>,
    pub out_old: bool,
    pub expected_out: bool,
    pub successes: u64,
    /// Per cell, quartiles of the post-gate read resistance.
    pub resistance_quartiles: Vec<Quartiles>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub kind: GateKind,
    pub iterations: u64,
    pub seed: u64,
    pub stability_tolerance: f64,
    pub combos: Vec<ComboStats>,
    pub failures: Vec<FailureRecord>,
    pub success_rate: f64,
    #[serde(skip)]
    pub scatter: Vec<ScatterPoint>,
}

impl RobustnessReport {
    pub fn all_passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Scatter CSV: `iteration,cell,combination,resistance_ohm`.
    pub fn write_scatter_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,cell,combination,resistance_ohm")?;
        for p in &self.scatter {
            writeln!(out, "{},{},{},{}", p.iteration, p.cell, p.combo, p.resistance)?;
        }
        Ok(())
    }
}

/// Default relative-drift tolerance for input stability.
pub const STABILITY_TOLERANCE: f64 = 0.05;

fn quartiles(mut xs: Vec<f64>) -> Quartiles {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite resistances"));
    let at = |q: f64| {
        if xs.is_empty() {
            return f64::NAN;
        }
        let pos = q * (xs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        xs[lo] * (1.0 - frac) + xs[hi] * frac
    };
    Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    }
}

/// Per-cell sampling seed derived from (run seed, iteration, combo, cell)
/// so iterations are reproducible regardless of scheduling order.
fn derive_seed(seed: u64, iteration: u64, combo: u64, cell: u64) -> u64 {
    // splitmix64 over the packed indices
    let mut z = seed
        .wrapping_add(iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(combo.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(cell.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `iterations` independent trials of every operand combination.
pub fn monte_carlo(
    kind: GateKind,
    iterations: u64,
    variability: &VariabilitySpec,
    seed: u64,
    nominal: &DeviceParams,
    setup: &GateSetup,
) -> Result<RobustnessReport, MonteCarloError> {
    if iterations == 0 {
        return Err(MonteCarloError::NoIterations);
    }
    let pulses = ProgramPulses::default();
    let combos = operand_combinations(kind);
    let mut combo_stats: Vec<ComboStats> = Vec::new();
    let mut failures = Vec::new();
    let mut scatter = Vec::new();

    // skip trace recording during MC solves
    let mut mc_setup = setup.clone();
    mc_setup.record_stride = 0;

    for (ci, &(in1, in2, out_old)) in combos.iter().enumerate() {
        let expected = execute_gate_functional(kind, in1, in2, out_old);
        let mut successes = 0;
        let mut post_r: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for it in 0..iterations {
            let trial_seed = derive_seed(seed, it, ci as u64, 0);
            let run = run_trial(
                kind, in1, in2, out_old, expected, nominal, variability, &pulses, &mc_setup, seed,
                it, ci,
            );
            match run {
                Ok(resistances) => {
                    successes += 1;
                    for (cell, r) in resistances.iter().enumerate() {
                        post_r[cell].push(*r);
                        scatter.push(ScatterPoint {
                            iteration: it,
                            combo: ci,
                            cell,
                            resistance: *r,
                        });
                    }
                }
                Err(reason) => failures.push(FailureRecord {
                    iteration: it,
                    combo: ci,
                    seed: trial_seed,
                    reason,
                }),
            }
        }
        combo_stats.push(ComboStats {
            in1,
            in2,
            out_old,
            expected_out: expected,
            successes,
            resistance_quartiles: post_r.into_iter().map(quartiles).collect(),
        });
    }

    let total = iterations * combos.len() as u64;
    let success_rate = (total - failures.len() as u64) as f64 / total as f64;
    Ok(RobustnessReport {
        kind,
        iterations,
        seed,
        stability_tolerance: STABILITY_TOLERANCE,
        combos: combo_stats,
        failures,
        success_rate,
        scatter,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    kind: GateKind,
    in1: bool,
    in2: Option<bool>,
    out_old: bool,
    expected: bool,
    nominal: &DeviceParams,
    variability: &VariabilitySpec,
    pulses: &ProgramPulses,
    setup: &GateSetup,
    seed: u64,
    iteration: u64,
    combo: usize,
) -> Result<[f64; 3], String> {
    let mut cells = Vec::with_capacity(3);
    let bits = [in1, in2.unwrap_or(false), out_old];
    for cell_idx in 0..3u64 {
        let cell_seed = derive_seed(seed, iteration, combo as u64, cell_idx);
        let params = sample_device(nominal, variability, cell_seed)
            .map_err(|e| format!("sampling: {e}"))?;
        let fresh = CellState::amorphous(params);
        let (written, _) = write_verify(&fresh, bits[cell_idx as usize], 10, pulses)
            .map_err(|e| format!("write-verify cell {cell_idx}: {e}"))?;
        cells.push(written);
    }
    let cells: [CellState; 3] = cells.try_into().expect("three cells");
    let result = execute_gate_circuit(kind, &cells, setup, kind.is_destructive())
        .map_err(|e| format!("gate: {e}"))?;
    if result.output != LogicLevel::from_bit(expected) {
        return Err(format!(
            "wrong output: expected {expected}, read {:?}",
            result.output
        ));
    }
    if !input_stability(&result, STABILITY_TOLERANCE) {
        return Err(format!(
            "input instability: drift {:.4}, preserved {}",
            result.max_input_drift, result.input_logic_preserved
        ));
    }
    Ok([
        result.post_resistance[0],
        result.post_resistance[1],
        result.post_resistance[2],
    ])
}
