//! Worst-case DC margin analysis: with every cell pinned to its band-edge
//! resistance, the voltage across OUT must clear `v_th` in every switching
//! case and stay below it in every non-switching case.

use serde::{Deserialize, Serialize};

use crate::gates::{
    execute_gate_functional, gate_config_with, operand_combinations, plateau_voltages, GateKind,
    GateLevels,
};
use crate::solver::steady_state_node_voltage;

/// Band-edge resistances used for the corner assignments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceBands {
    /// A logical-1 cell is placed at this LRS band edge.
    pub lrs: f64,
    /// A logical-0 cell is placed at this HRS band edge.
    pub hrs: f64,
}

impl Default for ResistanceBands {
    fn default() -> Self {
        ResistanceBands {
            lrs: 10e3,
            hrs: 100e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginCase {
    pub in1: bool,
    pub in2: Option<bool>,
    pub out_old: bool,
    pub switching: bool,
    /// |V_TE_OUT - V_B| at the evaluation plateau.
    pub v_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub kind: GateKind,
    pub v_th: f64,
    pub cases: Vec<MarginCase>,
    /// min over switching cases of V_OUT - v_th
    pub switching_margin: f64,
    /// min over non-switching cases of v_th - V_OUT
    pub non_switching_margin: f64,
    pub pass: bool,
}

/// Corner setup for `worst_case_margins`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSetup {
    pub levels: GateLevels,
    pub r_fix: f64,
    pub v_th: f64,
}

impl Default for MarginSetup {
    fn default() -> Self {
        MarginSetup {
            levels: GateLevels::default(),
            r_fix: 10e3,
            v_th: 1.0,
        }
    }
}

/// Sweep the band-edge corner assignment of every operand combination and
/// report the worst switching and non-switching margins. Both must be
/// positive for a PASS.
pub fn worst_case_margins(
    kind: GateKind,
    bands: &ResistanceBands,
    setup: &MarginSetup,
) -> MarginReport {
    let config = gate_config_with(kind, &setup.levels, setup.r_fix);
    let te = plateau_voltages(&config);
    let mut cases = Vec::new();
    for (in1, in2, out_old) in operand_combinations(kind) {
        let r_of = |bit: bool| if bit { bands.lrs } else { bands.hrs };
        // IMPLY's second operand is OUT itself; the gate switches when the
        // functional result flips a 0 output to 1.
        let switching = !out_old && execute_gate_functional(kind, in1, in2, out_old);
        let g = [
            1.0 / r_of(in1),
            1.0 / r_of(in2.unwrap_or(false)),
            1.0 / r_of(out_old),
        ];
        let v_b = steady_state_node_voltage(&te, &g, &config.be_mode)
            .expect("gate circuits always have a conduction path");
        let v_out = (te[2].unwrap_or(v_b) - v_b).abs();
        cases.push(MarginCase {
            in1,
            in2,
            out_old,
            switching,
            v_out,
        });
    }
    let switching_margin = cases
        .iter()
        .filter(|c| c.switching)
        .map(|c| c.v_out - setup.v_th)
        .fold(f64::INFINITY, f64::min);
    let non_switching_margin = cases
        .iter()
        .filter(|c| !c.switching)
        .map(|c| setup.v_th - c.v_out)
        .fold(f64::INFINITY, f64::min);
    MarginReport {
        kind,
        v_th: setup.v_th,
        pass: switching_margin > 0.0 && non_switching_margin > 0.0,
        cases,
        switching_margin,
        non_switching_margin,
    }
}
