//! End-to-end acceptance gate. Each test covers one release criterion and
//! prints a single PASS/FAIL line (run with `--nocapture` to see them all).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcmsim::compiler::{lower, verify};
use pcmsim::config::SimConfig;
use pcmsim::crossbar::CrossbarSetup;
use pcmsim::device::{CellState, DeviceParams, LogicLevel};
use pcmsim::gates::{
    execute_gate_circuit, execute_gate_functional, gate_config_with, gate_drives, input_stability,
    operand_combinations, plateau_voltages, EvalMode, GateKind, GateSetup,
};
use pcmsim::montecarlo::monte_carlo;
use pcmsim::netlist::{parse_netlist, Netlist};
use pcmsim::solver::{solve_transient, steady_state_node_voltage, CircuitConfig, TeDrive};
use pcmsim::variability::VariabilitySpec;
use pcmsim::waveform::PulseWaveform;

struct Criterion {
    name: &'static str,
    budget_s: Option<f64>,
    start: Instant,
}

impl Criterion {
    fn new(name: &'static str, budget_s: Option<f64>) -> Self {
        Criterion {
            name,
            budget_s,
            start: Instant::now(),
        }
    }

    fn finish(self, pass: bool) {
        let elapsed = self.start.elapsed().as_secs_f64();
        let within = self.budget_s.map_or(true, |b| elapsed <= b);
        let verdict = if pass && within { "PASS" } else { "FAIL" };
        println!("acceptance: {} ... {verdict} ({elapsed:.2}s)", self.name);
        assert!(pass, "{} failed", self.name);
        assert!(
            within,
            "{} exceeded its {:?}s budget ({elapsed:.2}s)",
            self.name, self.budget_s
        );
    }
}

/// 1. Circuit-level truth tables for all four gates: correct logic values,
///    inputs logically unchanged, input resistance drift <= 5%.
#[test]
fn criterion_1_circuit_truth_tables() {
    let c = Criterion::new("1 circuit truth tables", Some(5.0));
    let setup = GateSetup::default();
    let params = DeviceParams::default();
    let mut pass = true;
    for kind in GateKind::ALL {
        for (in1, in2, out_old) in operand_combinations(kind) {
            let cells = [
                CellState::with_bit(in1, params),
                CellState::with_bit(in2.unwrap_or(false), params),
                CellState::with_bit(out_old, params),
            ];
            let result =
                execute_gate_circuit(kind, &cells, &setup, kind.is_destructive()).unwrap();
            let expected = execute_gate_functional(kind, in1, in2, out_old);
            let ok = result.output == LogicLevel::from_bit(expected)
                && input_stability(&result, 0.05);
            if !ok {
                eprintln!(
                    "  {} in1={in1} in2={in2:?} out_old={out_old}: got {:?}, expected {expected}, drift {:.3}",
                    kind.name(),
                    result.output,
                    result.max_input_drift
                );
                pass = false;
            }
        }
    }
    c.finish(pass);
}

/// 2. 50-iteration Monte Carlo robustness at default variability: 100%
///    success for every gate and operand combination.
#[test]
fn criterion_2_monte_carlo_robustness() {
    let c = Criterion::new("2 fifty-iteration robustness", Some(60.0));
    let mut pass = true;
    for kind in GateKind::ALL {
        let report = monte_carlo(
            kind,
            50,
            &VariabilitySpec::default(),
            7,
            &DeviceParams::default(),
            &GateSetup::default(),
        )
        .unwrap();
        if !report.all_passed() {
            eprintln!("  {}: {} failures", kind.name(), report.failures.len());
            for f in report.failures.iter().take(3) {
                eprintln!("    iter {} combo {}: {}", f.iteration, f.combo, f.reason);
            }
            pass = false;
        }
        for combo in &report.combos {
            if combo.successes != 50 {
                pass = false;
            }
        }
    }
    c.finish(pass);
}

/// 3. Divider oracle: the steady-state node solver matches independent
///    hand nodal analysis (plain arithmetic, no solver types) to 1e-9
///    relative on three worked corners.
#[test]
fn criterion_3_divider_oracle() {
    let c = Criterion::new("3 divider oracle", None);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut pass = true;

    // OR, both inputs HRS (100 kOhm), output HRS, BE floating:
    // three equal conductances, so V_B = 1.2/3 and the output cell sees
    // exactly two thirds of the applied voltage.
    {
        let v_b_hand: f64 = (1.2 / 100e3) / (3.0 / 100e3);
        let v_out_hand = 1.2 - v_b_hand;
        assert!((v_out_hand - 2.0 / 3.0 * 1.2).abs() < 1e-15);
        let g = [1.0 / 100e3; 3];
        let v_b = steady_state_node_voltage(
            &[Some(0.0), Some(0.0), Some(1.2)],
            &g,
            &pcmsim::solver::BeMode::Floating,
        )
        .unwrap();
        if rel(1.2 - v_b, v_out_hand) > 1e-9 {
            eprintln!("  OR corner: solver {} vs hand {}", 1.2 - v_b, v_out_hand);
            pass = false;
        }
    }

    // NOR with one LRS input at 10 kOhm, other input and output at 1 MOhm,
    // BE through the 10 kOhm fixed resistor:
    // V_B = (0.6/10k + 0.6/1M + 1.2/1M) / (1/10k + 2/1M + 1/10k)
    {
        let num: f64 = 0.6 / 10e3 + 0.6 / 1e6 + 1.2 / 1e6;
        let den = 1.0 / 10e3 + 2.0 / 1e6 + 1.0 / 10e3;
        let v_out_hand = 1.2 - num / den;
        assert!((v_out_hand - 0.894).abs() < 1e-3);
        let v_b = steady_state_node_voltage(
            &[Some(0.6), Some(0.6), Some(1.2)],
            &[1.0 / 10e3, 1.0 / 1e6, 1.0 / 1e6],
            &pcmsim::solver::BeMode::Resistor(10e3),
        )
        .unwrap();
        if rel(1.2 - v_b, v_out_hand) > 1e-9 {
            eprintln!("  NOR corner: solver {} vs hand {}", 1.2 - v_b, v_out_hand);
            pass = false;
        }
    }

    // NIMP switching corner at the resistance band edges (IN1 LRS 10 kOhm,
    // IN2 and OUT HRS 100 kOhm), measured 0.35 V on IN2, BE floating:
    // V_B = (1.2/10k + 0.35/100k) / (1/10k + 2/100k); OUT is grounded so
    // it sees the full V_B.
    {
        let v_out_hand: f64 = (1.2 / 10e3 + 0.35 / 100e3) / (1.0 / 10e3 + 2.0 / 100e3);
        assert!((v_out_hand - 1.03).abs() < 2e-3);
        let v_b = steady_state_node_voltage(
            &[Some(1.2), Some(0.35), Some(0.0)],
            &[1.0 / 10e3, 1.0 / 100e3, 1.0 / 100e3],
            &pcmsim::solver::BeMode::Floating,
        )
        .unwrap();
        if rel(v_b, v_out_hand) > 1e-9 {
            eprintln!("  NIMP corner: solver {v_b} vs hand {v_out_hand}");
            pass = false;
        }
    }
    c.finish(pass);
}

/// Run OR(0, 0) with a given rise time and preset; true if the output
/// spuriously threshold-switches (any switching event on any cell counts
/// against the gate: the operands must sit below v_th for the whole pulse).
fn or_gate_spurious_switch(config: &SimConfig, rise: f64) -> bool {
    let params = config.device;
    let cells = vec![
        CellState::with_bit(false, params),
        CellState::with_bit(false, params),
        CellState::with_bit(false, params),
    ];
    let mut setup = config.gate.clone();
    setup.timings.rise = rise;
    setup.record_stride = 0;
    let gate_config = gate_config_with(GateKind::Or, &setup.levels, setup.r_fix);
    let (drives, duration) = gate_drives(&gate_config, &setup.timings);
    let circuit = CircuitConfig {
        cells,
        drives,
        be_mode: gate_config.be_mode,
        c_p: setup.c_p,
    };
    let result = solve_transient(&circuit, duration, &setup.policy()).unwrap();
    !result.trace.events.is_empty()
}

/// 4. RC-delay property: under probe-station parasitics a 10 ns rise makes
///    the OR output threshold-switch for the 0,0 input (the node voltage
///    lags, so OUT transiently sees the full amplitude), the 70 us rise
///    produces no event; with on-chip parasitics both rise times are clean.
#[test]
fn criterion_4_rc_delay_property() {
    let c = Criterion::new("4 RC-delay reproduction", Some(10.0));
    let experimental = SimConfig::preset("experimental-setup").unwrap();
    let integrated = SimConfig::preset("integrated").unwrap();
    let mut pass = true;
    if !or_gate_spurious_switch(&experimental, 10e-9) {
        eprintln!("  expected a spurious switching event at 10 ns rise with pF parasitics");
        pass = false;
    }
    if or_gate_spurious_switch(&experimental, 70e-6) {
        eprintln!("  unexpected switching event at 70 us rise with pF parasitics");
        pass = false;
    }
    for rise in [10e-9, 70e-6] {
        if or_gate_spurious_switch(&integrated, rise) {
            eprintln!("  unexpected switching event at {rise} s rise with 10 fF");
            pass = false;
        }
    }
    c.finish(pass);
}

const NETLIST_OPS: [&str; 8] = ["NOR", "IMPLY", "OR", "NIMP", "NOT", "AND", "NAND", "XOR"];

fn random_netlist(rng: &mut ChaCha8Rng) -> Netlist {
    let n_inputs = rng.gen_range(1..=8usize);
    let n_gates = rng.gen_range(1..=25usize);
    let mut text = String::from("inputs");
    let mut signals: Vec<String> = (0..n_inputs).map(|i| format!("i{i}")).collect();
    for s in &signals {
        text.push(' ');
        text.push_str(s);
    }
    text.push_str(";\n");
    for g in 0..n_gates {
        let op = NETLIST_OPS[rng.gen_range(0..NETLIST_OPS.len())];
        let a = &signals[rng.gen_range(0..signals.len())];
        let line = if op == "NOT" {
            format!("g{g} = {op}({a});\n")
        } else {
            let b = &signals[rng.gen_range(0..signals.len())];
            format!("g{g} = {op}({a}, {b});\n")
        };
        text.push_str(&line);
        signals.push(format!("g{g}"));
    }
    // the last gate plus a couple of random signals as outputs
    let mut outs = vec![signals.last().unwrap().clone()];
    for _ in 0..rng.gen_range(0..3usize) {
        let s = signals[rng.gen_range(0..signals.len())].clone();
        if !outs.contains(&s) {
            outs.push(s);
        }
    }
    text.push_str(&format!("out {};\n", outs.join(" ")));
    parse_netlist(&text).expect("generated netlist is well-formed")
}

/// 5. Compiler equivalence: 200 random netlists verify exhaustively in
///    functional mode, the 20 cheapest also at circuit level; XOR is two
///    computation steps; the full adder passes 8/8.
#[test]
fn criterion_5_compiler_equivalence() {
    let c = Criterion::new("5 compiler equivalence", Some(300.0));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut pass = true;

    let functional = CrossbarSetup::default();
    let mut candidates: Vec<(u64, Netlist)> = Vec::new();
    for i in 0..200 {
        let netlist = random_netlist(&mut rng);
        let compiled = lower(&netlist, 96).unwrap();
        let report = verify(&netlist, &compiled, EvalMode::Functional, &functional, 1).unwrap();
        if !(report.exhaustive && report.passed()) {
            eprintln!("  netlist {i} failed functional verify: {:?}", report.mismatches.first());
            pass = false;
        }
        let cost = (1u64 << netlist.inputs.len()) * compiled.stats.computation_steps as u64;
        candidates.push((cost, netlist));
    }

    // circuit mode on the 20 cheapest (vector count x steps)
    candidates.sort_by_key(|(cost, _)| *cost);
    let circuit_setup = CrossbarSetup::fast();
    for (i, (_, netlist)) in candidates.iter().take(20).enumerate() {
        let compiled = lower(netlist, 96).unwrap();
        let report = verify(netlist, &compiled, EvalMode::Circuit, &circuit_setup, 1).unwrap();
        if !report.passed() {
            eprintln!("  circuit netlist {i} failed: {:?}", report.mismatches.first());
            pass = false;
        }
    }

    let xor = parse_netlist("inputs a b;\nx = XOR(a, b);\nout x;\n").unwrap();
    let compiled = lower(&xor, 8).unwrap();
    if compiled.stats.computation_steps != 2 {
        eprintln!("  XOR took {} steps, expected 2", compiled.stats.computation_steps);
        pass = false;
    }

    let adder = parse_netlist(
        "inputs a b cin;\nx = XOR(a, b);\ns = XOR(x, cin);\nu = AND(a, b);\nv = AND(x, cin);\ncout = OR(u, v);\nout s cout;\n",
    )
    .unwrap();
    let compiled = lower(&adder, 16).unwrap();
    let report = verify(&adder, &compiled, EvalMode::Circuit, &circuit_setup, 1).unwrap();
    if !(report.vectors_checked == 8 && report.passed()) {
        eprintln!("  full adder: {}/{} vectors", 8 - report.mismatches.len(), 8);
        pass = false;
    }
    c.finish(pass);
}

/// 6. Quasi-static consistency: for every non-switching combination the
///    transient plateau V_B matches the closed-form divider within 1 mV at
///    c_p = 1 fF.
#[test]
fn criterion_6_quasi_static_consistency() {
    let c = Criterion::new("6 quasi-static consistency", None);
    let params = DeviceParams::default();
    let mut setup = GateSetup::default();
    setup.c_p = 1e-15;
    let mut pass = true;
    for kind in GateKind::ALL {
        for (in1, in2, out_old) in operand_combinations(kind) {
            if execute_gate_functional(kind, in1, in2, out_old) != out_old {
                continue; // switching case
            }
            let cells = [
                CellState::with_bit(in1, params),
                CellState::with_bit(in2.unwrap_or(false), params),
                CellState::with_bit(out_old, params),
            ];
            let result =
                execute_gate_circuit(kind, &cells, &setup, kind.is_destructive()).unwrap();
            if !result.events.is_empty() {
                eprintln!("  {} {in1}/{in2:?}/{out_old}: unexpected events", kind.name());
                pass = false;
                continue;
            }
            let config = gate_config_with(kind, &setup.levels, setup.r_fix);
            let te = plateau_voltages(&config);
            let g: Vec<f64> = cells.iter().map(|cell| cell.conductance()).collect();
            let expected = steady_state_node_voltage(&te, &g, &config.be_mode).unwrap();
            // sample at the evaluation/hold plateau: last sample before the
            // final fall edge
            let t_plateau = match kind {
                GateKind::Nor | GateKind::Imply => {
                    setup.timings.edge + setup.timings.settle + setup.timings.edge
                        + setup.timings.evaluate * 0.9
                }
                _ => setup.timings.rise + setup.timings.hold * 0.9,
            };
            let idx = result
                .trace
                .time
                .iter()
                .position(|&t| t >= t_plateau)
                .unwrap();
            let v_b = result.trace.v_be[idx];
            if (v_b - expected).abs() > 1e-3 {
                eprintln!(
                    "  {} {in1}/{in2:?}/{out_old}: plateau V_B {v_b} vs {expected}",
                    kind.name()
                );
                pass = false;
            }
        }
    }
    c.finish(pass);
}

/// 7. Endurance accounting through the CLI: 10^4 alternating set/reset
///    cycles report switch_count = 10^4 and the wear warning fires.
#[test]
fn criterion_7_endurance_accounting() {
    let c = Criterion::new("7 endurance accounting", None);
    let dir = tempfile::tempdir().unwrap();
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_pcmsim"))
        .args(["characterize", "--cycles", "10000", "--out"])
        .arg(dir.path())
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&output.stdout);
    let mut pass = true;
    if !output.status.success() {
        eprintln!("  characterize exited with {:?}", output.status.code());
        pass = false;
    }
    if !stdout.contains("switch_count = 10000") {
        eprintln!("  missing switch_count report in: {stdout}");
        pass = false;
    }
    if !stdout.contains("warning") {
        eprintln!("  endurance warning did not fire in: {stdout}");
        pass = false;
    }
    c.finish(pass);
}

/// Waveform-sanity companion to criterion 4: at the plateau the OR drive
/// really reaches its amplitude regardless of rise time.
#[test]
fn ramp_reaches_amplitude() {
    for rise in [10e-9, 70e-6] {
        let w = PulseWaveform::<f64>::new(vec![(rise, 1.2), (1e-6, 1.2), (1e-6, 0.0)]).unwrap();
        assert!((w.value(rise + 0.5e-6) - 1.2).abs() < 1e-12);
        assert_eq!(w.amplitude(), 1.2);
        assert!(matches!(
            TeDrive::Waveform(w).voltage(rise + 0.5e-6),
            Some(v) if (v - 1.2).abs() < 1e-12
        ));
    }
}
