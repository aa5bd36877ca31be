//! CLI command implementations. Each command writes its artifacts under
//! the `--out` directory together with a small `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::compiler::{lower, verify, CompiledProgram};
use crate::config::SimConfig;
use crate::crossbar::{format_program, Addr, Crossbar, CrossbarSetup};
use crate::device::{CellState, LogicLevel, Phase};
use crate::gates::{
    execute_gate_circuit, truth_table, write_verify, EvalMode, GateKind, GateSetup, ProgramPulses,
};
use crate::margins::{worst_case_margins, MarginReport};
use crate::montecarlo::monte_carlo;
use crate::netlist::parse_netlist;
use crate::waveform::PulseWaveform;

/// Exit codes shared by the binary: 0 ok, 2 usage (from clap), 3 config,
/// 4 verification/robustness failure, 5 margin failure.
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;
pub const EXIT_MARGIN: i32 = 5;

/// Resolved global options.
pub struct RunContext {
    pub config: SimConfig,
    pub seed: u64,
    pub out: PathBuf,
    manifest: Manifest,
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    seed: u64,
    preset: Option<String>,
    config_file: Option<String>,
    artifacts: Vec<String>,
}

impl RunContext {
    pub fn new(
        command: &str,
        config_path: Option<&Path>,
        preset: Option<&str>,
        seed: u64,
        out: &Path,
    ) -> Result<Self> {
        let base = match preset {
            Some(name) => SimConfig::preset(name)?,
            None => SimConfig::default(),
        };
        let config = match config_path {
            Some(p) => SimConfig::load(p, &base)?,
            None => base,
        };
        config.validate()?;
        fs::create_dir_all(out)
            .with_context(|| format!("cannot create output directory {}", out.display()))?;
        Ok(RunContext {
            config,
            seed,
            out: out.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                seed,
                preset: preset.map(str::to_string),
                config_file: config_path.map(|p| p.display().to_string()),
                artifacts: Vec::new(),
            },
        })
    }

    fn write_artifact(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.artifacts.push(name.to_string());
        Ok(path)
    }

    fn finish(&mut self) -> Result<()> {
        let manifest = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.out.join("manifest.json"), manifest)?;
        Ok(())
    }

    fn gate_setup(&self) -> GateSetup {
        self.config.gate.clone()
    }

    fn crossbar_setup(&self) -> CrossbarSetup {
        CrossbarSetup {
            params: self.config.device,
            variability: self.config.variability,
            gate: self.config.gate.clone(),
            ..Default::default()
        }
    }
}

/// Endurance count above which wear becomes a concern for the analyzed
/// device class.
pub const ENDURANCE_WARN_CYCLES: u64 = 10_000;

/// `characterize`: amplitude sweeps for set and reset, a set transient,
/// and an optional endurance run.
pub fn cmd_characterize(ctx: &mut RunContext, cycles: u64) -> Result<i32> {
    let params = ctx.config.device;
    let pulses = ProgramPulses::default();

    // set sweep: apply one set-shaped pulse of each amplitude to a fresh
    // amorphous cell
    let mut csv = String::from("amplitude_V,final_resistance_ohm,switched\n");
    for i in 0..=60 {
        let amplitude = i as f64 * 0.05;
        let mut cell = CellState::amorphous(params);
        if amplitude > 0.0 {
            let w = PulseWaveform::trapezoid(30e-9, 500e-9, 500e-9, amplitude)?;
            cell.apply_waveform(&w, pulses.dt)?;
        }
        let switched = cell.phase == Phase::Crystalline;
        csv.push_str(&format!(
            "{amplitude:.2},{},{}\n",
            cell.read_resistance(),
            switched as u8
        ));
    }
    ctx.write_artifact("set_sweep.csv", &csv)?;

    // reset sweep on a crystalline cell
    let mut csv = String::from("amplitude_V,final_resistance_ohm,reset\n");
    for i in 0..=40 {
        let amplitude = i as f64 * 0.1;
        let mut cell = CellState::crystalline(params);
        if amplitude > 0.0 {
            let w = PulseWaveform::trapezoid(30e-9, 50e-9, 30e-9, amplitude)?;
            cell.apply_reset_pulse(&w);
        }
        csv.push_str(&format!(
            "{amplitude:.2},{},{}\n",
            cell.read_resistance(),
            (cell.phase == Phase::Amorphous) as u8
        ));
    }
    ctx.write_artifact("reset_sweep.csv", &csv)?;

    // set transient at the nominal programming amplitude
    let mut cell = CellState::amorphous(params);
    let w = pulses.set.clone();
    let mut csv = String::from("time_s,v_V,resistance_ohm\n");
    let mut t = 0.0;
    let dt = pulses.dt;
    while t < w.duration() {
        let v = w.value(t);
        cell.step(v, dt)?;
        t += dt;
        csv.push_str(&format!("{t:.10e},{v:.6},{}\n", cell.conductance().recip()));
    }
    ctx.write_artifact("set_transient.csv", &csv)?;
    println!(
        "characterize: set threshold near {} V, reset above {} V (model values)",
        params.v_th, params.v_reset
    );

    if cycles > 0 {
        let mut cell = CellState::amorphous(params);
        for _ in 0..cycles {
            let (next, _) = write_verify(&cell, true, 5, &pulses)?;
            let (next, _) = write_verify(&next, false, 5, &pulses)?;
            cell = next;
        }
        println!(
            "endurance: {cycles} set/reset cycles completed, switch_count = {}",
            cell.switch_count
        );
        if cell.switch_count >= ENDURANCE_WARN_CYCLES {
            println!(
                "warning: switch count {} is at or above the {} cycle wear threshold",
                cell.switch_count, ENDURANCE_WARN_CYCLES
            );
        }
    }
    ctx.finish()?;
    Ok(0)
}

/// `gate`: run one gate and dump trace/events.
pub fn cmd_gate(
    ctx: &mut RunContext,
    kind: GateKind,
    in1: bool,
    in2: Option<bool>,
    out_old: bool,
    mode: EvalMode,
) -> Result<i32> {
    if kind.input_arity() == 2 && in2.is_none() {
        bail!("{} takes two inputs; pass --in2", kind.name());
    }
    if kind.input_arity() == 1 && in2.is_some() {
        bail!("{} takes a single input; drop --in2", kind.name());
    }
    match mode {
        EvalMode::Functional => {
            let out = crate::gates::execute_gate_functional(kind, in1, in2, out_old);
            println!(
                "{}({}, {}) with out_old={} -> {}",
                kind.name(),
                in1 as u8,
                in2.map_or("-".to_string(), |b| (b as u8).to_string()),
                out_old as u8,
                out as u8
            );
        }
        EvalMode::Circuit => {
            let params = ctx.config.device;
            let cells = [
                CellState::with_bit(in1, params),
                CellState::with_bit(in2.unwrap_or(false), params),
                CellState::with_bit(out_old, params),
            ];
            let setup = ctx.gate_setup();
            let result = execute_gate_circuit(kind, &cells, &setup, kind.is_destructive())?;
            let mut csv = Vec::new();
            result.trace.write_csv(&mut csv)?;
            ctx.write_artifact("trace.csv", &String::from_utf8(csv)?)?;
            ctx.write_artifact("events.json", &result.trace.events_json())?;
            println!(
                "{} -> {:?} (out was {:?}); input drift {:.2}%, events: {}",
                kind.name(),
                result.output,
                result.out_old,
                result.max_input_drift * 100.0,
                result.events.len()
            );
        }
    }
    // full truth table for context
    let rows = truth_table(kind, EvalMode::Functional, &ctx.gate_setup())?;
    ctx.write_artifact("truth_table.json", &serde_json::to_string_pretty(&rows)?)?;
    ctx.finish()?;
    Ok(0)
}

/// `margins`: worst-case corners for one or all gates. Nonzero exit when
/// any gate fails.
pub fn cmd_margins(ctx: &mut RunContext, kind: Option<GateKind>) -> Result<i32> {
    let kinds: Vec<GateKind> = match kind {
        Some(k) => vec![k],
        None => GateKind::ALL.to_vec(),
    };
    let setup = ctx.config.margin_setup();
    let bands = ctx.config.bands;
    let reports: Vec<MarginReport> = kinds
        .iter()
        .map(|&k| worst_case_margins(k, &bands, &setup))
        .collect();
    for r in &reports {
        println!(
            "{:<6} switching margin {:+.4} V, non-switching margin {:+.4} V -> {}",
            r.kind.name(),
            r.switching_margin,
            r.non_switching_margin,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    ctx.write_artifact("margins.json", &serde_json::to_string_pretty(&reports)?)?;
    ctx.finish()?;
    Ok(if reports.iter().all(|r| r.pass) {
        0
    } else {
        EXIT_MARGIN
    })
}

/// `montecarlo`: robustness under device-to-device variability.
pub fn cmd_montecarlo(ctx: &mut RunContext, kind: GateKind, iterations: u64) -> Result<i32> {
    let report = monte_carlo(
        kind,
        iterations,
        &ctx.config.variability,
        ctx.seed,
        &ctx.config.device,
        &ctx.gate_setup(),
    )?;
    println!(
        "{}: {} iterations x {} combinations, success rate {:.2}%",
        kind.name(),
        iterations,
        report.combos.len(),
        report.success_rate * 100.0
    );
    for f in report.failures.iter().take(10) {
        println!(
            "  fail: iteration {} combo {} seed {:#x}: {}",
            f.iteration, f.combo, f.seed, f.reason
        );
    }
    let mut csv = Vec::new();
    report.write_scatter_csv(&mut csv)?;
    ctx.write_artifact("scatter.csv", &String::from_utf8(csv)?)?;
    ctx.write_artifact("report.json", &serde_json::to_string_pretty(&report)?)?;
    ctx.finish()?;
    Ok(if report.all_passed() { 0 } else { EXIT_VERIFY })
}

fn compile_netlist(path: &Path, max_cols: usize) -> Result<(crate::netlist::Netlist, CompiledProgram)> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read netlist {}", path.display()))?;
    let netlist = parse_netlist(&text)?;
    let compiled = lower(&netlist, max_cols)?;
    Ok((netlist, compiled))
}

/// `compile`: lower a netlist and emit the micro-op program and allocation.
pub fn cmd_compile(ctx: &mut RunContext, netlist_path: &Path, max_cols: usize) -> Result<i32> {
    let (_, compiled) = compile_netlist(netlist_path, max_cols)?;
    ctx.write_artifact("program.txt", &format_program(&compiled.steps))?;
    ctx.write_artifact("alloc.json", &serde_json::to_string_pretty(&compiled)?)?;
    println!(
        "compiled: {} computation steps, {} init ops, {} cells peak",
        compiled.stats.computation_steps, compiled.stats.init_ops, compiled.stats.cells_used
    );
    for (gate, count) in &compiled.stats.gate_counts {
        println!("  {gate}: {count}");
    }
    ctx.finish()?;
    Ok(0)
}

/// `run`: compile and execute a netlist, either on one input vector or on
/// all vectors against the Boolean reference.
#[allow(clippy::too_many_arguments)]
pub fn cmd_run(
    ctx: &mut RunContext,
    netlist_path: &Path,
    max_cols: usize,
    mode: EvalMode,
    inputs: Option<&str>,
    all_vectors: bool,
) -> Result<i32> {
    let (netlist, compiled) = compile_netlist(netlist_path, max_cols)?;
    ctx.write_artifact("program.txt", &format_program(&compiled.steps))?;
    ctx.write_artifact("alloc.json", &serde_json::to_string_pretty(&compiled)?)?;

    if all_vectors {
        let report = verify(&netlist, &compiled, mode, &ctx.crossbar_setup(), ctx.seed)?;
        ctx.write_artifact("verify.json", &serde_json::to_string_pretty(&report)?)?;
        println!(
            "verified {} vectors ({}): {}",
            report.vectors_checked,
            if report.exhaustive {
                "exhaustive"
            } else {
                "sampled"
            },
            if report.passed() { "PASS" } else { "FAIL" }
        );
        for m in report.mismatches.iter().take(10) {
            println!("  mismatch: inputs {:?} expected {:?} got {:?}", m.inputs, m.expected, m.got);
        }
        ctx.finish()?;
        return Ok(if report.passed() { 0 } else { EXIT_VERIFY });
    }

    let Some(inputs) = inputs else {
        bail!("pass --inputs <bits> (one 0/1 per declared input) or --all-vectors");
    };
    if inputs.len() != netlist.inputs.len()
        || !inputs.chars().all(|c| c == '0' || c == '1')
    {
        bail!(
            "--inputs must be {} characters of 0/1 for inputs {:?}",
            netlist.inputs.len(),
            netlist.inputs
        );
    }
    let bits: Vec<bool> = inputs.chars().map(|c| c == '1').collect();
    let mut array = Crossbar::create(1, compiled.num_cols, ctx.crossbar_setup(), ctx.seed)?;
    for (col, &bit) in compiled.input_columns.iter().zip(&bits) {
        array.write(Addr::new(0, *col), bit)?;
    }
    let report = array.run_program(&compiled.steps, mode)?;
    ctx.write_artifact("run.json", &serde_json::to_string_pretty(&report)?)?;
    ctx.write_artifact("state.csv", &array.dump_logic_csv())?;
    for (name, &col) in netlist.outputs.iter().zip(&compiled.output_columns) {
        let value = match array.cell(Addr::new(0, col))?.logic_value() {
            LogicLevel::Zero => "0",
            LogicLevel::One => "1",
            LogicLevel::Indeterminate => "?",
        };
        println!("{name} = {value}");
    }
    ctx.finish()?;
    Ok(0)
}
