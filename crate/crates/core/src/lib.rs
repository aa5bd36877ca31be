//! Device-level simulation and compilation for stateful logic in
//! phase-change memory.
//!
//! Layers, bottom to top:
//!
//! * [`device`] — behavioral model of one PCM cell (threshold switching,
//!   crystallization, melt-quench reset)
//! * [`solver`] — transient/steady-state solver for cells sharing one
//!   bottom-electrode node
//! * [`gates`] — the native stateful gates (NOR, IMPLY, OR, NIMP) with
//!   their pulse schemes, plus write-verify programming
//! * [`margins`], [`montecarlo`] — worst-case corners and variability
//! * [`crossbar`] — rows x cols arrays running row-parallel micro-op steps
//! * [`netlist`], [`compiler`] — combinational netlists lowered onto the
//!   native gate set and verified against a Boolean reference
//!
//! The device, waveform and solver layers are generic over the scalar type
//! (`f32` or `f64`); everything above them uses the `f64` defaults.

pub mod compiler;
pub mod config;
pub mod crossbar;
pub mod device;
pub mod gates;
pub mod margins;
pub mod montecarlo;
pub mod netlist;
mod scalar;
pub mod solver;
pub mod variability;
pub mod waveform;
pub mod workbench;

pub use scalar::Scalar;

/// `f64` concrete aliases for the generic layers (the crate-wide default).
pub type DeviceParams = device::DeviceParams<f64>;
pub type CellState = device::CellState<f64>;
pub type PulseWaveform = waveform::PulseWaveform<f64>;
pub type CircuitConfig = solver::CircuitConfig<f64>;
pub type SimTrace = solver::SimTrace<f64>;

/// `f32` aliases for memory-constrained sweeps.
pub type DeviceParamsF32 = device::DeviceParams<f32>;
pub type CellStateF32 = device::CellState<f32>;
pub type PulseWaveformF32 = waveform::PulseWaveform<f32>;
pub type CircuitConfigF32 = solver::CircuitConfig<f32>;
pub type SimTraceF32 = solver::SimTrace<f32>;

pub use config::SimConfig;
pub use device::{LogicLevel, Phase};
pub use gates::{EvalMode, GateKind};
