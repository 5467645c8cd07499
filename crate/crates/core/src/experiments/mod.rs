//! Experiment harness: JSON-configured sweeps and fuzz batteries with
//! deterministic CSV/SVG artifacts.

pub mod battery;
pub mod config;
pub mod report;
pub mod sweeps;

pub use battery::{
    mutant_median, run_lemma_battery, run_lemma_battery_with, BatteryReport, LemmaOutcome,
    MedianFn,
};
pub use config::{parse_kernel, DyadicSpec, FuzzSpec, RunConfig, SpaceSpec, SystemFile, WeightSpec};
pub use report::{fmt_float, Chart, Series, Table};
pub use sweeps::{
    operators_json, run_a2_cell, run_a2_sweep, run_complexity_cell, run_complexity_sweep,
    run_oscillation_battery, GammaChain, SlopeRow, SweepResult, SweepRow, TraceRow,
};
