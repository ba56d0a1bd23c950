//! Scenario assembly, the simulation loop and trace I/O.

pub mod config;
pub mod scenario;
pub mod sim;
pub mod trace;

pub use config::{Role, ScenarioConfig};
pub use scenario::{build_scenario, AgentState, Scenario};
pub use sim::{run, run_with_counterfactual, BoundRecord, CounterfactualRun, RunOptions, Simulation};
pub use trace::{
    metrics_table, read_trace_csv, write_bounds_csv, write_metrics_csv, AgentRecord, Event, SimTrace, WeightRecord,
};
