//! Scheduling engine and demand-response simulator for an integrated
//! hydrogen, direct-reduction, electric-arc-furnace and methanol plant.
//!
//! The crate is organized bottom-up: a small MILP intermediate
//! representation over HiGHS, physical unit models, the four-problem
//! scheduler, the rolling simulation engine, and dual-side metrics.

pub mod config;
pub mod eaf_region;
pub mod fixtures;
pub mod metrics;
pub mod milp;
pub mod process_units;
pub mod rolling_engine;
pub mod scheduler;

pub use config::{
    ConfigError, CoreUnit, ExogenousScenario, HistoryLibrary, Horizon, OrderUnit, PenaltyConfig,
    PenaltyMechanism, PlantConfig, ScenarioRow,
};
pub use eaf_region::{EafPolytope, EafState, MaterialId};
pub use milp::{LinExpr, MilpError, MilpModel, SolveResult, SolveStatus, VarId};
pub use metrics::{MetricsError, MetricsReport};
pub use process_units::{LagUnitParams, StorageId, StorageParams};
pub use rolling_engine::{ForecastModel, PacingMode, RollingError, RunRecord};
pub use scheduler::{DispatchSolution, Mode, OfferSeries, PlantState, SchedulerError};
