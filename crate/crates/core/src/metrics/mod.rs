//! Error metrics for pairwise and per-particle quantities, the force and
//! potential evaluation suites, field renders and offset statistics.

mod field;
mod offsets;
mod predictor;
mod report;
mod suite;

pub use field::{angle_error, render_field, FieldCell, FieldGrid, GridSpec, PairFunction, Probe};
pub use offsets::{discontinuity_offset_stats, OffsetStats, RegionStats};
pub use predictor::{AnalyticOracle, GroundTruth, Predictor, StepOutput};
pub use report::{aggregate, write_aggregate_csv, Aggregate, MetricsReport, ReportMeta};
pub use suite::{force_suite, mae_inter, mae_part, potential_suite};
