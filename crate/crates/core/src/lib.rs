//! Downlink scheduling and power allocation for mixed real-time (hard
//! deadline) and non-real-time traffic over on-off fading channels.
//!
//! The [`policy`] module holds the per-slot drift-plus-penalty decision,
//! [`baseline`] a fixed-power comparison policy, [`sim`] the Monte-Carlo
//! engine, [`oracle`] an exhaustive per-slot maximiser used for
//! verification, and [`experiment`] config loading, sweeps and CSV output.

pub mod baseline;
pub mod experiment;
pub mod lambertw;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod sim;

pub use model::{ConfigError, NrtTraffic, SlotDecision, SystemConfig, UserState};
pub use sim::{run, MetricsReport, PolicyKind};
