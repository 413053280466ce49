//! Run configuration, binary field snapshots, CSV series and JSON manifests.

mod config;
mod manifest;
mod series;
mod snapshot;

pub use config::{
    parse_config, serialize_config, ControlSection, CostSection, EnsembleSection, GridSection, NoiseSection,
    OneOrMany, OutputSection, PotentialKind, PotentialSection, Profile, RunConfig, SolverSection, TargetKind,
    TimeSection, VerifySection,
};
pub use manifest::{sha256_hex, Manifest, RunTiming, SeedRecord, TOOL_NAME, TOOL_VERSION};
pub use series::Series;
pub use snapshot::{read_snapshot, read_snapshot_raw, write_snapshot, Snapshot, MAGIC, VERSION};
