//! The cluster stability index family: profile stability (pCSI), durable
//! learning (dCSI), error decay (eCSI) and their geometric-mean combination.

pub mod csi;
pub mod dcsi;
pub mod ecsi;
pub mod fisher;
pub mod pcsi;
pub mod similarity;

pub use csi::{csi, Component, CsiResult};
pub use dcsi::{dcsi, screen_items, DcsiResult, MissingDelay, Screening};
pub use ecsi::{ecsi, ecsi_task, EcsiResult, TaskEcsi, TaskOutcome};
pub use fisher::{fisher_aggregate, fisher_z};
pub use pcsi::{bootstrap_interval, pcsi, ExcludedRun, Interval, PcsiResult, DEFAULT_BOOTSTRAP_N};
pub use similarity::{profile_similarity, SimilarityMeasure};
