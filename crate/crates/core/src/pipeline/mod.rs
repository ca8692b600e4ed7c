//! Configuration, CSV ingestion, orchestration and result files.

pub mod config;
pub mod ingest;
pub mod output;
pub mod run;

pub use config::{Coupling, EpochList, RunConfig};
pub use ingest::{ingest_csv, IngestReport};
pub use run::{
    run_build_field, run_granger, run_ingest, run_replicate, run_rqa, run_simulate, ResultBundle,
};
