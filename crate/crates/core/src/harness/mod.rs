//! Episode simulation, dataset generation, Monte-Carlo evaluation, power
//! sweeps and result export.

pub mod dataset;
pub mod episode;
pub mod eval;
pub mod export;
pub mod sweep;

pub use dataset::{dataset_hash, generate_dataset};
pub use episode::{run_episode, EpisodeRngs, EpisodeTrace, Method, SlotRecord};
pub use eval::{monte_carlo_eval, EvalReport, MethodStats};
pub use export::{write_csv, write_json, CSV_HEADER};
pub use sweep::{power_sweep, SweepMode, SweepRow, DEFAULT_POWER_GRID};
