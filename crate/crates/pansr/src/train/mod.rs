//! Progressive training: schedules, the data pyramid, the main loop, and
//! checkpointing.

mod checkpoint;
mod pyramid;
mod schedule;
mod trainer;

pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use pyramid::{build_pyramid, gather, DataPyramid};
pub use schedule::{alpha_at, desk_schedule, paper_schedule, TrainSchedule};
pub use trainer::{write_csv, LogRow, TrainMode, TrainOptions, Trainer};
