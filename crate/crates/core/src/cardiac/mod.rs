//! Ground-truth source dynamics and body-surface recordings.

mod ap;
mod recording;

pub use ap::{select_pacing_sites, simulate_ap, APParams, APState, HeartPotential, PacingSite};
pub use recording::{add_noise, forward_project, measured_snr_db, BodyRecording};
