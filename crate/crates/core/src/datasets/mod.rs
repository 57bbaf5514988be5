//! Analytic signal models, the synthetic scale-generalization task, and WAV
//! ingestion.

pub mod signal;
pub mod task;
pub mod wav;

pub use signal::{sample_signal, sample_signal_periodic, GaborAtom, NoiseSpec, SignalModel};
pub use task::{generate_task, read_manifest, write_manifest, Example, Split, SyntheticTask, TaskData};
pub use wav::{read_wav, write_wav, WavClip, WavError};
