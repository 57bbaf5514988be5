//! Classical time-frequency transforms and checks of their behaviour under
//! translation and dilation of the input.

pub mod cwt;
pub mod fft;
pub mod stft;
pub mod theorem;

pub use cwt::{cwt, scalogram, MotherWavelet};
pub use fft::{dft, fft, fft_real, ifft};
pub use stft::{spectrogram, stft};
pub use theorem::{verify, verify_all, Property, PropertyReport, TheoremConfig};
