//! Measurements on simulated traces: spectrograms and ridge tracking,
//! Welch phase-noise densities, and least-squares fits.

mod fit;
mod psd;
mod spectrogram;

pub use fit::{fit_sinusoid, linear_fit, LinearFit, SineFit};
pub use psd::{
    phase_noise_psd, phase_noise_psd_with, welch, PhaseNoisePsd, PsdOptions, WelchEstimate, SSB_CONVENTION,
};
pub use spectrogram::{
    ridge_point, ridge_track, stft, write_spectrogram_binary, write_spectrogram_csv, Ridge, RidgePoint,
    Spectrogram, SpectrogramSidecar, Stft, RIDGE_GUARD_BINS, RIDGE_MARGIN_DB,
};
