use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::linear_fit;
use crate::envelope::{unwrap_phase, EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};

/// One-sided Welch estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct WelchEstimate {
    /// Bin frequencies `k / (segment_len dt)` for `k = 0..=segment_len/2`.
    pub freqs: Vec<f64>,
    /// One-sided PSD, units^2/Hz.
    pub psd: Vec<f64>,
    pub segment_len: usize,
    pub segments: usize,
}

impl WelchEstimate {
    pub fn resolution(&self) -> f64 {
        self.freqs[1]
    }

    /// Integral of the PSD over all bins.
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution()
    }
}

/// Welch PSD with a periodic Hann window, 50 % overlap and per-segment mean
/// removal.
pub fn welch(x: &[f64], dt: f64, segment_len: usize) -> Result<WelchEstimate> {
    if segment_len < 4 {
        return Err(Error::config("segment_len", "must be at least 4"));
    }
    if x.len() < segment_len {
        return Err(Error::InsufficientLength {
            reason: format!("{} samples, segment needs {segment_len}", x.len()),
        });
    }
    let n = segment_len;
    let hop = n / 2;
    let segments = (x.len() - n) / hop + 1;
    let window: Vec<f64> = (0..n).map(|i| 0.5 * (1.0 - (TAU * i as f64 / n as f64).cos())).collect();
    let w2: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let half = n / 2;
    let mut acc = vec![0.0; half + 1];
    for s in 0..segments {
        let seg = &x[s * hop..s * hop + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, v), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = dt / (w2 * segments as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (k == half && n % 2 == 0) { 1.0 } else { 2.0 };
            a * scale * one_sided
        })
        .collect();
    Ok(WelchEstimate {
        freqs: (0..=half).map(|k| k as f64 / (n as f64 * dt)).collect(),
        psd,
        segment_len: n,
        segments,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdOptions {
    /// Welch segment length; defaults to the longest power of two giving at
    /// least `min_segments` segments.
    pub segment_len: Option<usize>,
    pub min_segments: usize,
    /// Report grid density.
    pub points_per_decade: usize,
    /// Lowest report offset; defaults to two Welch bins and may not be below
    /// ten over the record length.
    pub f_min: Option<f64>,
    /// Highest report offset; defaults to Nyquist.
    pub f_max: Option<f64>,
}

impl Default for PsdOptions {
    fn default() -> Self {
        Self {
            segment_len: None,
            min_segments: 16,
            points_per_decade: 10,
            f_min: None,
            f_max: None,
        }
    }
}

/// Single-sideband phase-noise density `L(f) = S_phi(f) / 2` on a
/// log-spaced offset grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoisePsd {
    pub offsets: Vec<f64>,
    /// dBc/Hz.
    pub l_dbc: Vec<f64>,
    pub resolution_hz: f64,
    pub segment_len: usize,
    pub segments: usize,
    pub detrended: bool,
}

pub const SSB_CONVENTION: &str = "L(f) = S_phi(f)/2, single sideband, dBc/Hz";

impl PhaseNoisePsd {
    /// `L` at `f`, interpolated linearly in log frequency.
    pub fn at(&self, f: f64) -> Option<f64> {
        let i = self.offsets.partition_point(|&x| x < f);
        if i < self.offsets.len() && (self.offsets[i] - f).abs() <= 1e-9 * f {
            return Some(self.l_dbc[i]);
        }
        if i == 0 || i == self.offsets.len() {
            return None;
        }
        let (f0, f1) = (self.offsets[i - 1].ln(), self.offsets[i].ln());
        let w = (f.ln() - f0) / (f1 - f0);
        Some(self.l_dbc[i - 1] * (1.0 - w) + self.l_dbc[i] * w)
    }

    /// Writes `f_Hz,L_dBc_per_Hz` plus a JSON sidecar stating the convention.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "f_Hz,L_dBc_per_Hz")?;
        for (f, l) in self.offsets.iter().zip(&self.l_dbc) {
            writeln!(out, "{f:?},{l:?}")?;
        }
        out.flush()?;
        let meta = serde_json::json!({
            "convention": SSB_CONVENTION,
            "resolution_hz": self.resolution_hz,
            "segment_len": self.segment_len,
            "segments": self.segments,
            "window": "hann",
            "overlap": 0.5,
            "linear_phase_trend_removed": self.detrended,
        });
        serde_json::to_writer_pretty(BufWriter::new(File::create(path.with_extension("json"))?), &meta)?;
        Ok(())
    }
}

pub fn phase_noise_psd(s: &TimeSeries<EnvelopeSample>, nominal_removal: bool) -> Result<PhaseNoisePsd> {
    phase_noise_psd_with(s, nominal_removal, &PsdOptions::default())
}

/// Welch estimate of the phase PSD of `s`, reported as `L(f)`.
/// With `nominal_removal` a least-squares line (the mean frequency offset)
/// is removed from the unwrapped phase first.
pub fn phase_noise_psd_with(s: &TimeSeries<EnvelopeSample>, nominal_removal: bool, opts: &PsdOptions) -> Result<PhaseNoisePsd> {
    let mut phase = unwrap_phase(s)?.into_data();
    if nominal_removal {
        let t: Vec<f64> = (0..phase.len()).map(|k| k as f64).collect();
        let fit = linear_fit(&t, &phase)?;
        for (k, p) in phase.iter_mut().enumerate() {
            *p -= fit.intercept + fit.slope * k as f64;
        }
    }
    let dt = s.dt();
    let duration = phase.len() as f64 * dt;
    if opts.min_segments == 0 || opts.points_per_decade == 0 {
        return Err(Error::config("psd", "min_segments and points_per_decade must be positive"));
    }
    let segment_len = match opts.segment_len {
        Some(n) => n,
        None => {
            // 2 len / (segments + 1) bounds the segment for 50 % overlap.
            let max = 2 * phase.len() / (opts.min_segments + 1);
            if max < 4 {
                return Err(Error::InsufficientLength {
                    reason: format!("{} samples cannot form {} segments", phase.len(), opts.min_segments),
                });
            }
            1usize << (usize::BITS - 1 - max.leading_zeros())
        }
    };
    let est = welch(&phase, dt, segment_len)?;
    let floor = 10.0 / duration;
    let f_min = match opts.f_min {
        Some(f) if f < floor => {
            return Err(Error::InsufficientLength {
                reason: format!("lowest offset {f} Hz is below 10/duration = {floor} Hz"),
            })
        }
        Some(f) => f,
        None => (2.0 * est.resolution()).max(floor),
    };
    let nyquist = 0.5 / dt;
    let f_max = opts.f_max.unwrap_or(nyquist).min(nyquist);
    let ppd = opts.points_per_decade as f64;
    let half_step = 10f64.powf(0.5 / ppd);
    let first = (f_min.log10() * ppd - 1e-9).ceil() as i64;
    let last = (f_max.log10() * ppd + 1e-9).floor() as i64;
    if last < first {
        return Err(Error::InsufficientLength {
            reason: format!("no report offsets between {f_min} and {f_max} Hz"),
        });
    }
    let mut offsets = Vec::new();
    let mut l_dbc = Vec::new();
    for j in first..=last {
        let f = 10f64.powf(j as f64 / ppd);
        let (lo, hi) = (f / half_step, (f * half_step).min(nyquist));
        let (mut sum, mut count) = (0.0, 0usize);
        for (fk, p) in est.freqs.iter().zip(&est.psd) {
            if *fk >= lo && *fk < hi {
                sum += p;
                count += 1;
            }
        }
        let s_phi = if count > 0 { sum / count as f64 } else { interpolate(&est, f) };
        offsets.push(f);
        l_dbc.push(10.0 * (s_phi / 2.0).max(1e-300).log10());
    }
    Ok(PhaseNoisePsd {
        offsets,
        l_dbc,
        resolution_hz: est.resolution(),
        segment_len: est.segment_len,
        segments: est.segments,
        detrended: nominal_removal,
    })
}

/// Log-log interpolation between the bins bracketing `f`.
fn interpolate(est: &WelchEstimate, f: f64) -> f64 {
    let k = ((f / est.resolution()).floor() as usize).clamp(1, est.freqs.len() - 2);
    let (f0, f1) = (est.freqs[k], est.freqs[k + 1]);
    let (p0, p1) = (est.psd[k].max(1e-300), est.psd[k + 1].max(1e-300));
    let w = (f.ln() - f0.ln()) / (f1.ln() - f0.ln());
    (p0.ln() * (1.0 - w) + p1.ln() * w).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::rng::{gaussian, stream, Stream};

    const DT: f64 = 1e-7;

    fn phase_series(phase: &[f64]) -> TimeSeries<EnvelopeSample> {
        TimeSeries::new(DT, 0.0, phase.iter().map(|&p| EnvelopeSample::from_polar(1.0, p)).collect()).unwrap()
    }

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Stream::Aux);
        (0..n).map(|_| sigma * gaussian(&mut rng)).collect()
    }

    #[test]
    fn white_phase_noise_is_flat_at_two_sigma_squared_dt() {
        let sigma = 1e-3;
        let phase = white(1 << 20, sigma, 11);
        let psd = phase_noise_psd(&phase_series(&phase), false).unwrap();
        let expected = 10.0 * (2.0 * sigma * sigma * DT / 2.0).log10();
        for (f, l) in psd.offsets.iter().zip(&psd.l_dbc) {
            if *f > 1e4 && *f < 4e6 {
                assert!((l - expected).abs() < 1.0, "{f}: {l} vs {expected}");
            }
        }
    }

    #[test]
    fn pure_tone_sits_at_numerical_floor() {
        let phase: Vec<f64> = (0..1 << 18).map(|k| TAU * 12.5e3 * k as f64 * DT).collect();
        let psd = phase_noise_psd(&phase_series(&phase), true).unwrap();
        assert!(psd.l_dbc.iter().all(|&l| l < -150.0), "{:?}", psd.l_dbc);
    }

    #[test]
    fn parseval_within_five_percent() {
        let x = white(1 << 18, 0.7, 5);
        let est = welch(&x, DT, 1 << 12).unwrap();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((est.total_power() / var - 1.0).abs() < 0.05);
    }

    #[test]
    fn default_segments_meet_minimum() {
        let x = white(2_000_000, 0.01, 1);
        let psd = phase_noise_psd(&phase_series(&x), true).unwrap();
        assert!(psd.segments >= 16);
        assert!(psd.segment_len.is_power_of_two());
        assert_eq!(psd.segment_len, 1 << 17);
    }

    #[test]
    fn rejects_offsets_below_ten_over_duration() {
        let x = white(100_000, 0.01, 1);
        let opts = PsdOptions {
            f_min: Some(50.0),
            ..PsdOptions::default()
        };
        let err = phase_noise_psd_with(&phase_series(&x), true, &opts).unwrap_err();
        assert!(matches!(err, Error::InsufficientLength { .. }));
        assert!(matches!(welch(&x[..10], DT, 16), Err(Error::InsufficientLength { .. })));
    }

    #[test]
    fn lookup_interpolates_on_log_axis() {
        let p = PhaseNoisePsd {
            offsets: vec![10.0, 100.0],
            l_dbc: vec![-80.0, -100.0],
            resolution_hz: 1.0,
            segment_len: 4,
            segments: 16,
            detrended: true,
        };
        assert_eq!(p.at(10.0), Some(-80.0));
        assert!((p.at(10f64.sqrt() * 10.0).unwrap() + 90.0).abs() < 1e-9);
        assert_eq!(p.at(5.0), None);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(12))]
        #[test]
        fn parseval_holds_for_filtered_noise(seed in 0u64..1000, a in 0.0f64..0.95) {
            let w = white(1 << 16, 1.0, seed);
            let mut y = 0.0;
            let x: Vec<f64> = w.iter().map(|v| { y = a * y + v; y }).collect();
            let est = welch(&x, DT, 1 << 10).unwrap();
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64;
            proptest::prop_assert!((est.total_power() / var - 1.0).abs() < 0.05);
        }
    }
}
