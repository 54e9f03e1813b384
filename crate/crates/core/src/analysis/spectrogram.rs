use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};

/// Floor applied before taking logarithms, dB.
const DB_FLOOR: f64 = -300.0;

/// Magnitude spectrogram on a two-sided frequency grid.
///
/// `magnitudes` is row-major, one row per frame. Each value is
/// `20 log10 |X|` with the window normalised so that a unit-amplitude tone
/// centred on a bin reads 0 dB.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.times.len()
    }

    pub fn bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        let b = self.bins();
        &self.magnitudes[frame * b..(frame + 1) * b]
    }

    /// Keeps bins with `lo <= f <= hi`.
    pub fn crop_band(&self, lo: f64, hi: f64) -> Result<Spectrogram> {
        let keep: Vec<usize> = (0..self.bins()).filter(|&j| self.freqs[j] >= lo && self.freqs[j] <= hi).collect();
        let (Some(&first), Some(&last)) = (keep.first(), keep.last()) else {
            return Err(Error::config("band", format!("[{lo}, {hi}] Hz contains no bins")));
        };
        let mut magnitudes = Vec::with_capacity(self.frames() * keep.len());
        for i in 0..self.frames() {
            magnitudes.extend_from_slice(&self.row(i)[first..=last]);
        }
        Ok(Spectrogram {
            times: self.times.clone(),
            freqs: self.freqs[first..=last].to_vec(),
            magnitudes,
        })
    }
}

/// Reusable short-time Fourier transform with a periodic Hann window.
pub struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    hop: usize,
    dt: f64,
}

impl Stft {
    pub fn new(window_len: usize, hop: usize, dt: f64) -> Result<Self> {
        if window_len < 2 {
            return Err(Error::config("window_len", "must be at least 2"));
        }
        if hop == 0 {
            return Err(Error::config("hop", "must be at least 1"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config("dt", "must be positive"));
        }
        let n = window_len as f64;
        let raw: Vec<f64> = (0..window_len).map(|i| 0.5 * (1.0 - (TAU * i as f64 / n).cos())).collect();
        let sum: f64 = raw.iter().sum();
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(window_len),
            window: raw.iter().map(|w| w / sum).collect(),
            hop,
            dt,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Bin centres from `-(N/2 - 1)` to `N/2` bins, ascending.
    pub fn freqs(&self) -> Vec<f64> {
        let n = self.window.len() as i64;
        let df = 1.0 / (n as f64 * self.dt);
        (0..n).map(|j| (j - n / 2 + 1) as f64 * df).collect()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / (self.window.len() as f64 * self.dt)
    }

    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window.len() {
            0
        } else {
            (len - self.window.len()) / self.hop + 1
        }
    }

    /// Calls `f(frame, time, row_db)` for every frame in order without
    /// storing the grid.
    pub fn for_each_frame(&self, s: &TimeSeries<EnvelopeSample>, mut f: impl FnMut(usize, f64, &[f64])) -> Result<()> {
        if (s.dt() - self.dt).abs() > 1e-12 * self.dt {
            return Err(Error::config("dt", "series and transform sample intervals differ"));
        }
        let frames = self.frame_count(s.len());
        if frames == 0 {
            return Err(Error::InsufficientLength {
                reason: format!("{} samples, window needs {}", s.len(), self.window.len()),
            });
        }
        let n = self.window.len();
        let data = s.data();
        let mut buf = vec![EnvelopeSample::new(0.0, 0.0); n];
        let mut scratch = vec![EnvelopeSample::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut row = vec![0.0; n];
        for i in 0..frames {
            let start = i * self.hop;
            for ((b, x), w) in buf.iter_mut().zip(&data[start..start + n]).zip(&self.window) {
                *b = x * w;
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (j, r) in row.iter_mut().enumerate() {
                // Bin j sits at offset j - n/2 + 1, stored at that index modulo n.
                let k = (j + n + 1 - n / 2) % n;
                *r = (10.0 * buf[k].norm_sqr().log10()).max(DB_FLOOR);
            }
            let t = s.t0() + (start + n / 2) as f64 * self.dt;
            f(i, t, &row);
        }
        Ok(())
    }

    pub fn compute(&self, s: &TimeSeries<EnvelopeSample>) -> Result<Spectrogram> {
        let frames = self.frame_count(s.len());
        let mut times = Vec::with_capacity(frames);
        let mut magnitudes = Vec::with_capacity(frames * self.window.len());
        self.for_each_frame(s, |_, t, row| {
            times.push(t);
            magnitudes.extend_from_slice(row);
        })?;
        Ok(Spectrogram {
            times,
            freqs: self.freqs(),
            magnitudes,
        })
    }

    /// Ridge of every frame, computed frame by frame.
    pub fn track(&self, s: &TimeSeries<EnvelopeSample>) -> Result<Ridge> {
        let freqs = self.freqs();
        let mut times = Vec::new();
        let mut points = Vec::new();
        self.for_each_frame(s, |_, t, row| {
            times.push(t);
            points.push(ridge_point(&freqs, row));
        })?;
        Ridge::from_points(&times, points)
    }
}

/// Hann-windowed magnitude spectrogram with frame times at window centres.
pub fn stft(s: &TimeSeries<EnvelopeSample>, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if window_len > s.len() {
        return Err(Error::InsufficientLength {
            reason: format!("window of {window_len} exceeds {} samples", s.len()),
        });
    }
    Stft::new(window_len, hop, s.dt())?.compute(s)
}

/// Minimum margin of the ridge over the strongest bin outside its guard band, dB.
pub const RIDGE_MARGIN_DB: f64 = 10.0;
/// Half-width of the guard band around the ridge peak, bins.
pub const RIDGE_GUARD_BINS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RidgePoint {
    /// Interpolated peak frequency, Hz.
    pub freq: f64,
    /// Interpolated peak level, dB.
    pub level: f64,
    /// Peak level minus the strongest bin outside the guard band, dB.
    pub margin: f64,
}

/// Strongest peak of one row with parabolic interpolation on the dB values.
pub fn ridge_point(freqs: &[f64], row: &[f64]) -> RidgePoint {
    let k = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let df = if freqs.len() > 1 { freqs[1] - freqs[0] } else { 0.0 };
    let (mut delta, mut level) = (0.0, row[k]);
    if k > 0 && k + 1 < row.len() {
        let (a, b, c) = (row[k - 1], row[k], row[k + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            delta = 0.5 * (a - c) / denom;
            level = b - 0.25 * (a - c) * delta;
        }
    }
    let lo = k.saturating_sub(RIDGE_GUARD_BINS);
    let hi = (k + RIDGE_GUARD_BINS + 1).min(row.len());
    let next = row[..lo]
        .iter()
        .chain(&row[hi..])
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    RidgePoint {
        freq: freqs[k] + delta * df,
        level,
        margin: level - next,
    }
}

/// Per-frame ridge frequency. Frames whose peak does not clear
/// [`RIDGE_MARGIN_DB`] are listed in `ambiguous` and hold `NaN`.
#[derive(Clone, Debug)]
pub struct Ridge {
    pub freq: TimeSeries<f64>,
    pub ambiguous: Vec<usize>,
}

impl Ridge {
    pub(crate) fn from_points(times: &[f64], points: Vec<RidgePoint>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptySeries);
        }
        let frame_dt = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
        let mut ambiguous = Vec::new();
        let freq = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.margin >= RIDGE_MARGIN_DB {
                    p.freq
                } else {
                    ambiguous.push(i);
                    f64::NAN
                }
            })
            .collect();
        Ok(Self {
            freq: TimeSeries::new(frame_dt, times[0], freq)?,
            ambiguous,
        })
    }

    /// `(t, f)` pairs for unambiguous frames.
    pub fn valid(&self) -> (Vec<f64>, Vec<f64>) {
        self.freq
            .times()
            .zip(self.freq.data())
            .filter(|(_, f)| f.is_finite())
            .map(|(t, &f)| (t, f))
            .unzip()
    }

    /// Fails with [`Error::AmbiguousRidge`] if any frame was flagged.
    pub fn require_unambiguous(&self) -> Result<&TimeSeries<f64>> {
        match self.ambiguous.first() {
            None => Ok(&self.freq),
            Some(&i) => Err(Error::AmbiguousRidge(format!(
                "{} of {} frames below the {RIDGE_MARGIN_DB} dB margin, first at t = {:.6e} s",
                self.ambiguous.len(),
                self.freq.len(),
                self.freq.time(i)
            ))),
        }
    }
}

pub fn ridge_track(sp: &Spectrogram) -> Result<Ridge> {
    let points = (0..sp.frames()).map(|i| ridge_point(&sp.freqs, sp.row(i))).collect();
    Ridge::from_points(&sp.times, points)
}

/// Writes the long-form CSV `t,f,dB`, one line per grid cell.
pub fn write_spectrogram_csv(path: &Path, sp: &Spectrogram) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "t,f,dB")?;
    for (i, t) in sp.times.iter().enumerate() {
        for (f, db) in sp.freqs.iter().zip(sp.row(i)) {
            writeln!(out, "{t:?},{f:?},{db:?}")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramSidecar {
    pub kind: String,
    pub frames: usize,
    pub bins: usize,
    pub t0: f64,
    pub frame_dt: f64,
    pub f0: f64,
    pub df: f64,
}

/// Writes the dB grid as little-endian f64 (frame-major) plus a JSON
/// sidecar describing the axes. Returns the sidecar path.
pub fn write_spectrogram_binary(path: &Path, sp: &Spectrogram) -> Result<PathBuf> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in &sp.magnitudes {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    let step = |v: &[f64]| if v.len() > 1 { v[1] - v[0] } else { 0.0 };
    let sidecar = SpectrogramSidecar {
        kind: "spectrogram-db".into(),
        frames: sp.frames(),
        bins: sp.bins(),
        t0: sp.times.first().copied().unwrap_or(0.0),
        frame_dt: step(&sp.times),
        f0: sp.freqs.first().copied().unwrap_or(0.0),
        df: step(&sp.freqs),
    };
    let side = path.with_extension("json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&side)?), &sidecar)?;
    Ok(side)
}
