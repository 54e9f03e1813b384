//! Named end-to-end runs that write trace, spectrogram, PSD and report
//! files plus a checksummed manifest.
//!
//! A scenario starts from its [`ScenarioConfig::preset`]; a JSON document and
//! dotted `key=value` overrides are merged over the preset before parsing
//! (see [`resolve_config`]).

use std::fs::{self, File};
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::analysis::{
    fit_sinusoid, linear_fit, phase_noise_psd_with, write_spectrogram_csv, PhaseNoisePsd, PsdOptions, Ridge, RidgePoint,
    Spectrogram, Stft,
};
use crate::envelope::io::{write_columns_csv, write_csv_file};
use crate::envelope::{EnvelopeSample, TimeSeries};
use crate::error::{Error, Result};
use crate::pll::{
    run_scalar_pll_with, run_vector_pll_with, ControlTrace, LockReport, PllConfig, PllDerived, PllRun,
};
use crate::stuart_landau::SlParams;
use crate::tdo::{run_free, run_swept, SweepParams, TdoConfig, TuningElement};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    FreeRun,
    Sweep,
    ScalarPll,
    VectorPll,
    NoiseCharacterization,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::FreeRun,
        ScenarioKind::Sweep,
        ScenarioKind::ScalarPll,
        ScenarioKind::VectorPll,
        ScenarioKind::NoiseCharacterization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::FreeRun => "free-run",
            ScenarioKind::Sweep => "sweep",
            ScenarioKind::ScalarPll => "scalar-pll",
            ScenarioKind::VectorPll => "vector-pll",
            ScenarioKind::NoiseCharacterization => "noise-characterization",
        }
    }

    pub fn figure(self) -> &'static str {
        match self {
            ScenarioKind::FreeRun => "Fig. 11(a)",
            ScenarioKind::Sweep => "Fig. 7",
            ScenarioKind::ScalarPll => "Fig. 10(a)",
            ScenarioKind::VectorPll => "Fig. 10(b)/11(b)",
            ScenarioKind::NoiseCharacterization => "Fig. 12",
        }
    }

    fn summary(self) -> &'static str {
        match self {
            ScenarioKind::FreeRun => "free-running oscillator under the drift emulator; ridge slope",
            ScenarioKind::Sweep => "sinusoidal sweep through the vector modulator; spectrogram ridge",
            ScenarioKind::ScalarPll => "bounded phase-shifter PLL under drift; lock, saturation, loss",
            ScenarioKind::VectorPll => "vector-modulator PLL under drift; lock and winding",
            ScenarioKind::NoiseCharacterization => "locked vs free-running phase-noise density",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("scenario", format!("unknown scenario `{s}`; see `tdolab list`")))
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The built-in scenarios, one per line, with the figure each reproduces.
pub fn list_scenarios() -> String {
    ScenarioKind::ALL
        .iter()
        .map(|k| format!("{:<24} {} → {}: {}\n", k.name(), k.name(), k.figure(), k.summary()))
        .collect()
}

/// Which files a run writes. The manifest is always written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitFlags {
    pub traces: bool,
    pub spectrogram: bool,
    pub psd: bool,
    pub report: bool,
    /// Trace files are decimated to at most this many rows.
    pub trace_max_points: usize,
    /// Spectrogram files keep at most this many evenly spaced frames.
    pub spectrogram_max_frames: usize,
    /// Spectrogram files keep bins within ±`spectrogram_band_hz`.
    pub spectrogram_band_hz: f64,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self {
            traces: true,
            spectrogram: true,
            psd: true,
            report: true,
            trace_max_points: 100_000,
            spectrogram_max_frames: 250,
            spectrogram_band_hz: 1.5e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub stft_window: usize,
    pub stft_hop: usize,
    /// Leading time excluded from phase-noise estimates, seconds.
    pub psd_skip: f64,
    pub psd: PsdOptions,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            stft_window: 4096,
            stft_hop: 1024,
            psd_skip: 0.5,
            psd: PsdOptions::default(),
        }
    }
}

/// Complete description of one scenario run. `seed` replaces `tdo.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub tdo: TdoConfig,
    pub pll: PllConfig,
    pub sl: SlParams,
    pub sweep: SweepParams,
    /// Hz/s.
    pub drift_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub emit: EmitFlags,
    pub analysis: AnalysisConfig,
}

impl ScenarioConfig {
    pub fn preset(kind: ScenarioKind) -> Self {
        use TuningElement::*;
        let (tuning, drift_rate, duration) = match kind {
            ScenarioKind::FreeRun => (vec![VectorModulator, UnboundedPhaseShifter], 1e6, 0.2),
            ScenarioKind::Sweep => (vec![VectorModulator], 0.0, 1.0),
            ScenarioKind::ScalarPll => (vec![BoundedPhaseShifter, UnboundedPhaseShifter], 1e6, 0.05),
            ScenarioKind::VectorPll => (vec![VectorModulator, UnboundedPhaseShifter], 1e6, 0.2),
            ScenarioKind::NoiseCharacterization => (vec![VectorModulator, UnboundedPhaseShifter], 1e6, 2.5),
        };
        let tdo = TdoConfig {
            tuning,
            ..TdoConfig::default()
        };
        Self {
            scenario: kind,
            seed: tdo.seed,
            tdo,
            pll: PllConfig::default(),
            sl: SlParams::default(),
            sweep: SweepParams::default(),
            drift_rate,
            duration,
            out_dir: PathBuf::from("out").join(kind.name()),
            emit: EmitFlags {
                spectrogram: kind != ScenarioKind::NoiseCharacterization,
                ..EmitFlags::default()
            },
            analysis: AnalysisConfig::default(),
        }
    }

    /// Oscillator configuration as run, with the scenario seed applied.
    pub fn tdo_config(&self) -> TdoConfig {
        TdoConfig {
            seed: self.seed,
            ..self.tdo.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tdo_config().validate()?;
        self.pll.validate()?;
        self.sl.validate()?;
        if !self.drift_rate.is_finite() {
            return Err(Error::config("drift_rate", "must be finite"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config("duration", format!("must be positive, got {}", self.duration)));
        }
        if self.scenario == ScenarioKind::NoiseCharacterization
            && !(self.analysis.psd_skip >= 0.0 && self.analysis.psd_skip < self.duration)
        {
            return Err(Error::config("analysis.psd_skip", "must lie in [0, duration)"));
        }
        if self.analysis.stft_window < 8 || self.analysis.stft_hop == 0 {
            return Err(Error::config("analysis.stft_window", "window must be >= 8 and hop >= 1"));
        }
        if self.emit.trace_max_points == 0 || self.emit.spectrogram_max_frames == 0 {
            return Err(Error::config("emit", "row limits must be positive"));
        }
        if !(self.emit.spectrogram_band_hz > 0.0) {
            return Err(Error::config("emit.spectrogram_band_hz", "must be positive"));
        }
        Ok(())
    }
}

/// Builds the configuration for `kind`: preset, then `document` merged
/// over it, then each `key=value` override (dotted path, JSON value or bare
/// string). Override keys must name existing fields.
pub fn resolve_config(kind: ScenarioKind, document: Option<&Value>, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut value = serde_json::to_value(ScenarioConfig::preset(kind))?;
    if let Some(doc) = document {
        if let Some(named) = doc.get("scenario") {
            if named != &Value::String(kind.name().into()) {
                return Err(Error::config("scenario", format!("config names {named}, run requested `{kind}`")));
            }
        }
        merge(&mut value, doc);
    }
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "override must be `key=value`"))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    let cfg: ScenarioConfig =
        serde_json::from_value(value).map_err(|e| Error::config("config", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(key, "no such field"))?;
    }
    *node = value;
    Ok(())
}

/// One pass/fail comparison against the expected figure metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: String,
    pub pass: bool,
}

impl Check {
    fn within(name: &str, value: f64, target: f64, rel: f64) -> Self {
        Self {
            name: name.into(),
            value,
            expected: format!("{target} ± {}%", rel * 100.0),
            pass: ((value - target) / target).abs() <= rel,
        }
    }

    fn range(name: &str, value: Option<f64>, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value: value.unwrap_or(f64::NAN),
            expected: format!("in [{lo}, {hi}]"),
            pass: value.is_some_and(|v| v >= lo && v <= hi),
        }
    }

    fn flag(name: &str, value: f64, expected: &str, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            expected: expected.into(),
            pass,
        }
    }
}

/// Locked and free-running densities on a shared offset grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsdComparison {
    pub offsets: Vec<f64>,
    pub free_dbc: Vec<f64>,
    pub locked_dbc: Vec<f64>,
}

impl PsdComparison {
    fn diffs(&self, keep: impl Fn(f64) -> bool) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(self.free_dbc.iter().zip(&self.locked_dbc))
            .filter(|(f, _)| keep(**f))
            .map(|(_, (free, locked))| locked - free)
            .collect()
    }

    /// Largest `locked - free` at offsets up to `f_max`, dB.
    pub fn worst_excess_below(&self, f_max: f64) -> Option<f64> {
        self.diffs(|f| f <= f_max).into_iter().reduce(f64::max)
    }

    /// Largest `|locked - free|` at offsets from `f_min`, dB.
    pub fn worst_deviation_above(&self, f_min: f64) -> Option<f64> {
        self.diffs(|f| f >= f_min).into_iter().map(f64::abs).reduce(f64::max)
    }

    /// `free - locked` at `f`, interpolated on the grid.
    pub fn suppression_at(&self, f: f64) -> Option<f64> {
        let free = grid_psd(&self.offsets, &self.free_dbc).at(f)?;
        let locked = grid_psd(&self.offsets, &self.locked_dbc).at(f)?;
        Some(free - locked)
    }
}

fn grid_psd(offsets: &[f64], l_dbc: &[f64]) -> PhaseNoisePsd {
    PhaseNoisePsd {
        offsets: offsets.to_vec(),
        l_dbc: l_dbc.to_vec(),
        resolution_hz: 0.0,
        segment_len: 0,
        segments: 0,
        detrended: true,
    }
}

/// Measured quantities; fields not produced by a scenario stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub settled_frequency_hz: Option<f64>,
    pub settled_amplitude: Option<f64>,
    pub ridge_frames: Option<usize>,
    pub ridge_ambiguous_frames: Option<usize>,
    pub ridge_slope_hz_per_s: Option<f64>,
    pub sweep_amplitude_hz: Option<f64>,
    pub sweep_period_s: Option<f64>,
    /// Post-lock winding of the vector-modulator control, turns per second.
    pub winding_rate_turns_per_s: Option<f64>,
    pub control_magnitude_range: Option<(f64, f64)>,
    pub max_abs_drive: Option<f64>,
    pub psd: Option<PsdComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub tau_g_s: f64,
    pub fsr_hz: f64,
    /// Resonator 3 dB bandwidth.
    pub resonator_bandwidth_hz: f64,
    pub mode_count: f64,
    pub pll: PllDerived,
    pub sweep_peak_excursion_hz: f64,
    /// Steady phase error a second-order loop needs to follow the drift, radians.
    pub ramp_tracking_error_rad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub scenario: ScenarioKind,
    pub figure: String,
    pub config: ScenarioConfig,
    pub derived: Derived,
    pub lock_report: Option<LockReport>,
    pub metrics: Metrics,
    pub checks: Vec<Check>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn derived(cfg: &ScenarioConfig) -> Derived {
    let tdo = cfg.tdo_config();
    let tau_g = tdo.tau_g();
    let drift_tdo = TdoConfig {
        drift_rate: cfg.drift_rate,
        ..tdo.clone()
    };
    Derived {
        tau_g_s: tau_g,
        fsr_hz: tdo.fsr(),
        resonator_bandwidth_hz: tdo.resonator_bandwidth(),
        mode_count: tdo.mode_count(),
        pll: cfg.pll.derived(tau_g),
        sweep_peak_excursion_hz: cfg.sweep.peak_excursion(tau_g),
        ramp_tracking_error_rad: cfg.pll.ramp_tracking_error(drift_tdo.drift_phase_rate()),
    }
}

/// Runs the scenario, writes its files into `cfg.out_dir` and returns the
/// manifest (also written as [`MANIFEST_FILE`]).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut sink = Sink::new(&cfg.out_dir);
    let (metrics, lock_report) = match cfg.scenario {
        ScenarioKind::FreeRun => free_run(cfg, &mut sink)?,
        ScenarioKind::Sweep => sweep(cfg, &mut sink)?,
        ScenarioKind::ScalarPll | ScenarioKind::VectorPll => pll_run(cfg, &mut sink)?,
        ScenarioKind::NoiseCharacterization => noise_characterization(cfg, &mut sink)?,
    };
    let derived = derived(cfg);
    let checks = evaluate_checks(cfg, &derived, &metrics, lock_report.as_ref());
    if cfg.emit.report {
        let path = sink.path("report.json");
        serde_json::to_writer_pretty(
            BufWriter::new(File::create(&path)?),
            &serde_json::json!({ "lock_report": lock_report, "metrics": metrics, "checks": checks }),
        )?;
        sink.record("report.json")?;
    }
    let manifest = Manifest {
        tool: format!("tdolab {}", env!("CARGO_PKG_VERSION")),
        scenario: cfg.scenario,
        figure: cfg.scenario.figure().into(),
        config: cfg.clone(),
        derived,
        lock_report,
        metrics,
        checks,
        files: sink.files,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(cfg.out_dir.join(MANIFEST_FILE))?), &manifest)?;
    Ok(manifest)
}

/// Collects emitted files and their checksums.
struct Sink {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Sink {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let (bytes, sha256) = sha256_file(&self.path(name))?;
        self.files.push(FileEntry {
            path: name.into(),
            bytes,
            sha256,
        });
        Ok(())
    }
}

/// `(length, lowercase hex SHA-256)` of a file.
pub fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    let hex = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((total, hex))
}

fn stride_for(len: usize, max_points: usize) -> usize {
    len.div_ceil(max_points).max(1)
}

fn write_output(cfg: &ScenarioConfig, sink: &mut Sink, output: &TimeSeries<EnvelopeSample>) -> Result<()> {
    if cfg.emit.traces {
        let stride = stride_for(output.len(), cfg.emit.trace_max_points);
        write_csv_file(&sink.path("output.csv"), "x", &output.decimate(stride))?;
        sink.record("output.csv")?;
    }
    Ok(())
}

/// Streams the STFT once, tracking the ridge of every frame and keeping a
/// band-limited, frame-decimated copy for the spectrogram file.
fn spectrogram_and_ridge(
    cfg: &ScenarioConfig,
    sink: &mut Sink,
    s: &TimeSeries<EnvelopeSample>,
    metrics: &mut Metrics,
) -> Result<Ridge> {
    let stft = Stft::new(cfg.analysis.stft_window, cfg.analysis.stft_hop, s.dt())?;
    let freqs = stft.freqs();
    let band = cfg.emit.spectrogram_band_hz;
    let lo = freqs.partition_point(|&f| f < -band);
    let hi = freqs.partition_point(|&f| f <= band);
    let keep_every = stride_for(stft.frame_count(s.len()), cfg.emit.spectrogram_max_frames);
    let mut kept = Spectrogram {
        times: Vec::new(),
        freqs: freqs[lo..hi].to_vec(),
        magnitudes: Vec::new(),
    };
    let mut times = Vec::new();
    let mut points: Vec<RidgePoint> = Vec::new();
    stft.for_each_frame(s, |i, t, row| {
        times.push(t);
        points.push(crate::analysis::ridge_point(&freqs, row));
        if i % keep_every == 0 {
            kept.times.push(t);
            kept.magnitudes.extend_from_slice(&row[lo..hi]);
        }
    })?;
    let ridge = Ridge::from_points(&times, points)?;
    if cfg.emit.spectrogram && !kept.freqs.is_empty() {
        write_spectrogram_csv(&sink.path("spectrogram.csv"), &kept)?;
        sink.record("spectrogram.csv")?;
    }
    if cfg.emit.traces {
        write_csv_file(&sink.path("ridge.csv"), "f", &ridge.freq)?;
        sink.record("ridge.csv")?;
    }
    metrics.ridge_frames = Some(ridge.freq.len());
    metrics.ridge_ambiguous_frames = Some(ridge.ambiguous.len());
    Ok(ridge)
}

fn ridge_slope(ridge: &Ridge) -> Option<f64> {
    let (t, f) = ridge.valid();
    linear_fit(&t, &f).ok().map(|fit| fit.slope)
}

fn free_run(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(Metrics, Option<LockReport>)> {
    let tdo = TdoConfig {
        drift_rate: cfg.drift_rate,
        ..cfg.tdo_config()
    };
    let run = run_free(&tdo, cfg.duration)?;
    let mut metrics = Metrics {
        settled_frequency_hz: Some(run.settled_frequency),
        settled_amplitude: Some(run.settled_amplitude),
        ..Metrics::default()
    };
    write_output(cfg, sink, &run.output)?;
    let ridge = spectrogram_and_ridge(cfg, sink, &run.output, &mut metrics)?;
    metrics.ridge_slope_hz_per_s = ridge_slope(&ridge);
    Ok((metrics, None))
}

fn sweep(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(Metrics, Option<LockReport>)> {
    let output = run_swept(&cfg.tdo_config(), &cfg.sweep, cfg.duration)?;
    let mut metrics = Metrics::default();
    write_output(cfg, sink, &output)?;
    let ridge = spectrogram_and_ridge(cfg, sink, &output, &mut metrics)?;
    let (t, f) = ridge.valid();
    if let Ok(fit) = fit_sinusoid(&t, &f, cfg.sweep.omega) {
        metrics.sweep_amplitude_hz = Some(fit.amplitude);
        metrics.sweep_period_s = Some(fit.period());
    }
    Ok((metrics, None))
}

fn run_pll(cfg: &ScenarioConfig, kind: ScenarioKind, duration: f64, stride: usize) -> Result<PllRun> {
    let tdo = cfg.tdo_config();
    match kind {
        ScenarioKind::ScalarPll => run_scalar_pll_with(&tdo, &cfg.pll, cfg.drift_rate, duration, stride),
        _ => run_vector_pll_with(&tdo, &cfg.pll, &cfg.sl, cfg.drift_rate, duration, stride),
    }
}

fn pll_run(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(Metrics, Option<LockReport>)> {
    let samples = (cfg.duration / cfg.tdo.dt).round() as usize;
    let stride = stride_for(samples, cfg.emit.trace_max_points);
    let run = run_pll(cfg, cfg.scenario, cfg.duration, stride)?;
    let mut metrics = Metrics::default();
    record_controls(&run, &mut metrics);
    if let (Some(turns), Some(t_lock)) = (run.report.winding_after_lock, run.report.lock_time) {
        metrics.winding_rate_turns_per_s = Some(turns / (cfg.duration - t_lock));
    }
    write_output(cfg, sink, &run.output)?;
    if cfg.emit.traces {
        write_controls(sink, &run)?;
    }
    let ridge = spectrogram_and_ridge(cfg, sink, &run.output, &mut metrics)?;
    metrics.ridge_slope_hz_per_s = ridge_slope(&ridge);
    Ok((metrics, Some(run.report)))
}

fn record_controls(run: &PllRun, metrics: &mut Metrics) {
    if let ControlTrace::Vector { z, v } = &run.control {
        let (lo, hi) = z
            .data()
            .iter()
            .map(|z| z.norm())
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
        metrics.control_magnitude_range = Some((lo, hi));
        metrics.max_abs_drive = v.data().iter().map(|v| v.abs()).reduce(f64::max);
    }
}

fn write_controls(sink: &mut Sink, run: &PllRun) -> Result<()> {
    let e = &run.phase_error;
    match &run.control {
        ControlTrace::Scalar { p } => {
            write_columns_csv(&sink.path("control.csv"), e.dt(), e.t0(), &[("p", p.data()), ("e", e.data())])?;
        }
        ControlTrace::Vector { z, v } => {
            let re: Vec<f64> = z.data().iter().map(|z| z.re).collect();
            let im: Vec<f64> = z.data().iter().map(|z| z.im).collect();
            write_columns_csv(
                &sink.path("control.csv"),
                e.dt(),
                e.t0(),
                &[("z_re", &re), ("z_im", &im), ("v", v.data()), ("e", e.data())],
            )?;
        }
    }
    sink.record("control.csv")
}

/// The locked run uses the configured drift; the free reference runs the
/// same oscillator without drift. Both skip `analysis.psd_skip`.
fn noise_characterization(cfg: &ScenarioConfig, sink: &mut Sink) -> Result<(Metrics, Option<LockReport>)> {
    let dt = cfg.tdo.dt;
    let skip = (cfg.analysis.psd_skip / dt).round() as usize;
    let tail = |s: &TimeSeries<EnvelopeSample>| s.slice(skip..s.len());
    let free_tdo = TdoConfig {
        drift_rate: 0.0,
        ..cfg.tdo_config()
    };
    let free = {
        let run = run_free(&free_tdo, cfg.duration)?;
        phase_noise_psd_with(&tail(&run.output)?, true, &cfg.analysis.psd)?
    };
    let samples = (cfg.duration / dt).round() as usize;
    let stride = stride_for(samples, cfg.emit.trace_max_points);
    let run = run_pll(cfg, ScenarioKind::VectorPll, cfg.duration, stride)?;
    let locked = phase_noise_psd_with(&tail(&run.output)?, true, &cfg.analysis.psd)?;
    let mut metrics = Metrics::default();
    record_controls(&run, &mut metrics);
    if cfg.emit.traces {
        write_controls(sink, &run)?;
    }
    let report = run.report.clone();
    drop(run);
    if cfg.emit.psd {
        free.write_csv(&sink.path("psd_free.csv"))?;
        sink.record("psd_free.csv")?;
        sink.record("psd_free.json")?;
        locked.write_csv(&sink.path("psd_locked.csv"))?;
        sink.record("psd_locked.csv")?;
        sink.record("psd_locked.json")?;
    }
    metrics.psd = Some(PsdComparison {
        offsets: free.offsets,
        free_dbc: free.l_dbc,
        locked_dbc: locked.l_dbc,
    });
    Ok((metrics, Some(report)))
}

/// Offsets separating the loop-controlled and free-running regimes of the
/// phase-noise comparison, Hz.
pub const PSD_LOOP_BAND_HZ: f64 = 100.0;
pub const PSD_FREE_BAND_HZ: f64 = 2e3;

/// Compares metrics with the figure they reproduce. The expected values
/// follow from the configuration (drift rate, FSR, sweep excursion); the
/// lock timings are those of the 1 MHz/s drift figure.
pub fn evaluate_checks(cfg: &ScenarioConfig, derived: &Derived, m: &Metrics, report: Option<&LockReport>) -> Vec<Check> {
    let mut checks = Vec::new();
    let ambiguous = |checks: &mut Vec<Check>| {
        if let Some(n) = m.ridge_ambiguous_frames {
            checks.push(Check::flag("ridge ambiguous frames", n as f64, "0", n == 0));
        }
    };
    match cfg.scenario {
        ScenarioKind::FreeRun => {
            if cfg.drift_rate != 0.0 {
                let slope = m.ridge_slope_hz_per_s.unwrap_or(f64::NAN);
                checks.push(Check::within("ridge slope [Hz/s]", slope, cfg.drift_rate, 0.02));
            } else if let Some(a) = m.settled_amplitude {
                let expected = (cfg.tdo.p_sat * (cfg.tdo.g0 * cfg.tdo.g0 - 1.0)).sqrt();
                checks.push(Check::within("settled amplitude", a, expected, 0.05));
            }
            ambiguous(&mut checks);
        }
        ScenarioKind::Sweep => {
            let amp = m.sweep_amplitude_hz.unwrap_or(f64::NAN);
            let period = m.sweep_period_s.unwrap_or(f64::NAN);
            checks.push(Check::within("sweep amplitude [Hz]", amp, derived.sweep_peak_excursion_hz, 0.05));
            checks.push(Check::within(
                "sweep period [s]",
                period,
                std::f64::consts::TAU / cfg.sweep.omega,
                0.01,
            ));
            ambiguous(&mut checks);
        }
        ScenarioKind::ScalarPll => {
            let r = report.cloned().unwrap_or_default();
            checks.push(Check::range("lock time [s]", r.lock_time, 10e-3, 20e-3));
            checks.push(Check::range("loss time [s]", r.loss_time, 15e-3, 25e-3));
            let gap = match (r.loss_time, r.first_saturation) {
                (Some(loss), Some(sat)) => Some((loss - sat).abs()),
                _ => None,
            };
            checks.push(Check::range("|loss - saturation| [s]", gap, 0.0, 2e-3));
        }
        ScenarioKind::VectorPll => {
            let r = report.cloned().unwrap_or_default();
            checks.push(Check::range("lock time [s]", r.lock_time, 10e-3, 20e-3));
            checks.push(Check::flag(
                "loss time [s]",
                r.loss_time.unwrap_or(f64::NAN),
                "none",
                r.loss_time.is_none(),
            ));
            if cfg.drift_rate != 0.0 {
                let rate = m.winding_rate_turns_per_s.map_or(f64::NAN, f64::abs);
                checks.push(Check::within(
                    "|winding rate| [turns/s]",
                    rate,
                    cfg.drift_rate.abs() / derived.fsr_hz,
                    0.10,
                ));
            }
        }
        ScenarioKind::NoiseCharacterization => {
            let psd = m.psd.as_ref();
            let excess = psd.and_then(|p| p.worst_excess_below(PSD_LOOP_BAND_HZ));
            checks.push(Check::flag(
                "max locked - free, f <= 100 Hz [dB]",
                excess.unwrap_or(f64::NAN),
                "< 0",
                excess.is_some_and(|x| x < 0.0),
            ));
            let at10 = psd.and_then(|p| p.suppression_at(10.0));
            checks.push(Check::flag(
                "free - locked at 10 Hz [dB]",
                at10.unwrap_or(f64::NAN),
                ">= 10",
                at10.is_some_and(|x| x >= 10.0),
            ));
            let dev = psd.and_then(|p| p.worst_deviation_above(PSD_FREE_BAND_HZ));
            checks.push(Check::flag(
                "max |locked - free|, f >= 2 kHz [dB]",
                dev.unwrap_or(f64::NAN),
                "<= 3",
                dev.is_some_and(|x| x <= 3.0),
            ));
        }
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn listing_names_every_scenario_and_figure() {
        let text = list_scenarios();
        for needle in [
            "sweep → Fig. 7",
            "scalar-pll → Fig. 10(a)",
            "vector-pll → Fig. 10(b)/11(b)",
            "free-run",
            "noise-characterization",
        ] {
            assert!(text.contains(needle), "missing {needle}");
        }
    }

    #[test]
    fn names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
            assert_eq!(serde_json::to_value(k).unwrap(), json!(k.name()));
        }
        assert!("fig-7".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn vector_preset_derived_values() {
        let d = derived(&ScenarioConfig::preset(ScenarioKind::VectorPll));
        assert!((d.fsr_hz - 40e3).abs() < 1e-6);
        assert!((d.pll.f_n - 100.7).abs() < 0.05);
        assert!((d.pll.xi - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-4);
        assert!((d.pll.xi_tabulated - 0.0889).abs() < 1e-4);
        assert!((d.ramp_tracking_error_rad - 15.708).abs() < 1e-3);
    }

    #[test]
    fn overrides_and_documents_merge_over_preset() {
        let doc = json!({ "duration": 0.01, "pll": { "tau_i": 0.2 } });
        let cfg = resolve_config(
            ScenarioKind::VectorPll,
            Some(&doc),
            &["pll.kappa=0.03".into(), "out_dir=/tmp/x".into(), "pll.extra_poles.0.enabled=false".into()],
        )
        .unwrap();
        assert_eq!(cfg.duration, 0.01);
        assert_eq!(cfg.pll.tau_i, 0.2);
        assert_eq!(cfg.pll.kappa, 0.03);
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/x"));
        assert!(!cfg.pll.extra_poles[0].enabled && cfg.pll.extra_poles[1].enabled);
        assert_eq!(cfg.tdo.tuning, ScenarioConfig::preset(ScenarioKind::VectorPll).tdo.tuning);
    }

    #[test]
    fn bad_overrides_name_the_field() {
        let err = resolve_config(ScenarioKind::Sweep, None, &["pll.kapa=1".into()]).unwrap_err();
        assert!(err.to_string().contains("pll.kapa"), "{err}");
        let err = resolve_config(ScenarioKind::Sweep, None, &["tdo.tau_d=-1".into()]).unwrap_err();
        assert!(err.to_string().contains("tdo.tau_d"), "{err}");
        let err = resolve_config(ScenarioKind::Sweep, Some(&json!({"scenario": "free-run"})), &[]).unwrap_err();
        assert!(err.to_string().contains("scenario"), "{err}");
        assert!(resolve_config(ScenarioKind::Sweep, Some(&json!({"bogus": 1})), &[]).is_err());
    }

    #[test]
    fn preset_round_trips_through_json() {
        for k in ScenarioKind::ALL {
            let cfg = ScenarioConfig::preset(k);
            let back: ScenarioConfig = serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
            assert_eq!(back, cfg);
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn psd_comparison_summaries() {
        let c = PsdComparison {
            offsets: vec![10.0, 100.0, 1e3, 1e4],
            free_dbc: vec![-50.0, -80.0, -110.0, -130.0],
            locked_dbc: vec![-70.0, -82.0, -109.0, -132.5],
        };
        assert_eq!(c.worst_excess_below(100.0), Some(-2.0));
        assert_eq!(c.worst_deviation_above(1e3), Some(2.5));
        assert_eq!(c.suppression_at(10.0), Some(20.0));
    }

    #[test]
    fn short_vector_run_writes_checksummed_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = resolve_config(
            ScenarioKind::VectorPll,
            None,
            &[format!("out_dir={}", dir.path().display()), "duration=0.03".into()],
        )
        .unwrap();
        let m = run_scenario(&cfg).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["output.csv", "control.csv", "spectrogram.csv", "ridge.csv", "report.json"]);
        for f in &m.files {
            assert_eq!(sha256_file(&dir.path().join(&f.path)).unwrap(), (f.bytes, f.sha256.clone()));
        }
        assert!(m.lock_report.as_ref().unwrap().lock_time.is_some());
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }
}
