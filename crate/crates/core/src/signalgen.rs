//! Synthetic stator-current generation, noise injection and segmentation.
//!
//! Nine health states are synthesized as a fundamental plus fault-specific
//! spectral components: broken-bar sidebands at (1 ± 2s)f, eccentricity
//! sidebands at f ± f_r (static) with additional f ± 2 f_r content
//! (dynamic), and bearing components at |f ± m·f_char| where f_char comes
//! from the standard bearing kinematics. Everything is deterministic per
//! seed.

use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Induction machine parameters used by the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MotorConfig {
    pub supply_freq_hz: f64,
    pub pole_pairs: u32,
    pub rotor_bars: u32,
    pub rated_speed_rpm: f64,
    pub sample_rate_hz: f64,
    /// Peak amplitude of the fundamental current component, in amperes.
    pub fundamental_amp: f64,
}

impl Default for MotorConfig {
    fn default() -> Self {
        MotorConfig {
            supply_freq_hz: 50.0,
            pole_pairs: 2,
            rotor_bars: 28,
            rated_speed_rpm: 1440.0,
            sample_rate_hz: 10_000.0,
            // ~= sqrt(2) * 5.7 A rms rated current
            fundamental_amp: 8.06,
        }
    }
}

impl MotorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.supply_freq_hz <= 0.0 {
            return Err(Error::InvalidConfig("supply_freq_hz must be > 0".into()));
        }
        if self.pole_pairs < 1 {
            return Err(Error::InvalidConfig("pole_pairs must be >= 1".into()));
        }
        if self.sample_rate_hz < 4.0 * self.supply_freq_hz {
            return Err(Error::InvalidConfig(format!(
                "sample_rate_hz {} must be >= 4 x supply frequency {}",
                self.sample_rate_hz, self.supply_freq_hz
            )));
        }
        if !(self.fundamental_amp.is_finite() && self.fundamental_amp > 0.0) {
            return Err(Error::InvalidConfig("fundamental_amp must be positive".into()));
        }
        Ok(())
    }
}

/// Ball-bearing geometry (defaults match a 6205-size bearing).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BearingGeometry {
    pub ball_diameter_mm: f64,
    pub cage_diameter_mm: f64,
    pub n_balls: u32,
    pub contact_angle_deg: f64,
}

impl Default for BearingGeometry {
    fn default() -> Self {
        BearingGeometry {
            ball_diameter_mm: 7.835,
            cage_diameter_mm: 38.5,
            n_balls: 9,
            contact_angle_deg: 0.0,
        }
    }
}

impl BearingGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.ball_diameter_mm > 0.0 && self.ball_diameter_mm < self.cage_diameter_mm) {
            return Err(Error::InvalidConfig(
                "ball diameter must be positive and smaller than cage diameter".into(),
            ));
        }
        if self.n_balls < 1 {
            return Err(Error::InvalidConfig("n_balls must be >= 1".into()));
        }
        Ok(())
    }
}

/// The nine health classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    Healthy,
    Brb1,
    Brb2,
    Brb3,
    EccStatic,
    EccDynamic,
    BearingOuter,
    BearingCage,
    BearingBall,
}

impl FaultClass {
    pub const ALL: [FaultClass; 9] = [
        FaultClass::Healthy,
        FaultClass::Brb1,
        FaultClass::Brb2,
        FaultClass::Brb3,
        FaultClass::EccStatic,
        FaultClass::EccDynamic,
        FaultClass::BearingOuter,
        FaultClass::BearingCage,
        FaultClass::BearingBall,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FaultClass::Healthy => "healthy",
            FaultClass::Brb1 => "brb1",
            FaultClass::Brb2 => "brb2",
            FaultClass::Brb3 => "brb3",
            FaultClass::EccStatic => "ecc_static",
            FaultClass::EccDynamic => "ecc_dynamic",
            FaultClass::BearingOuter => "bearing_outer",
            FaultClass::BearingCage => "bearing_cage",
            FaultClass::BearingBall => "bearing_ball",
        }
    }

    pub fn from_name(name: &str) -> Option<FaultClass> {
        FaultClass::ALL.iter().copied().find(|c| c.name() == name)
    }

    /// Stable index into [`FaultClass::ALL`].
    pub fn index(&self) -> usize {
        FaultClass::ALL.iter().position(|c| c == self).unwrap()
    }
}

/// A health class plus a severity scalar in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthState {
    pub class: FaultClass,
    pub severity: f64,
}

impl HealthState {
    pub fn new(class: FaultClass, severity: f64) -> Self {
        HealthState { class, severity }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.severity.is_finite() && (0.0..=1.0).contains(&self.severity)) {
            return Err(Error::InvalidInput(format!(
                "severity {} outside [0, 1]",
                self.severity
            )));
        }
        Ok(())
    }
}

/// Load/speed pairs for the five load levels:
/// 0% -> 1492 rpm, 25% -> 1486, 50% -> 1482, 75% -> 1473, 100% -> 1464.
pub const LOAD_SPEED_TABLE: [(f64, f64); 5] = [
    (0.0, 1492.0),
    (0.25, 1486.0),
    (0.5, 1482.0),
    (0.75, 1473.0),
    (1.0, 1464.0),
];

/// One operating condition: load level and the speed it maps to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub load_fraction: f64,
    pub speed_rpm: f64,
}

impl OperatingPoint {
    /// Look up the speed for one of the five tabulated load levels.
    pub fn from_load(load_fraction: f64) -> Result<OperatingPoint> {
        LOAD_SPEED_TABLE
            .iter()
            .find(|(l, _)| (*l - load_fraction).abs() < 1e-9)
            .map(|&(load_fraction, speed_rpm)| OperatingPoint {
                load_fraction,
                speed_rpm,
            })
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "load fraction {load_fraction} is not one of the tabulated levels"
                ))
            })
    }

    /// Rotor mechanical frequency in Hz.
    pub fn rotor_freq_hz(&self) -> f64 {
        self.speed_rpm / 60.0
    }
}

/// A labeled 1-D current waveform.
#[derive(Debug, Clone)]
pub struct RawSignal {
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
    pub label: HealthState,
    pub op: OperatingPoint,
    /// Injected noise level; `None` means clean.
    pub snr_db: Option<f64>,
}

/// A windowed slice of exactly n^2 samples, ready for imaging.
#[derive(Debug, Clone)]
pub struct SignalSegment {
    pub values: Vec<f32>,
    pub label: HealthState,
    pub op: Option<OperatingPoint>,
    pub snr_db: Option<f64>,
}

impl SignalSegment {
    /// Side length n of the square image this segment reshapes to.
    pub fn side_len(&self) -> Result<usize> {
        let n = (self.values.len() as f64).sqrt().round() as usize;
        if n * n != self.values.len() {
            return Err(Error::InvalidInput(format!(
                "segment length {} is not a perfect square",
                self.values.len()
            )));
        }
        Ok(n)
    }
}

/// Slip from speed, supply frequency and pole pairs:
/// s = (n_sync - speed) / n_sync with n_sync = 60 f / p.
pub fn compute_slip(speed_rpm: f64, supply_freq_hz: f64, pole_pairs: u32) -> Result<f64> {
    if supply_freq_hz <= 0.0 || pole_pairs == 0 {
        return Err(Error::InvalidConfig(
            "supply frequency and pole pairs must be positive".into(),
        ));
    }
    if speed_rpm < 0.0 {
        return Err(Error::InvalidInput("speed_rpm must be >= 0".into()));
    }
    let n_sync = 60.0 * supply_freq_hz / pole_pairs as f64;
    Ok((n_sync - speed_rpm) / n_sync)
}

/// Characteristic bearing fault frequencies at a given rotor frequency.
#[derive(Debug, Clone, Copy)]
pub struct BearingCharFreqs {
    pub outer: f64,
    pub cage: f64,
    pub ball: f64,
}

/// Standard bearing kinematics, contact angle theta, r = D_b / D_c:
///   cage  (FTF)  = f_r / 2 * (1 - r cos(theta))
///   outer (BPFO) = N_b / 2 * f_r * (1 - r cos(theta))
///   ball  (BSF)  = D_c / (2 D_b) * f_r * (1 - (r cos(theta))^2)
pub fn bearing_char_freqs(geom: &BearingGeometry, rotor_freq_hz: f64) -> Result<BearingCharFreqs> {
    geom.validate()?;
    if rotor_freq_hz <= 0.0 {
        return Err(Error::InvalidInput("rotor frequency must be > 0".into()));
    }
    let r = geom.ball_diameter_mm / geom.cage_diameter_mm;
    let cos_a = geom.contact_angle_deg.to_radians().cos();
    let base = 1.0 - r * cos_a;
    Ok(BearingCharFreqs {
        cage: rotor_freq_hz / 2.0 * base,
        outer: geom.n_balls as f64 / 2.0 * rotor_freq_hz * base,
        ball: geom.cage_diameter_mm / (2.0 * geom.ball_diameter_mm)
            * rotor_freq_hz
            * (1.0 - (r * cos_a).powi(2)),
    })
}

/// One physical cause of a fault signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignatureSource {
    /// Amplitude modulation of the fundamental at `freq_hz`: a coherent
    /// sideband pair at f +/- freq_hz, each carrying depth/2 of the
    /// fundamental amplitude.
    Am { freq_hz: f64, depth: f64 },
    /// Phase-locked waveform distortion at `multiple` x the supply
    /// frequency.
    Harmonic { multiple: f64, rel_amp: f64 },
}

/// The modulation/distortion sources of a fault class at one operating
/// point, with depths for severity 1.0.
pub fn signature_sources(
    cfg: &MotorConfig,
    geom: &BearingGeometry,
    class: FaultClass,
    op: &OperatingPoint,
) -> Result<Vec<SignatureSource>> {
    let fr = op.rotor_freq_hz();
    let slip = compute_slip(op.speed_rpm, cfg.supply_freq_hz, cfg.pole_pairs)?;
    let load = op.load_fraction;

    let mut sources = Vec::new();
    match class {
        FaultClass::Healthy => {}
        FaultClass::Brb1 | FaultClass::Brb2 | FaultClass::Brb3 => {
            // Superlinear growth in the bar count keeps the three grades
            // apart even at the low end of the severity range.
            let grade = match class {
                FaultClass::Brb1 => 1.0,
                FaultClass::Brb2 => 2.2,
                _ => 4.4,
            };
            // Sideband pair at (1 +/- 2s)f; grows with bar count and load.
            sources.push(SignatureSource::Am {
                freq_hz: 2.0 * slip * cfg.supply_freq_hz,
                depth: 0.08 * grade * (0.35 + 0.65 * load),
            });
            // Rotor asymmetry also distorts the waveform shape: odd-harmonic
            // content rises with the number of broken bars, which stays
            // visible inside windows shorter than the sideband beat period.
            sources.push(SignatureSource::Harmonic {
                multiple: 3.0,
                rel_amp: 0.025 * grade,
            });
            sources.push(SignatureSource::Harmonic {
                multiple: 5.0,
                rel_amp: 0.015 * grade,
            });
        }
        FaultClass::EccStatic => {
            sources.push(SignatureSource::Am {
                freq_hz: fr,
                depth: 0.28 * (0.8 + 0.2 * load),
            });
        }
        FaultClass::EccDynamic => {
            sources.push(SignatureSource::Am {
                freq_hz: fr,
                depth: 0.20 * (0.8 + 0.2 * load),
            });
            sources.push(SignatureSource::Am {
                freq_hz: 2.0 * fr,
                depth: 0.24 * (0.8 + 0.2 * load),
            });
        }
        FaultClass::BearingOuter | FaultClass::BearingCage | FaultClass::BearingBall => {
            let ch = bearing_char_freqs(geom, fr)?;
            // Per-mode harmonic weights keep the visible modulation
            // patterns of the three bearing faults apart.
            let (fc, m2_scale) = match class {
                FaultClass::BearingOuter => (ch.outer, 0.5),
                FaultClass::BearingCage => (ch.cage, 0.1),
                _ => (ch.ball, 0.35),
            };
            for (m, scale) in [(1.0, 1.0), (2.0, m2_scale)] {
                sources.push(SignatureSource::Am {
                    freq_hz: m * fc,
                    depth: 0.32 * scale,
                });
            }
        }
    }
    Ok(sources)
}

/// Sinusoidal components (frequency, relative amplitude) that signal a fault
/// class at the given operating point; amplitudes are fractions of the
/// fundamental at severity 1.0. Flattened view of [`signature_sources`].
pub fn signature_components(
    cfg: &MotorConfig,
    geom: &BearingGeometry,
    class: FaultClass,
    op: &OperatingPoint,
) -> Result<Vec<(f64, f64)>> {
    let f = cfg.supply_freq_hz;
    let mut comps: Vec<(f64, f64)> = Vec::new();
    for source in signature_sources(cfg, geom, class, op)? {
        match source {
            SignatureSource::Am { freq_hz, depth } => {
                comps.push(((f - freq_hz).abs(), depth / 2.0));
                comps.push((f + freq_hz, depth / 2.0));
            }
            SignatureSource::Harmonic { multiple, rel_amp } => {
                comps.push((multiple * f, rel_amp));
            }
        }
    }
    // Drop anything at or beyond Nyquist.
    comps.retain(|(freq, _)| *freq > 0.0 && *freq < cfg.sample_rate_hz / 2.0);
    Ok(comps)
}

/// Synthesize one labeled current waveform. Deterministic per seed.
pub fn generate_signal(
    cfg: &MotorConfig,
    geom: &BearingGeometry,
    state: HealthState,
    op: OperatingPoint,
    duration_s: f64,
    seed: u64,
) -> Result<RawSignal> {
    cfg.validate()?;
    geom.validate()?;
    state.validate()?;
    let n_samples = (duration_s * cfg.sample_rate_hz).round() as i64;
    let min_samples = (cfg.sample_rate_hz / cfg.supply_freq_hz).ceil() as i64;
    if n_samples < min_samples {
        return Err(Error::InvalidInput(format!(
            "duration {duration_s} s is too short: need at least one fundamental period \
             ({min_samples} samples at {} Hz)",
            cfg.sample_rate_hz
        )));
    }
    let n_samples = n_samples as usize;
    let mut rng = Rng::new(seed);

    let amp = cfg.fundamental_amp * (1.0 + 0.02 * (rng.uniform() * 2.0 - 1.0));
    let fund_phase = rng.uniform() * 2.0 * PI;

    // (freq, absolute amplitude, phase) triples; component phases are
    // independent, which leaves a mix of amplitude and phase modulation in
    // the envelope.
    let mut tones: Vec<(f64, f64, f64)> = Vec::new();
    tones.push((cfg.supply_freq_hz, amp, fund_phase));
    for (freq, rel) in signature_components(cfg, geom, state.class, &op)? {
        let jitter = 1.0 + 0.05 * (rng.uniform() * 2.0 - 1.0);
        tones.push((freq, rel * state.severity * amp * jitter, rng.uniform() * 2.0 * PI));
    }

    let floor_sigma = 0.003 * cfg.fundamental_amp;
    let dt = 1.0 / cfg.sample_rate_hz;
    let mut samples = vec![0.0f64; n_samples];
    for (freq, a, phase) in &tones {
        let w = 2.0 * PI * freq;
        for (i, s) in samples.iter_mut().enumerate() {
            *s += a * (w * (i as f64 * dt) + phase).sin();
        }
    }
    for s in samples.iter_mut() {
        *s += floor_sigma * rng.gaussian();
    }

    Ok(RawSignal {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
        label: state,
        op,
        snr_db: None,
    })
}

// ── Noise injection (Eq. 8 calibration) ────────────────────────────────────

fn mean_power(values: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    for v in values {
        acc += v * v;
    }
    acc / values.len() as f64
}

/// Scale `noise` in place so its realized power hits the target exactly.
fn calibrate(noise: &mut [f64], signal_power: f64, target_snr_db: f64) -> Result<()> {
    let target_noise_power = signal_power / 10f64.powf(target_snr_db / 10.0);
    let raw = mean_power(noise);
    if raw <= 0.0 {
        return Err(Error::Numerical("raw noise has zero power".into()));
    }
    let scale = (target_noise_power / raw).sqrt();
    for v in noise.iter_mut() {
        *v *= scale;
    }
    Ok(())
}

/// Additive zero-mean Gaussian noise at an exact signal-to-noise ratio.
pub fn inject_noise_values(values: &[f64], target_snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let p_signal = mean_power(values);
    if p_signal <= 0.0 {
        return Err(Error::InvalidInput(
            "signal power is zero; SNR undefined".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    let mut noise: Vec<f64> = (0..values.len()).map(|_| rng.gaussian()).collect();
    calibrate(&mut noise, p_signal, target_snr_db)?;
    Ok(values.iter().zip(&noise).map(|(v, n)| v + n).collect())
}

pub fn inject_noise(signal: &RawSignal, target_snr_db: f64, seed: u64) -> Result<RawSignal> {
    let samples = inject_noise_values(&signal.samples, target_snr_db, seed)?;
    Ok(RawSignal {
        samples,
        snr_db: Some(target_snr_db),
        ..signal.clone()
    })
}

/// Drive-style noise: 5th and 7th supply harmonics plus broadband Gaussian,
/// jointly scaled to the exact target SNR. Harmonics carry half the noise
/// power (0.3 / 0.2 split), the Gaussian floor the other half.
pub fn inject_drive_noise_values(
    values: &[f64],
    sample_rate_hz: f64,
    supply_freq_hz: f64,
    target_snr_db: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let p_signal = mean_power(values);
    if p_signal <= 0.0 {
        return Err(Error::InvalidInput(
            "signal power is zero; SNR undefined".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    let dt = 1.0 / sample_rate_hz;
    // Amplitude sqrt(2 p) gives a sinusoid mean power p.
    let harmonics = [
        (5.0 * supply_freq_hz, (2.0 * 0.3f64).sqrt(), rng.uniform() * 2.0 * PI),
        (7.0 * supply_freq_hz, (2.0 * 0.2f64).sqrt(), rng.uniform() * 2.0 * PI),
    ];
    let gauss_sigma = 0.5f64.sqrt();
    let mut noise = vec![0.0f64; values.len()];
    for (freq, a, phase) in harmonics {
        if freq >= sample_rate_hz / 2.0 {
            continue;
        }
        let w = 2.0 * PI * freq;
        for (i, n) in noise.iter_mut().enumerate() {
            *n += a * (w * (i as f64 * dt) + phase).sin();
        }
    }
    for n in noise.iter_mut() {
        *n += gauss_sigma * rng.gaussian();
    }
    calibrate(&mut noise, p_signal, target_snr_db)?;
    Ok(values.iter().zip(&noise).map(|(v, n)| v + n).collect())
}

pub fn inject_drive_noise(
    signal: &RawSignal,
    supply_freq_hz: f64,
    target_snr_db: f64,
    seed: u64,
) -> Result<RawSignal> {
    let samples = inject_drive_noise_values(
        &signal.samples,
        signal.sample_rate_hz,
        supply_freq_hz,
        target_snr_db,
        seed,
    )?;
    Ok(RawSignal {
        samples,
        snr_db: Some(target_snr_db),
        ..signal.clone()
    })
}

/// Measured SNR in dB: 10 log10(sum(clean^2) / sum((noisy - clean)^2)).
pub fn measure_snr(clean: &[f64], noisy: &[f64]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: clean {} vs noisy {}",
            clean.len(),
            noisy.len()
        )));
    }
    if clean.is_empty() {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let mut p_signal = 0.0f64;
    let mut p_noise = 0.0f64;
    for (c, n) in clean.iter().zip(noisy) {
        p_signal += c * c;
        let d = n - c;
        p_noise += d * d;
    }
    if p_signal <= 0.0 {
        return Err(Error::InvalidInput("clean signal power is zero".into()));
    }
    if p_noise <= 0.0 {
        return Err(Error::Numerical(
            "noise power is zero; SNR is infinite".into(),
        ));
    }
    Ok(10.0 * (p_signal / p_noise).log10())
}

/// Sliding-window segmentation into n^2-sample windows.
pub fn segment(signal: &RawSignal, n: usize, stride: usize) -> Result<Vec<SignalSegment>> {
    if n < 2 {
        return Err(Error::InvalidInput("side length n must be >= 2".into()));
    }
    if stride < 1 {
        return Err(Error::InvalidInput("stride must be >= 1".into()));
    }
    let window = n * n;
    let len = signal.samples.len();
    if len < window {
        return Err(Error::InvalidInput(format!(
            "signal of {len} samples is shorter than one {n}x{n} window ({window})"
        )));
    }
    let count = (len - window) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let start = k * stride;
        out.push(SignalSegment {
            values: signal.samples[start..start + window]
                .iter()
                .map(|&v| v as f32)
                .collect(),
            label: signal.label,
            op: Some(signal.op),
            snr_db: signal.snr_db,
        });
    }
    Ok(out)
}

// ── Corpus generation ──────────────────────────────────────────────────────

/// How the synthetic segment corpus is synthesized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusCfg {
    pub motor: MotorConfig,
    pub bearing: BearingGeometry,
    /// Image side length; windows are n^2 samples.
    pub n: usize,
    pub stride: usize,
    /// Independent signals synthesized per (class, load) pool.
    pub signals_per_pool: usize,
    pub windows_per_signal: usize,
    pub severity_lo: f64,
    pub severity_hi: f64,
}

impl Default for CorpusCfg {
    fn default() -> Self {
        CorpusCfg {
            motor: MotorConfig::default(),
            bearing: BearingGeometry::default(),
            n: 64,
            stride: 2048,
            signals_per_pool: 15,
            windows_per_signal: 30,
            severity_lo: 0.8,
            severity_hi: 1.0,
        }
    }
}

/// Clean segment pools indexed by `[class][load]` following
/// [`FaultClass::ALL`] and [`LOAD_SPEED_TABLE`] order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub n: usize,
    pub sample_rate_hz: f64,
    pub supply_freq_hz: f64,
    pub load_levels: Vec<f64>,
    pub pools: Vec<Vec<Vec<SignalSegment>>>,
}

impl Corpus {
    pub fn pool(&self, class: FaultClass, load_idx: usize) -> &[SignalSegment] {
        &self.pools[class.index()][load_idx]
    }
}

/// Synthesize the full clean corpus: every class at every load level.
/// Deterministic per seed; sibling pools use forked seed streams.
pub fn build_corpus(cfg: &CorpusCfg, seed: u64) -> Result<Corpus> {
    cfg.motor.validate()?;
    cfg.bearing.validate()?;
    if cfg.n < 2 {
        return Err(Error::InvalidConfig("corpus n must be >= 2".into()));
    }
    let window = cfg.n * cfg.n;
    let samples_needed = (cfg.windows_per_signal - 1) * cfg.stride + window;
    let duration_s = samples_needed as f64 / cfg.motor.sample_rate_hz;
    let master = Rng::new(seed);

    let mut pools = Vec::with_capacity(FaultClass::ALL.len());
    for (ci, class) in FaultClass::ALL.iter().enumerate() {
        let mut per_load = Vec::with_capacity(LOAD_SPEED_TABLE.len());
        for (li, (load, _)) in LOAD_SPEED_TABLE.iter().enumerate() {
            let op = OperatingPoint::from_load(*load)?;
            let mut pool_rng = master.fork(((ci * 16 + li) as u64) + 1);
            let mut segs = Vec::with_capacity(cfg.signals_per_pool * cfg.windows_per_signal);
            for _ in 0..cfg.signals_per_pool {
                let severity = if *class == FaultClass::Healthy {
                    0.0
                } else {
                    pool_rng.uniform_in(cfg.severity_lo, cfg.severity_hi)
                };
                let sig_seed = pool_rng.next_u64();
                let sig = generate_signal(
                    &cfg.motor,
                    &cfg.bearing,
                    HealthState::new(*class, severity),
                    op,
                    duration_s,
                    sig_seed,
                )?;
                segs.extend(segment(&sig, cfg.n, cfg.stride)?);
            }
            per_load.push(segs);
        }
        pools.push(per_load);
    }
    Ok(Corpus {
        n: cfg.n,
        sample_rate_hz: cfg.motor.sample_rate_hz,
        supply_freq_hz: cfg.motor.supply_freq_hz,
        load_levels: LOAD_SPEED_TABLE.iter().map(|(l, _)| *l).collect(),
        pools,
    })
}

/// Single-bin spectral power via the Goertzel recurrence, in dB re 1 A peak.
pub fn goertzel_power_db(samples: &[f64], sample_rate_hz: f64, freq_hz: f64) -> f64 {
    let n = samples.len();
    let w = 2.0 * PI * freq_hz / sample_rate_hz;
    let coeff = 2.0 * w.cos();
    let (mut s_prev, mut s_prev2) = (0.0f64, 0.0f64);
    for &x in samples {
        let s = x + coeff * s_prev - s_prev2;
        s_prev2 = s_prev;
        s_prev = s;
    }
    let power = s_prev * s_prev + s_prev2 * s_prev2 - coeff * s_prev * s_prev2;
    // Normalize to amplitude of a unit sinusoid at that bin.
    let amp = 2.0 * power.max(0.0).sqrt() / n as f64;
    20.0 * amp.max(1e-300).log10()
}

/// Amplitude spectrum over a frequency grid, for plotting.
pub fn amplitude_spectrum(
    samples: &[f64],
    sample_rate_hz: f64,
    max_freq_hz: f64,
    bins: usize,
) -> Vec<(f64, f64)> {
    (0..bins)
        .map(|i| {
            let f = max_freq_hz * (i as f64 + 0.5) / bins as f64;
            (f, goertzel_power_db(samples, sample_rate_hz, f))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_load() -> OperatingPoint {
        OperatingPoint::from_load(1.0).unwrap()
    }

    #[test]
    fn slip_reference_values() {
        assert_eq!(compute_slip(1500.0, 50.0, 2).unwrap(), 0.0);
        assert!((compute_slip(1464.0, 50.0, 2).unwrap() - 0.024).abs() < 1e-12);
        assert!((compute_slip(1440.0, 50.0, 2).unwrap() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn slip_monotone_decreasing_in_speed() {
        let mut last = f64::INFINITY;
        for speed in [0.0, 700.0, 1400.0, 1464.0, 1500.0, 1600.0] {
            let s = compute_slip(speed, 50.0, 2).unwrap();
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn slip_rejects_bad_config() {
        assert!(compute_slip(1400.0, 0.0, 2).is_err());
        assert!(compute_slip(1400.0, 50.0, 0).is_err());
        assert!(compute_slip(-1.0, 50.0, 2).is_err());
    }

    #[test]
    fn bearing_freqs_reference_values() {
        let geom = BearingGeometry::default();
        let ch = bearing_char_freqs(&geom, 24.4).unwrap();
        assert!((ch.cage - 9.72).abs() < 0.01, "cage {}", ch.cage);
        assert!((ch.outer - 87.46).abs() < 0.01, "outer {}", ch.outer);
        // BSF from the documented formula.
        let r: f64 = 7.835 / 38.5;
        let expect = 38.5 / (2.0 * 7.835) * 24.4 * (1.0 - r * r);
        assert!((ch.ball - expect).abs() < 1e-9);
    }

    #[test]
    fn bearing_cage_limit_small_ball() {
        let geom = BearingGeometry {
            ball_diameter_mm: 1e-6,
            ..BearingGeometry::default()
        };
        let ch = bearing_char_freqs(&geom, 24.4).unwrap();
        assert!((ch.cage - 12.2).abs() < 1e-3);
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Brb1, 1.0);
        let a = generate_signal(&cfg, &geom, st, full_load(), 0.5, 99).unwrap();
        let b = generate_signal(&cfg, &geom, st, full_load(), 0.5, 99).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_signal(&cfg, &geom, st, full_load(), 0.5, 100).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn generate_rejects_short_duration() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Healthy, 0.0);
        assert!(generate_signal(&cfg, &geom, st, full_load(), 0.001, 1).is_err());
    }

    #[test]
    fn brb1_sidebands_sit_at_expected_offsets() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let comps =
            signature_components(&cfg, &geom, FaultClass::Brb1, &full_load()).unwrap();
        // slip at full load = 0.024 -> 50 * (1 +/- 0.048) = 47.6 / 52.4 Hz
        let freqs: Vec<f64> = comps.iter().map(|(f, _)| *f).collect();
        assert!(freqs.iter().any(|f| (f - 47.6).abs() < 1e-9));
        assert!(freqs.iter().any(|f| (f - 52.4).abs() < 1e-9));
    }

    #[test]
    fn healthy_spectrum_peaks_only_at_fundamental() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Healthy, 0.0);
        let sig = generate_signal(&cfg, &geom, st, full_load(), 2.0, 3).unwrap();
        let at_fund = goertzel_power_db(&sig.samples, cfg.sample_rate_hz, 50.0);
        for probe in [20.0, 35.0, 47.6, 52.4, 74.4, 87.5, 120.0] {
            let p = goertzel_power_db(&sig.samples, cfg.sample_rate_hz, probe);
            assert!(
                at_fund - p > 20.0,
                "fundamental should dominate {probe} Hz: {at_fund} vs {p}"
            );
        }
    }

    #[test]
    fn inject_noise_hits_target_exactly() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Healthy, 0.0);
        let sig = generate_signal(&cfg, &geom, st, full_load(), 0.41, 11).unwrap();
        for target in [0.0, 2.0, 6.0, 20.0] {
            let noisy = inject_noise(&sig, target, 123).unwrap();
            let measured = measure_snr(&sig.samples, &noisy.samples).unwrap();
            assert!(
                (measured - target).abs() < 1e-9,
                "target {target} measured {measured}"
            );
            assert_eq!(noisy.snr_db, Some(target));
        }
    }

    #[test]
    fn inject_noise_zero_db_noise_power_matches_signal() {
        let x: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.1).sin()).collect();
        let noisy = inject_noise_values(&x, 0.0, 5).unwrap();
        let p_sig = mean_power(&x);
        let noise: Vec<f64> = noisy.iter().zip(&x).map(|(n, c)| n - c).collect();
        let p_noise = mean_power(&noise);
        assert!((p_noise / p_sig - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inject_noise_rejects_zero_signal() {
        assert!(inject_noise_values(&[0.0; 64], 10.0, 1).is_err());
    }

    #[test]
    fn drive_noise_also_calibrates_exactly() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::EccStatic, 0.8);
        let sig = generate_signal(&cfg, &geom, st, full_load(), 0.41, 21).unwrap();
        let noisy = inject_drive_noise(&sig, 50.0, 4.0, 77).unwrap();
        let measured = measure_snr(&sig.samples, &noisy.samples).unwrap();
        assert!((measured - 4.0).abs() < 1e-9, "measured {measured}");
    }

    #[test]
    fn measure_snr_hand_cases() {
        let x: Vec<f64> = (0..512).map(|i| (i as f64 * 0.3).sin() + 0.2).collect();
        // noisy = 2x -> noise = x -> 0 dB
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((measure_snr(&x, &doubled).unwrap()).abs() < 1e-12);
        // noisy = 1.1x -> amplitude ratio 10 -> 20 dB
        let tenth: Vec<f64> = x.iter().map(|v| 1.1 * v).collect();
        assert!((measure_snr(&x, &tenth).unwrap() - 20.0).abs() < 1e-9);
        assert!(measure_snr(&x[..100], &doubled).is_err());
        assert!(measure_snr(&x, &x).is_err());
    }

    #[test]
    fn segment_counts_and_metadata() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Brb2, 0.7);
        let mut sig = generate_signal(&cfg, &geom, st, full_load(), 1.0, 9).unwrap();
        sig.samples.truncate(8192);
        let segs = segment(&sig, 64, 2048).unwrap();
        assert_eq!(segs.len(), 3);
        for s in &segs {
            assert_eq!(s.values.len(), 4096);
            assert_eq!(s.label, st);
            assert_eq!(s.op, Some(sig.op));
            assert_eq!(s.snr_db, None);
        }
        sig.samples.truncate(4096);
        assert_eq!(segment(&sig, 64, 4096).unwrap().len(), 1);
        sig.samples.truncate(100);
        assert!(segment(&sig, 64, 2048).is_err());
    }

    /// Independent spectral oracle: Hann-windowed correlation against
    /// sin/cos at one frequency (no shared code with `goertzel_power_db`).
    /// The window keeps fundamental leakage out of sideband bins 2.4 Hz
    /// away.
    fn direct_bin_energy_db(samples: &[f64], fs: f64, freq: f64) -> f64 {
        let n = samples.len() as f64;
        let (mut cs, mut sn, mut wsum) = (0.0f64, 0.0f64, 0.0f64);
        for (i, &x) in samples.iter().enumerate() {
            let w = 0.5 * (1.0 - (2.0 * PI * i as f64 / n).cos());
            wsum += w;
            let th = 2.0 * PI * freq * i as f64 / fs;
            cs += x * w * th.cos();
            sn += x * w * th.sin();
        }
        let amp = 2.0 * (cs * cs + sn * sn).sqrt() / wsum;
        20.0 * amp.max(1e-300).log10()
    }

    /// Every fault class must exceed the healthy signal's energy at its own
    /// designated signature bins by at least 6 dB at severity 1.0.
    #[test]
    fn class_signatures_exceed_healthy_floor_by_6db() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let op = full_load();
        let duration = 4.0; // 0.25 Hz resolution
        let healthy = generate_signal(
            &cfg,
            &geom,
            HealthState::new(FaultClass::Healthy, 0.0),
            op,
            duration,
            400,
        )
        .unwrap();

        // expected signature frequencies, derived by hand from the table
        // values: slip 0.024 at full load, f_r = 24.4 Hz, bearing formulas
        let fr = 24.4f64;
        let ratio: f64 = 7.835 / 38.5;
        let bpfo = 4.5 * fr * (1.0 - ratio);
        let ftf = fr / 2.0 * (1.0 - ratio);
        let bsf = 38.5 / (2.0 * 7.835) * fr * (1.0 - ratio * ratio);
        let cases: Vec<(FaultClass, Vec<f64>)> = vec![
            (FaultClass::Brb1, vec![47.6, 52.4]),
            (FaultClass::Brb2, vec![47.6, 52.4]),
            (FaultClass::Brb3, vec![47.6, 52.4]),
            (FaultClass::EccStatic, vec![50.0 - fr, 50.0 + fr]),
            (
                FaultClass::EccDynamic,
                vec![50.0 - fr, 50.0 + fr, 50.0 - 2.0 * fr, 50.0 + 2.0 * fr],
            ),
            (FaultClass::BearingOuter, vec![(50.0 - bpfo).abs(), 50.0 + bpfo]),
            (FaultClass::BearingCage, vec![(50.0 - ftf).abs(), 50.0 + ftf]),
            (FaultClass::BearingBall, vec![(50.0 - bsf).abs(), 50.0 + bsf]),
        ];
        for (class, freqs) in cases {
            let sig = generate_signal(
                &cfg,
                &geom,
                HealthState::new(class, 1.0),
                op,
                duration,
                400,
            )
            .unwrap();
            for f in freqs {
                let fault_db = direct_bin_energy_db(&sig.samples, cfg.sample_rate_hz, f);
                let healthy_db = direct_bin_energy_db(&healthy.samples, cfg.sample_rate_hz, f);
                assert!(
                    fault_db - healthy_db >= 6.0,
                    "{} at {f:.2} Hz: {fault_db:.1} dB vs healthy {healthy_db:.1} dB",
                    class.name()
                );
            }
        }
    }

    #[test]
    fn segment_windows_tile_by_stride() {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let st = HealthState::new(FaultClass::Healthy, 0.0);
        let sig = generate_signal(&cfg, &geom, st, full_load(), 1.5, 17).unwrap();
        let stride = 1000;
        let segs = segment(&sig, 64, stride).unwrap();
        let expect = (sig.samples.len() - 4096) / stride + 1;
        assert_eq!(segs.len(), expect);
        for (k, s) in segs.iter().enumerate() {
            assert_eq!(s.values[0], sig.samples[k * stride] as f32);
        }
    }
}
