//! Interactive browser demo over the core pipeline: synthesize a motor
//! current for any health state, inspect its spectrum, inject calibrated
//! noise, and watch the signal-to-image + morphology preprocessing.
//!
//! Exports plain buffers (samples, dB magnitudes, 8-bit pixels) so the page
//! renders them on canvases without any framework. The `demo` module is
//! host-testable; the `#[wasm_bindgen]` wrappers only translate errors.

use wasm_bindgen::prelude::*;

pub mod demo {
    use faultmeta::imaging::{preprocess, ImagingConfig, MorphOp, MorphStep, SeShape};
    use faultmeta::signalgen::{
        amplitude_spectrum, generate_signal, inject_drive_noise, inject_noise, measure_snr,
        segment, BearingGeometry, FaultClass, HealthState, MotorConfig, OperatingPoint, RawSignal,
        LOAD_SPEED_TABLE,
    };

    pub const SEGMENT_SIDE: usize = 64;
    // exactly one 64^2-sample window at 10 kHz
    const DEMO_DURATION_S: f64 = 0.4096;

    fn parse_class(name: &str) -> Result<FaultClass, String> {
        FaultClass::from_name(name).ok_or_else(|| format!("unknown health state {name:?}"))
    }

    fn load_at(index: usize) -> Result<OperatingPoint, String> {
        let (load, _) = LOAD_SPEED_TABLE
            .get(index)
            .ok_or_else(|| "load index out of range".to_string())?;
        OperatingPoint::from_load(*load).map_err(|e| e.to_string())
    }

    fn raw(
        class: &str,
        load_index: usize,
        severity: f64,
        snr_db: f64,
        drive_noise: bool,
        seed: u64,
    ) -> Result<RawSignal, String> {
        let cfg = MotorConfig::default();
        let geom = BearingGeometry::default();
        let state = HealthState::new(parse_class(class)?, severity);
        let op = load_at(load_index)?;
        let signal = generate_signal(&cfg, &geom, state, op, DEMO_DURATION_S, seed)
            .map_err(|e| e.to_string())?;
        if snr_db.is_finite() {
            let noisy = if drive_noise {
                inject_drive_noise(&signal, cfg.supply_freq_hz, snr_db, seed ^ 0xA0)
            } else {
                inject_noise(&signal, snr_db, seed ^ 0xA0)
            };
            return noisy.map_err(|e| e.to_string());
        }
        Ok(signal)
    }

    pub fn class_names() -> String {
        FaultClass::ALL
            .iter()
            .map(|c| c.name())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn load_levels() -> String {
        LOAD_SPEED_TABLE
            .iter()
            .map(|(l, rpm)| format!("{:.0}% ({rpm} rpm)", l * 100.0))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn waveform(
        class: &str,
        load_index: usize,
        severity: f64,
        snr_db: f64,
        drive_noise: bool,
        seed: u64,
    ) -> Result<Vec<f32>, String> {
        let raw = raw(class, load_index, severity, snr_db, drive_noise, seed)?;
        Ok(raw.samples.iter().map(|&v| v as f32).collect())
    }

    pub fn spectrum(
        class: &str,
        load_index: usize,
        severity: f64,
        snr_db: f64,
        drive_noise: bool,
        seed: u64,
        max_freq_hz: f64,
        bins: usize,
    ) -> Result<Vec<f32>, String> {
        let raw = raw(class, load_index, severity, snr_db, drive_noise, seed)?;
        Ok(
            amplitude_spectrum(&raw.samples, raw.sample_rate_hz, max_freq_hz, bins)
                .into_iter()
                .map(|(_, db)| db as f32)
                .collect(),
        )
    }

    pub fn parse_chain(spec: &str) -> Result<ImagingConfig, String> {
        let spec = spec.trim();
        if spec.is_empty() || spec == "none" {
            return Ok(ImagingConfig::identity());
        }
        let mut chain = Vec::new();
        for step in spec.split(',') {
            let step = step.trim();
            let (op, rest) = if let Some(r) = step.strip_prefix("open") {
                (MorphOp::Open, r)
            } else if let Some(r) = step.strip_prefix("close") {
                (MorphOp::Close, r)
            } else if let Some(r) = step.strip_prefix("erode") {
                (MorphOp::Erode, r)
            } else if let Some(r) = step.strip_prefix("dilate") {
                (MorphOp::Dilate, r)
            } else {
                return Err(format!("unknown morphology step {step:?}"));
            };
            let (shape, digits) = if let Some(d) = rest.strip_prefix('x') {
                (SeShape::Cross, d)
            } else {
                (SeShape::Square, rest)
            };
            let size: usize = digits
                .parse()
                .map_err(|_| format!("bad structuring-element size in {step:?}"))?;
            if size % 2 == 0 {
                return Err(format!("structuring-element size must be odd in {step:?}"));
            }
            chain.push(MorphStep { op, shape, size });
        }
        Ok(ImagingConfig { chain })
    }

    pub fn image_pixels(
        class: &str,
        load_index: usize,
        severity: f64,
        snr_db: f64,
        drive_noise: bool,
        seed: u64,
        chain: &str,
    ) -> Result<Vec<u8>, String> {
        let raw = raw(class, load_index, severity, snr_db, drive_noise, seed)?;
        let segs = segment(&raw, SEGMENT_SIDE, SEGMENT_SIDE * SEGMENT_SIDE)
            .map_err(|e| e.to_string())?;
        let cfg = parse_chain(chain)?;
        let img = preprocess(&segs[0], &cfg).map_err(|e| e.to_string())?;
        Ok(img
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect())
    }

    pub fn measured_snr(
        class: &str,
        load_index: usize,
        severity: f64,
        target_snr_db: f64,
        drive_noise: bool,
        seed: u64,
    ) -> Result<f64, String> {
        let clean = raw(class, load_index, severity, f64::NAN, false, seed)?;
        let noisy = raw(class, load_index, severity, target_snr_db, drive_noise, seed)?;
        measure_snr(&clean.samples, &noisy.samples).map_err(|e| e.to_string())
    }
}

fn js<T>(r: Result<T, String>) -> Result<T, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// The nine health state names, comma separated.
#[wasm_bindgen]
pub fn class_names() -> String {
    demo::class_names()
}

/// Load levels with their speeds, comma separated.
#[wasm_bindgen]
pub fn load_levels() -> String {
    demo::load_levels()
}

/// One segment (64 x 64 = 4096 samples) of synthetic current, in amperes.
/// `snr_db = NaN` means clean; `drive_noise` switches the Gaussian model to
/// the 5th/7th-harmonic drive blend.
#[wasm_bindgen]
pub fn waveform(
    class: &str,
    load_index: usize,
    severity: f64,
    snr_db: f64,
    drive_noise: bool,
    seed: u64,
) -> Result<Vec<f32>, JsValue> {
    js(demo::waveform(class, load_index, severity, snr_db, drive_noise, seed))
}

/// Amplitude spectrum in dB over `bins` points spanning 0..max_freq_hz.
#[wasm_bindgen]
pub fn spectrum(
    class: &str,
    load_index: usize,
    severity: f64,
    snr_db: f64,
    drive_noise: bool,
    seed: u64,
    max_freq_hz: f64,
    bins: usize,
) -> Result<Vec<f32>, JsValue> {
    js(demo::spectrum(
        class, load_index, severity, snr_db, drive_noise, seed, max_freq_hz, bins,
    ))
}

/// The 64 x 64 grayscale image the network sees, as 8-bit pixels, after the
/// given morphology chain ("open3", "erode3,dilate3", "closex5", "none").
#[wasm_bindgen]
pub fn image_pixels(
    class: &str,
    load_index: usize,
    severity: f64,
    snr_db: f64,
    drive_noise: bool,
    seed: u64,
    chain: &str,
) -> Result<Vec<u8>, JsValue> {
    js(demo::image_pixels(
        class, load_index, severity, snr_db, drive_noise, seed, chain,
    ))
}

/// Round-trip check: inject noise at `target_snr_db`, then measure it back
/// from the clean/noisy pair.
#[wasm_bindgen]
pub fn measured_snr(
    class: &str,
    load_index: usize,
    severity: f64,
    target_snr_db: f64,
    drive_noise: bool,
    seed: u64,
) -> Result<f64, JsValue> {
    js(demo::measured_snr(
        class, load_index, severity, target_snr_db, drive_noise, seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::demo;

    #[test]
    fn exports_work_natively() {
        assert_eq!(demo::class_names().split(',').count(), 9);
        assert_eq!(demo::load_levels().split(',').count(), 5);
        let w = demo::waveform("brb1", 4, 1.0, f64::NAN, false, 7).unwrap();
        assert_eq!(w.len(), 4096);
        let s = demo::spectrum("ecc_static", 2, 0.8, 10.0, true, 7, 200.0, 128).unwrap();
        assert_eq!(s.len(), 128);
        let px = demo::image_pixels("bearing_outer", 0, 1.0, f64::NAN, false, 3, "open3").unwrap();
        assert_eq!(px.len(), 4096);
        let snr = demo::measured_snr("healthy", 1, 0.0, 6.0, true, 5).unwrap();
        assert!((snr - 6.0).abs() < 1e-6);
    }

    #[test]
    fn chain_parser_accepts_variants() {
        assert!(demo::parse_chain("none").is_ok());
        assert!(demo::parse_chain("open3").is_ok());
        assert!(demo::parse_chain("erode3,dilate5").is_ok());
        assert!(demo::parse_chain("closex5").is_ok());
        assert!(demo::parse_chain("blur3").is_err());
        assert!(demo::parse_chain("open2").is_err(), "even sizes rejected");
    }

    #[test]
    fn bad_inputs_surface_as_errors() {
        assert!(demo::waveform("nope", 0, 1.0, f64::NAN, false, 1).is_err());
        assert!(demo::waveform("healthy", 9, 1.0, f64::NAN, false, 1).is_err());
    }
}
