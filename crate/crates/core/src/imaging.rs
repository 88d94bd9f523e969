//! Signal-to-image conversion and grayscale morphology.
//!
//! Segments of n^2 samples become n x n images by row-major reshape, are
//! min-max normalized into [0, 1], and optionally run through a chain of
//! flat morphological operators (min/max filtering under a boolean
//! structuring element, borders handled by edge replication).

use crate::error::{Error, Result};
use crate::signalgen::SignalSegment;
use serde::{Deserialize, Serialize};

/// A square grayscale image with pixels in [0, 1] after normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub n: usize,
    /// Row-major pixels, length n * n.
    pub pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(n: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for a {n}x{n} image, got {}",
                n * n,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite pixel".into()));
        }
        Ok(GrayImage { n, pixels })
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.n + col]
    }

    /// Row-major flatten; inverse of [`reshape_to_image`].
    pub fn flatten(&self) -> Vec<f32> {
        self.pixels.clone()
    }
}

/// Flat structuring element: odd-sized boolean mask, origin at the center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub k: usize,
    /// Row-major mask, length k * k.
    pub mask: Vec<bool>,
}

impl StructuringElement {
    pub fn new(k: usize, mask: Vec<bool>) -> Result<Self> {
        if k % 2 == 0 || k == 0 {
            return Err(Error::InvalidConfig(format!("se size {k} must be odd")));
        }
        if mask.len() != k * k {
            return Err(Error::ShapeMismatch(format!(
                "se mask length {} != {}",
                mask.len(),
                k * k
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidConfig("se mask has no active cell".into()));
        }
        Ok(StructuringElement { k, mask })
    }

    /// Full k x k square.
    pub fn square(k: usize) -> Result<Self> {
        Self::new(k, vec![true; k * k])
    }

    /// Plus-shaped (4-connected) element.
    pub fn cross(k: usize) -> Result<Self> {
        let c = k / 2;
        let mask = (0..k * k)
            .map(|i| i / k == c || i % k == c)
            .collect();
        Self::new(k, mask)
    }

    /// Point reflection through the origin.
    pub fn reflect(&self) -> StructuringElement {
        let mut mask = self.mask.clone();
        mask.reverse();
        StructuringElement { k: self.k, mask }
    }

    fn offsets(&self) -> Vec<(isize, isize)> {
        let c = (self.k / 2) as isize;
        let mut out = Vec::new();
        for r in 0..self.k {
            for q in 0..self.k {
                if self.mask[r * self.k + q] {
                    out.push((r as isize - c, q as isize - c));
                }
            }
        }
        out
    }
}

/// Row-major reshape of an n^2 segment into an n x n image (no
/// normalization; pixel range is whatever the segment carried).
pub fn reshape_to_image(seg: &SignalSegment) -> Result<GrayImage> {
    let n = seg.side_len()?;
    GrayImage::new(n, seg.values.clone())
}

/// Affine min-max map onto [0, 1]; a constant image maps to all 0.5.
pub fn normalize(image: &GrayImage) -> GrayImage {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &p in &image.pixels {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let range = hi - lo;
    let pixels = if range <= 0.0 {
        vec![0.5; image.pixels.len()]
    } else {
        image.pixels.iter().map(|&p| (p - lo) / range).collect()
    };
    GrayImage {
        n: image.n,
        pixels,
    }
}

#[derive(Clone, Copy)]
enum Extreme {
    Min,
    Max,
}

fn morph_filter(image: &GrayImage, se: &StructuringElement, which: Extreme) -> GrayImage {
    let n = image.n as isize;
    let offsets = se.offsets();
    let mut pixels = Vec::with_capacity(image.pixels.len());
    for r in 0..n {
        for c in 0..n {
            let mut acc = match which {
                Extreme::Min => f32::INFINITY,
                Extreme::Max => f32::NEG_INFINITY,
            };
            for &(dr, dc) in &offsets {
                // Edge replication: clamp out-of-range coordinates.
                let rr = (r + dr).clamp(0, n - 1) as usize;
                let cc = (c + dc).clamp(0, n - 1) as usize;
                let v = image.pixels[rr * image.n + cc];
                acc = match which {
                    Extreme::Min => acc.min(v),
                    Extreme::Max => acc.max(v),
                };
            }
            pixels.push(acc);
        }
    }
    GrayImage {
        n: image.n,
        pixels,
    }
}

/// Flat grayscale erosion: minimum over the se-covered neighborhood.
pub fn erode(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    morph_filter(image, se, Extreme::Min)
}

/// Flat grayscale dilation: maximum over the se-covered neighborhood.
pub fn dilate(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    morph_filter(image, se, Extreme::Max)
}

/// Opening: erosion followed by dilation.
pub fn open(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    dilate(&erode(image, se), se)
}

/// Closing: dilation followed by erosion.
pub fn close(image: &GrayImage, se: &StructuringElement) -> GrayImage {
    erode(&dilate(image, se), se)
}

/// One step of a configured morphology chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// Named structuring element shapes for configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeShape {
    Square,
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphStep {
    pub op: MorphOp,
    pub shape: SeShape,
    pub size: usize,
}

/// The imaging pipeline configuration: an ordered list of morphology steps.
/// An empty chain means reshape + normalize only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    pub chain: Vec<MorphStep>,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        ImagingConfig {
            chain: vec![MorphStep {
                op: MorphOp::Open,
                shape: SeShape::Square,
                size: 3,
            }],
        }
    }
}

impl ImagingConfig {
    /// No morphology at all; images stay in their reshaped, normalized form.
    pub fn identity() -> Self {
        ImagingConfig { chain: Vec::new() }
    }
}

fn build_se(step: &MorphStep) -> Result<StructuringElement> {
    match step.shape {
        SeShape::Square => StructuringElement::square(step.size),
        SeShape::Cross => StructuringElement::cross(step.size),
    }
}

/// Full preprocessing: reshape -> normalize -> morphology chain ->
/// re-normalize (skipped when the chain is empty, since the image is
/// already normalized).
pub fn preprocess(seg: &SignalSegment, cfg: &ImagingConfig) -> Result<GrayImage> {
    let mut img = normalize(&reshape_to_image(seg)?);
    if cfg.chain.is_empty() {
        return Ok(img);
    }
    for step in &cfg.chain {
        let se = build_se(step)?;
        img = match step.op {
            MorphOp::Erode => erode(&img, &se),
            MorphOp::Dilate => dilate(&img, &se),
            MorphOp::Open => open(&img, &se),
            MorphOp::Close => close(&img, &se),
        };
    }
    Ok(normalize(&img))
}

/// Debug export as ASCII PGM (P2), 8-bit quantized.
pub fn to_pgm(image: &GrayImage) -> String {
    let mut out = String::new();
    out.push_str(&format!("P2\n{} {}\n255\n", image.n, image.n));
    for r in 0..image.n {
        let row: Vec<String> = (0..image.n)
            .map(|c| {
                let v = (image.at(r, c).clamp(0.0, 1.0) * 255.0).round() as u32;
                v.to_string()
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::signalgen::{FaultClass, HealthState};

    fn seg_of(values: Vec<f32>) -> SignalSegment {
        SignalSegment {
            values,
            label: HealthState::new(FaultClass::Healthy, 0.0),
            op: None,
            snr_db: None,
        }
    }

    /// Random image on a dyadic grid (k/256) so complement identities are
    /// exact in f32.
    fn random_image(n: usize, rng: &mut Rng) -> GrayImage {
        let pixels = (0..n * n)
            .map(|_| rng.index(257) as f32 / 256.0)
            .collect();
        GrayImage::new(n, pixels).unwrap()
    }

    #[test]
    fn reshape_row_major() {
        let img = reshape_to_image(&seg_of(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(img.n, 2);
        assert_eq!(img.pixels, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(img.at(0, 1), 2.0);
        assert_eq!(img.at(1, 0), 3.0);

        let single = reshape_to_image(&seg_of(vec![7.5])).unwrap();
        assert_eq!(single.n, 1);
        assert!(reshape_to_image(&seg_of(vec![0.0; 5])).is_err());
    }

    #[test]
    fn reshape_flatten_roundtrip() {
        let mut rng = Rng::new(4);
        for _ in 0..50 {
            let values: Vec<f32> = (0..4096).map(|_| rng.uniform() as f32).collect();
            let seg = seg_of(values.clone());
            let img = reshape_to_image(&seg).unwrap();
            assert_eq!(img.flatten(), values);
        }
    }

    #[test]
    fn normalize_cases() {
        let two = GrayImage::new(2, vec![-1.0, 1.0, 1.0, -1.0]).unwrap();
        assert_eq!(normalize(&two).pixels, vec![0.0, 1.0, 1.0, 0.0]);

        let constant = GrayImage::new(2, vec![3.0; 4]).unwrap();
        assert_eq!(normalize(&constant).pixels, vec![0.5; 4]);

        // affine map: 0, 2, 4 land on 0, 0.5, 1
        let spread = GrayImage::new(2, vec![0.0, 2.0, 4.0, 4.0]).unwrap();
        assert_eq!(normalize(&spread).pixels, vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn erode_dilate_center_spike() {
        let mut px = vec![0.0f32; 9];
        px[4] = 1.0;
        let img = GrayImage::new(3, px).unwrap();
        let se = StructuringElement::square(3).unwrap();
        assert_eq!(erode(&img, &se).pixels, vec![0.0; 9]);
        assert_eq!(dilate(&img, &se).pixels, vec![1.0; 9]);
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = GrayImage::new(4, vec![0.25; 16]).unwrap();
        let se = StructuringElement::square(3).unwrap();
        assert_eq!(erode(&img, &se), img);
        assert_eq!(dilate(&img, &se), img);
        assert_eq!(open(&img, &se), img);
        assert_eq!(close(&img, &se), img);
    }

    #[test]
    fn ordering_duality_idempotence_extensivity() {
        let mut rng = Rng::new(77);
        let se = StructuringElement::square(3).unwrap();
        for _ in 0..100 {
            let img = random_image(8, &mut rng);
            let er = erode(&img, &se);
            let di = dilate(&img, &se);
            let op = open(&img, &se);
            let cl = close(&img, &se);
            for i in 0..img.pixels.len() {
                // erosion <= identity <= dilation
                assert!(er.pixels[i] <= img.pixels[i]);
                assert!(img.pixels[i] <= di.pixels[i]);
                // opening anti-extensive, closing extensive
                assert!(op.pixels[i] <= img.pixels[i]);
                assert!(cl.pixels[i] >= img.pixels[i]);
            }
            // idempotence, exact
            assert_eq!(open(&op, &se), op);
            assert_eq!(close(&cl, &se), cl);
            // duality vs complement for a symmetric se
            let complement = GrayImage {
                n: img.n,
                pixels: img.pixels.iter().map(|&p| 1.0 - p).collect(),
            };
            let dual: Vec<f32> = dilate(&complement, &se.reflect())
                .pixels
                .iter()
                .map(|&p| 1.0 - p)
                .collect();
            assert_eq!(er.pixels, dual);
        }
    }

    #[test]
    fn cross_se_shape() {
        let se = StructuringElement::cross(3).unwrap();
        assert_eq!(
            se.mask,
            vec![false, true, false, true, true, true, false, true, false]
        );
        assert!(StructuringElement::square(2).is_err());
        assert!(StructuringElement::new(3, vec![false; 9]).is_err());
    }

    #[test]
    fn preprocess_identity_chain_is_normalize_reshape() {
        let values: Vec<f32> = (0..16).map(|i| i as f32).collect();
        let seg = seg_of(values);
        let got = preprocess(&seg, &ImagingConfig::identity()).unwrap();
        let expect = normalize(&reshape_to_image(&seg).unwrap());
        assert_eq!(got, expect);
    }

    #[test]
    fn preprocess_constant_segment_is_half_gray() {
        let seg = seg_of(vec![2.5; 16]);
        let got = preprocess(&seg, &ImagingConfig::default()).unwrap();
        assert_eq!(got.pixels, vec![0.5; 16]);
    }

    #[test]
    fn preprocess_open3_matches_stage_composition() {
        let values: Vec<f32> = vec![
            0.0, 8.0, 1.0, 2.0, //
            3.0, 9.0, 2.0, 1.0, //
            0.5, 1.0, 7.0, 0.0, //
            2.0, 2.0, 1.0, 4.0,
        ];
        let seg = seg_of(values);
        let got = preprocess(&seg, &ImagingConfig::default()).unwrap();
        let se = StructuringElement::square(3).unwrap();
        let expect = normalize(&open(&normalize(&reshape_to_image(&seg).unwrap()), &se));
        assert_eq!(got, expect);
        for &p in &got.pixels {
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn pgm_header_and_size() {
        let img = GrayImage::new(2, vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        let pgm = to_pgm(&img);
        let mut lines = pgm.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.next(), Some("0 255"));
        assert_eq!(lines.next(), Some("128 64"));
    }
}
