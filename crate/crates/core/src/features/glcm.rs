//! Gray level co-occurrence matrix and its texture statistics.
//!
//! Pairs are horizontal at displacement `step`; each pair increments both
//! (a, b) and (b, a), so the matrix is symmetric before normalization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::raster::GrayRaster;

pub const LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMode {
    /// Σ (a−μx)(b−μy)·p / (σx²·σy²): the variance accumulators multiplied
    /// directly, without a square root.
    #[default]
    Literal,
    /// Standard Haralick correlation, Σ (a−μx)(b−μy)·p / (σx·σy).
    Haralick,
}

/// Integer co-occurrence counts; normalization happens on read.
#[derive(Clone)]
pub struct Glcm {
    counts: Vec<u32>,
    pixel_counter: u64,
    step: usize,
}

impl fmt::Debug for Glcm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Glcm")
            .field("pixel_counter", &self.pixel_counter)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl Glcm {
    pub fn accumulate(img: &GrayRaster, step: usize) -> Result<Self, FeatureError> {
        let width = img.width();
        if step == 0 || width <= step {
            return Err(FeatureError::TooNarrow { width, step });
        }
        let mut counts = vec![0u32; LEVELS * LEVELS];
        let mut pixel_counter = 0u64;
        for row in img.pixels().chunks_exact(width) {
            for (&a, &b) in row.iter().zip(&row[step..]) {
                let (a, b) = (a as usize, b as usize);
                counts[a * LEVELS + b] += 1;
                counts[b * LEVELS + a] += 1;
                pixel_counter += 2;
            }
        }
        Ok(Self {
            counts,
            pixel_counter,
            step,
        })
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn pixel_counter(&self) -> u64 {
        self.pixel_counter
    }

    pub fn count(&self, a: u8, b: u8) -> u32 {
        self.counts[a as usize * LEVELS + b as usize]
    }

    /// Normalized co-occurrence probability of (a, b).
    pub fn probability(&self, a: u8, b: u8) -> f64 {
        self.count(a, b) as f64 / self.pixel_counter as f64
    }

    /// Non-zero cells as (a, b, p), row-major.
    fn cells(&self) -> Vec<(f64, f64, f64)> {
        let total = self.pixel_counter as f64;
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| ((i / LEVELS) as f64, (i % LEVELS) as f64, c as f64 / total))
            .collect()
    }

    pub fn features(&self, mode: CorrelationMode) -> GlcmFeatures {
        let cells = self.cells();

        let mut asm = 0.0;
        let mut contrast = 0.0;
        let mut idm = 0.0;
        let mut entropy = 0.0;
        let mut px = 0.0;
        let mut py = 0.0;
        for &(a, b, p) in &cells {
            let d = a - b;
            asm += p * p;
            contrast += d * d * p;
            idm += p / (1.0 + d * d);
            entropy -= p * p.ln();
            px += a * p;
            py += b * p;
        }

        let mut var_x = 0.0;
        let mut var_y = 0.0;
        let mut covariance = 0.0;
        for &(a, b, p) in &cells {
            var_x += (a - px) * (a - px) * p;
            var_y += (b - py) * (b - py) * p;
            covariance += (a - px) * (b - py) * p;
        }
        let denom = match mode {
            CorrelationMode::Literal => var_x * var_y,
            CorrelationMode::Haralick => (var_x * var_y).sqrt(),
        };
        // zero variance: no linear dependence to measure
        let correlation = if denom == 0.0 { 0.0 } else { covariance / denom };

        GlcmFeatures {
            pixel_counter: self.pixel_counter,
            asm,
            contrast,
            correlation,
            idm,
            entropy,
        }
    }
}

/// Texture statistics persisted in the `GLCM` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlcmFeatures {
    pub pixel_counter: u64,
    pub asm: f64,
    pub contrast: f64,
    pub correlation: f64,
    pub idm: f64,
    /// Natural-log entropy.
    pub entropy: f64,
}

impl GlcmFeatures {
    /// (asm, contrast, correlation, idm, entropy) in column order.
    pub fn as_array(&self) -> [f64; 5] {
        [self.asm, self.contrast, self.correlation, self.idm, self.entropy]
    }
}

pub fn glcm_features(
    img: &GrayRaster,
    step: usize,
    mode: CorrelationMode,
) -> Result<GlcmFeatures, FeatureError> {
    Ok(Glcm::accumulate(img, step)?.features(mode))
}

impl fmt::Display for GlcmFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "GLCM {} {} {} {} {} {}",
            self.pixel_counter, self.asm, self.contrast, self.correlation, self.idm, self.entropy
        )
    }
}

impl FromStr for GlcmFeatures {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| FeatureError::Parse(format!("GLCM: {why}"));
        let tokens: Vec<&str> = s.split_ascii_whitespace().collect();
        let [tag, pc, rest @ ..] = tokens.as_slice() else {
            return Err(bad("too short"));
        };
        if *tag != "GLCM" {
            return Err(bad("missing tag"));
        }
        if rest.len() != 5 {
            return Err(bad("expected 5 statistics"));
        }
        let pixel_counter = pc.parse().map_err(|_| bad("bad pixel counter"))?;
        let mut v = [0.0; 5];
        for (slot, tok) in v.iter_mut().zip(rest) {
            *slot = tok.parse::<f64>().map_err(|_| bad("bad statistic"))?;
            if !slot.is_finite() {
                return Err(bad("non-finite statistic"));
            }
        }
        let [asm, contrast, correlation, idm, entropy] = v;
        Ok(Self {
            pixel_counter,
            asm,
            contrast,
            correlation,
            idm,
            entropy,
        })
    }
}
