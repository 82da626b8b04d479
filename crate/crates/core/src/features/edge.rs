//! Per-block Sobel edge density over a 4×4 grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_capacity, FeatureError, EDGE_CAPACITY};
use crate::raster::GrayRaster;

pub const GRID: usize = 4;
pub const BLOCKS: usize = GRID * GRID;
pub const DEFAULT_EDGE_THRESHOLD: u32 = 128;

/// Densities are stored in millionths so the persisted string stays short
/// and parses back to the identical value.
const DENSITY_SCALE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDensity {
    /// Row-major block densities in [0, 1].
    pub blocks: Vec<f64>,
}

/// Sobel magnitude |Gx| + |Gy| at an interior pixel.
#[inline]
pub fn sobel_magnitude(img: &GrayRaster, x: usize, y: usize) -> u32 {
    let p = |dx: usize, dy: usize| img.get(x + dx - 1, y + dy - 1) as i32;
    let gx = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
    let gy = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
    gx.unsigned_abs() + gy.unsigned_abs()
}

/// Start of grid cell `i` along an axis of length `len`; the last cell
/// absorbs the remainder.
#[inline]
pub fn cell_start(i: usize, len: usize) -> usize {
    if i >= GRID {
        len
    } else {
        i * (len / GRID)
    }
}

fn cell_of(pos: usize, len: usize) -> usize {
    pos.checked_div(len / GRID).map_or(GRID - 1, |c| c.min(GRID - 1))
}

pub fn edge_density(img: &GrayRaster, threshold: u32) -> Result<EdgeDensity, FeatureError> {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return Err(FeatureError::TooSmall { width: w, height: h });
    }
    let mut edges = [0u64; BLOCKS];
    for y in 1..h - 1 {
        let row = cell_of(y, h) * GRID;
        for x in 1..w - 1 {
            if sobel_magnitude(img, x, y) >= threshold {
                edges[row + cell_of(x, w)] += 1;
            }
        }
    }
    let mut blocks = Vec::with_capacity(BLOCKS);
    for by in 0..GRID {
        let rows = (cell_start(by + 1, h) - cell_start(by, h)) as u64;
        for bx in 0..GRID {
            let area = rows * (cell_start(bx + 1, w) - cell_start(bx, w)) as u64;
            blocks.push(quantized_ratio(edges[by * GRID + bx], area));
        }
    }
    Ok(EdgeDensity { blocks })
}

/// `num/den` rounded half-up to millionths; empty blocks have density 0.
fn quantized_ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let millionths = (num * DENSITY_SCALE * 2 + den) / (den * 2);
    millionths as f64 / DENSITY_SCALE as f64
}

impl EdgeDensity {
    /// `EDGE 16 d0 ... d15`, checked against the column capacity.
    pub fn serialize(&self) -> Result<String, FeatureError> {
        let s = self.to_string();
        check_capacity("EDGEDENSITY", &s, EDGE_CAPACITY)?;
        Ok(s)
    }
}

impl fmt::Display for EdgeDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EDGE {}", self.blocks.len())?;
        for d in &self.blocks {
            write!(f, " {d}")?;
        }
        Ok(())
    }
}

impl FromStr for EdgeDensity {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| FeatureError::Parse(format!("EDGE: {why}"));
        let mut it = s.split_ascii_whitespace();
        if it.next() != Some("EDGE") {
            return Err(bad("missing tag"));
        }
        let len: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing length"))?;
        if len != BLOCKS {
            return Err(bad("expected 16 blocks"));
        }
        let blocks = it
            .map(|t| match t.parse::<f64>() {
                Ok(d) if (0.0..=1.0).contains(&d) => Ok(d),
                _ => Err(bad("density outside [0,1]")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if blocks.len() != len {
            return Err(bad("block count does not match length"));
        }
        Ok(Self { blocks })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent Sobel: explicit kernels, explicit block membership test.
    fn oracle(img: &GrayRaster, threshold: i64) -> Vec<f64> {
        const KX: [[i64; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
        const KY: [[i64; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
        let (w, h) = img.dims();
        let bounds = |len: usize| -> Vec<(usize, usize)> {
            let s = len / 4;
            (0..4).map(|i| (i * s, if i == 3 { len } else { (i + 1) * s })).collect()
        };
        let (xb, yb) = (bounds(w), bounds(h));
        let mut out = Vec::new();
        for &(y0, y1) in &yb {
            for &(x0, x1) in &xb {
                let (mut edges, mut area) = (0u64, 0u64);
                for y in y0..y1 {
                    for x in x0..x1 {
                        area += 1;
                        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                            continue;
                        }
                        let (mut gx, mut gy) = (0i64, 0i64);
                        for (ky, (rx, ry)) in KX.iter().zip(KY.iter()).enumerate() {
                            for kx in 0..3 {
                                let v = img.get(x + kx - 1, y + ky - 1) as i64;
                                gx += rx[kx] * v;
                                gy += ry[kx] * v;
                            }
                        }
                        if gx.abs() + gy.abs() >= threshold {
                            edges += 1;
                        }
                    }
                }
                out.push(if area == 0 { 0.0 } else { edges as f64 / area as f64 });
            }
        }
        out
    }

    fn assert_close_to_oracle(img: &GrayRaster) {
        let got = edge_density(img, DEFAULT_EDGE_THRESHOLD).unwrap();
        for (g, o) in got.blocks.iter().zip(oracle(img, 128)) {
            assert!((g - o).abs() <= 0.5e-6 + 1e-15, "{g} vs {o}");
        }
    }

    #[test]
    fn constant_image_has_no_edges() {
        let d = edge_density(&GrayRaster::filled(20, 20, 77).unwrap(), 128).unwrap();
        assert_eq!(d.blocks, vec![0.0; 16]);
    }

    #[test]
    fn vertical_step_lights_two_block_columns() {
        let img = GrayRaster::from_fn(16, 16, |x, _| if x < 8 { 0 } else { 255 }).unwrap();
        let d = edge_density(&img, 128).unwrap();
        assert_close_to_oracle(&img);
        for (i, &v) in d.blocks.iter().enumerate() {
            let col = i % 4;
            assert_eq!(v > 0.0, col == 1 || col == 2, "block {i} = {v}");
        }
        assert_eq!(d.blocks.iter().filter(|&&v| v > 0.0).count(), 8);
    }

    #[test]
    fn tiny_image_single_block() {
        let img = GrayRaster::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 255 } else { 0 }).unwrap();
        let d = edge_density(&img, 128).unwrap();
        // the only interior pixel sits at the bright center: both kernels see a flat ring
        assert_eq!(sobel_magnitude(&img, 1, 1), 0);
        assert_eq!(d.blocks, oracle(&img, 128));
        assert_eq!(d.blocks[15], 0.0);
    }

    #[test]
    fn too_small() {
        assert!(matches!(
            edge_density(&GrayRaster::filled(2, 5, 0).unwrap(), 128),
            Err(FeatureError::TooSmall { .. })
        ));
    }

    #[test]
    fn serialized_fits_column() {
        let d = EdgeDensity { blocks: vec![0.123457; 16] };
        let s = d.serialize().unwrap();
        assert!(s.len() <= EDGE_CAPACITY);
        assert_eq!(s.parse::<EdgeDensity>().unwrap(), d);
        assert!("EDGE 16 2".parse::<EdgeDensity>().is_err());
    }

    proptest! {
        #[test]
        fn random_images_match_oracle(w in 3usize..30, h in 3usize..30, seed: u64) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = GrayRaster::from_fn(w, h, |_, _| rng.gen()).unwrap();
            assert_close_to_oracle(&img);
            let d = edge_density(&img, 128).unwrap();
            let s = d.serialize().unwrap();
            prop_assert_eq!(s.parse::<EdgeDensity>().unwrap(), d);
        }
    }
}
