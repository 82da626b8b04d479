//! Simple color histogram: 4×4×4 joint RGB bins plus full-resolution
//! per-channel marginals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_capacity, FeatureError, SCH_CAPACITY};
use crate::raster::RgbRaster;

pub const JOINT_BINS: usize = 64;

/// Joint bin of a pixel: 16·⌊r/64⌋ + 4·⌊g/64⌋ + ⌊b/64⌋.
#[inline]
pub fn joint_bin(rgb: [u8; 3]) -> usize {
    let [r, g, b] = rgb.map(|c| (c >> 6) as usize);
    16 * r + 4 * g + b
}

/// The persisted part of the color histogram (the `SCH` column).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub bins: Vec<u32>,
}

impl JointHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&b| b as u64).sum()
    }

    /// `SCH 64 b0 b1 ... b63`, checked against the column capacity.
    pub fn serialize(&self) -> Result<String, FeatureError> {
        let s = self.to_string();
        check_capacity("SCH", &s, SCH_CAPACITY)?;
        Ok(s)
    }
}

impl fmt::Display for JointHistogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SCH {}", self.bins.len())?;
        for b in &self.bins {
            write!(f, " {b}")?;
        }
        Ok(())
    }
}

impl FromStr for JointHistogram {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |why: &str| FeatureError::Parse(format!("SCH: {why}"));
        let mut it = s.split_ascii_whitespace();
        if it.next() != Some("SCH") {
            return Err(bad("missing tag"));
        }
        let len: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing length"))?;
        if len != JOINT_BINS {
            return Err(bad("expected 64 bins"));
        }
        let bins = it
            .map(|t| t.parse::<u32>().map_err(|_| bad("bad count")))
            .collect::<Result<Vec<_>, _>>()?;
        if bins.len() != len {
            return Err(bad("bin count does not match length"));
        }
        Ok(Self { bins })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorHistogram {
    pub joint: JointHistogram,
    pub red: Box<[u32; 256]>,
    pub green: Box<[u32; 256]>,
    pub blue: Box<[u32; 256]>,
}

pub fn color_histogram(img: &RgbRaster) -> ColorHistogram {
    let mut joint = vec![0u32; JOINT_BINS];
    let mut red = Box::new([0u32; 256]);
    let mut green = Box::new([0u32; 256]);
    let mut blue = Box::new([0u32; 256]);
    for &p in img.pixels() {
        joint[joint_bin(p)] += 1;
        red[p[0] as usize] += 1;
        green[p[1] as usize] += 1;
        blue[p[2] as usize] += 1;
    }
    ColorHistogram {
        joint: JointHistogram { bins: joint },
        red,
        green,
        blue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute-force quantizer: find the bin by scanning all 64 cells.
    fn oracle_bin(rgb: [u8; 3]) -> usize {
        let level = |c: u8| (0..4).find(|&l| (c as usize) < (l + 1) * 64).unwrap();
        let mut idx = 0;
        for r in 0..4 {
            for g in 0..4 {
                for b in 0..4 {
                    if (r, g, b) == (level(rgb[0]), level(rgb[1]), level(rgb[2])) {
                        return idx;
                    }
                    idx += 1;
                }
            }
        }
        unreachable!()
    }

    #[test]
    fn black_image() {
        let h = color_histogram(&RgbRaster::filled(2, 2, [0, 0, 0]).unwrap());
        assert_eq!(h.joint.bins[0], 4);
        assert_eq!((h.red[0], h.green[0], h.blue[0]), (4, 4, 4));
        let expected = format!("SCH 64 4{}", " 0".repeat(63));
        assert_eq!(h.joint.serialize().unwrap(), expected);
    }

    #[test]
    fn white_pixel_goes_to_last_bin() {
        let h = color_histogram(&RgbRaster::filled(1, 1, [255, 255, 255]).unwrap());
        assert_eq!(h.joint.bins[63], 1);
    }

    #[test]
    fn reds_split_by_quantization() {
        let img = RgbRaster::new(1, 2, vec![[70, 10, 10], [200, 10, 10]]).unwrap();
        let h = color_histogram(&img);
        assert_eq!(oracle_bin([70, 10, 10]), 16);
        assert_eq!(oracle_bin([200, 10, 10]), 48);
        assert_eq!((h.joint.bins[16], h.joint.bins[48], h.joint.total()), (1, 1, 2));
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("SCH 3 1 2 3".parse::<JointHistogram>().is_err());
        assert!("GLCM 64".parse::<JointHistogram>().is_err());
        let short = format!("SCH 64{}", " 1".repeat(63));
        assert!(short.parse::<JointHistogram>().is_err());
    }

    proptest! {
        #[test]
        fn bins_match_oracle_and_sums(pixels in proptest::collection::vec(any::<[u8; 3]>(), 1..200)) {
            let n = pixels.len();
            let img = RgbRaster::new(n, 1, pixels.clone()).unwrap();
            let h = color_histogram(&img);
            let mut expected = vec![0u32; 64];
            for p in &pixels {
                expected[oracle_bin(*p)] += 1;
            }
            prop_assert_eq!(&h.joint.bins, &expected);
            for ch in [&h.red, &h.green, &h.blue] {
                prop_assert_eq!(ch.iter().map(|&c| c as usize).sum::<usize>(), n);
            }
        }

        #[test]
        fn sch_round_trips(bins in proptest::collection::vec(any::<u32>(), 64)) {
            let h = JointHistogram { bins };
            let s = h.serialize().unwrap();
            prop_assert!(s.len() <= SCH_CAPACITY);
            prop_assert_eq!(s.parse::<JointHistogram>().unwrap(), h);
        }
    }
}
