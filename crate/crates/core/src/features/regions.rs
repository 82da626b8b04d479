//! Major-region count: 4-connected components of equal joint color bin
//! whose area reaches a fraction of the frame.

use super::color::joint_bin;
use crate::raster::RgbRaster;

pub const DEFAULT_MAJOR_REGION_PERCENT: f64 = 5.0;

/// Areas of all 4-connected same-bin components, in scan order of their
/// first pixel.
pub fn component_areas(img: &RgbRaster) -> Vec<usize> {
    let (w, h) = (img.width(), img.height());
    let bins: Vec<u8> = img.pixels().iter().map(|&p| joint_bin(p) as u8).collect();
    let mut seen = vec![false; bins.len()];
    let mut stack = Vec::new();
    let mut areas = Vec::new();
    for start in 0..bins.len() {
        if seen[start] {
            continue;
        }
        let bin = bins[start];
        seen[start] = true;
        stack.push(start);
        let mut area = 0;
        while let Some(i) = stack.pop() {
            area += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if !seen[j] && bins[j] == bin {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        areas.push(area);
    }
    areas
}

pub fn major_regions(img: &RgbRaster, min_area_percent: f64) -> u32 {
    let total = img.pixel_count() as f64;
    component_areas(img)
        .into_iter()
        .filter(|&a| a as f64 * 100.0 >= min_area_percent * total)
        .count() as u32
}
