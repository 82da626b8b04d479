//! Seeded synthetic clips for tests, benchmarks and demo catalogs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::keyframe::{FrameSeq, KeyframeError};
use crate::raster::{encode_ppm, RgbRaster};

/// Dominant colors of the four color classes. Their luminances (82, 110,
/// 46, 172) sit inside different 32-level gray ranges.
pub const CLASS_COLORS: [[u8; 3]; 4] = [[215, 25, 25], [30, 165, 40], [20, 30, 200], [200, 185, 30]];

const WIDTH: usize = 64;
const HEIGHT: usize = 48;

struct Rect {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    dx: i64,
    dy: i64,
    color: [u8; 3],
}

impl Rect {
    fn contains(&self, x: i64, y: i64, t: i64) -> bool {
        let (rx, ry) = (self.x + self.dx * t, self.y + self.dy * t);
        x >= rx && x < rx + self.w && y >= ry && y < ry + self.h
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: [u8; 3], amount: i16) -> [u8; 3] {
    c.map(|v| (v as i16 + rng.gen_range(-amount..=amount)).clamp(0, 255) as u8)
}

fn render(bg: &[[u8; 3]], rects: &[Rect], frames: usize) -> FrameSeq {
    FrameSeq::from_rasters((0..frames).map(|t| {
        let img = RgbRaster::from_fn(WIDTH, HEIGHT, |x, y| {
            rects
                .iter()
                .rev()
                .find(|r| r.contains(x as i64, y as i64, t as i64))
                .map_or(bg[y * WIDTH + x], |r| r.color)
        })
        .expect("nonzero dimensions");
        (format!("frame_{t:04}.ppm"), img)
    }))
}

fn random_rect(rng: &mut ChaCha8Rng, color: [u8; 3], speed: i64) -> Rect {
    Rect {
        x: rng.gen_range(0..WIDTH as i64 - 8),
        y: rng.gen_range(0..HEIGHT as i64 - 8),
        w: rng.gen_range(4..16),
        h: rng.gen_range(4..12),
        dx: rng.gen_range(-speed..=speed),
        dy: rng.gen_range(-speed..=speed),
        color,
    }
}

/// A clip dominated by the color of `class`, with per-seed texture and
/// moving patches in darker and lighter shades of the same color.
pub fn class_clip(class: usize, seed: u64) -> FrameSeq {
    let base = CLASS_COLORS[class % CLASS_COLORS.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class as u64) << 32));
    let tint = jitter(&mut rng, base, 5);
    let bg: Vec<[u8; 3]> = (0..WIDTH * HEIGHT).map(|_| jitter(&mut rng, tint, 5)).collect();
    let rects: Vec<Rect> = (0..rng.gen_range(2..5))
        .map(|_| {
            let shade = rng.gen_range(0.85..1.15);
            let color = base.map(|v| (v as f64 * shade).min(255.0) as u8);
            random_rect(&mut rng, color, 2)
        })
        .collect();
    render(&bg, &rects, 8)
}

/// A clip with random background, texture and moving rectangles; distinct
/// seeds give visually distinct clips.
pub fn diverse_clip(seed: u64) -> FrameSeq {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tint: [u8; 3] = rng.gen();
    let noise: i16 = rng.gen_range(0..60);
    let bg: Vec<[u8; 3]> = (0..WIDTH * HEIGHT).map(|_| jitter(&mut rng, tint, noise)).collect();
    let rects: Vec<Rect> = (0..rng.gen_range(1..6))
        .map(|_| {
            let color = rng.gen();
            random_rect(&mut rng, color, 4)
        })
        .collect();
    let frames = rng.gen_range(4..10);
    render(&bg, &rects, frames)
}

/// A white square moving over black along `path` (normalized coordinates,
/// one point per frame).
pub fn moving_square_clip(path: &[[f64; 2]], side: usize) -> FrameSeq {
    const SIZE: usize = 90;
    FrameSeq::from_rasters(path.iter().enumerate().map(|(t, p)| {
        let cx = (p[0].clamp(0.0, 1.0) * (SIZE - side) as f64).round() as usize;
        let cy = (p[1].clamp(0.0, 1.0) * (SIZE - side) as f64).round() as usize;
        let img = RgbRaster::from_fn(SIZE, SIZE, |x, y| {
            if (cx..cx + side).contains(&x) && (cy..cy + side).contains(&y) {
                [255, 255, 255]
            } else {
                [0, 0, 0]
            }
        })
        .expect("nonzero dimensions");
        (format!("frame_{t:04}.ppm"), img)
    }))
}

/// `n` points evenly spaced from `a` to `b`.
pub fn line_path(a: [f64; 2], b: [f64; 2], n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1).max(1) as f64;
            [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
        })
        .collect()
}

/// Write every frame of `seq` into `dir` as PPM, named as in the sequence.
pub fn write_clip(dir: &Path, seq: &FrameSeq) -> Result<(), KeyframeError> {
    let io_err = |source| KeyframeError::Io {
        path: dir.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    for frame in &seq.frames {
        let rgb = frame.load_rgb()?;
        let mut name = Path::new(&frame.name).with_extension("ppm");
        if name.parent().is_some_and(|p| !p.as_os_str().is_empty()) {
            name = name.file_name().map(Into::into).unwrap_or(name);
        }
        fs::write(dir.join(name), encode_ppm(&rgb)).map_err(io_err)?;
    }
    Ok(())
}
