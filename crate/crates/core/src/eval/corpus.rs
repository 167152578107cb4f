//! Seeded synthetic test images: smooth gradients, flat shapes with hard
//! edges, oriented gratings and sensor-like noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::ImagePlane;

pub fn synthetic_image(width: usize, height: usize, seed: u64) -> Result<ImagePlane> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let mut px = vec![0f64; width * height];

    let base = rng.random_range(60.0..190.0);
    let gx = rng.random_range(-80.0..80.0) / w;
    let gy = rng.random_range(-80.0..80.0) / h;
    for y in 0..height {
        for x in 0..width {
            px[y * width + x] = base + gx * x as f64 + gy * y as f64;
        }
    }

    let n_shapes = rng.random_range(4..10);
    for _ in 0..n_shapes {
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let rx = rng.random_range(0.05..0.3) * w;
        let ry = rng.random_range(0.05..0.3) * h;
        let level = rng.random_range(10.0..245.0);
        let ellipse = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                let inside = if ellipse {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if inside {
                    px[y * width + x] = level;
                }
            }
        }
    }

    let n_gratings = rng.random_range(1..4);
    for _ in 0..n_gratings {
        let cx = rng.random_range(0.0..w);
        let cy = rng.random_range(0.0..h);
        let r = rng.random_range(0.1..0.35) * w.min(h);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let period = rng.random_range(3.0..14.0);
        let amp = rng.random_range(15.0..60.0);
        let (s, c) = theta.sin_cos();
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    let t = (dx * c + dy * s) * std::f64::consts::TAU / period;
                    px[y * width + x] += amp * t.sin();
                }
            }
        }
    }

    let sigma = rng.random_range(1.0..6.0);
    let samples: Vec<u8> = px
        .into_iter()
        .map(|v| {
            // sum of uniforms, close enough to Gaussian for texture
            let n: f64 = (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * sigma * 0.866;
            (v + n).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    ImagePlane::from_samples(width, height, &samples)
}

/// `count` images with seeds `seed, seed + 1, ...`.
pub fn synthetic_corpus(count: usize, width: usize, height: usize, seed: u64) -> Result<Vec<ImagePlane>> {
    (0..count as u64)
        .map(|k| synthetic_image(width, height, seed.wrapping_add(k)))
        .collect()
}
