//! Procedural labelled scenes used by the trainer, the acceptance suite and
//! the CLI.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::tensor::{FeatureMap, LabelMap, Plane};

/// Default scene extent.
pub const SCENE_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Two classes split by a vertical sinusoidal boundary.
    Boundary,
    /// A flat field with a period-2 checkerboard patch on the right.
    Texture,
    /// Three random rectangles with distinct classes.
    Shapes,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::Boundary => "boundary",
            SceneKind::Texture => "texture",
            SceneKind::Shapes => "shapes",
        })
    }
}

impl FromStr for SceneKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(SceneKind::Boundary),
            "texture" => Ok(SceneKind::Texture),
            "shapes" => Ok(SceneKind::Shapes),
            other => domain(format!("unknown scene '{other}' (expected boundary, texture or shapes)")),
        }
    }
}

/// A single-channel image with its per-pixel labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: FeatureMap,
    pub labels: LabelMap,
}

impl Scene {
    pub fn generate(kind: SceneKind, height: usize, width: usize, seed: u64) -> Result<Self> {
        if height < 8 || width < 8 {
            return domain(format!("scenes need at least 8x8, got {height}x{width}"));
        }
        match kind {
            SceneKind::Boundary => Ok(boundary(height, width)),
            SceneKind::Texture => Ok(texture(height, width)),
            SceneKind::Shapes => Ok(shapes(height, width, seed)),
        }
    }
}

fn from_labels(labels: LabelMap, intensity: impl Fn(usize, usize, usize) -> f64) -> Scene {
    let image = Plane::from_fn(labels.height(), labels.width(), |i, j| intensity(i, j, labels.get(i, j)));
    Scene {
        image: FeatureMap::from_plane(image).expect("scene extents are >= 8"),
        labels,
    }
}

/// Class 1 where `j > W/2 + (W/8)·sin(2πi/H)`; the image is the class map.
fn boundary(h: usize, w: usize) -> Scene {
    let labels = LabelMap::from_fn(h, w, 2, |i, j| {
        let edge = w as f64 / 2.0 + w as f64 / 8.0 * (2.0 * std::f64::consts::PI * i as f64 / h as f64).sin();
        usize::from(j as f64 > edge)
    })
    .expect("labels are 0 or 1");
    from_labels(labels, |_, _, k| k as f64)
}

/// ±1 checkerboard on rows `[3H/8, 5H/8)` and columns `[5W/8, 7W/8)`,
/// zero elsewhere; the patch is class 1.
fn texture(h: usize, w: usize) -> Scene {
    let rows = 3 * h / 8..5 * h / 8;
    let cols = 5 * w / 8..7 * w / 8;
    let labels = LabelMap::from_fn(h, w, 2, |i, j| usize::from(rows.contains(&i) && cols.contains(&j)))
        .expect("labels are 0 or 1");
    from_labels(labels, |i, j, k| if k == 1 { 2.0 * ((i + j) % 2) as f64 - 1.0 } else { 0.0 })
}

/// Three rectangles with classes 1..=3 painted in order on a class-0
/// background; intensity `k/3`.
fn shapes(h: usize, w: usize, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0usize; h * w];
    for k in 1..=3 {
        let rh = rng.gen_range(h / 8..=h / 2);
        let rw = rng.gen_range(w / 8..=w / 2);
        let r0 = rng.gen_range(0..=h - rh);
        let c0 = rng.gen_range(0..=w - rw);
        for i in r0..r0 + rh {
            for j in c0..c0 + rw {
                data[i * w + j] = k;
            }
        }
    }
    let labels = LabelMap::new(h, w, 4, data).expect("labels are < 4");
    from_labels(labels, |_, _, k| k as f64 / 3.0)
}
