//! Procedural style families: seeded generators of images that share a
//! palette, a texture and a layout, with controlled per-image variation.

use std::f64::consts::PI;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Texture {
    Stripes,
    Dots,
    Checker,
    Blobs,
}

/// Geometry of the pattern.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// Pattern period (or blob diameter) as a fraction of the image side.
    pub scale: f64,
    /// Target foreground coverage in (0, 1).
    pub density: f64,
    /// Pattern orientation in degrees.
    pub angle: f64,
}

impl Layout {
    fn differs_from(&self, other: &Layout) -> bool {
        let scale_ratio = (self.scale / other.scale).max(other.scale / self.scale);
        let angle_gap = {
            let d = (self.angle - other.angle).rem_euclid(180.0);
            d.min(180.0 - d)
        };
        scale_ratio > 1.4 || angle_gap > 25.0 || (self.density - other.density).abs() > 0.2
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    pub name: String,
    pub palette: Vec<[u8; 3]>,
    pub texture: Texture,
    pub layout: Layout,
    /// Amount of per-image variation in [0, 1]; 0 gives near-identical images.
    pub jitter: f64,
    pub seed: u64,
}

impl StyleSpec {
    /// Which of palette / texture / layout differ from `other`.
    pub fn differences(&self, other: &StyleSpec) -> usize {
        let mut pa = self.palette.clone();
        let mut pb = other.palette.clone();
        pa.sort_unstable();
        pb.sort_unstable();
        usize::from(pa != pb)
            + usize::from(self.texture != other.texture)
            + usize::from(self.layout.differs_from(&other.layout))
    }

    /// Two styles are separable when at least two of the three attributes differ.
    pub fn separable_from(&self, other: &StyleSpec) -> bool {
        self.differences(other) >= 2
    }

    /// Renders image `index` of this family at `size×size`.
    pub fn render(&self, size: u32, dataset_seed: u64, index: u64) -> Result<RgbImage> {
        if self.palette.len() < 2 {
            return Err(Error::contract(format!("style {} needs at least two palette colours", self.name)));
        }
        if size == 0 {
            return Err(Error::contract("cannot render a zero-sized image"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(dataset_seed, self.seed), index));
        let j = self.jitter.clamp(0.0, 1.0);

        let bg_i = rng.gen_range(0..self.palette.len());
        let mut fg_i = rng.gen_range(0..self.palette.len() - 1);
        if fg_i >= bg_i {
            fg_i += 1;
        }
        let shift = (24.0 * j).round() as i32;
        let mut tint = |c: [u8; 3]| -> [u8; 3] {
            c.map(|v| (v as i32 + rng.gen_range(-shift..=shift)).clamp(0, 255) as u8)
        };
        let bg = tint(self.palette[bg_i]);
        let fg = tint(self.palette[fg_i]);

        let side = size as f64;
        let scale = self.layout.scale * (j * rng.gen_range(-0.25..0.25f64)).exp();
        let period = (scale * side).max(2.0);
        let density = (self.layout.density + j * rng.gen_range(-0.15..0.15)).clamp(0.1, 0.9);
        let angle = (self.layout.angle + j * rng.gen_range(-20.0..20.0)).to_radians();
        let (sin, cos) = angle.sin_cos();
        let phase_u = rng.gen_range(0.0..period);
        let phase_v = rng.gen_range(0.0..period);
        let rotate = |x: f64, y: f64| (x * cos + y * sin + phase_u, -x * sin + y * cos + phase_v);

        let blobs: Vec<(f64, f64, f64)> = if self.texture == Texture::Blobs {
            let radius = period / 2.0;
            let count = ((density * side * side) / (PI * radius * radius)).round().max(1.0) as usize;
            (0..count)
                .map(|_| {
                    (
                        rng.gen_range(0.0..side),
                        rng.gen_range(0.0..side),
                        radius * rng.gen_range(0.6..1.4),
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let dot_radius = (density / PI).sqrt().min(0.5);

        let noise = (2.0 + 4.0 * j).round() as i32;
        let mut img = RgbImage::new(size, size);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let (u, v) = rotate(fx, fy);
            let on = match self.texture {
                Texture::Stripes => (u / period).rem_euclid(1.0) < density,
                Texture::Dots => {
                    let du = (u / period).rem_euclid(1.0) - 0.5;
                    let dv = (v / period).rem_euclid(1.0) - 0.5;
                    du.hypot(dv) < dot_radius
                }
                Texture::Checker => {
                    ((u / period).floor() as i64 + (v / period).floor() as i64).rem_euclid(2) == 0
                }
                Texture::Blobs => blobs.iter().any(|&(cx, cy, r)| (fx - cx).hypot(fy - cy) < r),
            };
            let base = if on { fg } else { bg };
            let n = rng.gen_range(-noise..=noise);
            *px = Rgb(base.map(|c| (c as i32 + n).clamp(0, 255) as u8));
        }
        Ok(img)
    }
}

/// SplitMix64 finaliser, used to derive independent per-image seeds.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(a << 6).wrapping_add(a >> 2);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `per_class` images for every spec, labelled with the spec name.
pub fn generate_style_dataset(specs: &[StyleSpec], per_class: usize, size: u32, seed: u64) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(specs.len() * per_class);
    for spec in specs {
        for i in 0..per_class {
            out.push(Sample {
                id: format!("{}/{:03}", spec.name, i),
                class: spec.name.clone(),
                raw: spec.render(size, seed, i as u64)?,
            });
        }
    }
    Ok(out)
}

const WARM: [[u8; 3]; 4] = [[230, 90, 60], [250, 200, 80], [120, 40, 30], [255, 240, 220]];
const COOL: [[u8; 3]; 4] = [[40, 80, 160], [90, 180, 200], [20, 30, 60], [220, 235, 245]];
const EARTH: [[u8; 3]; 4] = [[110, 140, 70], [200, 180, 120], [60, 50, 30], [240, 230, 200]];
const PASTEL: [[u8; 3]; 4] = [[240, 170, 190], [170, 210, 240], [200, 240, 190], [90, 90, 110]];
const NEON: [[u8; 3]; 4] = [[255, 0, 140], [0, 255, 200], [30, 0, 60], [250, 250, 0]];

fn spec(name: &str, palette: &[[u8; 3]], texture: Texture, scale: f64, density: f64, angle: f64, jitter: f64, seed: u64) -> StyleSpec {
    StyleSpec {
        name: name.into(),
        palette: palette.to_vec(),
        texture,
        layout: Layout { scale, density, angle },
        jitter,
        seed,
    }
}

/// Six pre-training families. Palettes come in pairs, so colour alone cannot
/// separate every class and the network has to pick up texture and layout.
pub fn pretrain_catalog() -> Vec<StyleSpec> {
    vec![
        spec("warm-stripes", &WARM, Texture::Stripes, 0.12, 0.5, 0.0, 0.6, 101),
        spec("warm-dots", &WARM, Texture::Dots, 0.22, 0.35, 0.0, 0.6, 102),
        spec("cool-checker", &COOL, Texture::Checker, 0.25, 0.5, 45.0, 0.6, 103),
        spec("cool-blobs", &COOL, Texture::Blobs, 0.3, 0.4, 0.0, 0.6, 104),
        spec("earth-dots", &EARTH, Texture::Dots, 0.1, 0.4, 45.0, 0.6, 105),
        spec("earth-stripes", &EARTH, Texture::Stripes, 0.3, 0.5, 90.0, 0.6, 106),
    ]
}

/// First `n` pre-training families, cycling through extra palettes past six.
pub fn pretrain_specs(n: usize) -> Vec<StyleSpec> {
    let base = pretrain_catalog();
    (0..n)
        .map(|i| {
            let mut s = base[i % base.len()].clone();
            if i >= base.len() {
                s.name = format!("{}-{}", s.name, i / base.len());
                s.seed = s.seed.wrapping_add(1000 * (i / base.len()) as u64);
                s.palette = [WARM, COOL, EARTH, NEON][(i / base.len()) % 4].to_vec();
            }
            s
        })
        .collect()
}

/// Participant jitter used by the desk experiments. Below about 0.8 no
/// disliked design is ever accepted, which hides any effect on the
/// true-negative rate.
pub const DESK_PARTICIPANT_JITTER: f64 = 0.9;

/// A liked and a disliked family for one synthetic participant. Both share a
/// palette and differ in texture and layout, so colour statistics carry no
/// signal. `jitter` controls how spread out each family is.
pub fn participant_styles(jitter: f64) -> (StyleSpec, StyleSpec) {
    (
        spec("liked", &PASTEL, Texture::Stripes, 0.16, 0.5, 45.0, jitter, 201),
        spec("disliked", &PASTEL, Texture::Dots, 0.32, 0.5, 30.0, jitter, 202),
    )
}

/// Families unrelated to the participant, used to pad retrieval databases.
pub fn foreign_styles() -> Vec<StyleSpec> {
    vec![
        spec("neon-checker", &NEON, Texture::Checker, 0.1, 0.5, 30.0, 0.6, 301),
        spec("neon-blobs", &NEON, Texture::Blobs, 0.12, 0.45, 0.0, 0.6, 302),
        spec("earth-checker", &EARTH, Texture::Checker, 0.4, 0.5, 0.0, 0.6, 303),
    ]
}
