//! Analytic test scenes with exact ground-truth depth, and "fake models"
//! derived from that depth by pointwise transforms in inverse-depth space.
//!
//! The camera sits at the origin looking down +z. Rays are
//! `((u - cx) / fx, (v - cy) / fy, 1) * t`, so the ray parameter of a hit is
//! its z-depth.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::benchmark::{ImageKeypoints, Keypoint, Scenario};
use crate::map::{DepthKind, DepthMap, ValidMask};
use crate::{Error, Result};

pub type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn normalize(a: Vec3) -> Vec3 {
    let n = libm::sqrt(dot(a, a));
    scale(a, 1.0 / n)
}

const MIN_T: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    /// Principal point at the image center, `fx = fy = focal`.
    pub fn centered(width: usize, height: usize, focal: f64) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }

    /// Direction through the center of pixel `(x, y)`, with unit z.
    pub fn ray(&self, x: usize, y: usize) -> Vec3 {
        [
            (x as f64 + 0.5 - self.cx) / self.fx,
            (y as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Infinite plane through `point` with normal `normal`.
    Plane {
        point: Vec3,
        normal: Vec3,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
}

impl Primitive {
    /// Nearest hit parameter `t > 0` and the surface normal there.
    pub fn intersect(&self, dir: Vec3) -> Option<(f64, Vec3)> {
        match *self {
            Primitive::Plane { point, normal } => {
                let denom = dot(normal, dir);
                if libm::fabs(denom) < 1e-12 {
                    return None;
                }
                let t = dot(normal, point) / denom;
                (t > MIN_T).then(|| (t, normalize(normal)))
            }
            Primitive::Sphere { center, radius } => {
                let a = dot(dir, dir);
                let b = -2.0 * dot(dir, center);
                let c = dot(center, center) - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = libm::sqrt(disc);
                let t0 = (-b - sq) / (2.0 * a);
                let t1 = (-b + sq) / (2.0 * a);
                let t = if t0 > MIN_T {
                    t0
                } else if t1 > MIN_T {
                    t1
                } else {
                    return None;
                };
                Some((t, normalize(sub(scale(dir, t), center))))
            }
            Primitive::Box { center, half_extents } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut axis = 0;
                for k in 0..3 {
                    let lo = center[k] - half_extents[k];
                    let hi = center[k] + half_extents[k];
                    if dir[k] == 0.0 {
                        if 0.0 < lo || 0.0 > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = (lo / dir[k], hi / dir[k]);
                    if a > b {
                        core::mem::swap(&mut a, &mut b);
                    }
                    if a > t_near {
                        t_near = a;
                        axis = k;
                    }
                    t_far = t_far.min(b);
                }
                if t_near > t_far || t_far <= MIN_T {
                    return None;
                }
                let mut n = [0.0; 3];
                if t_near > MIN_T {
                    n[axis] = if dir[axis] > 0.0 { -1.0 } else { 1.0 };
                    Some((t_near, n))
                } else {
                    // Camera inside the box: report the exit face.
                    Some((t_far, n))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub camera: Camera,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let c = &self.camera;
        if self.width == 0 || self.height == 0 {
            return Err(Error::DegenerateCamera("zero resolution"));
        }
        if !(c.fx > 0.0 && c.fy > 0.0 && c.fx.is_finite() && c.fy.is_finite()) {
            return Err(Error::DegenerateCamera("focal lengths must be positive and finite"));
        }
        if !(c.cx.is_finite() && c.cy.is_finite()) {
            return Err(Error::DegenerateCamera("principal point must be finite"));
        }
        if self.primitives.is_empty() {
            return Err(Error::InvalidConfig("scene needs at least one primitive".into()));
        }
        Ok(())
    }

    /// A random room-like scene: a floor, usually a back wall, and a few
    /// spheres and boxes between 2 m and 10 m.
    pub fn random(seed: u64, width: usize, height: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut primitives = Vec::new();
        primitives.push(Primitive::Plane {
            point: [0.0, 1.5, 0.0],
            normal: [0.0, -1.0, 0.0],
        });
        if rng.gen_bool(0.75) {
            primitives.push(Primitive::Plane {
                point: [0.0, 0.0, rng.gen_range(12.0..20.0)],
                normal: [0.0, 0.0, -1.0],
            });
        }
        for _ in 0..rng.gen_range(2..=4) {
            let z = rng.gen_range(2.0..10.0);
            primitives.push(Primitive::Sphere {
                center: [rng.gen_range(-0.4..0.4) * z, rng.gen_range(-0.3..0.3) * z, z],
                radius: rng.gen_range(0.3..1.2),
            });
        }
        for _ in 0..rng.gen_range(1..=3) {
            let z = rng.gen_range(2.5..10.0);
            primitives.push(Primitive::Box {
                center: [rng.gen_range(-0.4..0.4) * z, rng.gen_range(-0.2..0.3) * z, z],
                half_extents: [
                    rng.gen_range(0.2..1.0),
                    rng.gen_range(0.2..1.0),
                    rng.gen_range(0.2..1.0),
                ],
            });
        }
        Self {
            width,
            height,
            camera: Camera::centered(width, height, width as f64),
            primitives,
            seed,
        }
    }
}

/// Output of [`render`].
#[derive(Debug, Clone, PartialEq)]
pub struct Render {
    /// Metric z-depth; pixels that hit nothing are invalid with value 0.
    pub depth: DepthMap,
    /// Index of the primitive seen at each pixel.
    pub primitive: Vec<Option<u32>>,
    /// Lambert term `|n . -ray|` in `[0, 1]` at each hit.
    pub shading: Vec<f32>,
}

pub fn render(spec: &SceneSpec) -> Result<Render> {
    spec.validate()?;
    let n = spec.width * spec.height;
    let mut values = Vec::with_capacity(n);
    let mut primitive = Vec::with_capacity(n);
    let mut shading = Vec::with_capacity(n);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let dir = spec.camera.ray(x, y);
            let hit = spec
                .primitives
                .iter()
                .enumerate()
                .filter_map(|(i, p)| p.intersect(dir).map(|(t, nrm)| (t, i, nrm)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match hit {
                Some((t, i, nrm)) => {
                    values.push(t as f32);
                    primitive.push(Some(i as u32));
                    let view = normalize(dir);
                    shading.push(libm::fabs(dot(nrm, view)) as f32);
                }
                None => {
                    values.push(0.0);
                    primitive.push(None);
                    shading.push(0.0);
                }
            }
        }
    }
    Ok(Render {
        depth: DepthMap::from_values(spec.width, spec.height, values, DepthKind::MetricMeters)?,
        primitive,
        shading,
    })
}

pub fn render_depth(spec: &SceneSpec) -> Result<DepthMap> {
    Ok(render(spec)?.depth)
}

const PALETTE: [[u8; 3]; 8] = [
    [200, 180, 150],
    [120, 160, 210],
    [210, 110, 100],
    [120, 190, 120],
    [220, 200, 90],
    [170, 120, 200],
    [90, 190, 190],
    [230, 150, 60],
];

/// Flat-shaded RGB8 image of a render; sky is a fixed light blue.
pub fn shade_rgb(render: &Render) -> Vec<u8> {
    let mut out = Vec::with_capacity(render.shading.len() * 3);
    for (p, &s) in render.primitive.iter().zip(&render.shading) {
        match p {
            Some(i) => {
                let base = PALETTE[*i as usize % PALETTE.len()];
                let k = 0.25 + 0.75 * s;
                out.extend(base.iter().map(|&c| (f32::from(c) * k) as u8));
            }
            None => out.extend([185, 215, 240]),
        }
    }
    out
}

/// Up to `per_mask` random keypoints on every primitive visible in `render`,
/// with the primitive index as mask id.
pub fn keypoints_for(
    image_id: &str,
    scenario: Scenario,
    render: &Render,
    seed: u64,
    per_mask: usize,
) -> ImageKeypoints {
    let (w, h) = render.depth.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_mask: alloc::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, p) in render.primitive.iter().enumerate() {
        if let Some(id) = p {
            by_mask.entry(*id).or_default().push(i);
        }
    }
    let mut keypoints = Vec::new();
    for (mask_id, pixels) in by_mask {
        let k = per_mask.min(pixels.len());
        for pick in rand::seq::index::sample(&mut rng, pixels.len(), k) {
            let idx = pixels[pick];
            keypoints.push(Keypoint {
                x: (idx % w) as u32,
                y: (idx / w) as u32,
                mask_id,
            });
        }
    }
    ImageKeypoints {
        image_id: image_id.into(),
        scenario,
        width: w as u32,
        height: h as u32,
        keypoints,
    }
}

/// Pointwise corruption of ground truth, applied to inverse depth `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FakeModel {
    /// The ground truth itself, bit for bit.
    Identity,
    /// `a * v + b`.
    Affine { a: f64, b: f64 },
    /// `v ^ gamma` (order preserving for `gamma > 0`).
    Monotone { gamma: f64 },
    /// `v * exp(sigma * z)`, `z` standard normal from `seed`.
    Noisy { sigma: f64, seed: u64 },
    /// `1 / v`: depth reported where inverse depth is expected, which
    /// reverses every ordering.
    Inverted,
}

pub fn fake_model(gt: &DepthMap, kind: FakeModel) -> DepthMap {
    if kind == FakeModel::Identity {
        return gt.clone();
    }
    let inv = gt.to_inverse();
    match kind {
        FakeModel::Identity => unreachable!(),
        FakeModel::Affine { a, b } => inv.map_valid(DepthKind::InverseRelative, |v| (a * f64::from(v) + b) as f32),
        FakeModel::Monotone { gamma } => {
            inv.map_valid(DepthKind::InverseRelative, |v| libm::pow(f64::from(v), gamma) as f32)
        }
        FakeModel::Noisy { sigma, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values = inv
                .values()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if inv.is_valid(i) {
                        let z: f64 = rng.sample(StandardNormal);
                        (f64::from(v) * libm::exp(sigma * z)) as f32
                    } else {
                        0.0
                    }
                })
                .collect();
            DepthMap::with_mask(
                inv.width(),
                inv.height(),
                values,
                DepthKind::InverseRelative,
                inv.mask(),
            )
            .expect("same dimensions")
        }
        FakeModel::Inverted => inv.map_valid(DepthKind::InverseRelative, |v| 1.0 / v),
    }
}

/// Ground-truth mask helper for tests and tooling.
pub fn sky_mask(render: &Render) -> ValidMask {
    render.depth.mask().clone()
}
