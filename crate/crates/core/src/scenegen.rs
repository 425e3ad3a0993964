//! Synthetic scenes with exact ground truth.
//!
//! A scene is a background plane plus axis-aligned boxes, each carrying a
//! smooth procedural texture anchored to the surface. Every view is rendered
//! by casting one ray per pixel center, so images, depth and visibility are
//! all exact up to floating point. Occlusion labels come from a geometric
//! depth test along the ray from the auxiliary camera and never look at
//! image intensities.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::io::{read_pfm, read_ppm, read_text, write_pfm, write_ppm, write_text};
use crate::grid::{
    contains_point, CameraModel, ColorImage, DepthMap, Mask, RigidPose, ScalarGrid, SparseDepthMap,
};
use crate::objective::{AuxFrame, Problem};
use crate::warp::warp_point;

/// Relative tolerance of the visibility depth test.
pub const OCCLUSION_DEPTH_TOL: f64 = 0.005;

/// Minimum fraction of reference pixels that must land inside each auxiliary view.
pub const MIN_IN_BOUNDS_FRACTION: f64 = 0.7;

macro_rules! keyword_enum {
    ($(#[$m:meta])* $name:ident { $($(#[$vm:meta])* $variant:ident => $kw:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name {
            $($(#[$vm])* $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn keyword(self) -> &'static str {
                match self {
                    $($name::$variant => $kw),+
                }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.keyword())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = $crate::error::Error;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                match s {
                    $($kw => Ok($name::$variant),)+
                    other => Err($crate::error::Error::InvalidArgument(format!(
                        "unknown {} {:?} (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($kw),+].join(", ")
                    ))),
                }
            }
        }
    };
}
pub(crate) use keyword_enum;

keyword_enum!(Layout {
    SinglePlane => "single-plane",
    PlanePlusBox => "plane-plus-box",
    Staircase => "staircase",
});

keyword_enum!(Texture {
    MultiscaleNoise => "noise",
    Checker => "checker",
    GradientNoise => "gradient-noise",
});

keyword_enum!(
    /// Direction of the auxiliary camera centers relative to the reference.
    Motion {
        Lateral => "lateral",
        Forward => "forward",
    }
);

keyword_enum!(SparsePattern {
    UniformRandom => "uniform-random",
    JitteredGrid => "jittered-grid",
});

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub layout: Layout,
    pub texture: Texture,
    pub motion: Motion,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels (square pixels, centered principal point).
    pub focal: f64,
    /// Depth of the background plane along the optical axis, meters.
    pub background_depth: f64,
    /// Tilt of the background plane about the camera x axis, degrees.
    /// Positive values bring the bottom of the image closer.
    pub plane_tilt_deg: f64,
    /// Depth of the box front face, meters.
    pub box_depth: f64,
    pub box_thickness: f64,
    /// Box center in the reference image as fractions of width and height.
    pub box_center: [f64; 2],
    /// Box front-face extent as fractions of width and height.
    pub box_size: [f64; 2],
    /// Distance of each auxiliary camera center from the reference, meters.
    pub baseline: f64,
    /// Rotation of each auxiliary camera about the vertical axis, degrees.
    pub yaw_deg: f64,
    /// Finest texture wavelength in pixels at the surface's nominal depth.
    pub texture_scale_px: f64,
    pub depth_min: f64,
    pub depth_max: f64,
    /// Fraction of pixels carrying a sparse depth measurement.
    pub sparse_density: f64,
    pub sparse_pattern: SparsePattern,
    /// Standard deviation of multiplicative log-normal noise on sparse depth.
    pub sparse_noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            layout: Layout::PlanePlusBox,
            texture: Texture::MultiscaleNoise,
            motion: Motion::Lateral,
            width: 128,
            height: 96,
            focal: 100.0,
            background_depth: 8.0,
            plane_tilt_deg: 0.0,
            box_depth: 4.0,
            box_thickness: 0.5,
            box_center: [0.5, 0.5],
            box_size: [0.3, 0.4],
            baseline: 0.3,
            yaw_deg: 0.0,
            texture_scale_px: 8.0,
            depth_min: 0.5,
            depth_max: 50.0,
            sparse_density: 0.005,
            sparse_pattern: SparsePattern::UniformRandom,
            sparse_noise: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Every scene key accepted by [`SceneSpec::set`], in manifest order.
    pub const KEYS: &'static [&'static str] = &[
        "layout",
        "texture",
        "motion",
        "width",
        "height",
        "focal",
        "background_depth",
        "plane_tilt_deg",
        "box_depth",
        "box_thickness",
        "box_center_x",
        "box_center_y",
        "box_width",
        "box_height",
        "baseline",
        "yaw_deg",
        "texture_scale_px",
        "depth_min",
        "depth_max",
        "sparse_density",
        "sparse_pattern",
        "sparse_noise",
        "seed",
    ];

    /// Sets one field from its textual form. Returns `Ok(false)` for keys
    /// that are not scene keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "layout" => self.layout = value.parse()?,
            "texture" => self.texture = value.parse()?,
            "motion" => self.motion = value.parse()?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "focal" => self.focal = parse(key, value)?,
            "background_depth" => self.background_depth = parse(key, value)?,
            "plane_tilt_deg" => self.plane_tilt_deg = parse(key, value)?,
            "box_depth" => self.box_depth = parse(key, value)?,
            "box_thickness" => self.box_thickness = parse(key, value)?,
            "box_center_x" => self.box_center[0] = parse(key, value)?,
            "box_center_y" => self.box_center[1] = parse(key, value)?,
            "box_width" => self.box_size[0] = parse(key, value)?,
            "box_height" => self.box_size[1] = parse(key, value)?,
            "baseline" => self.baseline = parse(key, value)?,
            "yaw_deg" => self.yaw_deg = parse(key, value)?,
            "texture_scale_px" => self.texture_scale_px = parse(key, value)?,
            "depth_min" => self.depth_min = parse(key, value)?,
            "depth_max" => self.depth_max = parse(key, value)?,
            "sparse_density" => self.sparse_density = parse(key, value)?,
            "sparse_pattern" => self.sparse_pattern = value.parse()?,
            "sparse_noise" => self.sparse_noise = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `(key, value)` pairs for every field, in [`SceneSpec::KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layout", self.layout.to_string()),
            ("texture", self.texture.to_string()),
            ("motion", self.motion.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("focal", self.focal.to_string()),
            ("background_depth", self.background_depth.to_string()),
            ("plane_tilt_deg", self.plane_tilt_deg.to_string()),
            ("box_depth", self.box_depth.to_string()),
            ("box_thickness", self.box_thickness.to_string()),
            ("box_center_x", self.box_center[0].to_string()),
            ("box_center_y", self.box_center[1].to_string()),
            ("box_width", self.box_size[0].to_string()),
            ("box_height", self.box_size[1].to_string()),
            ("baseline", self.baseline.to_string()),
            ("yaw_deg", self.yaw_deg.to_string()),
            ("texture_scale_px", self.texture_scale_px.to_string()),
            ("depth_min", self.depth_min.to_string()),
            ("depth_max", self.depth_max.to_string()),
            ("sparse_density", self.sparse_density.to_string()),
            ("sparse_pattern", self.sparse_pattern.to_string()),
            ("sparse_noise", self.sparse_noise.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Checks static invariants. The in-bounds fraction is checked by [`generate`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width < 2 || self.height < 2 {
            return bad(format!(
                "image must be at least 2x2, got {}x{}",
                self.width, self.height
            ));
        }
        let positive = [
            ("focal", self.focal),
            ("background_depth", self.background_depth),
            ("box_depth", self.box_depth),
            ("box_thickness", self.box_thickness),
            ("texture_scale_px", self.texture_scale_px),
            ("depth_min", self.depth_min),
            ("depth_max", self.depth_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.baseline >= 0.0 && self.baseline.is_finite()) {
            return bad(format!(
                "baseline must be non-negative, got {}",
                self.baseline
            ));
        }
        if self.depth_min >= self.depth_max {
            return bad("depth_min must be below depth_max".into());
        }
        if !(self.plane_tilt_deg.abs() < 60.0) || !(self.yaw_deg.abs() < 30.0) {
            return bad("plane_tilt_deg must be within 60 and yaw_deg within 30 degrees".into());
        }
        if !(self.sparse_density > 0.0 && self.sparse_density <= 1.0) {
            return bad(format!(
                "sparse_density must be in (0, 1], got {}",
                self.sparse_density
            ));
        }
        if !(self.sparse_noise >= 0.0 && self.sparse_noise.is_finite()) {
            return bad("sparse_noise must be non-negative".into());
        }
        for v in self.box_center.iter().chain(&self.box_size) {
            if !(0.0..=1.0).contains(v) {
                return bad("box_center and box size fractions must lie in [0, 1]".into());
            }
        }
        if self.layout != Layout::SinglePlane && self.box_depth >= self.background_depth {
            return bad("box_depth must be in front of background_depth".into());
        }
        Ok(())
    }

    pub fn camera(&self) -> CameraModel {
        CameraModel {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
        }
    }

    /// Number of sparse samples implied by the density, at least one.
    pub fn sparse_count(&self) -> usize {
        ((self.sparse_density * (self.width * self.height) as f64).round() as usize).max(1)
    }

    /// Poses of the previous and next frames.
    pub fn poses(&self) -> Result<[RigidPose; 2]> {
        let dir = match self.motion {
            Motion::Lateral => [1.0, 0.0, 0.0],
            Motion::Forward => [0.0, 0.0, 1.0],
        };
        let make = |sign: f64| -> Result<RigidPose> {
            let center = dir.map(|d| sign * self.baseline * d);
            // the auxiliary camera at `center`, rotated by `r`, sees p as r (p - center)
            let rot = RigidPose::from_axis_angle(
                [0.0, 1.0, 0.0],
                sign * self.yaw_deg.to_radians(),
                [0.0; 3],
            )?;
            let rc = rot.rotate(center);
            RigidPose::new(*rot.rotation(), rc.map(|v| -v))
        };
        Ok([make(-1.0)?, make(1.0)?])
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value {value:?} for {key}")))
}

/// Number of scenes in [`standard_suite`].
pub const SUITE_SIZE: usize = 10;

/// A fixed set of seeded scenes mixing layouts, textures and motions, all
/// sampled at the given sparse density.
pub fn standard_suite(sparse_density: f64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..SUITE_SIZE)
        .map(|i| {
            let layout = Layout::ALL[i % 3];
            SceneSpec {
                layout,
                texture: Texture::ALL[(i + i / 3) % 3],
                motion: if i % 5 == 4 {
                    Motion::Forward
                } else {
                    Motion::Lateral
                },
                background_depth: rng.random_range(6.0..8.0),
                plane_tilt_deg: if layout == Layout::SinglePlane {
                    rng.random_range(10.0..25.0)
                } else {
                    0.0
                },
                box_depth: rng.random_range(3.0..4.5),
                box_center: [rng.random_range(0.35..0.65), rng.random_range(0.4..0.6)],
                box_size: [rng.random_range(0.25..0.4), rng.random_range(0.3..0.5)],
                sparse_density,
                seed: 1000 + i as u64,
                ..SceneSpec::default()
            }
        })
        .collect()
}

/// A generated scene: a frame triplet with ground truth.
#[derive(Clone, Debug)]
pub struct SceneInstance {
    pub spec: SceneSpec,
    /// Previous, reference and next frames.
    pub images: [ColorImage; 3],
    /// Depth of the reference frame.
    pub true_depth: DepthMap,
    /// Poses taking reference-camera points into the previous and next cameras.
    pub poses: [RigidPose; 2],
    pub cam: CameraModel,
    /// Per auxiliary frame: true where the reference pixel has no visible
    /// correspondent in that frame.
    pub occlusion: [Mask; 2],
    pub sparse: SparseDepthMap,
}

impl SceneInstance {
    pub fn reference(&self) -> &ColorImage {
        &self.images[1]
    }

    /// The optimization problem posed by this scene.
    pub fn problem(&self) -> Result<Problem> {
        Problem::new(
            self.images[1].clone(),
            vec![
                AuxFrame {
                    image: self.images[0].clone(),
                    pose: self.poses[0],
                },
                AuxFrame {
                    image: self.images[2].clone(),
                    pose: self.poses[1],
                },
            ],
            self.cam,
            self.sparse.clone(),
        )
    }

    /// Pixels co-visible in both auxiliary frames.
    pub fn covisible(&self) -> Mask {
        Mask::from_fn(self.cam_dims().0, self.cam_dims().1, |x, y| {
            !self.occlusion[0].get(x, y) && !self.occlusion[1].get(x, y)
        })
    }

    fn cam_dims(&self) -> (usize, usize) {
        self.true_depth.dims()
    }
}

// ---------------------------------------------------------------------------
// geometry

#[derive(Clone, Copy, Debug)]
struct Plane {
    normal: [f64; 3],
    offset: f64,
    /// In-plane unit axes for texture coordinates.
    axes: [[f64; 3]; 2],
}

#[derive(Clone, Copy, Debug)]
struct AxisBox {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Plane(Plane),
    Box(AxisBox),
}

#[derive(Clone, Debug)]
struct Surface {
    shape: Shape,
    texture: SurfaceTexture,
}

#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    surface: usize,
    /// Texture coordinates in meters.
    st: [f64; 2],
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn ray_plane(p: &Plane, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, [f64; 2])> {
    let denom = dot(p.normal, dir);
    if denom.abs() < 1e-12 {
        return None;
    }
    let t = (p.offset - dot(p.normal, origin)) / denom;
    if t <= 0.0 {
        return None;
    }
    let x = [
        origin[0] + t * dir[0],
        origin[1] + t * dir[1],
        origin[2] + t * dir[2],
    ];
    Some((t, [dot(x, p.axes[0]), dot(x, p.axes[1])]))
}

fn ray_box(b: &AxisBox, origin: [f64; 3], dir: [f64; 3]) -> Option<(f64, [f64; 2])> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for k in 0..3 {
        if dir[k].abs() < 1e-15 {
            if origin[k] < b.min[k] || origin[k] > b.max[k] {
                return None;
            }
            continue;
        }
        let t0 = (b.min[k] - origin[k]) / dir[k];
        let t1 = (b.max[k] - origin[k]) / dir[k];
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        if lo > t_near {
            t_near = lo;
            axis = k;
        }
        t_far = t_far.min(hi);
    }
    if t_near > t_far || t_near <= 0.0 {
        return None;
    }
    let x = [
        origin[0] + t_near * dir[0],
        origin[1] + t_near * dir[1],
        origin[2] + t_near * dir[2],
    ];
    let st = match axis {
        0 => [x[2], x[1]],
        1 => [x[0], x[2]],
        _ => [x[0], x[1]],
    };
    Some((t_near, st))
}

fn cast(surfaces: &[Surface], origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, s) in surfaces.iter().enumerate() {
        let hit = match &s.shape {
            Shape::Plane(p) => ray_plane(p, origin, dir),
            Shape::Box(b) => ray_box(b, origin, dir),
        };
        if let Some((t, st)) = hit {
            if best.map_or(true, |b| t < b.t) {
                best = Some(Hit { t, surface: i, st });
            }
        }
    }
    best
}

// ---------------------------------------------------------------------------
// textures

#[derive(Clone, Copy, Debug)]
struct Wave {
    k: [f64; 2],
    phase: f64,
    amp: f64,
}

#[derive(Clone, Debug)]
struct SurfaceTexture {
    kind: Texture,
    base: [f64; 3],
    waves: [Vec<Wave>; 3],
    /// Checker square size or gradient period, meters.
    period: f64,
    gradient_dir: [f64; 2],
}

impl SurfaceTexture {
    /// `finest` is the shortest wavelength in meters on this surface.
    fn random(kind: Texture, finest: f64, rng: &mut ChaCha8Rng) -> Self {
        let (octaves, total_amp) = match kind {
            Texture::MultiscaleNoise => (3, 0.42),
            Texture::Checker => (1, 0.06),
            Texture::GradientNoise => (2, 0.16),
        };
        let waves = [0, 1, 2].map(|_| {
            let mut waves = Vec::new();
            let mut weights = Vec::new();
            for o in 0..octaves {
                // coarse to fine, amplitude halving per octave
                let lambda = finest * f64::powi(2.0, octaves - 1 - o);
                for _ in 0..4 {
                    let theta: f64 = rng.random_range(0.0..PI);
                    let k = 2.0 * PI / (lambda * rng.random_range(1.0..1.3));
                    waves.push(Wave {
                        k: [k * theta.cos(), k * theta.sin()],
                        phase: rng.random_range(0.0..2.0 * PI),
                        amp: 0.0,
                    });
                    weights.push(f64::powi(0.5, o));
                }
            }
            let sum: f64 = weights.iter().sum();
            for (w, wt) in waves.iter_mut().zip(weights) {
                w.amp = total_amp * wt / sum;
            }
            waves
        });
        let base = [0, 1, 2].map(|_| rng.random_range(0.4..0.6));
        let g: f64 = rng.random_range(0.0..2.0 * PI);
        Self {
            kind,
            base,
            waves,
            period: finest * 2.0,
            gradient_dir: [g.cos(), g.sin()],
        }
    }

    fn shade(&self, st: [f64; 2]) -> [f64; 3] {
        let pattern = match self.kind {
            Texture::MultiscaleNoise => 0.0,
            Texture::Checker => {
                let c = (PI * st[0] / self.period).sin() * (PI * st[1] / self.period).sin();
                0.3 * (2.0 * c).tanh()
            }
            Texture::GradientNoise => {
                let s = st[0] * self.gradient_dir[0] + st[1] * self.gradient_dir[1];
                0.3 * (2.0 * PI * s / (self.period * 16.0)).sin()
            }
        };
        let mut out = [0.0; 3];
        for c in 0..3 {
            let noise: f64 = self.waves[c]
                .iter()
                .map(|w| w.amp * (w.k[0] * st[0] + w.k[1] * st[1] + w.phase).sin())
                .sum();
            out[c] = (self.base[c] + pattern + noise).clamp(0.0, 1.0);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// generation

fn build_surfaces(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Surface> {
    let cam = spec.camera();
    let finest = |depth: f64| spec.texture_scale_px * depth / spec.focal;
    let mut surfaces = Vec::new();

    let tilt = spec.plane_tilt_deg.to_radians();
    let normal = [0.0, tilt.sin(), tilt.cos()];
    surfaces.push(Surface {
        shape: Shape::Plane(Plane {
            normal,
            offset: spec.background_depth * normal[2],
            axes: [[1.0, 0.0, 0.0], [0.0, tilt.cos(), -tilt.sin()]],
        }),
        texture: SurfaceTexture::random(spec.texture, finest(spec.background_depth), rng),
    });

    // A box whose front face covers the pixel rectangle [u0, u1] x [v0, v1]
    // at depth d.
    let boxed = |u0: f64, u1: f64, v0: f64, v1: f64, d: f64| {
        let a = cam.backproject(u0, v0, d);
        let b = cam.backproject(u1, v1, d);
        AxisBox {
            min: [a[0], a[1], d],
            max: [b[0], b[1], d + spec.box_thickness],
        }
    };
    let (w, h) = (spec.width as f64, spec.height as f64);

    match spec.layout {
        Layout::SinglePlane => {}
        Layout::PlanePlusBox => {
            let [cx, cy] = spec.box_center;
            let [sx, sy] = spec.box_size;
            let shape = boxed(
                (cx - sx / 2.0) * w,
                (cx + sx / 2.0) * w,
                (cy - sy / 2.0) * h,
                (cy + sy / 2.0) * h,
                spec.box_depth,
            );
            surfaces.push(Surface {
                shape: Shape::Box(shape),
                texture: SurfaceTexture::random(spec.texture, finest(spec.box_depth), rng),
            });
        }
        Layout::Staircase => {
            // Steps rise toward the bottom of the image: each one nearer,
            // shorter and narrower than the last, from the background
            // toward `box_depth`.
            let steps = 3;
            for k in 0..steps {
                let f = (k + 1) as f64 / steps as f64;
                let d = spec.background_depth + f * (spec.box_depth - spec.background_depth);
                let top = h * (0.25 + 0.2 * k as f64);
                let left = w * (0.08 + 0.1 * k as f64);
                let right = w * (0.92 - 0.06 * k as f64);
                let shape = boxed(left, right, top, h * 1.5, d);
                surfaces.push(Surface {
                    shape: Shape::Box(shape),
                    texture: SurfaceTexture::random(spec.texture, finest(d), rng),
                });
            }
        }
    }
    surfaces
}

/// Renders one view. Returns the image and the depth along that camera's axis.
fn render(
    spec: &SceneSpec,
    surfaces: &[Surface],
    pose: &RigidPose,
) -> Result<(ColorImage, ScalarGrid)> {
    let cam = spec.camera();
    let (w, h) = (spec.width, spec.height);
    let inv = pose.inverse();
    let origin = *inv.translation();
    let mut channels = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    let mut depth = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let ray = [
                (x as f64 - cam.cx) / cam.fx,
                (y as f64 - cam.cy) / cam.fy,
                1.0,
            ];
            let dir = inv.rotate(ray);
            let hit = cast(surfaces, origin, dir).ok_or_else(|| {
                Error::InvalidScene(format!(
                    "ray through pixel ({x}, {y}) misses the scene; reduce plane_tilt_deg"
                ))
            })?;
            let i = y * w + x;
            // `ray` has unit z, so the hit parameter is the depth
            depth[i] = hit.t;
            let rgb = surfaces[hit.surface].texture.shade(hit.st);
            for c in 0..3 {
                channels[c][i] = rgb[c];
            }
        }
    }
    let [r, g, b] = channels;
    let img = ColorImage::new([
        ScalarGrid::new(w, h, r)?,
        ScalarGrid::new(w, h, g)?,
        ScalarGrid::new(w, h, b)?,
    ])?;
    Ok((img, ScalarGrid::new(w, h, depth)?))
}

/// True where reference pixel `x` has no visible correspondent in the camera
/// described by `pose`: it projects outside the image, lands behind the
/// camera, or another surface is hit first along the ray toward it.
fn occlusion_labels(
    spec: &SceneSpec,
    surfaces: &[Surface],
    depth: &DepthMap,
    pose: &RigidPose,
) -> Mask {
    let cam = spec.camera();
    let (w, h) = (spec.width, spec.height);
    let origin = pose.center();
    Mask::from_fn(w, h, |x, y| {
        let z = depth.get(x, y);
        let p = warp_point(x as f64, y as f64, z, &cam, pose);
        if !p.in_front || !contains_point(p.u, p.v, w, h) {
            return true;
        }
        let point = cam.backproject(x as f64, y as f64, z);
        let dir = [
            point[0] - origin[0],
            point[1] - origin[1],
            point[2] - origin[2],
        ];
        // parameterized so the point itself sits at t = 1
        match cast(surfaces, origin, dir) {
            Some(hit) => hit.t < 1.0 - OCCLUSION_DEPTH_TOL,
            None => false,
        }
    })
}

/// Renders the frame triplet, ground truth and sparse samples for `spec`.
pub fn generate(spec: &SceneSpec) -> Result<SceneInstance> {
    spec.validate()?;
    let mut texture_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let surfaces = build_surfaces(spec, &mut texture_rng);
    let poses = spec.poses()?;
    let cam = spec.camera();

    let (reference, ref_depth) = render(spec, &surfaces, &RigidPose::identity())?;
    let (prev, prev_depth) = render(spec, &surfaces, &poses[0])?;
    let (next, next_depth) = render(spec, &surfaces, &poses[1])?;
    for d in [&ref_depth, &prev_depth, &next_depth] {
        if d.min() < spec.depth_min || d.max() > spec.depth_max {
            return Err(Error::InvalidScene(format!(
                "rendered depth range [{:.3}, {:.3}] m exceeds [depth_min, depth_max] = [{}, {}]",
                d.min(),
                d.max(),
                spec.depth_min,
                spec.depth_max
            )));
        }
    }
    let true_depth = DepthMap::new(ref_depth)?;

    for (k, pose) in poses.iter().enumerate() {
        let (w, h) = (spec.width, spec.height);
        let inside = (0..h)
            .flat_map(|y| (0..w).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                let p = warp_point(x as f64, y as f64, true_depth.get(x, y), &cam, pose);
                p.in_front && contains_point(p.u, p.v, w, h)
            })
            .count();
        let fraction = inside as f64 / (w * h) as f64;
        if fraction < MIN_IN_BOUNDS_FRACTION {
            return Err(Error::InvalidScene(format!(
                "baseline {} m leaves only {:.1}% of pixels in view of frame {} (need {:.0}%)",
                spec.baseline,
                100.0 * fraction,
                if k == 0 { "prev" } else { "next" },
                100.0 * MIN_IN_BOUNDS_FRACTION
            )));
        }
    }

    let occlusion = [
        occlusion_labels(spec, &surfaces, &true_depth, &poses[0]),
        occlusion_labels(spec, &surfaces, &true_depth, &poses[1]),
    ];

    let mut sparse_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    sparse_rng.set_stream(1);
    let sparse = sample_sparse_with(
        &true_depth,
        spec.sparse_count(),
        spec.sparse_pattern,
        spec.sparse_noise,
        &mut sparse_rng,
    )?;

    Ok(SceneInstance {
        spec: spec.clone(),
        images: [prev, reference, next],
        true_depth,
        poses,
        cam,
        occlusion,
        sparse,
    })
}

/// Samples `count` pixels of `true_depth` as sparse measurements (noise-free).
pub fn sample_sparse(
    true_depth: &DepthMap,
    count: usize,
    pattern: SparsePattern,
    seed: u64,
) -> Result<SparseDepthMap> {
    sample_sparse_with(
        true_depth,
        count,
        pattern,
        0.0,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

/// Like [`sample_sparse`] with multiplicative log-normal noise of standard
/// deviation `noise` on every sample.
pub fn sample_sparse_with(
    true_depth: &DepthMap,
    count: usize,
    pattern: SparsePattern,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SparseDepthMap> {
    let (w, h) = true_depth.dims();
    let n = w * h;
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "sparse sample count {count} outside [1, {n}]"
        )));
    }
    let picks: Vec<usize> = match pattern {
        SparsePattern::UniformRandom => sample_indices(rng, n, count).into_vec(),
        SparsePattern::JitteredGrid => {
            // smallest near-square grid with at least `count` cells, then a
            // random subset of cells with one jittered pixel each
            let aspect = w as f64 / h as f64;
            let mut gx = ((count as f64 * aspect).sqrt().ceil() as usize).clamp(1, w);
            let mut gy = count.div_ceil(gx).clamp(1, h);
            while gx * gy < count {
                if gx < w {
                    gx += 1;
                } else {
                    gy += 1;
                }
            }
            let cells = sample_indices(rng, gx * gy, count).into_vec();
            let mut taken = vec![false; n];
            let mut out = Vec::with_capacity(count);
            for c in cells {
                let (cx, cy) = (c % gx, c / gx);
                let (x0, x1) = (cx * w / gx, ((cx + 1) * w / gx).max(cx * w / gx + 1));
                let (y0, y1) = (cy * h / gy, ((cy + 1) * h / gy).max(cy * h / gy + 1));
                let mut i = rng.random_range(y0..y1.min(h)) * w + rng.random_range(x0..x1.min(w));
                // cells can collapse onto each other on tiny images
                while taken[i] {
                    i = (i + 1) % n;
                }
                taken[i] = true;
                out.push(i);
            }
            out
        }
    };
    let mut depth = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut sorted = picks;
    sorted.sort_unstable();
    for i in sorted {
        let z = true_depth.values()[i];
        let factor = if noise > 0.0 {
            (noise * rng.sample::<f64, _>(StandardNormal)).exp()
        } else {
            1.0
        };
        depth[i] = z * factor;
        valid[i] = true;
    }
    SparseDepthMap::new(ScalarGrid::new(w, h, depth)?, Mask::new(w, h, valid)?)
}

// ---------------------------------------------------------------------------
// serialization

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const IMAGE_FILES: [&str; 3] = ["frame_prev.ppm", "frame_ref.ppm", "frame_next.ppm"];
pub const DEPTH_FILE: &str = "depth.pfm";
pub const OCCLUSION_FILES: [&str; 2] = ["occlusion_prev.pfm", "occlusion_next.pfm"];
pub const SPARSE_FILE: &str = "sparse.pfm";

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl SceneInstance {
    /// Plain-text manifest: `key = value` lines.
    pub fn manifest(&self) -> String {
        let mut out = String::from("# synthetic scene\n");
        for (k, v) in self.spec.to_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        let c = &self.cam;
        out.push_str(&format!(
            "fx = {}\nfy = {}\ncx = {}\ncy = {}\n",
            c.fx, c.fy, c.cx, c.cy
        ));
        for (name, pose) in ["prev", "next"].iter().zip(&self.poses) {
            let r: Vec<f64> = pose.rotation().iter().flatten().copied().collect();
            out.push_str(&format!("pose_{name}_rotation = {}\n", fmt_list(&r)));
            out.push_str(&format!(
                "pose_{name}_translation = {}\n",
                fmt_list(pose.translation())
            ));
        }
        out.push_str(&format!("sparse_count = {}\n", self.sparse.count()));
        out
    }

    /// Writes the scene into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (img, name) in self.images.iter().zip(IMAGE_FILES) {
            write_ppm(dir.join(name), img)?;
        }
        write_pfm(dir.join(DEPTH_FILE), self.true_depth.grid())?;
        for (m, name) in self.occlusion.iter().zip(OCCLUSION_FILES) {
            write_pfm(dir.join(name), &m.to_grid())?;
        }
        write_pfm(dir.join(SPARSE_FILE), self.sparse.depth())?;
        write_text(&dir.join(MANIFEST_FILE), &self.manifest())
    }

    /// Reads a scene written by [`SceneInstance::save`]. Images come back
    /// quantized to 8 bits and depths rounded to `f32`.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = read_text(&manifest_path)?;
        let mut spec = SceneSpec::default();
        let mut extra = std::collections::HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: lineno + 1,
                message: format!("{}: expected key = value", manifest_path.display()),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !spec.set(k, v).map_err(|e| Error::Config {
                line: lineno + 1,
                message: e.to_string(),
            })? {
                extra.insert(k.to_string(), v.to_string());
            }
        }
        let floats = |key: &str, n: usize| -> Result<Vec<f64>> {
            let raw = extra
                .get(key)
                .ok_or_else(|| Error::format(&manifest_path, format!("missing key {key}")))?;
            let v: Vec<f64> = raw
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(&manifest_path, format!("invalid numbers for {key}")))?;
            if v.len() != n {
                return Err(Error::format(
                    &manifest_path,
                    format!("{key} needs {n} numbers, got {}", v.len()),
                ));
            }
            Ok(v)
        };
        let k = [
            floats("fx", 1)?,
            floats("fy", 1)?,
            floats("cx", 1)?,
            floats("cy", 1)?,
        ];
        let cam = CameraModel::new(k[0][0], k[1][0], k[2][0], k[3][0])?;
        let pose = |name: &str| -> Result<RigidPose> {
            let r = floats(&format!("pose_{name}_rotation"), 9)?;
            let t = floats(&format!("pose_{name}_translation"), 3)?;
            RigidPose::new(
                [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]],
                [t[0], t[1], t[2]],
            )
        };
        let poses = [pose("prev")?, pose("next")?];

        let images = [
            read_ppm(dir.join(IMAGE_FILES[0]))?,
            read_ppm(dir.join(IMAGE_FILES[1]))?,
            read_ppm(dir.join(IMAGE_FILES[2]))?,
        ];
        let depth_path = dir.join(DEPTH_FILE);
        let true_depth = DepthMap::new(read_pfm(&depth_path)?)
            .map_err(|e| Error::format(&depth_path, e.to_string()))?;
        let mask = |name: &str| -> Result<Mask> {
            let g = read_pfm(dir.join(name))?;
            Mask::new(
                g.width(),
                g.height(),
                g.values().iter().map(|&v| v > 0.5).collect(),
            )
        };
        let occlusion = [mask(OCCLUSION_FILES[0])?, mask(OCCLUSION_FILES[1])?];
        let sparse_path = dir.join(SPARSE_FILE);
        let sparse = SparseDepthMap::from_zero_filled(read_pfm(&sparse_path)?)
            .map_err(|e| Error::format(&sparse_path, e.to_string()))?;

        let dims = true_depth.dims();
        for d in images
            .iter()
            .map(|i| i.dims())
            .chain(occlusion.iter().map(|m| m.dims()))
        {
            crate::grid::ensure_same_dims(dims, d)?;
        }
        crate::grid::ensure_same_dims(dims, sparse.dims())?;

        Ok(Self {
            spec,
            images,
            true_depth,
            poses,
            cam,
            occlusion,
            sparse,
        })
    }
}
