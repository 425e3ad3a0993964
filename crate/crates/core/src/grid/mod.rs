//! Dense pixel grids, color images, depth maps and the pinhole camera model.
//!
//! All grids are stored row-major with `values[y * width + x]`. Pixel centers
//! sit at integer coordinates, so `(0.0, 0.0)` is the center of the top-left
//! pixel and `(width - 1, height - 1)` the center of the bottom-right one.

pub mod io;

use crate::error::{Error, Result};

/// Dense real-valued field over the pixel domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    /// Builds a grid from row-major values. Every value must be finite.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if values.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "non-finite value {} at pixel ({}, {})",
                values[i],
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        assert!(value.is_finite(), "grid values must be finite");
        Self {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Builds a grid by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if `f` produces a non-finite value.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "grid dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::from_values(width, height, values)
    }

    /// Internal constructor for library-produced values.
    pub(crate) fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        assert!(
            values.iter().all(|v| v.is_finite()),
            "library produced a non-finite grid value"
        );
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Applies `f` to every value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_values(
            self.width,
            self.height,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Combines two grids of equal dimensions value by value.
    pub fn zip_map(&self, other: &ScalarGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self::from_values(
            self.width,
            self.height,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Boolean grid, used for subdomains such as the sparse-depth support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if bits.len() != width * height {
            return Err(Error::InvalidGrid(format!(
                "{}x{} mask needs {} entries, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::filled(width, height, true)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::filled(width, height, false)
    }

    fn filled(width: usize, height: usize, value: bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn not(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &Mask) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    /// Returns 1.0 where set and 0.0 elsewhere.
    pub fn to_grid(&self) -> ScalarGrid {
        ScalarGrid::from_values(
            self.width,
            self.height,
            self.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// Three-channel image with intensities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    channels: [ScalarGrid; 3],
}

impl ColorImage {
    pub fn new(channels: [ScalarGrid; 3]) -> Result<Self> {
        let dims = channels[0].dims();
        for ch in &channels[1..] {
            ensure_same_dims(dims, ch.dims())?;
        }
        for (c, ch) in channels.iter().enumerate() {
            if let Some(v) = ch.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidGrid(format!(
                    "channel {c} intensity {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self { channels })
    }

    /// Single gray level replicated over three channels.
    pub fn from_gray(gray: &ScalarGrid) -> Result<Self> {
        Self::new([gray.clone(), gray.clone(), gray.clone()])
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(rgb.map(|c| ScalarGrid::filled(width, height, c)))
    }

    pub fn channels(&self) -> &[ScalarGrid; 3] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &ScalarGrid {
        &self.channels[c]
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [
            self.channels[0].get(x, y),
            self.channels[1].get(x, y),
            self.channels[2].get(x, y),
        ]
    }

    /// Channel mean, used for edge-aware weighting and visualization.
    pub fn luminance(&self) -> ScalarGrid {
        let (w, h) = self.dims();
        ScalarGrid::from_fn(w, h, |x, y| {
            let p = self.pixel(x, y);
            (p[0] + p[1] + p[2]) / 3.0
        })
    }
}

/// Dense depth field with strictly positive values, in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    grid: ScalarGrid,
}

impl DepthMap {
    pub fn new(grid: ScalarGrid) -> Result<Self> {
        if let Some(i) = grid.values().iter().position(|&z| z <= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "depth must be strictly positive, got {} at pixel ({}, {})",
                grid.values()[i],
                i % grid.width(),
                i / grid.width()
            )));
        }
        Ok(Self { grid })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self> {
        if !(depth > 0.0 && depth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth must be positive and finite, got {depth}"
            )));
        }
        Self::new(ScalarGrid::filled(width, height, depth))
    }

    pub fn grid(&self) -> &ScalarGrid {
        &self.grid
    }

    pub fn into_grid(self) -> ScalarGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn width(&self) -> usize {
        self.grid.width()
    }

    pub fn height(&self) -> usize {
        self.grid.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    /// Clamps every depth into `[min, max]`.
    pub fn clamped(&self, min: f64, max: f64) -> Self {
        debug_assert!(min > 0.0 && min <= max);
        Self {
            grid: self.grid.map(|z| z.clamp(min, max)),
        }
    }
}

/// Sparse depth measurements: depth values on the subdomain marked `valid`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseDepthMap {
    depth: ScalarGrid,
    valid: Mask,
}

impl SparseDepthMap {
    pub fn new(depth: ScalarGrid, valid: Mask) -> Result<Self> {
        ensure_same_dims(depth.dims(), valid.dims())?;
        if valid.count() == 0 {
            return Err(Error::InvalidDomain(
                "sparse depth needs at least one valid pixel".into(),
            ));
        }
        for (i, (&z, &ok)) in depth.values().iter().zip(valid.bits()).enumerate() {
            if ok && z <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "sparse depth {} at valid pixel ({}, {}) is not positive",
                    z,
                    i % depth.width(),
                    i / depth.width()
                )));
            }
        }
        // Depth off the support is ignored; store zeros there so equality and
        // serialization do not depend on whatever the caller left behind.
        let depth = ScalarGrid::from_values(
            depth.width(),
            depth.height(),
            depth
                .values()
                .iter()
                .zip(valid.bits())
                .map(|(&z, &ok)| if ok { z } else { 0.0 })
                .collect(),
        );
        Ok(Self { depth, valid })
    }

    /// Interprets positive values as measurements and everything else as missing.
    pub fn from_zero_filled(depth: ScalarGrid) -> Result<Self> {
        let valid = Mask::new(
            depth.width(),
            depth.height(),
            depth.values().iter().map(|&z| z > 0.0).collect(),
        )?;
        Self::new(depth, valid)
    }

    pub fn depth(&self) -> &ScalarGrid {
        &self.depth
    }

    pub fn valid(&self) -> &Mask {
        &self.valid
    }

    pub fn count(&self) -> usize {
        self.valid.count()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.depth.dims()
    }

    /// Iterator over `(x, y, depth)` of valid samples in row-major order.
    pub fn samples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.depth.width();
        self.valid
            .bits()
            .iter()
            .enumerate()
            .filter(|(_, &ok)| ok)
            .map(move |(i, _)| (i % w, i / w, self.depth.values()[i]))
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "camera needs finite positive focal lengths, got fx={fx} fy={fy}"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Back-projects pixel `(u, v)` at depth `z` into camera coordinates.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z]
    }

    /// Perspective projection; the caller guarantees `p[2] > 0`.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> (f64, f64) {
        (
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        )
    }
}

/// Rigid transform `p -> R p + t` taking reference-camera coordinates into
/// another camera's frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

const ROTATION_TOL: f64 = 1e-9;

impl RigidPose {
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        if !rotation
            .iter()
            .flatten()
            .chain(&translation)
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidArgument("pose has non-finite entries".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[i][k] * rotation[j][k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > ROTATION_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "rotation is not orthonormal (row {i} . row {j} = {dot})"
                    )));
                }
            }
        }
        if (det3(&rotation) - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidArgument(
                "rotation determinant is not +1".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self::from_translation([0.0; 3])
    }

    pub fn from_translation(translation: [f64; 3]) -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation,
        }
    }

    /// Rotation by `angle` radians about the unit `axis` (Rodrigues), then translation.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, translation: [f64; 3]) -> Result<Self> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == 0.0 {
            return if angle == 0.0 {
                Ok(Self::from_translation(translation))
            } else {
                Err(Error::InvalidArgument("rotation axis is zero".into()))
            };
        }
        let [x, y, z] = axis.map(|a| a / n);
        let (s, c) = angle.sin_cos();
        let t = 1.0 - c;
        let rotation = [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ];
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &[[f64; 3]; 3] {
        &self.rotation
    }

    pub fn translation(&self) -> &[f64; 3] {
        &self.translation
    }

    #[inline]
    pub fn transform(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Rotation only, for direction vectors.
    #[inline]
    pub fn rotate(&self, d: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * d[0] + r[0][1] * d[1] + r[0][2] * d[2],
            r[1][0] * d[0] + r[1][1] * d[1] + r[1][2] * d[2],
            r[2][0] * d[0] + r[2][1] * d[1] + r[2][2] * d[2],
        ]
    }

    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let t = &self.translation;
        let ti = [
            -(rt[0][0] * t[0] + rt[0][1] * t[1] + rt[0][2] * t[2]),
            -(rt[1][0] * t[0] + rt[1][1] * t[1] + rt[1][2] * t[2]),
            -(rt[2][0] * t[0] + rt[2][1] * t[1] + rt[2][2] * t[2]),
        ];
        Self {
            rotation: rt,
            translation: ti,
        }
    }

    /// Camera center of the target frame expressed in reference coordinates.
    pub fn center(&self) -> [f64; 3] {
        *self.inverse().translation()
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidGrid(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Result of sampling a color image at a real-valued position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub rgb: [f64; 3],
    pub in_bounds: bool,
}

/// Sample plus the partial derivatives of the bilinear interpolant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleWithGradient {
    pub rgb: [f64; 3],
    pub d_du: [f64; 3],
    pub d_dv: [f64; 3],
    pub in_bounds: bool,
}

/// Slack, in pixels, when deciding whether a position lies inside the image.
/// Absorbs rounding in projections that should land exactly on the border.
pub const EDGE_TOLERANCE: f64 = 1e-9;

/// True when `(u, v)` lies in `[0, w-1] x [0, h-1]` up to [`EDGE_TOLERANCE`].
pub fn contains_point(u: f64, v: f64, w: usize, h: usize) -> bool {
    axis_contains(u, w) && axis_contains(v, h)
}

fn axis_contains(coord: f64, n: usize) -> bool {
    coord >= -EDGE_TOLERANCE && coord <= (n - 1) as f64 + EDGE_TOLERANCE
}

/// Cell lookup for bilinear interpolation along one axis: returns the lower
/// index and the fractional offset, clamping to the edge outside `[0, n-1]`.
#[inline]
fn cell(coord: f64, n: usize) -> (usize, f64, bool) {
    let inside = axis_contains(coord, n);
    if n == 1 {
        return (0, 0.0, inside);
    }
    let max = (n - 1) as f64;
    let c = coord.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(n - 2);
    (i0, c - i0 as f64, inside)
}

#[inline]
fn interp(
    g: &ScalarGrid,
    x0: usize,
    y0: usize,
    fx: f64,
    fy: f64,
    has_x1: bool,
    has_y1: bool,
) -> (f64, f64, f64) {
    let w = g.width();
    let v = g.values();
    let x1 = if has_x1 { x0 + 1 } else { x0 };
    let y1 = if has_y1 { y0 + 1 } else { y0 };
    let p00 = v[y0 * w + x0];
    let p10 = v[y0 * w + x1];
    let p01 = v[y1 * w + x0];
    let p11 = v[y1 * w + x1];
    let top = p00 + fx * (p10 - p00);
    let bottom = p01 + fx * (p11 - p01);
    let value = top + fy * (bottom - top);
    let d_du = (1.0 - fy) * (p10 - p00) + fy * (p11 - p01);
    let d_dv = bottom - top;
    (value, d_du, d_dv)
}

/// Bilinear sample of `img` at `(u, v)`.
///
/// Inside `[0, w-1] x [0, h-1]` this interpolates the 2x2 neighborhood and
/// reports `in_bounds = true`. Outside, the position is clamped to the image
/// edge and `in_bounds` is false.
pub fn bilinear_sample(img: &ColorImage, u: f64, v: f64) -> Sample {
    let s = bilinear_sample_with_gradient(img, u, v);
    Sample {
        rgb: s.rgb,
        in_bounds: s.in_bounds,
    }
}

/// Like [`bilinear_sample`], also returning the derivatives of the
/// interpolant with respect to `u` and `v`. Derivatives are zero along a
/// clamped axis.
pub fn bilinear_sample_with_gradient(img: &ColorImage, u: f64, v: f64) -> SampleWithGradient {
    let (w, h) = img.dims();
    let (x0, fx, in_x) = cell(u, w);
    let (y0, fy, in_y) = cell(v, h);
    let mut out = SampleWithGradient {
        rgb: [0.0; 3],
        d_du: [0.0; 3],
        d_dv: [0.0; 3],
        in_bounds: in_x && in_y,
    };
    for c in 0..3 {
        let (val, du, dv) = interp(img.channel(c), x0, y0, fx, fy, w > 1, h > 1);
        out.rgb[c] = val;
        out.d_du[c] = if in_x { du } else { 0.0 };
        out.d_dv[c] = if in_y { dv } else { 0.0 };
    }
    out
}

/// Bilinear sample of a single scalar grid with clamp-to-edge.
pub fn bilinear_sample_scalar(g: &ScalarGrid, u: f64, v: f64) -> (f64, bool) {
    let (w, h) = g.dims();
    let (x0, fx, in_x) = cell(u, w);
    let (y0, fy, in_y) = cell(v, h);
    let (val, _, _) = interp(g, x0, y0, fx, fy, w > 1, h > 1);
    (val, in_x && in_y)
}

/// Forward differences `g(x+1, y) - g(x, y)` and `g(x, y+1) - g(x, y)`,
/// zero on the last column and last row respectively.
pub fn forward_gradient(g: &ScalarGrid) -> (ScalarGrid, ScalarGrid) {
    let (w, h) = g.dims();
    let gx = ScalarGrid::from_fn(w, h, |x, y| {
        if x + 1 < w {
            g.get(x + 1, y) - g.get(x, y)
        } else {
            0.0
        }
    });
    let gy = ScalarGrid::from_fn(w, h, |x, y| {
        if y + 1 < h {
            g.get(x, y + 1) - g.get(x, y)
        } else {
            0.0
        }
    });
    (gx, gy)
}

/// Arithmetic mean of `g` over the pixels selected by `mask`.
pub fn masked_mean(g: &ScalarGrid, mask: &Mask) -> Result<f64> {
    ensure_same_dims(g.dims(), mask.dims())?;
    let (sum, n) = g
        .values()
        .iter()
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v, n + 1));
    if n == 0 {
        return Err(Error::InvalidDomain("mask selects no pixels".into()));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ScalarGrid {
        ScalarGrid::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn random_image(w: usize, h: usize, seed: u64) -> ColorImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = [0, 1, 2].map(|_| random_grid(w, h, &mut rng));
        ColorImage::new(ch).unwrap()
    }

    #[test]
    fn grid_rejects_bad_construction() {
        assert!(ScalarGrid::new(0, 3, vec![]).is_err());
        assert!(ScalarGrid::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ScalarGrid::new(1, 1, vec![f64::NAN]).is_err());
        assert!(ScalarGrid::new(1, 1, vec![f64::INFINITY]).is_err());
        assert!(ColorImage::filled(2, 2, [0.0, 1.2, 0.0]).is_err());
        assert!(DepthMap::new(ScalarGrid::filled(2, 2, 0.0)).is_err());
    }

    #[test]
    fn sparse_requires_support() {
        let d = ScalarGrid::filled(3, 3, 2.0);
        assert!(matches!(
            SparseDepthMap::new(d.clone(), Mask::empty(3, 3)),
            Err(Error::InvalidDomain(_))
        ));
        let mut m = Mask::empty(3, 3);
        m.set(1, 1, true);
        let s = SparseDepthMap::new(d, m).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.depth().get(0, 0), 0.0);
        assert_eq!(s.samples().collect::<Vec<_>>(), vec![(1, 1, 2.0)]);
    }

    #[test]
    fn sample_at_pixel_center_is_exact() {
        let img = random_image(5, 4, 1);
        for y in 0..4 {
            for x in 0..5 {
                let s = bilinear_sample(&img, x as f64, y as f64);
                assert!(s.in_bounds);
                assert_eq!(s.rgb, img.pixel(x, y));
            }
        }
    }

    #[test]
    fn sample_midpoint_is_linear() {
        let g = ScalarGrid::new(2, 1, vec![0.2, 0.6]).unwrap();
        let img = ColorImage::from_gray(&g).unwrap();
        let s = bilinear_sample(&img, 0.5, 0.0);
        assert!(s.in_bounds);
        for c in s.rgb {
            assert!((c - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_outside_clamps_to_corner() {
        let img = random_image(6, 5, 2);
        let s = bilinear_sample(&img, -5.0, -5.0);
        assert!(!s.in_bounds);
        assert_eq!(s.rgb, img.pixel(0, 0));
        let s = bilinear_sample(&img, 100.0, 100.0);
        assert!(!s.in_bounds);
        assert_eq!(s.rgb, img.pixel(5, 4));
    }

    #[test]
    fn sample_gradient_matches_finite_difference() {
        let img = random_image(7, 6, 3);
        let (u, v) = (2.3, 3.7);
        let s = bilinear_sample_with_gradient(&img, u, v);
        let h = 1e-6;
        let p = bilinear_sample(&img, u + h, v).rgb;
        let m = bilinear_sample(&img, u - h, v).rgb;
        let q = bilinear_sample(&img, u, v + h).rgb;
        let n = bilinear_sample(&img, u, v - h).rgb;
        for c in 0..3 {
            assert!(((p[c] - m[c]) / (2.0 * h) - s.d_du[c]).abs() < 1e-8);
            assert!(((q[c] - n[c]) / (2.0 * h) - s.d_dv[c]).abs() < 1e-8);
        }
    }

    #[test]
    fn sample_is_continuous_across_cells() {
        let img = random_image(8, 8, 4);
        for k in 1..7 {
            let u = k as f64;
            let a = bilinear_sample(&img, u - 1e-9, 3.4).rgb;
            let b = bilinear_sample(&img, u + 1e-9, 3.4).rgb;
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn forward_gradient_examples() {
        let g = ScalarGrid::filled(4, 3, 2.5);
        let (gx, gy) = forward_gradient(&g);
        assert!(gx.values().iter().chain(gy.values()).all(|&v| v == 0.0));

        let ramp = ScalarGrid::from_fn(4, 3, |x, _| x as f64);
        let (gx, gy) = forward_gradient(&ramp);
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(gx.get(x, y), if x < 3 { 1.0 } else { 0.0 });
                assert_eq!(gy.get(x, y), 0.0);
            }
        }

        let g = ScalarGrid::new(2, 2, vec![0.0, 1.0, 2.0, 4.0]).unwrap();
        let (gx, gy) = forward_gradient(&g);
        assert_eq!(gx.values(), &[1.0, 0.0, 2.0, 0.0]);
        // g(1,1) - g(1,0) = 4 - 1 = 3
        assert_eq!(gy.values(), &[2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_gradient_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_grid(6, 5, &mut rng);
        let b = random_grid(6, 5, &mut rng);
        let sum = a.zip_map(&b, |x, y| x + y).unwrap();
        let (sx, sy) = forward_gradient(&sum);
        let (ax, ay) = forward_gradient(&a);
        let (bx, by) = forward_gradient(&b);
        for i in 0..sum.len() {
            assert!((sx.values()[i] - ax.values()[i] - bx.values()[i]).abs() < 1e-12);
            assert!((sy.values()[i] - ay.values()[i] - by.values()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_mean_examples() {
        let g = ScalarGrid::filled(3, 2, 1.75);
        assert_eq!(masked_mean(&g, &Mask::full(3, 2)).unwrap(), 1.75);

        let g = ScalarGrid::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = Mask::new(4, 1, vec![true, false, true, false]).unwrap();
        assert_eq!(masked_mean(&g, &m).unwrap(), 2.0);

        assert!(matches!(
            masked_mean(&g, &Mask::empty(4, 1)),
            Err(Error::InvalidDomain(_))
        ));
        assert!(masked_mean(&g, &Mask::full(2, 2)).is_err());
    }

    #[test]
    fn masked_mean_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = random_grid(8, 8, &mut rng);
        let m = Mask::from_fn(8, 8, |_, _| rng.random_bool(0.4));
        let mut sum = 0.0;
        let mut n = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                if m.get(x, y) {
                    sum += g.get(x, y);
                    n += 1.0;
                }
            }
        }
        assert!((masked_mean(&g, &m).unwrap() - sum / n).abs() < 1e-12);
        let full = masked_mean(&g, &Mask::full(8, 8)).unwrap();
        assert!(full >= g.min() && full <= g.max());
    }

    #[test]
    fn pose_inverse_round_trips() {
        let pose = RigidPose::from_axis_angle([0.2, 1.0, -0.3], 0.1, [0.3, -0.1, 0.05]).unwrap();
        let p = [1.0, -2.0, 5.0];
        let q = pose.inverse().transform(pose.transform(p));
        for i in 0..3 {
            assert!((p[i] - q[i]).abs() < 1e-12);
        }
        let bad = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidPose::new(bad, [0.0; 3]).is_err());
        let reflect = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidPose::new(reflect, [0.0; 3]).is_err());
    }

    #[test]
    fn camera_round_trip() {
        let cam = CameraModel::new(100.0, 90.0, 31.5, 23.5).unwrap();
        let p = cam.backproject(12.25, 40.5, 3.0);
        let (u, v) = cam.project(p);
        assert!((u - 12.25).abs() < 1e-12 && (v - 40.5).abs() < 1e-12);
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0).is_err());
    }
}
