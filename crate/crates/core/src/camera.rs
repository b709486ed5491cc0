//! Pinhole camera model, ray generation, canonical/camera transforms, and
//! the geometry-aware sliding-window algebra.
//!
//! Conventions fixed here and relied on everywhere else:
//! - the camera looks down +z, image x grows rightward, y downward;
//! - a scale-`s` grid samples canvas coordinates `origin + (k*index + 0.5)`,
//!   i.e. the top-left fine-pixel center of each `k x k` block, which makes
//!   rays coincide exactly across scales.

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};
use crate::real::Real;

/// Side length of the rendering canvas (the sliding-window target) in pixels.
pub const CANVAS: u32 = 512;
/// Side length of the full frame the window slides inside.
pub const FULL_FRAME: u32 = 736;
/// Largest valid crop offset: `FULL_FRAME - CANVAS`.
pub const CROP_MAX: u32 = FULL_FRAME - CANVAS;
/// Crop offset that centers the window in the full frame.
pub const CENTER_OFFSET: u32 = CROP_MAX / 2;
/// Every rendered map is MAP_RES x MAP_RES regardless of scale.
pub const MAP_RES: usize = 128;

/// Factored pinhole intrinsics. A 3x3 matrix view is available via
/// [`Intrinsics::matrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics<F> {
    pub fx: F,
    pub fy: F,
    pub cx: F,
    pub cy: F,
    pub width: u32,
    pub height: u32,
}

impl<F: Real> Intrinsics<F> {
    pub fn new(fx: F, fy: F, cx: F, cy: F, width: u32, height: u32) -> Result<Self> {
        if !(fx > F::zero() && fy > F::zero()) {
            return Err(Error::config(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::config("sensor size must be positive"));
        }
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(Error::config("intrinsics must be finite"));
        }
        Ok(Intrinsics { fx, fy, cx, cy, width, height })
    }

    /// Upper-triangular pinhole matrix with positive focals.
    pub fn matrix(&self) -> Mat3<F> {
        let z = F::zero();
        Mat3::new([
            [self.fx, z, self.cx],
            [z, self.fy, self.cy],
            [z, z, F::one()],
        ])
    }
}

/// Rigid transform (R, T) with R a rotation. Maps camera-space points into
/// the canonical (head-centric) frame as `R * x + T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose<F> {
    rotation: Mat3<F>,
    translation: Vec3<F>,
}

impl<F: Real> RigidPose<F> {
    const ORTHO_TOL: f64 = 1e-9;

    pub fn new(rotation: Mat3<F>, translation: Vec3<F>) -> Result<Self> {
        let rt_r = rotation.transpose() * rotation;
        let eye: Mat3<F> = Mat3::identity();
        for i in 0..3 {
            for j in 0..3 {
                let d = (rt_r.m[i][j] - eye.m[i][j]).abs().to_f64();
                if !(d <= Self::ORTHO_TOL) {
                    return Err(Error::config(format!(
                        "rotation is not orthonormal: |R^T R - I|[{i}][{j}] = {d:e}"
                    )));
                }
            }
        }
        let det_err = (rotation.det() - F::one()).abs().to_f64();
        if !(det_err <= Self::ORTHO_TOL) {
            return Err(Error::config(format!("rotation determinant differs from 1 by {det_err:e}")));
        }
        if !(translation.x.is_finite() && translation.y.is_finite() && translation.z.is_finite()) {
            return Err(Error::config("translation must be finite"));
        }
        Ok(RigidPose { rotation, translation })
    }

    pub fn identity() -> Self {
        RigidPose {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn rotation(&self) -> Mat3<F> {
        self.rotation
    }

    pub fn translation(&self) -> Vec3<F> {
        self.translation
    }

    /// `R^T * (point - T)`: canonical frame into camera space. R^{-1} = R^T
    /// because R is orthonormal.
    pub fn canonical_to_camera(&self, point: Vec3<F>) -> Vec3<F> {
        self.rotation.transpose() * (point - self.translation)
    }

    /// `R * point + T`: camera space into the canonical frame. Exact inverse
    /// of [`canonical_to_camera`](Self::canonical_to_camera).
    pub fn camera_to_canonical(&self, point: Vec3<F>) -> Vec3<F> {
        self.rotation * point + self.translation
    }

    /// Pose with translation displaced by `delta` (used by the sliding-window
    /// translation equivalence).
    pub fn translated(&self, delta: Vec3<F>) -> Self {
        RigidPose {
            rotation: self.rotation,
            translation: self.translation + delta,
        }
    }

    /// Pose composed with a rotation about the canonical origin; used for
    /// novel-view sweeps around the head center.
    pub fn orbited(&self, view: Mat3<F>) -> Self {
        RigidPose {
            rotation: view * self.rotation,
            translation: view * self.translation,
        }
    }

    pub fn to_row_major(&self) -> [F; 12] {
        let r = self.rotation.m;
        let t = self.translation;
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2], t.x,
            t.y, t.z,
        ]
    }

    pub fn from_row_major(v: [F; 12]) -> Result<Self> {
        let rotation = Mat3::new([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]);
        RigidPose::new(rotation, Vec3::new(v[9], v[10], v[11]))
    }
}

/// A world-space ray with a marching interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<F> {
    pub origin: Vec3<F>,
    pub direction: Vec3<F>,
    pub near: F,
    pub far: F,
}

impl<F: Real> Ray<F> {
    pub fn new(origin: Vec3<F>, direction: Vec3<F>, near: F, far: F) -> Result<Self> {
        let norm_err = (direction.norm() - F::one()).abs().to_f64();
        if !(norm_err <= 1e-9) {
            return Err(Error::config(format!("ray direction is not unit length (err {norm_err:e})")));
        }
        if !(near >= F::zero() && near < far) {
            return Err(Error::config(format!("ray interval must satisfy 0 <= near < far, got [{near}, {far})")));
        }
        Ok(Ray { origin, direction, near, far })
    }

    pub fn point_at(&self, t: F) -> Vec3<F> {
        self.origin + self.direction * t
    }
}

/// Rendered-map scale: which level of the pyramid a 128x128 grid samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScaleTag {
    S128,
    S256,
    S512,
}

impl ScaleTag {
    pub const ALL: [ScaleTag; 3] = [ScaleTag::S128, ScaleTag::S256, ScaleTag::S512];

    pub fn from_size(size: u32) -> Result<Self> {
        match size {
            128 => Ok(ScaleTag::S128),
            256 => Ok(ScaleTag::S256),
            512 => Ok(ScaleTag::S512),
            other => Err(Error::config(format!("scale must be one of 128/256/512, got {other}"))),
        }
    }

    pub fn size(self) -> u32 {
        match self {
            ScaleTag::S128 => 128,
            ScaleTag::S256 => 256,
            ScaleTag::S512 => 512,
        }
    }

    /// Side of the canvas rectangle one patch of this scale covers.
    pub fn patch_side(self) -> u32 {
        match self {
            ScaleTag::S128 => 512,
            ScaleTag::S256 => 256,
            ScaleTag::S512 => 128,
        }
    }

    /// Canvas-pixel stride between adjacent samples of this scale.
    pub fn stride(self) -> u32 {
        self.patch_side() / MAP_RES as u32
    }

    pub fn patch_count(self) -> usize {
        match self {
            ScaleTag::S128 => 1,
            ScaleTag::S256 => 4,
            ScaleTag::S512 => 16,
        }
    }

    /// Patches per canvas row at this scale.
    pub fn patches_per_row(self) -> u32 {
        CANVAS / self.patch_side()
    }

    /// Index of the pyramid level this scale selects (coarse to fine).
    pub fn level_index(self) -> usize {
        match self {
            ScaleTag::S128 => 0,
            ScaleTag::S256 => 1,
            ScaleTag::S512 => 2,
        }
    }
}

/// One 128x128 sampling grid: a scale plus a patch of the 512 canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelGrid {
    scale: ScaleTag,
    patch: usize,
    origin: (u32, u32),
}

impl PixelGrid {
    pub fn new(scale: ScaleTag, patch: usize) -> Result<Self> {
        if patch >= scale.patch_count() {
            return Err(Error::IndexOutOfRange(format!(
                "patch {patch} out of range for scale {} (max {})",
                scale.size(),
                scale.patch_count() - 1
            )));
        }
        let per_row = scale.patches_per_row() as usize;
        let side = scale.patch_side();
        let (row, col) = (patch / per_row, patch % per_row);
        Ok(PixelGrid {
            scale,
            patch,
            origin: (col as u32 * side, row as u32 * side),
        })
    }

    pub fn scale(&self) -> ScaleTag {
        self.scale
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    /// Top-left corner of the covered rectangle in 512-canvas pixels (x, y).
    pub fn origin(&self) -> (u32, u32) {
        self.origin
    }

    pub fn side(&self) -> u32 {
        self.scale.patch_side()
    }

    pub fn stride(&self) -> u32 {
        self.scale.stride()
    }

    /// Canvas coordinate sampled by map pixel (i, j): the top-left subsample
    /// convention `origin + (k*j + 0.5, k*i + 0.5)`.
    pub fn canvas_uv<F: Real>(&self, i: usize, j: usize) -> (F, F) {
        let k = self.stride();
        let u = F::c((self.origin.0 + k * j as u32) as f64) + F::c(0.5);
        let v = F::c((self.origin.1 + k * i as u32) as f64) + F::c(0.5);
        (u, v)
    }
}

/// Ray through map pixel (i, j) of `grid`, generated from the pinhole model
/// and placed into world space by `cam_pose`. The marching interval defaults
/// to [0, inf); `march` clips it to the configured near/far.
pub fn ray_for_pixel<F: Real>(
    intr: &Intrinsics<F>,
    cam_pose: &RigidPose<F>,
    grid: &PixelGrid,
    i: usize,
    j: usize,
) -> Result<Ray<F>> {
    if i >= MAP_RES || j >= MAP_RES {
        return Err(Error::IndexOutOfRange(format!(
            "map pixel ({i}, {j}) outside {MAP_RES}x{MAP_RES}"
        )));
    }
    let (u, v) = grid.canvas_uv::<F>(i, j);
    let dir_cam = Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, F::one()).normalized();
    let direction = cam_pose.rotation() * dir_cam;
    Ok(Ray {
        origin: cam_pose.translation(),
        direction,
        near: F::zero(),
        far: F::c(f64::INFINITY),
    })
}

/// Literal form of the paper-style camera mapping `M_world = c_I * M_cam + c_E`.
/// Kept out of the render path; it exists so the sliding-window derivation is
/// reproducible against an executable reference.
pub fn camera_to_world_paper<F: Real>(intr: &Intrinsics<F>, extr: Vec3<F>, point: Vec3<F>) -> Vec3<F> {
    intr.matrix() * point + extr
}

/// Depth-free window-shift mapping: the first two components of
/// `R * c_I^{-1} * (dx, dy, 0)`. The third component is lifted with dz = 0.
///
/// `c_I^{-1} * (dx, dy, 0)` reduces to `(dx/fx, dy/fy, 0)` for the pinhole
/// matrix, which is used directly so the map is exactly linear in (dx, dy).
pub fn sliding_window_delta_paper<F: Real>(intr: &Intrinsics<F>, rotation: &Mat3<F>, dx: F, dy: F) -> (F, F) {
    let lifted = Vec3::new(dx / intr.fx, dy / intr.fy, F::zero());
    let v = *rotation * lifted;
    (v.x, v.y)
}

/// Depth-corrected window-shift mapping: the paper-style map scaled by the
/// scene depth `tz`, so that content at that depth shifts by exactly
/// (dx, dy) pixels on the image plane.
pub fn sliding_window_delta_metric<F: Real>(
    intr: &Intrinsics<F>,
    rotation: &Mat3<F>,
    tz: F,
    dx: F,
    dy: F,
) -> Result<(F, F)> {
    if !(tz > F::zero()) {
        return Err(Error::config(format!("scene depth must be positive, got {tz}")));
    }
    let (px, py) = sliding_window_delta_paper(intr, rotation, dx, dy);
    Ok((px * tz, py * tz))
}

/// Copy of `intr` with the principal point moved by (-ox, -oy). Rendering a
/// 512^2 window with the shifted intrinsics equals cropping the 736^2 render
/// at offset (ox, oy).
pub fn shift_principal_point<F: Real>(intr: &Intrinsics<F>, ox: F, oy: F) -> Intrinsics<F> {
    Intrinsics {
        cx: intr.cx - ox,
        cy: intr.cy - oy,
        ..*intr
    }
}
