//! Parametric shape blending, synthetic identity/expression bases, and
//! training-frame records including the sliding-window crop state.

use std::path::PathBuf;

use rand::Rng;

use crate::camera::{shift_principal_point, Intrinsics, RigidPose, CENTER_OFFSET, CROP_MAX};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::real::Real;
use crate::rng::{stream_rng, Stream};

/// Mean shape plus identity/expression PCA-style bases. Vertex order is
/// (x0, y0, z0, x1, ...); every basis column is a 3E displacement field.
#[derive(Debug, Clone)]
pub struct ShapeBasis<F> {
    pub mean: Vec<F>,
    /// 3E x n_id, column-major (each column is one identity mode).
    pub id_basis: Vec<Vec<F>>,
    /// 3E x n_exp, column-major.
    pub exp_basis: Vec<Vec<F>>,
    pub vertex_count: usize,
}

impl<F: Real> ShapeBasis<F> {
    pub fn new(mean: Vec<F>, id_basis: Vec<Vec<F>>, exp_basis: Vec<Vec<F>>) -> Result<Self> {
        if mean.len() % 3 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "mean shape length {} is not a multiple of 3",
                mean.len()
            )));
        }
        for (name, basis) in [("identity", &id_basis), ("expression", &exp_basis)] {
            for (k, col) in basis.iter().enumerate() {
                if col.len() != mean.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{name} basis column {k} has length {}, expected {}",
                        col.len(),
                        mean.len()
                    )));
                }
            }
        }
        let vertex_count = mean.len() / 3;
        Ok(ShapeBasis { mean, id_basis, exp_basis, vertex_count })
    }

    pub fn n_id(&self) -> usize {
        self.id_basis.len()
    }

    pub fn n_exp(&self) -> usize {
        self.exp_basis.len()
    }
}

/// Expression coefficients beta_t.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionCode<F> {
    pub beta: Vec<F>,
}

impl<F: Real> ExpressionCode<F> {
    pub fn new(beta: Vec<F>) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite { context: "expression coefficients".into() });
        }
        Ok(ExpressionCode { beta })
    }

    pub fn zeros(n: usize) -> Self {
        ExpressionCode { beta: vec![F::zero(); n] }
    }
}

/// One training sample: conditioning inputs, pose, crop state, and ground
/// truth references. The crop offset addresses the 512^2 window inside the
/// 736^2 frame, so it lives in [0, 224]^2.
#[derive(Debug, Clone)]
pub struct FrameRecord<F> {
    pub id: usize,
    pub beta: ExpressionCode<F>,
    /// Row of the learnable latent table assigned to this frame.
    pub gamma_index: usize,
    pub pose: RigidPose<F>,
    pub crop: (u32, u32),
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
}

impl<F: Real> FrameRecord<F> {
    pub fn validate(&self) -> Result<()> {
        if self.crop.0 > CROP_MAX || self.crop.1 > CROP_MAX {
            return Err(Error::IndexOutOfRange(format!(
                "crop offset {:?} outside [0, {CROP_MAX}]^2",
                self.crop
            )));
        }
        Ok(())
    }

    /// Window camera for this record's crop state: the base 512-canvas
    /// intrinsics shifted by the offset from the frame center, so the camera
    /// rather than the image array encodes the window position.
    pub fn window_intrinsics(&self, base: &Intrinsics<F>) -> Intrinsics<F> {
        let ox = F::c(self.crop.0 as f64 - CENTER_OFFSET as f64);
        let oy = F::c(self.crop.1 as f64 - CENTER_OFFSET as f64);
        shift_principal_point(base, ox, oy)
    }
}

/// `mean + B_id * alpha + B_exp * beta`. Accumulation is per-column so the
/// affine structure is preserved exactly for disjoint coefficient supports.
pub fn blend_shape<F: Real>(
    basis: &ShapeBasis<F>,
    alpha: &[F],
    beta: &ExpressionCode<F>,
) -> Result<Vec<F>> {
    if alpha.len() != basis.n_id() {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} coefficients, basis has {} identity modes",
            alpha.len(),
            basis.n_id()
        )));
    }
    if beta.beta.len() != basis.n_exp() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} coefficients, basis has {} expression modes",
            beta.beta.len(),
            basis.n_exp()
        )));
    }
    let mut out = basis.mean.clone();
    for (col, &a) in basis.id_basis.iter().zip(alpha) {
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * a;
        }
    }
    for (col, &b) in basis.exp_basis.iter().zip(&beta.beta) {
        for (o, &c) in out.iter_mut().zip(col) {
            *o += c * b;
        }
    }
    Ok(out)
}

/// Per-vertex rigid placement `R * v + T`.
pub fn pose_shape<F: Real>(vertices: &[F], pose: &RigidPose<F>) -> Vec<F> {
    let mut out = Vec::with_capacity(vertices.len());
    for v in vertices.chunks_exact(3) {
        let p = pose.camera_to_canonical(Vec3::new(v[0], v[1], v[2]));
        out.extend_from_slice(&[p.x, p.y, p.z]);
    }
    out
}

/// Uniform integer crop offsets in [0, extent - window]^2.
pub fn sample_crop(rng: &mut impl Rng, extent: u32, window: u32) -> Result<(u32, u32)> {
    if window > extent {
        return Err(Error::config(format!("window {window} exceeds extent {extent}")));
    }
    let max = extent - window;
    Ok((rng.gen_range(0..=max), rng.gen_range(0..=max)))
}

/// Convenience wrapper drawing one offset pair from a named stream of `seed`.
pub fn sample_crop_seeded(seed: u64, extent: u32, window: u32) -> Result<(u32, u32)> {
    let mut rng = stream_rng(seed, Stream::Plan);
    sample_crop(&mut rng, extent, window)
}

/// Copy of `rec` with the crop offset replaced. Conditioning inputs and pose
/// are untouched; the training loop pairs the result with
/// [`FrameRecord::window_intrinsics`].
pub fn augment_record<F: Real>(rec: &FrameRecord<F>, ox: u32, oy: u32) -> Result<FrameRecord<F>> {
    if ox > CROP_MAX || oy > CROP_MAX {
        return Err(Error::IndexOutOfRange(format!(
            "crop offset ({ox}, {oy}) outside [0, {CROP_MAX}]^2"
        )));
    }
    let mut out = rec.clone();
    out.crop = (ox, oy);
    Ok(out)
}

/// Fixed bump center directions shared between the expression basis and the
/// analytic scene, spread over the sphere by the golden-angle spiral.
pub fn bump_directions<F: Real>(n: usize) -> Vec<Vec3<F>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * k as f64;
            Vec3::new(F::c(r * th.cos()), F::c(r * th.sin()), F::c(z))
        })
        .collect()
}

/// Angular bump profile around direction `center`, expressed through the
/// chordal distance so it is smooth everywhere on the sphere.
pub fn bump_profile<F: Real>(dir: Vec3<F>, center: Vec3<F>, width: F) -> F {
    let d = dir - center;
    (-(d.dot(d)) / (width * width)).exp()
}

/// Synthetic basis for tests and scene conditioning: an ellipsoid mean shape,
/// smooth global modes for identity, and localized radial bumps for
/// expression.
pub fn make_synthetic_basis<F: Real>(
    vertex_count: usize,
    n_id: usize,
    n_exp: usize,
    semi_axes: Vec3<F>,
) -> Result<ShapeBasis<F>> {
    let dirs = bump_directions::<F>(vertex_count);
    let mut mean = Vec::with_capacity(3 * vertex_count);
    for d in &dirs {
        mean.extend_from_slice(&[d.x * semi_axes.x, d.y * semi_axes.y, d.z * semi_axes.z]);
    }

    // Identity modes: axis stretches and a shear, scaled small.
    let mut id_basis = Vec::with_capacity(n_id);
    for k in 0..n_id {
        let mut col = Vec::with_capacity(3 * vertex_count);
        for v in mean.chunks_exact(3) {
            let (x, y, z) = (v[0], v[1], v[2]);
            let g = match k % 4 {
                0 => [x, F::zero(), F::zero()],
                1 => [F::zero(), y, F::zero()],
                2 => [F::zero(), F::zero(), z],
                _ => [y, x, F::zero()],
            };
            let s = F::c(0.1);
            col.extend_from_slice(&[g[0] * s, g[1] * s, g[2] * s]);
        }
        id_basis.push(col);
    }

    // Expression modes: radial bumps at fixed directions.
    let centers = bump_directions::<F>(n_exp);
    let width = F::c(0.6);
    let amp = F::c(0.08);
    let mut exp_basis = Vec::with_capacity(n_exp);
    for center in &centers {
        let mut col = Vec::with_capacity(3 * vertex_count);
        for (dir, v) in dirs.iter().zip(mean.chunks_exact(3)) {
            let w = bump_profile(*dir, *center, width) * amp;
            col.extend_from_slice(&[v[0] * w, v[1] * w, v[2] * w]);
        }
        exp_basis.push(col);
    }

    ShapeBasis::new(mean, id_basis, exp_basis)
}
