//! Ray marching with emission-absorption compositing, the shared
//! density/color decoder, per-scale 128x128 map rendering, and the 16-patch
//! composition with detach semantics.
//!
//! The marcher integrates `n` equal depth bins over [near, far]. Test mode
//! samples bin midpoints (deterministic); training mode jitters uniformly
//! within each bin. `delta_i` is always the bin width, which makes the
//! discrete transmittance telescope exactly for piecewise-constant fields.

use rayon::prelude::*;

use crate::camera::{ray_for_pixel, Intrinsics, PixelGrid, Ray, RigidPose, ScaleTag, CANVAS, MAP_RES};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mlp::{Mlp, MlpCache, MlpGrads};
use crate::real::Real;
use crate::rng::{jitter_key, unit_uniform};
use crate::triplane::{PlaneLookup, PlaneSetGrads, RealizedPyramid, TriPlaneLevel};

/// Channels of every rendered feature map; the first three are RGB.
pub const FEAT_CHANNELS: usize = 32;
/// Decoder output width: one density logit plus the feature channels.
pub const DECODER_OUT: usize = 1 + FEAT_CHANNELS;
/// Optical depth cap per sample; keeps `exp(-sigma * delta)` strictly
/// positive in f32 so the compositing backward never divides by zero.
const MAX_OPTICAL_DEPTH: f64 = 60.0;

/// Ray-marching configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchConfig<F> {
    pub n_samples: usize,
    pub near: F,
    pub far: F,
    /// Stratified jitter on (training) or off (deterministic test mode).
    pub jitter: bool,
    /// Feature value composited behind the last sample, broadcast over all
    /// channels (0 = black background).
    pub background: F,
}

impl<F: Real> MarchConfig<F> {
    pub fn new(n_samples: usize, near: F, far: F, jitter: bool, background: F) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::config(format!("n_samples must be >= 2, got {n_samples}")));
        }
        if !(near >= F::zero() && near < far) {
            return Err(Error::config(format!("march interval must satisfy 0 <= near < far, got [{near}, {far})")));
        }
        Ok(MarchConfig { n_samples, near, far, jitter, background })
    }
}

/// A field evaluated in canonical space: density plus FEAT_CHANNELS features.
/// `eval` takes `&mut self` so implementations can reuse scratch buffers;
/// it must stay a pure function of the point.
pub trait CanonicalField<F: Real> {
    fn eval(&mut self, p: Vec3<F>, feat: &mut [F]) -> F;
}

/// Field backed by a closure, for tests and closed-form oracles.
pub struct FnField<G>(pub G);

impl<F: Real, G: FnMut(Vec3<F>, &mut [F]) -> F> CanonicalField<F> for FnField<G> {
    fn eval(&mut self, p: Vec3<F>, feat: &mut [F]) -> F {
        (self.0)(p, feat)
    }
}

/// The shared 4-layer density/color decoder. Takes a sampled tri-plane
/// feature, emits a density logit (softplus-activated) and FEAT_CHANNELS
/// features whose first three channels are sigmoid-activated RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderMlp<F> {
    pub mlp: Mlp<F>,
}

impl<F: Real> DecoderMlp<F> {
    pub fn new(mlp: Mlp<F>) -> Result<Self> {
        if mlp.out_dim() != DECODER_OUT {
            return Err(Error::DimensionMismatch(format!(
                "decoder must emit {DECODER_OUT} values, got {}",
                mlp.out_dim()
            )));
        }
        if mlp.n_layers() != 4 {
            return Err(Error::config(format!("decoder is a 4-layer perceptron, got {} layers", mlp.n_layers())));
        }
        mlp.validate_finite()?;
        Ok(DecoderMlp { mlp })
    }

    pub fn init(feat_in: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        DecoderMlp {
            mlp: Mlp::init_uniform(&[feat_in, hidden, hidden, hidden, DECODER_OUT], rng, false),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.mlp.in_dim()
    }

    /// Apply output activations to a raw MLP output: sigma = softplus(z[0]),
    /// feature = [sigmoid(z[1..4]), z[4..]].
    fn activate(z: &[F], feat: &mut [F]) -> F {
        for c in 0..3 {
            feat[c] = z[1 + c].sigmoid();
        }
        feat[3..FEAT_CHANNELS].copy_from_slice(&z[4..DECODER_OUT]);
        z[0].softplus()
    }
}

/// Scratch buffers for decoding one point.
pub struct DecodeScratch<F> {
    pub cache: MlpCache<F>,
    pub feat_in: Vec<F>,
}

impl<F: Real> DecodeScratch<F> {
    pub fn new(feat_in: usize) -> Self {
        DecodeScratch { cache: MlpCache::new(), feat_in: vec![F::zero(); feat_in] }
    }
}

/// Tri-plane field: one realized level decoded by the shared MLP.
pub struct TriplaneField<'a, F: Real> {
    pub level: &'a TriPlaneLevel<F>,
    pub decoder: &'a DecoderMlp<F>,
    scratch: DecodeScratch<F>,
}

impl<'a, F: Real> TriplaneField<'a, F> {
    pub fn new(level: &'a TriPlaneLevel<F>, decoder: &'a DecoderMlp<F>) -> Self {
        let scratch = DecodeScratch::new(decoder.in_dim());
        TriplaneField { level, decoder, scratch }
    }
}

impl<F: Real> CanonicalField<F> for TriplaneField<'_, F> {
    fn eval(&mut self, p: Vec3<F>, feat: &mut [F]) -> F {
        self.level.sample_into(p, &mut self.scratch.feat_in);
        self.decoder.mlp.forward(&self.scratch.feat_in, &mut self.scratch.cache);
        let z = self.decoder.mlp.output(&self.scratch.cache);
        DecoderMlp::activate(z, feat)
    }
}

/// Per-ray stratified jitter source keyed on (map seed, ray index).
#[derive(Debug, Clone, Copy)]
pub struct RayJitter {
    pub map_seed: u64,
    pub ray_index: u64,
}

impl RayJitter {
    #[inline]
    fn offset<F: Real>(&self, sample: usize) -> F {
        F::c(unit_uniform(jitter_key(self.map_seed, self.ray_index, sample as u64)))
    }
}

/// March one ray through `field`: sample points at jittered or midpoint
/// depths, map them to canonical space through `pose`, decode, and composite
/// with the emission-absorption model. Returns the opacity; the composited
/// feature is written to `feat_out`.
pub fn march_ray<F: Real>(
    field: &mut impl CanonicalField<F>,
    pose: &RigidPose<F>,
    ray: &Ray<F>,
    cfg: &MarchConfig<F>,
    jitter: Option<RayJitter>,
    feat_out: &mut [F],
) -> F {
    debug_assert_eq!(feat_out.len(), FEAT_CHANNELS);
    let t0 = ray.near.max(cfg.near);
    let t1 = ray.far.min(cfg.far);
    for v in feat_out.iter_mut() {
        *v = F::zero();
    }
    if !(t0 < t1) {
        for v in feat_out.iter_mut() {
            *v = cfg.background;
        }
        return F::zero();
    }
    let n = cfg.n_samples;
    let delta = (t1 - t0) / F::from_usize(n);
    let mut transmittance = F::one();
    let mut feat = [F::zero(); FEAT_CHANNELS];
    let max_od = F::c(MAX_OPTICAL_DEPTH);
    for i in 0..n {
        let u = match (cfg.jitter, jitter) {
            (true, Some(j)) => j.offset::<F>(i),
            _ => F::c(0.5),
        };
        let t = t0 + (F::from_usize(i) + u) * delta;
        let q = pose.camera_to_canonical(ray.point_at(t));
        let sigma = field.eval(q, &mut feat);
        let od = (sigma * delta).min(max_od);
        let free = (-od).exp();
        let alpha = F::one() - free;
        let w = transmittance * alpha;
        for (o, f) in feat_out.iter_mut().zip(feat.iter()) {
            *o += w * *f;
        }
        transmittance *= free;
    }
    for o in feat_out.iter_mut() {
        *o += transmittance * cfg.background;
    }
    F::one() - transmittance
}

/// One rendered 128x128 map of a single scale/patch. Feature layout is
/// row-major (row, col, channel); opacity is row-major (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMap<F> {
    pub scale: ScaleTag,
    pub patch: usize,
    pub features: Vec<F>,
    pub opacity: Vec<F>,
}

impl<F: Real> RenderedMap<F> {
    pub fn zeros(scale: ScaleTag, patch: usize) -> Self {
        RenderedMap {
            scale,
            patch,
            features: vec![F::zero(); MAP_RES * MAP_RES * FEAT_CHANNELS],
            opacity: vec![F::zero(); MAP_RES * MAP_RES],
        }
    }

    #[inline]
    pub fn feature_at(&self, i: usize, j: usize) -> &[F] {
        let at = (i * MAP_RES + j) * FEAT_CHANNELS;
        &self.features[at..at + FEAT_CHANNELS]
    }

    #[inline]
    pub fn rgb_at(&self, i: usize, j: usize) -> [F; 3] {
        let f = self.feature_at(i, j);
        [f[0], f[1], f[2]]
    }

    #[inline]
    pub fn opacity_at(&self, i: usize, j: usize) -> F {
        self.opacity[i * MAP_RES + j]
    }
}

/// Render a full 128x128 map of `grid` by marching every pixel ray against
/// the realized level matching the grid scale. Rays fan out across worker
/// threads row by row; per-pixel outputs land in disjoint slots so the result
/// is independent of scheduling.
#[allow(clippy::too_many_arguments)]
pub fn render_map_level<F: Real>(
    level: &TriPlaneLevel<F>,
    decoder: &DecoderMlp<F>,
    pose: &RigidPose<F>,
    intr: &Intrinsics<F>,
    cam_pose: &RigidPose<F>,
    grid: &PixelGrid,
    cfg: &MarchConfig<F>,
    map_seed: Option<u64>,
) -> RenderedMap<F> {
    let mut map = RenderedMap::zeros(grid.scale(), grid.patch());
    let feat_rows = map.features.par_chunks_mut(MAP_RES * FEAT_CHANNELS);
    let op_rows = map.opacity.par_chunks_mut(MAP_RES);
    feat_rows.zip(op_rows).enumerate().for_each(|(i, (feat_row, op_row))| {
        let mut field = TriplaneField::new(level, decoder);
        for j in 0..MAP_RES {
            let ray = ray_for_pixel(intr, cam_pose, grid, i, j).expect("loop bounds");
            let jitter = map_seed.map(|s| RayJitter { map_seed: s, ray_index: (i * MAP_RES + j) as u64 });
            let out = &mut feat_row[j * FEAT_CHANNELS..(j + 1) * FEAT_CHANNELS];
            op_row[j] = march_ray(&mut field, pose, &ray, cfg, jitter, out);
        }
    });
    map
}

/// Spec-shaped convenience: pick the level by grid scale from a realized
/// pyramid (errors when the pyramid is too shallow for the scale).
#[allow(clippy::too_many_arguments)]
pub fn render_map<F: Real>(
    realized: &RealizedPyramid<F>,
    decoder: &DecoderMlp<F>,
    pose: &RigidPose<F>,
    intr: &Intrinsics<F>,
    cam_pose: &RigidPose<F>,
    grid: &PixelGrid,
    cfg: &MarchConfig<F>,
    map_seed: Option<u64>,
) -> Result<RenderedMap<F>> {
    let level = realized.level_for_scale(grid.scale())?;
    Ok(render_map_level(level, decoder, pose, intr, cam_pose, grid, cfg, map_seed))
}

/// The opacity plane of [`render_map`].
#[allow(clippy::too_many_arguments)]
pub fn render_mask<F: Real>(
    realized: &RealizedPyramid<F>,
    decoder: &DecoderMlp<F>,
    pose: &RigidPose<F>,
    intr: &Intrinsics<F>,
    cam_pose: &RigidPose<F>,
    grid: &PixelGrid,
    cfg: &MarchConfig<F>,
    map_seed: Option<u64>,
) -> Result<Vec<F>> {
    Ok(render_map(realized, decoder, pose, intr, cam_pose, grid, cfg, map_seed)?.opacity)
}

/// Full-canvas assembly of the 16 fine patches with the detach bookkeeping:
/// values are identical regardless of the active patch, but gradients flow
/// only through the flagged one.
#[derive(Debug, Clone)]
pub struct CompositeMap<F> {
    /// Row-major (row, col, channel), 512 x 512 x FEAT_CHANNELS.
    pub features: Vec<F>,
    /// Row-major (row, col), 512 x 512.
    pub opacity: Vec<F>,
    pub active: usize,
    pub gradient_flags: [bool; 16],
}

impl<F: Real> CompositeMap<F> {
    pub const SIDE: usize = CANVAS as usize;

    /// Canvas rectangle of patch `p`: (row0, col0), side 128.
    pub fn patch_origin(patch: usize) -> (usize, usize) {
        ((patch / 4) * MAP_RES, (patch % 4) * MAP_RES)
    }

    #[inline]
    pub fn rgb_at(&self, i: usize, j: usize) -> [F; 3] {
        let at = (i * Self::SIDE + j) * FEAT_CHANNELS;
        [self.features[at], self.features[at + 1], self.features[at + 2]]
    }
}

/// Tile 16 fine-scale rendered maps into a 32x512x512 composite. Every patch
/// index must appear exactly once; the storage order of `patches` does not
/// matter.
pub fn compose_full<F: Real>(patches: &[RenderedMap<F>], active: usize) -> Result<CompositeMap<F>> {
    if patches.len() != 16 {
        return Err(Error::config(format!("composition needs 16 patches, got {}", patches.len())));
    }
    if active >= 16 {
        return Err(Error::IndexOutOfRange(format!("active patch {active} out of range")));
    }
    let mut seen = [false; 16];
    for p in patches {
        if p.scale != ScaleTag::S512 {
            return Err(Error::config("composition patches must be fine-scale (512) maps"));
        }
        if seen[p.patch] {
            return Err(Error::config(format!("duplicate patch index {}", p.patch)));
        }
        seen[p.patch] = true;
    }

    let side = CompositeMap::<F>::SIDE;
    let mut features = vec![F::zero(); side * side * FEAT_CHANNELS];
    let mut opacity = vec![F::zero(); side * side];
    for p in patches {
        let (r0, c0) = CompositeMap::<F>::patch_origin(p.patch);
        for i in 0..MAP_RES {
            let src = &p.features[i * MAP_RES * FEAT_CHANNELS..(i + 1) * MAP_RES * FEAT_CHANNELS];
            let dst_at = ((r0 + i) * side + c0) * FEAT_CHANNELS;
            features[dst_at..dst_at + MAP_RES * FEAT_CHANNELS].copy_from_slice(src);
            let src_op = &p.opacity[i * MAP_RES..(i + 1) * MAP_RES];
            let dst_op = (r0 + i) * side + c0;
            opacity[dst_op..dst_op + MAP_RES].copy_from_slice(src_op);
        }
    }
    let mut gradient_flags = [false; 16];
    gradient_flags[active] = true;
    Ok(CompositeMap { features, opacity, active, gradient_flags })
}

/// Dense upstream gradients for one rendered map.
#[derive(Debug, Clone)]
pub struct MapGrads<F> {
    /// Row-major (row, col, channel); same layout as `RenderedMap::features`.
    pub d_features: Vec<F>,
    pub d_opacity: Vec<F>,
}

impl<F: Real> MapGrads<F> {
    pub fn zeros() -> Self {
        MapGrads {
            d_features: vec![F::zero(); MAP_RES * MAP_RES * FEAT_CHANNELS],
            d_opacity: vec![F::zero(); MAP_RES * MAP_RES],
        }
    }
}

/// Per-sample forward caches for one ray, reused across rays.
pub struct RayCache<F> {
    /// Sampled level features, n x C_in.
    feat_in: Vec<F>,
    /// Raw decoder outputs, n x DECODER_OUT.
    z: Vec<F>,
    /// Hidden activations per decoder layer (post-tanh), concatenated.
    hidden: Vec<Vec<F>>,
    /// Per-sample free-path factor exp(-sigma * delta).
    free: Vec<F>,
    /// Per-sample clamp flag for the optical-depth cap.
    clamped: Vec<bool>,
    /// Per-sample plane lookups.
    looks: Vec<[PlaneLookup<F>; 3]>,
    /// Transmittance before each sample.
    trans: Vec<F>,
    d_z: Vec<F>,
    d_fin: Vec<F>,
    mlp_fwd: MlpCache<F>,
    mlp_bwd: MlpCache<F>,
}

impl<F: Real> RayCache<F> {
    fn new(n: usize, c_in: usize, dims: &[usize]) -> Self {
        RayCache {
            feat_in: vec![F::zero(); n * c_in],
            z: vec![F::zero(); n * DECODER_OUT],
            hidden: dims[1..dims.len() - 1].iter().map(|&d| vec![F::zero(); n * d]).collect(),
            free: vec![F::zero(); n],
            clamped: vec![false; n],
            looks: Vec::with_capacity(n),
            trans: Vec::with_capacity(n),
            d_z: vec![F::zero(); DECODER_OUT],
            d_fin: vec![F::zero(); c_in],
            mlp_fwd: MlpCache::new(),
            mlp_bwd: MlpCache::new(),
        }
    }
}

/// Recompute one ray's forward pass with caches and backpropagate the given
/// upstream gradients into plane/decoder gradient buffers. Jitter must match
/// the forward render exactly, which the counter-based keys guarantee.
#[allow(clippy::too_many_arguments)]
fn march_ray_backward_into<F: Real>(
    level: &TriPlaneLevel<F>,
    decoder: &DecoderMlp<F>,
    pose: &RigidPose<F>,
    ray: &Ray<F>,
    cfg: &MarchConfig<F>,
    jitter: Option<RayJitter>,
    d_feat: &[F],
    d_opacity: F,
    cache: &mut RayCache<F>,
    d_planes: &mut PlaneSetGrads<F>,
    d_decoder: &mut MlpGrads<F>,
) {
    let t0 = ray.near.max(cfg.near);
    let t1 = ray.far.min(cfg.far);
    if !(t0 < t1) {
        return;
    }
    let n = cfg.n_samples;
    let c_in = decoder.in_dim();
    let delta = (t1 - t0) / F::from_usize(n);
    let max_od = F::c(MAX_OPTICAL_DEPTH);
    let mlp = &decoder.mlp;
    let n_hidden = mlp.n_layers() - 1;

    // Forward with caches.
    cache.looks.clear();
    cache.trans.clear();
    let mut transmittance = F::one();
    for i in 0..n {
        let u = match (cfg.jitter, jitter) {
            (true, Some(j)) => j.offset::<F>(i),
            _ => F::c(0.5),
        };
        let t = t0 + (F::from_usize(i) + u) * delta;
        let q = pose.camera_to_canonical(ray.point_at(t));
        let fin = &mut cache.feat_in[i * c_in..(i + 1) * c_in];
        cache.looks.push(level.sample_into(q, fin));
        mlp.forward(fin, &mut cache.mlp_fwd);
        cache.z[i * DECODER_OUT..(i + 1) * DECODER_OUT].copy_from_slice(mlp.output(&cache.mlp_fwd));
        for (l, buf) in cache.hidden.iter_mut().enumerate() {
            let d = mlp.dims[l + 1];
            buf[i * d..(i + 1) * d].copy_from_slice(&cache.mlp_fwd.acts[l + 1]);
        }
        let sigma = cache.z[i * DECODER_OUT].softplus();
        let od = sigma * delta;
        let clamped = od > max_od;
        let free = (-od.min(max_od)).exp();
        cache.free[i] = free;
        cache.clamped[i] = clamped;
        cache.trans.push(transmittance);
        transmittance *= free;
    }
    let t_final = transmittance;

    // Backward through compositing.
    // d(T_final): feature has + T_final * bg on every channel, opacity is 1 - T_final.
    let dt_final = d_feat.iter().map(|g| *g * cfg.background).sum::<F>() - d_opacity;
    let mut suffix = dt_final * t_final;
    let mut d_z = std::mem::take(&mut cache.d_z);
    let mut d_fin = std::mem::take(&mut cache.d_fin);
    for i in (0..n).rev() {
        let z = &cache.z[i * DECODER_OUT..(i + 1) * DECODER_OUT];
        let free = cache.free[i];
        let alpha = F::one() - free;
        let w = cache.trans[i] * alpha;

        // Feature values f_i: activations of z[1..].
        // dw_i = sum_c dF_c * f_{i,c}; df_{i,c} = dF_c * w.
        let mut dw = F::zero();
        for c in 0..3 {
            let f = z[1 + c].sigmoid();
            dw += d_feat[c] * f;
            d_z[1 + c] = d_feat[c] * w * f * (F::one() - f);
        }
        for c in 3..FEAT_CHANNELS {
            dw += d_feat[c] * z[1 + c];
            d_z[1 + c] = d_feat[c] * w;
        }
        let d_alpha = dw * cache.trans[i] - suffix / free;
        suffix += dw * w;
        let d_sigma = if cache.clamped[i] { F::zero() } else { d_alpha * delta * free };
        d_z[0] = d_sigma * z[0].sigmoid();

        // Rebuild the layer cache for this sample and run the MLP backward.
        cache.mlp_fwd.acts[0].copy_from_slice(&cache.feat_in[i * c_in..(i + 1) * c_in]);
        for (l, buf) in cache.hidden.iter().enumerate() {
            let d = mlp.dims[l + 1];
            cache.mlp_fwd.acts[l + 1].copy_from_slice(&buf[i * d..(i + 1) * d]);
        }
        cache.mlp_fwd.acts[n_hidden + 1].copy_from_slice(z);
        mlp.backward(&cache.mlp_fwd, &d_z, d_decoder, &mut cache.mlp_bwd, &mut d_fin);
        for (k, plane) in level.planes.iter().enumerate() {
            plane.scatter_grad(&cache.looks[i][k], &d_fin, &mut d_planes.planes[k]);
        }
    }
    cache.d_z = d_z;
    cache.d_fin = d_fin;
}

/// Rows per deterministic backward chunk. Chunks are computed in parallel
/// and merged in fixed order, so gradients are bit-identical for any worker
/// count.
const BACKWARD_CHUNK_ROWS: usize = 32;

/// Backpropagate dense map gradients through every ray of `grid`. Returns
/// gradients at the realized level's planes plus decoder gradients.
#[allow(clippy::too_many_arguments)]
pub fn render_map_backward<F: Real>(
    level: &TriPlaneLevel<F>,
    decoder: &DecoderMlp<F>,
    pose: &RigidPose<F>,
    intr: &Intrinsics<F>,
    cam_pose: &RigidPose<F>,
    grid: &PixelGrid,
    cfg: &MarchConfig<F>,
    map_seed: Option<u64>,
    d_map: &MapGrads<F>,
) -> (PlaneSetGrads<F>, MlpGrads<F>) {
    let chunks: Vec<usize> = (0..MAP_RES / BACKWARD_CHUNK_ROWS).collect();
    let parts: Vec<(PlaneSetGrads<F>, MlpGrads<F>)> = chunks
        .par_iter()
        .map(|&chunk| {
            let mut d_planes = PlaneSetGrads::zeros_like(level);
            let mut d_decoder = MlpGrads::zeros_like(&decoder.mlp);
            let mut cache = RayCache::new(cfg.n_samples, decoder.in_dim(), &decoder.mlp.dims);
            for i in chunk * BACKWARD_CHUNK_ROWS..(chunk + 1) * BACKWARD_CHUNK_ROWS {
                for j in 0..MAP_RES {
                    let px = i * MAP_RES + j;
                    let d_feat = &d_map.d_features[px * FEAT_CHANNELS..(px + 1) * FEAT_CHANNELS];
                    let d_op = d_map.d_opacity[px];
                    if d_feat.iter().all(|v| *v == F::zero()) && d_op == F::zero() {
                        continue;
                    }
                    let ray = ray_for_pixel(intr, cam_pose, grid, i, j).expect("loop bounds");
                    let jitter = map_seed.map(|s| RayJitter { map_seed: s, ray_index: px as u64 });
                    march_ray_backward_into(
                        level, decoder, pose, &ray, cfg, jitter, d_feat, d_op, &mut cache,
                        &mut d_planes, &mut d_decoder,
                    );
                }
            }
            (d_planes, d_decoder)
        })
        .collect();

    let mut iter = parts.into_iter();
    let (mut d_planes, mut d_decoder) = iter.next().expect("at least one chunk");
    for (p, d) in iter {
        d_planes.accumulate(&p);
        d_decoder.accumulate(&d);
    }
    (d_planes, d_decoder)
}
