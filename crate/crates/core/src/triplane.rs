//! Tri-plane feature fields, the three-level pyramid with top-down lateral
//! connections, condition modulation, and differentiable bilinear sampling.
//!
//! A level stores three orthogonal feature planes (xy, xz, yz) over one
//! shared canonical-space square. Sampling projects a point onto each plane,
//! interpolates bilinearly with border clamp, and sums the three results.
//! The pyramid realizes levels coarse-to-fine: each finer level adds a
//! learnable-gain bilinear upsample of the realized level below it,
//! FPN-style, after per-channel affine condition modulation.

use rand::Rng;

use crate::camera::ScaleTag;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::mlp::{Mlp, MlpCache, MlpGrads};
use crate::real::Real;
use crate::rng::{stream_rng, Stream};

/// Length of the per-frame latent code gamma_t.
pub const GAMMA_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneAxis {
    Xy,
    Xz,
    Yz,
}

impl PlaneAxis {
    pub const ALL: [PlaneAxis; 3] = [PlaneAxis::Xy, PlaneAxis::Xz, PlaneAxis::Yz];

    pub fn name(self) -> &'static str {
        match self {
            PlaneAxis::Xy => "xy",
            PlaneAxis::Xz => "xz",
            PlaneAxis::Yz => "yz",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(PlaneAxis::Xy),
            "xz" => Ok(PlaneAxis::Xz),
            "yz" => Ok(PlaneAxis::Yz),
            other => Err(Error::config(format!("unknown plane axis '{other}'"))),
        }
    }

    /// Project a canonical point onto this plane's (u, v) coordinates.
    pub fn project<F: Real>(self, p: Vec3<F>) -> (F, F) {
        match self {
            PlaneAxis::Xy => (p.x, p.y),
            PlaneAxis::Xz => (p.x, p.z),
            PlaneAxis::Yz => (p.y, p.z),
        }
    }
}

/// Canonical-space square a plane spans, shared by both of its axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extent<F> {
    pub min: F,
    pub max: F,
}

impl<F: Real> Extent<F> {
    pub fn symmetric(half: F) -> Self {
        Extent { min: -half, max: half }
    }
}

/// Bilinear footprint of one plane lookup: two columns, two rows, and the
/// four corner weights.
#[derive(Debug, Clone, Copy)]
pub struct PlaneLookup<F> {
    pub c0: usize,
    pub c1: usize,
    pub r0: usize,
    pub r1: usize,
    pub w00: F,
    pub w01: F,
    pub w10: F,
    pub w11: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane<F> {
    pub res: usize,
    pub channels: usize,
    pub axis: PlaneAxis,
    pub extent: Extent<F>,
    /// Row-major (row, col, channel).
    pub data: Vec<F>,
}

impl<F: Real> FeaturePlane<F> {
    pub fn zeros(res: usize, channels: usize, axis: PlaneAxis, extent: Extent<F>) -> Result<Self> {
        if res < 2 {
            return Err(Error::config(format!("plane resolution must be >= 2, got {res}")));
        }
        if !(extent.min < extent.max) {
            return Err(Error::config("plane extent must be a nonempty interval"));
        }
        Ok(FeaturePlane { res, channels, axis, extent, data: vec![F::zero(); res * res * channels] })
    }

    pub fn validate_finite(&self) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("{} plane data", self.axis.name()) });
        }
        Ok(())
    }

    #[inline]
    pub fn texel(&self, row: usize, col: usize) -> &[F] {
        let at = (row * self.res + col) * self.channels;
        &self.data[at..at + self.channels]
    }

    /// Continuous texel coordinate of plane coordinate `x` along one axis:
    /// texel centers sit at (i + 0.5)/res of the extent.
    #[inline]
    fn texel_coord(&self, x: F) -> F {
        (x - self.extent.min) / (self.extent.max - self.extent.min) * F::from_usize(self.res)
            - F::c(0.5)
    }

    /// Bilinear footprint with border clamp (out-of-extent queries read the
    /// nearest border texel).
    #[inline]
    pub fn lookup(&self, u: F, v: F) -> PlaneLookup<F> {
        let (tc, tr) = (self.texel_coord(u), self.texel_coord(v));
        let fc = tc.floor();
        let fr = tr.floor();
        let (ac, ar) = (tc - fc, tr - fr);
        let last = (self.res - 1) as f64;
        let clamp = |f: F| -> usize { f.to_f64().clamp(0.0, last) as usize };
        let c0 = clamp(fc);
        let c1 = clamp(fc + F::one());
        let r0 = clamp(fr);
        let r1 = clamp(fr + F::one());
        let (bc, br) = (F::one() - ac, F::one() - ar);
        PlaneLookup {
            c0,
            c1,
            r0,
            r1,
            w00: bc * br,
            w01: ac * br,
            w10: bc * ar,
            w11: ac * ar,
        }
    }

    /// Accumulate the interpolated feature vector into `out`.
    #[inline]
    pub fn sample_accum(&self, look: &PlaneLookup<F>, out: &mut [F]) {
        let t00 = self.texel(look.r0, look.c0);
        let t01 = self.texel(look.r0, look.c1);
        let t10 = self.texel(look.r1, look.c0);
        let t11 = self.texel(look.r1, look.c1);
        for ch in 0..self.channels {
            out[ch] += look.w00 * t00[ch] + look.w01 * t01[ch] + look.w10 * t10[ch] + look.w11 * t11[ch];
        }
    }

    /// Adjoint of [`sample_accum`]: scatter `d_out` into a gradient buffer
    /// shaped like `data`.
    #[inline]
    pub fn scatter_grad(&self, look: &PlaneLookup<F>, d_out: &[F], d_data: &mut [F]) {
        let c = self.channels;
        let at = |r: usize, col: usize| (r * self.res + col) * c;
        let (a00, a01, a10, a11) = (
            at(look.r0, look.c0),
            at(look.r0, look.c1),
            at(look.r1, look.c0),
            at(look.r1, look.c1),
        );
        for (ch, &g) in d_out.iter().enumerate() {
            d_data[a00 + ch] += look.w00 * g;
            d_data[a01 + ch] += look.w01 * g;
            d_data[a10 + ch] += look.w10 * g;
            d_data[a11 + ch] += look.w11 * g;
        }
    }
}

/// Three feature planes sharing resolution, channel count, and extent.
#[derive(Debug, Clone, PartialEq)]
pub struct TriPlaneLevel<F> {
    pub scale: ScaleTag,
    pub planes: [FeaturePlane<F>; 3],
}

impl<F: Real> TriPlaneLevel<F> {
    pub fn zeros(scale: ScaleTag, res: usize, channels: usize, extent: Extent<F>) -> Result<Self> {
        Ok(TriPlaneLevel {
            scale,
            planes: [
                FeaturePlane::zeros(res, channels, PlaneAxis::Xy, extent)?,
                FeaturePlane::zeros(res, channels, PlaneAxis::Xz, extent)?,
                FeaturePlane::zeros(res, channels, PlaneAxis::Yz, extent)?,
            ],
        })
    }

    pub fn validate(&self) -> Result<()> {
        let (res, ch, ext) = (self.planes[0].res, self.planes[0].channels, self.planes[0].extent);
        for p in &self.planes {
            if p.res != res || p.channels != ch || p.extent != ext {
                return Err(Error::config("tri-plane level planes disagree on res/channels/extent"));
            }
            p.validate_finite()?;
        }
        Ok(())
    }

    pub fn res(&self) -> usize {
        self.planes[0].res
    }

    pub fn channels(&self) -> usize {
        self.planes[0].channels
    }

    pub fn extent(&self) -> Extent<F> {
        self.planes[0].extent
    }

    /// Sample the level at a canonical point: sum of the three plane
    /// interpolations. Returns the per-plane footprints for the backward
    /// scatter.
    #[inline]
    pub fn sample_into(&self, p: Vec3<F>, out: &mut [F]) -> [PlaneLookup<F>; 3] {
        for v in out.iter_mut() {
            *v = F::zero();
        }
        let mut looks = [self.planes[0].lookup(F::zero(), F::zero()); 3];
        for (k, plane) in self.planes.iter().enumerate() {
            let (u, v) = plane.axis.project(p);
            let look = plane.lookup(u, v);
            plane.sample_accum(&look, out);
            looks[k] = look;
        }
        looks
    }

    pub fn sample(&self, p: Vec3<F>) -> Vec<F> {
        let mut out = vec![F::zero(); self.channels()];
        self.sample_into(p, &mut out);
        out
    }
}

/// Conditioning inputs: explicit expression coefficients and the per-frame
/// learnable latent code.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEmbedding<F> {
    pub beta: Vec<F>,
    pub gamma: Vec<F>,
}

impl<F: Real> ConditionEmbedding<F> {
    pub fn new(beta: Vec<F>, gamma: Vec<F>) -> Result<Self> {
        if gamma.len() != GAMMA_DIM {
            return Err(Error::DimensionMismatch(format!(
                "gamma must have {GAMMA_DIM} entries, got {}",
                gamma.len()
            )));
        }
        if beta.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: "condition embedding".into() });
        }
        Ok(ConditionEmbedding { beta, gamma })
    }

    pub fn concat(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(self.beta.len() + GAMMA_DIM);
        v.extend_from_slice(&self.beta);
        v.extend_from_slice(&self.gamma);
        v
    }
}

/// Per-level modulation head: a two-layer perceptron of (beta ++ gamma)
/// emitting one (scale, bias) pair per feature channel.
pub type ModulationNet<F> = Mlp<F>;

/// Forward cache of one level's modulation: the MLP activations plus the
/// realized (s, b) pairs.
#[derive(Debug, Clone)]
pub struct ModCache<F> {
    pub mlp: MlpCache<F>,
    /// First `channels` entries are s, the rest are b.
    pub sb: Vec<F>,
}

/// `features' = (1 + s_c) * features + b_c`, per channel.
pub fn modulate<F: Real>(
    level: &TriPlaneLevel<F>,
    net: &ModulationNet<F>,
    cond: &ConditionEmbedding<F>,
) -> Result<(TriPlaneLevel<F>, ModCache<F>)> {
    let channels = level.channels();
    if net.out_dim() != 2 * channels {
        return Err(Error::DimensionMismatch(format!(
            "modulation net emits {} values, level needs {}",
            net.out_dim(),
            2 * channels
        )));
    }
    let input = cond.concat();
    if net.in_dim() != input.len() {
        return Err(Error::DimensionMismatch(format!(
            "modulation net takes {} inputs, condition has {}",
            net.in_dim(),
            input.len()
        )));
    }
    let mut cache = MlpCache::new();
    net.forward(&input, &mut cache);
    let sb = net.output(&cache).to_vec();
    let mut out = level.clone();
    for plane in out.planes.iter_mut() {
        for texel in plane.data.chunks_exact_mut(channels) {
            for ch in 0..channels {
                texel[ch] = (F::one() + sb[ch]) * texel[ch] + sb[channels + ch];
            }
        }
    }
    Ok((out, ModCache { mlp: cache, sb }))
}

/// Backward of [`modulate`]: given the gradient at the modulated planes,
/// accumulate gradients for the base planes, the net, and the condition.
#[allow(clippy::too_many_arguments)]
pub fn modulate_backward<F: Real>(
    base: &TriPlaneLevel<F>,
    net: &ModulationNet<F>,
    cache: &ModCache<F>,
    d_modulated: &PlaneSetGrads<F>,
    d_base: &mut PlaneSetGrads<F>,
    d_net: &mut MlpGrads<F>,
    d_beta: &mut [F],
    d_gamma: &mut [F],
) {
    let channels = base.channels();
    let mut d_sb = vec![F::zero(); 2 * channels];
    for (k, plane) in base.planes.iter().enumerate() {
        let dm = &d_modulated.planes[k];
        let db = &mut d_base.planes[k];
        for ((texel, d_texel), db_texel) in plane
            .data
            .chunks_exact(channels)
            .zip(dm.chunks_exact(channels))
            .zip(db.chunks_exact_mut(channels))
        {
            for ch in 0..channels {
                let g = d_texel[ch];
                db_texel[ch] += (F::one() + cache.sb[ch]) * g;
                d_sb[ch] += g * texel[ch];
                d_sb[channels + ch] += g;
            }
        }
    }
    let mut scratch = MlpCache::new();
    let mut d_in = vec![F::zero(); net.in_dim()];
    net.backward(&cache.mlp, &d_sb, d_net, &mut scratch, &mut d_in);
    let n_beta = d_beta.len();
    for (g, v) in d_beta.iter_mut().zip(&d_in[..n_beta]) {
        *g += *v;
    }
    for (g, v) in d_gamma.iter_mut().zip(&d_in[n_beta..]) {
        *g += *v;
    }
}

/// Gradient buffers shaped like one level's three planes.
#[derive(Debug, Clone)]
pub struct PlaneSetGrads<F> {
    pub planes: [Vec<F>; 3],
}

impl<F: Real> PlaneSetGrads<F> {
    pub fn zeros_like(level: &TriPlaneLevel<F>) -> Self {
        PlaneSetGrads {
            planes: [
                vec![F::zero(); level.planes[0].data.len()],
                vec![F::zero(); level.planes[1].data.len()],
                vec![F::zero(); level.planes[2].data.len()],
            ],
        }
    }

    pub fn accumulate(&mut self, other: &PlaneSetGrads<F>) {
        for (a, b) in self.planes.iter_mut().zip(&other.planes) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}

/// The cascaded multi-scale field: one to three levels, coarse to fine, with
/// per-connection lateral gains and per-level modulation heads.
#[derive(Debug, Clone)]
pub struct TriPlanePyramid<F> {
    pub levels: Vec<TriPlaneLevel<F>>,
    /// `gains[i]` scales the upsampled realization of level `i` added into
    /// level `i + 1`.
    pub gains: Vec<F>,
    pub mod_nets: Vec<ModulationNet<F>>,
}

impl<F: Real> TriPlanePyramid<F> {
    pub fn new(levels: Vec<TriPlaneLevel<F>>, gains: Vec<F>, mod_nets: Vec<ModulationNet<F>>) -> Result<Self> {
        if levels.is_empty() || levels.len() > 3 {
            return Err(Error::config(format!("pyramid needs 1..=3 levels, got {}", levels.len())));
        }
        if gains.len() != levels.len() - 1 {
            return Err(Error::config("pyramid needs one lateral gain per connection"));
        }
        if mod_nets.len() != levels.len() {
            return Err(Error::config("pyramid needs one modulation net per level"));
        }
        for w in levels.windows(2) {
            if w[1].res() < w[0].res() {
                return Err(Error::config("level resolutions must be nondecreasing coarse to fine"));
            }
            if w[1].channels() != w[0].channels() || w[1].extent() != w[0].extent() {
                return Err(Error::config("pyramid levels must share channels and extent"));
            }
        }
        for l in &levels {
            l.validate()?;
        }
        Ok(TriPlanePyramid { levels, gains, mod_nets })
    }

    /// Randomly initialized pyramid. Plane features start small and uniform,
    /// modulation heads start as the identity (zeroed output layer), lateral
    /// gains start at 1.
    pub fn init(
        seed: u64,
        scales: &[ScaleTag],
        resolutions: &[usize],
        channels: usize,
        extent: Extent<F>,
        n_exp: usize,
        mod_hidden: usize,
    ) -> Result<Self> {
        if scales.len() != resolutions.len() {
            return Err(Error::config("one resolution per pyramid level is required"));
        }
        let mut levels = Vec::new();
        let mut mod_nets = Vec::new();
        for (li, (&scale, &res)) in scales.iter().zip(resolutions).enumerate() {
            let mut level = TriPlaneLevel::zeros(scale, res, channels, extent)?;
            for (pi, plane) in level.planes.iter_mut().enumerate() {
                let mut rng = stream_rng(seed, Stream::Init((li * 3 + pi) as u64));
                for v in plane.data.iter_mut() {
                    *v = F::c(rng.gen_range(-0.05..0.05));
                }
            }
            levels.push(level);
            let mut rng = stream_rng(seed, Stream::Init(100 + li as u64));
            mod_nets.push(Mlp::init_uniform(
                &[n_exp + GAMMA_DIM, mod_hidden, 2 * channels],
                &mut rng,
                true,
            ));
        }
        let gains = vec![F::one(); levels.len() - 1];
        TriPlanePyramid::new(levels, gains, mod_nets)
    }

    pub fn channels(&self) -> usize {
        self.levels[0].channels()
    }

    pub fn n_exp(&self) -> usize {
        self.mod_nets[0].in_dim() - GAMMA_DIM
    }

    /// Level index rendered by `scale`, if this pyramid is deep enough.
    pub fn level_for_scale(&self, scale: ScaleTag) -> Result<usize> {
        let idx = scale.level_index();
        if idx >= self.levels.len() {
            return Err(Error::config(format!(
                "scale {} has no level in a depth-{} pyramid",
                scale.size(),
                self.levels.len()
            )));
        }
        Ok(idx)
    }

    /// Finest level present.
    pub fn finest_scale(&self) -> ScaleTag {
        self.levels.last().unwrap().scale
    }
}

/// Snapshot of the condition-realized pyramid plus everything the backward
/// pass needs. Realized levels are immutable; sampling them is pure.
#[derive(Debug, Clone)]
pub struct RealizedPyramid<F> {
    pub levels: Vec<TriPlaneLevel<F>>,
    pub mod_caches: Vec<ModCache<F>>,
    pub cond: ConditionEmbedding<F>,
}

impl<F: Real> RealizedPyramid<F> {
    pub fn level_for_scale(&self, scale: ScaleTag) -> Result<&TriPlaneLevel<F>> {
        let idx = scale.level_index();
        self.levels.get(idx).ok_or_else(|| {
            Error::config(format!(
                "scale {} has no realized level (depth {})",
                scale.size(),
                self.levels.len()
            ))
        })
    }
}

/// Realize every level: modulate, then add the gain-scaled bilinear upsample
/// of the previous realized level.
pub fn realize_pyramid<F: Real>(
    pyr: &TriPlanePyramid<F>,
    cond: &ConditionEmbedding<F>,
) -> Result<RealizedPyramid<F>> {
    let mut levels: Vec<TriPlaneLevel<F>> = Vec::with_capacity(pyr.levels.len());
    let mut mod_caches = Vec::with_capacity(pyr.levels.len());
    for (i, level) in pyr.levels.iter().enumerate() {
        let (mut realized, cache) = modulate(level, &pyr.mod_nets[i], cond)?;
        if i > 0 {
            let src = &levels[i - 1];
            check_upsample_compatible(src.res(), realized.res())?;
            let gain = pyr.gains[i - 1];
            for (dst_plane, src_plane) in realized.planes.iter_mut().zip(&src.planes) {
                upsample_bilinear_accum(src_plane, gain, dst_plane);
            }
        }
        levels.push(realized);
        mod_caches.push(cache);
    }
    Ok(RealizedPyramid { levels, mod_caches, cond: cond.clone() })
}

fn check_upsample_compatible(coarse: usize, fine: usize) -> Result<()> {
    if fine % coarse != 0 {
        return Err(Error::config(format!(
            "finer resolution {fine} is not an integer multiple of coarser {coarse}"
        )));
    }
    Ok(())
}

/// Continuous source coordinate of destination texel `i` when resampling
/// `src_res` to `dst_res` with matched texel-center conventions.
#[inline]
fn resample_coord<F: Real>(i: usize, src_res: usize, dst_res: usize) -> F {
    (F::from_usize(i) + F::c(0.5)) * F::from_usize(src_res) / F::from_usize(dst_res) - F::c(0.5)
}

/// `dst += gain * upsample(src)`, 2D bilinear with border clamp.
pub fn upsample_bilinear_accum<F: Real>(src: &FeaturePlane<F>, gain: F, dst: &mut FeaturePlane<F>) {
    let (sres, dres, ch) = (src.res, dst.res, src.channels);
    debug_assert_eq!(ch, dst.channels);
    let last = sres - 1;
    let split = |t: F| -> (usize, usize, F) {
        let f = t.floor();
        let a = t - f;
        let i0 = f.to_f64().clamp(0.0, last as f64) as usize;
        let i1 = (f + F::one()).to_f64().clamp(0.0, last as f64) as usize;
        (i0, i1, a)
    };
    for dr in 0..dres {
        let (r0, r1, ar) = split(resample_coord(dr, sres, dres));
        for dc in 0..dres {
            let (c0, c1, ac) = split(resample_coord(dc, sres, dres));
            let t00 = src.texel(r0, c0);
            let t01 = src.texel(r0, c1);
            let t10 = src.texel(r1, c0);
            let t11 = src.texel(r1, c1);
            let out = &mut dst.data[(dr * dres + dc) * ch..(dr * dres + dc + 1) * ch];
            let (br, bc) = (F::one() - ar, F::one() - ac);
            let (w00, w01, w10, w11) = (bc * br, ac * br, bc * ar, ac * ar);
            for k in 0..ch {
                out[k] += gain * (w00 * t00[k] + w01 * t01[k] + w10 * t10[k] + w11 * t11[k]);
            }
        }
    }
}

/// Adjoint of [`upsample_bilinear_accum`] with respect to the source plane:
/// scatters `gain * d_dst` through the same bilinear weights.
pub fn upsample_bilinear_adjoint<F: Real>(
    d_dst: &[F],
    dst_res: usize,
    src: &FeaturePlane<F>,
    gain: F,
    d_src: &mut [F],
) {
    let (sres, ch) = (src.res, src.channels);
    let last = sres - 1;
    let split = |t: F| -> (usize, usize, F) {
        let f = t.floor();
        let a = t - f;
        let i0 = f.to_f64().clamp(0.0, last as f64) as usize;
        let i1 = (f + F::one()).to_f64().clamp(0.0, last as f64) as usize;
        (i0, i1, a)
    };
    for dr in 0..dst_res {
        let (r0, r1, ar) = split(resample_coord(dr, sres, dst_res));
        for dc in 0..dst_res {
            let (c0, c1, ac) = split(resample_coord(dc, sres, dst_res));
            let g = &d_dst[(dr * dst_res + dc) * ch..(dr * dst_res + dc + 1) * ch];
            let (br, bc) = (F::one() - ar, F::one() - ac);
            let at = |r: usize, c: usize| (r * sres + c) * ch;
            let (a00, a01, a10, a11) = (at(r0, c0), at(r0, c1), at(r1, c0), at(r1, c1));
            let (w00, w01, w10, w11) = (bc * br, ac * br, bc * ar, ac * ar);
            for k in 0..ch {
                let gv = gain * g[k];
                d_src[a00 + k] += w00 * gv;
                d_src[a01 + k] += w01 * gv;
                d_src[a10 + k] += w10 * gv;
                d_src[a11 + k] += w11 * gv;
            }
        }
    }
}

/// Gradients for every learnable in the pyramid plus the condition inputs.
#[derive(Debug, Clone)]
pub struct PyramidGrads<F> {
    pub planes: Vec<PlaneSetGrads<F>>,
    pub gains: Vec<F>,
    pub mod_nets: Vec<MlpGrads<F>>,
    pub beta: Vec<F>,
    pub gamma: Vec<F>,
}

impl<F: Real> PyramidGrads<F> {
    pub fn zeros_like(pyr: &TriPlanePyramid<F>) -> Self {
        PyramidGrads {
            planes: pyr.levels.iter().map(PlaneSetGrads::zeros_like).collect(),
            gains: vec![F::zero(); pyr.gains.len()],
            mod_nets: pyr.mod_nets.iter().map(MlpGrads::zeros_like).collect(),
            beta: vec![F::zero(); pyr.n_exp()],
            gamma: vec![F::zero(); GAMMA_DIM],
        }
    }
}

/// Backward of [`realize_pyramid`]: takes per-level gradients accumulated at
/// the realized planes (None for levels never sampled) and produces gradients
/// for base planes, lateral gains, modulation nets, and the condition.
pub fn realize_backward<F: Real>(
    pyr: &TriPlanePyramid<F>,
    realized: &RealizedPyramid<F>,
    mut d_realized: Vec<Option<PlaneSetGrads<F>>>,
    out: &mut PyramidGrads<F>,
) {
    let n = pyr.levels.len();
    debug_assert_eq!(d_realized.len(), n);
    for i in (0..n).rev() {
        let Some(d_level) = d_realized[i].take() else { continue };
        if i > 0 {
            // Lateral connection: realized_i += gain * up(realized_{i-1}).
            let src = &realized.levels[i - 1];
            let gain = pyr.gains[i - 1];
            let dst_res = realized.levels[i].res();
            // d_gain = <d_level, up(realized_{i-1})>, via a unit-gain upsample.
            let mut up = TriPlaneLevel::zeros(
                src.scale,
                dst_res,
                src.channels(),
                src.extent(),
            )
            .expect("validated resolutions");
            let mut d_prev = d_realized[i - 1]
                .take()
                .unwrap_or_else(|| PlaneSetGrads::zeros_like(&realized.levels[i - 1]));
            for k in 0..3 {
                upsample_bilinear_accum(&src.planes[k], F::one(), &mut up.planes[k]);
                out.gains[i - 1] += d_level.planes[k]
                    .iter()
                    .zip(&up.planes[k].data)
                    .map(|(g, u)| *g * *u)
                    .sum::<F>();
                upsample_bilinear_adjoint(
                    &d_level.planes[k],
                    dst_res,
                    &src.planes[k],
                    gain,
                    &mut d_prev.planes[k],
                );
            }
            d_realized[i - 1] = Some(d_prev);
        }
        modulate_backward(
            &pyr.levels[i],
            &pyr.mod_nets[i],
            &realized.mod_caches[i],
            &d_level,
            &mut out.planes[i],
            &mut out.mod_nets[i],
            &mut out.beta,
            &mut out.gamma,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_level(res: usize, channels: usize) -> TriPlaneLevel<f64> {
        TriPlaneLevel::zeros(ScaleTag::S128, res, channels, Extent::symmetric(1.0)).unwrap()
    }

    fn fill_random(level: &mut TriPlaneLevel<f64>, seed: u64) {
        for (pi, plane) in level.planes.iter_mut().enumerate() {
            let mut rng = stream_rng(seed, Stream::Init(pi as u64));
            for v in plane.data.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
    }

    fn test_cond(n_exp: usize, seed: u64) -> ConditionEmbedding<f64> {
        let mut rng = stream_rng(seed, Stream::Probe(77));
        ConditionEmbedding::new(
            (0..n_exp).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            (0..GAMMA_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_planes_sample_to_three_v_everywhere() {
        let mut level = small_level(8, 4);
        for plane in level.planes.iter_mut() {
            plane.data.iter_mut().for_each(|v| *v = 0.25);
        }
        for p in [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.93, -0.21, 0.5),
            Vec3::new(5.0, -9.0, 2.0), // out of extent: clamps to border
        ] {
            let out = level.sample(p);
            for v in out {
                assert!((v - 0.75).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn texel_center_sample_is_exact() {
        let mut level = small_level(4, 2);
        fill_random(&mut level, 9);
        // Texel centers along each axis sit at extent positions
        // min + (i + 0.5)/res * span. Choose x,y,z on centers.
        let coord = |i: usize| -1.0 + (i as f64 + 0.5) / 4.0 * 2.0;
        let (ix, iy, iz) = (1usize, 2usize, 3usize);
        let p = Vec3::new(coord(ix), coord(iy), coord(iz));
        let out = level.sample(p);
        // xy plane reads (col=x_idx, row=y_idx); xz reads (x, z); yz reads (y, z).
        let expect: Vec<f64> = (0..2)
            .map(|ch| {
                level.planes[0].texel(iy, ix)[ch]
                    + level.planes[1].texel(iz, ix)[ch]
                    + level.planes[2].texel(iz, iy)[ch]
            })
            .collect();
        for (o, e) in out.iter().zip(&expect) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn cell_midpoint_is_quarter_average() {
        let mut level = small_level(4, 1);
        fill_random(&mut level, 10);
        // Midpoint between texels i and i+1 along every axis.
        let coord = |i: usize| -1.0 + (i as f64 + 1.0) / 4.0 * 2.0;
        let (ix, iy, iz) = (0usize, 1usize, 2usize);
        let p = Vec3::new(coord(ix), coord(iy), coord(iz));
        let quad = |pl: &FeaturePlane<f64>, r: usize, c: usize| {
            0.25 * (pl.texel(r, c)[0] + pl.texel(r, c + 1)[0] + pl.texel(r + 1, c)[0] + pl.texel(r + 1, c + 1)[0])
        };
        let expect = quad(&level.planes[0], iy, ix) + quad(&level.planes[1], iz, ix) + quad(&level.planes[2], iz, iy);
        let out = level.sample(p)[0];
        assert!((out - expect).abs() < 1e-14);
    }

    #[test]
    fn sampling_is_piecewise_affine_along_axes() {
        let mut level = small_level(8, 3);
        fill_random(&mut level, 11);
        // Three collinear points inside one texel cell: the midpoint value
        // must be the average of the endpoints on every channel.
        let base = Vec3::new(0.07, -0.33, 0.41);
        for axis in 0..3 {
            let mut a = base;
            let mut b = base;
            let eps = 0.02; // stays inside one cell (cell span = 0.25)
            match axis {
                0 => {
                    a.x -= eps;
                    b.x += eps;
                }
                1 => {
                    a.y -= eps;
                    b.y += eps;
                }
                _ => {
                    a.z -= eps;
                    b.z += eps;
                }
            }
            let fa = level.sample(a);
            let fb = level.sample(b);
            let fm = level.sample(base);
            for ch in 0..3 {
                assert!((fm[ch] - 0.5 * (fa[ch] + fb[ch])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn sample_gradient_touches_at_most_four_texels_per_plane() {
        let mut level = small_level(8, 2);
        fill_random(&mut level, 12);
        let p = Vec3::new(0.31, -0.44, 0.12);
        let mut out = vec![0.0; 2];
        let looks = level.sample_into(p, &mut out);
        let mut grads = PlaneSetGrads::zeros_like(&level);
        let d_out = vec![1.0, -2.0];
        for (k, plane) in level.planes.iter().enumerate() {
            plane.scatter_grad(&looks[k], &d_out, &mut grads.planes[k]);
        }
        for (k, plane) in level.planes.iter().enumerate() {
            for ch in 0..2 {
                let nonzero = grads.planes[k]
                    .iter()
                    .skip(ch)
                    .step_by(2)
                    .filter(|v| **v != 0.0)
                    .count();
                assert!(nonzero <= 4, "plane {k} ch {ch}: {nonzero} nonzero texels");
            }
            let _ = plane;
        }
    }

    #[test]
    fn plane_sum_is_permutation_invariant() {
        let mut level = small_level(6, 1);
        fill_random(&mut level, 13);
        let p = Vec3::new(0.2, 0.5, -0.7);
        let mut parts = [0.0; 3];
        for (k, plane) in level.planes.iter().enumerate() {
            let (u, v) = plane.axis.project(p);
            let look = plane.lookup(u, v);
            let mut acc = [0.0];
            plane.sample_accum(&look, &mut acc);
            parts[k] = acc[0];
        }
        let reference = level.sample(p)[0];
        let orders = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for ord in orders {
            let sum = parts[ord[0]] + parts[ord[1]] + parts[ord[2]];
            assert!((sum - reference).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_modulation_net_is_identity() {
        let mut level = small_level(5, 3);
        fill_random(&mut level, 14);
        let net = Mlp::zeros(&[2 + GAMMA_DIM, 4, 6]);
        let cond = test_cond(2, 15);
        let (realized, cache) = modulate(&level, &net, &cond).unwrap();
        assert_eq!(realized, level);
        assert!(cache.sb.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forced_negative_unit_scale_zeroes_features() {
        let mut level = small_level(5, 3);
        fill_random(&mut level, 16);
        let mut net = Mlp::zeros(&[2 + GAMMA_DIM, 4, 6]);
        // Output biases: s = -1 for every channel, b = 0.
        for ch in 0..3 {
            net.biases[1][ch] = -1.0;
        }
        let cond = test_cond(2, 17);
        let (realized, _) = modulate(&level, &net, &cond).unwrap();
        for plane in &realized.planes {
            assert!(plane.data.iter().all(|v| *v == 0.0));
        }
    }

    fn tiny_pyramid(seed: u64, depth: usize) -> TriPlanePyramid<f64> {
        let scales = &ScaleTag::ALL[..depth];
        let res: Vec<usize> = [4usize, 8, 16][..depth].to_vec();
        let mut pyr =
            TriPlanePyramid::init(seed, scales, &res, 3, Extent::symmetric(1.0), 2, 4).unwrap();
        // Give the zero-initialized modulation output layers some weight so
        // gradients flow in tests.
        for net in pyr.mod_nets.iter_mut() {
            let mut rng = stream_rng(seed ^ 0xabc, Stream::Probe(50));
            for v in net.weights[1].iter_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
            for v in net.biases[1].iter_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        pyr
    }

    #[test]
    fn zero_gains_make_levels_independent() {
        let mut pyr = tiny_pyramid(18, 3);
        pyr.gains = vec![0.0, 0.0];
        let cond = test_cond(2, 19);
        let realized = realize_pyramid(&pyr, &cond).unwrap();
        for (i, level) in pyr.levels.iter().enumerate() {
            let (alone, _) = modulate(level, &pyr.mod_nets[i], &cond).unwrap();
            assert_eq!(realized.levels[i], alone);
        }
    }

    #[test]
    fn lateral_connection_matches_naive_upsample_oracle() {
        let mut pyr = tiny_pyramid(20, 2);
        // Zero the fine level's parameters and make its modulation the
        // identity so the realized fine level is exactly up(coarse).
        for plane in pyr.levels[1].planes.iter_mut() {
            plane.data.iter_mut().for_each(|v| *v = 0.0);
        }
        pyr.mod_nets[1] = Mlp::zeros(&[2 + GAMMA_DIM, 4, 6]);
        pyr.gains = vec![1.0];
        let cond = test_cond(2, 21);
        let realized = realize_pyramid(&pyr, &cond).unwrap();
        let coarse = &realized.levels[0];
        let fine = &realized.levels[1];
        // Naive oracle: per fine texel, recompute the bilinear interpolation
        // from first principles.
        let (sres, dres, ch) = (coarse.res(), fine.res(), 3usize);
        for k in 0..3 {
            let src = &coarse.planes[k];
            for dr in 0..dres {
                for dc in 0..dres {
                    let tr = (dr as f64 + 0.5) * sres as f64 / dres as f64 - 0.5;
                    let tc = (dc as f64 + 0.5) * sres as f64 / dres as f64 - 0.5;
                    let (r0, c0) = (tr.floor(), tc.floor());
                    let (ar, ac) = (tr - r0, tc - c0);
                    let cl = |v: f64| (v.clamp(0.0, (sres - 1) as f64)) as usize;
                    for c in 0..ch {
                        let val = (1.0 - ar) * (1.0 - ac) * src.texel(cl(r0), cl(c0))[c]
                            + (1.0 - ar) * ac * src.texel(cl(r0), cl(c0 + 1.0))[c]
                            + ar * (1.0 - ac) * src.texel(cl(r0 + 1.0), cl(c0))[c]
                            + ar * ac * src.texel(cl(r0 + 1.0), cl(c0 + 1.0))[c];
                        let got = fine.planes[k].texel(dr, dc)[c];
                        assert!((got - val).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn incompatible_resolutions_are_rejected_at_realize() {
        let levels = vec![
            small_level(5, 3),
            {
                let mut l = TriPlaneLevel::zeros(ScaleTag::S256, 8, 3, Extent::symmetric(1.0)).unwrap();
                l.scale = ScaleTag::S256;
                l
            },
        ];
        let nets = vec![Mlp::zeros(&[2 + GAMMA_DIM, 4, 6]), Mlp::zeros(&[2 + GAMMA_DIM, 4, 6])];
        let pyr = TriPlanePyramid::new(levels, vec![1.0], nets).unwrap();
        let cond = test_cond(2, 23);
        assert!(realize_pyramid(&pyr, &cond).is_err());
    }

    /// Scalar probe loss: weighted sum of realized-level samples at a few
    /// fixed points. Exercises modulation, laterals, and sampling.
    fn pyramid_probe_loss(pyr: &TriPlanePyramid<f64>, cond: &ConditionEmbedding<f64>) -> f64 {
        let realized = realize_pyramid(pyr, cond).unwrap();
        let points = [
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(-0.7, 0.5, 0.0),
            Vec3::new(0.45, 0.45, -0.6),
        ];
        let mut loss = 0.0;
        for (li, level) in realized.levels.iter().enumerate() {
            for (pi, p) in points.iter().enumerate() {
                let f = level.sample(*p);
                for (ch, v) in f.iter().enumerate() {
                    loss += v * ((li + 1) as f64 * 0.3 - pi as f64 * 0.1 + ch as f64 * 0.05);
                }
            }
        }
        loss
    }

    fn pyramid_probe_backward(
        pyr: &TriPlanePyramid<f64>,
        cond: &ConditionEmbedding<f64>,
    ) -> PyramidGrads<f64> {
        let realized = realize_pyramid(pyr, cond).unwrap();
        let points = [
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(-0.7, 0.5, 0.0),
            Vec3::new(0.45, 0.45, -0.6),
        ];
        let mut d_realized: Vec<Option<PlaneSetGrads<f64>>> = Vec::new();
        for (li, level) in realized.levels.iter().enumerate() {
            let mut d = PlaneSetGrads::zeros_like(level);
            let ch_n = level.channels();
            let mut out = vec![0.0; ch_n];
            for (pi, p) in points.iter().enumerate() {
                let looks = level.sample_into(*p, &mut out);
                let d_out: Vec<f64> = (0..ch_n)
                    .map(|ch| (li + 1) as f64 * 0.3 - pi as f64 * 0.1 + ch as f64 * 0.05)
                    .collect();
                for (k, plane) in level.planes.iter().enumerate() {
                    plane.scatter_grad(&looks[k], &d_out, &mut d.planes[k]);
                }
            }
            d_realized.push(Some(d));
        }
        let mut grads = PyramidGrads::zeros_like(pyr);
        realize_backward(pyr, &realized, d_realized, &mut grads);
        grads
    }

    #[test]
    fn realize_backward_matches_finite_differences() {
        let pyr = tiny_pyramid(24, 3);
        let cond = test_cond(2, 25);
        let grads = pyramid_probe_backward(&pyr, &cond);
        let h = 1e-6;
        let check = |an: f64, fd: f64, what: &str| {
            let tol = 1e-7 + 1e-5 * an.abs().max(fd.abs());
            assert!((an - fd).abs() <= tol, "{what}: analytic {an} vs fd {fd}");
        };

        // Plane data probes.
        for li in 0..3 {
            for pi in 0..3 {
                let len = pyr.levels[li].planes[pi].data.len();
                for idx in (0..len).step_by(len / 7 + 1) {
                    let mut plus = pyr.clone();
                    plus.levels[li].planes[pi].data[idx] += h;
                    let mut minus = pyr.clone();
                    minus.levels[li].planes[pi].data[idx] -= h;
                    let fd = (pyramid_probe_loss(&plus, &cond) - pyramid_probe_loss(&minus, &cond)) / (2.0 * h);
                    check(grads.planes[li].planes[pi][idx], fd, &format!("plane[{li}][{pi}][{idx}]"));
                }
            }
        }
        // Gains.
        for gi in 0..2 {
            let mut plus = pyr.clone();
            plus.gains[gi] += h;
            let mut minus = pyr.clone();
            minus.gains[gi] -= h;
            let fd = (pyramid_probe_loss(&plus, &cond) - pyramid_probe_loss(&minus, &cond)) / (2.0 * h);
            check(grads.gains[gi], fd, &format!("gain[{gi}]"));
        }
        // Modulation net weights.
        for li in 0..3 {
            for layer in 0..2 {
                let len = pyr.mod_nets[li].weights[layer].len();
                for idx in (0..len).step_by(len / 5 + 1) {
                    let mut plus = pyr.clone();
                    plus.mod_nets[li].weights[layer][idx] += h;
                    let mut minus = pyr.clone();
                    minus.mod_nets[li].weights[layer][idx] -= h;
                    let fd =
                        (pyramid_probe_loss(&plus, &cond) - pyramid_probe_loss(&minus, &cond)) / (2.0 * h);
                    check(grads.mod_nets[li].dw[layer][idx], fd, &format!("mod[{li}].w{layer}[{idx}]"));
                }
            }
        }
        // Condition: beta and gamma.
        for bi in 0..2 {
            let mut plus = cond.clone();
            plus.beta[bi] += h;
            let mut minus = cond.clone();
            minus.beta[bi] -= h;
            let fd = (pyramid_probe_loss(&pyr, &plus) - pyramid_probe_loss(&pyr, &minus)) / (2.0 * h);
            check(grads.beta[bi], fd, &format!("beta[{bi}]"));
        }
        for gi in (0..GAMMA_DIM).step_by(5) {
            let mut plus = cond.clone();
            plus.gamma[gi] += h;
            let mut minus = cond.clone();
            minus.gamma[gi] -= h;
            let fd = (pyramid_probe_loss(&pyr, &plus) - pyramid_probe_loss(&pyr, &minus)) / (2.0 * h);
            check(grads.gamma[gi], fd, &format!("gamma[{gi}]"));
        }
    }

    #[test]
    fn zero_gains_give_zero_cross_gradients() {
        let mut pyr = tiny_pyramid(26, 3);
        pyr.gains = vec![0.0, 0.0];
        let cond = test_cond(2, 27);
        // Loss that only samples the finest level.
        let realized = realize_pyramid(&pyr, &cond).unwrap();
        let level = &realized.levels[2];
        let mut d = PlaneSetGrads::zeros_like(level);
        let mut out = vec![0.0; 3];
        let looks = level.sample_into(Vec3::new(0.2, 0.1, -0.3), &mut out);
        for (k, plane) in level.planes.iter().enumerate() {
            plane.scatter_grad(&looks[k], &[1.0, 1.0, 1.0], &mut d.planes[k]);
        }
        let mut grads = PyramidGrads::zeros_like(&pyr);
        realize_backward(&pyr, &realized, vec![None, None, Some(d)], &mut grads);
        // Coarser levels' parameters receive exactly zero gradient.
        for li in 0..2 {
            for pi in 0..3 {
                assert!(grads.planes[li].planes[pi].iter().all(|v| *v == 0.0));
            }
            for layer in &grads.mod_nets[li].dw {
                assert!(layer.iter().all(|v| *v == 0.0));
            }
        }
        // The finest level still gets gradients.
        assert!(grads.planes[2].planes.iter().any(|p| p.iter().any(|v| *v != 0.0)));
    }
}
