//! The full learnable state: pyramid planes, lateral gains, modulation
//! heads, the shared decoder, and the per-frame latent table, with a flat
//! parameter registry in a fixed, deterministic iteration order.

use crate::camera::ScaleTag;
use crate::error::{Error, Result};
use crate::mlp::MlpGrads;
use crate::real::Real;
use crate::render::DecoderMlp;
use crate::rng::{stream_rng, Stream};
use crate::triplane::{
    ConditionEmbedding, Extent, PyramidGrads, TriPlanePyramid, GAMMA_DIM,
};

/// Shape hyperparameters needed to build (or validate) a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub depth: usize,
    pub plane_res: Vec<usize>,
    pub feat_channels: usize,
    pub extent_half: f64,
    pub n_exp: usize,
    pub mod_hidden: usize,
    pub decoder_hidden: usize,
    pub n_frames: usize,
}

impl ModelShape {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.depth) {
            return Err(Error::config(format!("pyramid depth must be 1..=3, got {}", self.depth)));
        }
        if self.plane_res.len() != self.depth {
            return Err(Error::config(format!(
                "need {} plane resolutions for depth {}, got {}",
                self.depth,
                self.depth,
                self.plane_res.len()
            )));
        }
        if self.extent_half <= 0.0 {
            return Err(Error::config("plane extent must be positive"));
        }
        if self.n_frames == 0 {
            return Err(Error::config("model needs at least one frame slot"));
        }
        Ok(())
    }

    pub fn scales(&self) -> &'static [ScaleTag] {
        &ScaleTag::ALL[..self.depth]
    }
}

#[derive(Debug, Clone)]
pub struct Model<F> {
    pub pyramid: TriPlanePyramid<F>,
    pub decoder: DecoderMlp<F>,
    /// Per-frame latent codes, row-major (frame, GAMMA_DIM). Initialized to
    /// zero; held-out frames keep gamma = 0 at evaluation time.
    pub gamma_table: Vec<F>,
    pub n_frames: usize,
}

impl<F: Real> Model<F> {
    pub fn init(seed: u64, shape: &ModelShape) -> Result<Self> {
        shape.validate()?;
        let pyramid = TriPlanePyramid::init(
            seed,
            shape.scales(),
            &shape.plane_res,
            shape.feat_channels,
            Extent::symmetric(F::c(shape.extent_half)),
            shape.n_exp,
            shape.mod_hidden,
        )?;
        let mut rng = stream_rng(seed, Stream::Init(200));
        let decoder = DecoderMlp::init(shape.feat_channels, shape.decoder_hidden, &mut rng);
        Ok(Model {
            pyramid,
            decoder,
            gamma_table: vec![F::zero(); shape.n_frames * GAMMA_DIM],
            n_frames: shape.n_frames,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            depth: self.pyramid.levels.len(),
            plane_res: self.pyramid.levels.iter().map(|l| l.res()).collect(),
            feat_channels: self.pyramid.channels(),
            extent_half: self.pyramid.levels[0].extent().max.to_f64(),
            n_exp: self.pyramid.n_exp(),
            mod_hidden: self.pyramid.mod_nets[0].dims[1],
            decoder_hidden: self.decoder.mlp.dims[1],
            n_frames: self.n_frames,
        }
    }

    pub fn gamma_row(&self, frame: usize) -> &[F] {
        &self.gamma_table[frame * GAMMA_DIM..(frame + 1) * GAMMA_DIM]
    }

    /// Condition for a frame: its beta plus either the frame's latent row or
    /// zeros (held-out evaluation policy).
    pub fn condition(&self, beta: &[F], gamma_frame: Option<usize>) -> Result<ConditionEmbedding<F>> {
        let gamma = match gamma_frame {
            Some(frame) if frame < self.n_frames => self.gamma_row(frame).to_vec(),
            Some(frame) => {
                return Err(Error::IndexOutOfRange(format!(
                    "gamma row {frame} out of range ({} frames)",
                    self.n_frames
                )))
            }
            None => vec![F::zero(); GAMMA_DIM],
        };
        ConditionEmbedding::new(beta.to_vec(), gamma)
    }

    /// Visit every learnable array in registry order.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &[F])) {
        let scales: Vec<u32> = self.pyramid.levels.iter().map(|l| l.scale.size()).collect();
        for (li, level) in self.pyramid.levels.iter().enumerate() {
            for plane in &level.planes {
                f(&format!("plane.{}.{}", scales[li], plane.axis.name()), &plane.data);
            }
        }
        f("gains", &self.pyramid.gains);
        for (li, net) in self.pyramid.mod_nets.iter().enumerate() {
            for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
                f(&format!("mod.{}.w{l}", scales[li]), w);
                f(&format!("mod.{}.b{l}", scales[li]), b);
            }
        }
        for (l, (w, b)) in self.decoder.mlp.weights.iter().zip(&self.decoder.mlp.biases).enumerate() {
            f(&format!("decoder.w{l}"), w);
            f(&format!("decoder.b{l}"), b);
        }
        f("gamma", &self.gamma_table);
    }

    /// Mutable visit, same order as [`visit_params`].
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [F])) {
        let scales: Vec<u32> = self.pyramid.levels.iter().map(|l| l.scale.size()).collect();
        for (li, level) in self.pyramid.levels.iter_mut().enumerate() {
            for plane in level.planes.iter_mut() {
                f(&format!("plane.{}.{}", scales[li], plane.axis.name()), &mut plane.data);
            }
        }
        f("gains", &mut self.pyramid.gains);
        for (li, net) in self.pyramid.mod_nets.iter_mut().enumerate() {
            for (l, (w, b)) in net.weights.iter_mut().zip(net.biases.iter_mut()).enumerate() {
                f(&format!("mod.{}.w{l}", scales[li]), w);
                f(&format!("mod.{}.b{l}", scales[li]), b);
            }
        }
        for (l, (w, b)) in self
            .decoder
            .mlp
            .weights
            .iter_mut()
            .zip(self.decoder.mlp.biases.iter_mut())
            .enumerate()
        {
            f(&format!("decoder.w{l}"), w);
            f(&format!("decoder.b{l}"), b);
        }
        f("gamma", &mut self.gamma_table);
    }

    /// (name, length) of every registered array, in registry order.
    pub fn param_layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, data| out.push((name.to_string(), data.len())));
        out
    }

    pub fn validate_finite(&self) -> Result<()> {
        let mut bad = None;
        self.visit_params(&mut |name, data| {
            if bad.is_none() && data.iter().any(|v| !v.is_finite()) {
                bad = Some(name.to_string());
            }
        });
        match bad {
            Some(name) => Err(Error::NonFinite { context: format!("parameter '{name}'") }),
            None => Ok(()),
        }
    }
}

/// Gradients for every model parameter, mirroring the registry order.
#[derive(Debug, Clone)]
pub struct ModelGrads<F> {
    pub pyramid: PyramidGrads<F>,
    pub decoder: MlpGrads<F>,
    pub gamma_table: Vec<F>,
}

impl<F: Real> ModelGrads<F> {
    pub fn zeros_like(model: &Model<F>) -> Self {
        ModelGrads {
            pyramid: PyramidGrads::zeros_like(&model.pyramid),
            decoder: MlpGrads::zeros_like(&model.decoder.mlp),
            gamma_table: vec![F::zero(); model.gamma_table.len()],
        }
    }

    /// Visit every gradient array in the same order as
    /// [`Model::visit_params`]. `model` supplies the registry structure.
    pub fn visit(&self, model: &Model<F>, f: &mut dyn FnMut(&str, &[F])) {
        let scales: Vec<u32> = model.pyramid.levels.iter().map(|l| l.scale.size()).collect();
        for (li, level) in self.pyramid.planes.iter().enumerate() {
            for (pi, plane) in level.planes.iter().enumerate() {
                let axis = model.pyramid.levels[li].planes[pi].axis.name();
                f(&format!("plane.{}.{axis}", scales[li]), plane);
            }
        }
        f("gains", &self.pyramid.gains);
        for (li, net) in self.pyramid.mod_nets.iter().enumerate() {
            for (l, (w, b)) in net.dw.iter().zip(&net.db).enumerate() {
                f(&format!("mod.{}.w{l}", scales[li]), w);
                f(&format!("mod.{}.b{l}", scales[li]), b);
            }
        }
        for (l, (w, b)) in self.decoder.dw.iter().zip(&self.decoder.db).enumerate() {
            f(&format!("decoder.w{l}"), w);
            f(&format!("decoder.b{l}"), b);
        }
        f("gamma", &self.gamma_table);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            depth: 3,
            plane_res: vec![4, 8, 16],
            feat_channels: 4,
            extent_half: 1.0,
            n_exp: 2,
            mod_hidden: 4,
            decoder_hidden: 8,
            n_frames: 5,
        }
    }

    #[test]
    fn registry_orders_match_between_model_and_grads() {
        let model = Model::<f64>::init(3, &shape()).unwrap();
        let grads = ModelGrads::zeros_like(&model);
        let mut names_m = Vec::new();
        model.visit_params(&mut |n, d| names_m.push((n.to_string(), d.len())));
        let mut names_g = Vec::new();
        grads.visit(&model, &mut |n, d| names_g.push((n.to_string(), d.len())));
        assert_eq!(names_m, names_g);
        let mut names_mut = Vec::new();
        let mut model2 = model.clone();
        model2.visit_params_mut(&mut |n, d| names_mut.push((n.to_string(), d.len())));
        assert_eq!(names_m, names_mut);
        // Every array appears exactly once.
        let mut sorted = names_m.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names_m.len());
    }

    #[test]
    fn init_is_deterministic_and_gamma_starts_at_zero() {
        let a = Model::<f32>::init(9, &shape()).unwrap();
        let b = Model::<f32>::init(9, &shape()).unwrap();
        let mut va = Vec::new();
        a.visit_params(&mut |_, d| va.extend_from_slice(d));
        let mut vb = Vec::new();
        b.visit_params(&mut |_, d| vb.extend_from_slice(d));
        assert_eq!(va, vb);
        assert!(a.gamma_table.iter().all(|v| *v == 0.0));
        assert_eq!(a.gamma_table.len(), 5 * GAMMA_DIM);
    }

    #[test]
    fn shape_round_trips_through_the_model() {
        let s = shape();
        let model = Model::<f64>::init(4, &s).unwrap();
        assert_eq!(model.shape(), s);
    }

    #[test]
    fn condition_uses_zero_gamma_for_held_out() {
        let mut model = Model::<f64>::init(5, &shape()).unwrap();
        model.gamma_table[2 * GAMMA_DIM] = 0.7;
        let beta = vec![0.1, -0.2];
        let train = model.condition(&beta, Some(2)).unwrap();
        assert_eq!(train.gamma[0], 0.7);
        let held_out = model.condition(&beta, None).unwrap();
        assert!(held_out.gamma.iter().all(|v| *v == 0.0));
        assert!(model.condition(&beta, Some(99)).is_err());
    }
}
