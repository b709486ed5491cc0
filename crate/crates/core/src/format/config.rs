//! Scene description and run configuration files.

use std::path::{Path, PathBuf};

use super::kv::KvMap;
use crate::camera::{Intrinsics, CANVAS, CENTER_OFFSET, FULL_FRAME};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::model::ModelShape;
use crate::real::Real;
use crate::render::MarchConfig;
use crate::synth::{AnalyticScene, ColorMode, TrajectoryBounds};

/// Scene file: analytic scene, camera, marching interval, and trajectory
/// bounds. One text file defines everything the oracle needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub focal: f64,
    pub near: f64,
    pub far: f64,
    pub center: Vec3<f64>,
    pub semi_axes: Vec3<f64>,
    pub sigma0: f64,
    pub edge_softness: f64,
    pub color_mode: ColorMode,
    pub color_period: f64,
    pub color_amplitude: f64,
    pub bump_gain: f64,
    pub bump_width: f64,
    pub n_exp: usize,
    pub head_center: Vec3<f64>,
    pub translation_range: Vec3<f64>,
    pub rotation_range_deg: f64,
    pub beta_range: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            focal: 1024.0,
            near: 1.5,
            far: 3.0,
            center: Vec3::zero(),
            semi_axes: Vec3::new(0.55, 0.65, 0.5),
            sigma0: 8.0,
            edge_softness: 0.02,
            color_mode: ColorMode::Sinusoid,
            color_period: 0.017,
            color_amplitude: 0.35,
            bump_gain: 0.06,
            bump_width: 0.5,
            n_exp: 4,
            head_center: Vec3::new(0.0, 0.0, 2.2),
            translation_range: Vec3::new(0.1, 0.1, 0.06),
            rotation_range_deg: 7.0,
            beta_range: 1.0,
        }
    }
}

fn vec3_list(v: Vec3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn list_vec3(key: &str, kv: &KvMap) -> Result<Vec3<f64>> {
    let l: Vec<f64> = kv.parse_list(key)?;
    if l.len() != 3 {
        return Err(Error::config(format!("key '{key}' needs 3 components")));
    }
    Ok(Vec3::new(l[0], l[1], l[2]))
}

impl SceneConfig {
    pub fn serialize(&self) -> String {
        let mut kv = KvMap::new();
        kv.push("focal", self.focal);
        kv.push("near", self.near);
        kv.push("far", self.far);
        kv.push_list("center", &vec3_list(self.center));
        kv.push_list("semi_axes", &vec3_list(self.semi_axes));
        kv.push("sigma0", self.sigma0);
        kv.push("edge_softness", self.edge_softness);
        kv.push("color_mode", self.color_mode.name());
        kv.push("color_period", self.color_period);
        kv.push("color_amplitude", self.color_amplitude);
        kv.push("bump_gain", self.bump_gain);
        kv.push("bump_width", self.bump_width);
        kv.push("n_exp", self.n_exp);
        kv.push_list("head_center", &vec3_list(self.head_center));
        kv.push_list("translation_range", &vec3_list(self.translation_range));
        kv.push("rotation_range_deg", self.rotation_range_deg);
        kv.push("beta_range", self.beta_range);
        kv.serialize()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let cfg = SceneConfig {
            focal: kv.parse_value("focal")?,
            near: kv.parse_value("near")?,
            far: kv.parse_value("far")?,
            center: list_vec3("center", &kv)?,
            semi_axes: list_vec3("semi_axes", &kv)?,
            sigma0: kv.parse_value("sigma0")?,
            edge_softness: kv.parse_value("edge_softness")?,
            color_mode: ColorMode::from_name(kv.require("color_mode")?)?,
            color_period: kv.parse_value("color_period")?,
            color_amplitude: kv.parse_value("color_amplitude")?,
            bump_gain: kv.parse_value("bump_gain")?,
            bump_width: kv.parse_value("bump_width")?,
            n_exp: kv.parse_value("n_exp")?,
            head_center: list_vec3("head_center", &kv)?,
            translation_range: list_vec3("translation_range", &kv)?,
            rotation_range_deg: kv.parse_value("rotation_range_deg")?,
            beta_range: kv.parse_value("beta_range")?,
        };
        cfg.scene()?; // validates the analytic fields
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse { path: path.into(), msg },
            other => other,
        })
    }

    pub fn scene(&self) -> Result<AnalyticScene> {
        let scene = AnalyticScene {
            center: self.center,
            semi_axes: self.semi_axes,
            sigma0: self.sigma0,
            edge_softness: self.edge_softness,
            color_mode: self.color_mode,
            color_period: self.color_period,
            color_amplitude: self.color_amplitude,
            bump_gain: self.bump_gain,
            bump_width: self.bump_width,
            n_exp: self.n_exp,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn trajectory_bounds(&self) -> TrajectoryBounds {
        TrajectoryBounds {
            center: self.head_center,
            translation_range: self.translation_range,
            rotation_range: self.rotation_range_deg.to_radians(),
            beta_range: self.beta_range,
        }
    }

    /// Base camera of the centered 512^2 window.
    pub fn window_intrinsics<F: Real>(&self) -> Intrinsics<F> {
        let c = F::c(CANVAS as f64 / 2.0);
        Intrinsics::new(F::c(self.focal), F::c(self.focal), c, c, CANVAS, CANVAS)
            .expect("positive focal")
    }

    /// Wide camera of the full 736^2 frame the window slides inside.
    pub fn full_intrinsics<F: Real>(&self) -> Intrinsics<F> {
        let c = F::c(CANVAS as f64 / 2.0 + CENTER_OFFSET as f64);
        Intrinsics::new(F::c(self.focal), F::c(self.focal), c, c, FULL_FRAME, FULL_FRAME)
            .expect("positive focal")
    }
}

/// Run configuration: everything a command needs beyond the scene file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: PathBuf,
    pub dataset_dir: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub iterations: usize,
    pub checkpoint_interval: usize,
    pub learning_rate: f64,
    pub threads: usize,
    pub n_samples: usize,
    pub jitter: bool,
    pub background: f64,
    pub pyramid_depth: usize,
    pub plane_res: Vec<usize>,
    pub feat_channels: usize,
    pub extent: f64,
    pub decoder_hidden: usize,
    pub mod_hidden: usize,
    pub lambda_mask: f64,
    pub lambda_perp: f64,
    pub enable_sliding_window: bool,
    pub verify_mode: bool,
    pub n_frames: usize,
    pub dataset_fine_n: usize,
    pub holdout_eval: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: "scene.txt".into(),
            dataset_dir: "dataset".into(),
            output_dir: "out".into(),
            seed: 42,
            iterations: 200,
            checkpoint_interval: 100,
            learning_rate: 1e-4,
            threads: 0,
            n_samples: 64,
            jitter: true,
            background: 0.0,
            pyramid_depth: 3,
            plane_res: vec![64, 128, 256],
            feat_channels: 16,
            extent: 1.0,
            decoder_hidden: 64,
            mod_hidden: 32,
            lambda_mask: 0.1,
            lambda_perp: 0.0,
            enable_sliding_window: true,
            verify_mode: false,
            n_frames: 10,
            dataset_fine_n: 192,
            holdout_eval: 2,
        }
    }
}

impl RunConfig {
    pub fn serialize(&self) -> String {
        let mut kv = KvMap::new();
        kv.push("scene", self.scene.display());
        kv.push("dataset_dir", self.dataset_dir.display());
        kv.push("output_dir", self.output_dir.display());
        kv.push("seed", self.seed);
        kv.push("iterations", self.iterations);
        kv.push("checkpoint_interval", self.checkpoint_interval);
        kv.push("learning_rate", self.learning_rate);
        kv.push("threads", self.threads);
        kv.push("n_samples", self.n_samples);
        kv.push("jitter", self.jitter);
        kv.push("background", self.background);
        kv.push("pyramid_depth", self.pyramid_depth);
        kv.push_list("plane_res", &self.plane_res);
        kv.push("feat_channels", self.feat_channels);
        kv.push("extent", self.extent);
        kv.push("decoder_hidden", self.decoder_hidden);
        kv.push("mod_hidden", self.mod_hidden);
        kv.push("lambda_mask", self.lambda_mask);
        kv.push("lambda_perp", self.lambda_perp);
        kv.push("enable_sliding_window", self.enable_sliding_window);
        kv.push("verify_mode", self.verify_mode);
        kv.push("n_frames", self.n_frames);
        kv.push("dataset_fine_n", self.dataset_fine_n);
        kv.push("holdout_eval", self.holdout_eval);
        kv.serialize()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        let d = RunConfig::default();
        let cfg = RunConfig {
            scene: PathBuf::from(kv.get("scene").unwrap_or("scene.txt")),
            dataset_dir: PathBuf::from(kv.get("dataset_dir").unwrap_or("dataset")),
            output_dir: PathBuf::from(kv.get("output_dir").unwrap_or("out")),
            seed: kv.parse_or("seed", d.seed)?,
            iterations: kv.parse_or("iterations", d.iterations)?,
            checkpoint_interval: kv.parse_or("checkpoint_interval", d.checkpoint_interval)?,
            learning_rate: kv.parse_or("learning_rate", d.learning_rate)?,
            threads: kv.parse_or("threads", d.threads)?,
            n_samples: kv.parse_or("n_samples", d.n_samples)?,
            jitter: kv.parse_or("jitter", d.jitter)?,
            background: kv.parse_or("background", d.background)?,
            pyramid_depth: kv.parse_or("pyramid_depth", d.pyramid_depth)?,
            plane_res: match kv.get("plane_res") {
                Some(_) => kv.parse_list("plane_res")?,
                None => d.plane_res.clone(),
            },
            feat_channels: kv.parse_or("feat_channels", d.feat_channels)?,
            extent: kv.parse_or("extent", d.extent)?,
            decoder_hidden: kv.parse_or("decoder_hidden", d.decoder_hidden)?,
            mod_hidden: kv.parse_or("mod_hidden", d.mod_hidden)?,
            lambda_mask: kv.parse_or("lambda_mask", d.lambda_mask)?,
            lambda_perp: kv.parse_or("lambda_perp", d.lambda_perp)?,
            enable_sliding_window: kv.parse_or("enable_sliding_window", d.enable_sliding_window)?,
            verify_mode: kv.parse_or("verify_mode", d.verify_mode)?,
            n_frames: kv.parse_or("n_frames", d.n_frames)?,
            dataset_fine_n: kv.parse_or("dataset_fine_n", d.dataset_fine_n)?,
            holdout_eval: kv.parse_or("holdout_eval", d.holdout_eval)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse { path: path.into(), msg },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.pyramid_depth) {
            return Err(Error::config(format!("pyramid_depth must be 1, 2, or 3, got {}", self.pyramid_depth)));
        }
        if self.plane_res.len() < self.pyramid_depth {
            return Err(Error::config("plane_res must list one resolution per pyramid level"));
        }
        if self.lambda_mask < 0.0 || self.lambda_perp < 0.0 {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        if self.n_samples < 2 {
            return Err(Error::config("n_samples must be >= 2"));
        }
        if self.iterations == 0 || self.checkpoint_interval == 0 {
            return Err(Error::config("iterations and checkpoint_interval must be positive"));
        }
        Ok(())
    }

    /// Marching setup for this run against a given scene.
    pub fn march_config<F: Real>(&self, scene: &SceneConfig) -> Result<MarchConfig<F>> {
        MarchConfig::new(
            self.n_samples,
            F::c(scene.near),
            F::c(scene.far),
            self.jitter,
            F::c(self.background),
        )
    }

    /// Model shape for this run (truncates plane_res to the pyramid depth).
    pub fn model_shape(&self, n_exp: usize, n_frames: usize) -> ModelShape {
        ModelShape {
            depth: self.pyramid_depth,
            plane_res: self.plane_res[..self.pyramid_depth].to_vec(),
            feat_channels: self.feat_channels,
            extent_half: self.extent,
            n_exp,
            mod_hidden: self.mod_hidden,
            decoder_hidden: self.decoder_hidden,
            n_frames,
        }
    }
}
