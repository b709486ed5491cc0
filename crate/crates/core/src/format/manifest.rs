//! Dataset manifest: one text record per frame plus dataset-level metadata.

use std::path::Path;

use super::kv::KvMap;
use crate::camera::RigidPose;
use crate::error::{Error, Result};
use crate::facegeom::{ExpressionCode, FrameRecord};

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub n_exp: usize,
    /// Frames at or past this index are the held-out test split.
    pub holdout_start: usize,
    /// Oracle sample count the ground truth was minted with.
    pub fine_n: usize,
    pub frames: Vec<FrameRecord<f64>>,
}

impl DatasetManifest {
    pub fn train_frames(&self) -> &[FrameRecord<f64>] {
        &self.frames[..self.holdout_start]
    }

    pub fn holdout_frames(&self) -> &[FrameRecord<f64>] {
        &self.frames[self.holdout_start..]
    }

    pub fn serialize(&self) -> String {
        let mut kv = KvMap::new();
        kv.push("format", "dataset.v1");
        kv.push("n_frames", self.frames.len());
        kv.push("n_exp", self.n_exp);
        kv.push("holdout_start", self.holdout_start);
        kv.push("fine_n", self.fine_n);
        for rec in &self.frames {
            let t = rec.id;
            kv.push_list(&format!("frame.{t}.beta"), &rec.beta.beta);
            kv.push(&format!("frame.{t}.gamma_index"), rec.gamma_index);
            kv.push_list(&format!("frame.{t}.pose"), &rec.pose.to_row_major());
            kv.push_list(&format!("frame.{t}.crop"), &[rec.crop.0, rec.crop.1]);
            kv.push(&format!("frame.{t}.image"), rec.image_path.display());
            kv.push(&format!("frame.{t}.mask"), rec.mask_path.display());
        }
        kv.serialize()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let kv = KvMap::parse(text)?;
        match kv.require("format")? {
            "dataset.v1" => {}
            other => return Err(Error::config(format!("unsupported manifest format '{other}'"))),
        }
        let n_frames: usize = kv.parse_value("n_frames")?;
        let n_exp: usize = kv.parse_value("n_exp")?;
        let holdout_start: usize = kv.parse_value("holdout_start")?;
        let fine_n: usize = kv.parse_value("fine_n")?;
        if holdout_start > n_frames {
            return Err(Error::config("holdout_start exceeds frame count"));
        }
        let mut frames = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let beta: Vec<f64> = kv.parse_list(&format!("frame.{t}.beta"))?;
            if beta.len() != n_exp {
                return Err(Error::config(format!("frame {t}: beta has {} entries, expected {n_exp}", beta.len())));
            }
            let pose_v: Vec<f64> = kv.parse_list(&format!("frame.{t}.pose"))?;
            if pose_v.len() != 12 {
                return Err(Error::config(format!("frame {t}: pose needs 12 numbers")));
            }
            let mut pose_a = [0.0f64; 12];
            pose_a.copy_from_slice(&pose_v);
            let crop: Vec<u32> = kv.parse_list(&format!("frame.{t}.crop"))?;
            if crop.len() != 2 {
                return Err(Error::config(format!("frame {t}: crop needs 2 numbers")));
            }
            let rec = FrameRecord {
                id: t,
                beta: ExpressionCode::new(beta)?,
                gamma_index: kv.parse_value(&format!("frame.{t}.gamma_index"))?,
                pose: RigidPose::from_row_major(pose_a)?,
                crop: (crop[0], crop[1]),
                image_path: kv.require(&format!("frame.{t}.image"))?.into(),
                mask_path: kv.require(&format!("frame.{t}.mask"))?.into(),
            };
            rec.validate()?;
            frames.push(rec);
        }
        Ok(DatasetManifest { n_exp, holdout_start, fine_n, frames })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Parse { path: path.into(), msg },
            other => other,
        })
    }
}
