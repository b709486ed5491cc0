//! Checkpoint files: a text preamble, then one segment per array, each a
//! header line followed by raw little-endian 32-bit reals. Plane segments
//! carry (level, axis, res, channels, extent) on their header line; named
//! arrays carry (name, length). Extra named arrays (optimizer moments) ride
//! along after the model.

use std::path::Path;

use super::kv::KvMap;
use crate::camera::ScaleTag;
use crate::error::{Error, Result};
use crate::mlp::Mlp;
use crate::model::{Model, ModelShape};
use crate::render::DecoderMlp;
use crate::triplane::{Extent, PlaneAxis, TriPlaneLevel, TriPlanePyramid};

const MAGIC: &str = "tripyramid.checkpoint.v1";

fn push_f32s(bytes: &mut Vec<u8>, data: &[f32]) {
    bytes.reserve(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialize the model plus optional extra arrays. `extra_kv` lands in the
/// preamble (iteration counters and the like).
pub fn write_checkpoint(
    path: &Path,
    model: &Model<f32>,
    extra_kv: &[(String, String)],
    extra_arrays: &[(String, &[f32])],
) -> Result<()> {
    let shape = model.shape();
    let mut kv = KvMap::new();
    kv.push("format", MAGIC);
    kv.push("depth", shape.depth);
    kv.push_list("plane_res", &shape.plane_res);
    kv.push("feat_channels", shape.feat_channels);
    kv.push("extent", shape.extent_half);
    kv.push("n_exp", shape.n_exp);
    kv.push("mod_hidden", shape.mod_hidden);
    kv.push("decoder_hidden", shape.decoder_hidden);
    kv.push("n_frames", shape.n_frames);
    for (k, v) in extra_kv {
        kv.push(k, v);
    }
    let mut bytes = kv.serialize().into_bytes();
    bytes.extend_from_slice(b"segments\n");

    for (li, level) in model.pyramid.levels.iter().enumerate() {
        for plane in &level.planes {
            let header = format!(
                "plane {li} {} {} {} {} {}\n",
                plane.axis.name(),
                plane.res,
                plane.channels,
                plane.extent.min,
                plane.extent.max
            );
            bytes.extend_from_slice(header.as_bytes());
            push_f32s(&mut bytes, &plane.data);
        }
    }

    let mut named: Vec<(String, &[f32])> = Vec::new();
    named.push(("gains".into(), &model.pyramid.gains));
    for (li, net) in model.pyramid.mod_nets.iter().enumerate() {
        for (l, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
            named.push((format!("mod.{li}.w{l}"), w));
            named.push((format!("mod.{li}.b{l}"), b));
        }
    }
    for (l, (w, b)) in model.decoder.mlp.weights.iter().zip(&model.decoder.mlp.biases).enumerate() {
        named.push((format!("decoder.w{l}"), w));
        named.push((format!("decoder.b{l}"), b));
    }
    named.push(("gamma".into(), &model.gamma_table));
    for (name, data) in extra_arrays {
        named.push((name.clone(), data));
    }
    for (name, data) in named {
        bytes.extend_from_slice(format!("array {name} {}\n", data.len()).as_bytes());
        push_f32s(&mut bytes, &data);
    }
    bytes.extend_from_slice(b"end\n");
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Everything a checkpoint holds.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub kv: KvMap,
    pub extra_arrays: Vec<(String, Vec<f32>)>,
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let rest = &self.bytes[self.at..];
        let nl = rest.iter().position(|b| *b == b'\n').ok_or_else(|| Error::Parse {
            path: self.path.into(),
            msg: "unterminated line".into(),
        })?;
        self.at += nl + 1;
        std::str::from_utf8(&rest[..nl]).map_err(|_| Error::Parse {
            path: self.path.into(),
            msg: "non-utf8 segment header".into(),
        })
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let need = n * 4;
        if self.bytes.len() - self.at < need {
            return Err(Error::Parse { path: self.path.into(), msg: "truncated segment payload".into() });
        }
        let out = self.bytes[self.at..self.at + need]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        self.at += need;
        Ok(out)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let marker = b"segments\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Parse { path: path.into(), msg: "missing segments marker".into() })?;
    let preamble = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::Parse { path: path.into(), msg: "non-utf8 preamble".into() })?;
    let kv = KvMap::parse(preamble)?;
    if kv.require("format")? != MAGIC {
        return Err(Error::Parse { path: path.into(), msg: "not a checkpoint file".into() });
    }
    let shape = ModelShape {
        depth: kv.parse_value("depth")?,
        plane_res: kv.parse_list("plane_res")?,
        feat_channels: kv.parse_value("feat_channels")?,
        extent_half: kv.parse_value("extent")?,
        n_exp: kv.parse_value("n_exp")?,
        mod_hidden: kv.parse_value("mod_hidden")?,
        decoder_hidden: kv.parse_value("decoder_hidden")?,
        n_frames: kv.parse_value("n_frames")?,
    };
    shape.validate()?;

    let mut r = Reader { path, bytes: &bytes, at: split + marker.len() };
    let bad = |msg: String| Error::Parse { path: path.into(), msg };

    // Plane segments, in level-major, (xy, xz, yz) order.
    let mut levels: Vec<TriPlaneLevel<f32>> = Vec::new();
    for li in 0..shape.depth {
        let mut level = TriPlaneLevel::zeros(
            ScaleTag::ALL[li],
            shape.plane_res[li],
            shape.feat_channels,
            Extent::symmetric(shape.extent_half as f32),
        )?;
        for pi in 0..3 {
            let header = r.line()?.to_string();
            let tok: Vec<&str> = header.split_whitespace().collect();
            if tok.len() != 7 || tok[0] != "plane" {
                return Err(bad(format!("expected plane header, got '{header}'")));
            }
            let axis = PlaneAxis::from_name(tok[2])?;
            let res: usize = tok[3].parse().map_err(|_| bad("bad plane res".into()))?;
            let ch: usize = tok[4].parse().map_err(|_| bad("bad plane channels".into()))?;
            if tok[1] != li.to_string() || axis != PlaneAxis::ALL[pi] {
                return Err(bad(format!("plane segment out of order: '{header}'")));
            }
            if res != shape.plane_res[li] || ch != shape.feat_channels {
                return Err(bad(format!("plane shape mismatch in '{header}'")));
            }
            level.planes[pi].data = r.floats(res * res * ch)?;
        }
        level.validate()?;
        levels.push(level);
    }

    // Named arrays.
    let mut arrays: Vec<(String, Vec<f32>)> = Vec::new();
    loop {
        let header = r.line()?.to_string();
        if header == "end" {
            break;
        }
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 3 || tok[0] != "array" {
            return Err(bad(format!("expected array header, got '{header}'")));
        }
        let len: usize = tok[2].parse().map_err(|_| bad("bad array length".into()))?;
        arrays.push((tok[1].to_string(), r.floats(len)?));
    }

    let mut take = |name: &str| -> Result<Vec<f32>> {
        let at = arrays
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| bad(format!("missing array '{name}'")))?;
        Ok(arrays.remove(at).1)
    };

    let gains = take("gains")?;
    let mut mod_nets = Vec::new();
    for li in 0..shape.depth {
        let mut net = Mlp::zeros(&[shape.n_exp + crate::triplane::GAMMA_DIM, shape.mod_hidden, 2 * shape.feat_channels]);
        for l in 0..net.n_layers() {
            net.weights[l] = take(&format!("mod.{li}.w{l}"))?;
            net.biases[l] = take(&format!("mod.{li}.b{l}"))?;
        }
        mod_nets.push(net);
    }
    let pyramid = TriPlanePyramid::new(levels, gains, mod_nets)?;
    let mut dec_mlp = Mlp::zeros(&[
        shape.feat_channels,
        shape.decoder_hidden,
        shape.decoder_hidden,
        shape.decoder_hidden,
        crate::render::DECODER_OUT,
    ]);
    for l in 0..dec_mlp.n_layers() {
        dec_mlp.weights[l] = take(&format!("decoder.w{l}"))?;
        dec_mlp.biases[l] = take(&format!("decoder.b{l}"))?;
    }
    let decoder = DecoderMlp::new(dec_mlp)?;
    let gamma_table = take("gamma")?;
    if gamma_table.len() != shape.n_frames * crate::triplane::GAMMA_DIM {
        return Err(bad("gamma table length mismatch".into()));
    }

    let model = Model { pyramid, decoder, gamma_table, n_frames: shape.n_frames };
    model.validate_finite()?;
    Ok(Checkpoint { model, kv, extra_arrays: arrays })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelShape;

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        let shape = ModelShape {
            depth: 3,
            plane_res: vec![4, 8, 16],
            feat_channels: 4,
            extent_half: 0.8,
            n_exp: 2,
            mod_hidden: 4,
            decoder_hidden: 8,
            n_frames: 3,
        };
        let mut model = Model::<f32>::init(11, &shape).unwrap();
        model.gamma_table[5] = 0.125;
        let dir = std::env::temp_dir().join("tripyramid_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        let adam_m = vec![0.25f32; 7];
        write_checkpoint(
            &path,
            &model,
            &[("iteration".into(), "42".into())],
            &[("adam.m.gains".into(), &adam_m)],
        )
        .unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.kv.parse_value::<u64>("iteration").unwrap(), 42);

        let mut orig = Vec::new();
        model.visit_params(&mut |_, d| orig.extend(d.iter().map(|v| v.to_bits())));
        let mut loaded = Vec::new();
        back.model.visit_params(&mut |_, d| loaded.extend(d.iter().map(|v| v.to_bits())));
        assert_eq!(orig, loaded);
        assert_eq!(back.extra_arrays, vec![("adam.m.gains".to_string(), adam_m)]);

        // Writing the loaded model again reproduces the file byte for byte.
        let path2 = dir.join("model2.ckpt");
        write_checkpoint(
            &path2,
            &back.model,
            &[("iteration".into(), "42".into())],
            &[("adam.m.gains".into(), &back.extra_arrays[0].1)],
        )
        .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = std::env::temp_dir().join("tripyramid_ckpt_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, b"format = something\nsegments\nend\n").unwrap();
        assert!(read_checkpoint(&path).is_err());
        assert!(read_checkpoint(&dir.join("absent.ckpt")).is_err());
    }
}
