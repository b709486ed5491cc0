use std::time::Instant;
use tripyramid::camera::*;
use tripyramid::math::Vec3;
use tripyramid::render::*;
use tripyramid::rng::{stream_rng, Stream};
use tripyramid::triplane::*;

fn main() {
    let channels = 8usize;
    let hidden = 16usize;
    let n_samples = 10usize;
    type F = f32;
    let mut pyr = TriPlanePyramid::<F>::init(
        1, &ScaleTag::ALL, &[96, 192, 384], channels, Extent::symmetric(0.8), 4, 16,
    )
    .unwrap();
    for net in pyr.mod_nets.iter_mut() {
        let mut rng = stream_rng(2, Stream::Probe(0));
        use rand::Rng;
        for v in net.weights[1].iter_mut() { *v = rng.gen_range(-0.1..0.1); }
    }
    let mut rng = stream_rng(3, Stream::Probe(1));
    let decoder = DecoderMlp::<F>::init(channels, hidden, &mut rng);
    let cond = ConditionEmbedding::new(vec![0.1; 4], vec![0.05; GAMMA_DIM]).unwrap();
    let intr = Intrinsics::new(1024.0, 1024.0, 256.0, 256.0, 512, 512).unwrap();
    let pose = RigidPose::new(tripyramid::math::Mat3::identity(), Vec3::new(0.0, 0.0, -2.2)).unwrap();
    let cam = RigidPose::identity();
    let cfg = MarchConfig::new(n_samples, 1.5, 3.0, true, 0.0).unwrap();

    let t0 = Instant::now();
    let realized = realize_pyramid(&pyr, &cond).unwrap();
    println!("realize: {:?}", t0.elapsed());

    let grids = [
        PixelGrid::new(ScaleTag::S128, 0).unwrap(),
        PixelGrid::new(ScaleTag::S256, 1).unwrap(),
        PixelGrid::new(ScaleTag::S512, 7).unwrap(),
    ];
    let t1 = Instant::now();
    let mut maps = Vec::new();
    for (k, g) in grids.iter().enumerate() {
        maps.push(render_map(&realized, &decoder, &pose, &intr, &cam, g, &cfg, Some(k as u64)).unwrap());
    }
    let fwd = t1.elapsed();
    println!("forward 3 maps: {:?}", fwd);

    let mut d_map = MapGrads::<F>::zeros();
    for px in 0..MAP_RES * MAP_RES {
        for c in 0..3 { d_map.d_features[px * FEAT_CHANNELS + c] = 1e-5; }
        d_map.d_opacity[px] = 1e-5;
    }
    let t2 = Instant::now();
    let mut d_realized: Vec<Option<PlaneSetGrads<F>>> = vec![None, None, None];
    for (k, g) in grids.iter().enumerate() {
        let level = realized.level_for_scale(g.scale()).unwrap();
        let (dp, _dd) = render_map_backward(level, &decoder, &pose, &intr, &cam, g, &cfg, Some(k as u64), &d_map);
        d_realized[g.scale().level_index()] = Some(dp);
    }
    let bwd = t2.elapsed();
    println!("backward 3 maps: {:?}", bwd);

    let t3 = Instant::now();
    let mut grads = PyramidGrads::zeros_like(&pyr);
    realize_backward(&pyr, &realized, d_realized, &mut grads);
    println!("realize_backward: {:?}", t3.elapsed());
    println!("approx iteration (fwd for loss + recompute-bwd): {:?}", fwd + bwd + t3.elapsed() + t0.elapsed());
}
