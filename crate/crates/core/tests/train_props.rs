//! Training behavior at smoke-test scale: overfitting a single sample,
//! expressing the separation arithmetic with the per-pixel net, and an
//! end-to-end gradient check through the shading loss.

use lumisplit_core::formation::{synth_scene, SynthParams};
use lumisplit_core::losses::{shading_loss_at_scales, LossContext};
use lumisplit_core::nnstack::{
    adam_step, forward_net, infer, pair_to_tensor, raster_to_tensor, tensor_to_raster, AdamConfig,
    Graph, InferMode, ModelBundle, Network, Role, Tensor, TrainConfig, TrainMode,
};
use lumisplit_core::physsep::FitOptions;
use lumisplit_core::rng::Rng;

fn one_sample(size: usize, seed: u64) -> lumisplit_core::formation::SceneSample {
    let params = SynthParams { size, ambient: 0.1, ..SynthParams::default() };
    synth_scene(seed, &params).unwrap()
}

#[test]
fn chromnet_overfits_one_sample() {
    let sample = one_sample(16, 2);
    let cfg = TrainConfig {
        mode: TrainMode::ChromOnly,
        epochs: 150, // one sample per batch: steps == epochs
        batch: 1,
        seed: 3,
        augment_flips: false,
        lr_drop_epoch: Some(usize::MAX),
        ..TrainConfig::default()
    };
    let out = lumisplit_core::nnstack::train(&cfg, std::slice::from_ref(&sample), None, None).unwrap();
    let first = out.metrics.first().unwrap().total;
    let last = out.metrics.last().unwrap().total;
    assert!(
        last < 0.5 * first,
        "chrom loss failed to halve: {first} -> {last}"
    );
}

// The per-pixel separation net can express the shading-ratio arithmetic:
// overfit it on exact targets from the physics pipeline for one sample.
#[test]
fn separatenet_represents_separation_arithmetic() {
    let sample = one_sample(16, 4);
    // oracle targets via the exact pipeline with true alpha
    let (t1, t2, fit) = lumisplit_core::physsep::separate_with_chrom(
        &sample.input,
        &sample.albedo_chrom,
        &FitOptions::default(),
    )
    .unwrap();
    let (s1, s2) = lumisplit_core::physsep::illuminant_shadings(&fit);

    // network input: S1 (+) S2 (+) image, exactly the cascade wiring
    let mut input = Tensor::<f32>::zeros([1, 9, 16, 16]);
    for (c0, img) in [(0usize, &s1), (3, &s2), (6, &sample.input)] {
        for y in 0..16 {
            for x in 0..16 {
                let px = img.pixel(x, y);
                for (c, &v) in px.iter().enumerate() {
                    input.set(0, c0 + c, y, x, v as f32);
                }
            }
        }
    }
    let target: Tensor<f32> = pair_to_tensor(t1.raster(), t2.raster()).unwrap();

    let mut net = Network::init(Role::SeparateNet, &mut Rng::new(7));
    let shapes: Vec<[usize; 4]> = net.params.iter().map(|p| p.value.shape()).collect();
    let mut m: Vec<Tensor<f32>> = shapes.iter().map(|&s| Tensor::zeros(s)).collect();
    let mut v: Vec<Tensor<f32>> = shapes.iter().map(|&s| Tensor::zeros(s)).collect();
    let adam = AdamConfig { lr: 3e-3, ..AdamConfig::default() };

    let n = target.numel() as f32;
    let mut mean_l1 = f32::INFINITY;
    for t in 1..=600 {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(input.clone(), false);
        let bound = lumisplit_core::nnstack::bind_params(&mut g, &net, true);
        let out = forward_net(&mut g, Role::SeparateNet, &bound, x).unwrap();

        // mean squared error seed
        let mut seed = g.value(out).clone();
        let mut l1_sum = 0.0f32;
        for (s, &tval) in seed.data_mut().iter_mut().zip(target.data()) {
            let d = *s - tval;
            l1_sum += d.abs();
            *s = 2.0 * d / n;
        }
        mean_l1 = l1_sum / n;
        g.backward(vec![(out, seed)]).unwrap();

        let grads: Vec<Tensor<f32>> = bound
            .ids()
            .iter()
            .zip(&shapes)
            .map(|(&id, &shape)| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(shape)))
            .collect();
        let mut params: Vec<Tensor<f32>> = net.params.iter().map(|p| p.value.clone()).collect();
        adam_step(&mut params, &grads, &mut m, &mut v, t, &adam).unwrap();
        for (p, new) in net.params.iter_mut().zip(params) {
            p.value = new;
        }
    }
    assert!(mean_l1 < 1e-2, "separation arithmetic not reached: mean l1 {mean_l1}");
}

// End-to-end gradient check: a tiny shading net in f64, loss gradients fed
// back through the graph, compared against central differences on a sample
// of parameter elements.
#[test]
fn shadingnet_end_to_end_gradcheck() {
    let size = 8;
    let mut rng = Rng::new(31);
    let input64: Tensor<f64> = {
        let n = 6 * size * size;
        Tensor::from_vec([1, 6, size, size], (0..n).map(|_| rng.range(0.0, 1.0)).collect()).unwrap()
    };
    let gt1 = lumisplit_core::imgcore::Raster3::from_fn(size, size, |_, _| {
        [rng.range(0.1, 1.0), rng.range(0.1, 1.0), rng.range(0.1, 1.0)]
    });
    let gt2 = lumisplit_core::imgcore::Raster3::from_fn(size, size, |_, _| {
        [rng.range(0.1, 1.0), rng.range(0.1, 1.0), rng.range(0.1, 1.0)]
    });
    let mask = lumisplit_core::imgcore::ValidMask::all_true(size, size);
    let ctx = LossContext::new(&mask, 2).unwrap();
    let scales = [[1.0, 1.0], [1.0, 1.0]];

    let net = Network::init(Role::ShadingNet, &mut Rng::new(8));
    let named: Vec<(String, Tensor<f64>)> =
        net.params.iter().map(|p| (p.name.clone(), p.value.cast::<f64>())).collect();

    let loss_of = |named: &[(String, Tensor<f64>)]| -> f64 {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(input64.clone(), false);
        let bound = lumisplit_core::nnstack::bind_named_params(&mut g, named, false);
        let out = forward_net(&mut g, Role::ShadingNet, &bound, x).unwrap();
        let p1 = tensor_to_raster(g.value(out), 0).unwrap();
        let p2 = tensor_to_raster(g.value(out), 3).unwrap();
        shading_loss_at_scales([&p1, &p2], [&gt1, &gt2], scales, &ctx).unwrap().value
    };

    // analytic parameter gradients
    let analytic: Vec<Tensor<f64>> = {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(input64.clone(), false);
        let bound = lumisplit_core::nnstack::bind_named_params(&mut g, &named, true);
        let out = forward_net(&mut g, Role::ShadingNet, &bound, x).unwrap();
        let p1 = tensor_to_raster(g.value(out), 0).unwrap();
        let p2 = tensor_to_raster(g.value(out), 3).unwrap();
        let loss = shading_loss_at_scales([&p1, &p2], [&gt1, &gt2], scales, &ctx).unwrap();
        let seed: Tensor<f64> = pair_to_tensor(&loss.grads[0], &loss.grads[1]).unwrap();
        g.backward(vec![(out, seed)]).unwrap();
        bound
            .ids()
            .iter()
            .zip(&named)
            .map(|(&id, (_, t))| g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    };

    // probe ~60 random parameter elements across tensors
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe_rng = Rng::new(77);
    let mut work = named.clone();
    for _ in 0..60 {
        let which = probe_rng.index(named.len());
        let i = probe_rng.index(named[which].1.numel());
        let orig = named[which].1.data()[i];
        work[which].1.data_mut()[i] = orig + h;
        let plus = loss_of(&work);
        work[which].1.data_mut()[i] = orig - h;
        let minus = loss_of(&work);
        work[which].1.data_mut()[i] = orig;
        let fd = (plus - minus) / (2.0 * h);
        let a = analytic[which].data()[i];
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-3, "end-to-end rel err {worst}");
}

// Overfitting drives the full cascade down too (reduced-scale smoke; the
// acceptance suite runs the full-size property).
#[test]
fn full_mode_loss_decreases() {
    let samples: Vec<_> = (0..8).map(|s| one_sample(16, 100 + s)).collect();
    let cfg = TrainConfig {
        mode: TrainMode::Full,
        epochs: 10,
        batch: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = lumisplit_core::nnstack::train(&cfg, &samples, None, None).unwrap();
    let first = out.metrics.first().unwrap().total;
    let last = out.metrics.last().unwrap().total;
    assert!(last < first, "no improvement: {first} -> {last}");

    // trained bundle drives both inference modes
    let (i1, _i2, _) = infer(&out.bundle, &samples[0].input, InferMode::Direct, &FitOptions::default()).unwrap();
    assert_eq!(i1.height(), 16);
    let (j1, _j2, fit) = infer(&out.bundle, &samples[0].input, InferMode::Physics, &FitOptions::default()).unwrap();
    assert!(fit.is_some());
    assert_eq!(j1.height(), 16);
}

#[test]
fn singlenet_overfits_one_sample() {
    let sample = one_sample(16, 6);
    let cfg = TrainConfig {
        mode: TrainMode::SingleNet,
        epochs: 120,
        batch: 1,
        seed: 2,
        augment_flips: false,
        lr_drop_epoch: Some(usize::MAX),
        ..TrainConfig::default()
    };
    let out = lumisplit_core::nnstack::train(&cfg, std::slice::from_ref(&sample), None, None).unwrap();
    let first = out.metrics.first().unwrap().total;
    let last = out.metrics.last().unwrap().total;
    assert!(last < 0.5 * first, "singlenet failed to overfit: {first} -> {last}");
}

#[test]
fn physics_mode_with_oracle_alpha_equals_pipeline() {
    // a bundle whose chromnet is untrained emits neutral chromaticity; feed
    // the pipeline the same neutral map and the outputs must agree exactly
    let sample = one_sample(16, 9);
    let bundle = ModelBundle::init(TrainMode::Full, 0);
    let (i1, i2, _) = infer(&bundle, &sample.input, InferMode::Physics, &FitOptions::default()).unwrap();

    let neutral = lumisplit_core::imgcore::ChromaticityMap::new(
        lumisplit_core::imgcore::Raster3::splat(16, 16, [1.0 / 3.0; 3]),
    )
    .unwrap();
    let (p1, p2, _) =
        lumisplit_core::physsep::separate_with_chrom(&sample.input, &neutral, &FitOptions::default())
            .unwrap();
    assert!(i1.raster().max_abs_diff(p1.raster()).unwrap() < 1e-6);
    assert!(i2.raster().max_abs_diff(p2.raster()).unwrap() < 1e-6);
}

#[test]
fn raster_tensor_bridge_is_consistent() {
    let sample = one_sample(16, 1);
    let t: Tensor<f64> = raster_to_tensor(sample.input.raster());
    let back = tensor_to_raster(&t, 0).unwrap();
    assert_eq!(back, *sample.input.raster());
}
