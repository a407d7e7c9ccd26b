//! Property tests for the algebraic invariants: chromaticity normalization,
//! gradient linearity, mean preservation, conservation of separation, and
//! loss symmetries.

use proptest::prelude::*;

use lumisplit_core::imgcore::{
    chromaticity, downsample_avg2, grad_fd, LinearImage, Raster3, ValidMask,
};
use lumisplit_core::losses::{eval_metric, separation_loss, shading_loss, LossContext};
use lumisplit_core::physsep::{separate, SEPARATE_SUM_EPS};

fn raster_strategy(h: usize, w: usize, lo: f64, hi: f64) -> impl Strategy<Value = Raster3> {
    prop::collection::vec(lo..hi, h * w * 3)
        .prop_map(move |data| Raster3::new(h, w, data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chromaticity_always_lands_on_the_simplex(data in raster_strategy(6, 5, 0.0, 3.0)) {
        let img = LinearImage::new(data).unwrap();
        let (chrom, _) = chromaticity(&img, 1e-6);
        for y in 0..6 {
            for x in 0..5 {
                let px = chrom.pixel(x, y);
                let sum: f64 = px.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-5);
                prop_assert!(px.iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn grad_fd_is_linear(
        f in raster_strategy(5, 6, -1.0, 1.0),
        g in raster_strategy(5, 6, -1.0, 1.0),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let combo = f.scale(a).add(&g.scale(b)).unwrap();
        let (gx_combo, gy_combo) = grad_fd(&combo);
        let (gx_f, gy_f) = grad_fd(&f);
        let (gx_g, gy_g) = grad_fd(&g);
        let expect_x = gx_f.scale(a).add(&gx_g.scale(b)).unwrap();
        let expect_y = gy_f.scale(a).add(&gy_g.scale(b)).unwrap();
        prop_assert!(gx_combo.max_abs_diff(&expect_x).unwrap() < 1e-12);
        prop_assert!(gy_combo.max_abs_diff(&expect_y).unwrap() < 1e-12);
    }

    #[test]
    fn downsample_preserves_mean_on_even_dims(data in raster_strategy(6, 8, 0.0, 2.0)) {
        let down = downsample_avg2(&data);
        prop_assert!((down.mean() - data.mean()).abs() < 1e-12);
    }

    #[test]
    fn separation_conserves_the_input(
        img in raster_strategy(4, 4, 0.0, 2.0),
        s1 in raster_strategy(4, 4, 0.05, 1.0),
        s2 in raster_strategy(4, 4, 0.05, 1.0),
    ) {
        let img = LinearImage::new(img).unwrap();
        let s1 = LinearImage::new(s1).unwrap();
        let s2 = LinearImage::new(s2).unwrap();
        let (i1, i2, unclamped) = separate(&img, &s1, &s2, SEPARATE_SUM_EPS).unwrap();
        prop_assert_eq!(unclamped.count(), 16);
        let sum = i1.raster().add(i2.raster()).unwrap();
        prop_assert!(img.raster().max_abs_diff(&sum).unwrap() <= 1e-12);
    }

    #[test]
    fn pair_losses_are_swap_symmetric(
        p1 in raster_strategy(8, 8, 0.05, 1.0),
        p2 in raster_strategy(8, 8, 0.05, 1.0),
        g1 in raster_strategy(8, 8, 0.05, 1.0),
        g2 in raster_strategy(8, 8, 0.05, 1.0),
    ) {
        let ctx = LossContext::new(&ValidMask::all_true(8, 8), 3).unwrap();
        let sep_a = separation_loss([&p1, &p2], [&g1, &g2], &ctx).unwrap().value;
        let sep_b = separation_loss([&p2, &p1], [&g1, &g2], &ctx).unwrap().value;
        prop_assert_eq!(sep_a, sep_b);
        let shad_a = shading_loss([&p1, &p2], [&g1, &g2], &ctx).unwrap().value;
        let shad_b = shading_loss([&p2, &p1], [&g1, &g2], &ctx).unwrap().value;
        prop_assert_eq!(shad_a, shad_b);
        prop_assert!(sep_a >= 0.0 && shad_a >= 0.0);
    }

    #[test]
    fn metric_scale_invariance(
        g1 in raster_strategy(6, 6, 0.05, 1.0),
        g2 in raster_strategy(6, 6, 0.05, 1.0),
        k in 0.25f64..4.0,
    ) {
        let mask = ValidMask::all_true(6, 6);
        let m = eval_metric([&g1.scale(k), &g2.scale(k)], [&g1, &g2], &mask, true).unwrap();
        prop_assert!(m < 1e-9, "metric {}", m);
    }

    #[test]
    fn pfm_roundtrip_is_lossless(data in prop::collection::vec(0.0f32..10.0, 4 * 3 * 3)) {
        let as_f64: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        let img = LinearImage::from_parts(4, 3, as_f64).unwrap();
        let dir = std::env::temp_dir().join(format!("lumisplit_prop_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("prop_rt.pfm");
        lumisplit_core::imgcore::save_image(&img, &path, lumisplit_core::imgcore::Transfer::Linear).unwrap();
        let back = lumisplit_core::imgcore::load_image(&path, lumisplit_core::imgcore::Transfer::Linear).unwrap();
        prop_assert_eq!(img.data(), back.data());
    }
}
