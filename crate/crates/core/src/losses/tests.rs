//! Loss tests against independent brute-force oracles and central finite
//! differences. The naive reimplementations here use their own pooling and
//! differencing loops on purpose.

use super::*;
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// independent oracle helpers
// ---------------------------------------------------------------------------

fn naive_pool(r: &Raster3) -> Raster3 {
    let (h, w) = (r.height(), r.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Raster3::zeros(oh, ow);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = [0.0; 3];
            let mut n = 0.0;
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (y, x) = (oy * 2 + dy, ox * 2 + dx);
                if y < h && x < w {
                    let p = r.pixel(x, y);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                    n += 1.0;
                }
            }
            out.set_pixel(ox, oy, [acc[0] / n, acc[1] / n, acc[2] / n]);
        }
    }
    out
}

fn naive_pool_mask(m: &ValidMask) -> ValidMask {
    let (h, w) = (m.height(), m.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut bits = vec![true; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let (y, x) = (oy * 2 + dy, ox * 2 + dx);
                if y < h && x < w && !m.get(x, y) {
                    bits[oy * ow + ox] = false;
                }
            }
        }
    }
    ValidMask::new(oh, ow, bits).unwrap()
}

fn naive_data(pred: &Raster3, gt: &Raster3, c: f64, mask: &ValidMask, squared: bool) -> f64 {
    let mut total = 0.0;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if !mask.get(x, y) {
                continue;
            }
            let p = pred.pixel(x, y);
            let g = gt.pixel(x, y);
            for ch in 0..3 {
                let d = p[ch] - c * g[ch];
                total += if squared { d * d } else { d.abs() };
            }
        }
    }
    total / mask.count() as f64
}

fn naive_grad_levels(pred: &Raster3, gt: &Raster3, c: f64, mask: &ValidMask, levels: usize, squared: bool) -> f64 {
    let mut p = pred.clone();
    let mut g = gt.clone();
    let mut m = mask.clone();
    let mut total = 0.0;
    for t in 0..levels {
        if t > 0 {
            p = naive_pool(&p);
            g = naive_pool(&g);
            m = naive_pool_mask(&m);
        }
        let mt = m.count();
        if mt == 0 {
            continue;
        }
        let mut level_sum = 0.0;
        for y in 0..p.height() {
            for x in 0..p.width() {
                if !m.get(x, y) {
                    continue;
                }
                if x + 1 < p.width() && m.get(x + 1, y) {
                    for ch in 0..3 {
                        let dp = p.pixel(x + 1, y)[ch] - p.pixel(x, y)[ch];
                        let dg = g.pixel(x + 1, y)[ch] - g.pixel(x, y)[ch];
                        let d = dp - c * dg;
                        level_sum += if squared { d * d } else { d.abs() };
                    }
                }
                if y + 1 < p.height() && m.get(x, y + 1) {
                    for ch in 0..3 {
                        let dp = p.pixel(x, y + 1)[ch] - p.pixel(x, y)[ch];
                        let dg = g.pixel(x, y + 1)[ch] - g.pixel(x, y)[ch];
                        let d = dp - c * dg;
                        level_sum += if squared { d * d } else { d.abs() };
                    }
                }
            }
        }
        total += level_sum / mt as f64;
    }
    total
}

fn random_raster(rng: &mut Rng, h: usize, w: usize, lo: f64, hi: f64) -> Raster3 {
    Raster3::from_fn(h, w, |_, _| [rng.range(lo, hi), rng.range(lo, hi), rng.range(lo, hi)])
}

fn random_mask(rng: &mut Rng, h: usize, w: usize, p_valid: f64) -> ValidMask {
    loop {
        let bits: Vec<bool> = (0..h * w).map(|_| rng.uniform() < p_valid).collect();
        if bits.iter().any(|&b| b) {
            return ValidMask::new(h, w, bits).unwrap();
        }
    }
}

fn fd_gradient(f: &mut dyn FnMut(&Raster3) -> f64, at: &Raster3, h: f64) -> Raster3 {
    let mut out = Raster3::zeros(at.height(), at.width());
    for i in 0..at.data().len() {
        let mut plus = at.clone();
        plus.data_mut()[i] += h;
        let mut minus = at.clone();
        minus.data_mut()[i] -= h;
        out.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    out
}

fn max_rel_err(a: &Raster3, b: &Raster3) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// lsq_scale
// ---------------------------------------------------------------------------

#[test]
fn lsq_recovers_exact_scale() {
    let mut rng = Rng::new(1);
    let gt = random_raster(&mut rng, 4, 4, 0.1, 1.0);
    let pred = gt.scale(2.0);
    let mask = ValidMask::all_true(4, 4);
    let c = lsq_scale(&pred, &gt, &mask, ScaleKind::Alpha).unwrap();
    assert!((c.value - 2.0).abs() < 1e-12);
    assert_eq!(c.kind, ScaleKind::Alpha);
}

#[test]
fn lsq_orthogonal_is_zero() {
    let gt = Raster3::new(1, 1, vec![1.0, 0.0, 0.0]).unwrap();
    let pred = Raster3::new(1, 1, vec![0.0, 1.0, 0.0]).unwrap();
    let c = lsq_scale(&pred, &gt, &ValidMask::all_true(1, 1), ScaleKind::Separation).unwrap();
    assert_eq!(c.value, 0.0);
}

// closed form: gt=(1,2), pred=(2,2) -> c = (2 + 4) / (1 + 4) = 1.2
#[test]
fn lsq_closed_form_example() {
    let gt = Raster3::new(1, 1, vec![1.0, 2.0, 0.0]).unwrap();
    let pred = Raster3::new(1, 1, vec![2.0, 2.0, 0.0]).unwrap();
    let c = lsq_scale(&pred, &gt, &ValidMask::all_true(1, 1), ScaleKind::Shading).unwrap();
    assert!((c.value - 1.2).abs() < 1e-12);
}

#[test]
fn lsq_ignores_masked_pixels() {
    let gt = Raster3::new(1, 2, vec![1.0, 1.0, 1.0, 9.0, 9.0, 9.0]).unwrap();
    let pred = Raster3::new(1, 2, vec![3.0, 3.0, 3.0, 0.0, 0.0, 0.0]).unwrap();
    let mask = ValidMask::new(1, 2, vec![true, false]).unwrap();
    let c = lsq_scale(&pred, &gt, &mask, ScaleKind::Alpha).unwrap();
    assert!((c.value - 3.0).abs() < 1e-12);
}

#[test]
fn lsq_zero_gt_is_degenerate() {
    let gt = Raster3::zeros(2, 2);
    let pred = Raster3::splat(2, 2, [1.0; 3]);
    assert!(matches!(
        lsq_scale(&pred, &gt, &ValidMask::all_true(2, 2), ScaleKind::Alpha),
        Err(LossError::DegenerateScale)
    ));
}

// ---------------------------------------------------------------------------
// chrom_loss
// ---------------------------------------------------------------------------

#[test]
fn chrom_loss_zero_on_match_and_scale() {
    let mut rng = Rng::new(2);
    let gt = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let ctx = LossContext::new(&ValidMask::all_true(8, 8), 3).unwrap();
    for k in [0.5, 1.0, 2.0] {
        let out = chrom_loss(&gt.scale(k), &gt, &ctx).unwrap();
        assert!(out.value.abs() < 1e-9, "k={k}: {}", out.value);
        assert!((out.scale.value - k).abs() < 1e-12);
    }
}

#[test]
fn chrom_loss_matches_naive_oracle() {
    for seed in 0..5 {
        let mut rng = Rng::new(100 + seed);
        let gt = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let pred = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let mask = random_mask(&mut rng, 8, 8, 0.8);
        let ctx = LossContext::new(&mask, 3).unwrap();
        let out = chrom_loss(&pred, &gt, &ctx).unwrap();
        let c = out.scale.value;
        let naive = naive_data(&pred, &gt, c, &mask, false)
            + naive_grad_levels(&pred, &gt, c, &mask, 3, false);
        assert!((out.value - naive).abs() < 1e-12, "seed {seed}: {} vs {naive}", out.value);
    }
}

#[test]
fn chrom_loss_gradient_matches_fd() {
    for seed in 0..5 {
        let mut rng = Rng::new(200 + seed);
        let gt = random_raster(&mut rng, 8, 8, 0.2, 1.0);
        // keep differences away from the L1 kinks
        let pred = gt.zip_map(
            &random_raster(&mut rng, 8, 8, 0.05, 0.3),
            |g, n| g + if n > 0.175 { n } else { -n },
        )
        .unwrap();
        let mask = random_mask(&mut rng, 8, 8, 0.9);
        let ctx = LossContext::new(&mask, 3).unwrap();
        let c = lsq_scale(&pred, &gt, ctx.mask(0), ScaleKind::Alpha).unwrap().value;
        let (_, analytic) = chrom_loss_at_scale(&pred, &gt, c, &ctx).unwrap();
        let fd = fd_gradient(
            &mut |p| chrom_loss_at_scale(p, &gt, c, &ctx).unwrap().0,
            &pred,
            1e-5,
        );
        let err = max_rel_err(&analytic, &fd);
        assert!(err < 1e-3, "seed {seed}: rel err {err}");
    }
}

#[test]
fn chrom_loss_masked_pixels_are_inert() {
    let mut rng = Rng::new(3);
    let gt = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let pred = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let mask = random_mask(&mut rng, 8, 8, 0.7);
    let ctx = LossContext::new(&mask, 3).unwrap();
    let base = chrom_loss(&pred, &gt, &ctx).unwrap();

    let mut poked = pred.clone();
    for y in 0..8 {
        for x in 0..8 {
            if !mask.get(x, y) {
                poked.set_pixel(x, y, [rng.uniform() * 10.0, 42.0, rng.uniform()]);
            }
        }
    }
    let poked_out = chrom_loss(&poked, &gt, &ctx).unwrap();
    assert_eq!(base.value, poked_out.value, "masked perturbation changed the value");
    // and the gradient at masked pixels is exactly zero
    for y in 0..8 {
        for x in 0..8 {
            if !mask.get(x, y) {
                assert_eq!(base.grad.pixel(x, y), [0.0; 3]);
            }
        }
    }
}

#[test]
fn chrom_loss_empty_mask_rejected() {
    let mask = ValidMask::new(4, 4, vec![false; 16]).unwrap();
    assert!(matches!(LossContext::new(&mask, 2), Err(LossError::EmptyMask)));
}

// ---------------------------------------------------------------------------
// shading_loss
// ---------------------------------------------------------------------------

#[test]
fn shading_loss_zero_in_order_and_swapped() {
    let mut rng = Rng::new(4);
    let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let ctx = LossContext::new(&ValidMask::all_true(8, 8), 3).unwrap();

    let inorder = shading_loss([&g1, &g2], [&g1, &g2], &ctx).unwrap();
    assert!(inorder.value.abs() < 1e-9);
    assert_eq!(inorder.permutation, Permutation::Identity);

    let swapped = shading_loss([&g2, &g1], [&g1, &g2], &ctx).unwrap();
    assert!(swapped.value.abs() < 1e-9);
    assert_eq!(swapped.permutation, Permutation::Swapped);
}

#[test]
fn shading_loss_absorbs_per_light_scales() {
    let mut rng = Rng::new(5);
    let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let ctx = LossContext::new(&ValidMask::all_true(8, 8), 3).unwrap();
    let out = shading_loss([&g1.scale(0.3), &g2.scale(4.0)], [&g1, &g2], &ctx).unwrap();
    assert!(out.value.abs() < 1e-9, "{}", out.value);
    assert!((out.scales[0] - 0.3).abs() < 1e-12);
    assert!((out.scales[1] - 4.0).abs() < 1e-12);
}

#[test]
fn shading_loss_matches_naive_min_of_pairings() {
    for seed in 0..5 {
        let mut rng = Rng::new(300 + seed);
        let p1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let p2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let mask = random_mask(&mut rng, 8, 8, 0.85);
        let ctx = LossContext::new(&mask, 3).unwrap();
        let out = shading_loss([&p1, &p2], [&g1, &g2], &ctx).unwrap();

        let term = |p: &Raster3, g: &Raster3| {
            let c = lsq_scale(p, g, &mask, ScaleKind::Shading).unwrap().value;
            naive_data(p, g, c, &mask, true) + naive_grad_levels(p, g, c, &mask, 3, true)
        };
        let naive =
            (term(&p1, &g1) + term(&p2, &g2)).min(term(&p1, &g2) + term(&p2, &g1));
        assert!((out.value - naive).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn shading_loss_gradient_matches_fd() {
    for seed in 0..3 {
        let mut rng = Rng::new(400 + seed);
        let p1 = random_raster(&mut rng, 6, 6, 0.1, 1.0);
        let p2 = random_raster(&mut rng, 6, 6, 0.1, 1.0);
        let g1 = random_raster(&mut rng, 6, 6, 0.1, 1.0);
        let g2 = random_raster(&mut rng, 6, 6, 0.1, 1.0);
        let ctx = LossContext::new(&ValidMask::all_true(6, 6), 2).unwrap();
        let scales = [[0.9, 1.1], [1.05, 0.95]];
        let out = shading_loss_at_scales([&p1, &p2], [&g1, &g2], scales, &ctx).unwrap();

        let fd0 = fd_gradient(
            &mut |p| shading_loss_at_scales([p, &p2], [&g1, &g2], scales, &ctx).unwrap().value,
            &p1,
            1e-5,
        );
        let err0 = max_rel_err(&out.grads[0], &fd0);
        assert!(err0 < 1e-3, "seed {seed} pred0 rel err {err0}");

        let fd1 = fd_gradient(
            &mut |p| shading_loss_at_scales([&p1, p], [&g1, &g2], scales, &ctx).unwrap().value,
            &p2,
            1e-5,
        );
        let err1 = max_rel_err(&out.grads[1], &fd1);
        assert!(err1 < 1e-3, "seed {seed} pred1 rel err {err1}");
    }
}

// ---------------------------------------------------------------------------
// separation_loss
// ---------------------------------------------------------------------------

#[test]
fn separation_loss_basics() {
    let mut rng = Rng::new(6);
    let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let ctx = LossContext::new(&ValidMask::all_true(8, 8), 3).unwrap();

    assert!(separation_loss([&g1, &g2], [&g1, &g2], &ctx).unwrap().value.abs() < 1e-9);

    let a = separation_loss([&g1, &g2], [&g2, &g1], &ctx).unwrap();
    let b = separation_loss([&g2, &g1], [&g2, &g1], &ctx).unwrap();
    // swapping the predictions leaves the min unchanged
    assert!((a.value - b.value).abs() < 1e-12);
}

#[test]
fn separation_loss_matches_naive() {
    for seed in 0..5 {
        let mut rng = Rng::new(500 + seed);
        let p1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let p2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
        let mask = random_mask(&mut rng, 8, 8, 0.8);
        let ctx = LossContext::new(&mask, 3).unwrap();
        let out = separation_loss([&p1, &p2], [&g1, &g2], &ctx).unwrap();

        let term = |p: &Raster3, g: &Raster3| {
            let c = lsq_scale(p, g, &mask, ScaleKind::Separation).unwrap().value;
            naive_data(p, g, c, &mask, false)
        };
        let naive = (term(&p1, &g1) + term(&p2, &g2)).min(term(&p1, &g2) + term(&p2, &g1));
        assert!((out.value - naive).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn separation_loss_gradient_matches_fd() {
    for seed in 0..3 {
        let mut rng = Rng::new(600 + seed);
        let g1 = random_raster(&mut rng, 6, 6, 0.2, 1.0);
        let g2 = random_raster(&mut rng, 6, 6, 0.2, 1.0);
        // offsets bounded away from zero keep the L1 terms differentiable
        let p1 = g1.zip_map(&random_raster(&mut rng, 6, 6, 0.05, 0.2), |g, n| g + n).unwrap();
        let p2 = g2.zip_map(&random_raster(&mut rng, 6, 6, 0.05, 0.2), |g, n| g - n).unwrap();
        let ctx = LossContext::new(&ValidMask::all_true(6, 6), 1).unwrap();
        let scales = [[1.0, 1.0], [1.0, 1.0]];
        let out = separation_loss_at_scales([&p1, &p2], [&g1, &g2], scales, &ctx).unwrap();
        let fd0 = fd_gradient(
            &mut |p| separation_loss_at_scales([p, &p2], [&g1, &g2], scales, &ctx).unwrap().value,
            &p1,
            1e-5,
        );
        let err = max_rel_err(&out.grads[0], &fd0);
        assert!(err < 1e-3, "seed {seed}: {err}");
    }
}

// ---------------------------------------------------------------------------
// eval_metric
// ---------------------------------------------------------------------------

#[test]
fn eval_metric_identity_and_swap() {
    let mut rng = Rng::new(7);
    let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let mask = ValidMask::all_true(8, 8);
    assert!(eval_metric([&g1, &g2], [&g1, &g2], &mask, true).unwrap() < 1e-12);
    let a = eval_metric([&g1, &g2], [&g1, &g2], &mask, true).unwrap();
    let b = eval_metric([&g2, &g1], [&g1, &g2], &mask, true).unwrap();
    assert!((a - b).abs() < 1e-12, "swap changed the metric");
}

#[test]
fn eval_metric_scale_invariant_when_aligned() {
    let mut rng = Rng::new(8);
    let g1 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.1, 1.0);
    let mask = ValidMask::all_true(8, 8);
    let aligned = eval_metric([&g1.scale(2.0), &g2.scale(2.0)], [&g1, &g2], &mask, true).unwrap();
    assert!(aligned < 1e-12, "{aligned}");
    let raw = eval_metric([&g1.scale(2.0), &g2.scale(2.0)], [&g1, &g2], &mask, false).unwrap();
    assert!(raw > 0.1, "raw variant must see the scale error, got {raw}");
}

// A collapsed (all-zero) prediction must not be scored as perfect by the
// scale alignment: it pays the full ground-truth magnitude.
#[test]
fn eval_metric_charges_zero_predictions() {
    let mut rng = Rng::new(9);
    let g1 = random_raster(&mut rng, 8, 8, 0.2, 1.0);
    let g2 = random_raster(&mut rng, 8, 8, 0.2, 1.0);
    let zero = Raster3::zeros(8, 8);
    let mask = ValidMask::all_true(8, 8);
    let m = eval_metric([&zero, &zero], [&g1, &g2], &mask, true).unwrap();
    // expected: mean per-pixel channel-summed |gt| over both images
    let expect = (g1.data().iter().map(|v| v.abs()).sum::<f64>()
        + g2.data().iter().map(|v| v.abs()).sum::<f64>())
        / 64.0;
    assert!((m - expect).abs() < 1e-12, "metric {m}, expected {expect}");
    assert!(m > 0.5);
}

#[test]
fn pair_loss_tie_breaks_to_identity() {
    // identical gts make both pairings equal: identity must win
    let g = Raster3::splat(8, 8, [0.4, 0.3, 0.3]);
    let ctx = LossContext::new(&ValidMask::all_true(8, 8), 1).unwrap();
    let out = separation_loss([&g, &g], [&g, &g], &ctx).unwrap();
    assert_eq!(out.permutation, Permutation::Identity);
}
