//! Training loop: mode wiring (which networks, which supervision), batched
//! gradient accumulation, Adam, the step-scheduled learning-rate drop, and
//! deterministic shuffling/augmentation.
//!
//! The sample order is shuffled once from the seed and the batch partition
//! stays fixed across epochs, so per-step losses are comparable epoch over
//! epoch; flip augmentation is keyed by (seed, epoch, position). Resuming
//! from a checkpoint at step k replays exactly the batches a fresh run
//! would have seen.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::graph::Graph;
use super::nets::{forward_net, BoundParams, Network, Role};
use super::tensor::{pair_to_tensor, raster_to_tensor, tensor_to_raster, Tensor};
use super::{NnError, Result};
use crate::formation::SceneSample;
use crate::imgcore::{ChromaticityMap, LinearImage, Raster3, ValidMask};
use crate::losses::{chrom_loss, separation_loss, shading_loss, LossContext};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    ChromOnly,
    FinalOnly,
    Full,
    SingleNet,
}

impl TrainMode {
    pub fn roles(&self) -> Vec<Role> {
        match self {
            TrainMode::ChromOnly => vec![Role::ChromNet],
            TrainMode::FinalOnly | TrainMode::Full => {
                vec![Role::ChromNet, Role::ShadingNet, Role::SeparateNet]
            }
            TrainMode::SingleNet => vec![Role::SingleNet],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::ChromOnly => "chrom_only",
            TrainMode::FinalOnly => "final_only",
            TrainMode::Full => "full",
            TrainMode::SingleNet => "singlenet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub alpha: f64,
    pub shading: f64,
    pub separation: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 1.0, shading: 1.0, separation: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub epochs: usize,
    /// Epoch at which the learning rate drops; when unset it defaults to
    /// 7/8 of the schedule (epoch 35 of the canonical 40).
    pub lr_drop_epoch: Option<usize>,
    pub lr_drop_factor: f64,
    pub batch: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Pyramid depth shared by the multi-scale loss terms.
    pub levels: usize,
    pub augment_flips: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Full,
            lr: 5e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps_adam: 1e-8,
            epochs: 40,
            lr_drop_epoch: None,
            lr_drop_factor: 0.1,
            batch: 4,
            seed: 0,
            weights: LossWeights::default(),
            levels: 3,
            augment_flips: true,
        }
    }
}

impl TrainConfig {
    pub fn resolved_lr_drop_epoch(&self) -> usize {
        self.lr_drop_epoch.unwrap_or_else(|| (self.epochs * 35).div_ceil(40))
    }

    fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(NnError::BadConfig(format!("lr {} must be positive", self.lr)));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(NnError::BadConfig(format!("{name} {beta} must be in [0,1)")));
            }
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(NnError::BadConfig("batch and epochs must be positive".into()));
        }
        if self.levels == 0 {
            return Err(NnError::BadConfig("levels must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps_adam }
    }
}

/// The networks a training run produces, in the fixed role order of the
/// mode.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub mode: TrainMode,
    pub nets: Vec<Network>,
    pub step: usize,
}

impl ModelBundle {
    pub fn init(mode: TrainMode, seed: u64) -> ModelBundle {
        let mut rng = Rng::substream(seed, 0x1217);
        let nets = mode.roles().iter().map(|&r| Network::init(r, &mut rng)).collect();
        ModelBundle { mode, nets, step: 0 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub total: f64,
    pub loss_alpha: f64,
    pub loss_shading: f64,
    pub loss_separation: f64,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub adam: AdamState,
    pub metrics: Vec<StepMetrics>,
}

fn hflip_raster(r: &Raster3) -> Raster3 {
    let w = r.width();
    Raster3::from_fn(r.height(), w, |x, y| r.pixel(w - 1 - x, y))
}

fn hflip_sample(s: &SceneSample) -> SceneSample {
    let w = s.mask.width();
    let bits: Vec<bool> = (0..s.mask.height())
        .flat_map(|y| (0..w).map(move |x| s.mask.get(w - 1 - x, y)))
        .collect();
    SceneSample {
        input: LinearImage::new(hflip_raster(s.input.raster())).expect("flip keeps invariants"),
        albedo_chrom: ChromaticityMap::new(hflip_raster(s.albedo_chrom.raster()))
            .expect("flip keeps invariants"),
        shadings: [
            LinearImage::new(hflip_raster(s.shadings[0].raster())).expect("flip keeps invariants"),
            LinearImage::new(hflip_raster(s.shadings[1].raster())).expect("flip keeps invariants"),
        ],
        separated: [
            LinearImage::new(hflip_raster(s.separated[0].raster())).expect("flip keeps invariants"),
            LinearImage::new(hflip_raster(s.separated[1].raster())).expect("flip keeps invariants"),
        ],
        mask: ValidMask::new(s.mask.height(), w, bits).expect("flip keeps dims"),
        lights: s.lights,
    }
}

struct SampleLossParts {
    total: f64,
    alpha: f64,
    shading: f64,
    separation: f64,
}

/// Forward one sample through the mode's networks, compute the supervised
/// losses, backpropagate, and return per-parameter gradients (flattened in
/// role order) plus the loss parts.
fn sample_pass(
    mode: TrainMode,
    nets: &[Network],
    sample: &SceneSample,
    weights: &LossWeights,
    levels: usize,
) -> Result<(Vec<Tensor<f32>>, SampleLossParts)> {
    let ctx = LossContext::new(&sample.mask, levels)?;
    let mut g = Graph::<f32>::new();
    let x = g.leaf(raster_to_tensor(sample.input.raster()), false);
    let bounds: Vec<BoundParams> = nets.iter().map(|n| BoundParams::bind(&mut g, n, true)).collect();

    let gt_alpha = sample.albedo_chrom.raster();
    let gt_shadings = [sample.shadings[0].raster(), sample.shadings[1].raster()];
    let gt_separated = [sample.separated[0].raster(), sample.separated[1].raster()];

    let mut seeds: Vec<(super::NodeId, Tensor<f32>)> = Vec::new();
    let mut parts = SampleLossParts { total: 0.0, alpha: 0.0, shading: 0.0, separation: 0.0 };

    match mode {
        TrainMode::ChromOnly => {
            let alpha_id = forward_net(&mut g, Role::ChromNet, &bounds[0], x)?;
            let pred = tensor_to_raster(g.value(alpha_id), 0)?;
            let out = chrom_loss(&pred, gt_alpha, &ctx)?;
            parts.alpha = out.value;
            parts.total = weights.alpha * out.value;
            let mut seed: Tensor<f32> = raster_to_tensor(&out.grad);
            seed.scale_in_place(weights.alpha as f32);
            seeds.push((alpha_id, seed));
        }
        TrainMode::SingleNet => {
            let out_id = forward_net(&mut g, Role::SingleNet, &bounds[0], x)?;
            let p1 = tensor_to_raster(g.value(out_id), 0)?;
            let p2 = tensor_to_raster(g.value(out_id), 3)?;
            let out = separation_loss([&p1, &p2], gt_separated, &ctx)?;
            parts.separation = out.value;
            parts.total = weights.separation * out.value;
            let mut seed: Tensor<f32> = pair_to_tensor(&out.grads[0], &out.grads[1])?;
            seed.scale_in_place(weights.separation as f32);
            seeds.push((out_id, seed));
        }
        TrainMode::Full | TrainMode::FinalOnly => {
            let alpha_id = forward_net(&mut g, Role::ChromNet, &bounds[0], x)?;
            let shad_in = g.concat(x, alpha_id)?;
            let shad_id = forward_net(&mut g, Role::ShadingNet, &bounds[1], shad_in)?;
            let sep_in = g.concat(shad_id, x)?;
            let sep_id = forward_net(&mut g, Role::SeparateNet, &bounds[2], sep_in)?;

            let sp1 = tensor_to_raster(g.value(sep_id), 0)?;
            let sp2 = tensor_to_raster(g.value(sep_id), 3)?;
            let sep_out = separation_loss([&sp1, &sp2], gt_separated, &ctx)?;
            parts.separation = sep_out.value;
            parts.total += weights.separation * sep_out.value;
            let mut seed: Tensor<f32> = pair_to_tensor(&sep_out.grads[0], &sep_out.grads[1])?;
            seed.scale_in_place(weights.separation as f32);
            seeds.push((sep_id, seed));

            if mode == TrainMode::Full {
                let ap = tensor_to_raster(g.value(alpha_id), 0)?;
                let chrom_out = chrom_loss(&ap, gt_alpha, &ctx)?;
                parts.alpha = chrom_out.value;
                parts.total += weights.alpha * chrom_out.value;
                let mut seed: Tensor<f32> = raster_to_tensor(&chrom_out.grad);
                seed.scale_in_place(weights.alpha as f32);
                seeds.push((alpha_id, seed));

                let hp1 = tensor_to_raster(g.value(shad_id), 0)?;
                let hp2 = tensor_to_raster(g.value(shad_id), 3)?;
                let shad_out = shading_loss([&hp1, &hp2], gt_shadings, &ctx)?;
                parts.shading = shad_out.value;
                parts.total += weights.shading * shad_out.value;
                let mut seed: Tensor<f32> = pair_to_tensor(&shad_out.grads[0], &shad_out.grads[1])?;
                seed.scale_in_place(weights.shading as f32);
                seeds.push((shad_id, seed));
            }
        }
    }

    g.backward(seeds)?;

    let mut grads = Vec::new();
    for (net, bound) in nets.iter().zip(&bounds) {
        for (i, &id) in bound.ids().iter().enumerate() {
            let shape = net.params[i].value.shape();
            grads.push(g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(shape)));
        }
    }
    Ok((grads, parts))
}

/// Train from scratch or resume. Samples must share the dims the mode's
/// networks accept. On a non-finite loss, a diagnostic checkpoint is written
/// to `diag_dir` (when given) before the error returns.
pub fn train(
    config: &TrainConfig,
    samples: &[SceneSample],
    resume: Option<(ModelBundle, AdamState)>,
    diag_dir: Option<&Path>,
) -> Result<TrainOutput> {
    config.validate()?;
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }

    let (mut bundle, mut adam) = match resume {
        Some((bundle, adam)) => {
            if bundle.mode != config.mode {
                return Err(NnError::RoleMismatch(format!(
                    "checkpoint mode {} vs config mode {}",
                    bundle.mode.as_str(),
                    config.mode.as_str()
                )));
            }
            (bundle, adam)
        }
        None => {
            let bundle = ModelBundle::init(config.mode, config.seed);
            let shapes: Vec<[usize; 4]> = bundle
                .nets
                .iter()
                .flat_map(|n| n.params.iter().map(|p| p.value.shape()))
                .collect();
            (bundle, AdamState::new(&shapes))
        }
    };

    let n = samples.len();
    let steps_per_epoch = n.div_ceil(config.batch);
    let total_steps = steps_per_epoch * config.epochs;
    let lr_drop_epoch = config.resolved_lr_drop_epoch();
    let adam_base = config.adam();
    let mut metrics = Vec::with_capacity(total_steps.saturating_sub(bundle.step));

    let mut order: Vec<usize> = (0..n).collect();
    Rng::substream(config.seed, 0xe0c0).shuffle(&mut order);

    for epoch in 0..config.epochs {
        if (epoch + 1) * steps_per_epoch <= bundle.step {
            continue; // fully consumed before the resume point
        }
        let mut flip_rng = Rng::substream(config.seed, 0xf110_0000 + epoch as u64);
        let flips: Vec<bool> =
            (0..n).map(|_| config.augment_flips && flip_rng.uniform() < 0.5).collect();

        let lr_now = if epoch >= lr_drop_epoch {
            config.lr * config.lr_drop_factor
        } else {
            config.lr
        };
        let adam_cfg = AdamConfig { lr: lr_now, ..adam_base };

        for b in 0..steps_per_epoch {
            let step_index = epoch * steps_per_epoch + b;
            if step_index < bundle.step {
                continue;
            }

            let lo = b * config.batch;
            let hi = (lo + config.batch).min(n);
            let mut grad_accum: Option<Vec<Tensor<f32>>> = None;
            let mut parts_accum = SampleLossParts { total: 0.0, alpha: 0.0, shading: 0.0, separation: 0.0 };
            let batch_len = (hi - lo) as f64;

            for pos in lo..hi {
                let idx = order[pos];
                let sample;
                let sample_ref = if flips[pos] {
                    sample = hflip_sample(&samples[idx]);
                    &sample
                } else {
                    &samples[idx]
                };
                let (grads, parts) =
                    sample_pass(config.mode, &bundle.nets, sample_ref, &config.weights, config.levels)?;
                parts_accum.total += parts.total;
                parts_accum.alpha += parts.alpha;
                parts_accum.shading += parts.shading;
                parts_accum.separation += parts.separation;
                match &mut grad_accum {
                    None => grad_accum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            a.add_in_place(g)?;
                        }
                    }
                }
            }

            let mut grads = grad_accum.expect("non-empty batch");
            for t in &mut grads {
                t.scale_in_place(1.0 / batch_len as f32);
            }
            let total = parts_accum.total / batch_len;
            if !total.is_finite() {
                if let Some(dir) = diag_dir {
                    let _ = super::checkpoint::save_checkpoint(dir, &bundle, Some(&adam), config);
                }
                return Err(NnError::NonFinite {
                    step: step_index,
                    detail: format!("training loss {total}"),
                });
            }

            let mut flat_params: Vec<Tensor<f32>> = bundle
                .nets
                .iter()
                .flat_map(|n| n.params.iter().map(|p| p.value.clone()))
                .collect();
            adam.t += 1;
            adam_step(&mut flat_params, &grads, &mut adam.m, &mut adam.v, adam.t, &adam_cfg)?;
            let mut cursor = 0;
            for net in &mut bundle.nets {
                for p in &mut net.params {
                    p.value = flat_params[cursor].clone();
                    cursor += 1;
                }
            }

            bundle.step = step_index + 1;
            metrics.push(StepMetrics {
                step: bundle.step,
                epoch,
                lr: lr_now,
                total,
                loss_alpha: parts_accum.alpha / batch_len,
                loss_shading: parts_accum.shading / batch_len,
                loss_separation: parts_accum.separation / batch_len,
            });
        }
    }

    Ok(TrainOutput { bundle, adam, metrics })
}

/// Metrics log: one CSV row per step.
pub fn write_metrics_csv(path: impl AsRef<Path>, metrics: &[StepMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("step,epoch,lr,total,loss_alpha,loss_shading,loss_separation\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.step, m.epoch, m.lr, m.total, m.loss_alpha, m.loss_shading, m.loss_separation
        ));
    }
    std::fs::write(path, out).map_err(|e| NnError::Io { path: path.display().to_string(), source: e })
}
