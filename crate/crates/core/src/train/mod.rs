//! Training protocol: stratified split, oversampling, class weighting,
//! augmented mini-batch Adadelta, balanced accuracy, repeated runs and
//! first-layer weight inspection.
//!
//! Labels are small integers; label 1 is the positive (minority) class and
//! receives `class_weight_ratio` in the loss, every other class weight 1.

mod inspect;
mod metrics;
mod split;

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use inspect::{inspect_first_layer, FirstLayerWeights, DEFAULT_THRESHOLD};
pub use metrics::{mean_std, Confusion};
pub use split::{oversample, stratified_split};

use crate::augment::{augment_seeded, AugmentConfig, AugmentError};
use crate::model::C2GImage;
use crate::nn::{
    self, argmax, build_deepcnet, build_deeplnino, Adadelta, AdadeltaState, Mode, Model, Network,
    NetworkSpec, NnError, Sample, Shape,
};
use crate::preview::PreviewError;
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("split needs at least two classes, found {classes}")]
    SplitDegenerate { classes: usize },
    #[error("class {class} has only {count} sample(s); both splits need one")]
    ClassWithTooFewSamples { class: u8, count: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("image {index} has no label")]
    Unlabeled { index: usize },
    #[error("image {index} is {found}, expected {expected}")]
    MixedShapes {
        index: usize,
        expected: Shape,
        found: Shape,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Preview(#[from] PreviewError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network family to train.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    #[default]
    #[serde(rename = "deeplnino")]
    DeepLNiNo,
    #[serde(rename = "deepcnet")]
    DeepCNet {
        layers: usize,
        growth: usize,
        dense_units: usize,
    },
}

impl Architecture {
    pub fn build(&self, input: Shape, classes: usize, l1: f64) -> Result<NetworkSpec, NnError> {
        let mut spec = match *self {
            Self::DeepLNiNo => build_deeplnino(input, classes)?,
            Self::DeepCNet {
                layers,
                growth,
                dense_units,
            } => build_deepcnet(layers, growth, input, dense_units, classes)?,
        };
        spec.l1 = l1;
        Ok(spec)
    }

    pub fn default_epochs(&self) -> usize {
        match self {
            Self::DeepLNiNo => 1000,
            Self::DeepCNet { .. } => 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub architecture: Architecture,
    /// Epoch budget; the architecture's default when unset.
    pub epochs: Option<usize>,
    pub batch_size: usize,
    /// Loss weight of label 1 relative to the other labels.
    pub class_weight_ratio: f64,
    pub oversample: bool,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub runs: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub optimizer: Adadelta,
    pub l1: f64,
    /// Stop a run once validation balanced accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    /// Train repeated runs concurrently.
    pub parallel_runs: bool,
    /// Free-text image description for the report table.
    pub image_type: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::DeepLNiNo,
            epochs: None,
            batch_size: 32,
            class_weight_ratio: 3.0,
            oversample: true,
            train_fraction: 2.0 / 3.0,
            validation_fraction: 1.0 / 3.0,
            runs: 10,
            seed: 0,
            augment: AugmentConfig::default(),
            optimizer: Adadelta::default(),
            l1: nn::DEFAULT_L1,
            stop_at_accuracy: None,
            parallel_runs: false,
            image_type: "C2G".into(),
        }
    }
}

impl TrainConfig {
    pub fn epochs(&self) -> usize {
        self.epochs
            .unwrap_or_else(|| self.architecture.default_epochs())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if (self.train_fraction + self.validation_fraction - 1.0).abs() > 1e-9 {
            return bad(format!(
                "fractions {} + {} do not sum to 1",
                self.train_fraction, self.validation_fraction
            ));
        }
        if !(self.train_fraction > 0.0 && self.validation_fraction > 0.0) {
            return bad("both split fractions must be positive".into());
        }
        if !(self.class_weight_ratio.is_finite() && self.class_weight_ratio > 0.0) {
            return bad(format!(
                "class weight ratio {} must be > 0",
                self.class_weight_ratio
            ));
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if self.runs == 0 {
            return bad("run count must be >= 1".into());
        }
        if !(self.l1.is_finite() && self.l1 >= 0.0) {
            return bad(format!("l1 = {} must be >= 0", self.l1));
        }
        let o = self.optimizer;
        if !(o.rho > 0.0 && o.rho < 1.0 && o.eps > 0.0) {
            return bad(format!(
                "adadelta rho {} / eps {} out of range",
                o.rho, o.eps
            ));
        }
        self.augment.validate()?;
        Ok(())
    }

    pub fn class_weights(&self, classes: usize) -> Vec<f32> {
        (0..classes)
            .map(|c| {
                if c == 1 {
                    self.class_weight_ratio as f32
                } else {
                    1.0
                }
            })
            .collect()
    }
}

/// Checks that every image is labelled and all share one shape. Returns
/// the labels and the common shape.
pub fn dataset_labels(images: &[C2GImage]) -> Result<(Vec<u8>, Shape), TrainError> {
    let first = images.first().ok_or(TrainError::EmptyDataset)?;
    let shape = image_shape(first);
    let mut labels = Vec::with_capacity(images.len());
    for (index, img) in images.iter().enumerate() {
        let found = image_shape(img);
        if found != shape {
            return Err(TrainError::MixedShapes {
                index,
                expected: shape,
                found,
            });
        }
        labels.push(img.label().ok_or(TrainError::Unlabeled { index })?);
    }
    Ok((labels, shape))
}

/// Network input shape of a grid image: height along x, width along y.
pub fn image_shape(img: &C2GImage) -> Shape {
    let s = img.spec();
    Shape::new(s.kx, s.ky, s.channels)
}

fn class_count(labels: &[u8]) -> usize {
    labels
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(2)
}

/// Confusion matrix of `params` on the selected images.
pub fn evaluate_params(
    net: &Network,
    params: &[f32],
    images: &[C2GImage],
    indices: &[usize],
) -> Result<Confusion, TrainError> {
    let preds: Vec<(usize, usize)> = indices
        .par_iter()
        .map(|&i| {
            let img = &images[i];
            let p = net.predict(params, img.data())?;
            let truth = img.label().ok_or(TrainError::Unlabeled { index: i })?;
            Ok((truth as usize, argmax(&p)))
        })
        .collect::<Result<_, TrainError>>()?;
    let mut c = Confusion::new(net.classes());
    for (t, p) in preds {
        if t >= net.classes() {
            return Err(NnError::BadLabel(t).into());
        }
        c.record(t, p);
    }
    Ok(c)
}

/// Result of evaluating a checkpoint on a labelled set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub balanced_accuracy: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

pub fn evaluate(model: &Model, images: &[C2GImage]) -> Result<Evaluation, TrainError> {
    if images.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (_, shape) = dataset_labels(images)?;
    if shape != model.spec.input {
        return Err(TrainError::ArchitectureMismatch {
            expected: model.spec.input.to_string(),
            found: shape.to_string(),
        });
    }
    let net = model.network()?;
    let idx: Vec<usize> = (0..images.len()).collect();
    let confusion = evaluate_params(&net, &model.params, images, &idx)?;
    Ok(Evaluation {
        balanced_accuracy: confusion.balanced_accuracy(),
        accuracy: confusion.accuracy(),
        confusion,
    })
}

/// History and outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs_run: usize,
    /// Validation balanced accuracy of the untrained network.
    pub initial_balanced_accuracy: f64,
    /// Validation balanced accuracy after the last epoch.
    pub balanced_accuracy: f64,
    pub best_balanced_accuracy: f64,
    /// 1-based epoch of the best value (0 = untrained).
    pub best_epoch: usize,
    pub confusion: Confusion,
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation balanced accuracy after each epoch.
    pub validation_balanced_accuracy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub record: RunRecord,
    /// Wall-clock time of the epoch loop.
    pub seconds: f64,
}

/// Trains from `params` on `train` and validates on `validation` after each
/// epoch.
///
/// Every epoch re-draws the oversampled (or shuffled) order, augments each
/// training sample with its own derived seed, and takes one Adadelta step
/// per mini-batch. Validation images are used as stored.
pub fn train_model(
    net: &Network,
    mut params: Vec<f32>,
    images: &[C2GImage],
    train: &[usize],
    validation: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let (labels, shape) = dataset_labels(images)?;
    if shape != net.input_shape() {
        return Err(TrainError::ArchitectureMismatch {
            expected: net.input_shape().to_string(),
            found: shape.to_string(),
        });
    }
    if params.len() != net.param_count() {
        return Err(NnError::ShapeMismatch {
            what: "parameters",
            expected: net.param_count(),
            found: params.len(),
        }
        .into());
    }
    let weights = cfg.class_weights(net.classes());
    let l1 = cfg.l1 as f32;
    let mut opt = AdadeltaState::<f32>::new(params.len(), cfg.optimizer);

    let initial = evaluate_params(net, &params, images, validation)?;
    let mut record = RunRecord {
        seed,
        train_size: train.len(),
        validation_size: validation.len(),
        epochs_run: 0,
        initial_balanced_accuracy: initial.balanced_accuracy(),
        balanced_accuracy: initial.balanced_accuracy(),
        best_balanced_accuracy: initial.balanced_accuracy(),
        best_epoch: 0,
        confusion: initial,
        train_loss: Vec::new(),
        validation_balanced_accuracy: Vec::new(),
    };
    let reached = |ba: f64| cfg.stop_at_accuracy.is_some_and(|t| ba >= t);

    let start = Instant::now();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs() {
        if reached(record.balanced_accuracy) {
            break;
        }
        let es = seed::derive_index(seed, epoch as u64);
        let order = if cfg.oversample {
            oversample(train, &labels, seed::derive(es, "order"))
        } else {
            let mut o = train.to_vec();
            o.shuffle(&mut seed::rng(seed::derive(es, "order")));
            o
        };
        let aug_seed = seed::derive(es, "augment");
        let drop_seed = seed::derive(es, "dropout");

        let mut loss_sum = 0.0f64;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let inputs: Vec<C2GImage> = chunk
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let s = seed::derive_index(aug_seed, (b * cfg.batch_size + j) as u64);
                    augment_seeded(&images[i], &cfg.augment, s)
                })
                .collect::<Result<_, _>>()?;
            let batch: Vec<Sample<'_, f32>> = inputs
                .iter()
                .zip(chunk)
                .map(|(img, &i)| Sample {
                    input: img.data(),
                    label: labels[i] as usize,
                })
                .collect();
            let out = net.loss_and_grads(
                &params,
                &batch,
                &weights,
                l1,
                Mode::Train(seed::derive_index(drop_seed, b as u64)),
            )?;
            opt.step(&mut params, &out.grads)?;
            loss_sum += out.loss as f64 * chunk.len() as f64;
            step += 1;
        }
        let c = evaluate_params(net, &params, images, validation)?;
        let ba = c.balanced_accuracy();
        record.train_loss.push(loss_sum / order.len() as f64);
        record.validation_balanced_accuracy.push(ba);
        record.epochs_run = epoch + 1;
        record.balanced_accuracy = ba;
        record.confusion = c;
        if ba > record.best_balanced_accuracy {
            record.best_balanced_accuracy = ba;
            record.best_epoch = epoch + 1;
        }
        log::debug!(
            "epoch {} steps {step} loss {:.5} val balanced accuracy {ba:.4}",
            epoch + 1,
            loss_sum / order.len() as f64
        );
    }
    let seconds = start.elapsed().as_secs_f64();
    let model = Model::new(net.spec().clone(), params)?;
    Ok(TrainOutcome {
        model,
        record,
        seconds,
    })
}

/// Aggregate over repeated runs, in the layout of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub model: String,
    pub image_type: String,
    pub resolution: String,
    pub architecture: String,
    pub parameters: usize,
    pub runs: Vec<RunRecord>,
    pub mean_balanced_accuracy: f64,
    /// Population standard deviation over runs.
    pub std_balanced_accuracy: f64,
    pub timing: Timing,
}

/// Wall-clock figures, kept apart so reports can be compared without them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub per_run_seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub mean_epoch_seconds: f64,
}

impl RunReport {
    /// Plain-text table with one row for this report.
    pub fn table(&self) -> String {
        let header = [
            "model",
            "image type",
            "resolution",
            "architecture",
            "balanced accuracy",
            "training time",
        ];
        let row = [
            self.model.clone(),
            self.image_type.clone(),
            self.resolution.clone(),
            self.architecture.clone(),
            format!(
                "{:.3} ({:.3})",
                self.mean_balanced_accuracy, self.std_balanced_accuracy
            ),
            format!("{:.1} s", self.timing.mean_seconds),
        ];
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, r)| h.chars().count().max(r.chars().count()))
            .collect();
        let mut out = String::new();
        for cells in [header.map(String::from), row] {
            let line: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Models and report of [`repeat_runs`].
#[derive(Debug, Clone)]
pub struct RepeatOutput {
    pub report: RunReport,
    pub models: Vec<Model>,
}

/// Seed of run `i` under the configured global seed.
pub fn run_seed(global: u64, i: usize) -> u64 {
    seed::derive_index(seed::derive(global, "runs"), i as u64)
}

/// `cfg.runs` independent runs, each with its own split, initialization,
/// and training seed stream.
pub fn repeat_runs(images: &[C2GImage], cfg: &TrainConfig) -> Result<RepeatOutput, TrainError> {
    let seeds: Vec<u64> = (0..cfg.runs).map(|i| run_seed(cfg.seed, i)).collect();
    repeat_runs_with_seeds(images, cfg, &seeds)
}

pub fn repeat_runs_with_seeds(
    images: &[C2GImage],
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<RepeatOutput, TrainError> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(TrainError::InvalidConfig("no runs requested".into()));
    }
    let (labels, shape) = dataset_labels(images)?;
    let spec = cfg
        .architecture
        .build(shape, class_count(&labels), cfg.l1)?;
    let net = Network::new(spec)?;

    let one = |&s: &u64| -> Result<TrainOutcome, TrainError> {
        let (train, val) = stratified_split(&labels, cfg.train_fraction, seed::derive(s, "split"))?;
        let params = net.init_params(seed::derive(s, "init"));
        let out = train_model(
            &net,
            params,
            images,
            &train,
            &val,
            cfg,
            seed::derive(s, "train"),
        )?;
        log::info!(
            "run seed {s:#x}: balanced accuracy {:.4} (best {:.4} at epoch {}) in {:.1} s",
            out.record.balanced_accuracy,
            out.record.best_balanced_accuracy,
            out.record.best_epoch,
            out.seconds
        );
        Ok(out)
    };
    let outcomes: Vec<TrainOutcome> = if cfg.parallel_runs {
        seeds.par_iter().map(one).collect::<Result<_, _>>()?
    } else {
        seeds.iter().map(one).collect::<Result<_, _>>()?
    };

    let accs: Vec<f64> = outcomes
        .iter()
        .map(|o| o.record.balanced_accuracy)
        .collect();
    let (mean, std) = mean_std(&accs);
    let per_run_seconds: Vec<f64> = outcomes.iter().map(|o| o.seconds).collect();
    let epochs: usize = outcomes.iter().map(|o| o.record.epochs_run).sum();
    let total: f64 = per_run_seconds.iter().sum();
    let timing = Timing {
        mean_seconds: total / per_run_seconds.len() as f64,
        mean_epoch_seconds: if epochs > 0 {
            total / epochs as f64
        } else {
            0.0
        },
        per_run_seconds,
    };
    let report = RunReport {
        model: net.spec().name.clone(),
        image_type: cfg.image_type.clone(),
        resolution: format!("{}x{}", shape.h, shape.w),
        architecture: describe(net.spec()),
        parameters: net.param_count(),
        mean_balanced_accuracy: mean,
        std_balanced_accuracy: std,
        runs: outcomes.iter().map(|o| o.record.clone()).collect(),
        timing,
    };
    Ok(RepeatOutput {
        report,
        models: outcomes.into_iter().map(|o| o.model).collect(),
    })
}

fn describe(spec: &NetworkSpec) -> String {
    let convs = spec
        .layers
        .iter()
        .filter(|l| matches!(l, nn::LayerSpec::Conv { .. }))
        .count();
    let pools = spec
        .layers
        .iter()
        .filter(|l| matches!(l, nn::LayerSpec::MaxPool { .. }))
        .count();
    format!("{convs} conv / {pools} pool, input {}", spec.input)
}
