//! Probe training protocol: full-batch adaptive-moment updates for a fixed
//! number of epochs, several seeds, post-hoc selection of the epoch with
//! the best dev F1 on the task's class of interest.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::negdata::AlignedSentence;
use crate::report::{Cell, Table};
use crate::tracestore::{Side, TraceSet};

use super::mlp::{AdamState, MlpParams};
use super::{evaluate, token_dataset, Pooling, ProbeExample, ProbeTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub hidden: usize,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            seeds: vec![0, 1, 2, 3, 4],
            hidden: 512,
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Where and how a trained probe was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMeta {
    pub task: ProbeTask,
    pub side: Side,
    pub layer: usize,
    pub seed: u64,
    pub best_dev_f1: f64,
    pub epoch_selected: usize,
    pub epochs: usize,
    pub seed_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedProbe {
    pub model: MlpParams,
    pub meta: ProbeMeta,
}

fn check_dataset(name: &str, data: &[ProbeExample], input: usize, classes: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid_input(format!("{name} set is empty")));
    }
    for ex in data {
        if ex.vector.len() != input {
            return Err(Error::validation(format!(
                "{name} set mixes vector dimensions ({} vs {input})",
                ex.vector.len()
            )));
        }
        if ex.label >= classes {
            return Err(Error::validation(format!(
                "{name} set has label {} but the task has {classes} classes",
                ex.label
            )));
        }
    }
    Ok(())
}

fn dev_f1(model: &MlpParams, dev: &[ProbeExample], class: usize) -> Result<f64> {
    let mut preds = Vec::with_capacity(dev.len());
    for ex in dev {
        preds.push(model.predict(&ex.vector)?);
    }
    let gold: Vec<usize> = dev.iter().map(|ex| ex.label).collect();
    Ok(evaluate(&preds, &gold, class)?.f1)
}

/// Trains one probe per seed and returns, per seed, the epoch snapshot
/// with the highest dev F1 (epoch 0 = the untrained initialization, so the
/// result is never worse than not training).
pub fn train_probe(
    train: &[ProbeExample],
    dev: &[ProbeExample],
    task: ProbeTask,
    side: Side,
    layer: usize,
    config: &TrainConfig,
) -> Result<Vec<TrainedProbe>> {
    let Some(first) = train.first() else {
        return Err(Error::invalid_input("train set is empty"));
    };
    let input = first.vector.len();
    if input == 0 {
        return Err(Error::validation("probe examples have zero-dimensional vectors"));
    }
    let classes = task.class_count();
    check_dataset("train", train, input, classes)?;
    check_dataset("dev", dev, input, classes)?;
    if config.seeds.is_empty() {
        return Err(Error::invalid_input("at least one seed is required"));
    }
    if config.hidden == 0 {
        return Err(Error::invalid_input("hidden size must be positive"));
    }

    let xs: Vec<Vec<f64>> = train.iter().map(|ex| ex.vector.clone()).collect();
    let ys: Vec<usize> = train.iter().map(|ex| ex.label).collect();
    let class = task.selection_class();

    config
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut model = MlpParams::init(input, config.hidden, classes, seed);
            let mut adam = AdamState::new(
                &model,
                config.step_size,
                config.beta1,
                config.beta2,
                config.epsilon,
            );
            let mut best_f1 = dev_f1(&model, dev, class)?;
            let mut best_epoch = 0usize;
            let mut best_model = model.clone();
            for epoch in 1..=config.epochs {
                let grads = model.grads(&xs, &ys)?;
                adam.step(&mut model, &grads);
                let f1 = dev_f1(&model, dev, class)?;
                if f1 > best_f1 {
                    best_f1 = f1;
                    best_epoch = epoch;
                    best_model = model.clone();
                }
            }
            Ok(TrainedProbe {
                model: best_model,
                meta: ProbeMeta {
                    task,
                    side,
                    layer,
                    seed,
                    best_dev_f1: best_f1,
                    epoch_selected: best_epoch,
                    epochs: config.epochs,
                    seed_count: config.seeds.len(),
                },
            })
        })
        .collect()
}

/// Arithmetic mean of the per-seed selected dev F1 values.
pub fn mean_dev_f1(probes: &[TrainedProbe]) -> f64 {
    probes.iter().map(|p| p.meta.best_dev_f1).sum::<f64>() / probes.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSweepRow {
    pub layer: usize,
    pub mean_dev_f1: f64,
}

/// Runs the full training protocol once per encoder layer (0 = embeddings
/// through the top layer) and reports the mean dev F1 per layer.
pub fn layer_sweep(
    train_corpus: &[AlignedSentence],
    dev_corpus: &[AlignedSentence],
    traces: &TraceSet,
    task: ProbeTask,
    pooling: Pooling,
    config: &TrainConfig,
) -> Result<(Vec<LayerSweepRow>, Vec<String>)> {
    let enc_layers = traces.dims().enc_layers;
    let mut rows = Vec::with_capacity(enc_layers + 1);
    let mut warnings = Vec::new();
    for layer in 0..=enc_layers {
        let (train, train_warn) =
            token_dataset(train_corpus, traces, Side::Encoder, layer, task, pooling)?;
        let (dev, _) = token_dataset(dev_corpus, traces, Side::Encoder, layer, task, pooling)?;
        if layer == 0 {
            warnings = train_warn;
        }
        let probes = train_probe(&train, &dev, task, Side::Encoder, layer, config)?;
        rows.push(LayerSweepRow { layer, mean_dev_f1: mean_dev_f1(&probes) });
    }
    Ok((rows, warnings))
}

pub fn sweep_table(rows: &[LayerSweepRow]) -> Table {
    let mut table = Table::new("layer_sweep", ["layer", "mean_dev_f1"]);
    for row in rows {
        table.push_row(vec![Cell::from(row.layer as i64), Cell::from(row.mean_dev_f1)]);
    }
    table
}
