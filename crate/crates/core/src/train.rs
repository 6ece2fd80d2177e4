//! Epoch loop with gradient accumulation and best-validation-loss selection.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::TrainingExample;
use crate::nn::{AdamSettings, AdamState, Gradients, Mode, ModelConfig, ModelError, ModelParams};
use crate::par::{self, Execution};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty {0} set")]
    EmptyDataset(&'static str),
    #[error("example {index} of the {set} set does not fit the model vocabularies")]
    VocabMismatch { set: &'static str, index: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub max_epochs: usize,
    /// Examples per gradient-accumulation group.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Stop after this many epochs without validation-loss improvement.
    pub patience: Option<usize>,
    pub execution: Execution,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            max_epochs: 30,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
            patience: None,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

impl EpochStats {
    /// `epoch<TAB>train_loss<TAB>train_acc<TAB>valid_loss<TAB>valid_acc`
    pub fn log_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.train_loss, self.train_accuracy, self.valid_loss, self.valid_accuracy
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 0-based index into `epochs`.
    pub best_epoch: usize,
}

pub const HISTORY_HEADER: &str = "epoch\ttrain_loss\ttrain_acc\tvalid_loss\tvalid_acc";

impl TrainHistory {
    pub fn best(&self) -> Option<&EpochStats> {
        self.epochs.get(self.best_epoch)
    }

    /// Tab-separated, one header line, then one line per epoch, then the
    /// 1-based best epoch as `best<TAB>n`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{HISTORY_HEADER}")?;
        for e in &self.epochs {
            writeln!(w, "{}", e.log_line())?;
        }
        writeln!(w, "best\t{}", self.best_epoch + 1)?;
        w.flush()
    }
}

/// Index of the smallest loss; the earliest one wins ties.
pub fn select_best(losses: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &l) in losses.iter().enumerate() {
        if best.is_none_or(|b| l < losses[b]) {
            best = Some(i);
        }
    }
    best
}

fn check_set(
    config: &ModelConfig,
    set: &'static str,
    examples: &[TrainingExample],
) -> Result<(), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset(set));
    }
    let bad = examples.iter().position(|e| {
        e.target_index >= config.output_vocab_size
            || e.input_indices.is_empty()
            || e.input_indices
                .iter()
                .any(|&i| i >= config.input_vocab_size)
    });
    match bad {
        Some(index) => Err(TrainError::VocabMismatch { set, index }),
        None => Ok(()),
    }
}

/// Mean cross-entropy (no weight penalty) and accuracy in inference mode.
pub fn evaluate(
    params: &ModelParams,
    examples: &[TrainingExample],
    exec: Execution,
) -> Result<(f64, f64), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    let per_example = par::map(exec, examples, |ex| {
        params.forward(&ex.input_indices, Mode::Infer).map(|pass| {
            (
                pass.cross_entropy(ex.target_index),
                pass.argmax() == ex.target_index,
            )
        })
    });
    let mut loss = 0.0;
    let mut correct = 0usize;
    for r in per_example {
        let (l, ok) = r?;
        loss += l;
        correct += ok as usize;
    }
    let n = examples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Fraction of examples whose predicted tag equals the target.
pub fn accuracy(params: &ModelParams, examples: &[TrainingExample]) -> Result<f64, TrainError> {
    Ok(evaluate(params, examples, Execution::default())?.1)
}

/// Average gradient of a group; member `k` draws its dropout masks from
/// `ChaCha8Rng::seed_from_u64(seeds[k])`.
pub fn group_gradient(
    params: &ModelParams,
    members: &[&TrainingExample],
    seeds: &[u64],
    exec: Execution,
) -> Result<Gradients, TrainError> {
    let jobs: Vec<(&TrainingExample, u64)> =
        members.iter().copied().zip(seeds.iter().copied()).collect();
    let grads = par::map(exec, &jobs, |&(ex, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pass = params.forward(&ex.input_indices, Mode::Train(&mut rng))?;
        params.backward(&pass, ex.target_index)
    });
    let mut total = Gradients::zeros(params.len());
    for g in grads {
        total.add_assign(&g?);
    }
    total.scale(1.0 / jobs.len() as f64);
    Ok(total)
}

pub fn train(
    config: &ModelConfig,
    options: &TrainOptions,
    train_set: &[TrainingExample],
    valid_set: &[TrainingExample],
) -> Result<(ModelParams, TrainHistory), TrainError> {
    train_with_progress(config, options, train_set, valid_set, |_| {})
}

/// [`train`] calling `on_epoch` after every epoch.
pub fn train_with_progress<F: FnMut(&EpochStats)>(
    config: &ModelConfig,
    options: &TrainOptions,
    train_set: &[TrainingExample],
    valid_set: &[TrainingExample],
    mut on_epoch: F,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    check_set(config, "training", train_set)?;
    check_set(config, "validation", valid_set)?;
    if options.batch_size == 0 || options.max_epochs == 0 || options.learning_rate <= 0.0 {
        return Err(ModelError::InvalidConfig(
            "batch size, epochs and learning rate must be positive".into(),
        )
        .into());
    }
    let mut params = ModelParams::init(config)?;
    let mut adam = AdamState::new(params.len());
    let settings = AdamSettings {
        learning_rate: options.learning_rate,
        ..AdamSettings::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=options.max_epochs {
        order.shuffle(&mut rng);
        for group in order.chunks(options.batch_size) {
            let members: Vec<&TrainingExample> = group.iter().map(|&i| &train_set[i]).collect();
            let seeds: Vec<u64> = group.iter().map(|_| rng.gen()).collect();
            let grads = group_gradient(&params, &members, &seeds, options.execution)?;
            params.adam_step(&grads, &mut adam, &settings)?;
        }
        if !params.is_finite() {
            return Err(ModelError::NonFinite.into());
        }
        let (train_loss, train_accuracy) = evaluate(&params, train_set, options.execution)?;
        let (valid_loss, valid_accuracy) = evaluate(&params, valid_set, options.execution)?;
        let stats = EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            valid_loss,
            valid_accuracy,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
        if best.as_ref().is_none_or(|(l, _)| valid_loss < *l) {
            best = Some((valid_loss, params.clone()));
            history.best_epoch = epoch - 1;
            since_best = 0;
        } else {
            since_best += 1;
            if options.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    Ok((best_params, history))
}
