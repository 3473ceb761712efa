use std::time::Instant;

use rand::seq::SliceRandom;

use super::config::{attempt_seed, LearnerConfig};
use super::model::CodeModel;
use super::relax::gumbel_noise;
use crate::embedding_io::EmbeddingTable;
use crate::error::{Error, Result};
use crate::optim::adam_update;
use crate::seeded_rng;

const DIVERGENCE_LOSS: f64 = 1e6;

/// Per-epoch mean relaxed loss and wall-clock time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Which restart produced this trace (0-based).
    pub attempt: usize,
}

impl LossTrace {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `epoch,loss` with 1-based epochs. Timing is left out so the file is
    /// reproducible.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

pub fn train(table: &EmbeddingTable, config: &LearnerConfig) -> Result<(CodeModel, LossTrace)> {
    train_with(table, config, |_, _, _| Ok(()))
}

/// Trains `config.restarts` attempts from fresh seeded initialisations and
/// keeps the one with the lowest final loss (earliest on ties).
///
/// `on_epoch(attempt, epoch, model)` runs after every epoch; both indices
/// are 1-based for epochs and 0-based for attempts. An attempt that diverges
/// is discarded unless every attempt diverges, in which case the first
/// divergence is returned.
pub fn train_with<F>(
    table: &EmbeddingTable,
    config: &LearnerConfig,
    mut on_epoch: F,
) -> Result<(CodeModel, LossTrace)>
where
    F: FnMut(usize, usize, &CodeModel) -> Result<()>,
{
    config.validate()?;
    if table.is_empty() {
        return Err(Error::Shape("cannot learn codes for an empty table".into()));
    }
    let mut best: Option<(CodeModel, LossTrace)> = None;
    let mut first_err = None;
    for attempt in 0..config.restarts {
        let mut rng = seeded_rng(attempt_seed(config.seed, attempt));
        let mut model = CodeModel::init(config.m, config.k, table.dim(), config.hidden_dim, &mut rng);
        match continue_training(table, config, &mut model, &mut rng, |e, m| on_epoch(attempt, e, m)) {
            Ok(mut trace) => {
                trace.attempt = attempt;
                let better = match &best {
                    Some((_, b)) => trace.last() < b.last(),
                    None => true,
                };
                if better {
                    best = Some((model, trace));
                }
            }
            Err(e @ Error::Diverged { .. }) => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| first_err.expect("at least one attempt ran"))
}

/// Runs `config.epochs` epochs of shuffled mini-batch Adam on an existing model.
pub fn continue_training<F, R>(
    table: &EmbeddingTable,
    config: &LearnerConfig,
    model: &mut CodeModel,
    rng: &mut R,
    mut on_epoch: F,
) -> Result<LossTrace>
where
    F: FnMut(usize, &CodeModel) -> Result<()>,
    R: rand::Rng + ?Sized,
{
    config.validate()?;
    if model.dim() != table.dim() || model.m() != config.m || model.k() != config.k {
        return Err(Error::Shape(format!(
            "model (M={}, K={}, D={}) does not match config (M={}, K={}) and table (D={})",
            model.m(),
            model.k(),
            model.dim(),
            config.m,
            config.k,
            table.dim()
        )));
    }
    let mk = config.m * config.k;
    let mut order: Vec<usize> = (0..table.len()).collect();
    let mut trace = LossTrace::default();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let rows: Vec<&[f32]> = batch.iter().map(|&i| table.row(i)).collect();
            let noise = gumbel_noise(rows.len() * mk, rng);
            let (loss, grads) = match model.batch_loss_and_grads(&rows, &noise, config.temperature) {
                Ok(v) => v,
                Err(Error::NonFiniteLoss { .. }) => {
                    return Err(Error::Diverged {
                        epoch,
                        loss: f64::NAN,
                        trace: trace.losses,
                    })
                }
                Err(e) => return Err(e),
            };
            total += loss * rows.len() as f64;
            model.step += 1;
            let step = model.step;
            for ((p, g), mom) in model
                .params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(model.moments.iter_mut())
            {
                adam_update(p, g, mom, &config.adam, config.learning_rate, 0.0, step);
            }
        }
        let epoch_loss = total / table.len() as f64;
        trace.losses.push(epoch_loss);
        trace.epoch_seconds.push(started.elapsed().as_secs_f64());
        if !epoch_loss.is_finite() || epoch_loss > DIVERGENCE_LOSS || !model.params.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: epoch_loss,
                trace: trace.losses,
            });
        }
        on_epoch(epoch, model)?;
    }
    Ok(trace)
}
