//! Objective assembly, ADAM, the epoch loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;

use std::io::Write;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{clip_global_norm, Adam};
pub use checkpoint::{Checkpoint, NamedTensor, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{batch_objective, loss_and_gradients, total_loss, LossBreakdown};

use crate::config::ModelConfig;
use crate::data::{make_batches, Bag, Dataset, PretrainedEmbeddings};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::Real;

/// One row of the loss log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: LossBreakdown,
}

pub const LOSS_LOG_HEADER: &str = "epoch,batch,loss,penalty,ce,l2";

pub fn write_loss_log(path: &Path, log: &[LossRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{LOSS_LOG_HEADER}")?;
    for r in log {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.epoch, r.batch, r.loss.total, r.loss.penalty, r.loss.ce, r.loss.l2
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Mean batch loss per epoch.
pub fn epoch_means(log: &[LossRecord]) -> Vec<f64> {
    let epochs = log.iter().map(|r| r.epoch + 1).max().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let rows: Vec<f64> = log
                .iter()
                .filter(|r| r.epoch == e)
                .map(|r| r.loss.total)
                .collect();
            rows.iter().sum::<f64>() / rows.len() as f64
        })
        .collect()
}

/// Stateful training loop over one dataset.
pub struct Trainer<'d, T> {
    dataset: &'d Dataset,
    model: Model<T>,
    optimizer: Adam,
    rng: ChaCha8Rng,
    epoch: usize,
    log: Vec<LossRecord>,
}

impl<'d, T: Real> Trainer<'d, T> {
    /// Initializes a model from `config.seed`. `config.num_classes = 0` takes the class count from the data.
    pub fn new(dataset: &'d Dataset, config: &ModelConfig) -> Result<Self> {
        Self::with_embeddings(dataset, config, None)
    }

    pub fn with_embeddings(
        dataset: &'d Dataset,
        config: &ModelConfig,
        pretrained: Option<&PretrainedEmbeddings>,
    ) -> Result<Self> {
        if dataset.bags.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        let mut config = config.clone();
        if config.num_classes == 0 {
            config.num_classes = dataset.num_relations();
        }
        if config.num_classes != dataset.num_relations() {
            return Err(Error::VocabularyMismatch(format!(
                "config has {} classes, dataset has {} relations",
                config.num_classes,
                dataset.num_relations()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut model = Model::new(&config, dataset.vocab.len(), &mut rng)?;
        if let Some(p) = pretrained {
            model
                .params
                .embeddings
                .load_pretrained(&mut model.store, &dataset.vocab, p)?;
        }
        Ok(Self {
            dataset,
            optimizer: Adam::from_config(&config),
            model,
            rng,
            epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn log(&self) -> &[LossRecord] {
        &self.log
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// One pass over shuffled mini-batches. Returns the epoch's rows of the loss log.
    pub fn run_epoch(&mut self) -> Result<&[LossRecord]> {
        let cfg = self.model.config.clone();
        let start = self.log.len();
        let batches = make_batches(self.dataset.bags.len(), cfg.batch_size, self.rng.next_u64())?;
        for (b, idx) in batches.iter().enumerate() {
            let bags: Vec<&Bag> = idx.iter().map(|&i| &self.dataset.bags[i]).collect();
            let dropout_seed = (cfg.dropout > 0.0).then(|| self.rng.next_u64());
            self.model.store.zero_grad();
            let (loss, grads) = batch_objective(&self.model, &bags, true, dropout_seed)?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: b,
                    bag_id: bags
                        .iter()
                        .map(|x| x.bag_id.as_str())
                        .min()
                        .unwrap_or("")
                        .to_string(),
                    detail: format!("{loss:?}"),
                });
            }
            self.model.store.accumulate(&grads);
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut self.model.store, cfg.clip_norm);
            }
            self.optimizer.step(&mut self.model.store);
            self.log.push(LossRecord {
                epoch: self.epoch,
                batch: b,
                loss,
            });
        }
        self.epoch += 1;
        Ok(&self.log[start..])
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(
            &self.model,
            &self.dataset.relations,
            &self.dataset.vocab,
            &self.rng,
        )
    }

    pub fn into_parts(self) -> (Model<T>, Vec<LossRecord>, ChaCha8Rng) {
        (self.model, self.log, self.rng)
    }
}

/// Result of [`train`].
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
}

/// Runs `config.epochs` epochs from a fresh initialization.
pub fn train<T: Real>(dataset: &Dataset, config: &ModelConfig) -> Result<TrainOutcome<T>> {
    let mut trainer = Trainer::new(dataset, config)?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    let checkpoint = trainer.checkpoint();
    let (model, log, _) = trainer.into_parts();
    Ok(TrainOutcome {
        model,
        checkpoint,
        log,
    })
}
