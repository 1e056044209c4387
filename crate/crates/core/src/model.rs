//! The full network: parameters plus bag-level forward pass.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution};

use crate::config::ModelConfig;
use crate::data::Instance;
use crate::encoder::{bilstm_encode, embed_sequence, BiLstmParams, EmbeddingTables};
use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamStore, Real, Tape, Var};
use crate::sent_attention::{
    average_attention, classify, selection_representation, sentence_attention_matrix, stack_bag,
    SentAttentionParams,
};
use crate::word_attention::{
    attention_penalty, flatten_project, weighted_sentence_matrix, word_attention_matrix, WordAttentionParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelParams {
    pub embeddings: EmbeddingTables,
    pub lstm: BiLstmParams,
    pub word: WordAttentionParams,
    pub sent: SentAttentionParams,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub params: ModelParams,
    pub vocab_size: usize,
}

/// Tape handles for one encoded instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceTrace {
    /// `[2u x T]`
    pub h: Var,
    /// `[r_l1 x T]`
    pub a_l1: Var,
    /// `[r_l1 x 2u]`
    pub m_l1: Var,
    /// `[v x 1]`
    pub representation: Var,
    /// `1 x 1`
    pub penalty: Var,
}

/// Tape handles for one bag.
#[derive(Clone, Debug)]
pub struct BagTrace {
    pub instances: Vec<InstanceTrace>,
    /// `[v x J]`
    pub o_l1: Var,
    /// `[r_l2 x J]`
    pub a_l2: Var,
    /// `[1 x J]`
    pub a_bar: Var,
    /// `[v x 1]`
    pub m_l2: Var,
    /// `[1 x C]`
    pub probs: Var,
}

/// Plain values from a bag forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BagOutput<T> {
    pub probs: Vec<T>,
    pub a_bar: Vec<T>,
    pub a_l2: Matrix<T>,
    pub word_attention: Vec<Matrix<T>>,
    pub representations: Matrix<T>,
    pub selection: Vec<T>,
}

impl<T: Real> Model<T> {
    /// Builds a freshly initialized model. `config.num_classes` must be set.
    pub fn new<R: Rng>(config: &ModelConfig, vocab_size: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if config.num_classes == 0 {
            return Err(Error::Config("number of relation classes is unset".into()));
        }
        let mut store = ParamStore::new();
        let embeddings = EmbeddingTables::register(&mut store, config, vocab_size, rng);
        let lstm = BiLstmParams::register(&mut store, config, rng);
        let word = WordAttentionParams::register(&mut store, config, rng);
        let sent = SentAttentionParams::register(&mut store, config, config.num_classes, rng);
        Ok(Self {
            config: config.clone(),
            store,
            params: ModelParams {
                embeddings,
                lstm,
                word,
                sent,
            },
            vocab_size,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Encoder, word attention and instance representation for one sentence.
    pub fn forward_instance(&self, tape: &mut Tape<'_, T>, instance: &Instance) -> Result<InstanceTrace> {
        let cfg = &self.config;
        let embedded = embed_sequence(tape, instance, &self.params.embeddings, cfg)?;
        let h = bilstm_encode(
            tape,
            embedded,
            instance.true_length,
            &self.params.lstm,
            cfg.mask_padding,
        )?;
        let valid = cfg.mask_padding.then_some(instance.true_length);
        let a_l1 = word_attention_matrix(tape, h, &self.params.word, valid)?;
        let m_l1 = weighted_sentence_matrix(tape, a_l1, h)?;
        let representation = flatten_project(tape, m_l1, &self.params.word)?;
        let penalty = attention_penalty(tape, a_l1);
        Ok(InstanceTrace {
            h,
            a_l1,
            m_l1,
            representation,
            penalty,
        })
    }

    /// Full bag forward pass. With `dropout_rng`, inverted dropout at
    /// `config.dropout` is applied to each instance representation.
    pub fn forward_bag<R: Rng>(
        &self,
        tape: &mut Tape<'_, T>,
        instances: &[&Instance],
        dropout_rng: Option<&mut R>,
    ) -> Result<BagTrace> {
        let traces = instances
            .iter()
            .map(|inst| self.forward_instance(tape, inst))
            .collect::<Result<Vec<_>>>()?;
        let mut reps: Vec<Var> = traces.iter().map(|t| t.representation).collect();
        if let (Some(rng), true) = (dropout_rng, self.config.dropout > 0.0) {
            let keep = 1.0 - self.config.dropout;
            let dist = Bernoulli::new(keep).expect("keep probability in (0, 1]");
            let scale = T::of(1.0 / keep);
            for r in reps.iter_mut() {
                let mask = Matrix::from_fn(tape.shape(*r).0, 1, |_, _| {
                    if dist.sample(rng) {
                        scale
                    } else {
                        T::zero()
                    }
                });
                let mask = tape.constant(mask);
                *r = tape.mul(*r, mask)?;
            }
        }
        let o_l1 = stack_bag(tape, &reps)?;
        let a_l2 = sentence_attention_matrix(tape, o_l1, &self.params.sent)?;
        let a_bar = average_attention(tape, a_l2);
        let m_l2 = selection_representation(tape, a_bar, o_l1)?;
        let probs = classify(tape, m_l2, &self.params.sent)?;
        Ok(BagTrace {
            instances: traces,
            o_l1,
            a_l2,
            a_bar,
            m_l2,
            probs,
        })
    }

    /// Inference-mode forward pass returning plain values.
    pub fn run_bag(&self, instances: &[&Instance]) -> Result<BagOutput<T>> {
        let mut tape = Tape::new(&self.store);
        let trace = self.forward_bag::<rand_chacha::ChaCha8Rng>(&mut tape, instances, None)?;
        Ok(BagOutput {
            probs: tape.value(trace.probs).data().to_vec(),
            a_bar: tape.value(trace.a_bar).data().to_vec(),
            a_l2: tape.value(trace.a_l2).clone(),
            word_attention: trace
                .instances
                .iter()
                .map(|t| tape.value(t.a_l1).clone())
                .collect(),
            representations: tape.value(trace.o_l1).clone(),
            selection: tape.value(trace.m_l2).data().to_vec(),
        })
    }

    /// Class probabilities for a bag.
    pub fn predict(&self, instances: &[&Instance]) -> Result<Vec<T>> {
        Ok(self.run_bag(instances)?.probs)
    }
}
