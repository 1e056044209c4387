//! Hyper-parameters for the model, optimizer and training loop.

use std::fmt;

use crate::error::{Error, Result};

/// Which sentence-level attention the config describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// One sentence-level attention row.
    Mlssa1,
    /// Several sentence-level attention rows, averaged.
    Mlssa2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Mlssa1 => f.write_str("MLSSA-1"),
            Variant::Mlssa2 => f.write_str("MLSSA-2"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Word embedding size `d`.
    pub word_dim: usize,
    /// Total position embedding size `d_p` (split evenly between head and tail).
    pub pos_dim: usize,
    /// Relative distances are clipped to `[-max_distance, max_distance]`.
    pub max_distance: usize,
    /// Time steps `T`; sentences are padded or cut to this length.
    pub time_steps: usize,
    /// BiLSTM hidden size `u` per direction.
    pub hidden: usize,
    pub attn_dim_l1: usize,
    pub attn_rows_l1: usize,
    /// MLP size `v`.
    pub mlp_size: usize,
    pub attn_dim_l2: usize,
    pub attn_rows_l2: usize,
    /// Relation classes `C`, including the none-relation. `0` means "take from data".
    pub num_classes: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub penalty_coef: f64,
    pub l2_coef: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub mask_padding: bool,
    pub penalize_l2_attention: bool,
    /// Dropout rate on instance representations; `0` disables it.
    pub dropout: f64,
    /// Global gradient-norm clip; `0` disables it.
    pub clip_norm: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::nyt()
    }
}

impl ModelConfig {
    /// Published settings for the NYT corpus.
    pub fn nyt() -> Self {
        Self {
            word_dim: 200,
            pos_dim: 50,
            max_distance: 30,
            time_steps: 70,
            hidden: 300,
            attn_dim_l1: 300,
            attn_rows_l1: 9,
            mlp_size: 1000,
            attn_dim_l2: 300,
            attn_rows_l2: 9,
            num_classes: 0,
            batch_size: 64,
            learning_rate: 0.001,
            penalty_coef: 1.0,
            l2_coef: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 30,
            seed: 1,
            mask_padding: true,
            penalize_l2_attention: false,
            dropout: 0.0,
            clip_norm: 0.0,
        }
    }

    /// Published settings for the Portuguese DBpedia corpus.
    pub fn pt() -> Self {
        Self {
            word_dim: 300,
            batch_size: 50,
            attn_rows_l1: 5,
            attn_rows_l2: 3,
            ..Self::nyt()
        }
    }

    /// Scaled-down configuration sized for the synthetic corpus.
    pub fn synthetic() -> Self {
        Self {
            word_dim: 32,
            pos_dim: 10,
            time_steps: 20,
            hidden: 32,
            attn_dim_l1: 32,
            attn_rows_l1: 4,
            mlp_size: 64,
            attn_dim_l2: 32,
            attn_rows_l2: 3,
            batch_size: 32,
            ..Self::nyt()
        }
    }

    /// The smallest configuration, used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            word_dim: 3,
            pos_dim: 2,
            max_distance: 3,
            time_steps: 5,
            hidden: 2,
            attn_dim_l1: 4,
            attn_rows_l1: 2,
            mlp_size: 6,
            attn_dim_l2: 4,
            attn_rows_l2: 2,
            num_classes: 4,
            batch_size: 2,
            ..Self::nyt()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "nyt" => Ok(Self::nyt()),
            "pt" => Ok(Self::pt()),
            "synth" | "synthetic" => Ok(Self::synthetic()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Config(format!(
                "unknown profile `{other}` (expected nyt, pt, synth or tiny)"
            ))),
        }
    }

    pub fn variant(&self) -> Variant {
        if self.attn_rows_l2 == 1 {
            Variant::Mlssa1
        } else {
            Variant::Mlssa2
        }
    }

    /// Number of position buckets per table: `2·P_max + 1` distances plus padding.
    pub fn position_buckets(&self) -> usize {
        2 * self.max_distance + 2
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + self.pos_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.word_dim),
            ("d_p", self.pos_dim),
            ("t", self.time_steps),
            ("u", self.hidden),
            ("d_a_l1", self.attn_dim_l1),
            ("r_l1", self.attn_rows_l1),
            ("v", self.mlp_size),
            ("d_a_l2", self.attn_dim_l2),
            ("r_l2", self.attn_rows_l2),
            ("batch_size", self.batch_size),
        ];
        for (key, value) in dims {
            if value == 0 {
                return Err(Error::Config(format!("`{key}` must be at least 1")));
            }
        }
        if !self.pos_dim.is_multiple_of(2) {
            return Err(Error::Config(format!("`d_p` must be even, got {}", self.pos_dim)));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("`learning_rate` must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("`dropout` must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("ADAM betas must lie in [0, 1)".into()));
        }
        if self.penalty_coef < 0.0 || self.l2_coef < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config(
                "`penalty_coef`, `l2_coef` and `clip_norm` must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Sets one key from its textual value. Keys are those listed by [`ModelConfig::keys`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
        }
        match key {
            "d" => self.word_dim = parse(key, value)?,
            "d_p" => self.pos_dim = parse(key, value)?,
            "p_max" => self.max_distance = parse(key, value)?,
            "t" => self.time_steps = parse(key, value)?,
            "u" => self.hidden = parse(key, value)?,
            "d_a_l1" => self.attn_dim_l1 = parse(key, value)?,
            "r_l1" => self.attn_rows_l1 = parse(key, value)?,
            "v" => self.mlp_size = parse(key, value)?,
            "d_a_l2" => self.attn_dim_l2 = parse(key, value)?,
            "r_l2" => self.attn_rows_l2 = parse(key, value)?,
            "classes" => self.num_classes = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "penalty_coef" => self.penalty_coef = parse(key, value)?,
            "l2_coef" => self.l2_coef = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mask_padding" => self.mask_padding = parse(key, value)?,
            "penalize_l2_attention" => self.penalize_l2_attention = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d", self.word_dim.to_string()),
            ("d_p", self.pos_dim.to_string()),
            ("p_max", self.max_distance.to_string()),
            ("t", self.time_steps.to_string()),
            ("u", self.hidden.to_string()),
            ("d_a_l1", self.attn_dim_l1.to_string()),
            ("r_l1", self.attn_rows_l1.to_string()),
            ("v", self.mlp_size.to_string()),
            ("d_a_l2", self.attn_dim_l2.to_string()),
            ("r_l2", self.attn_rows_l2.to_string()),
            ("classes", self.num_classes.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", fmt_float(self.learning_rate)),
            ("penalty_coef", fmt_float(self.penalty_coef)),
            ("l2_coef", fmt_float(self.l2_coef)),
            ("beta1", fmt_float(self.beta1)),
            ("beta2", fmt_float(self.beta2)),
            ("epsilon", fmt_float(self.epsilon)),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("mask_padding", self.mask_padding.to_string()),
            ("penalize_l2_attention", self.penalize_l2_attention.to_string()),
            ("dropout", fmt_float(self.dropout)),
            ("clip_norm", fmt_float(self.clip_norm)),
        ]
    }

    /// Key documentation: (key, meaning, origin of the default).
    pub fn keys() -> &'static [(&'static str, &'static str, &'static str)] {
        const PUBLISHED: &str = "published setting";
        const CHOSEN: &str = "engine default";
        &[
            ("d", "word embedding dimension", PUBLISHED),
            ("d_p", "position embedding dimension (head + tail)", PUBLISHED),
            ("p_max", "relative distance clip", CHOSEN),
            ("t", "time steps (pad/cut length)", PUBLISHED),
            ("u", "BiLSTM hidden size per direction", PUBLISHED),
            ("d_a_l1", "word-level attention width", PUBLISHED),
            ("r_l1", "word-level attention rows", PUBLISHED),
            ("v", "MLP size", PUBLISHED),
            ("d_a_l2", "sentence-level attention width", PUBLISHED),
            ("r_l2", "sentence-level attention rows (1 = MLSSA-1)", PUBLISHED),
            ("classes", "relation classes (0 = from data)", CHOSEN),
            ("batch_size", "bags per mini-batch", PUBLISHED),
            ("learning_rate", "ADAM learning rate", PUBLISHED),
            ("penalty_coef", "word attention penalty coefficient", PUBLISHED),
            ("l2_coef", "L2 coefficient on weight matrices", CHOSEN),
            ("beta1", "ADAM first-moment decay", CHOSEN),
            ("beta2", "ADAM second-moment decay", CHOSEN),
            ("epsilon", "ADAM epsilon", CHOSEN),
            ("epochs", "training epochs", CHOSEN),
            ("seed", "RNG seed", CHOSEN),
            (
                "mask_padding",
                "mask BLANK padding out of H and attention",
                CHOSEN,
            ),
            (
                "penalize_l2_attention",
                "also penalize sentence-level attention",
                CHOSEN,
            ),
            ("dropout", "dropout on instance representations", CHOSEN),
            ("clip_norm", "global gradient-norm clip (0 = off)", CHOSEN),
        ]
    }

    /// Help text listing every key with its `nyt` and `pt` defaults.
    pub fn key_help() -> String {
        let nyt: std::collections::HashMap<_, _> = Self::nyt().to_pairs().into_iter().collect();
        let pt: std::collections::HashMap<_, _> = Self::pt().to_pairs().into_iter().collect();
        let mut out = String::from("Config keys (nyt default / pt default, origin):\n");
        for (key, meaning, origin) in Self::keys() {
            out.push_str(&format!(
                "  {key:<22} {meaning:<44} {:>8} / {:<8} ({origin})\n",
                nyt[key], pt[key]
            ));
        }
        out
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}
