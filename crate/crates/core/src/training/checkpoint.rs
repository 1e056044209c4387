//! Versioned checkpoint files.
//!
//! Layout: a UTF-8 header of sections, terminated by a `[data]` line,
//! followed by every tensor as little-endian `f32` in header order.
//!
//! ```text
//! MLSSA-CHECKPOINT
//! version = 1
//! [config]
//! d = 200
//! ...
//! [relations]
//! "NA"
//! [vocab]
//! "BLANK"
//! ...
//! [rng]
//! seed = 00ff...
//! stream = 0
//! word_pos = 1234
//! [tensors]
//! word_embeddings 5000 200
//! ...
//! [data]
//! <binary>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numcore::{Matrix, Real};

pub const CHECKPOINT_MAGIC: &str = "MLSSA-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub relations: Vec<String>,
    pub vocab: Vocab,
    pub tensors: Vec<NamedTensor>,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn from_model<T: Real>(
        model: &Model<T>,
        relations: &[String],
        vocab: &Vocab,
        rng: &ChaCha8Rng,
    ) -> Self {
        Self {
            config: model.config.clone(),
            relations: relations.to_vec(),
            vocab: vocab.clone(),
            tensors: model
                .store
                .iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            rng: RngState::capture(rng),
        }
    }

    /// Rebuilds the model this checkpoint was taken from.
    pub fn to_model<T: Real>(&self) -> Result<Model<T>> {
        let mut model = Model::new(&self.config, self.vocab.len(), &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_into(&mut model)?;
        Ok(model)
    }

    /// Copies tensors into an existing model; names and shapes must match.
    pub fn load_into<T: Real>(&self, model: &mut Model<T>) -> Result<()> {
        if self.tensors.len() != model.store.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                model.store.len()
            )));
        }
        for t in &self.tensors {
            let id = model
                .store
                .find(&t.name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown tensor `{}`", t.name)))?;
            let expected = model.store.value(id).shape();
            if t.value.shape() != expected {
                return Err(Error::CheckpointShape {
                    name: t.name.clone(),
                    found: t.value.shape(),
                    expected,
                });
            }
            model.store.get_mut(id).value = t.value.cast();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = String::new();
        header.push_str(CHECKPOINT_MAGIC);
        header.push('\n');
        header.push_str(&format!("version = {CHECKPOINT_VERSION}\n[config]\n"));
        for (k, v) in self.config.to_pairs() {
            header.push_str(&format!("{k} = {v}\n"));
        }
        header.push_str("[relations]\n");
        for r in &self.relations {
            header.push_str(&quote(r));
            header.push('\n');
        }
        header.push_str("[vocab]\n");
        for t in self.vocab.tokens() {
            header.push_str(&quote(t));
            header.push('\n');
        }
        let seed: String = self.rng.seed.iter().map(|b| format!("{b:02x}")).collect();
        header.push_str(&format!(
            "[rng]\nseed = {seed}\nstream = {}\nword_pos = {}\n[tensors]\n",
            self.rng.stream, self.rng.word_pos
        ));
        for t in &self.tensors {
            header.push_str(&format!("{} {} {}\n", t.name, t.value.rows(), t.value.cols()));
        }
        header.push_str("[data]\n");

        let mut bytes = header.into_bytes();
        for t in &self.tensors {
            for &x in t.value.data() {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |msg: &str| Error::CorruptCheckpoint(msg.to_string());
        let marker = b"\n[data]\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| corrupt("missing [data] marker (truncated header?)"))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8"))?;
        let mut payload = &bytes[split + marker.len()..];

        let mut lines = header.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(corrupt("not a checkpoint file"));
        }
        let version_line = lines.next().ok_or_else(|| corrupt("missing version"))?;
        let version: u32 = version_line
            .strip_prefix("version = ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt("malformed version line"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }

        let mut section = "";
        let mut config = ModelConfig::nyt();
        let mut relations = Vec::new();
        let mut tokens = Vec::new();
        let mut seed = None;
        let mut stream = None;
        let mut word_pos = None;
        let mut shapes = Vec::new();
        for line in lines {
            if line.starts_with('[') && line.ends_with(']') {
                section = line;
                continue;
            }
            match section {
                "[config]" => {
                    let (k, v) = line.split_once(" = ").ok_or_else(|| corrupt("bad config line"))?;
                    config
                        .set(k, v)
                        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
                }
                "[relations]" => relations.push(unquote(line)?),
                "[vocab]" => tokens.push(unquote(line)?),
                "[rng]" => {
                    let (k, v) = line.split_once(" = ").ok_or_else(|| corrupt("bad rng line"))?;
                    match k {
                        "seed" => seed = Some(parse_seed(v).ok_or_else(|| corrupt("bad rng seed"))?),
                        "stream" => stream = v.parse().ok(),
                        "word_pos" => word_pos = v.parse().ok(),
                        _ => return Err(corrupt("unknown rng field")),
                    }
                }
                "[tensors]" => {
                    let mut f = line.split(' ');
                    let (name, r, c) = (f.next(), f.next(), f.next());
                    let parse = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
                    match (name, parse(r), parse(c)) {
                        (Some(n), Some(r), Some(c)) => shapes.push((n.to_string(), r, c)),
                        _ => return Err(corrupt("bad tensor line")),
                    }
                }
                _ => return Err(corrupt("content outside a known section")),
            }
        }
        if tokens.len() < 2 {
            return Err(corrupt("vocabulary is missing"));
        }
        let rng = RngState {
            seed: seed.ok_or_else(|| corrupt("missing rng seed"))?,
            stream: stream.ok_or_else(|| corrupt("missing rng stream"))?,
            word_pos: word_pos.ok_or_else(|| corrupt("missing rng position"))?,
        };

        let expected: usize = shapes.iter().map(|(_, r, c)| r * c * 4).sum();
        if payload.len() != expected {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor data is {} bytes, header declares {expected}",
                payload.len()
            )));
        }
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, r, c) in shapes {
            let (chunk, rest) = payload.split_at(r * c * 4);
            payload = rest;
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(NamedTensor {
                name,
                value: Matrix::from_vec(r, c, data)?,
            });
        }
        Ok(Self {
            config,
            relations,
            vocab: Vocab::from_tokens(&tokens[2..]),
            tensors,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn unquote(line: &str) -> Result<String> {
    serde_json::from_str(line).map_err(|e| Error::CorruptCheckpoint(format!("bad string entry: {e}")))
}

fn parse_seed(hex: &str) -> Option<[u8; 32]> {
    if hex.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}
