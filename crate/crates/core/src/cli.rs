//! Command-line front end: `train`, `eval`, `gen-synth`, `attn-export`, `gradcheck`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 verification failure,
//! 3 data error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::ModelConfig;
use crate::data::{
    generate_raw, load_dataset, read_embeddings, write_raw_bags, Dataset, LoadOptions, SynthSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    export_attention, macro_f1, p_at_n, pr_curve, score_test_set, write_f1_csv, write_pn_csv, write_pr_csv,
    GoldFacts, PnMode, PnRow, PnSetting, Selection,
};
use crate::gradcheck;
use crate::training::{epoch_means, write_loss_log, Checkpoint, Trainer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "mlssa",
    version,
    about = "Relation extractor with word- and sentence-level matrix self-attention"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus loss log.
    Train(TrainArgs),
    /// Score a test set and write PR, P@N or macro-F1 CSVs.
    Eval(EvalArgs),
    /// Write a synthetic JSONL dataset.
    GenSynth(GenSynthArgs),
    /// Write word- and sentence-level attention CSVs for selected bags.
    AttnExport(AttnExportArgs),
    /// Run the finite-difference gradient suite on the tiny configuration.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Hyper-parameter profile: nyt, pt, synth or tiny.
    #[arg(long)]
    pub profile: Option<String>,
    /// TOML run file with config keys and data paths.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set r_l2=1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Training bags (JSONL).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for `model.ckpt` and `loss_log.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pretrained word vectors in text format.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Metric {
    Pr,
    Pn,
    F1,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Test bags (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// P@N instance setting: one, two or all. Repeatable; all three by default.
    #[arg(long = "pn-mode")]
    pub pn_modes: Vec<String>,
    /// Comma-separated N values for P@N.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300")]
    pub n: Vec<usize>,
    /// Seed for P@N instance sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Relation count, including NA.
    #[arg(long, default_value_t = SynthSpec::default().num_relations)]
    pub relations: usize,
    #[arg(long, default_value_t = SynthSpec::default().vocab_size)]
    pub vocab: usize,
    #[arg(long, default_value_t = SynthSpec::default().bags_per_relation)]
    pub bags_per_relation: usize,
    #[arg(long, default_value_t = SynthSpec::default().max_bag_size)]
    pub max_bag_size: usize,
    /// Fraction of noise instances per bag.
    #[arg(long, default_value_t = SynthSpec::default().noise_ratio)]
    pub noise: f64,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AttnExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Bag to export. Repeatable; the first bag when omitted.
    #[arg(long = "bag-id")]
    pub bag_ids: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Shape { .. } | Error::Index { .. } | Error::Contract(_) | Error::NonFiniteLoss { .. } => {
            EXIT_VERIFY
        }
        Error::Data { .. }
        | Error::Dataset(_)
        | Error::CheckpointVersion { .. }
        | Error::CorruptCheckpoint(_)
        | Error::CheckpointShape { .. }
        | Error::VocabularyMismatch(_)
        | Error::Io(_)
        | Error::Csv(_) => EXIT_DATA,
    }
}

fn command() -> clap::Command {
    let help = ModelConfig::key_help();
    Cli::command()
        .after_help(help.clone())
        .mut_subcommand("train", |c| c.after_help(help))
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match command()
        .try_get_matches_from(args)
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::GenSynth(a) => cmd_gen_synth(a),
        Command::AttnExport(a) => cmd_attn_export(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

/// Parsed run file: config overrides plus optional data paths.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunFile {
    pub profile: Option<String>,
    pub settings: Vec<(String, String)>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

const PATH_KEYS: [&str; 4] = ["profile", "data", "out", "embeddings"];

fn line_of(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

/// Parses a TOML run file. Unknown keys and ill-typed values are errors naming the line.
pub fn parse_run_file(text: &str) -> Result<RunFile> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("run file: {}", e.to_string().trim())))?;
    let known: Vec<&str> = ModelConfig::keys().iter().map(|k| k.0).collect();
    let mut run = RunFile::default();
    let mut probe = ModelConfig::nyt();
    for (key, value) in &table {
        let line = line_of(text, key);
        let scalar = match value {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            _ => {
                return Err(Error::Config(format!(
                    "run file line {line}: `{key}` must be a scalar"
                )))
            }
        };
        match key.as_str() {
            "profile" => run.profile = Some(scalar),
            "data" => run.data = Some(scalar.into()),
            "out" => run.out = Some(scalar.into()),
            "embeddings" => run.embeddings = Some(scalar.into()),
            k if known.contains(&k) => {
                probe
                    .set(k, &scalar)
                    .map_err(|e| Error::Config(format!("run file line {line}: {e}")))?;
                run.settings.push((k.to_string(), scalar));
            }
            k => {
                return Err(Error::Config(format!(
                    "run file line {line}: unknown key `{k}` (expected one of {}, {})",
                    PATH_KEYS.join(", "),
                    known.join(", ")
                )))
            }
        }
    }
    Ok(run)
}

/// Resolves profile, run file and `--set` overrides, in that order of precedence (lowest first).
pub fn resolve_config(args: &ConfigArgs) -> Result<(ModelConfig, RunFile)> {
    let run = match &args.config {
        Some(p) => parse_run_file(&std::fs::read_to_string(p)?)?,
        None => RunFile::default(),
    };
    let profile = args
        .profile
        .as_deref()
        .or(run.profile.as_deref())
        .unwrap_or("nyt");
    let mut cfg = ModelConfig::profile(profile)?;
    for (k, v) in &run.settings {
        cfg.set(k, v)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.validate()?;
    Ok((cfg, run))
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let (cfg, run) = resolve_config(&a.config)?;
    let data = a
        .data
        .or(run.data)
        .ok_or_else(|| Error::Config("train needs --data (or `data` in the run file)".into()))?;
    let out = a
        .out
        .or(run.out)
        .ok_or_else(|| Error::Config("train needs --out (or `out` in the run file)".into()))?;
    let embeddings = a.embeddings.or(run.embeddings);

    let dataset = load_dataset(&data, LoadOptions::default(), &cfg)?;
    let pretrained = embeddings.as_deref().map(read_embeddings).transpose()?;
    println!(
        "{}: {} bags, {} instances, {} relations, vocabulary {}",
        cfg.variant(),
        dataset.bags.len(),
        dataset.num_instances(),
        dataset.num_relations(),
        dataset.vocab.len()
    );
    let mut trainer = Trainer::<f32>::with_embeddings(&dataset, &cfg, pretrained.as_ref())?;
    for e in 0..cfg.epochs {
        let rows = trainer.run_epoch()?;
        let n = rows.len() as f64;
        let mean = |f: fn(&crate::training::LossRecord) -> f64| rows.iter().map(f).sum::<f64>() / n;
        println!(
            "epoch {:>3}/{}  loss {:.5}  ce {:.5}  penalty {:.5}  l2 {:.5}",
            e + 1,
            cfg.epochs,
            mean(|r| r.loss.total),
            mean(|r| r.loss.ce),
            mean(|r| r.loss.penalty),
            mean(|r| r.loss.l2)
        );
    }
    std::fs::create_dir_all(&out)?;
    let ckpt = out.join("model.ckpt");
    trainer.checkpoint().save(&ckpt)?;
    write_loss_log(&out.join("loss_log.csv"), trainer.log())?;
    if let Some(last) = epoch_means(trainer.log()).last() {
        println!("final mean loss {last:.5}");
    }
    println!(
        "wrote {} and {}",
        ckpt.display(),
        out.join("loss_log.csv").display()
    );
    Ok(EXIT_OK)
}

/// Loads a checkpoint and a test set encoded with its vocabularies.
pub fn load_for_eval(checkpoint: &Path, data: &Path) -> Result<(Checkpoint, Dataset)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let options = LoadOptions {
        vocab: Some(ckpt.vocab.clone()),
        relations: Some(ckpt.relations.clone()),
    };
    let dataset = load_dataset(data, options, &ckpt.config)?;
    Ok((ckpt, dataset))
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let (ckpt, dataset) = load_for_eval(&a.checkpoint, &a.data)?;
    let model = ckpt.to_model::<f32>()?;
    let gold = GoldFacts::from_dataset(&dataset);
    match a.metric {
        Metric::Pr => {
            let scored = score_test_set(&dataset, &model, Selection::Full)?;
            let curve = pr_curve(&scored.records, &gold)?;
            write_pr_csv(&a.out, &curve)?;
            println!("PR curve: {} points, AUC {:.4}", curve.points.len(), curve.auc);
        }
        Metric::Pn => {
            let modes = if a.pn_modes.is_empty() {
                PnMode::ALL_MODES.to_vec()
            } else {
                a.pn_modes.iter().map(|m| m.parse()).collect::<Result<_>>()?
            };
            let mut rows = Vec::new();
            for mode in modes {
                let setting = PnSetting { mode, seed: a.seed };
                let scored = score_test_set(&dataset, &model, Selection::Pn(setting))?;
                for &n in &a.n {
                    let precision = p_at_n(&scored.records, &gold, n)?;
                    println!("{mode:<4} P@{n:<5} {:.2}%", 100.0 * precision);
                    rows.push(PnRow {
                        setting: mode.to_string(),
                        n,
                        precision,
                    });
                }
            }
            write_pn_csv(&a.out, &rows)?;
        }
        Metric::F1 => {
            let scored = score_test_set(&dataset, &model, Selection::Full)?;
            let report = macro_f1(&scored.hard_predictions(&dataset), dataset.none_id);
            write_f1_csv(&a.out, &report, &dataset.relations)?;
            println!(
                "macro F1 {:.2}% over {} classes",
                100.0 * report.macro_f1,
                report.per_class.len()
            );
        }
    }
    println!("wrote {}", a.out.display());
    Ok(EXIT_OK)
}

fn cmd_gen_synth(a: GenSynthArgs) -> Result<i32> {
    let spec = SynthSpec {
        num_relations: a.relations,
        vocab_size: a.vocab,
        bags_per_relation: a.bags_per_relation,
        max_bag_size: a.max_bag_size,
        noise_ratio: a.noise,
        seed: a.seed,
    };
    spec.validate().map_err(|e| match e {
        Error::Dataset(m) => Error::Config(m),
        other => other,
    })?;
    let bags = generate_raw(&spec)?;
    write_raw_bags(&a.out, &bags)?;
    println!(
        "wrote {} bags over {} relations (vocabulary {}) to {}",
        bags.len(),
        spec.num_relations,
        spec.vocab_size,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_attn_export(a: AttnExportArgs) -> Result<i32> {
    let (ckpt, dataset) = load_for_eval(&a.checkpoint, &a.data)?;
    let model = ckpt.to_model::<f32>()?;
    let bags: Vec<_> = if a.bag_ids.is_empty() {
        dataset.bags.iter().take(1).collect()
    } else {
        a.bag_ids
            .iter()
            .map(|id| {
                dataset
                    .bags
                    .iter()
                    .find(|b| &b.bag_id == id)
                    .ok_or_else(|| Error::Dataset(format!("no bag `{id}` in {}", a.data.display())))
            })
            .collect::<Result<_>>()?
    };
    for bag in bags {
        let files = export_attention(&model, &dataset.vocab, bag, &a.out)?;
        println!(
            "{}: {} word-level files, sentence-level {}",
            bag.bag_id,
            files.word_files.len(),
            files.sentence_file.display()
        );
    }
    Ok(EXIT_OK)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let start = std::time::Instant::now();
    let report = gradcheck::run_suite(a.seed)?;
    println!("{report}");
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(if report.passed() { EXIT_OK } else { EXIT_VERIFY })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_args(profile: Option<&str>, sets: &[&str]) -> ConfigArgs {
        ConfigArgs {
            profile: profile.map(String::from),
            config: None,
            overrides: sets.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn profiles_and_overrides() {
        let (pt, _) = resolve_config(&cfg_args(Some("pt"), &[])).unwrap();
        assert_eq!(
            (pt.word_dim, pt.batch_size, pt.attn_rows_l1, pt.attn_rows_l2),
            (300, 50, 5, 3)
        );
        let (nyt, _) = resolve_config(&cfg_args(Some("nyt"), &[])).unwrap();
        assert_eq!(
            (nyt.word_dim, nyt.batch_size, nyt.attn_rows_l1, nyt.attn_rows_l2),
            (200, 64, 9, 9)
        );
        let (one, _) = resolve_config(&cfg_args(None, &["r_l2=1"])).unwrap();
        assert_eq!(one.variant(), crate::config::Variant::Mlssa1);
        assert!(resolve_config(&cfg_args(None, &["r_l2"])).is_err());
    }

    #[test]
    fn run_file_reports_unknown_key_line() {
        let text = "profile = \"pt\"\nepochs = 3\nlearning_rat = 0.1\n";
        let err = parse_run_file(text).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("learning_rat"), "{err}");
        let ok = parse_run_file("data = \"x.jsonl\"\nr_l2 = 1\nmask_padding = false\n").unwrap();
        assert_eq!(ok.data.as_deref(), Some(Path::new("x.jsonl")));
        assert_eq!(ok.settings.len(), 2);
        let bad = parse_run_file("\n\nbatch_size = \"many\"\n")
            .unwrap_err()
            .to_string();
        assert!(bad.contains("line 3"), "{bad}");
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(run(["mlssa", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["mlssa", "--help"]), EXIT_OK);
        assert_eq!(
            run(["mlssa", "train", "--set", "nope=1", "--data", "x", "--out", "y"]),
            EXIT_USAGE
        );
    }

    #[test]
    fn help_lists_every_config_key() {
        let help = command()
            .find_subcommand_mut("train")
            .unwrap()
            .render_long_help()
            .to_string();
        for (k, _, _) in ModelConfig::keys() {
            assert!(help.contains(k), "missing {k}");
        }
    }

    #[test]
    fn missing_data_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let code = run([
            "mlssa",
            "train",
            "--profile",
            "tiny",
            "--data",
            dir.path().join("none.jsonl").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_DATA);
    }
}
