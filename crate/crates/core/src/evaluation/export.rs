//! CSV output for metrics and attention heatmaps.

use std::path::{Path, PathBuf};

use crate::data::{Bag, Vocab};
use crate::error::Result;
use crate::model::Model;
use crate::numcore::{Matrix, Real};

use super::metrics::{F1Report, PrCurve};

pub fn write_pr_csv(path: &Path, curve: &PrCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "precision", "recall"])?;
    for (k, p) in curve.points.iter().enumerate() {
        w.write_record([(k + 1).to_string(), p.precision.to_string(), p.recall.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One P@N measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct PnRow {
    pub setting: String,
    pub n: usize,
    pub precision: f64,
}

/// Writes every row, then one `mean` row per setting averaging its values.
pub fn write_pn_csv(path: &Path, rows: &[PnRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["setting", "n", "precision"])?;
    let mut settings: Vec<&str> = Vec::new();
    for r in rows {
        w.write_record([r.setting.clone(), r.n.to_string(), r.precision.to_string()])?;
        if !settings.contains(&r.setting.as_str()) {
            settings.push(&r.setting);
        }
    }
    for s in settings {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.setting == s)
            .map(|r| r.precision)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        w.write_record([s, "mean", &mean.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-class rows named from `relations`, then a `macro` row whose F1 is the
/// macro average and whose precision and recall are per-class means.
pub fn write_f1_csv(path: &Path, report: &F1Report, relations: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "precision", "recall", "f1"])?;
    for c in &report.per_class {
        let name = relations
            .get(c.class)
            .cloned()
            .unwrap_or_else(|| c.class.to_string());
        w.write_record([
            name,
            c.precision.to_string(),
            c.recall.to_string(),
            c.f1.to_string(),
        ])?;
    }
    let n = report.per_class.len().max(1) as f64;
    let mp = report.per_class.iter().map(|c| c.precision).sum::<f64>() / n;
    let mr = report.per_class.iter().map(|c| c.recall).sum::<f64>() / n;
    w.write_record([
        "macro".to_string(),
        mp.to_string(),
        mr.to_string(),
        report.macro_f1.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

/// Files written by [`export_attention`].
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionExport {
    /// One word-level file per instance.
    pub word_files: Vec<PathBuf>,
    pub sentence_file: PathBuf,
}

/// Keeps `[A-Za-z0-9._-]`, replaces everything else with `_`.
pub fn sanitize_file_stem(s: &str) -> String {
    let out: String = s
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if out.is_empty() {
        "bag".into()
    } else {
        out
    }
}

fn write_rows<T: Real>(
    w: &mut csv::Writer<std::fs::File>,
    m: &Matrix<T>,
    total_label: &str,
    total: impl Fn(usize) -> f64,
) -> Result<()> {
    for i in 0..m.rows() {
        let mut rec = vec![format!("attn_{}", i + 1)];
        rec.extend(m.row(i).iter().map(|v| v.f64().to_string()));
        w.write_record(&rec)?;
    }
    let mut rec = vec![total_label.to_string()];
    rec.extend((0..m.cols()).map(|j| total(j).to_string()));
    w.write_record(&rec)?;
    Ok(())
}

/// Writes the word-level attention of every instance of `bag` and the
/// sentence-level attention over its instances into `dir`.
///
/// Word files have the token strings as header (`BLANK` for padding), one row
/// per attention hop and a final `sum` row. The sentence file has one row per
/// hop and a final `mean` row holding the averaged selection weights.
pub fn export_attention<T: Real>(
    model: &Model<T>,
    vocab: &Vocab,
    bag: &Bag,
    dir: &Path,
) -> Result<AttentionExport> {
    std::fs::create_dir_all(dir)?;
    let instances: Vec<_> = bag.instances.iter().collect();
    let out = model.run_bag(&instances)?;
    let stem = sanitize_file_stem(&bag.bag_id);

    let mut word_files = Vec::with_capacity(instances.len());
    for (k, (inst, a)) in instances.iter().zip(&out.word_attention).enumerate() {
        let path = dir.join(format!("{stem}_instance{}_word.csv", k + 1));
        let mut w = csv::Writer::from_path(&path)?;
        let mut header = vec!["row".to_string()];
        header.extend(
            inst.token_ids
                .iter()
                .map(|&id| vocab.token(id).unwrap_or(crate::data::UNK).to_string()),
        );
        w.write_record(&header)?;
        write_rows(&mut w, a, "sum", |j| a.column(j).iter().map(|v| v.f64()).sum())?;
        w.flush()?;
        word_files.push(path);
    }

    let sentence_file = dir.join(format!("{stem}_sentence.csv"));
    let mut w = csv::Writer::from_path(&sentence_file)?;
    let mut header = vec!["row".to_string()];
    header.extend((1..=instances.len()).map(|j| format!("instance{j}")));
    w.write_record(&header)?;
    write_rows(&mut w, &out.a_l2, "mean", |j| out.a_bar[j].f64())?;
    w.flush()?;

    Ok(AttentionExport {
        word_files,
        sentence_file,
    })
}
