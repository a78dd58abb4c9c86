use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use cliniflow::eval::{compare_runs, evaluate_corpus, Comparison, MatchMode, MatchSpec, Metrics};
use cliniflow::io::parse_brat;
use cliniflow::io::text::{files_with_extension, read_utf8};
use cliniflow::model::{Annotation, Entity};

use crate::corpus::{stem_of, write_file};
use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// One directory of predictions, or two to compare.
    pub pred_dirs: Vec<PathBuf>,
    pub ref_dir: PathBuf,
    pub mode: MatchMode,
    pub threshold: f64,
    pub label_sensitive: bool,
    pub text_dir: Option<PathBuf>,
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Run name and scores, one per prediction directory.
    pub runs: Vec<(String, Metrics)>,
    pub comparison: Option<Comparison>,
}

fn stems(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", dir.display())));
    }
    let files = files_with_extension(dir, "ann").map_err(|e| CliError::Config(e.to_string()))?;
    Ok(files.iter().map(|f| stem_of(f)).collect())
}

fn entities(ann_path: &Path, text: &str) -> Result<Vec<Entity>, CliError> {
    let ann = read_utf8(ann_path).map_err(|e| CliError::file(ann_path, e))?;
    let parsed = parse_brat(&ann, text).map_err(|e| CliError::file(ann_path, e))?;
    Ok(parsed
        .annotations
        .into_iter()
        .filter_map(Annotation::into_segment)
        .collect())
}

fn run_name(dir: &Path, other: Option<&Path>) -> String {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned());
    let other_name = other.and_then(|o| o.file_name()).map(|n| n.to_string_lossy().into_owned());
    match name {
        Some(n) if Some(&n) != other_name.as_ref() => n,
        _ => dir.display().to_string(),
    }
}

/// Score the `.ann` files of each prediction directory against those of the
/// reference directory, stem by stem.
///
/// An empty prediction directory counts as predicting nothing; otherwise both
/// directories must hold the same stems. Document text is looked up as
/// `<stem>.txt` in the reference directory, then the prediction directory,
/// then `text_dir`.
pub fn cmd_eval(cfg: &EvalConfig, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    if !(1..=2).contains(&cfg.pred_dirs.len()) {
        return Err(CliError::Config("give one or two --pred-dir".into()));
    }
    let spec = match cfg.mode {
        MatchMode::Exact => MatchSpec::exact(),
        MatchMode::Overlap => MatchSpec::overlap(cfg.threshold).map_err(|e| CliError::Config(e.to_string()))?,
    }
    .label_sensitive(cfg.label_sensitive);

    let ref_stems = stems(&cfg.ref_dir)?;
    let mut runs = Vec::new();
    for (i, pred_dir) in cfg.pred_dirs.iter().enumerate() {
        let pred_stems = stems(pred_dir)?;
        if !pred_stems.is_empty() {
            if let Some(s) = ref_stems.difference(&pred_stems).next() {
                return Err(CliError::MissingCounterpart {
                    stem: s.clone(),
                    dir: pred_dir.clone(),
                });
            }
            if let Some(s) = pred_stems.difference(&ref_stems).next() {
                return Err(CliError::MissingCounterpart {
                    stem: s.clone(),
                    dir: cfg.ref_dir.clone(),
                });
            }
        }
        let mut docs = Vec::new();
        for stem in &ref_stems {
            let txt = format!("{stem}.txt");
            let candidates = [Some(&cfg.ref_dir), Some(pred_dir), cfg.text_dir.as_ref()];
            let text_path = candidates
                .into_iter()
                .flatten()
                .map(|d| d.join(&txt))
                .find(|p| p.is_file())
                .ok_or_else(|| CliError::file(cfg.ref_dir.join(&txt), "document text not found"))?;
            let text = read_utf8(&text_path).map_err(|e| CliError::file(&text_path, e))?;
            let refs = entities(&cfg.ref_dir.join(format!("{stem}.ann")), &text)?;
            let preds = if pred_stems.is_empty() {
                Vec::new()
            } else {
                entities(&pred_dir.join(format!("{stem}.ann")), &text)?
            };
            docs.push((preds, refs));
        }
        let other = cfg.pred_dirs.get(1 - i.min(1)).filter(|_| cfg.pred_dirs.len() == 2);
        runs.push((run_name(pred_dir, other.map(PathBuf::as_path)), evaluate_corpus(&docs, &spec)));
    }

    let mut text = String::new();
    for (name, m) in &runs {
        text.push_str(&format!("== {name}\n{}\n", m.render()));
    }
    let comparison = match runs.as_slice() {
        [(na, a), (nb, b)] => {
            let c = compare_runs(na, a, nb, b);
            text.push_str(&format!("== comparison\n{c}"));
            Some(c)
        }
        _ => None,
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::file("<stdout>", e))?;
    if let Some(path) = &cfg.json_out {
        let json = match &comparison {
            Some(c) => c.to_json(),
            None => runs[0].1.to_json(),
        };
        write_file(path, &(json + "\n"))?;
    }
    Ok(EvalReport { runs, comparison })
}
