use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use cliniflow::batch::run_batch;
use cliniflow::io::text::{files_with_extension, read_utf8};
use cliniflow::model::{Annotation, Document, Metadata, Scalar};
use cliniflow::pipeline::{Pipeline, Registry, Slots, Value};
use cliniflow::provenance::{build_graph, export_prov, ExportFormat, VerbosityLevel};

use crate::corpus::{render, stem_of, write_file, Format};
use crate::{CliError, Outcome};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline_path: PathBuf,
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub output_format: Format,
    pub prov_level: VerbosityLevel,
    pub prov_out: Option<PathBuf>,
    pub workers: usize,
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_owned())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        let mut paths = vec![&self.pipeline_path, &self.input_dir, &self.output_dir];
        paths.extend(&self.prov_out);
        let abs: Vec<PathBuf> = paths.iter().map(|p| absolute(p)).collect();
        for i in 0..abs.len() {
            for j in i + 1..abs.len() {
                if abs[i] == abs[j] {
                    return Err(CliError::Config(format!("{} is given twice", paths[i].display())));
                }
            }
        }
        Ok(())
    }
}

fn load_pipeline(path: &Path) -> Result<Pipeline, CliError> {
    let p = Pipeline::load(path, &Registry::with_builtins()).map_err(|e| CliError::Config(e.to_string()))?;
    if p.spec().inputs.len() != 1 {
        return Err(CliError::Config(format!(
            "{}: a pipeline run over documents takes exactly one input, found {}",
            path.display(),
            p.spec().inputs.len()
        )));
    }
    Ok(p)
}

fn read_document(path: &Path) -> Result<Document, CliError> {
    let text = read_utf8(path).map_err(|e| CliError::file(path, e))?;
    let mut meta = Metadata::new();
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    meta.insert("filename".into(), Scalar::Str(name));
    Ok(Document::new(text, meta))
}

/// Serialize one output slot of one document.
fn render_slot(format: Format, doc: &Document, key: &str, values: &[Value]) -> Result<String, String> {
    let mut texts = Vec::new();
    let mut anns: Vec<&Annotation> = Vec::new();
    for v in values {
        match v {
            Value::Text { text, .. } => texts.push(text.as_str()),
            Value::Annotation(a) => anns.push(a),
            Value::Document(_) => return Err(format!("output {key:?} holds documents, not annotations")),
        }
    }
    if !texts.is_empty() {
        if format != Format::Brat || !anns.is_empty() {
            return Err(format!(
                "output {key:?} holds rendered text, which can only be written as brat"
            ));
        }
        return Ok(texts.concat());
    }
    render(format, doc, anns).map_err(|e| e.to_string())
}

/// Run the pipeline over every `.txt` file of the input directory.
///
/// Each document is bound to the single input of the pipeline. Outputs are
/// written as `<stem>.<ext>` in the output directory, or in one
/// sub-directory per output key when the pipeline has several outputs.
/// Documents that fail are reported on `err` and skipped.
pub fn cmd_run(cfg: &RunConfig, err: &mut dyn Write) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let pipeline = load_pipeline(&cfg.pipeline_path)?;
    if !cfg.input_dir.is_dir() {
        return Err(CliError::Config(format!("{} is not a directory", cfg.input_dir.display())));
    }
    let files = files_with_extension(&cfg.input_dir, "txt").map_err(|e| CliError::Config(e.to_string()))?;

    let mut outcome = Outcome::default();
    let mut fail = |stem: &str, reason: &dyn std::fmt::Display, outcome: &mut Outcome| {
        let line = format!("{stem}: {reason}");
        let _ = writeln!(err, "failed: {line}");
        outcome.failures.push(line);
    };

    let input_key = &pipeline.spec().inputs[0];
    let mut docs = Vec::new();
    for f in &files {
        match read_document(f) {
            Ok(d) => docs.push((stem_of(f), d)),
            Err(e) => fail(&stem_of(f), &e, &mut outcome),
        }
    }
    let inputs: Vec<Slots> = docs
        .iter()
        .map(|(_, d)| HashMap::from([(input_key.clone(), vec![Value::Document(d.clone())])]))
        .collect();
    let batch = run_batch(&pipeline, inputs, cfg.workers, cfg.prov_level).map_err(|e| CliError::Config(e.to_string()))?;

    let outputs = &pipeline.spec().outputs;
    let ext = cfg.output_format.extension();
    for ((stem, doc), result) in docs.iter().zip(&batch.outputs) {
        let slots = match result {
            Ok(s) => s,
            Err(e) => {
                fail(stem, e, &mut outcome);
                continue;
            }
        };
        let mut rendered = Vec::new();
        for key in outputs {
            let target = if outputs.len() == 1 {
                cfg.output_dir.join(format!("{stem}.{ext}"))
            } else {
                cfg.output_dir.join(key).join(format!("{stem}.{ext}"))
            };
            match render_slot(cfg.output_format, doc, key, &slots[key]) {
                Ok(text) => rendered.push((target, text)),
                Err(e) => {
                    fail(stem, &e, &mut outcome);
                    rendered.clear();
                    break;
                }
            }
        }
        for (target, text) in rendered {
            write_file(&target, &text)?;
            outcome.written.push(target);
        }
    }

    if let Some(path) = &cfg.prov_out {
        let graph = build_graph(&batch.tracer).map_err(|e| CliError::file(path, e))?;
        write_file(path, &export_prov(&graph, ExportFormat::ProvJson))?;
    }
    log::info!(
        "{} document(s) processed, {} failed",
        files.len(),
        outcome.failures.len()
    );
    Ok(outcome)
}
