//! Reading and writing annotated documents in the supported formats.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use cliniflow::io::text::{files_with_extension, read_utf8};
use cliniflow::io::{
    emit_brat, emit_doccano_jsonl, parse_brat, parse_doccano_jsonl, parse_document_json,
    serialize_document_json, ConvertError,
};
use cliniflow::model::{Annotation, Document, Scalar};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Brat,
    Doccano,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Brat => "ann",
            Format::Doccano => "jsonl",
            Format::Json => "json",
        }
    }
}

/// A document with its annotations attached, and the file stem it is
/// written under.
#[derive(Debug, Clone)]
pub struct Item {
    pub stem: String,
    pub doc: Document,
}

pub fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn with_annotations(doc: &Document, anns: impl IntoIterator<Item = Annotation>) -> Result<Document, ConvertError> {
    let mut out = Document::with_id(doc.id(), doc.text(), doc.metadata.clone());
    for a in anns {
        out.attach(a)?;
    }
    Ok(out)
}

/// Brat text for `path` (an `.ann` file): the `.txt` file of the same stem
/// in the same directory.
pub fn read_brat_pair(ann_path: &Path, text_path: &Path) -> Result<Item, CliError> {
    let text = read_utf8(text_path).map_err(|e| CliError::file(text_path, e))?;
    let ann = read_utf8(ann_path).map_err(|e| CliError::file(ann_path, e))?;
    let parsed = parse_brat(&ann, &text).map_err(|e| CliError::file(ann_path, e))?;
    let mut meta = cliniflow::model::Metadata::new();
    let name = text_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    meta.insert("filename".into(), Scalar::Str(name));
    let doc = with_annotations(&Document::new(text, meta), parsed.annotations)
        .map_err(|e| CliError::file(ann_path, e))?;
    Ok(Item {
        stem: stem_of(ann_path),
        doc,
    })
}

fn input_files(format: Format, path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        files_with_extension(path, format.extension()).map_err(|e| CliError::Config(e.to_string()))
    } else if path.is_file() {
        Ok(vec![path.to_owned()])
    } else {
        Err(CliError::Config(format!("{} does not exist", path.display())))
    }
}

/// Every document found at `path`, a file or a directory. Documents that
/// cannot be read are returned as errors naming their file.
pub fn read_corpus(format: Format, path: &Path) -> Result<Vec<Result<Item, CliError>>, CliError> {
    let mut items = Vec::new();
    for file in input_files(format, path)? {
        match format {
            Format::Brat => {
                let ann = file.with_extension("ann");
                items.push(read_brat_pair(&ann, &file.with_extension("txt")));
            }
            Format::Json => items.push(
                read_utf8(&file)
                    .and_then(|t| parse_document_json(&t))
                    .map(|doc| Item {
                        stem: stem_of(&file),
                        doc,
                    })
                    .map_err(|e| CliError::file(&file, e)),
            ),
            Format::Doccano => {
                let text = match read_utf8(&file) {
                    Ok(t) => t,
                    Err(e) => {
                        items.push(Err(CliError::file(&file, e)));
                        continue;
                    }
                };
                let lines: Vec<(usize, &str)> =
                    text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect();
                let many = lines.len() > 1;
                for (n, line) in lines {
                    let item = parse_doccano_jsonl(line)
                        .and_then(|(doc, ents)| {
                            let doc = with_annotations(&doc, ents.into_iter().map(Annotation::Entity))?;
                            let stem = match doc.metadata.get("filename").and_then(Scalar::as_str) {
                                Some(f) => stem_of(Path::new(f)),
                                None if many => format!("{}-{}", stem_of(&file), n + 1),
                                None => stem_of(&file),
                            };
                            Ok(Item { stem, doc })
                        })
                        .map_err(|e| CliError::file(&file, format!("line {}: {e}", n + 1)));
                    items.push(item);
                }
            }
        }
    }
    Ok(items)
}

/// Serialize `doc` with `annotations` in `format`.
pub fn render<'a>(
    format: Format,
    doc: &Document,
    annotations: impl IntoIterator<Item = &'a Annotation>,
) -> Result<String, ConvertError> {
    match format {
        Format::Brat => emit_brat(doc, annotations),
        Format::Doccano => {
            let segs = annotations.into_iter().filter_map(Annotation::as_segment);
            let line = emit_doccano_jsonl(doc, segs)?;
            Ok(line.line + "\n")
        }
        Format::Json => {
            let full = with_annotations(doc, annotations.into_iter().cloned())?;
            Ok(serialize_document_json(&full))
        }
    }
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    }
    fs::write(path, content).map_err(|e| CliError::file(path, e))
}

/// Whether `path` names a single output file of `format` rather than a
/// directory.
pub fn is_single_file(format: Format, path: &Path) -> bool {
    !path.is_dir() && path.extension().is_some_and(|e| e == format.extension())
}
