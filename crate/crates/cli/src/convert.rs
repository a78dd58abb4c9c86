use std::io::Write;
use std::path::Path;

use crate::corpus::{is_single_file, read_corpus, render, write_file, Format};
use crate::{CliError, Outcome};

/// Convert every document at `in_path` to `out_format`.
///
/// `out_path` is a single file when it carries the extension of the output
/// format (`.ann`, `.jsonl`, `.json`), a directory otherwise. A single
/// `.jsonl` file takes any number of documents, one per line; the other
/// formats hold one document per file. Brat output is written next to a
/// copy of the document text, as brat expects.
pub fn cmd_convert(
    in_format: Format,
    out_format: Format,
    in_path: &Path,
    out_path: &Path,
    err: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let items = read_corpus(in_format, in_path)?;
    let single = is_single_file(out_format, out_path);
    if single && out_format != Format::Doccano && items.len() > 1 {
        return Err(CliError::Config(format!(
            "{} documents cannot go to the single file {}",
            items.len(),
            out_path.display()
        )));
    }

    let mut outcome = Outcome::default();
    let mut jsonl = String::new();
    for item in items {
        let rendered = item.and_then(|it| {
            let text = render(out_format, &it.doc, it.doc.all_annotations())
                .map_err(|e| CliError::file(in_path.join(&it.stem), e))?;
            Ok((it, text))
        });
        let (it, text) = match rendered {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(err, "failed: {e}");
                outcome.failures.push(e.to_string());
                continue;
            }
        };
        if single && out_format == Format::Doccano {
            jsonl.push_str(&text);
            continue;
        }
        let target = if single {
            out_path.to_owned()
        } else {
            out_path.join(format!("{}.{}", it.stem, out_format.extension()))
        };
        write_file(&target, &text)?;
        if out_format == Format::Brat {
            write_file(&target.with_extension("txt"), it.doc.text())?;
        }
        outcome.written.push(target);
    }
    if single && out_format == Format::Doccano {
        write_file(out_path, &jsonl)?;
        outcome.written.push(out_path.to_owned());
    }
    Ok(outcome)
}
