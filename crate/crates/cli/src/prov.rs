use std::io::Write;
use std::path::Path;

use cliniflow::io::text::read_utf8;
use cliniflow::provenance::{export_prov, parse_prov_json, ExportFormat};

use crate::corpus::write_file;
use crate::{CliError, Outcome};

/// Read a PROV-JSON graph and write it in `format` (`prov-json` or `dot`)
/// to `output`, or to `out` when no output file is given.
pub fn cmd_prov_export(
    input: &Path,
    format: &str,
    output: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Outcome, CliError> {
    let format: ExportFormat = format.parse().map_err(CliError::Config)?;
    let text = read_utf8(input).map_err(|e| CliError::file(input, e))?;
    let graph = parse_prov_json(&text).map_err(|e| CliError::file(input, e))?;
    let rendered = export_prov(&graph, format);
    let mut outcome = Outcome::default();
    match output {
        Some(path) => {
            write_file(path, &rendered)?;
            outcome.written.push(path.to_owned());
        }
        None => out
            .write_all(rendered.as_bytes())
            .map_err(|e| CliError::file("<stdout>", e))?,
    }
    Ok(outcome)
}
