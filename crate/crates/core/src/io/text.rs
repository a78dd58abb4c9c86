use std::fs;
use std::path::Path;

use crate::model::{Document, Metadata, Scalar};

use super::ConvertError;

/// Read one file as UTF-8, reporting the first invalid byte offset.
pub fn read_utf8(path: &Path) -> Result<String, ConvertError> {
    let bytes = fs::read(path).map_err(|e| ConvertError::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| ConvertError::Decode {
        path: path.to_owned(),
        byte_offset: e.utf8_error().valid_up_to(),
    })
}

/// Paths of the files in `dir` with the given extension, sorted by name.
pub fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<std::path::PathBuf>, ConvertError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| ConvertError::io(dir, e))? {
        let path = entry.map_err(|e| ConvertError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// One document per `.txt` file in a directory (sorted by file name), or a
/// single document when `path` is a file. The file name is kept in the
/// `filename` metadata entry.
pub fn load_text_documents(path: &Path) -> Result<Vec<Document>, ConvertError> {
    let files = if path.is_dir() {
        files_with_extension(path, "txt")?
    } else {
        vec![path.to_owned()]
    };
    files
        .iter()
        .map(|f| {
            let text = read_utf8(f)?;
            let mut meta = Metadata::new();
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned());
            meta.insert("filename".into(), Scalar::Str(name.unwrap_or_default()));
            Ok(Document::new(text, meta))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_sorted_txt_files() {
        let dir = tempfile::tempdir().unwrap();
        for (name, body) in [("b.txt", "deux"), ("a.txt", "un"), ("c.txt", "trois"), ("x.ann", "")] {
            fs::write(dir.path().join(name), body).unwrap();
        }
        let docs = load_text_documents(dir.path()).unwrap();
        let names: Vec<_> = docs.iter().map(|d| d.metadata["filename"].to_string()).collect();
        assert_eq!(names, ["a.txt", "b.txt", "c.txt"]);
        assert_eq!(docs[0].text(), "un");
        assert_eq!(docs[0].raw_segment().spans, vec![crate::span::Span::original(0, 2)]);
    }

    #[test]
    fn empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_text_documents(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn invalid_utf8_names_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.txt"), b"ok \xff\xfe").unwrap();
        match load_text_documents(dir.path()) {
            Err(ConvertError::Decode { path, byte_offset }) => {
                assert!(path.ends_with("bad.txt"));
                assert_eq!(byte_offset, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
