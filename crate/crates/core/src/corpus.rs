//! Corpus directories of paired `<id>.txt` / `<id>.ann` files.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;
use walkdir::WalkDir;

use crate::standoff::{parse_ann, serialize_ann, AnnotationDoc, StandoffError};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}: annotation file has no sibling .txt")]
    MissingText(PathBuf),
    #[error(transparent)]
    Standoff(#[from] StandoffError),
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, contents).map_err(io)
}

/// Document id of `path` relative to `root`: the relative path without its
/// extension, `/`-separated.
fn doc_id(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn files_with_ext(root: &Path, ext: &str) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CorpusError::Io {
            path: e
                .path()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| root.to_path_buf()),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == ext) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Every annotated document under `root`, sorted by id.
pub fn load_corpus(root: &Path) -> Result<Vec<AnnotationDoc>, CorpusError> {
    let (docs, mut errors) = scan_corpus(root)?;
    match errors.is_empty() {
        true => Ok(docs),
        false => Err(errors.swap_remove(0).into()),
    }
}

/// Like [`load_corpus`], but collects every standoff error instead of
/// stopping at the first. Unparseable documents are left out.
pub fn scan_corpus(root: &Path) -> Result<(Vec<AnnotationDoc>, Vec<StandoffError>), CorpusError> {
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for ann_path in files_with_ext(root, "ann")? {
        let txt_path = ann_path.with_extension("txt");
        if !txt_path.is_file() {
            return Err(CorpusError::MissingText(ann_path));
        }
        let id = doc_id(root, &ann_path);
        let txt = read(&txt_path)?;
        let ann = read(&ann_path)?;
        match parse_ann(&id, &txt, &ann) {
            Ok(d) => docs.push(d),
            Err(e) => errors.push(e),
        }
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok((docs, errors))
}

/// Every `.txt` under `root` as `(id, text)`, sorted by id. A single file is
/// also accepted.
pub fn load_texts(root: &Path) -> Result<Vec<(String, String)>, CorpusError> {
    if root.is_file() {
        let id = root
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok(vec![(id, read(root)?)]);
    }
    let mut out = Vec::new();
    for p in files_with_ext(root, "txt")? {
        out.push((doc_id(root, &p), read(&p)?));
    }
    out.sort();
    Ok(out)
}

/// Writes `<root>/<id>.txt` and `<root>/<id>.ann`.
pub fn write_doc(root: &Path, doc: &AnnotationDoc) -> Result<(), CorpusError> {
    let base = root.join(&doc.doc_id);
    let ann = serialize_ann(doc)?;
    write(&base.with_extension("txt"), &doc.text)?;
    write(&base.with_extension("ann"), &ann)
}

pub fn write_corpus(root: &Path, docs: &[AnnotationDoc]) -> Result<(), CorpusError> {
    docs.iter().try_for_each(|d| write_doc(root, d))
}
