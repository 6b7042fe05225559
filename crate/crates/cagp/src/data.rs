//! Dataset directories of `train.txt`, `valid.txt` and `test.txt`.

use std::fs;
use std::path::Path;

use cagp_core::graph::GraphBuilder;
use cagp_core::{Error, KnowledgeGraph, Split, Triple};

use crate::error::{CliError, Result};

pub fn split_file(split: Split) -> &'static str {
    match split {
        Split::Train => "train.txt",
        Split::Valid => "valid.txt",
        Split::Test => "test.txt",
    }
}

/// Loads tab-separated `head relation tail` files. Missing validation or test
/// files are treated as empty splits; a missing training file is an error.
pub fn load_dataset(dir: &Path) -> Result<KnowledgeGraph> {
    let mut builder = GraphBuilder::new();
    for split in Split::ALL {
        let path = dir.join(split_file(split));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && split != Split::Train => continue,
            Err(e) => return Err(CliError::io(path, e)),
        };
        builder.add_tsv(split, &text).map_err(|e| match e {
            Error::Parse { line, message } => CliError::format(&path, format!("line {line}: {message}")),
            other => other.into(),
        })?;
    }
    Ok(builder.build()?)
}

/// Writes triples by name in the same format [`load_dataset`] reads.
pub fn write_triples(path: &Path, kg: &KnowledgeGraph, triples: &[Triple]) -> Result<()> {
    let mut out = String::new();
    for q in triples {
        out.push_str(kg.entities().name(q.head.0));
        out.push('\t');
        out.push_str(kg.relations().name(q.relation.0));
        out.push('\t');
        out.push_str(kg.entities().name(q.tail.0));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::io(path, e))
}

pub fn write_dataset(dir: &Path, kg: &KnowledgeGraph) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for split in Split::ALL {
        write_triples(&dir.join(split_file(split)), kg, kg.split(split))?;
    }
    Ok(())
}
