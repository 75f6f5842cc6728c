use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kb::{Triplet, Vocab};

/// Parses `head<TAB>relation<TAB>tail` lines, extending `vocab` with unseen names.
///
/// Blank lines are skipped and CRLF endings accepted. Duplicate triplets
/// within one input are rejected.
pub fn parse_tsv(text: &str, vocab: &mut Vocab) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let parse_err = |e: Error| Error::Parse {
            line: line_no,
            message: e.to_string(),
        };
        let left = vocab.intern_entity(fields[0]).map_err(parse_err)?;
        let rel = vocab.intern_relation(fields[1]).map_err(parse_err)?;
        let right = vocab.intern_entity(fields[2]).map_err(parse_err)?;
        let t = Triplet::new(left, rel, right);
        if !seen.insert(t) {
            return Err(Error::Parse {
                line: line_no,
                message: "duplicate triplet".into(),
            });
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_tsv_with_vocab(path: &Path, vocab: &mut Vocab) -> Result<Vec<Triplet>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, vocab).map_err(|e| match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

pub fn load_tsv(path: &Path) -> Result<(Vec<Triplet>, Vocab)> {
    let mut vocab = Vocab::new();
    let triplets = load_tsv_with_vocab(path, &mut vocab)?;
    Ok((triplets, vocab))
}

pub fn write_tsv(path: &Path, triplets: &[Triplet], vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for t in triplets {
        let name = |n: Option<&str>| {
            n.map(str::to_owned)
                .ok_or_else(|| Error::Invalid(format!("triplet {t:?} outside vocabulary")))
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            name(vocab.entity_name(t.left))?,
            name(vocab.relation_name(t.rel))?,
            name(vocab.entity_name(t.right))?
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
