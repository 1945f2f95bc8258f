use std::path::Path;

use ecgmatch_core::data::{map_annotations, AnnotationMap, SUPERCLASSES};
use ecgmatch_core::Error;

use crate::Failure;

/// Prints `bits<TAB>superclasses<TAB>line` per sample; unmappable lines print
/// `-` and are listed on stderr at the end, with exit code 1.
pub fn execute(terms: &Path, map: Option<&Path>) -> Result<u8, Failure> {
    let am = match map {
        Some(p) => AnnotationMap::load(p)?,
        None => AnnotationMap::builtin(),
    };
    let text = std::fs::read_to_string(terms)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", terms.display())))?;
    let mut unmappable = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        match map_annotations(&parts, &am) {
            Ok(v) => {
                let bits: String = v
                    .iter()
                    .map(|&b| if b == 1.0 { '1' } else { '0' })
                    .collect();
                let names: Vec<&str> = v
                    .iter()
                    .zip(SUPERCLASSES)
                    .filter(|(b, _)| **b == 1.0)
                    .map(|(_, n)| n)
                    .collect();
                println!("{bits}\t{}\t{line}", names.join(";"));
            }
            Err(Error::Unmappable(_)) => {
                println!("-\t\t{line}");
                unmappable.push((i + 1, line.to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if unmappable.is_empty() {
        return Ok(0);
    }
    eprintln!("unmappable lines:");
    for (n, l) in &unmappable {
        eprintln!("  {}:{n}: {l}", terms.display());
    }
    Ok(1)
}
