use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array1;

use crate::error::{Error, Result};

/// Superclass order used for label columns.
pub const SUPERCLASSES: [&str; 5] = [
    "Abnormal Rhythms",
    "ST/T Abnormalities",
    "Conduction Disturbance",
    "Other Abnormalities",
    "Normal Signals",
];

/// Column of the normal class, which never co-occurs with an abnormal one.
pub const NORMAL_CLASS: usize = 4;

const BUILTIN: &str = include_str!("../../assets/annotations.tsv");

/// Original diagnosis term → superclass column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMap {
    entries: BTreeMap<String, Vec<usize>>,
}

fn normalize(term: &str) -> String {
    term.trim().to_lowercase()
}

impl AnnotationMap {
    /// The mapping shipped in `assets/annotations.tsv`.
    pub fn builtin() -> Self {
        Self::from_tsv(BUILTIN, "annotations.tsv").expect("bundled annotation map is valid")
    }

    /// Two tab-separated columns, `term<TAB>superclass`; `#` starts a comment
    /// line. A term listed several times maps to the union of its superclasses.
    pub fn from_tsv(text: &str, origin: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let loc = || format!("{origin}:{}", lineno + 1);
            let (term, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(loc(), "expected `term<TAB>superclass`"))?;
            let class = class.trim();
            let idx = SUPERCLASSES
                .iter()
                .position(|s| s.eq_ignore_ascii_case(class))
                .ok_or_else(|| Error::parse(loc(), format!("unknown superclass {class:?}")))?;
            let slot = entries.entry(normalize(term)).or_default();
            if !slot.contains(&idx) {
                slot.push(idx);
                slot.sort_unstable();
            }
        }
        if entries.is_empty() {
            return Err(Error::parse(origin, "annotation map has no entries"));
        }
        Ok(AnnotationMap { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tsv(&text, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, term: &str) -> Option<&[usize]> {
        self.entries.get(&normalize(term)).map(Vec::as_slice)
    }
}

/// Five-column binary label for a set of original terms.
///
/// Unknown terms are skipped with a warning. When any abnormal class is
/// present the normal class is dropped.
pub fn map_annotations<S: AsRef<str>>(original: &[S], am: &AnnotationMap) -> Result<Array1<f64>> {
    let mut out = Array1::zeros(SUPERCLASSES.len());
    let mut known = false;
    for term in original {
        match am.lookup(term.as_ref()) {
            Some(classes) => {
                known = true;
                for &c in classes {
                    out[c] = 1.0;
                }
            }
            None => log::warn!("unknown diagnosis term {:?} skipped", term.as_ref()),
        }
    }
    if !known {
        return Err(Error::Unmappable(
            original.iter().map(|s| s.as_ref().to_string()).collect(),
        ));
    }
    if (0..SUPERCLASSES.len()).any(|c| c != NORMAL_CLASS && out[c] == 1.0) {
        out[NORMAL_CLASS] = 0.0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn classes(v: &Array1<f64>) -> Vec<&'static str> {
        v.iter()
            .enumerate()
            .filter(|(_, &x)| x == 1.0)
            .map(|(i, _)| SUPERCLASSES[i])
            .collect()
    }

    #[test]
    fn builtin_covers_every_row() {
        let am = AnnotationMap::builtin();
        assert_eq!(am.len(), 46);
        assert_eq!(am.lookup("  Sinus Rhythm "), Some(&[NORMAL_CLASS][..]));
    }

    #[test]
    fn single_rhythm_term() {
        let am = AnnotationMap::builtin();
        let v = map_annotations(&["atrial fibrillation"], &am).unwrap();
        assert_eq!(classes(&v), vec!["Abnormal Rhythms"]);
    }

    #[test]
    fn av_block_with_prolonged_pr() {
        let am = AnnotationMap::builtin();
        let v = map_annotations(&["1st degree av block", "prolonged pr interval"], &am).unwrap();
        assert_eq!(
            classes(&v),
            vec!["Conduction Disturbance", "Other Abnormalities"]
        );
        let only_pr = map_annotations(&["prolonged pr interval"], &am).unwrap();
        assert_eq!(classes(&only_pr), vec!["Other Abnormalities"]);
    }

    #[test]
    fn normal_dropped_next_to_abnormal() {
        let am = AnnotationMap::builtin();
        let v = map_annotations(&["sinus rhythm", "st depression"], &am).unwrap();
        assert_eq!(classes(&v), vec!["ST/T Abnormalities"]);
    }

    #[test]
    fn unknown_terms() {
        let am = AnnotationMap::builtin();
        let v = map_annotations(&["sinus rhythm", "martian rhythm"], &am).unwrap();
        assert_eq!(classes(&v), vec!["Normal Signals"]);
        assert!(matches!(
            map_annotations(&["martian rhythm"], &am),
            Err(Error::Unmappable(_))
        ));
    }

    #[test]
    fn malformed_tsv() {
        assert!(matches!(
            AnnotationMap::from_tsv("foo bar\n", "x"),
            Err(Error::Parse { .. })
        ));
        assert!(AnnotationMap::from_tsv("foo\tNot A Class\n", "x").is_err());
    }
}
