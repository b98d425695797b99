//! Tab-separated structure records: `ID<TAB>SEQUENCE<TAB>STRUCTURE`.
//!
//! `SEQUENCE` may be `-` for a structure-only record. Lines starting with `#`
//! and blank lines are skipped. Columns after the third are ignored, which
//! lets sample files carry a genus column and still read back.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rnatopo_core::diagram::{Diagram, DiagramError, Sequence};
use rnatopo_core::fatgraph::{Fatgraph, FatgraphError, GenusReport};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("line {line}: expected ID, SEQUENCE and STRUCTURE separated by tabs")]
    Fields { line: usize },
    #[error("line {line}: {source}")]
    Structure { line: usize, source: DiagramError },
    #[error("line {line}: {source}")]
    Sequence { line: usize, source: DiagramError },
    #[error("line {line}: sequence has {seq} bases, structure has {structure}")]
    Length { line: usize, seq: usize, structure: usize },
}

impl CorpusError {
    pub fn line(&self) -> usize {
        match *self {
            CorpusError::Fields { line }
            | CorpusError::Structure { line, .. }
            | CorpusError::Sequence { line, .. }
            | CorpusError::Length { line, .. } => line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub sequence: Option<Sequence>,
    pub diagram: Diagram,
    /// 1-based line in the source text.
    pub line: usize,
}

impl CorpusRecord {
    pub fn new(id: impl Into<String>, sequence: Option<Sequence>, diagram: Diagram) -> Self {
        CorpusRecord {
            id: id.into(),
            sequence,
            diagram,
            line: 0,
        }
    }

    /// Genus report of the underlying matching.
    pub fn topology(&self) -> Result<GenusReport, FatgraphError> {
        let (m, _) = self.diagram.to_matching();
        Fatgraph::from_matching(&m)?.genus()
    }

    pub fn genus(&self) -> usize {
        self.topology().map(|t| t.g).unwrap_or(0)
    }

    /// The record as one corpus line (without newline).
    pub fn to_line(&self) -> Result<String, DiagramError> {
        let seq = match &self.sequence {
            Some(s) => s.to_string(),
            None => "-".to_string(),
        };
        Ok(format!("{}\t{}\t{}", self.id, seq, self.diagram.to_dot_bracket()?))
    }
}

/// Upper-cases and maps `T` to `U` before reading the bases.
fn parse_sequence(text: &str) -> Result<Sequence, DiagramError> {
    let norm: String = text
        .chars()
        .map(|c| match c.to_ascii_uppercase() {
            'T' => 'U',
            c => c,
        })
        .collect();
    Sequence::parse(&norm)
}

fn parse_line(line: usize, text: &str) -> Result<CorpusRecord, CorpusError> {
    let mut cols = text.split('\t');
    let (Some(id), Some(seq), Some(st)) = (cols.next(), cols.next(), cols.next()) else {
        return Err(CorpusError::Fields { line });
    };
    let id = id.trim();
    if id.is_empty() {
        return Err(CorpusError::Fields { line });
    }
    let diagram = Diagram::parse(st.trim()).map_err(|source| CorpusError::Structure { line, source })?;
    let seq = seq.trim();
    let sequence = if seq == "-" {
        None
    } else {
        let s = parse_sequence(seq).map_err(|source| CorpusError::Sequence { line, source })?;
        if s.len() != diagram.len() {
            return Err(CorpusError::Length {
                line,
                seq: s.len(),
                structure: diagram.len(),
            });
        }
        Some(s)
    };
    Ok(CorpusRecord {
        id: id.to_string(),
        sequence,
        diagram,
        line,
    })
}

/// One result per non-comment line, in file order.
pub fn parse_corpus(text: &str) -> Vec<Result<CorpusRecord, CorpusError>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(k, l)| parse_line(k + 1, l.trim_end_matches('\r')))
        .collect()
}

/// All records, or the first error.
pub fn parse_corpus_strict(text: &str) -> Result<Vec<CorpusRecord>, CorpusError> {
    parse_corpus(text).into_iter().collect()
}

pub fn write_corpus(records: &[CorpusRecord]) -> Result<String, DiagramError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_line()?);
        out.push('\n');
    }
    Ok(out)
}

/// Size and genus composition of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub records: usize,
    pub with_sequence: usize,
    pub genus_counts: BTreeMap<usize, usize>,
    pub mean_length: f64,
}

impl CorpusSummary {
    pub fn of(records: &[CorpusRecord]) -> Self {
        let mut genus_counts = BTreeMap::new();
        for r in records {
            *genus_counts.entry(r.genus()).or_insert(0) += 1;
        }
        let total: usize = records.iter().map(|r| r.diagram.len()).sum();
        CorpusSummary {
            records: records.len(),
            with_sequence: records.iter().filter(|r| r.sequence.is_some()).count(),
            genus_counts,
            mean_length: if records.is_empty() {
                0.0
            } else {
                total as f64 / records.len() as f64
            },
        }
    }

    /// `genus counts 16/73/1` style, genus 0 first with gaps filled.
    pub fn genus_histogram(&self) -> String {
        let top = self.genus_counts.keys().next_back().copied().unwrap_or(0);
        let mut s = String::new();
        for g in 0..=top {
            if g > 0 {
                s.push('/');
            }
            let _ = write!(s, "{}", self.genus_counts.get(&g).copied().unwrap_or(0));
        }
        s
    }
}

impl std::fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} records, genus counts {}, mean length {:.2}",
            self.records,
            self.genus_histogram(),
            self.mean_length
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_comments_dashes_and_extra_columns() {
        let text = "# toy\n\na\tGGGAAACCC\t(((...)))\nb\t-\t([)]\t1\n";
        let recs = parse_corpus_strict(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].line, 3);
        assert!(recs[1].sequence.is_none());
        assert_eq!(recs[1].genus(), 1);
    }

    #[test]
    fn normalizes_dna_letters() {
        let r = parse_corpus_strict("x\tggtacc\t((..))\n").unwrap();
        assert_eq!(r[0].sequence.as_ref().unwrap().to_string(), "GGUACC");
    }

    #[test]
    fn reports_bad_lines() {
        let out = parse_corpus("a\tAC\t(.)\nb\t(())\nc\tAAAA\t(()\n");
        assert!(matches!(out[0], Err(CorpusError::Length { line: 1, .. })));
        assert!(matches!(out[1], Err(CorpusError::Fields { line: 2 })));
        assert!(matches!(out[2], Err(CorpusError::Structure { line: 3, .. })));
    }
}
