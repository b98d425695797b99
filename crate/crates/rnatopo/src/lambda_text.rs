//! Text form of λ-structures.
//!
//! ```text
//! >x/1
//! LEVELS 1
//! (())
//! RAINBOW 1
//! ARC 1 4 LABEL 1
//! ARC 2 3 LABEL 1
//! SEQUENCE GCGC
//! ```
//!
//! A block starts at a `>` header. `LEVELS` gives `r` (absent means 0),
//! arcs not listed carry the zero label, `SEQUENCE` is optional. Lines
//! starting with `#` are comments. The structure line may also be written
//! `STRUCTURE <dot-bracket>`, which is how the empty structure appears.

use std::fmt::Write as _;

use rnatopo_core::diagram::{Diagram, Sequence};
use rnatopo_core::lambda::{Label, LambdaError, LambdaStructure};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LambdaTextError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("block {id}: {source}")]
    Invalid { id: String, source: LambdaError },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LambdaRecord {
    pub id: String,
    pub structure: LambdaStructure,
    pub sequence: Option<Sequence>,
}

pub fn write_lambda(id: &str, s: &LambdaStructure, seq: Option<&Sequence>) -> String {
    let r = s.r();
    let mut out = String::new();
    let _ = writeln!(out, ">{id}");
    let _ = writeln!(out, "LEVELS {r}");
    if s.is_empty() {
        out.push_str("STRUCTURE\n");
    } else {
        // noncrossing, so one bracket family always suffices
        let _ = writeln!(out, "{}", s.diagram().to_dot_bracket().unwrap_or_default());
    }
    if r > 0 {
        let _ = writeln!(out, "RAINBOW {}", s.rainbow().bits(r));
        for (i, j, l) in s.labeled_arcs() {
            let _ = writeln!(out, "ARC {i} {j} LABEL {}", l.bits(r));
        }
    }
    if let Some(q) = seq {
        let _ = writeln!(out, "SEQUENCE {q}");
    }
    out
}

#[derive(Default)]
struct Pending {
    id: String,
    header: usize,
    levels: usize,
    structure: Option<Diagram>,
    rainbow: Label,
    arcs: Vec<(usize, usize, Label)>,
    sequence: Option<Sequence>,
}

impl Pending {
    fn finish(self) -> Result<LambdaRecord, LambdaTextError> {
        let Some(d) = self.structure else {
            return Err(LambdaTextError::Syntax {
                line: self.header,
                msg: "block has no structure line".into(),
            });
        };
        if let Some(q) = &self.sequence {
            if q.len() != d.len() {
                return Err(LambdaTextError::Invalid {
                    id: self.id,
                    source: LambdaError::LengthMismatch {
                        got: q.len(),
                        expected: d.len(),
                    },
                });
            }
        }
        let structure = LambdaStructure::new(d, self.rainbow, &self.arcs, self.levels)
            .map_err(|source| LambdaTextError::Invalid {
                id: self.id.clone(),
                source,
            })?;
        Ok(LambdaRecord {
            id: self.id,
            structure,
            sequence: self.sequence,
        })
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> LambdaTextError {
    LambdaTextError::Syntax { line, msg: msg.into() }
}

fn bits(line: usize, text: &str, r: usize) -> Result<Label, LambdaTextError> {
    if text.len() != r {
        return Err(syntax(line, format!("label {text:?} does not have {r} bits")));
    }
    Label::parse_bits(text).ok_or_else(|| syntax(line, format!("bad label {text:?}")))
}

pub fn parse_lambda(text: &str) -> Result<Vec<LambdaRecord>, LambdaTextError> {
    let mut out = Vec::new();
    let mut cur: Option<Pending> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(id) = t.strip_prefix('>') {
            if let Some(p) = cur.take() {
                out.push(p.finish()?);
            }
            cur = Some(Pending {
                id: id.trim().to_string(),
                header: line,
                ..Pending::default()
            });
            continue;
        }
        let p = cur.as_mut().ok_or_else(|| syntax(line, "content before the first '>' header"))?;
        let words: Vec<&str> = t.split_whitespace().collect();
        match words[0] {
            "LEVELS" => {
                if p.structure.is_some() {
                    return Err(syntax(line, "LEVELS must precede the structure"));
                }
                p.levels = words
                    .get(1)
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| syntax(line, "LEVELS needs a number"))?;
            }
            "RAINBOW" => {
                p.rainbow = bits(line, words.get(1).copied().unwrap_or(""), p.levels)?;
            }
            "ARC" => {
                let [_, i, j, kw, l] = words[..] else {
                    return Err(syntax(line, "expected ARC i j LABEL bits"));
                };
                if kw != "LABEL" {
                    return Err(syntax(line, "expected ARC i j LABEL bits"));
                }
                let i = i.parse().map_err(|_| syntax(line, "bad arc endpoint"))?;
                let j = j.parse().map_err(|_| syntax(line, "bad arc endpoint"))?;
                p.arcs.push((i, j, bits(line, l, p.levels)?));
            }
            "SEQUENCE" => {
                let q = words.get(1).copied().unwrap_or("");
                p.sequence = Some(Sequence::parse(q).map_err(|e| syntax(line, e.to_string()))?);
            }
            "STRUCTURE" if p.structure.is_none() => {
                let db = words.get(1).copied().unwrap_or("");
                p.structure = Some(Diagram::parse(db).map_err(|e| syntax(line, e.to_string()))?);
            }
            _ if p.structure.is_none() => {
                p.structure = Some(Diagram::parse(t).map_err(|e| syntax(line, e.to_string()))?);
            }
            w => return Err(syntax(line, format!("unexpected {w:?}"))),
        }
    }
    if let Some(p) = cur {
        out.push(p.finish()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unlabeled_block() {
        let recs = parse_lambda(">x\n((..))\n").unwrap();
        assert_eq!(recs[0].structure.r(), 0);
        assert_eq!(recs[0].structure.diagram().arc_count(), 2);
    }

    #[test]
    fn rejects_width_mismatch() {
        let e = parse_lambda(">x\nLEVELS 1\n()\nRAINBOW 10\n").unwrap_err();
        assert!(matches!(e, LambdaTextError::Syntax { line: 4, .. }));
    }
}
