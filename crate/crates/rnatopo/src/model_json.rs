//! JSON model files.
//!
//! ```json
//! {"version": "rnatopo-loops/1", "r_max": 3, "min_hairpin": 1,
//!  "pseudocount": "0.001",
//!  "rules": [{"id": "hl", "params": {"lhs": "Weak", "x": "G", "y": "C"},
//!             "prob": "0.25"}, ...]}
//! ```
//!
//! Every listed rule names its left-hand side state in `params.lhs`. An entry
//! with id `*` sets the probability of the state's unlisted rules. States
//! absent from the file are uniform. Numbers travel as decimal strings.

use std::collections::BTreeMap;

use rnatopo_core::grammar::{Family, Grammar, Rule, State};
use rnatopo_core::scfg::{Model, ScfgError, StateRules, MODEL_VERSION};
use serde::{Deserialize, Serialize};

/// Rule id of a state's default entry.
pub const DEFAULT_ID: &str = "*";

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("malformed model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported model version {0:?}")]
    Version(String),
    #[error("bad number {0:?}")]
    Number(String),
    #[error("rule {index}: {msg}")]
    Rule { index: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ScfgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: String,
    pub r_max: usize,
    pub min_hairpin: usize,
    pub pseudocount: String,
    pub rules: Vec<RuleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    pub id: String,
    pub params: BTreeMap<String, String>,
    pub prob: String,
}

fn decimal(x: f64) -> String {
    // Display of f64 is the shortest string that reads back exactly
    format!("{x}")
}

fn number(text: &str) -> Result<f64, ModelFileError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ModelFileError::Number(text.to_string()))
}

fn label_width(s: &State, rule: &Rule) -> usize {
    match rule.family {
        Family::Ini | Family::SIni => rule.split.len(),
        _ => s.r(),
    }
}

impl ModelFile {
    pub fn from_model(m: &Model) -> Self {
        let mut rules = Vec::new();
        for (s, sr) in &m.states {
            let lhs = s.to_string();
            let mut base = BTreeMap::new();
            base.insert("lhs".to_string(), lhs);
            rules.push(RuleEntry {
                id: DEFAULT_ID.to_string(),
                params: base.clone(),
                prob: decimal(sr.default),
            });
            for (rule, &p) in &sr.probs {
                let mut params = base.clone();
                for (k, v) in rule.params(label_width(s, rule)) {
                    params.insert(k.to_string(), v);
                }
                rules.push(RuleEntry {
                    id: rule.family.id().to_string(),
                    params,
                    prob: decimal(p),
                });
            }
        }
        ModelFile {
            version: m.version.clone(),
            r_max: m.r_max(),
            min_hairpin: m.grammar.min_hairpin,
            pseudocount: decimal(m.pseudocount),
            rules,
        }
    }

    /// Rebuilds the model and checks normalization.
    pub fn to_model(&self) -> Result<Model, ModelFileError> {
        if self.version != MODEL_VERSION {
            return Err(ModelFileError::Version(self.version.clone()));
        }
        let grammar = Grammar::loops(self.min_hairpin, self.r_max);
        let mut states: BTreeMap<State, StateRules> = BTreeMap::new();
        for (index, e) in self.rules.iter().enumerate() {
            let bad = |msg: String| ModelFileError::Rule { index, msg };
            let lhs = e.params.get("lhs").ok_or_else(|| bad("missing params.lhs".into()))?;
            let state = State::parse(lhs).ok_or_else(|| bad(format!("bad state {lhs:?}")))?;
            let p = number(&e.prob)?;
            let entry = states.entry(state).or_insert_with(|| StateRules {
                probs: BTreeMap::new(),
                default: 0.0,
            });
            if e.id == DEFAULT_ID {
                entry.default = p;
                continue;
            }
            let family = Family::from_id(&e.id).ok_or_else(|| bad(format!("unknown rule id {:?}", e.id)))?;
            let rule = Rule::from_params(
                family,
                e.params
                    .iter()
                    .filter(|(k, _)| k.as_str() != "lhs")
                    .map(|(k, v)| (k.as_str(), v.as_str())),
            )
            .ok_or_else(|| bad(format!("bad parameters for {}", e.id)))?;
            if entry.probs.insert(rule, p).is_some() {
                return Err(bad("duplicate rule".into()));
            }
        }
        Ok(Model::from_parts(grammar, number(&self.pseudocount)?, states)?)
    }
}

pub fn model_to_json(m: &Model) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(m)).expect("model file serializes");
    s.push('\n');
    s
}

pub fn model_from_json(text: &str) -> Result<Model, ModelFileError> {
    let f: ModelFile = serde_json::from_str(text)?;
    f.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model_round_trips() {
        let m = Model::uniform(Grammar::loops(3, 2));
        let back = model_from_json(&model_to_json(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_unnormalized_state() {
        let text = r#"{"version":"rnatopo-loops/1","r_max":1,"min_hairpin":1,"pseudocount":"0",
            "rules":[{"id":"*","params":{"lhs":"SingleStrand"},"prob":"0.5"}]}"#;
        assert!(matches!(
            model_from_json(text),
            Err(ModelFileError::Model(ScfgError::NotNormalized { .. }))
        ));
    }
}
