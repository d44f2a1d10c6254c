//! Rule-based query expansion into weighted retrieval templates.
//!
//! Directive grammar: `motion:<low|medium|high>`, `lang:<tag>` and
//! `tag:<name>` tokens become attribute constraints shared by every
//! template; the remaining text is tokenized into terms.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FieldError, Result};
use crate::index::{tokenize, AttributeConstraints, RetrievalTemplate};
use crate::model::MotionCategory;

pub const BASE_WEIGHT: f64 = 1.0;
pub const SYNONYM_WEIGHT: f64 = 0.8;
pub const EXPANDER_WEIGHT: f64 = 0.6;

/// Term → alternative phrases, e.g. `{"waterlogging": ["flooded street"]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymTable(BTreeMap<String, Vec<String>>);

impl SynonymTable {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        SynonymTable(entries.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(SynonymTable::new(serde_json::from_str(&text)?))
    }

    pub fn alternatives(&self, term: &str) -> &[String] {
        self.0.get(term).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// External source of extra phrasings for a query.
pub trait QueryExpander: Send + Sync {
    fn expand(&self, query: &str) -> Result<Vec<String>>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedQuery {
    pub terms: Vec<String>,
    pub constraints: AttributeConstraints,
    /// `tag:` directive values in query order.
    pub tags: Vec<String>,
}

pub fn parse_query(query: &str) -> Result<ParsedQuery> {
    let mut parsed = ParsedQuery::default();
    let mut text = Vec::new();
    for word in query.split_whitespace() {
        let lower = word.to_lowercase();
        match lower.split_once(':') {
            Some(("motion", value)) => {
                let category = value.parse::<MotionCategory>().map_err(|_| {
                    Error::InvalidRequest(vec![FieldError::new("query", format!("unknown motion category `{value}`"))])
                })?;
                parsed.constraints.motion_category = Some(category);
            }
            Some(("lang", value)) if !value.is_empty() => parsed.constraints.language = Some(value.to_owned()),
            Some(("tag", value)) if !value.is_empty() => {
                parsed.constraints.tags_any.get_or_insert_with(BTreeSet::new).insert(value.to_owned());
                if !parsed.tags.iter().any(|t| t == value) {
                    parsed.tags.push(value.to_owned());
                }
            }
            _ => text.push(lower),
        }
    }
    parsed.terms = tokenize(&text.join(" "));
    Ok(parsed)
}

pub fn expand_query(
    query: &str,
    synonyms: &SynonymTable,
    expander: Option<&dyn QueryExpander>,
) -> Result<Vec<RetrievalTemplate>> {
    let parsed = parse_query(query)?;
    if parsed.terms.is_empty() && parsed.constraints.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let template = |terms: Vec<String>, weight: f64| RetrievalTemplate {
        terms,
        attribute_constraints: parsed.constraints.clone(),
        weight,
    };
    let mut templates = vec![template(parsed.terms.clone(), BASE_WEIGHT)];
    for (i, term) in parsed.terms.iter().enumerate() {
        for alternative in synonyms.alternatives(term) {
            let mut terms = parsed.terms[..i].to_vec();
            terms.extend(tokenize(alternative));
            terms.extend_from_slice(&parsed.terms[i + 1..]);
            templates.push(template(terms, SYNONYM_WEIGHT));
        }
    }
    if let Some(expander) = expander {
        for phrase in expander.expand(query)? {
            let terms = tokenize(&phrase);
            if !terms.is_empty() {
                templates.push(template(terms, EXPANDER_WEIGHT));
            }
        }
    }
    let mut seen = BTreeSet::new();
    templates.retain(|t| seen.insert((t.terms.clone(), format!("{:?}", t.attribute_constraints))));
    Ok(templates)
}
