//! Core data model: products and their attribute-value pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single attribute-value pair, the atom of prediction and scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttrValuePair {
    pub attribute: String,
    pub value: String,
}

impl AttrValuePair {
    /// Builds a pair from raw strings, trimming outer whitespace.
    /// Fails when either side is empty after trimming.
    pub fn new(attribute: impl Into<String>, value: impl Into<String>) -> Result<Self> {
        let attribute = attribute.into().trim().to_string();
        let value = value.into().trim().to_string();
        if attribute.is_empty() {
            return Err(Error::Input("attribute is empty".into()));
        }
        if value.is_empty() {
            return Err(Error::Input("value is empty".into()));
        }
        Ok(Self { attribute, value })
    }
}

/// One product: identifier, category label, input text, and gold pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub id: String,
    pub category: String,
    pub text: String,
    pub pairs: Vec<AttrValuePair>,
}

impl ProductRecord {
    /// Validates the record invariants: non-empty text and well-formed pairs.
    /// Pair uniqueness under normalization is enforced by the loaders.
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Input(format!("record {}: text is empty", self.id)));
        }
        for pair in &self.pairs {
            if pair.attribute.trim().is_empty() || pair.value.trim().is_empty() {
                return Err(Error::Input(format!(
                    "record {}: pair has empty attribute or value",
                    self.id
                )));
            }
        }
        Ok(())
    }
}
