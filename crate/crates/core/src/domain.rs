//! Domain-name newtype shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque website identifier. Websites are compared and tie-broken by the
/// lexicographic order of this string.
pub type WebsiteId = String;

/// A fully-qualified domain name, lowercased and without a trailing dot.
///
/// Construction normalizes the textual form so that `BTreeSet<Domain>` and
/// map keys behave consistently regardless of how the name arrived.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Domain(String);

impl Domain {
    pub fn new(name: &str) -> Result<Self> {
        let normalized = name.trim_end_matches('.').to_ascii_lowercase();
        if normalized.is_empty() {
            return Err(Error::InvalidDomain(name.to_string()));
        }
        Ok(Domain(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Domain {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Domain::new(&value)
    }
}

impl From<Domain> for String {
    fn from(d: Domain) -> String {
        d.0
    }
}
