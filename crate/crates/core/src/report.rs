use std::fmt;

use serde::{Deserialize, Serialize};

/// One failed check, with the indices (points, vertices or nodes) that witness it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
    pub witnesses: Vec<usize>,
}

/// Outcome of an exhaustive verifier. Empty means every check held.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, check: &str, detail: impl Into<String>, witnesses: Vec<usize>) {
        self.violations.push(Violation {
            check: check.to_string(),
            detail: detail.into(),
            witnesses,
        });
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn count(&self, check: &str) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} (witnesses {:?})", self.check, self.detail, self.witnesses)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// `a <= b` up to a relative slack on the larger magnitude.
pub(crate) fn le_rel(a: f64, b: f64, rel: f64) -> bool {
    a <= b || a - b <= rel * a.abs().max(b.abs())
}
