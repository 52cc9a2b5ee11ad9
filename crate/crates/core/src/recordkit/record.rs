use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// One clinical encounter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Visit {
    pub codes: BTreeSet<String>,
    #[serde(default)]
    pub labs: BTreeMap<String, f64>,
    /// Days since the previous visit; absent on the first visit.
    #[serde(default)]
    pub gap_days: Option<f64>,
}

/// A patient: static labels plus an ordered list of visits.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Record {
    pub patient_id: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default)]
    pub visits: Vec<Visit>,
}

impl Visit {
    pub fn with_codes<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Visit {
            codes: codes.into_iter().map(Into::into).collect(),
            ..Visit::default()
        }
    }
}

impl Record {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Record {
            patient_id: patient_id.into(),
            ..Record::default()
        }
    }

    /// Checks the structural invariants of an ingested record.
    pub fn validate(&self) -> Result<(), String> {
        for (t, v) in self.visits.iter().enumerate() {
            if let Some(g) = v.gap_days {
                if !(g >= 0.0) || !g.is_finite() {
                    return Err(format!("visit {t}: gap must be finite and non-negative"));
                }
            }
            if let Some((name, _)) = v.labs.iter().find(|(_, x)| !x.is_finite()) {
                return Err(format!("visit {t}: lab `{name}` is not finite"));
            }
        }
        Ok(())
    }
}
