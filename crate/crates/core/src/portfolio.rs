use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::conjugate::StudyEstimate;
use crate::error::{Error, Result};

/// All studies available for one compound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompoundRecord {
    pub compound_id: String,
    pub studies: Vec<StudyEstimate>,
    /// Development phase tag per study, parallel to `studies`. Empty when
    /// the portfolio was built without phase information.
    #[serde(default)]
    pub phases: Vec<String>,
}

impl CompoundRecord {
    pub fn new(compound_id: impl Into<String>, studies: Vec<StudyEstimate>) -> Self {
        CompoundRecord {
            compound_id: compound_id.into(),
            studies,
            phases: Vec::new(),
        }
    }

    pub fn phase(&self, j: usize) -> Option<&str> {
        self.phases.get(j).map(String::as_str)
    }

    /// Precision-weighted summary of the compound's studies: returns
    /// (Σ θ̂/σ² / Σ 1/σ², Σ 1/σ²).
    pub fn weighted_mean(&self) -> (f64, f64) {
        let mut w_sum = 0.0;
        let mut wy_sum = 0.0;
        for s in &self.studies {
            let w = 1.0 / s.variance();
            w_sum += w;
            wy_sum += w * s.estimate;
        }
        (wy_sum / w_sum, w_sum)
    }
}

/// A validated collection of compounds, each with at least one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    compounds: Vec<CompoundRecord>,
}

impl Portfolio {
    pub fn new(compounds: Vec<CompoundRecord>) -> Result<Self> {
        if compounds.is_empty() {
            return Err(Error::Validation("portfolio has no compounds".into()));
        }
        let mut seen = HashSet::new();
        for c in &compounds {
            if !seen.insert(c.compound_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate compound_id '{}'",
                    c.compound_id
                )));
            }
            if c.studies.is_empty() {
                return Err(Error::Validation(format!(
                    "compound '{}' has no studies",
                    c.compound_id
                )));
            }
            if !c.phases.is_empty() && c.phases.len() != c.studies.len() {
                return Err(Error::Validation(format!(
                    "compound '{}' has {} phase tags for {} studies",
                    c.compound_id,
                    c.phases.len(),
                    c.studies.len()
                )));
            }
            for s in &c.studies {
                s.validate()
                    .map_err(|e| Error::Validation(format!("compound '{}': {e}", c.compound_id)))?;
            }
        }
        Ok(Portfolio { compounds })
    }

    /// Builds a portfolio from `(compound_id, [(estimate, std_error)])` tuples.
    pub fn from_estimates<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<(f64, f64)>)>,
        S: Into<String>,
    {
        let compounds = rows
            .into_iter()
            .map(|(id, studies)| {
                let studies = studies
                    .into_iter()
                    .map(|(est, se)| StudyEstimate::new(est, se))
                    .collect::<Result<Vec<_>>>()?;
                Ok(CompoundRecord::new(id, studies))
            })
            .collect::<Result<Vec<_>>>()?;
        Portfolio::new(compounds)
    }

    pub fn compounds(&self) -> &[CompoundRecord] {
        &self.compounds
    }

    pub fn n_compounds(&self) -> usize {
        self.compounds.len()
    }

    pub fn n_studies(&self) -> usize {
        self.compounds.iter().map(|c| c.studies.len()).sum()
    }

    /// Copy of the portfolio with every estimate negated.
    pub fn flipped(&self) -> Self {
        let compounds = self
            .compounds
            .iter()
            .map(|c| CompoundRecord {
                compound_id: c.compound_id.clone(),
                studies: c
                    .studies
                    .iter()
                    .map(|s| StudyEstimate {
                        estimate: -s.estimate,
                        ..s.clone()
                    })
                    .collect(),
                phases: c.phases.clone(),
            })
            .collect();
        Portfolio { compounds }
    }
}
