use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::WordSet;

/// Positive per-word costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CostFunction {
    costs: Vec<f64>,
}

impl CostFunction {
    pub fn uniform(num_words: usize) -> Self {
        Self {
            costs: vec![1.0; num_words],
        }
    }

    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if let Some((i, c)) = costs
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "cost of word {i} must be positive and finite, got {c}"
            )));
        }
        Ok(Self { costs })
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn cost(&self, word: usize) -> f64 {
        self.costs[word]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn total<'a>(&self, words: impl IntoIterator<Item = &'a usize>) -> f64 {
        words.into_iter().fold(0.0, |acc, &w| acc + self.costs[w])
    }

    pub fn total_all(&self) -> f64 {
        self.costs.iter().fold(0.0, |acc, c| acc + c)
    }

    pub(crate) fn check_len(&self, num_words: usize) -> Result<()> {
        if self.len() != num_words {
            return Err(Error::InvalidInput(format!(
                "{} costs for a text of {} words",
                self.len(),
                num_words
            )));
        }
        Ok(())
    }

    pub(crate) fn check_set(&self, set: &WordSet) -> Result<()> {
        match set.iter().find(|&&i| i >= self.len()) {
            Some(&index) => Err(Error::InvalidIndex {
                index,
                len: self.len(),
            }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<f64>> for CostFunction {
    type Error = Error;

    fn try_from(costs: Vec<f64>) -> Result<Self> {
        Self::new(costs)
    }
}

impl From<CostFunction> for Vec<f64> {
    fn from(c: CostFunction) -> Self {
        c.costs
    }
}
