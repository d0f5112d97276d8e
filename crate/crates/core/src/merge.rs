//! Top-κ selection per KPI and merging across KPIs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attribution::{aggregate_by_name, AttributionScore};
use crate::error::{BalanceError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStrategy {
    #[default]
    Union,
    Intersection,
}

impl std::str::FromStr for MergeStrategy {
    type Err = BalanceError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(MergeStrategy::Union),
            "intersection" => Ok(MergeStrategy::Intersection),
            other => Err(BalanceError::Validation(format!("unknown merge strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeOptions {
    pub kappa: usize,
    pub strategy: MergeStrategy,
}

impl Default for MergeOptions {
    fn default() -> Self {
        MergeOptions { kappa: 3, strategy: MergeStrategy::Union }
    }
}

impl MergeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.kappa == 0 {
            return Err(BalanceError::Validation("kappa must be at least 1".into()));
        }
        Ok(())
    }
}

/// A selected candidate and its per-name score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub name: String,
    pub score: f64,
}

/// Candidates with a nonzero per-name score, best first, at most `kappa`.
pub fn rank_and_select(scores: &[AttributionScore], kappa: usize) -> Vec<Ranked> {
    aggregate_by_name(scores)
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .take(kappa)
        .map(|(name, score)| Ranked { name, score })
        .collect()
}

/// Union or intersection of per-KPI selections, ordered by the best score a
/// name reached in any list, then by name.
pub fn merge_sets(per_kpi: &[Vec<Ranked>], strategy: MergeStrategy) -> Vec<Ranked> {
    let mut best: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for list in per_kpi {
        for r in list {
            let e = best.entry(&r.name).or_insert((r.score, 0));
            e.0 = e.0.max(r.score);
            e.1 += 1;
        }
    }
    let mut out: Vec<Ranked> = best
        .into_iter()
        .filter(|(_, (_, count))| strategy == MergeStrategy::Union || *count == per_kpi.len())
        .map(|(name, (score, _))| Ranked { name: name.to_string(), score })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
    out
}

pub fn names(list: &[Ranked]) -> Vec<String> {
    list.iter().map(|r| r.name.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::ScoreMode;

    fn score(name: &str, s: f64) -> AttributionScore {
        AttributionScore {
            candidate: name.into(),
            lag: 0,
            score: s,
            beta: 0.0,
            delta_x: 0.0,
            signed_contribution: 0.0,
            mode: ScoreMode::Relative,
            flagged: false,
        }
    }

    fn ranked(v: &[(&str, f64)]) -> Vec<Ranked> {
        v.iter().map(|(n, s)| Ranked { name: n.to_string(), score: *s }).collect()
    }

    #[test]
    fn selection_examples() {
        let s = [score("a", 0.9), score("b", 0.5), score("c", 0.1), score("d", 0.0)];
        assert_eq!(names(&rank_and_select(&s, 3)), ["a", "b", "c"]);
        assert_eq!(names(&rank_and_select(&[score("a", 0.9), score("b", 0.0)], 3)), ["a"]);
        assert_eq!(names(&rank_and_select(&[score("b", 0.5), score("a", 0.5)], 1)), ["a"]);
    }

    #[test]
    fn merge_examples() {
        let l1 = ranked(&[("a", 0.9), ("b", 0.4)]);
        let l2 = ranked(&[("b", 0.8), ("c", 0.3)]);
        let lists = [l1.clone(), l2];
        assert_eq!(names(&merge_sets(&lists, MergeStrategy::Union)), ["a", "b", "c"]);
        assert_eq!(names(&merge_sets(&lists, MergeStrategy::Intersection)), ["b"]);
        assert_eq!(merge_sets(std::slice::from_ref(&l1), MergeStrategy::Intersection), l1);
    }
}
