//! Global feature ranking from per-instance Shapley values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shap::ShapExplanation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean of `|phi|` over instances.
    #[default]
    MeanAbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub name: String,
    pub importance: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankEntry>,
    pub aggregation: Aggregation,
    pub n_instances: usize,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }
}

/// Ranks features by mean absolute Shapley value, descending; equal
/// importances keep the original feature order.
pub fn aggregate(explanations: &[ShapExplanation]) -> Result<FeatureRanking> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot rank features from zero explanations".into()))?;
    let names = &first.feature_names;
    for e in explanations {
        if &e.feature_names != names || e.phi.len() != names.len() {
            return Err(Error::InvalidArgument(format!(
                "explanation of instance {} has a different feature set",
                e.instance_index
            )));
        }
    }
    let n = explanations.len() as f64;
    let importances: Vec<f64> = (0..names.len())
        .map(|i| {
            // Sorted summation keeps the result independent of input order.
            let mut mags: Vec<f64> = explanations.iter().map(|e| e.phi[i].abs()).collect();
            mags.sort_by(f64::total_cmp);
            mags.iter().sum::<f64>() / n
        })
        .collect();

    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    Ok(FeatureRanking {
        entries: order
            .iter()
            .enumerate()
            .map(|(r, &i)| RankEntry {
                name: names[i].clone(),
                importance: importances[i],
                rank: r + 1,
            })
            .collect(),
        aggregation: Aggregation::MeanAbs,
        n_instances: explanations.len(),
    })
}

/// The `k` highest-ranked feature names, in rank order.
pub fn top_k(ranking: &FeatureRanking, k: usize) -> Result<Vec<String>> {
    if k == 0 || k > ranking.len() {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={} (got {k})",
            ranking.len()
        )));
    }
    Ok(ranking.entries[..k].iter().map(|e| e.name.clone()).collect())
}

const RANKING_HEADER: &str = "feature\timportance";

pub fn write_ranking(ranking: &FeatureRanking, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("{RANKING_HEADER}\n");
    for e in &ranking.entries {
        let _ = writeln!(out, "{}\t{:?}", e.name, e.importance);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a ranking table; the instance count is not stored and reads as 0.
pub fn read_ranking(path: impl AsRef<Path>) -> Result<FeatureRanking> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(RANKING_HEADER) {
        return Err(Error::parse(
            "ranking",
            format!("{}: unexpected header", path.display()),
        ));
    }
    let entries = lines
        .enumerate()
        .map(|(r, line)| {
            let (name, value) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("ranking", format!("line {}: expected two columns", r + 2)))?;
            let importance = value
                .parse()
                .map_err(|_| Error::parse("ranking", format!("line {}: invalid importance", r + 2)))?;
            Ok(RankEntry {
                name: name.to_string(),
                importance,
                rank: r + 1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureRanking {
        entries,
        aggregation: Aggregation::MeanAbs,
        n_instances: 0,
    })
}
