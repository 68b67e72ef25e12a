use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{pearson, spearman, ClassifierKind, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub seed_model: Option<String>,
    pub aggregation: Option<String>,
    pub dim: usize,
    pub logreg_f1: Option<f64>,
    pub mlp_f1: Option<f64>,
    pub ch_index: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LogregF1,
    MlpF1,
    ChIndex,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::LogregF1, Metric::MlpF1, Metric::ChIndex];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::LogregF1 => "logreg_f1",
            Metric::MlpF1 => "mlp_f1",
            Metric::ChIndex => "ch_index",
        }
    }

    fn of(self, row: &ComparisonRow) -> Option<f64> {
        match self {
            Metric::LogregF1 => row.logreg_f1,
            Metric::MlpF1 => row.mlp_f1,
            Metric::ChIndex => row.ch_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dataset: String,
    pub rows: Vec<ComparisonRow>,
    /// Row index holding the best value of each metric.
    pub best: BTreeMap<Metric, usize>,
    /// `pearson:x_vs_y` and `spearman:x_vs_y` across rows, where defined.
    pub correlations: BTreeMap<String, f64>,
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x.is_infinite() => "inf".into(),
        Some(x) => format!("{x:.4}"),
    }
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,seed_model,aggregation,dim,logreg_f1,mlp_f1,ch_index\n");
        for (i, r) in self.rows.iter().enumerate() {
            let cell = |m: Metric| {
                let mut v = fmt_value(m.of(r));
                if self.best.get(&m) == Some(&i) {
                    v.push('*');
                }
                v
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.method,
                r.seed_model.as_deref().unwrap_or(""),
                r.aggregation.as_deref().unwrap_or(""),
                r.dim,
                cell(Metric::LogregF1),
                cell(Metric::MlpF1),
                cell(Metric::ChIndex)
            );
        }
        s
    }

    /// Seed model × aggregation grid of one metric for one method.
    pub fn pivot(&self, method: &str, metric: Metric) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut grid: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            if let Some(v) = metric.of(r) {
                grid.entry(r.seed_model.clone().unwrap_or_default())
                    .or_default()
                    .insert(r.aggregation.clone().unwrap_or_default(), v);
            }
        }
        grid
    }
}

type RowValue = dyn Fn(&ComparisonRow) -> Option<f64>;

/// Tabulates reports of the same dataset, marks the best row per metric and
/// correlates CH and dimension with Micro-F1 across rows.
pub fn compare_report(reports: &[EvalReport]) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(Error::invalid("comparison needs at least two reports"));
    }
    let dataset = reports[0].metadata.dataset.clone();
    if let Some(r) = reports.iter().find(|r| r.metadata.dataset != dataset) {
        return Err(Error::invalid(format!(
            "reports come from different datasets ({dataset:?} and {:?})",
            r.metadata.dataset
        )));
    }
    if reports
        .iter()
        .any(|r| r.restricted_to_multi_predicate != reports[0].restricted_to_multi_predicate)
    {
        return Err(Error::invalid("cannot mix restricted and unrestricted reports"));
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            method: r.metadata.method.clone(),
            seed_model: r.metadata.seed_model.clone(),
            aggregation: r.metadata.aggregation.clone(),
            dim: r.metadata.dim,
            logreg_f1: r.scores(ClassifierKind::LogregOvr).map(|s| s.micro_f1_mean),
            mlp_f1: r.scores(ClassifierKind::Mlp).map(|s| s.micro_f1_mean),
            ch_index: r.ch_index,
        })
        .collect();

    let mut best = BTreeMap::new();
    for m in Metric::ALL {
        let mut top: Option<(usize, f64)> = None;
        for (i, r) in rows.iter().enumerate() {
            if let Some(v) = m.of(r) {
                if top.is_none_or(|(_, t)| v > t) {
                    top = Some((i, v));
                }
            }
        }
        if let Some((i, _)) = top {
            best.insert(m, i);
        }
    }

    let mut correlations = BTreeMap::new();
    for f1 in [Metric::LogregF1, Metric::MlpF1] {
        let pairs = |x: &RowValue| -> (Vec<f64>, Vec<f64>) {
            rows.iter()
                .filter_map(|r| Some((x(r)?, f1.of(r)?)))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .unzip()
        };
        let sources: [(&str, &RowValue); 2] = [("ch_index", &|r| r.ch_index), ("dim", &|r| Some(r.dim as f64))];
        for (name, get) in sources {
            let (x, y) = pairs(get);
            if let Ok(v) = pearson(&x, &y) {
                correlations.insert(format!("pearson:{name}_vs_{}", f1.as_str()), v);
            }
            if let Ok(v) = spearman(&x, &y) {
                correlations.insert(format!("spearman:{name}_vs_{}", f1.as_str()), v);
            }
        }
    }
    Ok(ComparisonTable {
        dataset,
        rows,
        best,
        correlations,
    })
}
