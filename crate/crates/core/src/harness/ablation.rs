use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{adapt_and_evaluate, prepare, RunSummary};
use super::{ExperimentConfig, HarnessError};
use crate::adapter::Variant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub variant: Variant,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub ok: usize,
    pub failed: usize,
    pub mse: Option<Spread>,
    pub mae: Option<Spread>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,ok,failed,mse_median,mse_q1,mse_q3,mae_median,mae_q1,mae_q3\n");
        let f = |x: Option<Spread>| match x {
            Some(x) => format!("{:?},{:?},{:?}", x.median, x.q1, x.q3),
            None => ",,".into(),
        };
        for r in &self.rows {
            s += &format!("{},{},{},{},{}\n", r.variant, r.ok, r.failed, f(r.mse), f(r.mae));
        }
        s
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(Spread { median: quantile(&v, 0.5), q1: quantile(&v, 0.25), q3: quantile(&v, 0.75) })
}

/// Every (variant, seed) cell through the full pipeline. Seeds run in
/// parallel; within a seed the data, backbone and embeddings are shared by
/// all variants. A failing cell is recorded and the sweep continues. Rows
/// follow the table order full, wo_covariate, wo_adaln, wo_selection,
/// wo_zero_init.
pub fn run_ablation(cfg: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable, HarnessError> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Config("ablation needs at least one variant and one seed".into()));
    }
    let mut variants = variants.to_vec();
    variants.sort();
    variants.dedup();
    let per_seed: Vec<Vec<AblationCell>> = seeds
        .par_iter()
        .map(|&seed| match prepare(cfg, seed, None) {
            Ok(p) => variants
                .iter()
                .map(|&variant| match adapt_and_evaluate(cfg, &p.backbone, &p.embedded, variant, seed) {
                    Ok(out) => AblationCell { variant, seed, summary: Some(out.summary), error: None },
                    Err(e) => AblationCell { variant, seed, summary: None, error: Some(e.to_string()) },
                })
                .collect(),
            Err(e) => variants
                .iter()
                .map(|&variant| AblationCell { variant, seed, summary: None, error: Some(e.to_string()) })
                .collect(),
        })
        .collect();
    let mut cells: Vec<AblationCell> = per_seed.into_iter().flatten().collect();
    cells.sort_by_key(|c| (c.variant, seeds.iter().position(|&s| s == c.seed)));
    let rows = variants
        .iter()
        .map(|&v| {
            let ok: Vec<&RunSummary> = cells.iter().filter(|c| c.variant == v).filter_map(|c| c.summary.as_ref()).collect();
            let failed = cells.iter().filter(|c| c.variant == v && c.summary.is_none()).count();
            AblationRow {
                variant: v,
                ok: ok.len(),
                failed,
                mse: spread(&ok.iter().map(|s| s.test.mse).collect::<Vec<_>>()),
                mae: spread(&ok.iter().map(|s| s.test.mae).collect::<Vec<_>>()),
            }
        })
        .collect();
    Ok(AblationTable { rows, cells })
}
