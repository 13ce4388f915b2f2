//! Sorted robustness curves: per feature arm, the final performance of every
//! sweep configuration sorted in decreasing order.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::sweep::{Status, SweepRecord};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    /// 1-based.
    pub rank: usize,
    pub performance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmCurve {
    pub arm: String,
    pub points: Vec<CurvePoint>,
    /// Trapezoid area with rank rescaled to `[0, 1]`; a single point's area
    /// is its value.
    pub auc: f64,
}

/// Label grouping records by their feature flags, e.g. `vtg` or `none`.
pub fn feature_arm(r: &SweepRecord) -> String {
    r.cell().features().arm()
}

/// Groups completed records by `group_by`, averages each configuration's
/// final return over its seeds, and sorts every arm in decreasing order.
///
/// Arms without a completed record are omitted with a warning.
pub fn sorted_robustness_curve<F>(records: &[SweepRecord], group_by: F) -> Vec<ArmCurve>
where
    F: Fn(&SweepRecord) -> String,
{
    let mut arms: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in records {
        let configs = arms.entry(group_by(r)).or_default();
        let perfs = configs.entry(r.config_hash.clone()).or_default();
        if let (Status::Ok, Some(v)) = (r.status, r.final_return) {
            perfs.push(v);
        }
    }
    let mut out = Vec::new();
    for (arm, configs) in arms {
        let mut perfs: Vec<f64> = configs
            .values()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        if perfs.is_empty() {
            log::warn!("arm {arm} has no completed records; omitted");
            continue;
        }
        perfs.sort_by(|a, b| b.total_cmp(a));
        out.push(ArmCurve {
            arm,
            auc: normalized_auc(&perfs),
            points: perfs
                .into_iter()
                .enumerate()
                .map(|(i, performance)| CurvePoint {
                    rank: i + 1,
                    performance,
                })
                .collect(),
        });
    }
    out
}

pub fn normalized_auc(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let dx = 1.0 / (n - 1) as f64;
            values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dx).sum()
        }
    }
}

/// Writes `curves.csv` (arm, rank, performance) and `auc.csv` (arm, auc).
pub fn write_curves(dir: &Path, curves: &[ArmCurve]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
    w.write_record(["arm", "rank", "performance"])?;
    for c in curves {
        for p in &c.points {
            w.write_record([c.arm.clone(), p.rank.to_string(), p.performance.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("auc.csv"))?;
    w.write_record(["arm", "n_configs", "auc"])?;
    for c in curves {
        w.write_record([c.arm.clone(), c.points.len().to_string(), c.auc.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Learning curve of one run: episode index and return.
pub fn write_learning_curve<W: Write>(out: W, returns: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "return"])?;
    for (i, r) in returns.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
