use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub dataset: String,
    pub suite: String,
    pub n_steps: usize,
    pub seed: u64,
}

/// Named metric values. Keys are `mae_acc`, `mae_ef`, `mae_nf`,
/// `mae_symm_f`, `mae_dep`, `mae_dnp`, `mae_symm_p` and their `rel_`
/// counterparts; a key is absent when it does not apply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub values: BTreeMap<String, f64>,
}

impl MetricsReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn check(&self) -> Result<()> {
        match self.values.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            Some((k, v)) => Err(Error::Invariant(format!("metric {k} = {v}"))),
            None => Ok(()),
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,value")?;
        for (k, v) in &self.values {
            writeln!(w, "{k},{v:e}")?;
        }
        Ok(())
    }
}

/// Mean and population standard deviation of every metric shared by all
/// reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub label: String,
    pub n: usize,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
}

pub fn aggregate(label: impl Into<String>, reports: &[MetricsReport]) -> Result<Aggregate> {
    let first = reports
        .first()
        .ok_or_else(|| Error::data("nothing to aggregate"))?;
    let n = reports.len() as f64;
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for key in first.values.keys() {
        let xs: Option<Vec<f64>> = reports.iter().map(|r| r.get(key)).collect();
        let Some(xs) = xs else { continue };
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        mean.insert(key.clone(), m);
        std.insert(key.clone(), var.sqrt());
    }
    Ok(Aggregate {
        label: label.into(),
        n: reports.len(),
        mean,
        std,
    })
}

/// One row per aggregate, one `mean` and one `std` column per metric.
pub fn write_aggregate_csv<W: Write>(rows: &[Aggregate], mut w: W) -> Result<()> {
    let mut keys: Vec<&String> = rows.iter().flat_map(|r| r.mean.keys()).collect();
    keys.sort();
    keys.dedup();
    write!(w, "label,n")?;
    for k in &keys {
        write!(w, ",{k}_mean,{k}_std")?;
    }
    writeln!(w)?;
    for r in rows {
        write!(w, "{},{}", r.label, r.n)?;
        for k in &keys {
            match (r.mean.get(*k), r.std.get(*k)) {
                (Some(m), Some(s)) => write!(w, ",{m:e},{s:e}")?,
                _ => write!(w, ",,")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}
