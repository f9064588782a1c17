use std::path::Path;

use crate::error::{Error, Result};

/// One optimization step. `distill` and `weights` follow the scheme's component order.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub total_loss: f64,
    pub loss_rec: f64,
    pub loss_kl: f64,
    pub distill: Vec<f64>,
    pub omega_rec: f64,
    pub omega_kl: f64,
    pub weights: Vec<f64>,
    pub lr: f64,
}

impl LogRow {
    /// Weighted sum of the logged raw components.
    pub fn weighted_sum(&self) -> f64 {
        let mut s = self.omega_rec * self.loss_rec + self.omega_kl * self.loss_kl;
        for (w, l) in self.weights.iter().zip(&self.distill) {
            s += w * l;
        }
        s
    }

    /// Name of the first non-finite entry, if any.
    pub fn first_non_finite(&self, components: &[String]) -> Option<String> {
        if !self.loss_rec.is_finite() {
            return Some("loss_rec".into());
        }
        if !self.loss_kl.is_finite() {
            return Some("loss_kl".into());
        }
        for (c, v) in components.iter().zip(&self.distill) {
            if !v.is_finite() {
                return Some(format!("loss_{c}"));
            }
        }
        for (c, v) in components.iter().zip(&self.weights) {
            if !v.is_finite() {
                return Some(format!("weight_{c}"));
            }
        }
        (!self.total_loss.is_finite()).then(|| "total_loss".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    pub step: usize,
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub components: Vec<String>,
    pub rows: Vec<LogRow>,
    pub diverged: Option<Divergence>,
}

impl TrainLog {
    pub fn new(components: &[&str]) -> Self {
        TrainLog {
            components: components.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            diverged: None,
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["step", "total_loss", "loss_rec", "loss_kl"].map(String::from).into();
        h.extend(self.components.iter().map(|c| format!("loss_{c}")));
        h.push("omega_rec".into());
        h.push("omega_kl".into());
        h.extend(self.components.iter().map(|c| format!("weight_{c}")));
        h.push("lr".into());
        h
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.step.to_string(),
                r.total_loss.to_string(),
                r.loss_rec.to_string(),
                r.loss_kl.to_string(),
            ];
            rec.extend(r.distill.iter().map(f64::to_string));
            rec.push(r.omega_rec.to_string());
            rec.push(r.omega_kl.to_string());
            rec.extend(r.weights.iter().map(f64::to_string));
            rec.push(r.lr.to_string());
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a CSV written by [`TrainLog::write_csv`]. Divergence is not stored in the CSV.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let components: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("weight_").map(String::from))
            .collect();
        let log = TrainLog {
            components,
            rows: Vec::new(),
            diverged: None,
        };
        if header != log.header() {
            return Err(Error::Validation(format!("unexpected train log header {header:?}")));
        }
        let k = log.components.len();
        let mut log = log;
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Validation(format!("train log field {:?}: {e}", &rec[i])))
            };
            let step = rec[0]
                .parse::<usize>()
                .map_err(|e| Error::Validation(format!("train log step: {e}")))?;
            log.rows.push(LogRow {
                step,
                total_loss: num(1)?,
                loss_rec: num(2)?,
                loss_kl: num(3)?,
                distill: (0..k).map(|j| num(4 + j)).collect::<Result<_>>()?,
                omega_rec: num(4 + k)?,
                omega_kl: num(5 + k)?,
                weights: (0..k).map(|j| num(6 + k + j)).collect::<Result<_>>()?,
                lr: num(6 + 2 * k)?,
            });
        }
        Ok(log)
    }
}
