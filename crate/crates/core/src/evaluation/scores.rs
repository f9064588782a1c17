use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw downstream metrics of one method. Percent fields are in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub method: String,
    pub pesq: f64,
    pub stoi: f64,
    pub er_acc: f64,
    pub ks_acc: f64,
    pub sid_acc: f64,
    pub ic_acc: f64,
    pub pr_per: f64,
    pub asr_wer: f64,
    pub asv_eer: f64,
    pub sd_der: f64,
    pub tts_wer: f64,
    pub tts_sim: f64,
}

fn check_range(name: &str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} = {v} outside [{lo}, {hi}]")))
    }
}

impl MetricRecord {
    pub fn validate(&self) -> Result<()> {
        check_range("pesq", self.pesq, 1.0, 4.64)?;
        check_range("stoi", self.stoi, 0.0, 1.0)?;
        check_range("tts_sim", self.tts_sim, 0.0, 1.0)?;
        for (n, v) in self.percents() {
            check_range(n, v, 0.0, 100.0)?;
        }
        Ok(())
    }

    fn percents(&self) -> [(&'static str, f64); 9] {
        [
            ("er_acc", self.er_acc),
            ("ks_acc", self.ks_acc),
            ("sid_acc", self.sid_acc),
            ("ic_acc", self.ic_acc),
            ("pr_per", self.pr_per),
            ("asr_wer", self.asr_wer),
            ("asv_eer", self.asv_eer),
            ("sd_der", self.sd_der),
            ("tts_wer", self.tts_wer),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeanKind {
    #[default]
    Geometric,
    Arithmetic,
    Harmonic,
}

impl std::str::FromStr for MeanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(MeanKind::Geometric),
            "arithmetic" => Ok(MeanKind::Arithmetic),
            "harmonic" => Ok(MeanKind::Harmonic),
            _ => Err(Error::Validation(format!("unknown mean kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaskScores {
    pub x_r: f64,
    pub x_u: f64,
    pub x_g: f64,
    pub overall: f64,
    pub mean_kind: MeanKind,
}

/// Rounds to the three decimals used for reporting.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// `(pesq / 5 + stoi) / 2`.
pub fn score_reconstruction(pesq: f64, stoi: f64) -> Result<f64> {
    // 5.0 is accepted as the nominal ceiling of the rescaling
    check_range("pesq", pesq, 1.0, 5.0)?;
    check_range("stoi", stoi, 0.0, 1.0)?;
    Ok((pesq / 5.0 + stoi) / 2.0)
}

/// `(1 - wer + sim) / 2` with `wer` given in percent.
pub fn score_generation(tts_wer_percent: f64, sim: f64) -> Result<f64> {
    check_range("tts_wer", tts_wer_percent, 0.0, 100.0)?;
    check_range("tts_sim", sim, 0.0, 1.0)?;
    Ok((1.0 - tts_wer_percent / 100.0 + sim) / 2.0)
}

/// Mean of four accuracies and four complemented error rates, as a fraction.
pub fn score_understanding(r: &MetricRecord) -> Result<f64> {
    for (n, v) in &r.percents()[..8] {
        check_range(n, *v, 0.0, 100.0)?;
    }
    let acc = r.er_acc + r.ks_acc + r.sid_acc + r.ic_acc;
    let err = r.pr_per + r.asr_wer + r.asv_eer + r.sd_der;
    Ok((acc + 400.0 - err) / 800.0)
}

pub fn overall_score(x_r: f64, x_u: f64, x_g: f64, kind: MeanKind) -> Result<f64> {
    let xs = [x_r, x_u, x_g];
    for (n, v) in ["x_r", "x_u", "x_g"].iter().zip(xs) {
        check_range(n, v, 0.0, 1.0)?;
    }
    Ok(match kind {
        MeanKind::Geometric => (x_r * x_u * x_g).cbrt(),
        MeanKind::Arithmetic => (x_r + x_u + x_g) / 3.0,
        MeanKind::Harmonic => {
            if xs.contains(&0.0) {
                return Err(Error::Validation("harmonic mean of a zero component".into()));
            }
            3.0 / xs.iter().map(|x| 1.0 / x).sum::<f64>()
        }
    })
}

pub fn score_record(r: &MetricRecord, kind: MeanKind) -> Result<TaskScores> {
    r.validate()?;
    let x_r = score_reconstruction(r.pesq, r.stoi)?;
    let x_u = score_understanding(r)?;
    let x_g = score_generation(r.tts_wer, r.tts_sim)?;
    Ok(TaskScores {
        x_r,
        x_u,
        x_g,
        overall: overall_score(x_r, x_u, x_g, kind)?,
        mean_kind: kind,
    })
}

/// Reads JSON lines; blank lines are skipped. An input with no records is an error.
pub fn read_metric_records(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: MetricRecord = serde_json::from_str(line)
            .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        r.validate()?;
        out.push(r);
    }
    if out.is_empty() {
        return Err(Error::Validation(format!("{} has no metric records", path.display())));
    }
    Ok(out)
}

/// `method, x_r, x_u, x_g, overall`, values rounded to three decimals.
pub fn write_scores_csv(path: impl AsRef<Path>, rows: &[(String, TaskScores)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "x_r", "x_u", "x_g", "overall"])?;
    for (m, s) in rows {
        w.write_record([
            m.clone(),
            format!("{:.3}", s.x_r),
            format!("{:.3}", s.x_u),
            format!("{:.3}", s.x_g),
            format!("{:.3}", s.overall),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vanilla() -> MetricRecord {
        MetricRecord {
            method: "vanilla".into(),
            pesq: 4.12,
            stoi: 0.985,
            er_acc: 36.87,
            pr_per: 89.40,
            asr_wer: 53.48,
            ks_acc: 29.80,
            sid_acc: 7.74,
            asv_eer: 14.64,
            sd_der: 17.11,
            ic_acc: 5.98,
            tts_wer: 2.72,
            tts_sim: 0.58,
        }
    }

    #[test]
    fn component_scores() {
        assert_eq!(round3(score_reconstruction(4.12, 0.985).unwrap()), 0.905);
        assert_eq!(round3(score_reconstruction(3.84, 0.973).unwrap()), 0.871);
        assert_eq!(score_reconstruction(5.0, 1.0).unwrap(), 1.0);
        assert_eq!(round3(score_generation(2.72, 0.58).unwrap()), 0.776);
        assert_eq!(round3(score_generation(2.04, 0.57).unwrap()), 0.775);
        assert_eq!(score_generation(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(round3(score_understanding(&vanilla()).unwrap()), 0.382);
    }

    #[test]
    fn overall_means() {
        assert_eq!(round3(overall_score(0.905, 0.382, 0.776, MeanKind::Geometric).unwrap()), 0.645);
        assert_eq!(round3(overall_score(0.871, 0.681, 0.775, MeanKind::Geometric).unwrap()), 0.772);
        for k in [MeanKind::Geometric, MeanKind::Arithmetic, MeanKind::Harmonic] {
            assert!((overall_score(0.3, 0.3, 0.3, k).unwrap() - 0.3).abs() < 1e-15);
        }
        assert!(overall_score(0.5, 0.0, 0.5, MeanKind::Harmonic).is_err());
        assert_eq!(overall_score(0.5, 0.0, 0.5, MeanKind::Geometric).unwrap(), 0.0);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(score_reconstruction(0.5, 0.9).is_err());
        assert!(score_generation(120.0, 0.5).is_err());
        let mut r = vanilla();
        r.er_acc = 101.0;
        assert!(score_understanding(&r).is_err());
        assert!(score_record(&r, MeanKind::Geometric).is_err());
    }

    #[test]
    fn empty_jsonl_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, "\n").unwrap();
        assert!(matches!(read_metric_records(&p), Err(Error::Validation(_))));
        fs::write(&p, serde_json::to_string(&vanilla()).unwrap()).unwrap();
        assert_eq!(read_metric_records(&p).unwrap(), vec![vanilla()]);
    }
}
