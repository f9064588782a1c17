use std::path::{Path, PathBuf};

use super::distances::{distance_report, recon_proxy};
use super::scores::{score_record, MeanKind, MetricRecord, TaskScores};
use super::stats::pearson;
use crate::error::{Error, Result};
use crate::featureio::DatasetManifest;
use crate::losses::Margins;
use crate::scheme::SchemeRegistry;
use crate::trainer::{derive_seed, Corpus, Divergence, TrainConfig, Trainer};
use crate::vae::ReconLoss;

const SEED_GRID: u64 = 17;

/// How each grid cell picks its training seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedPolicy {
    /// Derived from `(base seed, m1, m2)`.
    #[default]
    PerCell,
    /// Every cell uses the base seed.
    Shared,
}

pub fn cell_seed(base: u64, m1: f64, m2: f64, policy: SeedPolicy) -> u64 {
    match policy {
        SeedPolicy::Shared => base,
        SeedPolicy::PerCell => derive_seed(base, m1.to_bits() ^ m2.to_bits().rotate_left(29), SEED_GRID),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub m1: f64,
    pub m2: f64,
    pub seed: u64,
    pub diverged: Option<Divergence>,
    pub d_mcos: Option<f64>,
    pub d_mdss: Option<f64>,
    pub recon_proxy: Option<f64>,
    pub final_loss_rec: Option<f64>,
    pub metrics: Option<MetricRecord>,
    pub scores: Option<TaskScores>,
}

impl GridRow {
    /// Key used to match externally supplied metric records.
    pub fn method(&self) -> String {
        format!("m1={}_m2={}", self.m1, self.m2)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
}

/// Trains one jmas run per `(m1, m2)` and measures distances and the reconstruction proxy.
/// A diverged cell is recorded and the search continues.
pub fn grid_search(
    m1_list: &[f64],
    m2_list: &[f64],
    base: &TrainConfig,
    manifest: &DatasetManifest,
    policy: SeedPolicy,
) -> Result<GridResult> {
    if m1_list.is_empty() || m2_list.is_empty() {
        return Err(Error::Config("margin lists must be non-empty".into()));
    }
    if base.scheme != "jmas" {
        return Err(Error::Config(format!("grid search needs scheme jmas, got {}", base.scheme)));
    }
    let registry = SchemeRegistry::builtin();
    let scheme = registry.get("jmas")?;
    let mut check = base.clone();
    check.margins = Some(Margins::new(m1_list[0], m2_list[0])?);
    check.validate(&registry)?;
    let corpus = Corpus::load(manifest, &check, true)?;
    let recon = ReconLoss::new(base.use_stft);

    let mut rows = Vec::new();
    for &m1 in m1_list {
        for &m2 in m2_list {
            let mut cfg = base.clone();
            cfg.margins = Some(Margins::new(m1, m2)?);
            cfg.seed = cell_seed(base.seed, m1, m2, policy);
            ::log::info!("grid cell m1={m1} m2={m2} seed={}", cfg.seed);
            let eval_len = cfg.crop_samples;
            let seed = cfg.seed;
            let trainer = Trainer::from_corpus(cfg, scheme.clone(), corpus.clone());
            let out = trainer.run(None, None)?;
            let mut row = GridRow {
                m1,
                m2,
                seed,
                diverged: out.log.diverged.clone(),
                d_mcos: None,
                d_mdss: None,
                recon_proxy: None,
                final_loss_rec: None,
                metrics: None,
                scores: None,
            };
            if row.diverged.is_none() {
                let model = &out.checkpoint.model;
                let d = distance_report(model, &corpus, eval_len)?;
                row.d_mcos = Some(d.d_mcos);
                row.d_mdss = Some(d.d_mdss);
                row.recon_proxy = Some(recon_proxy(model, &corpus, eval_len, &recon)?);
                row.final_loss_rec = out.log.last().map(|r| r.loss_rec);
            }
            rows.push(row);
        }
    }
    Ok(GridResult { rows })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const GRID_COLUMNS: [&str; 13] = [
    "m1",
    "m2",
    "seed",
    "diverged",
    "d_mcos",
    "d_mdss",
    "recon_proxy",
    "x_r",
    "x_u",
    "one_minus_wer",
    "sim",
    "x_g",
    "overall",
];

impl GridResult {
    /// Attaches records whose `method` equals [`GridRow::method`]; diverged rows are skipped.
    pub fn attach_metrics(&mut self, records: &[MetricRecord], kind: MeanKind) -> Result<usize> {
        let mut n = 0;
        for row in self.rows.iter_mut().filter(|r| r.diverged.is_none()) {
            if let Some(rec) = records.iter().find(|r| r.method == row.method()) {
                row.scores = Some(score_record(rec, kind)?);
                row.metrics = Some(rec.clone());
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(GRID_COLUMNS)?;
        for r in &self.rows {
            let s = r.scores;
            let m = r.metrics.as_ref();
            w.write_record([
                r.m1.to_string(),
                r.m2.to_string(),
                r.seed.to_string(),
                u8::from(r.diverged.is_some()).to_string(),
                opt(r.d_mcos),
                opt(r.d_mdss),
                opt(r.recon_proxy),
                opt(s.map(|s| s.x_r)),
                opt(s.map(|s| s.x_u)),
                opt(m.map(|m| 1.0 - m.tts_wer / 100.0)),
                opt(m.map(|m| m.tts_sim)),
                opt(s.map(|s| s.x_g)),
                opt(s.map(|s| s.overall)),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One `heatmap_<quantity>.csv` per measured quantity with columns `m1, m2, value, diverged`.
    pub fn write_heatmaps(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        type Getter = fn(&GridRow) -> Option<f64>;
        let mut quantities: Vec<(&str, Getter)> = vec![
            ("d_mcos", |r| r.d_mcos),
            ("d_mdss", |r| r.d_mdss),
            ("recon_proxy", |r| r.recon_proxy),
        ];
        if self.rows.iter().any(|r| r.scores.is_some()) {
            quantities.push(("x_r", |r| r.scores.map(|s| s.x_r)));
            quantities.push(("x_u", |r| r.scores.map(|s| s.x_u)));
            quantities.push(("x_g", |r| r.scores.map(|s| s.x_g)));
            quantities.push(("overall", |r| r.scores.map(|s| s.overall)));
        }
        let mut paths = Vec::new();
        for (name, get) in quantities {
            let p = dir.join(format!("heatmap_{name}.csv"));
            let mut w = csv::Writer::from_path(&p)?;
            w.write_record(["m1", "m2", "value", "diverged"])?;
            for r in &self.rows {
                w.write_record([
                    r.m1.to_string(),
                    r.m2.to_string(),
                    opt(get(r)),
                    u8::from(r.diverged.is_some()).to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&p, e))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Numeric table keyed by column name; empty cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|c| {
                    let c = c.trim();
                    if c.is_empty() {
                        Ok(None)
                    } else {
                        c.parse::<f64>()
                            .map(Some)
                            .map_err(|e| Error::Validation(format!("cell {c:?}: {e}")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r.get(i).copied().flatten()).collect())
    }
}

pub const PCC_TARGETS: [&str; 6] = ["recon", "under", "1-wer", "sim", "gene", "overall"];

#[derive(Debug, Clone, PartialEq)]
pub struct PccRow {
    pub distance: String,
    /// One entry per [`PCC_TARGETS`]; `None` when fewer than two rows carry both values.
    pub values: Vec<Option<f64>>,
}

/// Correlation of each distance column with each score column over non-diverged rows.
/// The `recon` target uses `x_r` when present and the reconstruction proxy otherwise.
pub fn pcc_report(table: &Table) -> Result<Vec<PccRow>> {
    let n = table.rows.len();
    let keep: Vec<bool> = match table.column("diverged") {
        Some(c) => c.iter().map(|v| v.unwrap_or(0.0) == 0.0).collect(),
        None => vec![true; n],
    };
    let col = |name: &str| table.column(name).unwrap_or_else(|| vec![None; n]);
    let recon = if col("x_r").iter().any(Option::is_some) { col("x_r") } else { col("recon_proxy") };
    let targets = [recon, col("x_u"), col("one_minus_wer"), col("sim"), col("x_g"), col("overall")];
    let mut out = Vec::new();
    for dist in ["d_mcos", "d_mdss"] {
        let Some(d) = table.column(dist) else { continue };
        let mut values = Vec::new();
        for t in &targets {
            let (xs, ys): (Vec<f64>, Vec<f64>) = (0..n)
                .filter(|&i| keep[i])
                .filter_map(|i| Some((d[i]?, t[i]?)))
                .unzip();
            values.push(if xs.len() < 2 { None } else { Some(pearson(&xs, &ys)?) });
        }
        out.push(PccRow {
            distance: dist.into(),
            values,
        });
    }
    if out.is_empty() {
        return Err(Error::Validation("table has no d_mcos or d_mdss column".into()));
    }
    Ok(out)
}

pub fn write_pcc_csv(path: impl AsRef<Path>, rows: &[PccRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["distance"];
    header.extend(PCC_TARGETS);
    w.write_record(header)?;
    for r in rows {
        let mut rec = vec![r.distance.clone()];
        rec.extend(r.values.iter().map(|v| opt(*v)));
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
