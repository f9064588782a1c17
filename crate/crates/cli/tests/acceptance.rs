//! End-to-end acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any fail. `ACCEPTANCE_ONLY=1,7` restricts the run to listed ids.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use latent_align::evaluation::{distance_report, read_metric_records, score_record, MeanKind};
use latent_align::featureio::{generate_synthetic_corpus, DatasetManifest, SyntheticSpec};
use latent_align::losses::{loss_d, loss_mcos, loss_mdss, loss_t, FeatureBatch, LossValue, Margins};
use latent_align::nn::{Activation, Param};
use latent_align::oracle::{self, central_diff, rel_err};
use latent_align::trainer::{Checkpoint, Corpus, TrainConfig, TrainLog, Trainer};
use latent_align::vae::{
    kl_loss, EncoderConfig, LatentPosterior, Projection, ProjectionConfig, ReconLoss, TeacherConfig, VaeModel,
};
use latent_align::weighting::{adaptive_weight, grad_norm, loss_grad_norm, ParamLoss, ProjectionLoss, WeightConfig};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() {
    let checks: [(u32, &str, Check); 9] = [
        (1, "reference score closure", score_closure),
        (2, "loss oracle equivalence", loss_oracles),
        (3, "gradient validation", gradients),
        (4, "adaptive-weight contract", adaptive_contract),
        (5, "toy convergence", toy_convergence),
        (6, "margin monotonicity", margin_monotonicity),
        (7, "shape contract", shape_contract),
        (8, "determinism", determinism),
        (9, "equivalence to vanilla", vanilla_equivalence),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] #{id} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] #{id} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn score_closure() -> Result<String, String> {
    let records = read_metric_records(Path::new(FIXTURES).join("reference_metrics.jsonl")).map_err(|e| e.to_string())?;
    let expected = read_scores(&Path::new(FIXTURES).join("reference_scores.csv"))?;
    ensure(records.len() == 10 && expected.len() == 10, || "fixture must have 10 rows".into())?;
    let mut worst = 0.0f64;
    for (r, (method, want)) in records.iter().zip(&expected) {
        ensure(&r.method == method, || format!("row order: {} vs {method}", r.method))?;
        let s = score_record(r, MeanKind::Geometric).map_err(|e| e.to_string())?;
        for (got, &want) in [s.x_r, s.x_u, s.x_g, s.overall].into_iter().zip(want) {
            let err = (got - want).abs();
            worst = worst.max(err);
            ensure(err <= 0.001 + 1e-12, || format!("{}: {got:.5} vs {want}", r.method))?;
        }
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let metrics = Path::new(FIXTURES).join("reference_metrics.jsonl");
    let res = latent_align_cli::run([
        "latent-align".as_ref(),
        "--out".as_ref(),
        dir.path().as_os_str(),
        "score".as_ref(),
        "--metrics".as_ref(),
        metrics.as_os_str(),
    ]);
    ensure(res.exit_code == 0, || format!("score command exit {}", res.exit_code))?;
    let written = read_scores(&dir.path().join("scores.csv"))?;
    for ((m, got), (_, want)) in written.iter().zip(&expected) {
        for (g, w) in got.iter().zip(want) {
            ensure((g - w).abs() <= 0.001 + 1e-12, || format!("scores.csv {m}: {g} vs {w}"))?;
        }
    }
    Ok(format!("40 values, max |err| {worst:.5}"))
}

/// `method,x_r,x_u,x_g,overall` rows.
fn read_scores(path: &Path) -> Result<Vec<(String, [f64; 4])>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            ensure(cells.len() == 5, || format!("bad row {l:?}"))?;
            let mut v = [0.0; 4];
            for (slot, c) in v.iter_mut().zip(&cells[1..]) {
                *slot = c.trim().parse().map_err(|_| format!("bad number in {l:?}"))?;
            }
            Ok((cells[0].to_string(), v))
        })
        .collect()
}

fn random_batch(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> (Array3<f64>, Array3<f64>, Array2<bool>) {
    let zp = Array3::from_shape_simple_fn((b, t, d), || rng.gen_range(-2.0..2.0));
    let f = Array3::from_shape_simple_fn((b, t, d), || rng.gen_range(-2.0..2.0));
    let mut mask = Array2::from_shape_simple_fn((b, t), || rng.gen_bool(0.8));
    for bi in 0..b {
        let keep = rng.gen_range(0..t);
        mask[[bi, keep]] = true;
    }
    (zp, f, mask)
}

fn loss_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let (b, t, d) = (rng.gen_range(1..=4), rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (zp, f, mask) = random_batch(&mut rng, b, t, d);
        let (m1, m2) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let a = FeatureBatch::new(zp.clone(), mask.clone()).map_err(|e| e.to_string())?;
        let tb = FeatureBatch::new(f.clone(), mask.clone()).map_err(|e| e.to_string())?;
        let post = LatentPosterior::new(zp.clone(), f.clone(), mask.clone()).map_err(|e| e.to_string())?;
        let pairs = [
            ("loss_t", loss_t(&a, &tb).unwrap().value, oracle::loss_t(&zp, &f, &mask)),
            ("loss_d", loss_d(&a, &tb).unwrap().value, oracle::loss_d(&zp, &f, &mask)),
            ("loss_mcos", loss_mcos(&a, &tb, m1).unwrap().value, oracle::loss_mcos(&zp, &f, &mask, m1)),
            ("loss_mdss", loss_mdss(&a, &tb, m2, 4096).unwrap().value, oracle::loss_mdss(&zp, &f, &mask, m2)),
            ("kl", kl_loss(&post).value, oracle::kl(&zp, &f, &mask)),
        ];
        for (name, fast, slow) in pairs {
            let err = (fast - slow).abs();
            worst = worst.max(err);
            ensure(err <= 1e-12, || format!("batch {i} {name}: {fast} vs {slow}"))?;
        }
    }
    Ok(format!("500 comparisons, max |err| {worst:.1e}"))
}

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-6;

fn compare_grads(label: &str, analytic: &[f64], numeric: &[f64], worst: &mut f64) -> Result<(), String> {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n, GRAD_FLOOR);
        *worst = worst.max(e);
        ensure(e <= GRAD_TOL, || format!("{label}[{i}]: analytic {a:e} numeric {n:e}"))?;
    }
    Ok(())
}

fn feature_loss_grad(
    label: &str,
    seed: u64,
    worst: &mut f64,
    f: impl Fn(&FeatureBatch, &FeatureBatch) -> latent_align::Result<LossValue>,
) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let (b, t, d) = (rng.gen_range(1..=3), rng.gen_range(2..=6), rng.gen_range(2..=6));
        let (zp, tf, mask) = random_batch(&mut rng, b, t, d);
        let target = FeatureBatch::new(tf, mask.clone()).unwrap();
        let analytic = f(&FeatureBatch::new(zp.clone(), mask.clone()).unwrap(), &target).unwrap().grad;
        let numeric = central_diff(
            |v| {
                let vals = Array3::from_shape_vec((b, t, d), v.to_vec()).unwrap();
                f(&FeatureBatch::new(vals, mask.clone()).unwrap(), &target).unwrap().value
            },
            zp.as_slice().unwrap(),
            H,
        );
        compare_grads(label, analytic.as_slice().unwrap(), &numeric, worst)?;
    }
    Ok(())
}

fn gradients() -> Result<String, String> {
    let mut worst = 0.0;
    feature_loss_grad("loss_t", 1, &mut worst, loss_t)?;
    feature_loss_grad("loss_d", 2, &mut worst, loss_d)?;
    feature_loss_grad("loss_mcos", 3, &mut worst, |a, b| loss_mcos(a, b, 0.3))?;
    feature_loss_grad("loss_mdss", 5, &mut worst, |a, b| loss_mdss(a, b, 0.1, 4096))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mu, lv, mask) = random_batch(&mut rng, 2, 5, 4);
    let dim = mu.dim();
    let kl = kl_loss(&LatentPosterior::new(mu.clone(), lv.clone(), mask.clone()).unwrap());
    let num_mu = central_diff(
        |v| {
            let m = Array3::from_shape_vec(dim, v.to_vec()).unwrap();
            kl_loss(&LatentPosterior::new(m, lv.clone(), mask.clone()).unwrap()).value
        },
        mu.as_slice().unwrap(),
        H,
    );
    let num_lv = central_diff(
        |v| {
            let l = Array3::from_shape_vec(dim, v.to_vec()).unwrap();
            kl_loss(&LatentPosterior::new(mu.clone(), l, mask.clone()).unwrap()).value
        },
        lv.as_slice().unwrap(),
        H,
    );
    compare_grads("kl/mu", kl.dmu.as_slice().unwrap(), &num_mu, &mut worst)?;
    compare_grads("kl/logvar", kl.dlogvar.as_slice().unwrap(), &num_lv, &mut worst)?;

    let len = 2100;
    let x = Array2::from_shape_simple_fn((2, len), || rng.gen_range(-0.5..0.5));
    let y = Array2::from_shape_simple_fn((2, len), || rng.gen_range(-0.5..0.5));
    let mut smask = Array2::from_elem((2, len), true);
    for i in 1600..len {
        smask[[1, i]] = false;
    }
    let recon = ReconLoss::new(true);
    let analytic = recon.compute(&x, &y, &smask).unwrap().grad;
    let numeric = central_diff(
        |v| {
            let yh = Array2::from_shape_vec((2, len), v.to_vec()).unwrap();
            recon.compute(&x, &yh, &smask).unwrap().value
        },
        y.as_slice().unwrap(),
        H,
    );
    compare_grads("recon", analytic.as_slice().unwrap(), &numeric, &mut worst)?;
    Ok(format!("six losses, max rel err {worst:.1e}"))
}

fn adaptive_contract() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (z, f, mask) = random_batch(&mut rng, 2, 5, 6);
    let (_, g, _) = random_batch(&mut rng, 2, 5, 4);
    let cfg_p = ProjectionConfig { out_dim: 4, hidden_layers: 1, hidden_dim: 5 };
    let proj = Projection::new(6, &cfg_p, Activation::Tanh, &mut rng);
    let latent = FeatureBatch::new(z, mask.clone()).unwrap();
    let target = FeatureBatch::new(f.slice(ndarray::s![.., .., ..4]).to_owned(), mask.clone()).unwrap();
    let other = FeatureBatch::new(g, mask).unwrap();
    let params: Vec<Param> = proj.params().into_iter().cloned().collect();
    let cfg = WeightConfig::adaptive();
    let same = proj_loss(&proj, &latent, &target, false, 1.0);
    let w = adaptive_weight(&same, &same, &params, &cfg);
    ensure(w == 1.0, || format!("(a) omega {w} for identical losses"))?;

    let rec = proj_loss(&proj, &latent, &other, false, 1.0);
    let weighted = |c: f64| -> Vec<f64> {
        let d = proj_loss(&proj, &latent, &target, false, c);
        let w = adaptive_weight(&rec, &d, &params, &cfg);
        d.grad(&params).iter().flat_map(|g| g.data.iter().map(move |x| w * x)).collect()
    };
    let base = weighted(1.0);
    let norm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst_b = 0.0f64;
    for c in [0.1, 10.0, 1000.0] {
        let gc = weighted(c);
        let diff = gc.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
        worst_b = worst_b.max(diff);
        ensure(diff <= 1e-8, || format!("(b) scale {c}: relative change {diff:e}"))?;
    }

    let mut worst_c = 0.0f64;
    for l in [proj_loss(&proj, &latent, &target, false, 1.0), proj_loss(&proj, &latent, &target, true, 3.0)] {
        let analytic = l.grad(&params);
        let mut sq = 0.0;
        for (i, gi) in analytic.iter().enumerate() {
            let numeric = central_diff(
                |v| {
                    let mut q = params.clone();
                    q[i].data = v.to_vec();
                    l.value(&q)
                },
                &params[i].data,
                H,
            );
            for (a, n) in gi.data.iter().zip(&numeric) {
                let e = rel_err(*a, *n, GRAD_FLOOR);
                worst_c = worst_c.max(e);
                ensure(e <= 1e-4, || format!("(c) param {i}: {a} vs {n}"))?;
            }
            sq += numeric.iter().map(|x| x * x).sum::<f64>();
        }
        let n = loss_grad_norm(&l, &params);
        let e = rel_err(n, sq.sqrt(), 1e-12);
        worst_c = worst_c.max(e);
        ensure(e <= 1e-4, || format!("(c) grad_norm {n} vs finite difference {}", sq.sqrt()))?;
        ensure(n == grad_norm(&analytic.iter().collect::<Vec<_>>()), || "(c) grad_norm inconsistent".into())?;
    }
    Ok(format!("(a) omega = 1; (b) max rel {worst_b:.1e}; (c) max rel {worst_c:.1e}"))
}

fn proj_loss<'a>(
    proj: &'a Projection,
    latent: &'a FeatureBatch,
    target: &'a FeatureBatch,
    mcos: bool,
    scale: f64,
) -> ProjectionLoss<'a> {
    ProjectionLoss {
        template: proj,
        latent,
        target,
        loss: if mcos {
            Box::new(|a, b| loss_mcos(a, b, 0.1))
        } else {
            Box::new(loss_t)
        },
        scale,
    }
}

fn toy_config(scheme: &str, margins: Option<(f64, f64)>, seed: u64) -> TrainConfig {
    TrainConfig {
        scheme: scheme.into(),
        adaptive: true,
        margins: margins.map(|(a, b)| Margins::new(a, b).unwrap()),
        steps: 2000,
        lr: 1e-3,
        seed,
        projection: ProjectionConfig { out_dim: 64, ..Default::default() },
        teacher: TeacherConfig { teacher_dim: 64, ..Default::default() },
        ..Default::default()
    }
}

fn toy_corpus(dir: &Path) -> DatasetManifest {
    generate_synthetic_corpus(&SyntheticSpec::default(), dir).expect("synthetic corpus")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    v[v.len() / 2]
}

fn toy_convergence() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = toy_corpus(dir.path());
    let cfg = toy_config("tas", None, 0);
    let trainer = Trainer::new(cfg.clone(), &manifest).map_err(|e| e.to_string())?;
    let init = Checkpoint::init(&cfg).map_err(|e| e.to_string())?;
    let d0 = distance_report(&init.model, trainer.corpus(), cfg.crop_samples).map_err(|e| e.to_string())?;
    let out = trainer.run(None, None).map_err(|e| e.to_string())?;
    ensure(out.diverged().is_none(), || format!("diverged: {:?}", out.diverged()))?;
    let d1 = distance_report(&out.checkpoint.model, trainer.corpus(), cfg.crop_samples).map_err(|e| e.to_string())?;
    let rec0 = out.log.rows.first().unwrap().loss_rec;
    let rec1 = out.log.last().unwrap().loss_rec;
    let tail = &out.trace.rows[cfg.steps - cfg.steps / 10..];
    let omega = median(tail.iter().map(|r| r.omegas[0]).collect());
    let detail = format!(
        "d_mcos {:.4} -> {:.4}, loss_rec {rec0:.4} -> {rec1:.4}, tail median omega {omega:.1}",
        d0.d_mcos, d1.d_mcos
    );
    ensure(d1.d_mcos <= 0.5 * d0.d_mcos, || format!("distance did not halve: {detail}"))?;
    ensure(rec1 < rec0, || format!("reconstruction did not improve: {detail}"))?;
    ensure(omega > 10.0, || format!("adaptive weight too small: {detail}"))?;
    Ok(detail)
}

fn margin_monotonicity() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = toy_corpus(dir.path());
    let grid = [(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)];
    let mut attempts = Vec::new();
    for seed in [0u64, 1] {
        let first = toy_config("jmas", Some(grid[0]), seed);
        let corpus = Corpus::load(&manifest, &first, true).map_err(|e| e.to_string())?;
        let scheme = latent_align::scheme::SchemeRegistry::builtin().get("jmas").map_err(|e| e.to_string())?;
        let mut ds = Vec::new();
        for &m in &grid {
            let cfg = toy_config("jmas", Some(m), seed);
            let out = Trainer::from_corpus(cfg.clone(), scheme.clone(), corpus.clone())
                .run(None, None)
                .map_err(|e| e.to_string())?;
            if let Some(d) = out.diverged() {
                return Err(format!("seed {seed} margins {m:?} diverged at step {}", d.step));
            }
            let r = distance_report(&out.checkpoint.model, &corpus, cfg.crop_samples).map_err(|e| e.to_string())?;
            ds.push(r.d_mcos);
        }
        let summary = format!("seed {seed}: d_mcos {:.4} < {:.4} < {:.4}", ds[0], ds[1], ds[2]);
        if ds[0] < ds[1] && ds[1] < ds[2] {
            attempts.push(summary);
            return Ok(attempts.join("; "));
        }
        attempts.push(format!("{summary} violated"));
    }
    Err(attempts.join("; "))
}

fn shape_contract() -> Result<String, String> {
    let model = VaeModel::new(&EncoderConfig::default(), &ProjectionConfig::default(), 5).map_err(|e| e.to_string())?;
    for k in 1..=10 {
        let n = 400 * k;
        let x = Array2::from_shape_fn((1, n), |(_, i)| (i as f64 * 0.02).sin() * 0.5);
        let post = model.encode(&x).map_err(|e| e.to_string())?;
        ensure(post.frames() == k && post.latent_dim() == 64, || {
            format!("k={k}: {} frames of dim {}", post.frames(), post.latent_dim())
        })?;
        let y = model.decode(&post.mu).map_err(|e| e.to_string())?;
        ensure(y.dim() == (1, n), || format!("k={k}: decoded shape {:?}", y.dim()))?;
    }
    Ok("k = 1..10 encode to k x 64 and decode to 400k samples".into())
}

fn cli(args: &[&std::ffi::OsStr]) -> latent_align_cli::CommandResult {
    let mut all: Vec<&std::ffi::OsStr> = vec!["latent-align".as_ref()];
    all.extend_from_slice(args);
    latent_align_cli::run(all)
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let corpus = root.join("corpus");
    let r = cli(&["--out".as_ref(), corpus.as_os_str(), "--seed".as_ref(), "5".as_ref(), "synth-data".as_ref(), "--clips".as_ref(), "8".as_ref()]);
    ensure(r.exit_code == 0, || format!("synth-data exit {}", r.exit_code))?;
    let cfg = TrainConfig {
        steps: 100,
        ..toy_config("tas", None, 9)
    };
    let cfg_path = root.join("config.json");
    fs::write(&cfg_path, cfg.to_json()).map_err(|e| e.to_string())?;
    let manifest = corpus.join("manifest.jsonl");
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let r = cli(&[
            "--out".as_ref(),
            out.as_os_str(),
            "--strict-determinism".as_ref(),
            "train".as_ref(),
            "--config".as_ref(),
            cfg_path.as_os_str(),
            "--manifest".as_ref(),
            manifest.as_os_str(),
        ]);
        ensure(r.exit_code == 0, || format!("train run {run} exit {} {:?}", r.exit_code, r.reason))?;
        logs.push(out.join("train_log.csv"));
    }
    let a = TrainLog::read_csv(&logs[0]).map_err(|e| e.to_string())?;
    let b = TrainLog::read_csv(&logs[1]).map_err(|e| e.to_string())?;
    ensure(a.rows.len() == 100 && b.rows.len() == 100, || "expected 100 log rows".into())?;
    let mut worst = 0.0f64;
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        let fa = [ra.total_loss, ra.loss_rec, ra.loss_kl, ra.lr].into_iter().chain(ra.distill.iter().copied()).chain(ra.weights.iter().copied());
        let fb = [rb.total_loss, rb.loss_rec, rb.loss_kl, rb.lr].into_iter().chain(rb.distill.iter().copied()).chain(rb.weights.iter().copied());
        for (x, y) in fa.zip(fb) {
            worst = worst.max((x - y).abs());
        }
    }
    ensure(worst <= 1e-7, || format!("max field difference {worst:e}"))?;
    let identical = fs::read(&logs[0]).map_err(|e| e.to_string())? == fs::read(&logs[1]).map_err(|e| e.to_string())?;
    Ok(format!("100 rows, max field difference {worst:e}, byte-identical {identical}"))
}

fn vanilla_equivalence() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec { num_clips: 6, seed: 4, ..Default::default() };
    let manifest = generate_synthetic_corpus(&spec, dir.path()).map_err(|e| e.to_string())?;
    let base = TrainConfig {
        steps: 20,
        batch_size: 2,
        crop_samples: 4000,
        lr: 1e-3,
        seed: 12,
        encoder: EncoderConfig { base_channels: 4, ..Default::default() },
        projection: ProjectionConfig { out_dim: 32, ..Default::default() },
        teacher: TeacherConfig { teacher_dim: 32, ..Default::default() },
        ..Default::default()
    };
    let vanilla = Trainer::new(base.clone(), &manifest)
        .and_then(|t| t.run(None, None))
        .map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for scheme in ["tas", "das", "jmas"] {
        let mut cfg = TrainConfig {
            scheme: scheme.into(),
            margins: (scheme == "jmas").then(|| Margins::new(0.1, 0.1).unwrap()),
            ..base.clone()
        };
        cfg.weight_config.omega_ssl = 0.0;
        let out = Trainer::new(cfg, &manifest).and_then(|t| t.run(None, None)).map_err(|e| e.to_string())?;
        ensure(out.log.rows.len() == vanilla.log.rows.len(), || format!("{scheme}: row count differs"))?;
        for (a, b) in out.log.rows.iter().zip(&vanilla.log.rows) {
            let d = (a.total_loss - b.total_loss).abs();
            worst = worst.max(d);
            ensure(d <= 1e-9, || format!("{scheme} step {}: {} vs {}", a.step, a.total_loss, b.total_loss))?;
        }
    }
    Ok(format!("tas/das/jmas over 20 steps, max |total diff| {worst:e}"))
}
