mod common;

use common::random_batch_shaped;
use latent_align::losses::{loss_d, loss_mcos, loss_mdss, loss_t, FeatureBatch, LossValue};
use latent_align::oracle::{central_diff, rel_err};
use latent_align::vae::{kl_loss, LatentPosterior, ReconLoss};
use latent_align::Result;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const FLOOR: f64 = 1e-6;

fn assert_close(label: &str, analytic: &[f64], numeric: &[f64]) {
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(*a, *n, FLOOR);
        assert!(e <= TOL, "{label}[{i}]: analytic {a:e}, numeric {n:e}, rel {e:e}");
    }
}

fn check_loss(label: &str, seed: u64, f: impl Fn(&FeatureBatch, &FeatureBatch) -> Result<LossValue>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..5 {
        let (b, t, d) = (rng.gen_range(1..=3), rng.gen_range(2..=6), rng.gen_range(2..=6));
        let (zp, tf, mask) = random_batch_shaped(&mut rng, b, t, d);
        let target = FeatureBatch::new(tf, mask.clone()).unwrap();
        let x = FeatureBatch::new(zp.clone(), mask.clone()).unwrap();
        let analytic = f(&x, &target).unwrap().grad;
        let eval = |v: &[f64]| {
            let vals = Array3::from_shape_vec((b, t, d), v.to_vec()).unwrap();
            f(&FeatureBatch::new(vals, mask.clone()).unwrap(), &target).unwrap().value
        };
        let numeric = central_diff(eval, zp.as_slice().unwrap(), H);
        assert_close(label, analytic.as_slice().unwrap(), &numeric);
    }
}

#[test]
fn loss_t_gradient() {
    check_loss("loss_t", 1, loss_t);
}

#[test]
fn loss_d_gradient() {
    check_loss("loss_d", 2, loss_d);
}

#[test]
fn loss_mcos_gradient() {
    check_loss("loss_mcos", 3, |a, b| loss_mcos(a, b, 0.3));
    check_loss("loss_mcos_m0", 4, |a, b| loss_mcos(a, b, 0.0));
}

#[test]
fn loss_mdss_gradient() {
    check_loss("loss_mdss", 5, |a, b| loss_mdss(a, b, 0.1, 4096));
    check_loss("loss_mdss_m0", 6, |a, b| loss_mdss(a, b, 0.0, 4096));
}

#[test]
fn kl_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mu, lv, mask) = random_batch_shaped(&mut rng, 2, 5, 4);
    let kl = kl_loss(&LatentPosterior::new(mu.clone(), lv.clone(), mask.clone()).unwrap());
    let dim = mu.dim();
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
    assert_close("kl/mu", kl.dmu.as_slice().unwrap(), &num_mu);
    assert_close("kl/logvar", kl.dlogvar.as_slice().unwrap(), &num_lv);
}

#[test]
fn recon_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let len = 2100;
    let x = Array2::from_shape_simple_fn((2, len), || rng.gen_range(-0.5..0.5));
    let y = Array2::from_shape_simple_fn((2, len), || rng.gen_range(-0.5..0.5));
    let mut mask = Array2::from_elem((2, len), true);
    for i in 1600..len {
        mask[[1, i]] = false;
    }
    for loss in [ReconLoss::new(false), ReconLoss::new(true)] {
        let analytic = loss.compute(&x, &y, &mask).unwrap().grad;
        let numeric = central_diff(
            |v| {
                let yh = Array2::from_shape_vec((2, len), v.to_vec()).unwrap();
                loss.compute(&x, &yh, &mask).unwrap().value
            },
            y.as_slice().unwrap(),
            H,
        );
        assert_close("recon", analytic.as_slice().unwrap(), &numeric);
    }
}
