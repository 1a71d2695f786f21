use bimce::classical::BeliefVector;
use bimce::nets::{bim_forward, BimParams};
use bimce::selftest::{gradient_suite, GRAD_TOLERANCE};
use bimce::tensor::{finite_diff_check, Tape, Tensor};
use proptest::prelude::*;

/// Direct same-padded cross-correlation, one output element at a time.
fn conv_oracle(x: &[f64], xs: [usize; 4], k: &[f64], ks: [usize; 4], b: &[f64]) -> Vec<f64> {
    let [n, ci, h, w] = xs;
    let [co, _, kk, _] = ks;
    let pad = (kk / 2) as isize;
    let mut out = vec![0.0; n * co * h * w];
    for bn in 0..n {
        for o in 0..co {
            for i in 0..h {
                for j in 0..w {
                    let mut s = b[o];
                    for c in 0..ci {
                        for di in 0..kk {
                            for dj in 0..kk {
                                let (yi, yj) = (i as isize + di as isize - pad, j as isize + dj as isize - pad);
                                if yi < 0 || yj < 0 || yi >= h as isize || yj >= w as isize {
                                    continue;
                                }
                                let xv = x[((bn * ci + c) * h + yi as usize) * w + yj as usize];
                                s += xv * k[((o * ci + c) * kk + di) * kk + dj];
                            }
                        }
                    }
                    out[((bn * co + o) * h + i) * w + j] = s;
                }
            }
        }
    }
    out
}

fn lcg(seed: u64, n: usize) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

#[test]
fn conv_matches_direct_loops() {
    for (seed, xs, ks) in [
        (1, [2, 3, 5, 4], [4, 3, 3, 3]),
        (2, [1, 1, 6, 2], [2, 1, 5, 5]),
        (3, [3, 2, 3, 7], [1, 2, 1, 1]),
    ] {
        let x = lcg(seed, xs.iter().product());
        let k = lcg(seed + 10, ks.iter().product());
        let b = lcg(seed + 20, ks[0]);
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(xs.to_vec(), x.clone()).unwrap());
        let kv = tape.constant(Tensor::new(ks.to_vec(), k.clone()).unwrap());
        let bv = tape.constant(Tensor::new(vec![ks[0]], b.clone()).unwrap());
        let y = tape.conv2d(xv, kv, bv).unwrap();
        let expected = conv_oracle(&x, xs, &k, ks, &b);
        for (a, e) in tape.value(y).data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }
}

#[test]
fn even_kernel_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[1, 1, 4, 4]));
    let k = tape.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let b = tape.constant(Tensor::zeros(&[1]));
    assert!(tape.conv2d(x, k, b).is_err());
}

#[test]
fn every_gradient_check_passes() {
    let checks = gradient_suite(7).unwrap();
    assert!(checks.len() > 20);
    for c in &checks {
        assert!(c.max_rel_error < GRAD_TOLERANCE, "{}: {:e}", c.name, c.max_rel_error);
    }
}

#[test]
fn mse_gradient_matches_finite_difference() {
    let x = Tensor::new(vec![2, 3], lcg(5, 6)).unwrap();
    let target = Tensor::new(vec![2, 3], lcg(6, 6)).unwrap();
    let err = finite_diff_check(|tape, v| tape.mse(v, &target), &x, 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

fn bim_params(n_r: usize, hidden: usize, c: usize, w: &[f64]) -> BimParams {
    let mut p = BimParams::zeros(n_r, hidden, c);
    let mut it = w.iter().cycle().copied();
    for t in [&mut p.w1, &mut p.b1, &mut p.w2, &mut p.b2] {
        for v in t.data_mut() {
            *v = 5.0 * it.next().unwrap();
        }
    }
    p
}

proptest! {
    #[test]
    fn sigmoid_gate_stays_in_unit_interval(
        mu_db in prop::collection::vec(-30.0f64..30.0, 1..6),
        w in prop::collection::vec(-1.0f64..1.0, 8..40),
        c in 1usize..9,
    ) {
        let n_r = mu_db.len();
        let p = bim_params(n_r, n_r.max(2), c, &w);
        let mu: Vec<f64> = mu_db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
        let gate = bim_forward(&BeliefVector::new(mu).unwrap(), &p).unwrap();
        prop_assert_eq!(gate.len(), c);
        for g in gate {
            prop_assert!((0.0..=1.0).contains(&g), "gate {}", g);
        }
    }

    #[test]
    fn gated_features_never_grow(
        x in prop::collection::vec(-10.0f64..10.0, 12),
        s in prop::collection::vec(0.0f64..1.0, 6),
    ) {
        let mut tape = Tape::<f64>::new();
        let xv = tape.constant(Tensor::new(vec![2, 3, 2], x.clone()).unwrap());
        let sv = tape.constant(Tensor::new(vec![2, 3], s.clone()).unwrap());
        let y = tape.gate(xv, sv, 1).unwrap();
        for (i, (yv, xv)) in tape.value(y).data().iter().zip(&x).enumerate() {
            let g = s[(i / 6) * 3 + (i / 2) % 3];
            prop_assert!((yv - xv * g).abs() < 1e-12);
            prop_assert!(yv.abs() <= xv.abs());
        }
    }

    #[test]
    fn relu_output_is_nonnegative_and_idempotent(x in prop::collection::vec(-5.0f64..5.0, 1..30)) {
        let n = x.len();
        let mut tape = Tape::<f64>::new();
        let v = tape.constant(Tensor::new(vec![n], x).unwrap());
        let once = tape.relu(v).unwrap();
        let twice = tape.relu(once).unwrap();
        prop_assert!(tape.value(once).data().iter().all(|&y| y >= 0.0));
        prop_assert_eq!(tape.value(once), tape.value(twice));
    }
}
