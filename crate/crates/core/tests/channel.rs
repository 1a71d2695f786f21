use bimce::channel::{
    build_grid, equivalent_channel, generate_channel, svd_precode, transmit_equivalent, PilotPattern, SimConfig,
    SPEED_OF_LIGHT_MPS,
};
use bimce::grid::{ComplexGrid, C64};

/// `J0(x) = (1/pi) int_0^pi cos(x sin t) dt`, composite Simpson.
fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = std::f64::consts::PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(std::f64::consts::PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / std::f64::consts::PI
}

#[test]
fn quadrature_oracle_matches_known_values() {
    assert!((bessel_j0(0.0) - 1.0).abs() < 1e-12);
    // first zero of J0
    assert!(bessel_j0(2.404_825_557_695_773).abs() < 1e-9);
    assert!((bessel_j0(1.0) - 0.765_197_686_557_966_6).abs() < 1e-9);
}

#[test]
fn fading_autocorrelation_follows_j0() {
    let cfg = SimConfig {
        n_t: 1,
        n_r: 2,
        n_c: 1,
        n_l: 14,
        num_taps: 1,
        ue_speed_mps: 300.0,
        ..SimConfig::default()
    };
    let fd = cfg.ue_speed_mps * cfg.carrier_frequency_hz / SPEED_OF_LIGHT_MPS;
    // 14 symbols per 1 ms slot at 15 kHz spacing
    let ts = 1e-3 / 14.0;
    let trials = 3000;
    let mut acc = vec![C64::new(0.0, 0.0); cfg.n_l];
    let mut count = 0.0;
    for seed in 0..trials {
        let ch = generate_channel(&cfg, seed).unwrap();
        let g = &ch.taps[0].gains;
        for r in 0..cfg.n_r {
            let row = &g[r * cfg.n_l..(r + 1) * cfg.n_l];
            for (lag, a) in acc.iter_mut().enumerate() {
                *a += row[lag] * row[0].conj();
            }
            count += 1.0;
        }
    }
    for (lag, a) in acc.iter().enumerate() {
        let measured = a.re / count;
        let expected = bessel_j0(2.0 * std::f64::consts::PI * fd * lag as f64 * ts);
        assert!(
            (measured - expected).abs() < 0.06,
            "lag {lag}: measured {measured:.4}, J0 {expected:.4}"
        );
    }
}

#[test]
fn channel_has_unit_average_power() {
    let cfg = SimConfig {
        n_t: 4,
        n_r: 2,
        n_c: 12,
        ..SimConfig::default()
    };
    let trials = 2000;
    let mut power = 0.0;
    let mut n = 0usize;
    for seed in 0..trials {
        let h = generate_channel(&cfg, seed).unwrap().h();
        power += h.norm_sqr();
        n += h.len();
    }
    let mean = power / n as f64;
    assert!((mean - 1.0).abs() < 0.02, "E|H|^2 = {mean}");
}

#[test]
fn noise_has_requested_variance() {
    let pattern = PilotPattern::even_stride(48, 14, 24, &[2, 11], 1).unwrap();
    let bits = vec![0u8; 2 * (48 * 14 - pattern.total())];
    let grid = build_grid(&bits, &pattern, 1).unwrap();
    let g = ComplexGrid::zeros(&[4, 1, 48, 14]);
    for &var in &[0.01, 1.0, 50.0] {
        let mut sum = 0.0;
        let mut n = 0usize;
        for seed in 0..60 {
            let rx = transmit_equivalent(&g, &grid, &pattern, var, seed).unwrap();
            sum += rx.y.norm_sqr();
            n += rx.y.len();
        }
        let measured = sum / n as f64;
        assert!((measured / var - 1.0).abs() < 0.03, "variance {var}: measured {measured}");
    }
}

/// Beamforming gain `sum_{k,l} ||H p||^2` for a unit-norm precoder.
fn gain(h: &ComplexGrid, p: &[C64]) -> f64 {
    let pg = ComplexGrid::new(vec![p.len(), 1], p.to_vec()).unwrap();
    equivalent_channel(h, &pg).unwrap().norm_sqr()
}

#[test]
fn svd_precoder_beats_exhaustive_grid_search() {
    let cfg = SimConfig {
        n_t: 2,
        n_r: 2,
        n_c: 12,
        n_l: 4,
        ..SimConfig::default()
    };
    for seed in 0..5 {
        let h = generate_channel(&cfg, seed).unwrap().h();
        let p = svd_precode(&h, 1).unwrap();
        let norm: f64 = p.data().iter().map(|c| c.norm_sqr()).sum();
        assert!((norm - 1.0).abs() < 1e-9);
        let best_svd = gain(&h, p.data());

        // every unit vector is (cos a, sin a e^{j b}) up to a common phase
        let steps = 180;
        let mut best_grid: f64 = 0.0;
        for i in 0..=steps {
            let a = std::f64::consts::FRAC_PI_2 * i as f64 / steps as f64;
            for j in 0..2 * steps {
                let b = std::f64::consts::PI * j as f64 / steps as f64;
                let cand = [C64::new(a.cos(), 0.0), C64::from_polar(a.sin(), b)];
                best_grid = best_grid.max(gain(&h, &cand));
            }
        }
        assert!(best_svd >= best_grid * (1.0 - 1e-9), "seed {seed}: svd {best_svd} < grid {best_grid}");
        assert!(best_svd <= best_grid * 1.001, "seed {seed}: svd {best_svd} vs grid {best_grid}");
    }
}
