use nearbeam_core::array::{far_field_steering, far_field_steering_centred, near_field_steering};
use nearbeam_core::channel::{
    generate_scenario, ls_estimate, mmwave_channel, mmwave_taps, sub6_channel, sub6_response, sub6_taps,
    taps_to_frequency, PathParams, ScenarioSample,
};
use nearbeam_core::config::{rayleigh_distance, GeometryConfig, SystemConfig, SPEED_OF_LIGHT};
use nearbeam_core::predictor::{angle_grid, AdtPredictor, BeamPredictor, PredictorInput};
use nearbeam_core::rng::stream;
use nearbeam_core::{Complex64, PolarCodebook};
use ndarray::{Array1, Array2};
use std::f64::consts::PI;

fn lambda_mm() -> f64 {
    SPEED_OF_LIGHT / 73e9
}

fn max_phase_error(a: &Array1<Complex64>, b: &Array1<Complex64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x * y.conj()).arg().abs())
        .fold(0.0, f64::max)
}

fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn near_field_converges_to_far_field() {
    let n = 64;
    for &theta in &[-1.2, -0.4, 0.0, 0.3, 1.1] {
        let far = far_field_steering_centred(theta, n);
        let err = max_phase_error(&near_field_steering(theta, 1e6, n, lambda_mm()), &far);
        assert!(err < 1e-3, "theta {theta}: {err}");
        let errs: Vec<f64> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&r| max_phase_error(&near_field_steering(theta, r, n, lambda_mm()), &far))
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }
}

#[test]
fn element_zero_reference_differs_by_global_phase() {
    let n = 16;
    for &theta in &[-0.9, 0.2, 1.3] {
        let a = far_field_steering(theta, n);
        let b = far_field_steering_centred(theta, n);
        let g = a[0] * b[0].conj() * n as f64;
        let rotated = b.mapv(|z| z * g);
        assert!(max_phase_error(&a, &rotated) < 1e-12);
    }
}

/// Direct double sum with unreduced phases, independent of the library's
/// modular indexing.
fn dft_oracle(taps: &Array2<Complex64>, subcarriers: usize) -> Array2<Complex64> {
    let (d_len, n) = taps.dim();
    Array2::from_shape_fn((subcarriers, n), |(m0, k)| {
        let m = (m0 + 1) as f64;
        (0..d_len)
            .map(|d0| {
                let d = (d0 + 1) as f64;
                taps[(d0, k)] * Complex64::new(0.0, -2.0 * PI * m * d / subcarriers as f64).exp()
            })
            .sum()
    })
}

#[test]
fn frequency_transform_matches_oracle() {
    let mut rng = stream(81, &[]);
    use nearbeam_core::channel::complex_normal;
    for &(d, m, n) in &[(40usize, 64usize, 8usize), (20, 32, 16), (40, 16, 4), (3, 7, 5)] {
        for _ in 0..5 {
            let taps = Array2::from_shape_fn((d, n), |_| complex_normal(&mut rng, 1.0));
            let got = taps_to_frequency(&taps, m);
            let want = dft_oracle(&taps, m);
            assert!(frobenius(&(&got - &want)) <= 1e-10 * frobenius(&want));
        }
    }
}

#[test]
fn channels_match_oracle_on_generated_drops() {
    let c = SystemConfig::desk_profile();
    let g = GeometryConfig::default();
    for seed in 0..10 {
        let s = generate_scenario(&c, &g, &mut stream(seed, &[])).unwrap();
        let h = mmwave_channel(&s, &c).unwrap();
        let want = dft_oracle(&mmwave_taps(&s, &c).unwrap(), c.subcarriers);
        assert!(frobenius(&(&h - &want)) <= 1e-10 * frobenius(&want));
        // sub-6 GHz is transformed in column form, rows are the conjugates
        let cols = sub6_taps(&s, &c).unwrap().mapv(|z| z.conj());
        let want = dft_oracle(&cols, c.subcarriers_sub).mapv(|z| z.conj());
        let h = sub6_channel(&s, &c).unwrap();
        assert!(frobenius(&(&h - &want)) <= 1e-10 * frobenius(&want));
    }
}

fn error_variance(c: &SystemConfig, draws: usize, seed: u64) -> f64 {
    let h = Array2::<Complex64>::zeros((c.subcarriers_sub, c.antennas_sub));
    let per = h.len();
    let reps = draws.div_ceil(per);
    let mut rng = stream(seed, &[]);
    let mut acc = 0.0;
    for _ in 0..reps {
        acc += ls_estimate(&h, c, &mut rng).iter().map(|z| z.norm_sqr()).sum::<f64>();
    }
    acc / (reps * per) as f64
}

#[test]
fn ls_error_variance() {
    let mut c = SystemConfig::desk_profile();
    let expected = c.noise_power_sub * c.subcarriers_sub as f64 / c.pilot_power_sub;
    let v = error_variance(&c, 100_000, 82);
    assert!((v / expected - 1.0).abs() < 0.02, "{v} vs {expected}");
    c.pilot_power_sub *= 2.0;
    let v2 = error_variance(&c, 100_000, 83);
    assert!((v2 / (expected / 2.0) - 1.0).abs() < 0.02);
    assert!((v / v2 - 2.0).abs() < 0.06);
}

#[test]
fn ls_noiseless_identity() {
    let mut c = SystemConfig::desk_profile();
    c.noise_power_sub = 0.0;
    let s = generate_scenario(&c, &GeometryConfig::default(), &mut stream(84, &[])).unwrap();
    let h = sub6_channel(&s, &c).unwrap();
    assert_eq!(ls_estimate(&h, &c, &mut stream(85, &[])), h);
}

fn boundary_error(theta: f64, dist: f64, c: &SystemConfig) -> f64 {
    let near = near_field_steering(theta, dist, c.antennas_sub, c.wavelength_sub());
    let far = far_field_steering_centred(theta, c.antennas_sub);
    let diff: f64 = near.iter().zip(&far).map(|(a, b)| (a - b).norm_sqr()).sum();
    diff.sqrt()
}

/// Relative error predicted by the quadratic (Fresnel) phase term
/// `pi delta^2 lambda cos^2(theta) / (4 r)`.
fn fresnel_prediction(theta: f64, dist: f64, c: &SystemConfig) -> f64 {
    let n = c.antennas_sub;
    let l = c.wavelength_sub();
    let centre = (n as f64 - 1.0) / 2.0;
    let sum: f64 = (0..n)
        .map(|k| {
            let delta = k as f64 - centre;
            let phi = PI * delta * delta * l * theta.cos().powi(2) / (4.0 * dist);
            (Complex64::from_polar(1.0, phi) - 1.0).norm_sqr()
        })
        .sum();
    (sum / n as f64).sqrt()
}

#[test]
fn rayleigh_boundary_gap_follows_fresnel_term() {
    let c = SystemConfig::desk_profile();
    let r = rayleigh_distance(c.antennas_sub, c.wavelength_sub());
    assert!((r - c.rayleigh_distance_sub()).abs() < 1e-12);
    for &theta in &[-1.0, -0.3, 0.0, 0.5, 1.2] {
        let at = boundary_error(theta, r, &c);
        let predicted = fresnel_prediction(theta, r, &c);
        assert!((at / predicted - 1.0).abs() < 0.1, "theta {theta}: {at} vs {predicted}");
        let mut prev = at;
        for k in 1..5 {
            let e = boundary_error(theta, r * 2f64.powi(k), &c);
            assert!(e < prev);
            prev = e;
        }
        // the branch switch itself is where the function says it is
        let just_in = sub6_response(theta, r, c.antennas_sub, c.wavelength_sub(), r);
        let just_out = sub6_response(theta, r * (1.0 + 1e-12), c.antennas_sub, c.wavelength_sub(), r);
        assert_eq!(just_in, near_field_steering(theta, r, c.antennas_sub, c.wavelength_sub()));
        assert_eq!(just_out, far_field_steering_centred(theta, c.antennas_sub));
    }
}

#[test]
#[ignore = "unattainable: the planar and spherical responses differ by about 0.1-0.17 at the Rayleigh distance"]
fn rayleigh_boundary_continuity_one_percent() {
    let c = SystemConfig::desk_profile();
    let r = c.rayleigh_distance_sub();
    for &theta in &[-1.0, 0.0, 0.5] {
        let path = PathParams {
            gain: Complex64::new(1e-3, 0.0),
            aod: theta,
            toa: r / SPEED_OF_LIGHT,
            dist: r,
            is_los: true,
        };
        let sample = |dist: f64| ScenarioSample {
            mmwave_paths: vec![],
            sub6_paths: vec![PathParams { dist, ..path.clone() }],
            ue_position: [0.0, 0.0],
            los_condition: true,
        };
        let inside = sub6_channel(&sample(r), &c).unwrap();
        let outside = sub6_channel(&sample(r * (1.0 + 1e-12)), &c).unwrap();
        let rel = frobenius(&(&inside - &outside)) / frobenius(&inside);
        assert!(rel < 1e-2, "theta {theta}: {rel}");
    }
}

/// With 16 mmWave and 4 sub-6 GHz antennas the 4x oversampled angle grid
/// coincides with the codebook angles, so a noiseless single path at
/// `theta_n` must land in angle index `n`.
#[test]
fn adt_peak_maps_to_codebook_angle() {
    let mut c = SystemConfig::desk_profile();
    c.antennas = 16;
    c.antennas_sub = 4;
    c.rings = 3;
    // small beta pushes the rings beyond the sub-6 GHz Rayleigh distance
    c.beta = 0.1;
    c.noise_power_sub = 0.0;
    let cb = PolarCodebook::build(&c).unwrap();
    let grid = angle_grid(c.antennas_sub);
    assert_eq!(grid.len(), cb.antennas());
    let adt = AdtPredictor::new(1e-3).unwrap();
    for n in 1..=cb.antennas() {
        let theta = cb.angle(n);
        let dist = cb.distance(n, 1);
        assert!(dist > c.rayleigh_distance_sub());
        assert!((grid[n - 1] - theta.sin()).abs() < 1e-12);
        let path = PathParams {
            gain: Complex64::new(1e-3, 0.0),
            aod: theta,
            toa: dist / SPEED_OF_LIGHT,
            dist,
            is_los: true,
        };
        let s = ScenarioSample {
            mmwave_paths: vec![path.clone()],
            sub6_paths: vec![path],
            ue_position: [0.0, 0.0],
            los_condition: true,
        };
        let h = sub6_channel(&s, &c).unwrap();

        // brute-force spatial spectrum summed over subcarriers
        let power = |psi: f64| -> f64 {
            (0..c.subcarriers_sub)
                .map(|m| {
                    (0..c.antennas_sub)
                        .map(|k| h[(m, k)].conj() * Complex64::from_polar(1.0, PI * k as f64 * psi))
                        .sum::<Complex64>()
                        .norm_sqr()
                })
                .sum()
        };
        let peak = (0..grid.len())
            .max_by(|&a, &b| power(grid[a]).total_cmp(&power(grid[b])))
            .unwrap();
        assert_eq!(peak, n - 1);

        let input = PredictorInput {
            sample_id: n as u64,
            h_sub_est: h.view(),
            h_mm: None,
        };
        let p = adt.predict(&input, &cb, &c).unwrap();
        assert_eq!(p.argmax().n, n, "path at n = {n}");
    }
}

#[test]
fn generator_degenerate_geometries() {
    let c = SystemConfig::desk_profile();
    let mut g = GeometryConfig {
        p_los: 1.0,
        scatterers: [0, 0],
        diffuse_paths: [0, 0],
        ..GeometryConfig::default()
    };
    let s = generate_scenario(&c, &g, &mut stream(86, &[])).unwrap();
    assert!(s.los_condition);
    assert_eq!((s.mmwave_paths.len(), s.sub6_paths.len()), (1, 1));
    let d = s.ue_distance(&g);
    assert!((s.mmwave_paths[0].toa - d / SPEED_OF_LIGHT).abs() < 1e-15);

    g.p_los = 0.0;
    g.scatterers = [1, 4];
    for seed in 0..50 {
        let s = generate_scenario(&c, &g, &mut stream(87, &[seed])).unwrap();
        assert!(!s.los_condition);
        let direct = s.ue_distance(&g) / SPEED_OF_LIGHT;
        assert!(s.mmwave_paths.iter().all(|p| p.toa > direct && !p.is_los));
        assert!(s.sub6_paths.iter().all(|p| p.toa > direct));
    }
}
