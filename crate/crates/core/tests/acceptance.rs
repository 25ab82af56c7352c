//! End-to-end acceptance suite. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use monoshape::basis::{build_fourier_basis, shape_derivative_prediction, ShapeCoefficients};
use monoshape::disk::{
    data_modulus_mean, estimate_radius, far_field_series, monostatic_modulus, MeanMode, DEFAULT_BRACKET,
    DEFAULT_RADIUS_TOL,
};
use monoshape::forward::{assemble, msr_matrix, DirectionSet, MonostaticData, WaveContext};
use monoshape::geometry::{
    jaccard_distance, make_circle, node_parameter, target_curve, unit_lens_area, InitialDisk, Point,
    StarShapedDomain, Target,
};
use monoshape::harness::{self, generate_target, ExperimentConfig, NoiseSpec};
use monoshape::locate::{default_indicator, pick_center};
use monoshape::mcmc::{step, ChainState, EnergyModel, McmcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn directions() -> DirectionSet {
    DirectionSet::new(36).unwrap()
}

fn disk_oracle() -> Outcome {
    let wave = WaveContext::default();
    let dirs = directions();
    let disk = InitialDisk::new(Point::new(0.01, 0.0), 0.03).unwrap();
    let t0 = Instant::now();
    let curve = target_curve(Target::Omega1, 256).unwrap();
    let msr = msr_matrix(&curve, &wave, &dirs).unwrap();
    let elapsed = t0.elapsed();
    let units = dirs.units();
    let mut worst: f64 = 0.0;
    for i in 0..36 {
        for j in 0..36 {
            let series = far_field_series(disk, &wave, units[i], -units[j], 60).unwrap();
            worst = worst.max((msr.values[(i, j)] - series).norm());
        }
    }
    outcome(
        worst <= 1e-6 && elapsed <= Duration::from_secs(10),
        format!("max |BEM - series| = {worst:.2e} over 36x36 pairs, solve {elapsed:.2?}"),
    )
}

fn shape_derivative_convergence() -> Outcome {
    let wave = WaveContext::default();
    let disk = InitialDisk::new(Point::zeros(), 0.03).unwrap();
    let n = 256;
    let thetas: Vec<f64> = (0..n).map(|i| node_parameter(i, n)).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let coeffs: Vec<(f64, f64)> = (1..=6).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let profiles: Vec<(&str, Vec<f64>)> = vec![
        ("cos 3t", thetas.iter().map(|t| (3.0 * t).cos()).collect()),
        ("sin 5t", thetas.iter().map(|t| (5.0 * t).sin()).collect()),
        (
            "band-limited",
            thetas
                .iter()
                .map(|t| coeffs.iter().enumerate().map(|(m, (a, b))| a * ((m + 1) as f64 * t).cos() + b * ((m + 1) as f64 * t).sin()).sum())
                .collect(),
        ),
    ];
    let unit = |a: f64| Point::new(a.cos(), a.sin());
    let pairs = [(unit(0.4), -unit(0.4)), (unit(0.3), unit(2.1)), (unit(-1.2), unit(0.9))];
    let circle = make_circle(disk, n).unwrap();
    let sys0 = assemble(&circle, &wave).unwrap();
    let eps = [1e-3, 5e-4, 2.5e-4];
    let mut ratios = Vec::new();
    for (_, h0) in &profiles {
        let h: Vec<f64> = h0.iter().map(|v| v * disk.radius).collect();
        let deformed: Vec<_> = eps
            .iter()
            .map(|e| {
                let hd: Vec<f64> = h.iter().map(|v| v * e).collect();
                let curve = StarShapedDomain::new(disk, hd).unwrap().deform().unwrap();
                assemble(&curve, &wave).unwrap()
            })
            .collect();
        for &(x, d) in &pairs {
            let pred = shape_derivative_prediction(disk, &wave, &h, x, d).unwrap();
            let u0 = sys0.far_field(&sys0.solve_density(d).unwrap(), x);
            let errs: Vec<f64> = eps
                .iter()
                .zip(&deformed)
                .map(|(e, sys)| {
                    let u = sys.far_field(&sys.solve_density(d).unwrap(), x);
                    (u - u0 - pred * *e).norm() / e
                })
                .collect();
            ratios.push(errs[0] / errs[1]);
            ratios.push(errs[1] / errs[2]);
        }
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    outcome(
        lo >= 1.7 && hi <= 2.6,
        format!("{} remainder ratios in [{lo:.3}, {hi:.3}]", ratios.len()),
    )
}

fn radii() -> Outcome {
    let wave = WaveContext::default();
    let dirs = directions();
    let mut pass = true;
    let mut parts = Vec::new();
    for (t, want, tol) in [(Target::Omega1, 0.0300, 0.0005), (Target::Omega2, 0.0299, 0.001), (Target::Omega3, 0.467, 0.005)] {
        let t0 = Instant::now();
        let syn = generate_target(t.name(), None, &wave, &dirs, &NoiseSpec::default()).unwrap();
        let data = syn.data();
        let gbar = data_modulus_mean(&data, &wave, MeanMode::Arithmetic).unwrap();
        let r = estimate_radius(gbar, &wave, DEFAULT_BRACKET, DEFAULT_RADIUS_TOL).unwrap();
        let el = t0.elapsed();
        pass &= (r - want).abs() <= tol && el <= Duration::from_secs(30);
        parts.push(format!("{t} {r:.5} ({el:.1?})"));
    }
    outcome(pass, parts.join(", "))
}

fn modulus_monotone() -> Outcome {
    let wave = WaveContext::from_wavenumber(20.95845).unwrap();
    let n = 1000;
    let values: Vec<f64> = (1..=n)
        .map(|i| monostatic_modulus(0.001 + 0.999 * i as f64 / n as f64, &wave, 200).unwrap())
        .collect();
    let increasing = values.windows(2).all(|w| w[1] > w[0]);
    outcome(
        increasing && values[0] > 0.0,
        format!("f_200 from {:.4e} to {:.4} over {n} points, strictly increasing: {increasing}", values[0], values[n - 1]),
    )
}

fn reciprocity() -> Outcome {
    let wave = WaveContext::default();
    let curve = target_curve(Target::Omega3, 512).unwrap();
    let msr = msr_matrix(&curve, &wave, &directions()).unwrap();
    let res = msr.reciprocity_residual();
    outcome(res <= 1e-6, format!("Omega3 N=512 reciprocity residual {res:.2e}"))
}

fn jaccard_lens() -> Outcome {
    let a = make_circle(InitialDisk::new(Point::zeros(), 1.0).unwrap(), 512).unwrap();
    let b = make_circle(InitialDisk::new(Point::new(1.0, 0.0), 1.0).unwrap(), 512).unwrap();
    let lens = unit_lens_area();
    let exact = 1.0 - lens / (2.0 * PI - lens);
    let d = jaccard_distance(&a, &b, 1024).unwrap();
    outcome((d - exact).abs() <= 1e-2, format!("raster {d:.5} vs closed form {exact:.5}"))
}

fn pcn_stationarity() -> Outcome {
    let disk = InitialDisk::new(Point::zeros(), 0.03).unwrap();
    let basis = build_fourier_basis(disk, 2, 16).unwrap().truncated(4).unwrap();
    let data = MonostaticData::new(DirectionSet::new(4).unwrap(), vec![Default::default(); 4]).unwrap();
    let model = EnergyModel {
        basis: &basis,
        data: &data,
        wave: WaveContext::default(),
        sigma: f64::INFINITY,
        tau: 0.0,
    };
    let cfg = McmcConfig {
        beta: 0.5,
        sigma: f64::INFINITY,
        nodes: 16,
        ..McmcConfig::default()
    };
    let c0 = ShapeCoefficients::zeros(4);
    let mut state = ChainState::new(c0.clone(), model.energy(&c0).unwrap());
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let iterations = 100_000;
    let mut samples = vec![Vec::with_capacity(iterations / 4); 4];
    let mut all_accepted = true;
    for _ in 0..iterations {
        let rec = step(&mut state, &model, &cfg, &mut rng);
        all_accepted &= rec.accepted;
        let j = (rec.m - 1) % 4;
        samples[j].push(state.c.0[j]);
    }
    // each coordinate is an AR(1) sequence with coefficient sqrt(1 - beta)
    let rho = (1.0 - cfg.beta).sqrt();
    let mut worst: f64 = 0.0;
    for s in &samples {
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se_mean = ((1.0 + rho) / (1.0 - rho) / n).sqrt();
        let se_var = (2.0 * (1.0 + rho * rho) / (1.0 - rho * rho) / n).sqrt();
        worst = worst.max((mean / se_mean).abs()).max(((var - 1.0) / se_var).abs());
    }
    outcome(
        all_accepted && worst <= 3.0,
        format!("{iterations} iterations, all accepted: {all_accepted}, worst deviation {worst:.2} standard errors"),
    )
}

fn regularizer_invariance() -> Outcome {
    let mut worst: f64 = 0.0;
    for r in [0.01, 0.1, 1.0] {
        for c in [Point::zeros(), Point::new(3.0, -7.5), Point::new(-0.2, 0.01)] {
            let curve = make_circle(InitialDisk::new(c, r).unwrap(), 128).unwrap();
            worst = worst.max((curve.regularizer() / (4.0 * PI * PI) - 1.0).abs());
        }
    }
    outcome(worst <= 1e-8, format!("max relative deviation from 4 pi^2: {worst:.2e}"))
}

fn omega2_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.target = Some("omega2".into());
    cfg.mcmc.seed = seed;
    cfg
}

fn desk_reconstruction() -> Outcome {
    let mut cfg = omega2_config(0);
    cfg.mcmc.max_scans = 3000;
    let t0 = Instant::now();
    let rec = harness::reconstruct(&cfg).unwrap();
    let el = t0.elapsed();
    let d = rec.mean_distance.unwrap();
    let iterations = rec.chain.state.m;
    outcome(
        d < 0.15 && iterations <= 72 * 3000 && el <= Duration::from_secs(1800),
        format!(
            "d_J(mean, Omega2) = {d:.4}, basis {} functions, {iterations} iterations, {:?}, {el:.1?}",
            rec.basis.len(),
            rec.chain.status
        ),
    )
}

fn basis_comparison() -> Outcome {
    // 200 scans of the 73 Fourier functions
    let budget = 73 * 200;
    let mut medians = Vec::new();
    let mut parts = Vec::new();
    for kind in ["derived", "fourier"] {
        let mut ds = Vec::new();
        for seed in 0..3 {
            let mut cfg = omega2_config(seed);
            cfg.basis.kind = kind.into();
            // a 1 cm disk scatters weakly, so the absolute sensitivity floor is lowered
            // to keep the five rows that the data can resolve
            cfg.basis.min_information = 50.0;
            cfg.init.center = Some([0.0, 0.0]);
            cfg.init.radius = Some(0.01);
            let wave = cfg.wave.context().unwrap();
            let disk = InitialDisk::new(Point::zeros(), 0.01).unwrap();
            let size = harness::sampling_basis(&cfg, disk, &wave, &directions()).unwrap().len();
            let scans = budget / size;
            cfg.mcmc.max_scans = scans;
            cfg.mcmc.mean_window = scans / 2;
            let rec = harness::reconstruct(&cfg).unwrap();
            ds.push(rec.mean_distance.unwrap());
        }
        ds.sort_by(f64::total_cmp);
        parts.push(format!("{kind} {:.3}/{:.3}/{:.3}", ds[0], ds[1], ds[2]));
        medians.push(ds[1]);
    }
    outcome(
        medians[0] <= medians[1],
        format!("{budget} iterations each from B(0, 0.01); sorted d_J {}", parts.join(", ")),
    )
}

fn noise_smoke() -> Outcome {
    let wave = WaveContext::default();
    let dirs = directions();
    let noise = NoiseSpec { snr_db: 20.0, seed: 0 };
    let syn = generate_target("omega3", None, &wave, &dirs, &noise).unwrap();
    let data = syn.data();
    let centroid = syn.truth.centroid();
    let peak = pick_center(&default_indicator(&data, &wave).unwrap(), 1).unwrap()[0];
    let offset = (peak - centroid).norm();
    let r = estimate_radius(
        data_modulus_mean(&data, &wave, MeanMode::Arithmetic).unwrap(),
        &wave,
        DEFAULT_BRACKET,
        DEFAULT_RADIUS_TOL,
    )
    .unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.target = Some("omega3".into());
    cfg.noise = noise;
    cfg.mcmc.block_size = 12;
    cfg.mcmc.nodes = 256;
    cfg.mcmc.max_scans = 1000;
    let rec = harness::reconstruct(&cfg).unwrap();
    let d = rec.mean_distance.unwrap();
    outcome(
        offset <= r && d < 0.5,
        format!(
            "peak {offset:.3} from the centroid (r = {r:.3}); chain {:?} with {} functions, acceptance {:.3}, d_J(mean) = {d:.3}",
            rec.chain.status,
            rec.basis.len(),
            rec.chain.acceptance_rate()
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 disk oracle equivalence", disk_oracle),
        ("2 shape derivative convergence", shape_derivative_convergence),
        ("3 disk radii", radii),
        ("4 f_M monotonicity", modulus_monotone),
        ("5 reciprocity", reciprocity),
        ("6 Jaccard oracle", jaccard_lens),
        ("7 pCN stationarity", pcn_stationarity),
        ("8 regularizer invariance", regularizer_invariance),
        ("9 desk-scale reconstruction", desk_reconstruction),
        ("10 basis comparison", basis_comparison),
        ("11 noise robustness", noise_smoke),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let t0 = Instant::now();
        let o = f();
        println!(
            "{} criterion {name}: {} [{:.1?}]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed()
        );
        if !o.pass {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
