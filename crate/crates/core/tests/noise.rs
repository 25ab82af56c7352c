use monoshape::disk::far_field_series;
use monoshape::forward::{msr_matrix, DirectionSet, MonostaticData, WaveContext};
use monoshape::geometry::{target_curve, InitialDisk, Point, Target};
use monoshape::harness::{
    add_noise, calibrate, disk_series_data, empirical_snr_db, solver_calibration, NoiseSpec,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[test]
fn twenty_db_noise_has_twenty_db_snr_for_every_seed() {
    let wave = WaveContext::default();
    let msr = msr_matrix(&target_curve(Target::Omega2, 256).unwrap(), &wave, &DirectionSet::new(36).unwrap()).unwrap();
    let mut total = 0.0;
    for seed in 0..100 {
        let noisy = add_noise(&msr, &NoiseSpec { snr_db: 20.0, seed });
        let snr = empirical_snr_db(&msr, &noisy);
        assert!((snr - 20.0).abs() <= 0.5, "seed {seed}: {snr}");
        total += snr;
    }
    assert!((total / 100.0 - 20.0).abs() < 0.05);
}

#[test]
fn calibration_matches_dense_least_squares() {
    let wave = WaveContext::default();
    let dirs = DirectionSet::new(36).unwrap();
    let disk = InitialDisk::new(Point::new(0.01, 0.0), 0.03).unwrap();
    let reference = disk_series_data(disk, &wave, &dirs).unwrap();
    // measured = reference / 1.7 plus a small residual orthogonal to it
    let norm2: f64 = reference.values.iter().map(|v| v.norm_sqr()).sum();
    let mut measured = Vec::new();
    for (j, r) in reference.values.iter().enumerate() {
        let raw = Complex64::new((j as f64 * 0.37).sin(), (j as f64 * 1.3).cos()) * 1e-4;
        measured.push(r / 1.7 + raw);
    }
    let overlap: Complex64 = reference.values.iter().zip(&measured).map(|(r, m)| r.conj() * (m - r / 1.7)).sum();
    for (m, r) in measured.iter_mut().zip(&reference.values) {
        *m -= r * overlap / norm2;
    }
    let measured = MonostaticData::new(dirs.clone(), measured).unwrap();
    let s = calibrate(&reference, &measured).unwrap();
    // real least squares: [Re m; Im m] s = [Re r; Im r]
    let n = measured.len();
    let a = DMatrix::from_fn(2 * n, 1, |i, _| if i < n { measured.values[i].re } else { measured.values[i - n].im });
    let b = DVector::from_fn(2 * n, |i, _| if i < n { reference.values[i].re } else { reference.values[i - n].im });
    let oracle = a.svd(true, true).solve(&b, 1e-14).unwrap()[0];
    assert!((s - oracle).abs() < 1e-6, "{s} vs {oracle}");
    assert!((s - 1.7).abs() < 1e-3);
}

#[test]
fn solver_and_series_agree_up_to_unit_scale() {
    let wave = WaveContext::default();
    let dirs = DirectionSet::new(36).unwrap();
    let disk = InitialDisk::new(Point::new(0.01, 0.0), 0.03).unwrap();
    let s = solver_calibration(disk, &wave, &dirs, 256).unwrap();
    assert!((s - 1.0).abs() < 1e-8, "{s}");
    let u = far_field_series(disk, &wave, Point::new(1.0, 0.0), Point::new(-1.0, 0.0), 200).unwrap();
    assert!(u.norm() > 0.0);
}
