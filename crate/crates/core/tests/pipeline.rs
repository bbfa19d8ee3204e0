use std::f64::consts::PI;
use std::fs;

use aplanc::dsp::{hr_from_signal, phase_at_bin, traditional_heartbeat, unwrap};
use aplanc::io::{read_manifest, Split, MANIFEST_NAME};
use aplanc::model::{Architecture, ExtractorParams};
use aplanc::nct::{aug_pseudo_gen, Choice};
use aplanc::rangeproc::{build_range_matrix, select_center_bin, NoiseExclusion};
use aplanc::sim::{make_corpus, simulate_if_signals, IfCube, SceneConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg_with(n_chirps: usize, s: usize) -> SceneConfig {
    SceneConfig {
        n_chirps,
        samples_per_chirp: s,
        n_range_bins: s,
        ..SceneConfig::default()
    }
}

#[test]
fn bin_center_tone_dominates_its_column() {
    let s = 32;
    let cfg = cfg_with(4, s);
    let bin = 7;
    let data: Vec<Complex64> = (0..4 * s)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * bin as f64 * (i % s) as f64 / s as f64))
        .collect();
    let m = build_range_matrix(&IfCube::new(data, 4, s).unwrap(), &cfg).unwrap();
    let row = m.row(0);
    let peak = row[bin].norm();
    for (b, z) in row.iter().enumerate() {
        if b != bin {
            assert!(peak > 10.0 * z.norm(), "bin {b}");
        }
    }
    assert_eq!(select_center_bin(&m, None).unwrap(), bin);
}

#[test]
fn zero_cube_and_identical_chirps() {
    let s = 16;
    let cfg = cfg_with(3, s);
    let m = build_range_matrix(
        &IfCube::new(vec![Complex64::new(0.0, 0.0); 3 * s], 3, s).unwrap(),
        &cfg,
    )
    .unwrap();
    assert!(m.data().iter().all(|z| z.norm() == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let chirp: Vec<Complex64> = (0..s)
        .map(|_| Complex64::new(rng.random(), rng.random()))
        .collect();
    let data = [chirp.clone(), chirp].concat();
    let m = build_range_matrix(&IfCube::new(data, 2, s).unwrap(), &cfg_with(2, s)).unwrap();
    assert_eq!(m.row(0), m.row(1));
}

#[test]
fn parseval_per_chirp() {
    let s = 64;
    let n = 5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<Complex64> = (0..n * s)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let m = build_range_matrix(&IfCube::new(data.clone(), n, s).unwrap(), &cfg_with(n, s)).unwrap();
    for c in 0..n {
        let time: f64 = data[c * s..(c + 1) * s].iter().map(|z| z.norm_sqr()).sum();
        let freq: f64 = m.row(c).iter().map(|z| z.norm_sqr()).sum();
        assert!((freq - s as f64 * time).abs() / freq < 1e-9);
    }
}

#[test]
fn traditional_recovers_heart_rate_at_high_snr() {
    let cfg = SceneConfig {
        snr_db: 20.0,
        rng_seed: 4,
        ..SceneConfig::default()
    };
    let (cube, _) = simulate_if_signals(&cfg).unwrap();
    let m = build_range_matrix(&cube, &cfg).unwrap();
    let hb = traditional_heartbeat(&m, select_center_bin(&m, None).unwrap()).unwrap();
    let hr = hr_from_signal(&hb).unwrap();
    assert!((hr - 72.0).abs() <= 1.5, "{hr}");
}

#[test]
fn traditional_on_a_noise_bin_misses_the_heart_rate() {
    let mut misses = 0;
    let trials = 20;
    for seed in 0..trials {
        let cfg = SceneConfig {
            snr_db: 10.0,
            n_chirps: 1200,
            heart_rate_bpm: 60.0 + 4.0 * seed as f64,
            rng_seed: seed,
            ..SceneConfig::default()
        };
        let (cube, _) = simulate_if_signals(&cfg).unwrap();
        let m = build_range_matrix(&cube, &cfg).unwrap();
        let far = m.n_bins() - 3;
        let hr = hr_from_signal(&traditional_heartbeat(&m, far).unwrap()).unwrap();
        if (hr - cfg.heart_rate_bpm).abs() > 5.0 {
            misses += 1;
        }
    }
    assert!(2 * misses >= trials, "{misses}/{trials}");
}

#[test]
fn static_target_gives_near_zero_heartbeat() {
    let cfg = SceneConfig {
        chest_amp_m: 0.0,
        n_chirps: 1200,
        target_distance_m: 0.63,
        ..SceneConfig::default()
    };
    let (cube, _) = simulate_if_signals(&cfg).unwrap();
    let m = build_range_matrix(&cube, &cfg).unwrap();
    let bin = select_center_bin(&m, None).unwrap();
    let phase = unwrap(&phase_at_bin(&m, bin).unwrap());
    let hb = traditional_heartbeat(&m, bin).unwrap();
    let power = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    assert!(power(&phase.samples) > 0.0);
    assert!(power(&hb.samples) < 1e-6 * power(&phase.samples));
}

fn scenes(count: usize) -> Vec<(SceneConfig, Split)> {
    (0..count)
        .map(|i| {
            (
                SceneConfig {
                    n_chirps: 240,
                    snr_db: 5.0,
                    rng_seed: 100 + i as u64,
                    ..SceneConfig::default()
                },
                Split::Train,
            )
        })
        .collect()
}

#[test]
fn corpus_cardinality_and_regeneration() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let entries = make_corpus(&scenes(3), &a).unwrap();
    assert_eq!(entries.len(), 3);
    let count = |ext: &str| {
        fs::read_dir(&a)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
            .count()
    };
    assert_eq!((count("rapm"), count("ragt")), (3, 3));
    assert_eq!(read_manifest(&a.join(MANIFEST_NAME)).unwrap(), entries);

    let b = dir.path().join("b");
    make_corpus(&scenes(3), &b).unwrap();
    for e in &entries {
        for p in [e.path.clone(), e.ragt_path()] {
            assert_eq!(
                fs::read(a.join(&p)).unwrap(),
                fs::read(b.join(&p)).unwrap(),
                "{}",
                p.display()
            );
        }
    }
}

#[test]
fn empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    assert!(make_corpus(&[], dir.path()).unwrap().is_empty());
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
    assert!(read_manifest(&dir.path().join(MANIFEST_NAME)).unwrap().is_empty());
}

#[test]
fn aug_pseudo_label_is_always_a_candidate() {
    let cfg = SceneConfig {
        snr_db: 0.0,
        n_chirps: 2400,
        clutter: vec![(1.2, 0.5)],
        ..SceneConfig::default()
    };
    let (cube, _) = simulate_if_signals(&cfg).unwrap();
    let m = build_range_matrix(&cube, &cfg).unwrap();
    let center = select_center_bin(&m, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let arch = Architecture::for_half_width(2);
    let gh = ExtractorParams::random(&arch, &mut rng);
    let gn = ExtractorParams::random(&arch, &mut rng);
    for _ in 0..10 {
        let (signal, d) =
            aug_pseudo_gen(&m, center, &gh, &gn, 2, NoiseExclusion::HeartbeatWindow, &mut rng).unwrap();
        assert_eq!(d.noise_dists.len(), 5);
        assert!(d.noise_dists.iter().chain(&d.hb_dists).all(|v| *v >= 0.0));
        let expected = match d.chosen {
            Choice::Traditional(i) => traditional_heartbeat(&m, center - 2 + i).unwrap(),
            Choice::Pretrained => aplanc::model::forward(
                &gh,
                &aplanc::rangeproc::heartbeat_window(&m, center, 2, Default::default()).unwrap(),
            )
            .unwrap(),
        };
        assert_eq!(signal, expected);
    }
}
