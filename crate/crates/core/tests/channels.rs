use std::sync::Arc;

use num_complex::Complex64 as C64;
use parking_lot::Mutex;
use qnet::channels::{
    drop_probability, haar_unitary, random_single_qubit_corruption, Attenuation, Chain, ChannelModel, ErrorSpec,
    GroupCorruption, NoError, QuantumError, RandomUnitary, UnitarySampler,
};
use qnet::gates::{self, Matrix2c};
use qnet::{EnsembleStore, Precision};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-sided KS statistic of a sample against U(0, 1).
fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x)).fold(0.0, f64::max)
}

#[test]
fn haar_unitaries_are_unitary_and_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples: Vec<Matrix2c> = (0..10_000).map(|_| haar_unitary(&mut rng)).collect();
    for u in &samples {
        let defect = (u.adjoint() * u - Matrix2c::identity()).norm();
        assert!(defect < 1e-12);
    }
    // under the Haar measure on U(2), |U00|^2 is uniform on [0, 1]
    let d = ks_uniform(samples.iter().map(|u| u[(0, 0)].norm_sqr()).collect());
    let critical = 1.628 / (samples.len() as f64).sqrt();
    assert!(d < critical, "KS statistic {d} exceeds 1% critical value {critical}");
    // and the phase of U00 is uniform as well
    let phases = samples.iter().map(|u| (u[(0, 0)].arg() + std::f64::consts::PI) / std::f64::consts::TAU);
    assert!(ks_uniform(phases.collect()) < critical);
}

#[test]
fn attenuation_drop_rate_within_three_sigma() {
    let n = 20_000;
    let store = EnsembleStore::new(1, n, Precision::Double).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (db, km) in [(0.16, 1.0), (0.16, 25.0), (1.0, 3.0)] {
        let p = drop_probability(db, km);
        assert!((p - (1.0 - 10f64.powf(-db * km / 10.0))).abs() < 1e-15);
        let mut model = Attenuation { db_per_km: db };
        let dropped =
            (0..n).filter(|&i| model.apply(store.qubit(i, 0).unwrap(), km, &mut rng).unwrap().is_none()).count();
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (dropped as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "α={db} L={km}: {dropped} drops, expected {}", n as f64 * p);
    }
    assert_eq!(drop_probability(0.0, 100.0), 0.0);
}

#[test]
fn loss_leaves_state_untouched() {
    let store = EnsembleStore::new(2, 1, Precision::Double).unwrap();
    let q = store.qubit(0, 1).unwrap();
    gates::h(&q).unwrap();
    let before = store.snapshot(0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Attenuation { db_per_km: 1e6 };
    assert!(model.apply(q, 1.0, &mut rng).unwrap().is_none());
    assert_eq!(store.snapshot(0).unwrap(), before);
}

#[test]
fn corruption_targets_are_uniform() {
    let trials = 9_000;
    let store = EnsembleStore::new(9, 1, Precision::Single).unwrap();
    let group = store.system(0).unwrap().qubits();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sampler = UnitarySampler::Fixed(Matrix2c::identity());
    let mut counts = [0usize; 9];
    for _ in 0..trials {
        counts[random_single_qubit_corruption(&group, &mut rng, &sampler).unwrap().position] += 1;
    }
    let expected = trials as f64 / 9.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // chi-square with 8 degrees of freedom, 0.1% upper tail
    assert!(chi2 < 26.12, "chi2 {chi2} for counts {counts:?}");
    assert!(random_single_qubit_corruption(&group[..8], &mut rng, &sampler).is_err());
}

#[test]
fn group_corruption_hits_exactly_one_per_group() {
    let groups = 40;
    let store = EnsembleStore::new(1, 9 * groups, Precision::Double).unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let x = Matrix2c::new(C64::default(), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::default());
    let mut model = GroupCorruption::new(9, 1.0, UnitarySampler::Fixed(x)).with_log(log.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut flipped = vec![0usize; groups];
    for i in 0..9 * groups {
        let q = model.apply(store.qubit(i, 0).unwrap(), 1.0, &mut rng).unwrap().unwrap();
        if q.measure(&mut rng).unwrap() == 1 {
            flipped[i / 9] += 1;
        }
    }
    assert!(flipped.iter().all(|&f| f == 1));
    assert_eq!(log.lock().len(), groups);
}

#[test]
fn chain_equals_sequential_application() {
    let n = 500;
    let a = EnsembleStore::new(1, n, Precision::Double).unwrap();
    let b = EnsembleStore::new(1, n, Precision::Double).unwrap();
    let mut chain = Chain(vec![
        Box::new(RandomUnitary { p_error: 0.5, sampler: UnitarySampler::Haar }),
        Box::new(Attenuation { db_per_km: 0.5 }),
        Box::new(NoError),
    ]);
    let mut first = RandomUnitary { p_error: 0.5, sampler: UnitarySampler::Haar };
    let mut second = Attenuation { db_per_km: 0.5 };
    let (mut r1, mut r2) = (ChaCha8Rng::seed_from_u64(11), ChaCha8Rng::seed_from_u64(11));
    for i in 0..n {
        let via_chain = chain.apply(a.qubit(i, 0).unwrap(), 2.0, &mut r1).unwrap();
        let step = first.apply(b.qubit(i, 0).unwrap(), 2.0, &mut r2).unwrap().unwrap();
        let by_hand = second.apply(step, 2.0, &mut r2).unwrap();
        assert_eq!(via_chain.is_some(), by_hand.is_some());
        assert_eq!(a.snapshot(i).unwrap(), b.snapshot(i).unwrap());
    }
}

#[test]
fn error_specs_parse_and_validate() {
    let spec: ErrorSpec = toml::from_str("type = \"group_corruption\"").unwrap();
    assert!(matches!(spec, ErrorSpec::GroupCorruption { group_size: 9, p_error } if p_error == 1.0));
    assert!(toml::from_str::<ErrorSpec>("type = \"attenuation\"\ndb_per_km = 0.2\nextra = 1").is_err());
    for bad in [
        ErrorSpec::Attenuation { db_per_km: -1.0 },
        ErrorSpec::RandomUnitary { p_error: 1.5 },
        ErrorSpec::GroupCorruption { group_size: 0, p_error: 0.5 },
    ] {
        assert!(ChannelModel::perfect().with_error(bad).validate().is_err());
    }
    assert!(ChannelModel::fiber(0.16).with_length(-1.0).validate().is_err());
    assert!(ChannelModel::perfect().with_signal_speed(0.0).validate().is_err());
}

#[test]
fn delay_is_length_over_speed_rounded_up() {
    let m = ChannelModel::perfect().with_length(1.0);
    assert_eq!(m.delay().femtos(), (1e15 / 2.998e5f64).ceil() as u64);
    let m = ChannelModel::perfect().with_length(3.0).with_signal_speed(3.0);
    assert_eq!(m.delay().femtos(), 1_000_000_000_000_000);
    assert_eq!(ChannelModel::perfect().delay().femtos(), 0);
}
