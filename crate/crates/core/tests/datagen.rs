use std::collections::BTreeMap;

use edgeamc::datagen::{
    build_dataset, frame_seed, load_dataset, save_dataset, synthesize_frame, synthesize_parts, ModulationClass, Split,
    NUM_CLASSES, SNR_LEVELS,
};
use edgeamc::Error;

fn power(x: &[num_complex::Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

#[test]
fn empirical_snr_tracks_the_request() {
    for class in ModulationClass::ALL {
        for snr in SNR_LEVELS {
            let (mut ps, mut pn) = (0.0, 0.0);
            for k in 0..100 {
                let parts = synthesize_parts(class, snr, frame_seed(21, class, snr, k));
                ps += power(&parts.clean);
                pn += power(&parts.noise);
            }
            let measured = 10.0 * (ps / pn).log10();
            assert!((measured - f64::from(snr)).abs() <= 0.5, "{} at {snr} dB: {measured:.3}", class.name());
        }
    }
}

#[test]
fn frames_have_bounded_power_and_grid_snr() {
    let d = build_dataset(3, 22).unwrap();
    for f in d.frames() {
        let p = f.average_power();
        assert!((0.5..=2.0).contains(&p), "{p}");
        assert!(SNR_LEVELS.contains(&f.snr_db));
        assert_eq!(f.iq.len(), 256);
    }
}

#[test]
fn ten_per_cell_gives_2200_frames_split_evenly() {
    let d = build_dataset(10, 23).unwrap();
    assert_eq!(d.len(), 2200);
    let (train, test) = (d.indices(Split::Train), d.indices(Split::Test));
    assert_eq!((train.len(), test.len()), (1100, 1100));
    assert!(train.iter().all(|i| test.binary_search(i).is_err()));
    let mut cells: BTreeMap<(u8, i8), (i64, i64)> = BTreeMap::new();
    for &i in train {
        cells.entry((d.frames()[i].label, d.frames()[i].snr_db)).or_default().0 += 1;
    }
    for &i in test {
        cells.entry((d.frames()[i].label, d.frames()[i].snr_db)).or_default().1 += 1;
    }
    assert_eq!(cells.len(), NUM_CLASSES * SNR_LEVELS.len());
    assert!(cells.values().all(|(a, b)| (a - b).abs() <= 1));
}

#[test]
fn generation_is_deterministic_per_frame() {
    let a = build_dataset(2, 24).unwrap();
    let b = build_dataset(2, 24).unwrap();
    assert_eq!(a, b);
    let c = build_dataset(2, 25).unwrap();
    assert_ne!(a.frames(), c.frames());
    let seed = frame_seed(24, ModulationClass::Gfsk, 6, 1);
    assert_eq!(synthesize_frame(ModulationClass::Gfsk, 6, seed), synthesize_frame(ModulationClass::Gfsk, 6, seed));
}

#[test]
fn file_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    let d = build_dataset(1, 26).unwrap();
    save_dataset(&d, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), d);
    let bytes = std::fs::read(&path).unwrap();
    for cut in [0, 8, bytes.len() / 2, bytes.len() - 1] {
        std::fs::write(&path, &bytes[..cut]).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Format(_))), "cut at {cut}");
    }
    let mut bad = bytes.clone();
    bad[0] ^= 0xFF;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_dataset(&path), Err(Error::Format(_))));
    assert!(matches!(build_dataset(0, 1), Err(Error::Parameter(_))));
}
