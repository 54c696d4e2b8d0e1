use lastlayer::data::{generate, is_linearly_separable, read_csv, write_csv, DatasetSpec, Family, LabeledDataset};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;

fn spec(family: Family, n: usize, seed: u64) -> DatasetSpec {
    DatasetSpec {
        family,
        sample_count: n,
        scale: 100.0,
        class_count: if family == Family::MulticlassBlob { 3 } else { 2 },
        seed,
    }
}

#[test]
fn generation_is_bit_identical_per_seed() {
    for family in Family::ALL {
        let a = generate(&spec(family, 300, 11)).unwrap();
        let b = generate(&spec(family, 300, 11)).unwrap();
        let c = generate(&spec(family, 300, 12)).unwrap();
        assert_eq!(a.len(), 300);
        assert!(a.points().iter().zip(b.points()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(a.labels(), b.labels());
        assert_ne!(a.points(), c.points(), "{family}");
    }
}

#[test]
fn separable_families_pass_fifty_seed_sweep() {
    for family in [Family::Plate, Family::Blob, Family::Sector, Family::MulticlassBlob] {
        for seed in 0..50 {
            let ds = generate(&spec(family, 200, seed)).unwrap();
            assert!(is_linearly_separable(&ds).separable, "{family} seed {seed}");
        }
    }
}

#[test]
fn overlapping_families_are_not_separable() {
    for family in [Family::SectorOverlap, Family::Moon] {
        for seed in 0..10 {
            let ds = generate(&spec(family, 200, seed)).unwrap();
            assert!(!is_linearly_separable(&ds).separable, "{family} seed {seed}");
        }
    }
}

fn nalgebra_sigma_max(m: &Array2<f64>) -> f64 {
    let (r, c) = m.dim();
    let dm = DMatrix::from_fn(r, c, |i, j| m[[i, j]]);
    dm.singular_values().max()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_max_matches_svd(
        d in 1usize..5,
        cells in prop::collection::vec(-50.0f64..50.0, 4..200),
    ) {
        let n = cells.len() / d;
        prop_assume!(n >= 2);
        let pts = Array2::from_shape_vec((d, n), cells[..d * n].to_vec()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % 2).collect();
        let ds = LabeledDataset::new(pts.clone(), labels, 2).unwrap();
        let oracle = nalgebra_sigma_max(&pts);
        prop_assert!((ds.sigma_max() - oracle).abs() <= 1e-8 * oracle.max(1.0));
    }

    #[test]
    fn csv_round_trip_is_exact(
        cells in prop::collection::vec(-1e6f64..1e6, 4..120),
        k in 2usize..5,
    ) {
        let n = cells.len() / 2;
        let pts = Array2::from_shape_vec((2, n), cells[..2 * n].to_vec()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| 1 + i % k).collect();
        prop_assume!(n >= k);
        let ds = LabeledDataset::new(pts, labels, k).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.labels(), ds.labels());
        prop_assert_eq!(back.class_count(), k);
        prop_assert!(back.points().iter().zip(ds.points()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
