//! Property tests for the small algebraic invariants.

use geocloud_core::crpc::CloudPoint;
use geocloud_core::geometry::{xi, ImagePoint, WorldPoint};
use geocloud_core::image::pearson;
use geocloud_core::pipeline::{refine_by_pixel, select_best_spread};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

proptest! {
    #[test]
    fn xi_antisymmetric_in_first_two_args(
        (au, av, bu, bv, cu, cv) in (coord(), coord(), coord(), coord(), coord(), coord())
    ) {
        let a = ImagePoint::new(au, av);
        let b = ImagePoint::new(bu, bv);
        let c = ImagePoint::new(cu, cv);
        let fwd = xi(&a, &b, &c);
        let rev = xi(&b, &a, &c);
        prop_assert!((fwd + rev).abs() <= 1e-9 * (1.0 + fwd.abs()));
    }

    #[test]
    fn xi_invariant_under_common_translation(
        (au, av, bu, bv, cu, cv, du, dv) in
            (coord(), coord(), coord(), coord(), coord(), coord(), coord(), coord())
    ) {
        let a = ImagePoint::new(au, av);
        let b = ImagePoint::new(bu, bv);
        let c = ImagePoint::new(cu, cv);
        let t = |p: &ImagePoint<f64>| ImagePoint::new(p.u + du, p.v + dv);
        let before = xi(&a, &b, &c);
        let after = xi(&t(&a), &t(&b), &t(&c));
        prop_assert!((before - after).abs() <= 1e-7 * (1.0 + before.abs()));
    }

    #[test]
    fn pearson_affine_invariant_with_positive_scale(
        values in prop::collection::vec(-10.0..10.0f64, 4..32),
        scale in 0.01..50.0f64,
        shift in -100.0..100.0f64,
    ) {
        // skip constant vectors; they cannot be normalized
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assume!(values.iter().any(|v| (v - mean).abs() > 1e-6));
        let scaled: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let c = pearson(&values, &scaled).unwrap();
        prop_assert!((c - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pixel_refinement_is_monotone_subset(
        e_ds in prop::collection::vec(0.0..60.0f64, 1..64),
        lo in 0.0..30.0f64,
        hi_extra in 0.0..30.0f64,
    ) {
        let cloud: Vec<CloudPoint<f64>> = e_ds
            .iter()
            .enumerate()
            .map(|(i, &e)| CloudPoint {
                pos: WorldPoint::new(i as f64, 0.0, 0.0),
                e_d: e,
                e_i: 7,
                anchor: (0, 1),
                level: 1,
            })
            .collect();
        let small = refine_by_pixel(&cloud, lo);
        let large = refine_by_pixel(&cloud, lo + hi_extra);
        prop_assert!(small.len() <= large.len());
        for p in &small {
            prop_assert!(p.e_d <= lo);
            prop_assert!(large.iter().any(|q| q.pos == p.pos && q.e_d == p.e_d));
        }
    }

    #[test]
    fn spread_selection_respects_separation(
        coords in prop::collection::vec((coord(), coord(), coord(), 0.0..40.0f64), 1..64),
        delta in 0.1..40.0f64,
    ) {
        let cloud: Vec<CloudPoint<f64>> = coords
            .iter()
            .map(|&(x, y, z, e)| CloudPoint {
                pos: WorldPoint::new(x, y, z),
                e_d: e,
                e_i: 7,
                anchor: (0, 1),
                level: 1,
            })
            .collect();
        let kept = select_best_spread(&cloud, delta);
        prop_assert!(!kept.is_empty());
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                prop_assert!(kept[i].pos.dist(&kept[j].pos) >= delta);
            }
        }
    }
}
