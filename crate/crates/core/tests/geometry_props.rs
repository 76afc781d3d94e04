//! Property tests for box arithmetic: bounds, symmetry, invariances, and a
//! Monte-Carlo IoU oracle that estimates overlap by point sampling.

use fusebox_core::geometry::BBox;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn boxes() -> impl Strategy<Value = BBox> {
    (
        -100.0..100.0f64,
        -100.0..100.0f64,
        0.001..50.0f64,
        0.001..50.0f64,
    )
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn shifted(b: &BBox, dx: f64, dy: f64) -> BBox {
    BBox::new(b.x_min() + dx, b.y_min() + dy, b.x_max() + dx, b.y_max() + dy).unwrap()
}

fn scaled(b: &BBox, s: f64) -> BBox {
    BBox::new(b.x_min() * s, b.y_min() * s, b.x_max() * s, b.y_max() * s).unwrap()
}

proptest! {
    #[test]
    fn iou_and_giou_bounds_and_symmetry(a in boxes(), b in boxes()) {
        let iou = a.iou(&b);
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert_eq!(iou, b.iou(&a));

        let giou = a.giou(&b).unwrap();
        prop_assert!(giou > -1.0);
        prop_assert!(giou <= iou + 1e-12);
        prop_assert_eq!(giou, b.giou(&a).unwrap());

        prop_assert_eq!(a.enclosing(&b), b.enclosing(&a));
    }

    #[test]
    fn giou_equals_iou_when_union_fills_enclosing(a in boxes()) {
        // identical boxes: the union is the enclosing box
        prop_assert_eq!(a.giou(&a).unwrap(), a.iou(&a));
    }

    #[test]
    fn translation_invariance(
        a in boxes(),
        b in boxes(),
        dx in -1e4..1e4f64,
        dy in -1e4..1e4f64,
    ) {
        let (sa, sb) = (shifted(&a, dx, dy), shifted(&b, dx, dy));
        prop_assert!((sa.iou(&sb) - a.iou(&b)).abs() < 1e-9);
        prop_assert!((sa.giou(&sb).unwrap() - a.giou(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance(a in boxes(), b in boxes(), s in 1e-2..1e2f64) {
        let (sa, sb) = (scaled(&a, s), scaled(&b, s));
        prop_assert!((sa.iou(&sb) - a.iou(&b)).abs() < 1e-9);
        prop_assert!((sa.giou(&sb).unwrap() - a.giou(&b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn intersection_is_contained_in_both(a in boxes(), b in boxes()) {
        if let Some(inter) = a.intersection(&b) {
            prop_assert!(inter.x_min() >= a.x_min().max(b.x_min()));
            prop_assert!(inter.x_max() <= a.x_max().min(b.x_max()));
            prop_assert!(inter.area() > 0.0);
            prop_assert!(inter.area() <= a.area().min(b.area()));
        } else {
            prop_assert_eq!(a.iou(&b), 0.0);
        }
    }
}

/// Estimates IoU by sampling points uniformly in the enclosing box and
/// counting membership; checks the implementation within three standard
/// errors of the binomial estimate.
#[test]
fn monte_carlo_iou_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0_c0de);
    let samples = 40_000usize;
    for _ in 0..25 {
        let a = random_box(&mut rng);
        // keep b near a so the pair usually overlaps
        let b = {
            let dx: f64 = rng.random_range(-10.0..10.0);
            let dy: f64 = rng.random_range(-10.0..10.0);
            let w: f64 = rng.random_range(1.0..25.0);
            let h: f64 = rng.random_range(1.0..25.0);
            BBox::new(a.x_min() + dx, a.y_min() + dy, a.x_min() + dx + w, a.y_min() + dy + h)
                .unwrap()
        };
        let iou = a.iou(&b);

        let enc = a.enclosing(&b);
        let mut in_both = 0u64;
        let mut in_either = 0u64;
        for _ in 0..samples {
            let x = rng.random_range(enc.x_min()..enc.x_max());
            let y = rng.random_range(enc.y_min()..enc.y_max());
            let pa = a.contains(x, y);
            let pb = b.contains(x, y);
            if pa || pb {
                in_either += 1;
            }
            if pa && pb {
                in_both += 1;
            }
        }
        assert!(in_either > 0, "enclosing box sampling must hit the union");
        let estimate = in_both as f64 / in_either as f64;
        // conditioned on landing in the union, hits on the intersection are
        // Binomial(in_either, iou)
        let se = (iou * (1.0 - iou) / in_either as f64).sqrt();
        assert!(
            (estimate - iou).abs() <= 3.0 * se + 1e-9,
            "MC estimate {estimate} vs IoU {iou} (se {se})"
        );
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let x: f64 = rng.random_range(-50.0..50.0);
    let y: f64 = rng.random_range(-50.0..50.0);
    let w: f64 = rng.random_range(1.0..25.0);
    let h: f64 = rng.random_range(1.0..25.0);
    BBox::new(x, y, x + w, y + h).unwrap()
}
