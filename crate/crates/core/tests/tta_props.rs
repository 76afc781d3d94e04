//! Round-trip and photometric properties of the TTA transforms.

use fusebox_core::geometry::BBox;
use fusebox_core::tta::{
    adjust_hsv, forward_box, hsv_to_rgb, inverse_box, read_png, resize_image, rgb_to_hsv,
    write_png, RasterImage, TransformSpec,
};
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn boxes() -> impl Strategy<Value = BBox> {
    (
        -500.0..500.0f64,
        -500.0..500.0f64,
        0.0..300.0f64,
        0.0..300.0f64,
    )
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

fn geometric_specs() -> impl Strategy<Value = TransformSpec> {
    (0.1..10.0f64, 0.1..10.0f64).prop_map(|(scale_x, scale_y)| TransformSpec {
        scale_x,
        scale_y,
        ..TransformSpec::identity()
    })
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn forward_and_inverse_are_mutual_inverses(b in boxes(), spec in geometric_specs()) {
        let there = inverse_box(&forward_box(&b, &spec), &spec);
        prop_assert!(rel_close(there.x_min(), b.x_min()));
        prop_assert!(rel_close(there.y_min(), b.y_min()));
        prop_assert!(rel_close(there.x_max(), b.x_max()));
        prop_assert!(rel_close(there.y_max(), b.y_max()));

        let back = forward_box(&inverse_box(&b, &spec), &spec);
        prop_assert!(rel_close(back.x_min(), b.x_min()));
        prop_assert!(rel_close(back.y_max(), b.y_max()));
    }

    #[test]
    fn forward_preserves_validity(b in boxes(), spec in geometric_specs()) {
        let f = forward_box(&b, &spec);
        prop_assert!(f.x_min() <= f.x_max() && f.y_min() <= f.y_max());
        prop_assert!(f.x_min().is_finite() && f.y_max().is_finite());
    }

    #[test]
    fn uniform_scaling_leaves_overlap_metrics_unchanged(
        a in boxes(),
        b in boxes(),
        s in 0.1..10.0f64,
    ) {
        let spec = TransformSpec { scale_x: s, scale_y: s, ..TransformSpec::identity() };
        let (fa, fb) = (forward_box(&a, &spec), forward_box(&b, &spec));
        prop_assert!((fa.iou(&fb) - a.iou(&b)).abs() < 1e-9);
        if !(a.is_degenerate() && b.is_degenerate()) {
            prop_assert!((fa.giou(&fb).unwrap() - a.giou(&b).unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn hsv_round_trip_is_within_one_level_per_channel() {
    // deterministic stride over the RGB cube, > 1e6 samples
    let mut worst = 0i32;
    for r in (0..256u16).step_by(2) {
        for g in (0..256u16).step_by(2) {
            for b in (0..256u16).step_by(2) {
                let rgb = [r as u8, g as u8, b as u8];
                let (h, s, v) = rgb_to_hsv(rgb);
                let back = hsv_to_rgb(h, s, v);
                for ch in 0..3 {
                    worst = worst.max((i32::from(back[ch]) - i32::from(rgb[ch])).abs());
                }
            }
        }
    }
    assert!(worst <= 1, "worst channel error {worst}");
}

#[test]
fn hsv_round_trip_exact_on_boundary_values() {
    for &value in &[0u8, 1, 127, 128, 254, 255] {
        for rgb in [
            [value, 0, 0],
            [0, value, 0],
            [value, value, value],
            [255, value, 0],
            [value, 255, 255],
        ] {
            let (h, s, v) = rgb_to_hsv(rgb);
            assert_eq!(hsv_to_rgb(h, s, v), rgb);
        }
    }
}

fn random_image(rng: &mut ChaCha8Rng, width: u32, height: u32) -> RasterImage {
    let pixels: Vec<u8> = (0..width as usize * height as usize * 3)
        .map(|_| rng.random())
        .collect();
    RasterImage::new(width, height, pixels).unwrap()
}

#[test]
fn adjust_identity_is_bit_exact_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let img = random_image(&mut rng, 31, 17);
        assert_eq!(adjust_hsv(&img, &TransformSpec::identity()), img);
    }
}

#[test]
fn resize_constant_images_stay_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let color: [u8; 3] = [rng.random(), rng.random(), rng.random()];
        let w = rng.random_range(1..20u32);
        let h = rng.random_range(1..20u32);
        let img = RasterImage::new(w, h, color.repeat((w * h) as usize)).unwrap();
        let spec = TransformSpec {
            scale_x: rng.random_range(0.3..4.0),
            scale_y: rng.random_range(0.3..4.0),
            ..TransformSpec::identity()
        };
        match resize_image(&img, &spec) {
            Ok(out) => {
                for px in out.pixels().chunks_exact(3) {
                    assert_eq!(px, color);
                }
            }
            Err(_) => {
                // tiny image scaled far down can legitimately round to zero
                assert!((f64::from(w) * spec.scale_x).round() < 1.0
                    || (f64::from(h) * spec.scale_y).round() < 1.0);
            }
        }
    }
}

#[test]
fn png_round_trip_preserves_the_raster_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let img = random_image(&mut rng, 64, 41);
    let path = dir.path().join("raster.png");
    write_png(&path, &img).unwrap();
    let back = read_png(&path).unwrap();
    assert_eq!(back, img);
}
