use caise_core::edit::{self, color_rgb, CutoutError};
use caise_core::{ColorName, Exec, Intensity, RasterImage};
use proptest::prelude::*;

fn image() -> impl Strategy<Value = RasterImage> {
    (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(any::<u8>(), w * h * 3).prop_map(move |px| RasterImage::new(w, h, px).unwrap())
    })
}

fn one(rgb: [u8; 3]) -> RasterImage {
    RasterImage::filled(1, 1, rgb).unwrap()
}

fn half_away(v: f64) -> f64 {
    v.signum() * (v.abs() + 0.5).floor()
}

proptest! {
    #[test]
    fn zero_arguments_are_identities(img in image()) {
        prop_assert_eq!(&edit::adjust_brightness(&img, 0), &img);
        prop_assert_eq!(&edit::adjust_contrast(&img, 0), &img);
        for c in ColorName::ALL {
            prop_assert_eq!(&edit::adjust_color(&img, c, Intensity::from_millis(0).unwrap()), &img);
        }
        prop_assert_eq!(&edit::rotate(&img, 0), &img);
        prop_assert_eq!(&edit::rotate(&img, 360), &img);
    }

    #[test]
    fn right_angles_are_permutations(img in image()) {
        let mut r = img.clone();
        for _ in 0..4 {
            r = edit::rotate(&r, 90);
        }
        prop_assert_eq!(&r, &img);
        let half = edit::rotate(&img, 180);
        prop_assert_eq!(&edit::rotate(&half, 180), &img);
        for deg in [90, 180, 270] {
            let out = edit::rotate(&img, deg);
            let mut a = out.pixels().chunks(3).map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>();
            let mut b = img.pixels().chunks(3).map(|p| [p[0], p[1], p[2]]).collect::<Vec<_>>();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn rotate_90_maps_coordinates(img in image()) {
        let out = edit::rotate(&img, 90);
        prop_assert_eq!((out.width(), out.height()), (img.height(), img.width()));
        for y in 0..img.height() {
            for x in 0..img.width() {
                prop_assert_eq!(out.get(y, img.width() - 1 - x), img.get(x, y));
            }
        }
    }

    #[test]
    fn full_intensity_is_uniform(img in image(), c in 0..9usize) {
        let color = ColorName::ALL[c];
        let out = edit::adjust_color(&img, color, Intensity::from_millis(1000).unwrap());
        prop_assert!(out.pixels().chunks(3).all(|p| p == color_rgb(color)));
    }

    #[test]
    fn brightness_is_monotone(v in 0u8..=255, a in -100i32..=100, b in -100i32..=100) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p = one([v, v, v]);
        prop_assert!(edit::adjust_brightness(&p, lo).get(0, 0)[0] <= edit::adjust_brightness(&p, hi).get(0, 0)[0]);
    }

    #[test]
    fn color_moves_toward_target(v in 0u8..=255, a in 0u16..=1000, b in 0u16..=1000, c in 0..9usize) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let color = ColorName::ALL[c];
        let p = one([v, v, v]);
        let t = color_rgb(color);
        let x = edit::adjust_color(&p, color, Intensity::from_millis(lo).unwrap()).get(0, 0);
        let y = edit::adjust_color(&p, color, Intensity::from_millis(hi).unwrap()).get(0, 0);
        for ch in 0..3 {
            prop_assert!((y[ch] as i32 - t[ch] as i32).abs() <= (x[ch] as i32 - t[ch] as i32).abs());
        }
    }

    #[test]
    fn formulas_match_reference(v in 0u8..=255, b in -100i32..=100, k in 0i32..=100) {
        let p = one([v, v, v]);
        let bright = half_away(v as f64 * (1.0 + b as f64 / 100.0)).clamp(0.0, 255.0) as u8;
        prop_assert_eq!(edit::adjust_brightness(&p, b).get(0, 0)[0], bright);
        let contrast = half_away((v as f64 - 128.0) * (1.0 + k as f64 / 100.0) + 128.0).clamp(0.0, 255.0) as u8;
        prop_assert_eq!(edit::adjust_contrast(&p, k).get(0, 0)[0], contrast);
    }

    #[test]
    fn sequential_and_parallel_agree(img in image(), deg in 0i32..=360, b in -100i32..=100) {
        prop_assert_eq!(edit::rotate_with(&img, deg, Exec::Sequential), edit::rotate_with(&img, deg, Exec::Parallel));
        prop_assert_eq!(edit::adjust_brightness_with(&img, b, Exec::Sequential), edit::adjust_brightness_with(&img, b, Exec::Parallel));
    }

    #[test]
    fn cutout_keeps_or_blacks_out(img in image()) {
        if let Ok(out) = edit::image_cutout(&img) {
            for (o, i) in out.pixels().chunks(3).zip(img.pixels().chunks(3)) {
                prop_assert!(o == [0, 0, 0] || o == i);
            }
        }
    }
}

#[test]
fn twenty_pixel_vectors() {
    let b = |v, amt| edit::adjust_brightness(&one([v, v, v]), amt).get(0, 0)[0];
    let k = |v, amt| edit::adjust_contrast(&one([v, v, v]), amt).get(0, 0)[0];
    let c = |rgb, color, m| edit::adjust_color(&one(rgb), color, Intensity::from_millis(m).unwrap()).get(0, 0);
    assert_eq!(c([100, 100, 100], ColorName::Blue, 500), [50, 50, 178]);
    assert_eq!(c([0, 0, 0], ColorName::Red, 500), [128, 0, 0]);
    assert_eq!(c([255, 255, 255], ColorName::Green, 250), [191, 223, 191]);
    assert_eq!(c([10, 20, 30], ColorName::Orange, 100), [35, 35, 27]);
    assert_eq!(c([200, 100, 50], ColorName::SkyBlue, 1000), [135, 206, 235]);
    assert_eq!(c([0, 0, 0], ColorName::Pink, 200), [51, 38, 41]);
    assert_eq!(b(100, 40), 140);
    assert_eq!(b(200, 100), 255);
    assert_eq!(b(100, -30), 70);
    assert_eq!(b(255, -100), 0);
    assert_eq!(b(5, 10), 6);
    assert_eq!(b(15, 10), 17);
    assert_eq!(b(25, -50), 13);
    assert_eq!(k(128, 77), 128);
    assert_eq!(k(228, 50), 255);
    assert_eq!(k(28, 50), 0);
    assert_eq!(k(138, 50), 143);
    assert_eq!(k(129, 50), 130);
    assert_eq!(k(127, 50), 127);
    assert_eq!(k(100, 100), 72);
}

fn white_with(squares: &[(usize, usize, usize)]) -> RasterImage {
    let mut img = RasterImage::filled(40, 40, [255, 255, 255]).unwrap();
    for &(x, y, s) in squares {
        img.fill_rect(x, y, x + s, y + s, [255, 0, 0]);
    }
    img
}

#[test]
fn cutout_fixtures() {
    // 20x20 of 40x40 is 25%.
    let img = white_with(&[(10, 10, 20)]);
    let out = edit::image_cutout(&img).unwrap();
    for y in 0..40 {
        for x in 0..40 {
            let inside = (10..30).contains(&x) && (10..30).contains(&y);
            assert_eq!(out.get(x, y), if inside { [255, 0, 0] } else { [0, 0, 0] });
        }
    }
    assert!(matches!(
        edit::image_cutout(&RasterImage::filled(30, 30, [90, 90, 90]).unwrap()),
        Err(CutoutError::CoverageOutOfBand { .. })
    ));
    // 18x18 = 324 (20.25%) and 9x9 = 81 (5.06%) of 1600.
    let img = white_with(&[(2, 2, 18), (28, 28, 9)]);
    let out = edit::image_cutout(&img).unwrap();
    assert_eq!(out.get(10, 10), [255, 0, 0]);
    assert_eq!(out.get(30, 30), [0, 0, 0]);
    let kept = out.pixels().chunks(3).filter(|p| *p != [0, 0, 0]).count();
    assert_eq!(kept, 18 * 18);
}
