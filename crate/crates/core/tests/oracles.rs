mod common;

use canthi::cascade::{load_cascade_file, CascadeModel, ScaledCascade, WindowScanner};
use canthi::clahe::{clahe, tile_mappings, ClaheParams};
use canthi::eval::{synth_eye, synth_face, SynthEyeParams, SynthFaceParams};
use canthi::harris::{harris_field, ssd_score, CircularWindow, CornerCandidate};
use canthi::image::{draw_annotations, sobel, GradientField, IntegralImage};
use canthi::prune::prune;
use canthi::sclera::{
    dilate, erode, largest_component, morph_open, segment_sclera, EyeImage, ScleraMode, StructuringElement, Threshold,
};
use canthi::{AnyImage, EyeSide, GrayImage, Pipeline, PipelineConfig, Rect, RgbImage};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rect(rng: &mut impl Rng, w: usize, h: usize) -> Rect {
    let x = rng.random_range(0..w);
    let y = rng.random_range(0..h);
    Rect::new(x, y, rng.random_range(1..=w - x), rng.random_range(1..=h - y))
}

#[test]
fn integral_sums_match_naive_loops() {
    let mut r = rng(1);
    for _ in 0..100 {
        let img = noise_image(&mut r, 8, 8);
        let ii = IntegralImage::new(&img);
        for _ in 0..100 {
            let rc = random_rect(&mut r, 8, 8);
            assert_eq!(ii.rect_sum(rc), naive_box(&img, rc.x, rc.y, rc.w, rc.h), "{rc:?}");
        }
    }
}

#[test]
fn crop_matches_copy() {
    let mut r = rng(2);
    for _ in 0..50 {
        let (w, h) = (r.random_range(1..40), r.random_range(1..40));
        let gray = noise_image(&mut r, w, h);
        let rgb = RgbImage::from_fn(w, h, |_, _| r.random());
        let rc = random_rect(&mut r, w, h);
        let gc = gray.crop(rc).unwrap();
        let cc = rgb.crop(rc).unwrap();
        assert_eq!(gc.dimensions(), (rc.w, rc.h));
        for j in 0..rc.h {
            for i in 0..rc.w {
                assert_eq!(gc.get(i, j), gray.get(rc.x + i, rc.y + j));
                assert_eq!(cc.get(i, j), rgb.get(rc.x + i, rc.y + j));
            }
        }
    }
}

#[test]
fn two_rects_change_exactly_their_perimeters() {
    let img = RgbImage::filled(40, 30, [10, 20, 30]);
    let rects = [Rect::new(2, 3, 10, 7), Rect::new(20, 12, 15, 15)];
    let out = draw_annotations(&img, &rects, &[]).unwrap();
    let on_perimeter = |r: &Rect, x: usize, y: usize| {
        r.contains(x, y) && (x == r.x || y == r.y || x == r.right() - 1 || y == r.bottom() - 1)
    };
    let mut changed = 0;
    for y in 0..30 {
        for x in 0..40 {
            let expect = rects.iter().any(|r| on_perimeter(r, x, y));
            assert_eq!(out.get(x, y) != img.get(x, y), expect, "({x}, {y})");
            changed += expect as usize;
        }
    }
    assert_eq!(changed, 2 * (10 + 7) - 4 + 2 * (15 + 15) - 4);
}

#[test]
fn sobel_is_translation_equivariant_on_interiors() {
    let mut r = rng(3);
    let img = noise_image(&mut r, 30, 30);
    let (dx, dy) = (3, 5);
    let shifted = GrayImage::from_fn(30, 30, |x, y| img.get_clamped(x as isize - dx, y as isize - dy));
    let (a, b) = (sobel(&img).unwrap(), sobel(&shifted).unwrap());
    for y in 1..29 - dy as usize {
        for x in 1..29 - dx as usize {
            assert_eq!(a.at(x, y), b.at(x + dx as usize, y + dy as usize));
        }
    }
}

#[test]
fn clahe_unclipped_matches_reference_equalization() {
    let mut r = rng(4);
    for clip in [64.0, 1e6] {
        for _ in 0..50 {
            let img = noise_image(&mut r, 16, 16);
            let p = ClaheParams {
                tiles_x: 2,
                tiles_y: 2,
                clip_limit: clip,
            };
            assert_eq!(clahe(&img, &p).unwrap(), ahe_reference(&img, 2, 2), "clip {clip}");
        }
    }
    // clustered histograms need the large clip to stay unclipped
    for _ in 0..50 {
        let img = textured_image(&mut r, 16, 16);
        let p = ClaheParams {
            tiles_x: 2,
            tiles_y: 2,
            clip_limit: 1e6,
        };
        assert_eq!(clahe(&img, &p).unwrap(), ahe_reference(&img, 2, 2));
    }
}

#[test]
fn clahe_reference_on_uneven_tiles() {
    let mut r = rng(5);
    for (w, h, tx, ty) in [(17, 13, 3, 2), (40, 9, 5, 1), (8, 8, 1, 1)] {
        let img = textured_image(&mut r, w, h);
        let p = ClaheParams {
            tiles_x: tx,
            tiles_y: ty,
            clip_limit: 1e6,
        };
        assert_eq!(
            clahe(&img, &p).unwrap(),
            ahe_reference(&img, tx, ty),
            "{w}x{h} {tx}x{ty}"
        );
    }
}

#[test]
fn unit_clip_is_identity() {
    let mut r = rng(6);
    let p = ClaheParams {
        tiles_x: 1,
        tiles_y: 1,
        clip_limit: 1.0,
    };
    for _ in 0..50 {
        let img = textured_image(&mut r, 8, 8);
        let maps = tile_mappings(&img, &p).unwrap();
        assert!((0..=255u8).all(|v| maps[0].map(v) == v));
        assert_eq!(clahe(&img, &p).unwrap(), img);
    }
}

fn model(name: &str) -> CascadeModel {
    load_cascade_file(models_dir().join(name)).unwrap()
}

#[test]
fn published_models_parse_with_documented_shapes() {
    let face = model("haarcascade_frontalface_default.xml");
    assert_eq!((face.window_w, face.window_h, face.stages.len()), (24, 24, 25));
    assert_eq!(face.weak_count(), 2913);
    let alt = model("haarcascade_frontalface_alt.xml");
    assert_eq!((alt.window_w, alt.window_h, alt.stages.len()), (20, 20, 22));
    assert_eq!(alt.weak_count(), 2135);
    let eye = model("haarcascade_eye.xml");
    assert_eq!((eye.window_w, eye.window_h, eye.stages.len()), (20, 20, 24));
    assert_eq!(eye.weak_count(), 1066);
}

/// Checks the staged decision against the per-pixel oracle through both
/// table widths, at windows chosen by `place(rng, scaled)`. Returns how many
/// windows passed.
fn check_windows_at<R: Rng>(
    model: &CascadeModel,
    img: &GrayImage,
    scales: (f64, f64),
    n: usize,
    r: &mut R,
    mut place: impl FnMut(&mut R, &ScaledCascade) -> (usize, usize),
) -> usize {
    let sum = IntegralImage::new(img);
    let sq = IntegralImage::squared(img);
    let narrow: Vec<u32> = sum.as_raw().iter().map(|&v| v as u32).collect();
    let mut passed = 0;
    for _ in 0..n {
        let sc = ScaledCascade::new(model, r.random_range(scales.0..=scales.1));
        let (x, y) = place(r, &sc);
        let expect = naive_passes(&sc, img, x, y);
        assert_eq!(sc.passes(&sum, &sq, x, y), expect, "scale {} at ({x}, {y})", sc.scale);
        let scanner = WindowScanner::with_tables(&sc, &narrow, sq.as_raw(), sum.stride());
        assert_eq!(scanner.passes(x, y), expect);
        passed += expect as usize;
    }
    passed
}

fn check_windows(model: &CascadeModel, img: &GrayImage, scales: (f64, f64), n: usize, r: &mut impl Rng) -> usize {
    let (w, h) = img.dimensions();
    check_windows_at(model, img, scales, n, r, |r, sc| {
        (r.random_range(0..=w - sc.window_w), r.random_range(0..=h - sc.window_h))
    })
}

#[test]
fn staged_evaluation_matches_pixel_sums_on_noise() {
    let mut r = rng(7);
    let face = model("haarcascade_frontalface_default.xml");
    let eye = model("haarcascade_eye.xml");
    for _ in 0..4 {
        let img = noise_image(&mut r, 120, 100);
        check_windows(&face, &img, (1.0, 3.5), 50, &mut r);
        check_windows(&eye, &img, (1.0, 4.0), 50, &mut r);
    }
}

#[test]
fn staged_evaluation_matches_pixel_sums_near_faces() {
    let (rgb, ann) = synth_face(&SynthFaceParams::default(), 11).unwrap();
    let enhanced = clahe(&canthi::image::to_grayscale(&rgb), &ClaheParams::default()).unwrap();
    let face = model("haarcascade_frontalface_default.xml");
    let f = ann.face.unwrap();
    let (cx, cy) = (f.x + f.w / 2, f.y + f.h / 2);
    let mut r = rng(8);
    // windows jittered around the face centre reach the late stages
    let passed = check_windows_at(&face, &enhanced, (9.0, 12.0), 200, &mut r, |r, sc| {
        let x = cx - sc.window_w / 2 + r.random_range(0..=16) - 8;
        let y = cy - sc.window_h / 2 + r.random_range(0..=16) - 8;
        (x, y)
    });
    assert!(passed > 0);
}

#[test]
fn staged_evaluation_matches_pixel_sums_on_random_cascades() {
    let mut r = rng(9);
    let (mut passed, mut total) = (0, 0);
    for round in 0..40 {
        let window = (r.random_range(6..25), r.random_range(6..25));
        let m = random_cascade(&mut r, window, round % 2 == 0);
        let img = textured_image(&mut r, 80, 70);
        passed += check_windows(&m, &img, (1.0, 2.8), 50, &mut r);
        total += 50;
    }
    // both outcomes must be exercised for the comparison to mean anything
    assert!(passed > total / 20 && passed < total - total / 20, "{passed}/{total}");
}

/// Square eye box centred between the canthi, its side the canthus distance
/// grown by the metric's margin on both ends.
fn planted_eye_box(t: &canthi::eval::CornerPair) -> Rect {
    let (cx, cy) = ((t.nasal[0] + t.temporal[0]) / 2.0, (t.nasal[1] + t.temporal[1]) / 2.0);
    let d = ((t.nasal[0] - t.temporal[0]).powi(2) + (t.nasal[1] - t.temporal[1]).powi(2)).sqrt();
    let side = d * (1.0 + 2.0 * canthi::eval::metric::EYE_BOX_MARGIN);
    Rect::new(
        (cx - side / 2.0).round() as usize,
        (cy - side / 2.0).round() as usize,
        side.round() as usize,
        side.round() as usize,
    )
}

#[test]
fn synthetic_face_eyes_are_found_at_planted_boxes() {
    let config = PipelineConfig {
        face_model: Some(models_dir().join("haarcascade_frontalface_default.xml")),
        eye_model: Some(models_dir().join("haarcascade_eye.xml")),
        ..Default::default()
    };
    let pipeline = Pipeline::new(config).unwrap();
    for seed in [1, 2, 3, 42] {
        let (rgb, ann) = synth_face(&SynthFaceParams::default(), seed).unwrap();
        let res = pipeline.process_frame(&AnyImage::Rgb(rgb)).unwrap();
        let face = res.face.expect("face found");
        assert!(face.iou(&ann.face.unwrap()) > 0.5, "seed {seed}: {face:?}");
        for truth in &ann.eyes {
            let found = res
                .eyes
                .iter()
                .find(|e| e.side == truth.side)
                .unwrap_or_else(|| panic!("seed {seed}: no {:?} eye in {:?}", truth.side, res.failures));
            let planted = planted_eye_box(&truth.corners);
            let iou = found.rect.iou(&planted);
            assert!(
                iou >= 0.5,
                "seed {seed} {:?}: {:?} vs {planted:?} (IoU {iou:.3})",
                truth.side,
                found.rect
            );
        }
    }
}

#[test]
fn sclera_mask_overlaps_generator_truth() {
    let p = SynthEyeParams::default();
    let (a, up, down) = (
        p.axes[0],
        p.axes[1] * p.aperture,
        p.axes[1] * p.aperture * p.lower_lid_ratio,
    );
    let truth = canthi::sclera::BinaryMask::from_fn(p.width, p.height, |x, y| {
        let (u, v) = (x as f64 - p.center[0], y as f64 - p.center[1]);
        let t = u / a;
        let bulge = 1.0 - t * t;
        let (du, dv) = (u - p.iris_offset[0], v - p.iris_offset[1]);
        t.abs() <= 1.0 && v >= -up * bulge && v <= down * bulge && du * du + dv * dv > p.iris_radius * p.iris_radius
    });
    for seed in 0..10 {
        let (img, _) = synth_eye(&p, seed).unwrap();
        let mask = segment_sclera(EyeImage::Rgb(&img), ScleraMode::Color, Threshold::Auto).unwrap();
        let inter = (0..p.height)
            .flat_map(|y| (0..p.width).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y) && truth.get(x, y))
            .count();
        let iou = inter as f64 / (mask.count() + truth.count() - inter) as f64;
        assert!(iou >= 0.8, "seed {seed}: IoU {iou:.3}");
    }
}

fn random_mask(r: &mut impl Rng, w: usize, h: usize) -> canthi::sclera::BinaryMask {
    let density: f64 = r.random_range(0.2..0.8);
    canthi::sclera::BinaryMask::from_fn(w, h, |_, _| r.random_bool(density))
}

#[test]
fn morphology_matches_set_operations() {
    let mut r = rng(10);
    for _ in 0..200 {
        let m = random_mask(&mut r, 32, 32);
        let se = StructuringElement::ellipse(r.random_range(1..=4), r.random_range(1..=3)).unwrap();
        let e = erode(&m, &se);
        assert_eq!(e, erode_sets(&m, &se));
        assert_eq!(dilate(&m, &se), dilate_sets(&m, &se));
        assert_eq!(morph_open(&m, &se), dilate_sets(&erode_sets(&m, &se), &se));
    }
}

#[test]
fn largest_component_matches_flood_fill() {
    let mut r = rng(11);
    for _ in 0..300 {
        let (w, h) = (r.random_range(1..30), r.random_range(1..30));
        let m = random_mask(&mut r, w, h);
        assert_eq!(largest_component(&m), largest_by_flood(&m));
    }
}

#[test]
fn harris_field_matches_direct_sums() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = 16 * 16;
        let ix: Vec<i32> = (0..n).map(|_| r.random_range(-2040..=2040)).collect();
        let iy: Vec<i32> = (0..n).map(|_| r.random_range(-2040..=2040)).collect();
        let g = GradientField::from_parts(16, 16, ix, iy).unwrap();
        let field = harris_field(&g, &CircularWindow::gaussian(3));
        assert_eq!(field.data, naive_harris(&g, 3));
    }
}

#[test]
fn isotropic_response_is_084_m_squared() {
    let m = 37.5;
    let h = canthi::harris::Sym2 { a: m, b: 0.0, c: m };
    let r = h.det() - 0.04 * h.trace() * h.trace();
    assert!((r - 0.84 * m * m).abs() < 1e-9 * m * m);
}

#[test]
fn ssd_matches_quadratic_form_on_smooth_patch() {
    let mut r = rng(13);
    let img = quadratic_patch(&mut r, 25);
    let w = CircularWindow::gaussian(3);
    let field = harris_field(&sobel(&img).unwrap(), &w);
    let h = field.at(12, 12).scaled(1.0 / 64.0);
    let s = ssd_score(&img, 12, 12, 1, 0, &w).unwrap();
    let q = h.quadratic_form(1.0, 0.0);
    assert!((s - q).abs() / s.max(1.0) <= 0.1, "S {s} vs {q}");
}

#[test]
fn rectangle_outline_corners_are_top_candidates() {
    assert!(rectangle_corners_recovered(10, 8, 30, 20, 60, 40));
    let mut r = rng(14);
    for _ in 0..20 {
        let (rw, rh) = (r.random_range(12..40), r.random_range(10..25));
        let (x0, y0) = (r.random_range(4..56 - rw), r.random_range(4..36 - rh));
        assert!(
            rectangle_corners_recovered(x0, y0, rw, rh, 60, 40),
            "{x0},{y0} {rw}x{rh}"
        );
    }
}

fn cand(x: usize, y: usize) -> CornerCandidate {
    CornerCandidate { x, y, response: 1.0 }
}

#[test]
fn farthest_pair_matches_exhaustive_search() {
    let mut r = rng(15);
    let frame = Rect::new(0, 0, 10_001, 10_001);
    for _ in 0..1000 {
        let n = r.random_range(1..=50);
        let hi = if r.random_bool(0.5) { 10_000 } else { 12 };
        let cands: Vec<_> = (0..n)
            .map(|_| cand(r.random_range(0..=hi), r.random_range(0..=hi)))
            .collect();
        let side = if r.random_bool(0.5) {
            EyeSide::Left
        } else {
            EyeSide::Right
        };
        let got = prune(&cands, side, frame).unwrap();
        let (t, nasal) = farthest_pair_oracle(&cands, side);
        assert_eq!((got.temporal, got.nasal), (t, nasal), "{cands:?} {side:?}");
    }
}

#[test]
fn constructed_ties_match_exhaustive_search() {
    let mut r = rng(16);
    let mut cases = 0;
    for &d2 in &[25i64, 50, 65, 85, 125, 169, 325] {
        let circle = lattice_circle(d2);
        for _ in 0..6 {
            let (ox, oy) = (r.random_range(20..200), r.random_range(20..200));
            // a random subset of antipodal pairs keeps the diameter tied
            let mut pts: Vec<(i64, i64)> = circle
                .iter()
                .filter(|p| (p.0, p.1) > (0, 0) || (p.0 == 0 && p.1 > 0))
                .filter(|_| r.random_bool(0.6))
                .flat_map(|&(x, y)| [(x, y), (-x, -y)])
                .collect();
            if pts.len() < 4 {
                continue;
            }
            pts.push((0, 0));
            let cands: Vec<_> = pts
                .iter()
                .map(|&(x, y)| cand((ox + x) as usize, (oy + y) as usize))
                .collect();
            for side in [EyeSide::Left, EyeSide::Right] {
                let got = prune(&cands, side, Rect::new(0, 0, 400, 400)).unwrap();
                assert_eq!((got.temporal, got.nasal), farthest_pair_oracle(&cands, side), "{pts:?}");
            }
            cases += 1;
        }
    }
    assert!(cases >= 20, "{cases}");
}
