use std::path::PathBuf;

use probattn::playground::{
    evaluate_curve, extract_features, generate_dataset, init_session, iou, simulate_annotator, write_dataset,
    AnnotatorAction, BBox, ClickEvent, FeatureConfig, ImageTensor, Mask, Polarity, SegmentationSession,
    SessionConfig, SessionPrior, SessionSnapshot,
};
use probattn::AdaptationConfig;
use serde::{Deserialize, Serialize};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// Compares `value` with the stored golden file; `PROBATTN_BLESS=1` rewrites it.
fn golden<T: Serialize + for<'de> Deserialize<'de> + PartialEq + std::fmt::Debug>(name: &str, value: &T) {
    let path = fixture_dir().join(name);
    if std::env::var_os("PROBATTN_BLESS").is_some() {
        std::fs::create_dir_all(fixture_dir()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(value).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {name}; run with PROBATTN_BLESS=1"));
    let stored: T = serde_json::from_str(&text).unwrap();
    assert_eq!(&stored, value, "golden {name} differs");
}

fn fixture() -> (ImageTensor, Mask, BBox) {
    let dir = fixture_dir();
    let image = ImageTensor::open(dir.join("scene.png")).unwrap();
    let gt = Mask::open(dir.join("scene_mask.png")).unwrap();
    let bbox = BBox::around(&gt).unwrap();
    (image, gt, bbox)
}

/// Red background with a blue square at rows and columns 8..20.
fn two_color() -> (ImageTensor, Mask) {
    let mut img = ImageTensor::filled(28, 28, [200, 40, 40]).unwrap();
    let mut gt = Mask::empty(28, 28);
    for r in 8..20 {
        for c in 8..20 {
            img.set(r, c, [30, 60, 210]);
            gt.set(r, c, true);
        }
    }
    (img, gt)
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn state(s: &SegmentationSession) -> (Vec<u64>, Vec<bool>, Vec<u64>) {
    (bits(s.readout()), s.predict_mask().data().to_vec(), bits(s.model().value_means().as_slice()))
}

#[test]
fn fixture_scene_is_stable() {
    let dir = fixture_dir();
    if std::env::var_os("PROBATTN_BLESS").is_some() {
        let item = generate_dataset(1, 40, 7).unwrap().remove(0);
        std::fs::create_dir_all(&dir).unwrap();
        item.image.save_png(dir.join("scene.png")).unwrap();
        item.gt.save_png(dir.join("scene_mask.png")).unwrap();
    }
    let (image, gt, bbox) = fixture();
    assert_eq!((image.height(), image.width()), (40, 40));
    assert!(gt.count() > 0 && bbox.check_within(40, 40).is_ok());
}

#[test]
fn features_match_golden() {
    let (image, _, _) = fixture();
    let f = extract_features(&image, &FeatureConfig::default()).unwrap();
    golden("features.json", &f);
    let again = extract_features(&image, &FeatureConfig::default()).unwrap();
    assert_eq!(bits(f.as_slice()), bits(again.as_slice()));
}

#[test]
fn identical_pixels_share_features_without_coordinates() {
    let mut img = ImageTensor::filled(10, 10, [90, 90, 90]).unwrap();
    img.set(5, 5, [250, 0, 0]);
    let cfg = FeatureConfig {
        coord_scale: 0.0,
        smoothing_radius: 0,
        ..FeatureConfig::default()
    };
    let f = extract_features(&img, &cfg).unwrap();
    assert_eq!(f.row(0), f.row(99));
    assert_ne!(f.row(0), f.row(55));
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct SessionGolden {
    initial_mask: Vec<Vec<u32>>,
    clicks: Vec<ClickEvent>,
    readout: Vec<f64>,
    mask: Vec<Vec<u32>>,
    iou: Vec<f64>,
}

#[test]
fn session_matches_golden() {
    let (image, gt, bbox) = fixture();
    let mut s = init_session(&image, Some(&gt), Some(bbox), &SessionConfig::default()).unwrap();
    let initial_mask = s.predict_mask().to_rle();
    let mut clicks = Vec::new();
    for _ in 0..3 {
        match simulate_annotator(s.predict_mask(), &gt, 3).unwrap() {
            AnnotatorAction::Click(c) => {
                s.apply_click(c).unwrap();
                clicks.push(c);
            }
            AnnotatorAction::Done => break,
        }
    }
    golden(
        "session.json",
        &SessionGolden {
            initial_mask,
            clicks,
            readout: s.readout().to_vec(),
            mask: s.predict_mask().to_rle(),
            iou: s.iou_history().to_vec(),
        },
    );
}

#[test]
fn initial_mask_follows_box() {
    let (img, _) = two_color();
    let s = init_session(&img, None, None, &SessionConfig::default()).unwrap();
    assert_eq!(s.predict_mask().count(), 0);
    assert!(s.model().value_means().as_slice().iter().all(|&m| m == 0.0));
    let whole = BBox::new(0, 0, 28, 28).unwrap();
    let s = init_session(&img, None, Some(whole), &SessionConfig::default()).unwrap();
    assert_eq!(s.predict_mask().count(), 28 * 28);
}

#[test]
fn click_without_propagation_only_fixes_disk() {
    let (img, _) = two_color();
    let mut cfg = SessionConfig::default();
    cfg.adaptation.value_iters = 0;
    let mut s = init_session(&img, None, Some(BBox::new(4, 4, 23, 23).unwrap()), &cfg).unwrap();
    let before = s.model().value_means().clone();
    let click = ClickEvent::new(14, 14, Polarity::Negative);
    s.apply_click(click).unwrap();
    assert_eq!(s.model().value_means(), &before);
    let disk: Vec<usize> = click.disk(28, 28).iter().map(|&(r, c)| r * 28 + c).collect();
    let fixed: Vec<usize> = s.fixed_values().keys().copied().collect();
    assert_eq!(fixed, disk);
    assert!(s.fixed_values().values().all(|&v| v == -cfg.fixed_logit));
}

#[test]
fn local_prior_confines_propagation() {
    let (img, _) = two_color();
    let mut cfg = SessionConfig::default();
    cfg.prior = SessionPrior::GridDistance {
        scale: 1e-3,
        radius: Some(0),
    };
    cfg.adaptation = AdaptationConfig {
        theta_mu: 0.0,
        value_iters: 3,
        ..AdaptationConfig::default()
    };
    let mut s = init_session(&img, None, Some(BBox::new(8, 8, 19, 19).unwrap()), &cfg).unwrap();
    let before = s.model().value_means().clone();
    let click = ClickEvent::new(3, 3, Polarity::Positive);
    s.apply_click(click).unwrap();
    let disk: Vec<usize> = click.disk(28, 28).iter().map(|&(r, c)| r * 28 + c).collect();
    for i in 0..28 * 28 {
        let mu = s.model().value_means().get(i, 0);
        if disk.contains(&i) {
            assert!((mu - cfg.fixed_logit).abs() < 1e-6);
        } else {
            assert!((mu - before.get(i, 0)).abs() < 1e-6);
        }
    }
}

#[test]
fn positive_click_on_foreground_improves_iou() {
    let (img, gt) = two_color();
    let mut cfg = SessionConfig::default();
    cfg.adaptation.theta_mu = 1.0;
    cfg.adaptation.value_iters = 5;
    let mut s = init_session(&img, Some(&gt), Some(BBox::new(11, 11, 16, 16).unwrap()), &cfg).unwrap();
    let before = s.iou().unwrap();
    let mut click = ClickEvent::new(13, 13, Polarity::Positive);
    click.radius = 3;
    s.apply_click(click).unwrap();
    assert!(s.iou().unwrap() > before, "{} -> {}", before, s.iou().unwrap());
}

#[test]
fn click_moves_disk_toward_fixed_value() {
    let (img, _) = two_color();
    for (polarity, row) in [(Polarity::Positive, 2), (Polarity::Negative, 14)] {
        let mut s = init_session(&img, None, Some(BBox::new(6, 6, 21, 21).unwrap()), &SessionConfig::default()).unwrap();
        let click = ClickEvent::new(row, 14, polarity);
        let disk: Vec<usize> = click.disk(28, 28).iter().map(|&(r, c)| r * 28 + c).collect();
        let mean = |s: &SegmentationSession| disk.iter().map(|&i| s.model().value_means().get(i, 0)).sum::<f64>() / disk.len() as f64;
        let before = mean(&s);
        s.apply_click(click).unwrap();
        let after = mean(&s);
        assert!((after - before) * polarity.sign() > 1e-9, "{polarity:?}: {before} -> {after}");
    }
}

#[test]
fn out_of_bounds_click_rejected() {
    let (img, _) = two_color();
    let mut s = init_session(&img, None, None, &SessionConfig::default()).unwrap();
    assert!(s.apply_click(ClickEvent::new(28, 0, Polarity::Positive)).is_err());
    assert!(s.clicks().is_empty());
    assert!(s.undo().is_err());
}

#[test]
fn undo_restores_previous_state() {
    let (image, gt, bbox) = fixture();
    let mut s = init_session(&image, Some(&gt), Some(bbox), &SessionConfig::default()).unwrap();
    let c1 = ClickEvent::new(20, 20, Polarity::Positive);
    let c2 = ClickEvent::new(3, 5, Polarity::Negative);
    let initial = state(&s);
    s.apply_click(c1).unwrap();
    let one = state(&s);
    s.apply_click(c2).unwrap();
    let two = state(&s);
    s.undo().unwrap();
    assert_eq!(state(&s), one);
    s.apply_click(c2).unwrap();
    assert_eq!(state(&s), two);
    s.undo().unwrap();
    s.undo().unwrap();
    assert_eq!(state(&s), initial);
    assert!(s.iou_history().len() <= 1);
}

#[test]
fn replay_matches_fresh_session() {
    let (image, gt, bbox) = fixture();
    let clicks = [
        ClickEvent::new(20, 20, Polarity::Positive),
        ClickEvent::new(3, 5, Polarity::Negative),
        ClickEvent::new(30, 12, Polarity::Positive),
    ];
    let mut s = init_session(&image, Some(&gt), Some(bbox), &SessionConfig::default()).unwrap();
    for c in clicks {
        s.apply_click(c).unwrap();
    }
    let mut cfg = SessionConfig::default();
    cfg.adaptation.value_iters = 2;
    s.set_config(cfg.clone(), true).unwrap();
    let mut fresh = init_session(&image, Some(&gt), Some(bbox), &cfg).unwrap();
    for c in clicks {
        fresh.apply_click(c).unwrap();
    }
    assert_eq!(state(&s), state(&fresh));
    assert_eq!(s.iou_history(), fresh.iou_history());

    let mut empty = init_session(&image, None, Some(bbox), &SessionConfig::default()).unwrap();
    let before = state(&empty);
    empty.set_config(cfg.clone(), true).unwrap();
    assert_eq!(empty.config(), &cfg);
    assert_eq!(state(&empty).1, before.1);
}

#[test]
fn snapshot_round_trip_is_bit_identical() {
    let (image, gt, bbox) = fixture();
    let mut s = init_session(&image, Some(&gt), Some(bbox), &SessionConfig::default()).unwrap();
    s.apply_click(ClickEvent::new(20, 20, Polarity::Positive)).unwrap();
    s.apply_click(ClickEvent::new(3, 5, Polarity::Negative)).unwrap();
    let text = serde_json::to_string(&s.snapshot()).unwrap();
    let back: SessionSnapshot = serde_json::from_str(&text).unwrap();
    let restored = SegmentationSession::restore(&back).unwrap();
    assert_eq!(state(&restored), state(&s));
}

#[test]
fn annotator_picks_larger_blob() {
    let gt = {
        let mut m = Mask::empty(30, 30);
        // 10×10 and 5×8 blobs
        for r in 2..12 {
            for c in 2..12 {
                m.set(r, c, true);
            }
        }
        for r in 20..25 {
            for c in 15..23 {
                m.set(r, c, true);
            }
        }
        m
    };
    let AnnotatorAction::Click(c) = simulate_annotator(&Mask::empty(30, 30), &gt, 8).unwrap() else {
        panic!("click expected")
    };
    assert_eq!(c.polarity, Polarity::Positive);
    assert!((2..12).contains(&c.row) && (2..12).contains(&c.col));
    assert_eq!(simulate_annotator(&gt, &gt, 8).unwrap(), AnnotatorAction::Done);
}

#[test]
fn iou_examples() {
    let a = Mask::new(3, 3, vec![true, true, false, true, true, false, false, false, false]).unwrap();
    let b = Mask::new(3, 3, vec![false, true, true, false, true, true, false, false, false]).unwrap();
    assert!((iou(&a, &b).unwrap() - 2.0 / 6.0).abs() < 1e-15);
    assert_eq!(iou(&a, &a).unwrap(), 1.0);
    let c = Mask::new(3, 3, vec![false, false, false, false, false, false, true, true, true]).unwrap();
    assert_eq!(iou(&a, &c).unwrap(), 0.0);
    assert_eq!(iou(&Mask::empty(3, 3), &Mask::empty(3, 3)).unwrap(), 1.0);
    assert!(iou(&a, &Mask::empty(3, 4)).is_err());
}

#[test]
fn curve_examples() {
    let items = generate_dataset(3, 32, 11).unwrap();
    let cfg = SessionConfig::default();
    let zero = evaluate_curve(&items, &cfg, 0, 2, 5).unwrap();
    assert_eq!(zero.points.len(), 1);
    let single = evaluate_curve(&items, &cfg, 2, 1, 5).unwrap();
    assert!(single.points.iter().all(|p| p.stderr == 0.0));
    let a = evaluate_curve(&items, &cfg, 3, 3, 5).unwrap();
    let b = evaluate_curve(&items, &cfg, 3, 3, 5).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.points.iter().all(|p| (0.0..=1.0).contains(&p.mean_iou) && p.stderr >= 0.0));
    assert!(a.to_csv().starts_with("clicks,mean_iou,stderr,trials\n"));
    assert!(evaluate_curve(&items, &cfg, 3, 0, 5).is_err());
}

#[test]
fn dataset_writes_are_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = write_dataset(a.path(), 2, 32, 3).unwrap();
    let mb = write_dataset(b.path(), 2, 32, 3).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5);
    for name in names {
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
    let items = probattn::playground::load_dataset(&ma).unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items, probattn::playground::load_dataset(&mb).unwrap());
    let one = tempfile::tempdir().unwrap();
    let m = probattn::playground::Manifest::read(write_dataset(one.path(), 1, 32, 3).unwrap()).unwrap();
    assert_eq!(m.items.len(), 1);
}
