use cuetrack::eval::{
    center_error, curves, evaluate, tp_at, tp_curve, tsr_at, tsr_curve, write_report, SequenceRecord,
};
use cuetrack::geometry::BBox;
use cuetrack::loss::overlap;
use proptest::prelude::*;

fn centered(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
    BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
}

fn arb_box() -> impl Strategy<Value = BBox<f64>> {
    (-50.0..150.0f64, -50.0..150.0f64, 1.0..60.0f64, 1.0..60.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
}

fn arb_record() -> impl Strategy<Value = SequenceRecord> {
    prop::collection::vec((arb_box(), arb_box()), 1..40).prop_map(|pairs| {
        let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().map(|(p, g)| (p, Some(g))).unzip();
        SequenceRecord::new("random", p, g).unwrap()
    })
}

#[test]
fn seven_of_ten_within_twenty_pixels() {
    let gt: Vec<_> = (0..10).map(|i| Some(centered(100.0 + i as f64, 50.0, 30.0, 30.0))).collect();
    // center offsets; errors 0, 5, 19.9, 20, 3, 13, 7, 20.5, 35, 80
    let offsets = [(0.0, 0.0), (3.0, 4.0), (19.9, 0.0), (12.0, 16.0), (0.0, 3.0), (5.0, 12.0), (7.0, 0.0), (0.0, 20.5), (21.0, 28.0), (48.0, 64.0)];
    let preds = gt.iter().zip(offsets).map(|(g, (dx, dy))| {
        let (cx, cy) = g.unwrap().center();
        centered(cx + dx, cy + dy, 30.0, 30.0)
    });
    let seq = SequenceRecord::new("fixture", preds.collect(), gt).unwrap();
    assert_eq!(tp_at(&seq, 20.0).unwrap(), 0.7);
    assert_eq!(tp_at(&seq, 0.0).unwrap(), 0.1);
}

#[test]
fn two_of_three_above_point_six() {
    // Same height, shifted horizontally: overlap (w - d) / (w + d) = t gives d = w (1 - t) / (1 + t).
    let w = 100.0;
    let gt = BBox::new(0.0, 0.0, w, 50.0);
    let preds: Vec<_> = [0.7, 0.5, 0.9]
        .iter()
        .map(|t| BBox::new(w * (1.0 - t) / (1.0 + t), 0.0, w, 50.0))
        .collect();
    for (p, t) in preds.iter().zip([0.7f64, 0.5, 0.9]) {
        assert!((overlap(p, &gt) - t).abs() < 1e-12);
    }
    let seq = SequenceRecord::new("fixture", preds, vec![Some(gt); 3]).unwrap();
    assert!((tsr_at(&seq, 0.6).unwrap() - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn perfect_tracking() {
    let boxes: Vec<_> = (0..5).map(|i| BBox::new(i as f64, 2.0, 20.0, 10.0)).collect();
    let seq = SequenceRecord::new("perfect", boxes.clone(), boxes.into_iter().map(Some).collect()).unwrap();
    for tau in [0.0, 1.0, 20.0, 50.0] {
        assert_eq!(tp_at(&seq, tau).unwrap(), 1.0);
    }
    for tau in [0.0, 0.5, 0.95, 0.999] {
        assert_eq!(tsr_at(&seq, tau).unwrap(), 1.0);
    }
    // Success needs overlap strictly above the threshold, and overlap never exceeds 1.
    assert_eq!(tsr_at(&seq, 1.0).unwrap(), 0.0);
}

#[test]
fn fixture_curves_match_hand_computation() {
    let gt = centered(0.0, 0.0, 10.0, 10.0);
    let preds = vec![centered(0.0, 0.0, 10.0, 10.0), centered(3.0, 4.0, 10.0, 10.0), centered(30.0, 0.0, 10.0, 10.0)];
    let seq = SequenceRecord::new("hand", preds, vec![Some(gt); 3]).unwrap();
    let (tp, tsr) = curves(&seq).unwrap();
    for (t, v) in tp.thresholds.iter().zip(&tp.values) {
        let want = if *t < 5.0 { 1.0 / 3.0 } else if *t < 30.0 { 2.0 / 3.0 } else { 1.0 };
        assert_eq!(*v, want, "tp at {t}");
    }
    // Second prediction overlaps 42/158.
    let mid = 42.0 / 158.0;
    for (t, v) in tsr.thresholds.iter().zip(&tsr.values) {
        let want = if *t < mid { 2.0 / 3.0 } else if *t < 1.0 { 1.0 / 3.0 } else { 0.0 };
        assert_eq!(*v, want, "tsr at {t}");
    }
    assert_eq!(tp.at(20.0), Some(2.0 / 3.0));
    assert_eq!(tsr.at(0.6), Some(1.0 / 3.0));
}

#[test]
fn empty_threshold_list_rejected() {
    let b = BBox::new(0.0, 0.0, 1.0, 1.0);
    let seq = SequenceRecord::new("x", vec![b], vec![Some(b)]).unwrap();
    assert!(tp_curve(&seq, &[]).is_err());
    assert!(tsr_curve(&seq, &[]).is_err());
}

#[test]
fn report_csv_contains_headline_and_curves() {
    let gt = centered(0.0, 0.0, 10.0, 10.0);
    let seq = SequenceRecord::new("hand", vec![gt, centered(3.0, 4.0, 10.0, 10.0)], vec![Some(gt); 2]).unwrap();
    let mut buf = Vec::new();
    write_report(&mut buf, &[evaluate(&seq).unwrap()]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.contains("hand,tp,20.0,1.0\n"));
    assert!(text.contains("hand,tsr,0.6,0.5\n"));
    assert_eq!(text.matches(",tp_curve,").count(), 50);
    assert_eq!(text.matches(",tsr_curve,").count(), 21);
}

proptest! {
    #[test]
    fn center_error_matches_brute_force(a in arb_box(), b in arb_box()) {
        let (ax, ay) = (a.x + a.w / 2.0, a.y + a.h / 2.0);
        let (bx, by) = (b.x + b.w / 2.0, b.y + b.h / 2.0);
        let d = ((ax - bx) * (ax - bx) + (ay - by) * (ay - by)).sqrt();
        prop_assert!((center_error(&a, &b) - d).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn curves_are_monotone(seq in arb_record()) {
        let (tp, tsr) = curves(&seq).unwrap();
        prop_assert!(tp.is_non_decreasing());
        prop_assert!(tsr.is_non_increasing());
        prop_assert!(tp.values.iter().chain(&tsr.values).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fixed_thresholds_match_per_frame_loops(seq in arb_record(), tau_d in 0.0..60.0f64, tau_o in 0.0..1.0f64) {
        let n = seq.predictions.len() as f64;
        let mut close = 0.0;
        let mut good = 0.0;
        for (p, g) in seq.predictions.iter().zip(&seq.ground_truth) {
            let g = g.unwrap();
            let (px, py) = (p.x + p.w / 2.0, p.y + p.h / 2.0);
            let (gx, gy) = (g.x + g.w / 2.0, g.y + g.h / 2.0);
            if ((px - gx).powi(2) + (py - gy).powi(2)).sqrt() <= tau_d {
                close += 1.0;
            }
            if overlap(p, &g) > tau_o {
                good += 1.0;
            }
        }
        prop_assert_eq!(tp_at(&seq, tau_d).unwrap(), close / n);
        prop_assert_eq!(tsr_at(&seq, tau_o).unwrap(), good / n);
    }
}
