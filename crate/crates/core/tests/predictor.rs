mod common;

use proptest::prelude::*;

use omnisense::geometry::{DetectedObject, SphericalBox};
use omnisense::predictor::{predict_srois, DetectionHistory, PredictorConfig};
use omnisense::profiles::SizeClassifier;

fn predict(history: &[DetectedObject]) -> Vec<omnisense::predictor::Sroi> {
    predict_srois(
        history,
        &PredictorConfig::default(),
        &SizeClassifier::default(),
        6,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structural_laws_hold(seed in any::<u64>()) {
        let history = common::random_history(seed, 2);
        let srois = predict(&history);
        let cfg = PredictorConfig::default();
        if let Err(e) = common::check_prediction(&history, &srois, cfg.fov, cfg.gamma) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn deterministic(seed in any::<u64>()) {
        let history = common::random_history(seed, 2);
        prop_assert_eq!(format!("{:?}", predict(&history)), format!("{:?}", predict(&history)));
    }

    #[test]
    fn regular_merges_fit_strictly_inside_f(seed in any::<u64>()) {
        let history = common::random_history(seed, 2);
        let f = PredictorConfig::default().fov;
        for s in predict(&history).iter().filter(|s| !s.special && s.members.len() > 1) {
            let m = omnisense::geometry::merged_fov(s.members.iter().map(|o| &o.bbox)).unwrap();
            prop_assert!(m.fov_h < f && m.fov_v < f);
        }
    }
}

#[test]
fn discovered_object_is_covered_next_frame() {
    let mut history = DetectionHistory::new(2);
    let found = DetectedObject::new(
        SphericalBox::from_degrees(179.0, 12.0, 4.0, 3.0).unwrap(),
        2,
        0.9,
        0,
    )
    .unwrap();
    history.absorb_discovery(0, &[found]);
    let srois = predict(&history.objects());
    assert!(srois.iter().any(|s| s.bbox.contains(found.bbox.center())));
}

#[test]
fn oversized_object_across_antimeridian() {
    let big = DetectedObject::truth(
        SphericalBox::from_degrees(180.0, 0.0, 100.0, 40.0).unwrap(),
        0,
        0,
    );
    let srois = predict(&[big]);
    assert_eq!(srois.len(), 1);
    assert!(srois[0].special);
    assert!((srois[0].bbox.fov_h() - 110f64.to_radians()).abs() < 1e-12);
    assert!((srois[0].weight - 1.0).abs() < 1e-12);
}
