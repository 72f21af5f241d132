mod common;

use common::fascicle_case;
use proptest::prelude::*;
use ustrack_core::geometry::{
    deformation_series, distance_series, fascicle_from_points, fascicle_series, line_intersection, metrics_to_csv,
    FascicleModel, GeometryError,
};
use ustrack_core::{AnnotationLayer, Calibration, Point2};

fn unit() -> Calibration {
    Calibration::new(1.0, 1.0, 50.0).unwrap()
}

#[test]
fn worked_examples() {
    let m = fascicle_from_points(
        [
            Point2::new(0.0, 0.0),
            Point2::new(20.0, 0.0),
            Point2::new(0.0, 10.0),
            Point2::new(20.0, 10.0),
            Point2::new(10.0, 0.0),
        ],
        &unit(),
    )
    .unwrap();
    assert!((m.length_mm - 200f64.sqrt()).abs() < 1e-9);
    assert!((m.pennation_deg - 45.0).abs() < 1e-9);

    let perp = fascicle_from_points(
        [
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(5.0, 10.0),
            Point2::new(9.0, 10.0),
            Point2::new(5.0, 3.0),
        ],
        &unit(),
    )
    .unwrap();
    assert!((perp.length_mm - 10.0).abs() < 1e-12 && (perp.pennation_deg - 90.0).abs() < 1e-12);

    let hit = line_intersection(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 10.0), Point2::new(1.0, 9.0));
    assert!(hit.unwrap().distance(Point2::new(10.0, 0.0)) < 1e-12);
    assert!(matches!(
        line_intersection(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), Point2::new(3.0, 1.0)),
        Err(GeometryError::NoIntersection)
    ));
}

#[test]
fn anisotropic_distance_and_deformation() {
    let mut l = AnnotationLayer::with_labels("g", ["a", "b"]).unwrap();
    l.set_point("a", 0, Point2::new(1.0, 1.0)).unwrap();
    l.set_point("b", 0, Point2::new(4.0, 5.0)).unwrap();
    l.set_point("a", 1, Point2::new(1.0, 1.0)).unwrap();
    l.set_point("b", 1, Point2::new(1.0, 1.0)).unwrap();
    l.set_point("a", 2, Point2::new(0.0, 0.0)).unwrap();
    let cal = Calibration::new(2.0, 1.0, 50.0).unwrap();
    let d = distance_series(&l, "a", "b", &cal).unwrap();
    assert!((d.get(0).unwrap() - 52f64.sqrt()).abs() < 1e-12);
    assert_eq!(d.get(1), Some(0.0));
    assert_eq!(d.get(2), None);
    assert_eq!(distance_series(&l, "b", "a", &cal).unwrap().values, d.values);
    assert!(matches!(deformation_series(&d, 1), Err(GeometryError::BadReference { .. })));
    let def = deformation_series(&d, 0).unwrap();
    assert_eq!(def.get(0), Some(0.0));
    assert_eq!(def.get(1), Some(-1.0));

    let csv = metrics_to_csv(&[&d], 50.0);
    assert!(csv.starts_with("frame,time_s,distance_a_b_mm\n0,0,"));
}

#[test]
fn series_over_layer() {
    let model = FascicleModel::new(["u0", "u1"], ["l0", "l1"], "f").unwrap();
    assert!(FascicleModel::new(["u0", "u0"], ["l0", "l1"], "f").is_err());
    let mut layer = AnnotationLayer::with_labels("m", model.labels()).unwrap();
    for t in 0..5 {
        let (pts, _) = fascicle_case(10.0 + t as f64, 30.0 + 5.0 * t as f64, 0.0, Point2::new(20.0, 20.0));
        for (label, p) in model.labels().iter().zip(pts) {
            layer.set_point(label, t, p).unwrap();
        }
    }
    layer.remove_point("f", 3).unwrap();
    let (len, pen) = fascicle_series(&layer, &model, &unit()).unwrap();
    assert_eq!(len.values.keys().copied().collect::<Vec<_>>(), vec![0, 1, 2, 4]);
    assert!((pen.get(4).unwrap() - 50.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn rigid_invariance(gap in 2.0f64..40.0, angle in 5.0f64..90.0, rot in -180.0f64..180.0,
                        tx in -100.0f64..100.0, ty in -100.0f64..100.0) {
        let (pts, (len, pen)) = fascicle_case(gap, angle, rot, Point2::new(tx, ty));
        let m = fascicle_from_points(pts, &unit()).unwrap();
        prop_assert!((m.length_mm - len).abs() < 1e-9, "{} vs {}", m.length_mm, len);
        prop_assert!((m.pennation_deg - pen).abs() < 1e-9);
        prop_assert!(m.pennation_deg > 0.0 && m.pennation_deg <= 90.0);
    }

    #[test]
    fn scale_covariance(gap in 2.0f64..40.0, angle in 5.0f64..90.0, rot in -180.0f64..180.0, k in 0.1f64..10.0) {
        let (pts, _) = fascicle_case(gap, angle, rot, Point2::new(1.0, 2.0));
        let a = fascicle_from_points(pts, &unit()).unwrap();
        let b = fascicle_from_points(pts.map(|p| p * k), &unit()).unwrap();
        prop_assert!((b.length_mm - k * a.length_mm).abs() < 1e-9);
        prop_assert!((b.pennation_deg - a.pennation_deg).abs() < 1e-9);
        // Isotropic calibration acts like a scaling.
        let cal = Calibration::new(k, k, 50.0).unwrap();
        let c = fascicle_from_points(pts, &cal).unwrap();
        prop_assert!((c.length_mm - b.length_mm).abs() < 1e-9);
    }
}
