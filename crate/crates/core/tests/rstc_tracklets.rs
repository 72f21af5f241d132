mod common;

use common::{naive_weights, static_seq, translating};
use proptest::prelude::*;
use ustrack_core::flow::track_range;
use ustrack_core::rstc::{rstc_tracklet, sigmoid_weights};
use ustrack_core::{Point2, RstcConfig, TrackConfig, Tracker};

#[test]
fn weights_match_logistic_definition() {
    for len in [2usize, 3, 4, 7, 30, 101] {
        for alpha in [0.5, 10.0, 40.0] {
            let w = sigmoid_weights(len, alpha);
            let oracle = naive_weights(len, alpha);
            for (a, b) in w.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "len={len} alpha={alpha}");
            }
            assert!(w.windows(2).all(|p| p[1] < p[0]));
        }
    }
}

#[test]
fn translating_tracklet_follows_true_line() {
    let seq = translating(80, 64, 40, 1.0, 0.0, 13);
    let pa = Point2::new(20.0, 30.0);
    let (a, b) = (3, 32);
    let pa_t = pa + Point2::new(a as f64, 0.0);
    let pb_t = pa + Point2::new(b as f64, 0.0);
    let t = rstc_tracklet(&seq, a, b, pa_t, pb_t, &RstcConfig::default()).unwrap();
    assert_eq!(t.len(), 30);
    for (k, p) in t.estimates.iter().enumerate() {
        let truth = pa + Point2::new((a + k) as f64, 0.0);
        assert!(p.distance(truth) < 0.3, "k={k} {p:?}");
    }
    assert!(t.interior_valid.iter().all(|&v| v));
}

#[test]
fn time_reversal_symmetry() {
    let seq = translating(80, 64, 25, 0.8, 0.3, 5);
    let rev = seq.reversed();
    let n = seq.len();
    let (a, b) = (2, 21);
    let (pa, pb) = (Point2::new(22.0, 25.0), Point2::new(37.4, 30.9));
    let cfg = RstcConfig::default();
    let fwd = rstc_tracklet(&seq, a, b, pa, pb, &cfg).unwrap();
    let bwd = rstc_tracklet(&rev, n - 1 - b, n - 1 - a, pb, pa, &cfg).unwrap();
    for (k, p) in fwd.estimates.iter().enumerate() {
        let q = bwd.estimates[bwd.len() - 1 - k];
        assert!(p.distance(q) < 1e-6, "k={k}: {p:?} vs {q:?}");
    }
}

#[test]
fn fused_estimates_within_directional_agreement() {
    let seq = translating(80, 64, 30, 0.5, 0.5, 17);
    let cfg = TrackConfig::default();
    let (a, b) = (0, 29);
    let pa = Point2::new(24.0, 20.0);
    let f = track_range(&seq, pa, a, b, &cfg).unwrap();
    let pb = f[b].p + Point2::new(0.15, -0.1);
    let mut r = track_range(&seq, pb, b, a, &cfg).unwrap();
    r.reverse();
    let delta = f.iter().zip(&r).map(|(x, y)| x.p.distance(y.p)).fold(0.0, f64::max);
    let t = rstc_tracklet(&seq, a, b, pa, pb, &RstcConfig::default()).unwrap();
    for k in 1..t.len() - 1 {
        let e = t.estimates[k];
        assert!(e.distance(f[k].p) <= delta + 1e-12);
        assert!(e.distance(r[k].p) <= delta + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn anchors_are_exact(a in 0usize..10, len in 2usize..12,
                         ax in 5.0f64..58.0, ay in 5.0f64..58.0, bx in 5.0f64..58.0, by in 5.0f64..58.0,
                         alpha in 0.1f64..50.0) {
        let seq = static_seq(64, 64, 22, 2);
        let tracker = Tracker::new(&seq, TrackConfig::default()).unwrap();
        let b = a + len - 1;
        let (pa, pb) = (Point2::new(ax, ay), Point2::new(bx, by));
        let t = tracker.tracklet(a, b, pa, pb, alpha).unwrap();
        prop_assert_eq!(t.estimates[0], pa);
        prop_assert_eq!(*t.estimates.last().unwrap(), pb);
        prop_assert_eq!(t.len(), len);
    }

    #[test]
    fn weights_symmetric_and_pinned(len in 2usize..400, alpha in 0.01f64..80.0) {
        let w = sigmoid_weights(len, alpha);
        prop_assert_eq!(w[0], 1.0);
        prop_assert_eq!(w[len - 1], 0.0);
        for k in 0..len {
            prop_assert_eq!(w[k] + w[len - 1 - k], 1.0);
        }
    }
}
