use proptest::prelude::*;
use tasteprint_core::calibration::CalibrationSet;
use tasteprint_core::geometry::shapes::{cuboid, cylinder, tube};
use tasteprint_core::geometry::{slice_mesh, LayerSlice, Point2, Point3, SliceStack, TriangleMesh};
use tasteprint_core::planner::{
    add_free_event, allocate_total_amount, fill_pattern, intensity_to_duration, validate_design,
    AllocationRequest, DesignMode, DiagnosticCode, PatternRequest, PlannerError, Severity, SprayEvent,
    TasteDesign,
};

fn cal() -> CalibrationSet {
    CalibrationSet::default()
}

fn stack(mesh: &TriangleMesh, lh: f64) -> SliceStack {
    slice_mesh(mesh, lh).unwrap()
}

/// 30 mm disc, one 1.6 mm layer.
fn disc() -> SliceStack {
    stack(&cylinder(Point2::new(0.0, 0.0), 15.0, 1.6, 256), 1.6)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Crossing-number containment written independently of the library.
fn oracle_inside(slice: &LayerSlice, p: Point2) -> bool {
    let mut inside = false;
    for ring in &slice.contours {
        let pts = ring.points();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn min_edge_distance(slice: &LayerSlice, p: Point2) -> f64 {
    let mut best = f64::INFINITY;
    for ring in &slice.contours {
        for w in ring.points().windows(2) {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.x - a.x, b.y - a.y);
            let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            best = best.min(((a.x + t * dx - p.x).powi(2) + (a.y + t * dy - p.y).powi(2)).sqrt());
        }
    }
    best
}

/// Enumerates `anchor + m·(p, 0) + n·(p/2, p√3/2)` over a generous index box.
fn oracle_lattice(slice: &LayerSlice, pitch: f64) -> Vec<Point2> {
    let b = slice.bounds().unwrap();
    let anchor = Point2::new((b.min.x + b.max.x) / 2.0, (b.min.y + b.max.y) / 2.0);
    let reach = ((b.max.x - b.min.x).max(b.max.y - b.min.y) / pitch).ceil() as i64 + 3;
    let mut pts = Vec::new();
    for n in -2 * reach..=2 * reach {
        for m in -3 * reach..=3 * reach {
            let p = Point2::new(
                anchor.x + m as f64 * pitch + n as f64 * pitch / 2.0,
                anchor.y + n as f64 * pitch * 3f64.sqrt() / 2.0,
            );
            // row parity in the library is relative to the anchor row
            let p = Point2::new((p.x * 1e3).round() / 1e3, (p.y * 1e3).round() / 1e3);
            if p.x >= b.min.x - 1e-9
                && p.x <= b.max.x + 1e-9
                && p.y >= b.min.y - 1e-9
                && p.y <= b.max.y + 1e-9
                && oracle_inside(slice, p)
            {
                pts.push(p);
            }
        }
    }
    pts
}

fn sorted(mut v: Vec<Point2>) -> Vec<Point2> {
    v.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    v
}

#[test]
fn free_event_at_disc_centre() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let event = SprayEvent::new(1, Point2::new(0.0, 0.0), 20, 20.0);
    let out = add_free_event(&design, 0, event, &slices, &c).unwrap();
    assert_eq!(out.event_count(), 1);
    assert_eq!(design.event_count(), 0, "input design is untouched");
    let ann = out.layers[0].events[0].annotation.clone().unwrap();
    assert!(close(ann.diameter_mm, 7.065, 5e-4), "{}", ann.diameter_mm);
    assert!(close(ann.mass_mg, 1.434, 1e-9));
    assert!(!ann.overflows_contour);
    assert_eq!(out.layers[0].modes, vec![DesignMode::Free]);
}

#[test]
fn free_event_outside_is_a_placement_error() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let event = SprayEvent::new(1, Point2::new(16.0, 0.0), 20, 20.0);
    let err = add_free_event(&design, 0, event, &slices, &c).unwrap_err();
    assert!(matches!(err, PlannerError::Placement { layer: 0, .. }), "{err}");
    assert!(err.to_string().contains("layer 0"));
}

#[test]
fn free_event_rejects_bad_inputs() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let at = Point2::new(0.0, 0.0);
    let bad = |e: SprayEvent, layer| add_free_event(&design, layer, e, &slices, &c).unwrap_err();
    assert!(matches!(bad(SprayEvent::new(1, at, 20, 20.0), 3), PlannerError::LayerOutOfRange { .. }));
    assert!(matches!(bad(SprayEvent::new(5, at, 20, 20.0), 0), PlannerError::UnknownChannel(5)));
    assert!(matches!(bad(SprayEvent::new(1, at, 200, 20.0), 0), PlannerError::DurationOutOfRange { .. }));
    assert!(matches!(bad(SprayEvent::new(1, at, 0, 20.0), 0), PlannerError::ZeroDuration));
    assert!(matches!(bad(SprayEvent::new(1, at, 20, 0.0), 0), PlannerError::InvalidStandoff(_)));
    let flagged = SprayEvent {
        extrapolated: true,
        ..SprayEvent::new(1, at, 200, 20.0)
    };
    assert!(add_free_event(&design, 0, flagged, &slices, &c).is_ok());
}

#[test]
fn pattern_matches_lattice_enumeration() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let req = PatternRequest {
        channel: 0,
        duration_ms: 20,
        standoff_mm: 20.0,
        overlap: 0.0,
        extrapolated: false,
    };
    let out = fill_pattern(&design, 0, &req, &slices, &c).unwrap();
    let pitch = c.predict_diameter(20.0, 20.0).unwrap().value;
    let got: Vec<Point2> = out.layers[0].events.iter().map(|e| e.position).collect();
    let expected = oracle_lattice(&slices.layers[0], pitch);
    assert_eq!(got.len(), expected.len());
    // emitted in row-major order already
    assert_eq!(got, sorted(got.clone()));
    assert_eq!(got, sorted(expected));
    assert!(got.iter().all(|&p| oracle_inside(&slices.layers[0], p)));
    // centre-anchored: the anchor itself is a site
    assert!(got.contains(&Point2::new(0.0, 0.0)));
    for (i, a) in got.iter().enumerate() {
        for b in &got[i + 1..] {
            assert!(a.distance(*b) >= pitch - 2e-3);
        }
    }
}

#[test]
fn pattern_with_overlap_is_denser() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let mut req = PatternRequest {
        channel: 2,
        duration_ms: 30,
        standoff_mm: 25.0,
        overlap: 0.3,
        extrapolated: false,
    };
    let dense = fill_pattern(&design, 0, &req, &slices, &c).unwrap();
    let pitch = c.predict_diameter(25.0, 30.0).unwrap().value * 0.7;
    assert_eq!(dense.layers[0].events.len(), oracle_lattice(&slices.layers[0], pitch).len());
    req.overlap = 0.0;
    let sparse = fill_pattern(&design, 0, &req, &slices, &c).unwrap();
    assert!(dense.layers[0].events.len() > sparse.layers[0].events.len());
    req.overlap = 0.95;
    assert!(matches!(
        fill_pattern(&design, 0, &req, &slices, &c),
        Err(PlannerError::InvalidOverlap(_))
    ));
}

#[test]
fn pattern_on_small_contours() {
    let c = cal();
    let req = PatternRequest {
        channel: 0,
        duration_ms: 20,
        standoff_mm: 20.0,
        overlap: 0.0,
        extrapolated: false,
    };
    let small = stack(&cuboid(Point3::new(10.0, 10.0, 0.0), Point3::new(13.0, 13.0, 1.6)), 1.6);
    let out = fill_pattern(&TasteDesign::new(&small, &c), 0, &req, &small, &c).unwrap();
    assert_eq!(out.layers[0].events.len(), 1);
    assert_eq!(out.layers[0].events[0].position, Point2::new(11.5, 11.5));

    // anchor lies in the hole of a small ring
    let ring = stack(&tube(Point2::new(0.0, 0.0), 1.0, 2.0, 1.6, 64), 1.6);
    let out = fill_pattern(&TasteDesign::new(&ring, &c), 0, &req, &ring, &c).unwrap();
    assert_eq!(out.layers[0].events.len(), 0);
}

#[test]
fn pattern_skips_annulus_hole() {
    let c = cal();
    let slices = stack(&tube(Point2::new(0.0, 0.0), 8.0, 20.0, 1.6, 128), 1.6);
    let req = PatternRequest {
        channel: 4,
        duration_ms: 10,
        standoff_mm: 20.0,
        overlap: 0.2,
        extrapolated: false,
    };
    let out = fill_pattern(&TasteDesign::new(&slices, &c), 0, &req, &slices, &c).unwrap();
    let events = &out.layers[0].events;
    assert!(!events.is_empty());
    for e in events {
        assert!(oracle_inside(&slices.layers[0], e.position));
        assert!(e.position.distance(Point2::new(0.0, 0.0)) > 8.0 * (std::f64::consts::PI / 128.0).cos() - 1e-6);
    }
    let pitch = c.predict_diameter(20.0, 10.0).unwrap().value * 0.8;
    assert_eq!(events.len(), oracle_lattice(&slices.layers[0], pitch).len());
}

#[test]
fn events_sort_by_channel_then_lattice_order() {
    let slices = disc();
    let c = cal();
    let mut design = TasteDesign::new(&slices, &c);
    for ch in [3u8, 1] {
        let req = PatternRequest {
            channel: ch,
            duration_ms: 40,
            standoff_mm: 30.0,
            overlap: 0.0,
            extrapolated: false,
        };
        design = fill_pattern(&design, 0, &req, &slices, &c).unwrap();
    }
    design = add_free_event(&design, 0, SprayEvent::new(0, Point2::new(1.0, 1.0), 20, 20.0), &slices, &c).unwrap();
    let channels: Vec<u8> = design.layers[0].events.iter().map(|e| e.channel).collect();
    let mut expected = channels.clone();
    expected.sort();
    assert_eq!(channels, expected);
    assert_eq!(channels[0], 0);
    assert_eq!(design.layers[0].modes, vec![DesignMode::Free, DesignMode::Pattern]);
}

/// Five stacked 4 mm squares: one footprint per layer.
fn five_squares() -> SliceStack {
    stack(&cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(4.0, 4.0, 8.0)), 1.6)
}

#[test]
fn ten_milligrams_over_five_layers() {
    let slices = five_squares();
    assert_eq!(slices.len(), 5);
    let c = cal();
    let req = AllocationRequest {
        channel: 1,
        total_mass_mg: 10.0,
        standoff_mm: 20.0,
        weights: None,
    };
    let (design, report) = allocate_total_amount(&TasteDesign::new(&slices, &c), &req, &slices, &c).unwrap();
    for layer in &design.layers {
        assert_eq!(layer.events.len(), 1);
        assert_eq!(layer.events[0].duration_ms, 27);
        assert_eq!(layer.modes, vec![DesignMode::TotalAmount]);
    }
    for l in &report.layers {
        assert!(close(l.target_mg, 2.0, 1e-12));
    }
    let achieved: f64 = design.layers.iter().flat_map(|l| &l.events).map(|e| c.alpha0 + c.alpha1 * e.duration_ms as f64).sum();
    assert!((achieved - 10.0).abs() <= 5.0 * c.alpha1);
    assert!(close(report.achieved_mg, achieved, 1e-12));
    assert_eq!(report.clamped_events, 0);
    // raw inversion of the dose model
    assert!(close((2.0 - c.alpha0) / c.alpha1, 26.90, 0.005));
}

#[test]
fn minimum_duration_boundary() {
    let slices = five_squares();
    let c = cal();
    let req = AllocationRequest {
        channel: 1,
        total_mass_mg: 5.0 * (c.alpha0 + c.alpha1 * 10.0),
        standoff_mm: 20.0,
        weights: None,
    };
    let (design, _) = allocate_total_amount(&TasteDesign::new(&slices, &c), &req, &slices, &c).unwrap();
    assert!(design.layers.iter().flat_map(|l| &l.events).all(|e| e.duration_ms == 10));
}

#[test]
fn targets_follow_area_ratio() {
    // 20 mm square under a 10 mm square: areas 400 and 100
    let mut tris = cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(20.0, 20.0, 1.6)).triangles().to_vec();
    tris.extend_from_slice(cuboid(Point3::new(5.0, 5.0, 1.6), Point3::new(15.0, 15.0, 3.2)).triangles());
    let slices = stack(&TriangleMesh::from_triangles(tris).unwrap(), 1.6);
    assert_eq!(slices.len(), 2);
    let c = cal();
    let req = AllocationRequest {
        channel: 0,
        total_mass_mg: 20.0,
        standoff_mm: 20.0,
        weights: None,
    };
    let (_, report) = allocate_total_amount(&TasteDesign::new(&slices, &c), &req, &slices, &c).unwrap();
    assert_eq!(report.layers[0].target_mg, 16.0);
    assert_eq!(report.layers[1].target_mg, 4.0);

    let weighted = AllocationRequest {
        weights: Some(vec![1.0, 4.0]),
        ..req
    };
    let (_, report) = allocate_total_amount(&TasteDesign::new(&slices, &c), &weighted, &slices, &c).unwrap();
    assert_eq!(report.layers[0].target_mg, 10.0);
    assert_eq!(report.layers[1].target_mg, 10.0);
}

#[test]
fn capacity_error_reports_the_maximum() {
    let slices = five_squares();
    let c = cal();
    let req = AllocationRequest {
        channel: 1,
        total_mass_mg: 100.0,
        standoff_mm: 20.0,
        weights: None,
    };
    match allocate_total_amount(&TasteDesign::new(&slices, &c), &req, &slices, &c) {
        Err(PlannerError::Capacity { target, achievable }) => {
            assert_eq!(target, 100.0);
            assert!(close(achievable, 5.0 * (c.alpha0 + c.alpha1 * 80.0), 1e-12));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn clamped_shortfall_moves_to_other_layers() {
    // big bottom layer with many sites, tiny top layer with one site
    let mut tris = cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(30.0, 30.0, 1.6)).triangles().to_vec();
    tris.extend_from_slice(cuboid(Point3::new(13.0, 13.0, 1.6), Point3::new(17.0, 17.0, 3.2)).triangles());
    let slices = stack(&TriangleMesh::from_triangles(tris).unwrap(), 1.6);
    let c = cal();
    // top weight pushes its single event past 80 ms
    let req = AllocationRequest {
        channel: 2,
        total_mass_mg: 40.0,
        standoff_mm: 20.0,
        weights: Some(vec![1.0, 200.0]),
    };
    let (design, report) = allocate_total_amount(&TasteDesign::new(&slices, &c), &req, &slices, &c).unwrap();
    assert_eq!(design.layers[1].events[0].duration_ms, 80);
    assert!(report.clamped_events >= 1);
    assert!(report.redistributed_ms > 0);
    assert!((report.achieved_mg - 40.0).abs() <= c.alpha1 * design.event_count() as f64);
    assert!(report.achieved_mg <= report.capacity_mg);
    let v = validate_design(&design, &slices, &c);
    assert!(!v.has_errors(), "{}", v.to_text());
}

#[test]
fn allocation_replaces_earlier_events_of_the_channel() {
    let slices = five_squares();
    let c = cal();
    let req = AllocationRequest {
        channel: 1,
        total_mass_mg: 10.0,
        standoff_mm: 20.0,
        weights: None,
    };
    let base = TasteDesign::new(&slices, &c);
    let base = add_free_event(&base, 0, SprayEvent::new(3, Point2::new(2.0, 2.0), 15, 20.0), &slices, &c).unwrap();
    let (once, _) = allocate_total_amount(&base, &req, &slices, &c).unwrap();
    let (twice, _) = allocate_total_amount(&once, &req, &slices, &c).unwrap();
    assert_eq!(once, twice);
    assert_eq!(once.event_count(), 6);
}

#[test]
fn validation_reports() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let good = add_free_event(&design, 0, SprayEvent::new(1, Point2::new(0.0, 0.0), 20, 20.0), &slices, &c).unwrap();
    let report = validate_design(&good, &slices, &c);
    assert!(!report.has_errors());
    assert_eq!(report.warnings().count(), 0);
    let salty = report.mass_summary.iter().find(|m| m.channel == 1).unwrap();
    assert!(close(salty.total_mg, 1.434, 1e-9));
    assert_eq!(salty.events, 1);

    let long = SprayEvent {
        extrapolated: true,
        ..SprayEvent::new(1, Point2::new(0.0, 0.0), 200, 20.0)
    };
    let out = add_free_event(&design, 0, long, &slices, &c).unwrap();
    let report = validate_design(&out, &slices, &c);
    assert!(report.diagnostics.iter().any(|d| d.code == DiagnosticCode::DurationExtrapolated && d.severity == Severity::Warning));

    // 12.756 mm footprint near the rim
    let edge = Point2::new(12.0, 0.0);
    let out = add_free_event(&design, 0, SprayEvent::new(1, edge, 60, 40.0), &slices, &c).unwrap();
    let d = c.predict_diameter(40.0, 60.0).unwrap().value;
    assert!(close(d, 12.756, 5e-4));
    assert!(min_edge_distance(&slices.layers[0], edge) < d / 2.0);
    let report = validate_design(&out, &slices, &c);
    assert!(!report.has_errors());
    assert!(report.diagnostics.iter().any(|d| d.code == DiagnosticCode::FootprintOverflow));
    assert!(out.layers[0].events[0].annotation.as_ref().unwrap().overflows_contour);

    let mut bad = good.clone();
    bad.layers[0].events[0].position = Point2::new(40.0, 0.0);
    bad.layers[0].events[0].channel = 9;
    let report = validate_design(&bad, &slices, &c);
    let codes: Vec<_> = report.errors().map(|d| d.code).collect();
    assert!(codes.contains(&DiagnosticCode::OutsideContour));
    assert!(codes.contains(&DiagnosticCode::ChannelOutOfRange));
    assert!(report.to_text().contains("error[outside_contour] layer 0 event 0"));
}

#[test]
fn stale_design_is_rejected() {
    let c = cal();
    let a = disc();
    let b = five_squares();
    let design = TasteDesign::new(&a, &c);
    let err = add_free_event(&design, 0, SprayEvent::new(1, Point2::new(1.0, 1.0), 20, 20.0), &b, &c).unwrap_err();
    assert!(matches!(err, PlannerError::StaleDesign { .. }));
    let report = validate_design(&design, &b, &c);
    assert!(report.errors().any(|d| d.code == DiagnosticCode::StaleDesign));
}

#[test]
fn intensity_slider_spans_the_range() {
    let c = cal();
    assert_eq!(intensity_to_duration(1, &c).unwrap(), 10);
    assert_eq!(intensity_to_duration(10, &c).unwrap(), 80);
    let steps: Vec<u32> = (1..=10).map(|l| intensity_to_duration(l, &c).unwrap()).collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
    assert!(intensity_to_duration(0, &c).is_err());
    assert!(intensity_to_duration(11, &c).is_err());
}

#[test]
fn design_json_round_trip() {
    let slices = disc();
    let c = cal();
    let design = TasteDesign::new(&slices, &c);
    let req = PatternRequest {
        channel: 0,
        duration_ms: 33,
        standoff_mm: 27.5,
        overlap: 0.1,
        extrapolated: false,
    };
    let design = fill_pattern(&design, 0, &req, &slices, &c).unwrap();
    let back = TasteDesign::from_json(&design.to_json()).unwrap();
    assert_eq!(back, design);
    assert_eq!(back.content_hash(), design.content_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn allocation_meets_target_without_clamping(side in 6.0f64..30.0, layers in 1usize..6, per_event in 0.7f64..6.0) {
        let slices = stack(&cuboid(Point3::new(0.0, 0.0, 0.0), Point3::new(side, side * 0.8, 1.6 * layers as f64)), 1.6);
        let c = cal();
        let base = TasteDesign::new(&slices, &c);
        // size the target from the site count so no event clamps
        let probe = AllocationRequest { channel: 0, total_mass_mg: 1.0, standoff_mm: 20.0, weights: None };
        let (probe_design, _) = match allocate_total_amount(&base, &probe, &slices, &c) {
            Ok(v) => v,
            Err(_) => return Ok(()),
        };
        let n = probe_design.event_count();
        prop_assume!(n > 0);
        let req = AllocationRequest { total_mass_mg: per_event * n as f64, ..probe };
        let (design, report) = allocate_total_amount(&base, &req, &slices, &c).unwrap();
        prop_assert_eq!(&base, &TasteDesign::new(&slices, &c));
        if report.clamped_events == 0 {
            let sum: f64 = design.layers.iter().flat_map(|l| &l.events).map(|e| c.mass_mg(e.duration_ms)).sum();
            prop_assert!((sum - req.total_mass_mg).abs() <= n as f64 * c.alpha1 + 1e-9);
        }
        prop_assert!(report.achieved_mg <= report.capacity_mg + 1e-9);
        let v = validate_design(&design, &slices, &c);
        prop_assert!(!v.has_errors(), "{}", v.to_text());
        let (again, _) = allocate_total_amount(&base, &req, &slices, &c).unwrap();
        prop_assert_eq!(again, design);
    }

    #[test]
    fn placed_events_always_validate(x in -15.0f64..15.0, y in -15.0f64..15.0, dur in 10u32..=80, standoff in 20.0f64..40.0, ch in 0u8..5) {
        let slices = disc();
        let c = cal();
        let design = TasteDesign::new(&slices, &c);
        match add_free_event(&design, 0, SprayEvent::new(ch, Point2::new(x, y), dur, standoff), &slices, &c) {
            Ok(out) => {
                let v = validate_design(&out, &slices, &c);
                prop_assert!(!v.has_errors(), "{}", v.to_text());
            }
            Err(PlannerError::Placement { .. }) => {
                prop_assert!(!oracle_inside(&slices.layers[0], Point2::new(x, y).quantized()) || min_edge_distance(&slices.layers[0], Point2::new(x, y)) < 1e-3);
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn pattern_count_matches_enumeration(r in 5.0f64..25.0, dur in 10u32..=80, overlap in 0.0f64..0.6) {
        let slices = stack(&cylinder(Point2::new(3.0, -2.0), r, 1.6, 48), 1.6);
        let c = cal();
        let req = PatternRequest { channel: 0, duration_ms: dur, standoff_mm: 20.0, overlap, extrapolated: false };
        let out = fill_pattern(&TasteDesign::new(&slices, &c), 0, &req, &slices, &c).unwrap();
        let pitch = c.predict_diameter(20.0, dur as f64).unwrap().value * (1.0 - overlap);
        let expected = oracle_lattice(&slices.layers[0], pitch);
        let got: Vec<Point2> = out.layers[0].events.iter().map(|e| e.position).collect();
        prop_assert_eq!(sorted(got), sorted(expected));
    }
}
