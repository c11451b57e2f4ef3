#![allow(dead_code)]

use tasteprint_core::calibration::CalibrationSet;
use tasteprint_core::gcode::{Command, GcodeProgram, MachineProfile};
use tasteprint_core::geometry::shapes::{cuboid, cylinder};
use tasteprint_core::geometry::{
    generate_all_paths, slice_mesh, ExtrusionPath, InfillSettings, Point2, Point3, SliceStack,
};
use tasteprint_core::planner::{add_free_event, fill_pattern, PatternRequest, SprayEvent, TasteDesign};

pub struct Fixture {
    pub slices: SliceStack,
    pub paths: Vec<ExtrusionPath>,
    pub design: TasteDesign,
    pub cal: CalibrationSet,
    pub profile: MachineProfile,
}

/// Airbrushes on a 12 mm ring around the nozzle, 60° apart.
pub fn radial_profile() -> MachineProfile {
    MachineProfile {
        airbrush_offsets: (0..6)
            .map(|i| {
                let a = i as f64 * std::f64::consts::PI / 3.0;
                Point2::new(12.0 * a.cos(), 12.0 * a.sin()).quantized()
            })
            .collect(),
        ..MachineProfile::default()
    }
}

fn build(slices: SliceStack, profile: MachineProfile) -> (SliceStack, Vec<ExtrusionPath>, TasteDesign, CalibrationSet, MachineProfile) {
    let cal = CalibrationSet::default();
    let paths = generate_all_paths(&slices, InfillSettings { density: 0.5, spacing: 1.6 });
    let design = TasteDesign::new(&slices, &cal);
    (slices, paths, design, cal, profile)
}

/// 30 mm cylinder, `layers` layers of 1.6 mm. Every layer carries a packed
/// pattern on channel 0, three free events on channel 1 and one centred
/// event on channel 2, with durations and standoffs varying by layer.
pub fn column(layers: usize, profile: MachineProfile) -> Fixture {
    let mesh = cylinder(Point2::new(0.0, 0.0), 15.0, 1.6 * layers as f64, 64);
    let (slices, paths, mut design, cal, profile) = build(slice_mesh(&mesh, 1.6).unwrap(), profile);
    assert_eq!(slices.len(), layers);
    for k in 0..layers {
        let req = PatternRequest {
            channel: 0,
            duration_ms: 10 + (k as u32 * 7) % 71,
            standoff_mm: 20.0 + (k % 5) as f64 * 4.5,
            overlap: 0.1,
            extrapolated: false,
        };
        design = fill_pattern(&design, k, &req, &slices, &cal).unwrap();
        for j in 0..3 {
            let a = k as f64 * 0.7 + j as f64 * 2.1;
            let at = Point2::new(6.3 * a.cos(), 6.3 * a.sin());
            let event = SprayEvent::new(1, at, 12 + (k as u32 + 5 * j) % 60, 22.25 + j as f64);
            design = add_free_event(&design, k, event, &slices, &cal).unwrap();
        }
        let event = SprayEvent::new(2, Point2::new(0.125, -0.375), 15 + k as u32, 31.0);
        design = add_free_event(&design, k, event, &slices, &cal).unwrap();
    }
    Fixture {
        slices,
        paths,
        design,
        cal,
        profile,
    }
}

/// One 20 mm square layer with the given events.
pub fn square_layer(events: &[SprayEvent]) -> Fixture {
    let mesh = cuboid(Point3::new(-10.0, -10.0, 0.0), Point3::new(10.0, 10.0, 1.6));
    let (slices, paths, mut design, cal, profile) = build(slice_mesh(&mesh, 1.6).unwrap(), MachineProfile::default());
    for e in events {
        design = add_free_event(&design, 0, e.clone(), &slices, &cal).unwrap();
    }
    Fixture {
        slices,
        paths,
        design,
        cal,
        profile,
    }
}

/// Two stacked 20 mm square layers with one event each.
pub fn two_squares() -> Fixture {
    let mesh = cuboid(Point3::new(-10.0, -10.0, 0.0), Point3::new(10.0, 10.0, 3.2));
    let (slices, paths, mut design, cal, profile) = build(slice_mesh(&mesh, 1.6).unwrap(), MachineProfile::default());
    for k in 0..2 {
        let e = SprayEvent::new(k as u8, Point2::new(k as f64, -(k as f64)), 20 + k as u32, 20.0);
        design = add_free_event(&design, k, e, &slices, &cal).unwrap();
    }
    Fixture {
        slices,
        paths,
        design,
        cal,
        profile,
    }
}

pub fn block_bounds(p: &GcodeProgram, layer: usize) -> (usize, usize) {
    let b = p.layer_blocks().into_iter().find(|b| b.layer == layer).unwrap();
    (b.start, b.end)
}

/// Moves the first spray triple of `layer` right behind the layer's first Z move.
pub fn spray_before_extrusion(p: &GcodeProgram, layer: usize) -> GcodeProgram {
    let (start, end) = block_bounds(p, layer);
    let mut cmds = p.commands.clone();
    let s = (start..end).find(|&i| matches!(cmds[i], Command::Spray { .. })).unwrap();
    let triple: Vec<Command> = cmds.drain(s - 1..=s + 1).collect();
    let z = (start..end).find(|&i| matches!(cmds[i], Command::Move { z: Some(_), .. })).unwrap();
    for (n, c) in triple.into_iter().enumerate() {
        cmds.insert(z + 1 + n, c);
    }
    GcodeProgram { commands: cmds }
}

/// Drops every move at the layer Z of `layer` by two layer heights.
pub fn lower_layer(p: &GcodeProgram, layer: usize, by: f64) -> GcodeProgram {
    let (start, end) = block_bounds(p, layer);
    let mut cmds = p.commands.clone();
    let top = (start..end)
        .find_map(|i| match cmds[i] {
            Command::Move { z: Some(z), .. } => Some(z),
            _ => None,
        })
        .unwrap();
    for c in &mut cmds[start..end] {
        if let Command::Move { z: Some(z), .. } = c {
            if *z == top {
                *z = top - by;
            }
        }
    }
    GcodeProgram { commands: cmds }
}

pub fn orphan(p: &GcodeProgram, layer: usize) -> GcodeProgram {
    let (start, _) = block_bounds(p, layer);
    let mut cmds = p.commands.clone();
    cmds.insert(start + 1, Command::Spray { channel: 0, duration_ms: 20 });
    GcodeProgram { commands: cmds }
}
