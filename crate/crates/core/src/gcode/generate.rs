use super::{Command, GcodeError, GcodeProgram, MachineProfile};
use crate::calibration::CalibrationSet;
use crate::geometry::{round_to, ExtrusionPath, Point2, SliceStack};
use crate::planner::{validate_design, SprayEvent, TasteDesign};
use crate::TOOL_VERSION;

fn q3(v: f64) -> f64 {
    round_to(v, 1e3)
}

fn q6(v: f64) -> f64 {
    round_to(v, 1e6)
}

/// Clearance above the highest point reached, mm.
const FINAL_LIFT: f64 = 10.0;

/// Emits the merged program: per layer, extrusion along `paths` and then the
/// layer's sprays.
///
/// E is absolute and advances by `length × layer_height × nozzle × flow`.
/// Airbrush offsets are applied on the 0.001 mm grid.
pub fn generate_gcode(
    slices: &SliceStack,
    paths: &[ExtrusionPath],
    design: &TasteDesign,
    profile: &MachineProfile,
    cal: &CalibrationSet,
) -> Result<GcodeProgram, GcodeError> {
    profile.validate()?;
    if paths.len() != slices.len() {
        return Err(GcodeError::LayerCountMismatch {
            paths: paths.len(),
            layers: slices.len(),
        });
    }
    design.check_against(slices)?;
    let report = validate_design(design, slices, cal);
    if let Some(first) = report.errors().next() {
        return Err(GcodeError::InvalidDesign(first.to_string()));
    }

    let travel = q3(profile.travel_feedrate);
    let print = q3(profile.print_feedrate);
    let e_per_mm = slices.layer_height * profile.nozzle_diameter_mm * profile.flow_multiplier;
    let z_max = profile.build_volume[2];

    let mut out = vec![
        Command::comment(format!("generated by tasteprint {TOOL_VERSION}")),
        Command::comment(format!("calibration: {}", cal.id)),
        Command::comment(format!("design: {}", design.content_hash())),
        Command::comment(format!("layers: {}", slices.len())),
        Command::AbsolutePositioning,
        Command::AbsoluteExtrusion,
        Command::Home,
    ];
    let mut e = 0.0;
    let mut highest: f64 = 0.0;
    for (k, (slice, path)) in slices.layers.iter().zip(paths).enumerate() {
        let top = q3(slice.z_top);
        highest = highest.max(top);
        out.push(Command::comment(format!("LAYER:{k}")));
        out.push(Command::Move {
            rapid: true,
            x: None,
            y: None,
            z: Some(top),
            e: None,
            f: Some(travel),
        });
        for segment in path.segments.iter().filter(|s| s.len() >= 2) {
            let start = segment[0].quantized();
            out.push(Command::travel(start.x, start.y, Some(top), travel));
            for (i, w) in segment.windows(2).enumerate() {
                e += w[0].distance(w[1]) * e_per_mm;
                let p = w[1].quantized();
                out.push(Command::Move {
                    rapid: false,
                    x: Some(p.x),
                    y: Some(p.y),
                    z: None,
                    e: Some(q6(e)),
                    f: (i == 0).then_some(print),
                });
            }
        }
        for event in &design.layers[k].events {
            let offset = profile
                .offset(event.channel)
                .ok_or(GcodeError::ChannelOutOfRange {
                    index: out.len(),
                    channel: event.channel,
                })?
                .quantized();
            let target = (event.position - offset).quantized();
            let z = q3(top + event.standoff_mm);
            if z > z_max {
                return Err(GcodeError::OutOfRange {
                    layer: k,
                    z,
                    max: z_max,
                });
            }
            highest = highest.max(z);
            out.push(Command::travel(target.x, target.y, Some(z), travel));
            out.push(Command::Spray {
                channel: event.channel,
                duration_ms: event.duration_ms,
            });
            out.push(Command::Dwell {
                ms: event.duration_ms,
            });
        }
    }
    out.push(Command::comment("END"));
    out.push(Command::Move {
        rapid: true,
        x: None,
        y: None,
        z: Some(q3((highest + FINAL_LIFT).min(z_max))),
        e: None,
        f: Some(travel),
    });
    out.push(Command::MotorsOff);
    Ok(GcodeProgram { commands: out })
}

/// Recovers per-layer spray events from a program.
///
/// The surface position adds the channel's airbrush offset back to the
/// travel position; the standoff is the spray Z minus the first Z set in the
/// layer block.
pub fn extract_spray_plan(
    program: &GcodeProgram,
    profile: &MachineProfile,
) -> Result<Vec<Vec<SprayEvent>>, GcodeError> {
    let blocks = program.layer_blocks();
    if blocks.is_empty() {
        return Err(GcodeError::NoLayers);
    }
    let layer_count = blocks.iter().map(|b| b.layer + 1).max().unwrap_or(0);
    let mut plan = vec![Vec::new(); layer_count];

    let (mut x, mut y, mut z) = (None, None, None);
    let mut layer: Option<usize> = None;
    let mut layer_z: Option<f64> = None;
    let mut positioned = false;
    for (index, c) in program.commands.iter().enumerate() {
        if let Some(k) = c.layer_marker() {
            layer = Some(k);
            layer_z = None;
            positioned = false;
            continue;
        }
        if c.is_end_marker() {
            layer = None;
            continue;
        }
        match c {
            Command::Move {
                x: mx, y: my, z: mz, ..
            } => {
                x = mx.or(x);
                y = my.or(y);
                if let Some(v) = mz {
                    z = Some(*v);
                    if layer.is_some() && layer_z.is_none() {
                        layer_z = Some(*v);
                    }
                }
                positioned |= mx.is_some() || my.is_some();
            }
            Command::Spray {
                channel,
                duration_ms,
            } => {
                let k = layer.ok_or(GcodeError::SprayOutsideLayer { index })?;
                let offset = profile
                    .offset(*channel)
                    .ok_or(GcodeError::ChannelOutOfRange {
                        index,
                        channel: *channel,
                    })?
                    .quantized();
                let (Some(px), Some(py), true) = (x, y, positioned) else {
                    return Err(GcodeError::OrphanSpray { index });
                };
                let sz = z.unwrap_or(0.0);
                let standoff = sz - layer_z.unwrap_or(sz);
                plan[k].push(SprayEvent::new(
                    *channel,
                    Point2::new(px, py) + offset,
                    *duration_ms,
                    standoff,
                ));
            }
            _ => {}
        }
    }
    Ok(plan)
}
