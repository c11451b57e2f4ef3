use serde::{Deserialize, Serialize};

use crate::gcode::{Command, GcodeProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A spray precedes an extruding move of the same block.
    SprayBeforeExtrusion,
    /// An extruding move runs at a Z other than the layer Z.
    ZChangeDuringExtrusion,
    /// A spray at or below the layer Z.
    NonPositiveStandoff,
    /// A block's layer Z is below the previous block's.
    ZRegression,
    /// A spray with no XY positioning earlier in its block.
    OrphanSpray,
    /// A spray before the first layer marker or after `;END`.
    SprayOutsideLayer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncViolation {
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    /// Command index in the program.
    pub command: usize,
    pub message: String,
}

const Z_TOLERANCE: f64 = 1e-9;

/// Checks the extrude-then-spray contract block by block.
///
/// The layer Z of a block is the first Z it sets. An orphan spray is
/// reported alone; no other rule is applied to it.
pub fn check_synchronization(program: &GcodeProgram) -> Vec<SyncViolation> {
    let mut out = Vec::new();
    let cmds = &program.commands;
    let mut z = 0.0;

    let mut previous_layer_z: Option<(usize, f64)> = None;
    let mut layer: Option<usize> = None;
    let mut layer_z: Option<f64> = None;
    let mut positioned = false;
    let mut last_extrusion: Option<usize> = None;
    let mut pending_sprays: Vec<usize> = Vec::new();
    let mut z_reported = false;

    let close_block = |layer: Option<usize>, pending: &mut Vec<usize>, last: Option<usize>, out: &mut Vec<SyncViolation>| {
        if let Some(last) = last {
            for &s in pending.iter().filter(|&&s| s < last) {
                out.push(SyncViolation {
                    kind: ViolationKind::SprayBeforeExtrusion,
                    layer,
                    command: s,
                    message: format!(
                        "layer {}: spray at command {s} precedes extrusion at command {last}",
                        layer.unwrap_or_default()
                    ),
                });
            }
        }
        pending.clear();
    };

    for (i, c) in cmds.iter().enumerate() {
        if c.layer_marker().is_some() || c.is_end_marker() {
            close_block(layer, &mut pending_sprays, last_extrusion, &mut out);
            layer = c.layer_marker();
            layer_z = None;
            positioned = false;
            last_extrusion = None;
            z_reported = false;
            continue;
        }
        match c {
            Command::Move { x, y, z: mz, .. } => {
                if let Some(v) = mz {
                    z = *v;
                    if let (Some(k), None) = (layer, layer_z) {
                        layer_z = Some(z);
                        if let Some((pk, pz)) = previous_layer_z {
                            if z < pz - Z_TOLERANCE {
                                out.push(SyncViolation {
                                    kind: ViolationKind::ZRegression,
                                    layer: Some(k),
                                    command: i,
                                    message: format!("layer {k}: Z {z} is below layer {pk} Z {pz}"),
                                });
                            }
                        }
                        previous_layer_z = Some((k, z));
                    }
                }
                positioned |= x.is_some() || y.is_some();
                if c.is_extruding() {
                    if let Some(k) = layer {
                        last_extrusion = Some(i);
                        let lz = *layer_z.get_or_insert(z);
                        if (z - lz).abs() > Z_TOLERANCE && !z_reported {
                            z_reported = true;
                            out.push(SyncViolation {
                                kind: ViolationKind::ZChangeDuringExtrusion,
                                layer: Some(k),
                                command: i,
                                message: format!("layer {k}: extrusion at Z {z}, layer Z is {lz}"),
                            });
                        }
                    }
                }
            }
            Command::Spray { .. } => {
                let Some(k) = layer else {
                    out.push(SyncViolation {
                        kind: ViolationKind::SprayOutsideLayer,
                        layer: None,
                        command: i,
                        message: format!("spray at command {i} is outside every layer block"),
                    });
                    continue;
                };
                if !positioned {
                    out.push(SyncViolation {
                        kind: ViolationKind::OrphanSpray,
                        layer: Some(k),
                        command: i,
                        message: format!("layer {k}: spray at command {i} has no positioning move"),
                    });
                    continue;
                }
                pending_sprays.push(i);
                let lz = layer_z.unwrap_or(z);
                if z - lz <= Z_TOLERANCE {
                    out.push(SyncViolation {
                        kind: ViolationKind::NonPositiveStandoff,
                        layer: Some(k),
                        command: i,
                        message: format!("layer {k}: spray at Z {z} is not above layer Z {lz}"),
                    });
                }
            }
            _ => {}
        }
    }
    close_block(layer, &mut pending_sprays, last_extrusion, &mut out);
    out.sort_by_key(|v| v.command);
    out
}
