use serde::{Deserialize, Serialize};

use super::{DesignMode, EventAnnotation, PlannerError, SprayEvent, TasteDesign};
use crate::calibration::CalibrationSet;
use crate::geometry::{disc_inside_rings, point_in_layer, LayerSlice, Point2, Rect, SliceStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternRequest {
    pub channel: u8,
    pub duration_ms: u32,
    pub standoff_mm: f64,
    /// Fraction of the footprint diameter shared by neighbours, in [0, 0.9].
    #[serde(default)]
    pub overlap: f64,
    #[serde(default)]
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRequest {
    pub channel: u8,
    pub total_mass_mg: f64,
    pub standoff_mm: f64,
    /// Multiplicative per-layer weights on top of area weighting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAllocation {
    pub layer: usize,
    pub area_mm2: f64,
    pub weight: f64,
    pub target_mg: f64,
    pub achieved_mg: f64,
    pub events: usize,
    pub durations_ms: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub channel: u8,
    pub target_mg: f64,
    pub achieved_mg: f64,
    /// Σ predicted mass with every event at the longest calibrated duration.
    pub capacity_mg: f64,
    pub layers: Vec<LayerAllocation>,
    /// Events pinned to either end of the duration range.
    pub clamped_events: usize,
    /// Milliseconds added or removed to settle the residual left by clamping.
    pub redistributed_ms: u32,
    /// Layers whose target could not host a single footprint.
    pub unplaced_layers: Vec<usize>,
}

fn check_layer(design: &TasteDesign, layer: usize) -> Result<(), PlannerError> {
    if layer >= design.layers.len() {
        return Err(PlannerError::LayerOutOfRange {
            layer,
            count: design.layers.len(),
        });
    }
    Ok(())
}

fn check_channel(design: &TasteDesign, channel: u8) -> Result<(), PlannerError> {
    design
        .channel(channel)
        .map(|_| ())
        .ok_or(PlannerError::UnknownChannel(channel))
}

fn check_standoff(standoff: f64) -> Result<(), PlannerError> {
    if standoff.is_finite() && standoff > 0.0 {
        Ok(())
    } else {
        Err(PlannerError::InvalidStandoff(standoff))
    }
}

fn check_duration(duration: u32, extrapolated: bool, cal: &CalibrationSet) -> Result<(), PlannerError> {
    if duration == 0 {
        return Err(PlannerError::ZeroDuration);
    }
    let (min, max) = (cal.min_duration_ms(), cal.max_duration_ms());
    if !extrapolated && !(min..=max).contains(&duration) {
        return Err(PlannerError::DurationOutOfRange { duration, min, max });
    }
    Ok(())
}

fn annotate(event: &mut SprayEvent, slice: &LayerSlice, cal: &CalibrationSet) {
    let diameter = cal.diameter_mm(event.standoff_mm, event.duration_ms);
    event.annotation = Some(EventAnnotation {
        diameter_mm: diameter,
        mass_mg: cal.mass_mg(event.duration_ms),
        overflows_contour: !disc_inside_rings(&slice.contours, event.position, diameter / 2.0),
    });
}

/// Appends one user-placed event to `layer`.
pub fn add_free_event(
    design: &TasteDesign,
    layer: usize,
    event: SprayEvent,
    slices: &SliceStack,
    cal: &CalibrationSet,
) -> Result<TasteDesign, PlannerError> {
    design.check_against(slices)?;
    check_layer(design, layer)?;
    check_channel(design, event.channel)?;
    check_standoff(event.standoff_mm)?;
    check_duration(event.duration_ms, event.extrapolated, cal)?;
    let slice = &slices.layers[layer];
    let mut event = SprayEvent {
        position: event.position.quantized(),
        standoff_mm: crate::geometry::round_to(event.standoff_mm, 1e3),
        ..event
    };
    if !event.position.is_finite() || !point_in_layer(slice, event.position) {
        return Err(PlannerError::Placement {
            layer,
            position: event.position,
        });
    }
    annotate(&mut event, slice, cal);
    if event.annotation.as_ref().is_some_and(|a| a.overflows_contour) {
        log::warn!(
            "layer {layer}: footprint at ({}, {}) extends past the contour",
            event.position.x,
            event.position.y
        );
    }
    let mut out = design.clone();
    let target = &mut out.layers[layer];
    target.events.push(event);
    target.mark(DesignMode::Free);
    target.sort_events();
    Ok(out)
}

/// Hexagonal lattice of the given pitch covering `bounds`, anchored at its
/// centre, in row-major order (rows by increasing y, then increasing x).
///
/// Odd rows are shifted by half a pitch. Points are on the 0.001 mm grid.
pub fn hex_lattice(bounds: Rect, pitch: f64) -> Vec<Point2> {
    let c = bounds.center();
    let row = pitch * 3f64.sqrt() / 2.0;
    let rows = (bounds.height() / 2.0 / row).ceil() as i64 + 1;
    let cols = (bounds.width() / 2.0 / pitch).ceil() as i64 + 1;
    let mut out = Vec::new();
    for j in -rows..=rows {
        let y = c.y + j as f64 * row;
        if y < bounds.min.y - 1e-9 || y > bounds.max.y + 1e-9 {
            continue;
        }
        let shift = if j.rem_euclid(2) == 1 { pitch / 2.0 } else { 0.0 };
        for i in -cols - 1..=cols {
            let x = c.x + shift + i as f64 * pitch;
            if x < bounds.min.x - 1e-9 || x > bounds.max.x + 1e-9 {
                continue;
            }
            out.push(Point2::new(x, y).quantized());
        }
    }
    out
}

fn lattice_in_layer(slice: &LayerSlice, pitch: f64) -> Vec<Point2> {
    match slice.bounds() {
        Some(bounds) => hex_lattice(bounds, pitch)
            .into_iter()
            .filter(|&p| point_in_layer(slice, p))
            .collect(),
        None => Vec::new(),
    }
}

/// Packs `layer` with footprints on a hexagonal lattice of pitch
/// `diameter × (1 − overlap)`.
pub fn fill_pattern(
    design: &TasteDesign,
    layer: usize,
    request: &PatternRequest,
    slices: &SliceStack,
    cal: &CalibrationSet,
) -> Result<TasteDesign, PlannerError> {
    design.check_against(slices)?;
    check_layer(design, layer)?;
    check_channel(design, request.channel)?;
    check_standoff(request.standoff_mm)?;
    check_duration(request.duration_ms, request.extrapolated, cal)?;
    if !(0.0..=0.9).contains(&request.overlap) {
        return Err(PlannerError::InvalidOverlap(request.overlap));
    }
    let diameter = cal
        .predict_diameter(request.standoff_mm, request.duration_ms as f64)?
        .value;
    if diameter <= 0.0 {
        return Err(PlannerError::InvalidFootprint { diameter });
    }
    let slice = &slices.layers[layer];
    let mut out = design.clone();
    let target = &mut out.layers[layer];
    for position in lattice_in_layer(slice, diameter * (1.0 - request.overlap)) {
        let mut event = SprayEvent {
            extrapolated: request.extrapolated,
            ..SprayEvent::new(request.channel, position, request.duration_ms, request.standoff_mm)
        };
        annotate(&mut event, slice, cal);
        target.events.push(event);
    }
    target.mark(DesignMode::Pattern);
    target.sort_events();
    Ok(out)
}

/// Distributes `total_mass_mg` of one channel over all layers in proportion
/// to weighted cross-section area.
///
/// Earlier events of the same channel are replaced. Footprints are laid out
/// as a zero-overlap lattice at the shortest calibrated duration, then each
/// layer's durations are set so its predicted mass meets its target within
/// one millisecond step per event.
pub fn allocate_total_amount(
    design: &TasteDesign,
    request: &AllocationRequest,
    slices: &SliceStack,
    cal: &CalibrationSet,
) -> Result<(TasteDesign, AllocationReport), PlannerError> {
    design.check_against(slices)?;
    check_channel(design, request.channel)?;
    check_standoff(request.standoff_mm)?;
    let total = request.total_mass_mg;
    if !(total.is_finite() && total > 0.0) {
        return Err(PlannerError::InvalidMass(total));
    }
    let weights = match &request.weights {
        Some(w) if w.len() != slices.len() => {
            return Err(PlannerError::InvalidWeights(format!(
                "{} weights for {} layers",
                w.len(),
                slices.len()
            )))
        }
        Some(w) if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
            return Err(PlannerError::InvalidWeights("weights must be finite and non-negative".into()))
        }
        Some(w) => w.clone(),
        None => vec![1.0; slices.len()],
    };
    let shares: Vec<f64> = slices
        .layers
        .iter()
        .zip(&weights)
        .map(|(l, w)| l.area * w)
        .collect();
    let share_sum: f64 = shares.iter().sum();
    if !(share_sum > 0.0) {
        return Err(PlannerError::NoPrintableLayer);
    }

    let (dmin, dmax) = (cal.min_duration_ms(), cal.max_duration_ms());
    let diameter = cal.predict_diameter(request.standoff_mm, dmin as f64)?.value;
    if diameter <= 0.0 {
        return Err(PlannerError::InvalidFootprint { diameter });
    }
    let sites: Vec<Vec<Point2>> = slices
        .layers
        .iter()
        .zip(&shares)
        .map(|(l, &s)| if s > 0.0 { lattice_in_layer(l, diameter) } else { Vec::new() })
        .collect();
    let site_count: usize = sites.iter().map(Vec::len).sum();
    let capacity = site_count as f64 * cal.mass_mg(dmax);
    if total > capacity * (1.0 + 1e-12) {
        return Err(PlannerError::Capacity {
            target: total,
            achievable: capacity,
        });
    }

    let (a0, a1) = (cal.alpha0, cal.alpha1);
    let mut durations: Vec<Vec<u32>> = Vec::with_capacity(slices.len());
    let mut targets = Vec::with_capacity(slices.len());
    let mut clamped_events = 0;
    let mut unplaced = Vec::new();
    for (k, layer_sites) in sites.iter().enumerate() {
        let target = total * shares[k] / share_sum;
        targets.push(target);
        let n = layer_sites.len();
        if n == 0 {
            if target > 0.0 {
                log::warn!("layer {k}: no footprint fits; {target} mg moved to other layers");
                unplaced.push(k);
            }
            durations.push(Vec::new());
            continue;
        }
        let ideal = (target / n as f64 - a0) / a1;
        let base = ideal.floor();
        let extra = ((ideal - base) * n as f64).round().clamp(0.0, n as f64) as usize;
        let layer_durations: Vec<u32> = (0..n)
            .map(|i| {
                let d = base + if i < extra { 1.0 } else { 0.0 };
                if d < dmin as f64 || d > dmax as f64 {
                    clamped_events += 1;
                }
                d.clamp(dmin as f64, dmax as f64) as u32
            })
            .collect();
        durations.push(layer_durations);
    }

    // clamping or unplaceable layers leave a net residual; settle it in
    // whole milliseconds on events that still have room, in event order
    let mut redistributed = 0u32;
    if clamped_events > 0 || !unplaced.is_empty() {
        let achieved: f64 = durations.iter().flatten().map(|&d| cal.mass_mg(d)).sum();
        let steps = ((total - achieved) / a1).round();
        let (mut left, grow) = (steps.abs() as u64, steps > 0.0);
        while left > 0 {
            let mut moved = false;
            for d in durations.iter_mut().flatten() {
                if left == 0 {
                    break;
                }
                if grow && *d < dmax {
                    *d += 1;
                } else if !grow && *d > dmin {
                    *d -= 1;
                } else {
                    continue;
                }
                left -= 1;
                redistributed += 1;
                moved = true;
            }
            if !moved {
                break;
            }
        }
    }

    let mut out = design.clone();
    let mut report_layers = Vec::with_capacity(slices.len());
    for (k, layer) in out.layers.iter_mut().enumerate() {
        layer.events.retain(|e| e.channel != request.channel);
        let slice = &slices.layers[k];
        for (&position, &d) in sites[k].iter().zip(&durations[k]) {
            let mut event = SprayEvent::new(request.channel, position, d, request.standoff_mm);
            annotate(&mut event, slice, cal);
            layer.events.push(event);
        }
        if !sites[k].is_empty() {
            layer.mark(DesignMode::TotalAmount);
        }
        layer.sort_events();
        report_layers.push(LayerAllocation {
            layer: k,
            area_mm2: slice.area,
            weight: weights[k],
            target_mg: targets[k],
            achieved_mg: durations[k].iter().map(|&d| cal.mass_mg(d)).sum(),
            events: durations[k].len(),
            durations_ms: durations[k].clone(),
        });
    }
    let achieved = report_layers.iter().map(|l| l.achieved_mg).sum();
    let report = AllocationReport {
        channel: request.channel,
        target_mg: total,
        achieved_mg: achieved,
        capacity_mg: capacity,
        layers: report_layers,
        clamped_events,
        redistributed_ms: redistributed,
        unplaced_layers: unplaced,
    };
    Ok((out, report))
}

/// Maps a 1–10 intensity level linearly onto the calibrated duration range.
pub fn intensity_to_duration(level: u8, cal: &CalibrationSet) -> Result<u32, PlannerError> {
    if !(1..=10).contains(&level) {
        return Err(PlannerError::InvalidIntensity(level));
    }
    let (lo, hi) = (cal.min_duration_ms() as f64, cal.max_duration_ms() as f64);
    Ok((lo + (hi - lo) * (level - 1) as f64 / 9.0).round() as u32)
}
