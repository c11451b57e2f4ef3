use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DepositionMap, SimulationResult};
use crate::calibration::CalibrationSet;
use crate::geometry::Point2;
use crate::imaging::{write_pgm, GrayPlane};
use crate::planner::TasteDesign;

/// Relative mass deviation above which a layer/channel pair is flagged.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassComparison {
    pub layer: usize,
    pub channel: u8,
    pub designed_mg: f64,
    pub simulated_mg: f64,
    pub relative_deviation: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotComparison {
    pub layer: usize,
    /// Position of the event within its design layer.
    pub event: usize,
    pub channel: u8,
    pub designed: Point2,
    pub simulated: Point2,
    pub deviation_mm: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cell_size: f64,
    pub masses: Vec<MassComparison>,
    pub spots: Vec<SpotComparison>,
    /// Layers whose simulated spray count differs from the design.
    pub count_mismatches: Vec<usize>,
    pub all_clear: bool,
}

impl ComparisonReport {
    pub fn max_centroid_deviation(&self) -> f64 {
        self.spots.iter().map(|s| s.deviation_mm).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for m in self.masses.iter().filter(|m| m.flagged) {
            out.push_str(&format!(
                "layer {} channel {}: designed {:.6} mg, simulated {:.6} mg\n",
                m.layer, m.channel, m.designed_mg, m.simulated_mg
            ));
        }
        for s in self.spots.iter().filter(|s| s.flagged) {
            out.push_str(&format!(
                "layer {} event {}: centroid off by {:.4} mm\n",
                s.layer, s.event, s.deviation_mm
            ));
        }
        for k in &self.count_mismatches {
            out.push_str(&format!("layer {k}: spray count differs from design\n"));
        }
        out.push_str(if self.all_clear { "all clear\n" } else { "deviations found\n" });
        out
    }
}

/// Designed versus simulated mass per layer and channel, and designed
/// versus rasterised spot centroids, matched in program order.
pub fn compare_to_design(result: &SimulationResult, design: &TasteDesign, cal: &CalibrationSet) -> ComparisonReport {
    let cell = result
        .maps
        .first()
        .map(|m| m.cell_size)
        .unwrap_or(f64::NAN);
    let layers = design.layers.len().max(result.maps.len());
    let mut masses = Vec::new();
    let mut spots = Vec::new();
    let mut count_mismatches = Vec::new();
    for k in 0..layers {
        let events = design.layers.get(k).map(|l| l.events.as_slice()).unwrap_or(&[]);
        let map = result.maps.get(k);
        let mut channels: Vec<u8> = events.iter().map(|e| e.channel).collect();
        if let Some(m) = map {
            channels.extend(m.channels.iter().map(|c| c.channel));
        }
        channels.sort_unstable();
        channels.dedup();
        for ch in channels {
            let designed: f64 = events
                .iter()
                .filter(|e| e.channel == ch)
                .map(|e| cal.mass_mg(e.duration_ms))
                .sum();
            let simulated = map.map(|m| m.mass(ch)).unwrap_or(0.0);
            let relative_deviation = if designed > 0.0 {
                (simulated - designed).abs() / designed
            } else if simulated == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            masses.push(MassComparison {
                layer: k,
                channel: ch,
                designed_mg: designed,
                simulated_mg: simulated,
                relative_deviation,
                flagged: relative_deviation > MASS_TOLERANCE,
            });
        }
        let records: Vec<_> = result.state.spray_log.iter().filter(|r| r.layer == k).collect();
        if records.len() != events.len() {
            count_mismatches.push(k);
        }
        for (i, (e, r)) in events.iter().zip(&records).enumerate() {
            let deviation = e.position.distance(r.centroid);
            spots.push(SpotComparison {
                layer: k,
                event: i,
                channel: e.channel,
                designed: e.position,
                simulated: r.centroid,
                deviation_mm: deviation,
                flagged: e.channel != r.channel || !(deviation <= cell),
            });
        }
    }
    let all_clear = count_mismatches.is_empty()
        && masses.iter().all(|m| !m.flagged)
        && spots.iter().all(|s| !s.flagged);
    ComparisonReport {
        cell_size: cell,
        masses,
        spots,
        count_mismatches,
        all_clear,
    }
}

#[derive(Serialize)]
struct MapSidecar<'a> {
    layer: usize,
    channel: u8,
    cell_size_mm: f64,
    origin: Point2,
    width: usize,
    height: usize,
    /// Row 0 of the image is the top (largest y) row of the map.
    rows: &'a str,
    max_density_mg_per_mm2: f64,
    /// Density represented by one gray level.
    mg_per_mm2_per_level: f64,
}

/// Writes `layer<k>_ch<c>.pgm` with a JSON sidecar for every sprayed
/// channel of every layer. Gray 255 is the layer/channel maximum.
pub fn export_maps(maps: &[DepositionMap], dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for map in maps {
        for ch in &map.channels {
            let max = ch.density.iter().cloned().fold(0.0, f64::max);
            let scale = if max > 0.0 { max / 255.0 } else { 0.0 };
            let plane = GrayPlane::from_fn(map.width, map.height, |i, row| {
                let j = map.height - 1 - row;
                let v = ch.density[j * map.width + i];
                if scale > 0.0 {
                    (v / scale).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            });
            let stem = format!("layer{:03}_ch{}", map.layer_index, ch.channel);
            let pgm = dir.join(format!("{stem}.pgm"));
            let mut bytes = Vec::new();
            write_pgm(&mut bytes, &plane).map_err(io::Error::other)?;
            std::fs::write(&pgm, bytes)?;
            let sidecar = MapSidecar {
                layer: map.layer_index,
                channel: ch.channel,
                cell_size_mm: map.cell_size,
                origin: map.origin,
                width: map.width,
                height: map.height,
                rows: "top_down",
                max_density_mg_per_mm2: max,
                mg_per_mm2_per_level: scale,
            };
            let json = dir.join(format!("{stem}.json"));
            std::fs::write(&json, serde_json::to_string_pretty(&sidecar).map_err(io::Error::other)?)?;
            written.push(pgm);
            written.push(json);
        }
    }
    Ok(written)
}

/// `layer,channel,mass_mg` for every sprayed channel of every layer.
pub fn masses_csv(maps: &[DepositionMap]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "channel", "mass_mg"]).expect("in-memory write");
    for map in maps {
        for ch in &map.channels {
            w.write_record([
                map.layer_index.to_string(),
                ch.channel.to_string(),
                format!("{:.9}", map.mass(ch.channel)),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}
