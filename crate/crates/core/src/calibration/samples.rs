use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::CalibrationError;

pub const SAMPLE_CSV_HEADER: &str = "distance_mm,duration_ms,diameter_mm,mass_mg,replicate";

/// One spray trial. Either measurement may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    #[serde(rename = "distance_mm")]
    pub distance: f64,
    #[serde(rename = "duration_ms")]
    pub duration: f64,
    #[serde(rename = "diameter_mm")]
    pub measured_diameter: Option<f64>,
    #[serde(rename = "mass_mg")]
    pub measured_mass: Option<f64>,
    #[serde(rename = "replicate")]
    pub replicate_index: u32,
}

impl CalibrationSample {
    pub fn diameter(distance: f64, duration: f64, diameter: f64, replicate: u32) -> Self {
        CalibrationSample {
            distance,
            duration,
            measured_diameter: Some(diameter),
            measured_mass: None,
            replicate_index: replicate,
        }
    }

    pub fn mass(distance: f64, duration: f64, mass: f64, replicate: u32) -> Self {
        CalibrationSample {
            distance,
            duration,
            measured_diameter: None,
            measured_mass: Some(mass),
            replicate_index: replicate,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.measured_diameter.is_none() && self.measured_mass.is_none() {
            return Err("sample has neither diameter nor mass".into());
        }
        for v in [self.measured_diameter, self.measured_mass].into_iter().flatten() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("measurement {v} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, CalibrationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<CalibrationSample>().enumerate() {
        // header is line 1
        let line = i + 2;
        let sample = row.map_err(|e| CalibrationError::Samples(format!("line {line}: {e}")))?;
        sample
            .validate()
            .map_err(|e| CalibrationError::Samples(format!("line {line}: {e}")))?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[CalibrationSample]) -> Result<(), CalibrationError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CalibrationError::Samples(e.to_string());
    if samples.is_empty() {
        wtr.write_record(SAMPLE_CSV_HEADER.split(',')).map_err(io)?;
    }
    for s in samples {
        wtr.serialize(s).map_err(io)?;
    }
    wtr.flush().map_err(|e| CalibrationError::Samples(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_empty_cells_as_absent() {
        let text = "distance_mm,duration_ms,diameter_mm,mass_mg,replicate\n20,20,7.1,,0\n20,10,,0.61,1\n";
        let samples = read_samples_csv(text.as_bytes()).unwrap();
        assert_eq!(samples[0], CalibrationSample::diameter(20.0, 20.0, 7.1, 0));
        assert_eq!(samples[1], CalibrationSample::mass(20.0, 10.0, 0.61, 1));
    }

    #[test]
    fn rejects_rows_without_measurement() {
        let text = "distance_mm,duration_ms,diameter_mm,mass_mg,replicate\n20,20,,,0\n";
        let err = read_samples_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn writes_documented_header() {
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[CalibrationSample::diameter(20.0, 40.0, 8.5, 2)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{SAMPLE_CSV_HEADER}\n20.0,40.0,8.5,,2\n"));
        assert_eq!(read_samples_csv(text.as_bytes()).unwrap().len(), 1);
    }
}
