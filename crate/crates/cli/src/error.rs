use serde::Serialize;
use tasteprint_core::calibration::CalibrationError;
use tasteprint_core::gcode::GcodeError;
use tasteprint_core::geometry::GeometryError;
use tasteprint_core::imaging::ImagingError;
use tasteprint_core::planner::{Diagnostic, DiagnosticCode, PlannerError, Severity};
use tasteprint_core::simulator::SimulationError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Well-formed input that breaks a planner, model or machine rule.
    Validation,
    /// Unreadable or malformed input.
    Parse,
    /// Filesystem or socket failure.
    Io,
    NotFound,
    /// Write against a stale document version.
    Conflict,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppError {
    pub kind: ErrorKind,
    #[serde(rename = "error")]
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current_version: Option<u64>,
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> AppError {
        AppError {
            kind,
            message: message.into(),
            diagnostics: Vec::new(),
            current_version: None,
        }
    }

    pub fn validation(message: impl Into<String>) -> AppError {
        AppError::new(ErrorKind::Validation, message)
    }

    pub fn parse(message: impl Into<String>) -> AppError {
        AppError::new(ErrorKind::Parse, message)
    }

    pub fn not_found(message: impl Into<String>) -> AppError {
        AppError::new(ErrorKind::NotFound, message)
    }

    pub fn conflict(current_version: u64, sent: u64) -> AppError {
        AppError {
            current_version: Some(current_version),
            ..AppError::new(
                ErrorKind::Conflict,
                format!("design version {sent} is stale, current version is {current_version}"),
            )
        }
    }

    pub fn with_diagnostics(mut self, diagnostics: Vec<Diagnostic>) -> AppError {
        self.diagnostics = diagnostics;
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation | ErrorKind::Conflict => 1,
            ErrorKind::Parse | ErrorKind::Io | ErrorKind::NotFound => 2,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)?;
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for AppError {}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::new(ErrorKind::Io, e.to_string())
    }
}

impl From<serde_json::Error> for AppError {
    fn from(e: serde_json::Error) -> Self {
        AppError::parse(format!("invalid JSON: {e}"))
    }
}

fn planner_code(e: &PlannerError) -> Option<(DiagnosticCode, Option<usize>)> {
    use DiagnosticCode::*;
    Some(match e {
        PlannerError::Placement { layer, .. } => (OutsideContour, Some(*layer)),
        PlannerError::DurationOutOfRange { .. } | PlannerError::ZeroDuration => (InvalidDuration, None),
        PlannerError::InvalidStandoff(_) => (InvalidStandoff, None),
        PlannerError::UnknownChannel(_) => (ChannelOutOfRange, None),
        PlannerError::StaleDesign { .. } => (StaleDesign, None),
        PlannerError::LayerCountMismatch { .. } => (LayerCountMismatch, None),
        PlannerError::InvalidChannels(_) => (InvalidChannels, None),
        PlannerError::InvalidFootprint { .. } => (ZeroFootprint, None),
        _ => return None,
    })
}

impl From<PlannerError> for AppError {
    fn from(e: PlannerError) -> Self {
        let err = AppError::validation(e.to_string());
        match planner_code(&e) {
            Some((code, layer)) => err.with_diagnostics(vec![Diagnostic {
                severity: Severity::Error,
                code,
                layer,
                event: None,
                message: e.to_string(),
            }]),
            None => err,
        }
    }
}

impl From<CalibrationError> for AppError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Samples(_) => AppError::parse(e.to_string()),
            _ => AppError::validation(e.to_string()),
        }
    }
}

impl From<GeometryError> for AppError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Io { .. } => AppError::new(ErrorKind::Io, e.to_string()),
            GeometryError::InvalidLayerHeight(_) => AppError::validation(e.to_string()),
            _ => AppError::parse(e.to_string()),
        }
    }
}

impl From<GcodeError> for AppError {
    fn from(e: GcodeError) -> Self {
        match e {
            GcodeError::Parse { .. } => AppError::parse(e.to_string()),
            GcodeError::Planner(p) => p.into(),
            _ => AppError::validation(e.to_string()),
        }
    }
}

impl From<ImagingError> for AppError {
    fn from(e: ImagingError) -> Self {
        match e {
            ImagingError::Codec(_) | ImagingError::Annotation(_) => AppError::parse(e.to_string()),
            _ => AppError::validation(e.to_string()),
        }
    }
}

impl From<SimulationError> for AppError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Program(g) => g.into(),
            SimulationError::Calibration(c) => c.into(),
            _ => AppError::validation(e.to_string()),
        }
    }
}
