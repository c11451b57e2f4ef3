use serde::{Deserialize, Serialize};

use super::{Command, GcodeError, GcodeProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based source line.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProgram {
    pub program: GcodeProgram,
    pub warnings: Vec<ParseWarning>,
    /// Source line of each command.
    pub lines: Vec<usize>,
}

struct Params<'a> {
    line: usize,
    words: Vec<(char, &'a str)>,
}

impl<'a> Params<'a> {
    fn error(&self, message: String) -> GcodeError {
        GcodeError::Parse {
            line: self.line,
            message,
        }
    }

    fn only(&self, allowed: &str) -> Option<char> {
        self.words
            .iter()
            .map(|(l, _)| *l)
            .find(|l| !allowed.contains(*l))
    }

    fn decimal(&self, letter: char) -> Result<Option<f64>, GcodeError> {
        let mut found = None;
        for (l, text) in &self.words {
            if *l != letter {
                continue;
            }
            if found.is_some() {
                return Err(self.error(format!("parameter {letter} given twice")));
            }
            let v: f64 = text
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| self.error(format!("malformed parameter {letter}{text}")))?;
            found = Some(v);
        }
        Ok(found)
    }

    fn integer(&self, letter: char, max: u64) -> Result<Option<u64>, GcodeError> {
        match self.decimal(letter)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v <= max as f64 => Ok(Some(v as u64)),
            Some(v) => Err(self.error(format!("parameter {letter} must be an integer in [0, {max}], got {v}"))),
        }
    }
}

/// Line-based, tolerant parse of the dialect.
///
/// Blank lines, `N` line numbers and `*` checksums are dropped. Unknown
/// commands and unknown parameters keep the line as [`Command::Opaque`] with
/// a warning. Malformed numbers are errors.
pub fn parse_gcode(text: &str) -> Result<ParsedProgram, GcodeError> {
    let mut commands = Vec::new();
    let mut lines = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix(';') {
            commands.push(Command::comment(comment));
            lines.push(line);
            continue;
        }
        let code = trimmed.split(';').next().unwrap_or_default();
        let code = code.split('*').next().unwrap_or_default().trim();
        let mut tokens = code.split_whitespace().peekable();
        if tokens.peek().is_some_and(|t| t.starts_with(['N', 'n'])) {
            tokens.next();
        }
        let Some(word) = tokens.next() else {
            continue;
        };
        let mut words = Vec::new();
        for t in tokens {
            let mut chars = t.chars();
            let letter = chars.next().expect("non-empty token").to_ascii_uppercase();
            words.push((letter, chars.as_str()));
        }
        let params = Params { line, words };
        let opaque = |warnings: &mut Vec<ParseWarning>, why: String| {
            warnings.push(ParseWarning { line, message: why });
            Command::Opaque {
                text: trimmed.to_string(),
            }
        };
        let command = match word.to_ascii_uppercase().as_str() {
            w @ ("G0" | "G00" | "G1" | "G01") => match params.only("XYZEF") {
                Some(l) => opaque(&mut warnings, format!("unsupported parameter {l} on {w}")),
                None => Command::Move {
                    rapid: w.ends_with('0'),
                    x: params.decimal('X')?,
                    y: params.decimal('Y')?,
                    z: params.decimal('Z')?,
                    e: params.decimal('E')?,
                    f: params.decimal('F')?,
                },
            },
            "G4" | "G04" => match params.only("P") {
                Some(l) => opaque(&mut warnings, format!("unsupported parameter {l} on G4")),
                None => Command::Dwell {
                    ms: params
                        .integer('P', u32::MAX as u64)?
                        .ok_or_else(|| params.error("G4 needs P".into()))? as u32,
                },
            },
            "M810" => {
                if let Some(l) = params.only("CD") {
                    return Err(params.error(format!("unexpected parameter {l} on M810")));
                }
                let channel = params
                    .integer('C', u8::MAX as u64)?
                    .ok_or_else(|| params.error("M810 needs C".into()))?;
                let duration = params
                    .integer('D', u32::MAX as u64)?
                    .ok_or_else(|| params.error("M810 needs D".into()))?;
                Command::Spray {
                    channel: channel as u8,
                    duration_ms: duration as u32,
                }
            }
            w @ ("G28" | "G90" | "M82" | "M84") if !params.words.is_empty() => {
                opaque(&mut warnings, format!("parameters on {w} are not interpreted"))
            }
            "G28" => Command::Home,
            "G90" => Command::AbsolutePositioning,
            "M82" => Command::AbsoluteExtrusion,
            "M84" => Command::MotorsOff,
            w => opaque(&mut warnings, format!("unknown command {w}")),
        };
        for w in &warnings {
            if w.line == line {
                log::warn!("line {line}: {}", w.message);
            }
        }
        commands.push(command);
        lines.push(line);
    }
    Ok(ParsedProgram {
        program: GcodeProgram { commands },
        warnings,
        lines,
    })
}
