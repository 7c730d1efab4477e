//! Per-frame event annotations and their CSV form.
//!
//! One row per active (frame, class, track):
//! `frame,class_id,track_id,azimuth,elevation`, no header, frames at 100 ms.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Direction;

pub const DEFAULT_N_CLASSES: usize = 13;
/// Label frame length in seconds.
pub const LABEL_FRAME_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventLabel {
    pub frame: usize,
    pub class_id: usize,
    pub track_id: usize,
    pub direction: Direction,
}

impl EventLabel {
    fn key(&self) -> (usize, usize, usize) {
        (self.frame, self.class_id, self.track_id)
    }
}

/// Events of one clip, kept sorted by (frame, class_id, track_id).
#[derive(Debug, Clone, PartialEq)]
pub struct ClipAnnotation {
    events: Vec<EventLabel>,
    n_classes: usize,
}

impl ClipAnnotation {
    pub fn new(mut events: Vec<EventLabel>, n_classes: usize) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Config("n_classes must be positive".into()));
        }
        if let Some(e) = events.iter().find(|e| e.class_id >= n_classes) {
            return Err(Error::Invalid(format!(
                "class_id {} >= n_classes {}",
                e.class_id, n_classes
            )));
        }
        events.sort_by_key(EventLabel::key);
        if let Some(w) = events.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(Error::Invalid(format!(
                "duplicate label (frame {}, class {}, track {})",
                w[0].frame, w[0].class_id, w[0].track_id
            )));
        }
        Ok(ClipAnnotation { events, n_classes })
    }

    pub fn empty(n_classes: usize) -> Self {
        ClipAnnotation {
            events: Vec::new(),
            n_classes,
        }
    }

    pub fn events(&self) -> &[EventLabel] {
        &self.events
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// One past the last annotated frame, 0 when empty.
    pub fn frame_count(&self) -> usize {
        self.events.last().map_or(0, |e| e.frame + 1)
    }

    /// Distinct (frame, class) cells that hold more than one track.
    pub fn class_collisions(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .events
            .windows(2)
            .filter(|w| (w[0].frame, w[0].class_id) == (w[1].frame, w[1].class_id))
            .map(|w| (w[0].frame, w[0].class_id))
            .collect();
        out.dedup();
        out
    }
}

/// Formats an angle with the shortest representation that round-trips.
pub(crate) fn fmt_angle(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}

pub(crate) fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Parses headerless CSV rows, handing each trimmed record to `f` with its
/// 1-based line number.
pub(crate) fn for_each_row(
    path: &Path,
    text: &str,
    mut f: impl FnMut(usize, &csv::StringRecord) -> Result<()>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bytes = text.as_bytes();
    let line_at = |pos: Option<&csv::Position>| {
        pos.map_or(0, |p| {
            let mut start = p.byte() as usize;
            while start < bytes.len() && matches!(bytes[start], b'\r' | b'\n') {
                start += 1;
            }
            bytes[..start].iter().filter(|&&b| b == b'\n').count() + 1
        })
    };
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(path, line_at(e.position()), e.to_string()))?;
        let line = line_at(rec.position());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        f(line, &rec)?;
    }
    Ok(())
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    rec: &csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<T> {
    rec[idx]
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} {:?}", &rec[idx])))
}

pub fn parse_labels(path: &Path, text: &str, n_classes: usize) -> Result<ClipAnnotation> {
    let mut events = Vec::new();
    for_each_row(path, text, |line, rec| {
        if rec.len() != 5 {
            return Err(parse_err(
                path,
                line,
                format!("expected 5 columns, found {}", rec.len()),
            ));
        }
        let frame: usize = parse_field(path, line, rec, 0, "frame")?;
        let class_id: usize = parse_field(path, line, rec, 1, "class_id")?;
        let track_id: usize = parse_field(path, line, rec, 2, "track_id")?;
        let az: f64 = parse_field(path, line, rec, 3, "azimuth")?;
        let el: f64 = parse_field(path, line, rec, 4, "elevation")?;
        if class_id >= n_classes {
            return Err(parse_err(
                path,
                line,
                format!("class_id {class_id} out of range (n_classes {n_classes})"),
            ));
        }
        let direction = Direction::new(az, el).map_err(|e| parse_err(path, line, e.to_string()))?;
        events.push(EventLabel {
            frame,
            class_id,
            track_id,
            direction,
        });
        Ok(())
    })?;
    ClipAnnotation::new(events, n_classes)
}

pub fn read_labels(path: &Path, n_classes: usize) -> Result<ClipAnnotation> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(path, &text, n_classes)
}

pub fn format_labels(ann: &ClipAnnotation) -> String {
    let mut out = String::new();
    for e in &ann.events {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.frame,
            e.class_id,
            e.track_id,
            fmt_angle(e.direction.azimuth()),
            fmt_angle(e.direction.elevation())
        );
    }
    out
}

pub fn write_labels(ann: &ClipAnnotation, path: &Path) -> Result<()> {
    std::fs::write(path, format_labels(ann)).map_err(|e| Error::io(path, e))
}
