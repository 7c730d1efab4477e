//! Activity-coupled Cartesian DOA (ACCDOA) targets and decoding.
//!
//! Every (label frame, class) cell holds a 3-vector whose direction is the
//! source DOA and whose length is the event activity.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::features::tensor_io::{read_tensor, write_tensor, TensorHeader};
use crate::geometry::{norm3, vec_to_dir, Direction};
use crate::labels::{
    fmt_angle, for_each_row, parse_err, parse_field, ClipAnnotation,
};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `[label_frames x n_classes x 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccdoaSequence {
    pub data: Array3<f64>,
}

impl AccdoaSequence {
    pub fn zeros(frames: usize, n_classes: usize) -> Self {
        AccdoaSequence {
            data: Array3::zeros((frames, n_classes, 3)),
        }
    }

    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.dim().2 != 3 {
            return Err(Error::Shape(format!(
                "ACCDOA last axis must be 3, got {}",
                data.dim().2
            )));
        }
        Ok(AccdoaSequence { data })
    }

    pub fn frames(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_classes(&self) -> usize {
        self.data.dim().1
    }

    pub fn vector(&self, frame: usize, class: usize) -> [f64; 3] {
        std::array::from_fn(|i| self.data[[frame, class, i]])
    }

    pub fn set_vector(&mut self, frame: usize, class: usize, v: [f64; 3]) {
        for (i, c) in v.iter().enumerate() {
            self.data[[frame, class, i]] = *c;
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = TensorHeader {
            dims: vec![self.frames(), self.n_classes(), 3],
            channel_names: vec!["x".into(), "y".into(), "z".into()],
            config: serde_json::json!({ "format": "accdoa" }),
        };
        write_tensor(path, &header, self.data.iter())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, values) = read_tensor(path)?;
        if header.dims.len() != 3 || header.dims[2] != 3 {
            return Err(Error::Shape(format!(
                "{}: ACCDOA dims must be [frames, classes, 3], got {:?}",
                path.display(),
                header.dims
            )));
        }
        let data = Array3::from_shape_vec((header.dims[0], header.dims[1], 3), values)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(AccdoaSequence { data })
    }
}

/// A decoded event: one active (frame, class) vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedEvent {
    pub frame: usize,
    pub class_id: usize,
    pub direction: Direction,
    pub activity: f64,
}

impl DetectedEvent {
    /// The activity-scaled Cartesian vector.
    pub fn vector(&self) -> [f64; 3] {
        let u = self.direction.to_unit().to_array();
        u.map(|c| c * self.activity)
    }
}

/// Unit DOA vectors at active cells. A class with two simultaneous tracks
/// cannot be represented and is rejected.
pub fn encode(annotation: &ClipAnnotation, label_frames: usize) -> Result<AccdoaSequence> {
    if let Some(&(frame, class_id)) = annotation.class_collisions().first() {
        return Err(Error::ClassCollision { frame, class_id });
    }
    let mut seq = AccdoaSequence::zeros(label_frames, annotation.n_classes());
    for e in annotation.events() {
        if e.frame >= label_frames {
            return Err(Error::Invalid(format!(
                "label frame {} beyond sequence length {label_frames}",
                e.frame
            )));
        }
        seq.set_vector(e.frame, e.class_id, e.direction.to_unit().to_array());
    }
    Ok(seq)
}

/// Emits an event wherever the vector norm exceeds `threshold`.
pub fn decode(seq: &AccdoaSequence, threshold: f64) -> Vec<DetectedEvent> {
    let mut out = Vec::new();
    for frame in 0..seq.frames() {
        for class_id in 0..seq.n_classes() {
            let v = seq.vector(frame, class_id);
            let activity = norm3(v);
            if activity > threshold {
                if let Ok(direction) = vec_to_dir(v) {
                    out.push(DetectedEvent {
                        frame,
                        class_id,
                        direction,
                        activity,
                    });
                }
            }
        }
    }
    out
}

/// CSV rows `frame,class_id,track_id,azimuth,elevation,activity`. Track ids
/// number same-class events within a frame in list order.
pub fn format_events(events: &[DetectedEvent]) -> String {
    let mut sorted: Vec<&DetectedEvent> = events.iter().collect();
    sorted.sort_by_key(|e| (e.frame, e.class_id));
    let mut out = String::new();
    let mut prev = None;
    let mut track = 0;
    for e in sorted {
        if prev == Some((e.frame, e.class_id)) {
            track += 1;
        } else {
            track = 0;
        }
        prev = Some((e.frame, e.class_id));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            e.frame,
            e.class_id,
            track,
            fmt_angle(e.direction.azimuth()),
            fmt_angle(e.direction.elevation()),
            e.activity
        );
    }
    out
}

pub fn write_events(events: &[DetectedEvent], path: &Path) -> Result<()> {
    std::fs::write(path, format_events(events)).map_err(|e| Error::io(path, e))
}

/// Reads event CSV with or without the trailing activity column (label
/// files therefore load as events of activity 1).
pub fn parse_events(path: &Path, text: &str, n_classes: usize) -> Result<Vec<DetectedEvent>> {
    let mut out = Vec::new();
    for_each_row(path, text, |line, rec| {
        if rec.len() != 5 && rec.len() != 6 {
            return Err(parse_err(
                path,
                line,
                format!("expected 5 or 6 columns, found {}", rec.len()),
            ));
        }
        let frame: usize = parse_field(path, line, rec, 0, "frame")?;
        let class_id: usize = parse_field(path, line, rec, 1, "class_id")?;
        let _track: usize = parse_field(path, line, rec, 2, "track_id")?;
        let az: f64 = parse_field(path, line, rec, 3, "azimuth")?;
        let el: f64 = parse_field(path, line, rec, 4, "elevation")?;
        let activity: f64 = if rec.len() == 6 {
            parse_field(path, line, rec, 5, "activity")?
        } else {
            1.0
        };
        if class_id >= n_classes {
            return Err(parse_err(path, line, format!("class_id {class_id} out of range")));
        }
        let direction = Direction::new(az, el).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(DetectedEvent {
            frame,
            class_id,
            direction,
            activity,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_events(path: &Path, n_classes: usize) -> Result<Vec<DetectedEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_events(path, &text, n_classes)
}
