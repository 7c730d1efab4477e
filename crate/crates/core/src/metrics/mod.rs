//! Location-dependent SELD metrics: ER and F at a spatial threshold,
//! class-dependent localization error and recall, macro-averaged over
//! classes.
//!
//! Predictions and references are matched per (label frame, class) by a
//! minimum total angular distance assignment. A matched pair within the
//! threshold is a true positive; a pair beyond it counts as one false
//! positive and one false negative. Error-rate substitutions, deletions and
//! insertions are computed from false positive/negative counts pooled over
//! segments of `segment_frames` label frames.

pub mod hungarian;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accdoa::DetectedEvent;
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, Direction};
use crate::labels::{ClipAnnotation, DEFAULT_N_CLASSES};

/// LE reported when no class has a single matched pair.
pub const MAX_LOCALIZATION_ERROR: f64 = 180.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub spatial_threshold: f64,
    pub segment_frames: usize,
    pub n_classes: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            spatial_threshold: 20.0,
            segment_frames: 10,
            n_classes: DEFAULT_N_CLASSES,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spatial_threshold > 0.0 && self.spatial_threshold < 180.0) {
            return Err(Error::Config("spatial_threshold must be in (0, 180)".into()));
        }
        if self.segment_frames == 0 {
            return Err(Error::Config("segment_frames must be >= 1".into()));
        }
        if self.n_classes == 0 {
            return Err(Error::Config("n_classes must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of matching one frame/class cell.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Matching {
    /// (prediction index, reference index, angular distance in degrees)
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_refs: Vec<usize>,
}

pub fn match_frame(preds: &[Direction], refs: &[Direction]) -> Matching {
    let cost: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| refs.iter().map(|r| angular_distance(*p, *r)).collect())
        .collect();
    let assignment = if refs.is_empty() {
        vec![None; preds.len()]
    } else {
        hungarian::assign(&cost)
    };
    let mut out = Matching::default();
    let mut ref_used = vec![false; refs.len()];
    for (i, a) in assignment.iter().enumerate() {
        match a {
            Some(j) => {
                ref_used[*j] = true;
                out.pairs.push((i, *j, cost[i][*j]));
            }
            None => out.unmatched_preds.push(i),
        }
    }
    out.unmatched_refs = (0..refs.len()).filter(|&j| !ref_used[j]).collect();
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub fp: usize,
    pub fn_: usize,
    pub n_ref: usize,
}

/// Counts for one class. Segments still being filled live in `open`;
/// [`ClassStats::close_segments`] folds them into the error-rate sums.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassStats {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub loc_error_sum: f64,
    pub loc_match_count: usize,
    pub ref_count: usize,
    pub det_recall_count: usize,
    /// Σ over closed segments of S + D + I.
    pub segment_errors: usize,
    /// Σ over closed segments of reference counts.
    pub segment_refs: usize,
    pub open: BTreeMap<usize, SegmentCounts>,
}

impl ClassStats {
    pub fn accumulate(&mut self, matching: &Matching, segment: usize, config: &MetricConfig) {
        let seg = self.open.entry(segment).or_default();
        for &(_, _, dist) in &matching.pairs {
            if dist <= config.spatial_threshold {
                self.tp += 1;
            } else {
                self.fp += 1;
                self.fn_ += 1;
                seg.fp += 1;
                seg.fn_ += 1;
            }
            self.loc_error_sum += dist;
            self.loc_match_count += 1;
            self.det_recall_count += 1;
        }
        self.fp += matching.unmatched_preds.len();
        seg.fp += matching.unmatched_preds.len();
        self.fn_ += matching.unmatched_refs.len();
        seg.fn_ += matching.unmatched_refs.len();
        let n_ref = matching.pairs.len() + matching.unmatched_refs.len();
        self.ref_count += n_ref;
        seg.n_ref += n_ref;
    }

    pub fn close_segments(&mut self) {
        for seg in std::mem::take(&mut self.open).into_values() {
            let s = seg.fp.min(seg.fn_);
            let d = seg.fn_.saturating_sub(seg.fp);
            let i = seg.fp.saturating_sub(seg.fn_);
            self.segment_errors += s + d + i;
            self.segment_refs += seg.n_ref;
        }
    }

    /// Sums closed statistics; both sides must have no open segments.
    pub fn merge(&mut self, other: &ClassStats) {
        debug_assert!(self.open.is_empty() && other.open.is_empty());
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.loc_error_sum += other.loc_error_sum;
        self.loc_match_count += other.loc_match_count;
        self.ref_count += other.ref_count;
        self.det_recall_count += other.det_recall_count;
        self.segment_errors += other.segment_errors;
        self.segment_refs += other.segment_refs;
    }
}

pub fn accumulate(stats: &mut ClassStats, matching: &Matching, segment: usize, config: &MetricConfig) {
    stats.accumulate(matching, segment, config);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class_id: usize,
    pub ref_count: usize,
    pub er20: Option<f64>,
    pub f20: Option<f64>,
    pub le_cd: Option<f64>,
    pub lr_cd: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeldScores {
    pub er20: f64,
    pub f20: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    pub per_class: Vec<ClassScores>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Macro-averaged scores. Classes without references are left out of every
/// average; LE additionally skips classes without matched pairs.
pub fn finalize(stats: &[ClassStats], _config: &MetricConfig) -> Result<SeldScores> {
    let per_class: Vec<ClassScores> = stats
        .iter()
        .enumerate()
        .map(|(class_id, st)| {
            let mut st = st.clone();
            st.close_segments();
            let has_refs = st.ref_count > 0;
            ClassScores {
                class_id,
                ref_count: st.ref_count,
                er20: has_refs.then(|| st.segment_errors as f64 / st.segment_refs as f64),
                f20: has_refs
                    .then(|| 2.0 * st.tp as f64 / (2 * st.tp + st.fp + st.fn_) as f64),
                le_cd: (has_refs && st.loc_match_count > 0)
                    .then(|| st.loc_error_sum / st.loc_match_count as f64),
                lr_cd: has_refs.then(|| st.det_recall_count as f64 / st.ref_count as f64),
                tp: st.tp,
                fp: st.fp,
                fn_: st.fn_,
            }
        })
        .collect();
    let er20 = mean(per_class.iter().filter_map(|c| c.er20)).ok_or(Error::UndefinedMetrics)?;
    Ok(SeldScores {
        er20,
        f20: mean(per_class.iter().filter_map(|c| c.f20)).unwrap_or(0.0),
        le_cd: mean(per_class.iter().filter_map(|c| c.le_cd)).unwrap_or(MAX_LOCALIZATION_ERROR),
        lr_cd: mean(per_class.iter().filter_map(|c| c.lr_cd)).unwrap_or(0.0),
        per_class,
    })
}

/// Frame-wise matching of one clip; returns closed per-class statistics
/// ready to be merged with other clips.
pub fn clip_stats(
    preds: &[DetectedEvent],
    refs: &ClipAnnotation,
    config: &MetricConfig,
) -> Result<Vec<ClassStats>> {
    config.validate()?;
    if refs.n_classes() != config.n_classes {
        return Err(Error::Config(format!(
            "annotation has {} classes, metric config {}",
            refs.n_classes(),
            config.n_classes
        )));
    }
    let mut cells: BTreeMap<(usize, usize), (Vec<Direction>, Vec<Direction>)> = BTreeMap::new();
    for p in preds {
        if p.class_id >= config.n_classes {
            return Err(Error::Invalid(format!("prediction class {} out of range", p.class_id)));
        }
        cells.entry((p.frame, p.class_id)).or_default().0.push(p.direction);
    }
    for r in refs.events() {
        cells.entry((r.frame, r.class_id)).or_default().1.push(r.direction);
    }
    let mut stats = vec![ClassStats::default(); config.n_classes];
    for ((frame, class), (p, r)) in &cells {
        let m = match_frame(p, r);
        stats[*class].accumulate(&m, frame / config.segment_frames, config);
    }
    for s in stats.iter_mut() {
        s.close_segments();
    }
    Ok(stats)
}

pub fn evaluate(
    preds: &[DetectedEvent],
    refs: &ClipAnnotation,
    config: &MetricConfig,
) -> Result<SeldScores> {
    finalize(&clip_stats(preds, refs, config)?, config)
}

/// Sums per-class statistics of several clips.
pub fn merge_stats(acc: &mut Vec<ClassStats>, clip: &[ClassStats]) {
    if acc.len() < clip.len() {
        acc.resize(clip.len(), ClassStats::default());
    }
    for (a, c) in acc.iter_mut().zip(clip) {
        a.merge(c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::EventLabel;
    use crate::rotation::all_patterns;
    use proptest::prelude::*;

    fn dir(az: f64, el: f64) -> Direction {
        Direction::new(az, el).unwrap()
    }

    fn ev(frame: usize, class_id: usize, az: f64, el: f64) -> DetectedEvent {
        DetectedEvent {
            frame,
            class_id,
            direction: dir(az, el),
            activity: 1.0,
        }
    }

    fn ann(events: &[(usize, usize, usize, f64, f64)], n: usize) -> ClipAnnotation {
        ClipAnnotation::new(
            events
                .iter()
                .map(|&(frame, class_id, track_id, az, el)| EventLabel {
                    frame,
                    class_id,
                    track_id,
                    direction: dir(az, el),
                })
                .collect(),
            n,
        )
        .unwrap()
    }

    fn cfg(n: usize) -> MetricConfig {
        MetricConfig {
            n_classes: n,
            ..Default::default()
        }
    }

    #[test]
    fn matching_cases() {
        assert_eq!(match_frame(&[], &[]), Matching::default());
        let m = match_frame(&[dir(10.0, 0.0)], &[dir(0.0, 0.0), dir(90.0, 0.0)]);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].1, 0);
        assert_eq!(m.unmatched_refs, vec![1]);
        let m = match_frame(&[dir(10.0, 0.0), dir(50.0, 0.0)], &[]);
        assert_eq!(m.unmatched_preds, vec![0, 1]);
    }

    #[test]
    fn accumulate_rules() {
        let c = MetricConfig::default();
        let mut st = ClassStats::default();
        st.accumulate(&match_frame(&[dir(0.0, 0.0)], &[dir(0.0, 0.0)]), 0, &c);
        assert_eq!((st.tp, st.fp, st.fn_), (1, 0, 0));
        assert_eq!(st.loc_error_sum, 0.0);

        let mut st = ClassStats::default();
        st.accumulate(&match_frame(&[dir(30.0, 0.0)], &[dir(0.0, 0.0)]), 0, &c);
        assert_eq!((st.tp, st.fp, st.fn_), (0, 1, 1));
        assert!((st.loc_error_sum - 30.0).abs() < 1e-12);
        assert_eq!(st.det_recall_count, 1);

        let mut st = ClassStats::default();
        st.accumulate(&match_frame(&[dir(30.0, 0.0)], &[]), 0, &c);
        assert_eq!((st.tp, st.fp, st.fn_), (0, 1, 0));
    }

    #[test]
    fn perfect_predictions() {
        let r = ann(&[(0, 0, 0, 10.0, 0.0), (1, 0, 0, 12.0, 0.0), (5, 3, 0, -40.0, 20.0)], 13);
        let p: Vec<DetectedEvent> = r
            .events()
            .iter()
            .map(|e| ev(e.frame, e.class_id, e.direction.azimuth(), e.direction.elevation()))
            .collect();
        let s = evaluate(&p, &r, &cfg(13)).unwrap();
        assert_eq!((s.er20, s.f20, s.le_cd, s.lr_cd), (0.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn no_predictions() {
        let r = ann(&[(0, 0, 0, 10.0, 0.0), (11, 2, 0, 12.0, 0.0)], 13);
        let s = evaluate(&[], &r, &cfg(13)).unwrap();
        assert_eq!((s.er20, s.f20, s.le_cd, s.lr_cd), (1.0, 0.0, 180.0, 0.0));
    }

    #[test]
    fn mixed_two_class_case() {
        let r = ann(&[(0, 0, 0, 0.0, 0.0), (0, 1, 0, 0.0, 0.0)], 2);
        let p = [ev(0, 0, 0.0, 0.0), ev(0, 1, 30.0, 0.0)];
        let s = evaluate(&p, &r, &cfg(2)).unwrap();
        assert!((s.er20 - 0.5).abs() < 1e-12);
        assert!((s.f20 - 0.5).abs() < 1e-12);
        assert!((s.le_cd - 15.0).abs() < 1e-12);
        assert!((s.lr_cd - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_references_is_undefined() {
        let r = ClipAnnotation::empty(13);
        assert!(matches!(
            evaluate(&[ev(0, 0, 0.0, 0.0)], &r, &cfg(13)),
            Err(Error::UndefinedMetrics)
        ));
    }

    #[test]
    fn shifted_predictions_give_error_rate_at_least_one() {
        // class 0 active in segment 0, predicted only in segment 1
        let r = ann(&(0..10).map(|f| (f, 0, 0, 0.0, 0.0)).collect::<Vec<_>>(), 13);
        let p: Vec<DetectedEvent> = (10..20).map(|f| ev(f, 0, 0.0, 0.0)).collect();
        let s = evaluate(&p, &r, &cfg(13)).unwrap();
        // 10 deletions in segment 0 plus 10 insertions in segment 1 over 10 refs
        assert!((s.er20 - 2.0).abs() < 1e-12);
        assert!(s.per_class[0].er20.unwrap() >= 1.0);
    }

    #[test]
    fn segment_pooling_pairs_fp_with_fn() {
        // a miss in frame 0 and a spurious detection in frame 1 of the same
        // segment count as one substitution
        let r = ann(&[(0, 0, 0, 0.0, 0.0)], 13);
        let p = [ev(1, 0, 0.0, 0.0)];
        let s = evaluate(&p, &r, &cfg(13)).unwrap();
        assert!((s.er20 - 1.0).abs() < 1e-12);
        let c = MetricConfig {
            segment_frames: 1,
            ..cfg(13)
        };
        let s = evaluate(&p, &r, &c).unwrap();
        assert!((s.er20 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn merging_clips_equals_pooled_counts() {
        let r = ann(&[(0, 0, 0, 0.0, 0.0), (3, 1, 0, 50.0, 0.0)], 2);
        let p = [ev(0, 0, 25.0, 0.0), ev(3, 1, 55.0, 0.0)];
        let one = clip_stats(&p, &r, &cfg(2)).unwrap();
        let mut acc = Vec::new();
        merge_stats(&mut acc, &one);
        merge_stats(&mut acc, &one);
        let s = finalize(&acc, &cfg(2)).unwrap();
        assert_eq!(acc[0].ref_count, 2);
        assert_eq!(s, {
            let mut single = finalize(&one, &cfg(2)).unwrap();
            for c in single.per_class.iter_mut() {
                c.ref_count *= 2;
                c.tp *= 2;
                c.fp *= 2;
                c.fn_ *= 2;
            }
            single
        });
    }

    fn arb_clip() -> impl Strategy<Value = (Vec<DetectedEvent>, ClipAnnotation)> {
        let cell = (0usize..25, 0usize..3, -179.0f64..180.0, -80.0f64..80.0);
        (
            proptest::collection::vec(cell.clone(), 1..30),
            proptest::collection::vec(cell, 0..30),
        )
            .prop_map(|(refs, preds)| {
                let refs: Vec<_> = refs
                    .into_iter()
                    .enumerate()
                    .map(|(i, (f, c, az, el))| (f, c, i, az, el))
                    .collect();
                let preds = preds.into_iter().map(|(f, c, az, el)| ev(f, c, az, el)).collect();
                (preds, ann(&refs, 3))
            })
    }

    proptest! {
        #[test]
        fn scores_stay_in_range((p, r) in arb_clip()) {
            let s = evaluate(&p, &r, &cfg(3)).unwrap();
            prop_assert!(s.er20 >= 0.0);
            prop_assert!((0.0..=1.0).contains(&s.f20));
            prop_assert!((0.0..=1.0).contains(&s.lr_cd));
            prop_assert!((0.0..=180.0).contains(&s.le_cd));
        }

        #[test]
        fn invariant_under_global_rotation((p, r) in arb_clip(), pid in 0usize..16) {
            let pat = all_patterns()[pid];
            let rp: Vec<DetectedEvent> = p
                .iter()
                .map(|e| DetectedEvent { direction: pat.apply_to_direction(e.direction), ..*e })
                .collect();
            let rr = ClipAnnotation::new(
                r.events()
                    .iter()
                    .map(|e| EventLabel { direction: pat.apply_to_direction(e.direction), ..*e })
                    .collect(),
                3,
            )
            .unwrap();
            let a = evaluate(&p, &r, &cfg(3)).unwrap();
            let b = evaluate(&rp, &rr, &cfg(3)).unwrap();
            prop_assert!((a.er20 - b.er20).abs() < 1e-9);
            prop_assert!((a.f20 - b.f20).abs() < 1e-9);
            prop_assert!((a.le_cd - b.le_cd).abs() < 1e-9);
            prop_assert!((a.lr_cd - b.lr_cd).abs() < 1e-9);
        }

        #[test]
        fn spurious_prediction_never_helps(
            (p, r) in arb_clip(),
            az in -179.0f64..180.0,
            class in 0usize..3,
        ) {
            // a frame beyond every reference has no references to match
            let frame = 100;
            let base = evaluate(&p, &r, &cfg(3)).unwrap();
            let mut more = p.clone();
            more.push(ev(frame, class, az, 0.0));
            let s = evaluate(&more, &r, &cfg(3)).unwrap();
            prop_assert!(s.er20 >= base.er20 - 1e-12);
            prop_assert!(s.f20 <= base.f20 + 1e-12);
        }
    }
}
