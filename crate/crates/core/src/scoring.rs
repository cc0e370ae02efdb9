//! Diarization error rate with collar and overlap exclusion, optimal
//! speaker mapping, window-to-timeline conversion, and the F-ratio
//! diagnostic.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::data::{Annotation, Recording};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::similarity::SimilarityMatrix;

/// DER components in seconds plus the resulting rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerBreakdown {
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored: f64,
    pub der: f64,
}

/// Scoring options: collar half-width around reference turn boundaries and
/// whether regions with overlapping reference speakers are excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerOptions {
    pub collar: f64,
    pub ignore_overlap: bool,
}

impl Default for DerOptions {
    fn default() -> Self {
        DerOptions {
            collar: 0.25,
            ignore_overlap: true,
        }
    }
}

/// Convert a window-level partition into a timeline annotation: consecutive
/// equal labels merge into turns with boundaries at the midpoint of the
/// overlap of adjacent windows; labels render as `spk<k>`.
pub fn partition_to_annotation(recording: &Recording, partition: &Partition) -> Result<Annotation> {
    if partition.len() != recording.num_windows() {
        return Err(Error::Input(format!(
            "{} labels for {} windows",
            partition.len(),
            recording.num_windows()
        )));
    }
    Ok(crate::data::labels_to_annotation(
        &recording.windows,
        partition.labels(),
    ))
}

struct SpeakerIntervals {
    names: Vec<String>,
    intervals: Vec<Vec<(f64, f64)>>,
}

fn collect_speakers(annotation: &Annotation) -> SpeakerIntervals {
    let mut map: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for t in &annotation.turns {
        map.entry(t.speaker.as_str())
            .or_default()
            .push((t.onset, t.offset()));
    }
    let mut names = Vec::new();
    let mut intervals = Vec::new();
    for (name, mut ivs) in map {
        ivs.sort_by(|a, b| a.0.total_cmp(&b.0));
        names.push(name.to_string());
        intervals.push(ivs);
    }
    SpeakerIntervals { names, intervals }
}

fn active_at(intervals: &[(f64, f64)], t: f64) -> bool {
    intervals.iter().any(|&(a, b)| a <= t && t < b)
}

const SLICE_EPS: f64 = 1e-9;

/// Diarization error rate between a reference and a hypothesis annotation.
///
/// The scored timeline excludes `collar` seconds on both sides of every
/// reference turn boundary and, when `ignore_overlap` is set, every region
/// where two or more reference speakers are active. The speaker mapping is
/// the exact assignment maximizing matched time; components follow the
/// standard definitions (missed speech, false alarm, speaker confusion over
/// scored reference speech).
pub fn der(
    reference: &Annotation,
    hypothesis: &Annotation,
    opts: &DerOptions,
) -> Result<DerBreakdown> {
    if reference.turns.is_empty() {
        return Err(Error::Input("nothing to score: empty reference".into()));
    }
    let refs = collect_speakers(reference);
    let hyps = collect_speakers(hypothesis);

    let mut exclusions: Vec<(f64, f64)> = Vec::new();
    if opts.collar > 0.0 {
        for t in &reference.turns {
            exclusions.push((t.onset - opts.collar, t.onset + opts.collar));
            exclusions.push((t.offset() - opts.collar, t.offset() + opts.collar));
        }
        exclusions.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    let mut events: Vec<f64> = Vec::new();
    for ivs in refs.intervals.iter().chain(hyps.intervals.iter()) {
        for &(a, b) in ivs {
            events.push(a);
            events.push(b);
        }
    }
    for &(a, b) in &exclusions {
        events.push(a);
        events.push(b);
    }
    events.sort_by(f64::total_cmp);
    events.dedup_by(|a, b| (*a - *b).abs() < SLICE_EPS);

    // slice decomposition: speaker activity is constant between events
    struct Slice {
        duration: f64,
        refs: Vec<usize>,
        hyps: Vec<usize>,
    }
    let mut slices = Vec::new();
    for pair in events.windows(2) {
        let (t0, t1) = (pair[0], pair[1]);
        if t1 - t0 < SLICE_EPS {
            continue;
        }
        let mid = 0.5 * (t0 + t1);
        if exclusions.iter().any(|&(a, b)| a <= mid && mid < b) {
            continue;
        }
        let active_refs: Vec<usize> = (0..refs.names.len())
            .filter(|&r| active_at(&refs.intervals[r], mid))
            .collect();
        if opts.ignore_overlap && active_refs.len() >= 2 {
            continue;
        }
        let active_hyps: Vec<usize> = (0..hyps.names.len())
            .filter(|&h| active_at(&hyps.intervals[h], mid))
            .collect();
        if active_refs.is_empty() && active_hyps.is_empty() {
            continue;
        }
        slices.push(Slice {
            duration: t1 - t0,
            refs: active_refs,
            hyps: active_hyps,
        });
    }

    // pass 1: joint speech time per (reference, hypothesis) speaker pair
    let nr = refs.names.len();
    let nh = hyps.names.len();
    let mut joint = vec![vec![0.0f64; nh]; nr];
    for s in &slices {
        for &r in &s.refs {
            for &h in &s.hyps {
                joint[r][h] += s.duration;
            }
        }
    }
    let mapping = optimal_mapping(&joint);

    // pass 2: accumulate components under the fixed mapping
    let mut missed = 0.0;
    let mut false_alarm = 0.0;
    let mut confusion = 0.0;
    let mut scored = 0.0;
    for s in &slices {
        let nref = s.refs.len();
        let nhyp = s.hyps.len();
        scored += nref as f64 * s.duration;
        let correct = s
            .refs
            .iter()
            .filter(|&&r| mapping[r].is_some_and(|h| s.hyps.contains(&h)))
            .count();
        missed += (nref.saturating_sub(nhyp)) as f64 * s.duration;
        false_alarm += (nhyp.saturating_sub(nref)) as f64 * s.duration;
        confusion += (nref.min(nhyp) - correct) as f64 * s.duration;
    }
    let errors = missed + false_alarm + confusion;
    let der = if scored > 0.0 {
        errors / scored
    } else if errors > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DerBreakdown {
        missed,
        false_alarm,
        confusion,
        scored,
        der,
    })
}

/// Exact assignment of reference speakers to hypothesis speakers maximizing
/// total joint time. Returns per-reference-speaker hypothesis indices.
fn optimal_mapping(joint: &[Vec<f64>]) -> Vec<Option<usize>> {
    let nr = joint.len();
    if nr == 0 {
        return Vec::new();
    }
    let nh = joint[0].len();
    if nh == 0 {
        return vec![None; nr];
    }
    // pad to square; weights in integer nanoseconds keep the solver exact
    let dim = nr.max(nh);
    let weights = Matrix::from_fn(dim, dim, |(r, h)| {
        if r < nr && h < nh {
            (joint[r][h] * 1e9).round() as i64
        } else {
            0
        }
    });
    let (_, assignment) = kuhn_munkres(&weights);
    (0..nr)
        .map(|r| {
            let h = assignment[r];
            if h < nh && joint[r][h] > 0.0 {
                Some(h)
            } else {
                None
            }
        })
        .collect()
}

/// Between-speaker to within-speaker variance ratio of the similarity-score
/// population, a separability diagnostic.
///
/// Decomposition: the off-diagonal scores are grouped by the unordered
/// speaker-label pair of their endpoints; with group means `mu_g`, sizes
/// `n_g` and grand mean `mu`, the ratio is
/// `[sum_g n_g (mu_g - mu)^2] / [sum_g sum_{s in g} (s - mu_g)^2]`
/// (the shared population-size normalizer cancels). Returns `+inf` when the
/// within variance is zero.
pub fn f_ratio(s: &SimilarityMatrix, labels: &[usize]) -> Result<f64> {
    let n = s.n();
    if labels.len() != n {
        return Err(Error::Input(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    let speakers: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if speakers.len() < 2 {
        return Err(Error::Input("F-ratio needs at least 2 speakers".into()));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let key = (labels[i].min(labels[j]), labels[i].max(labels[j]));
            groups.entry(key).or_default().push(s.get(i, j));
        }
    }
    let total: usize = groups.values().map(Vec::len).sum();
    let grand_mean: f64 = groups.values().flatten().sum::<f64>() / total as f64;
    let mut between = 0.0;
    let mut within = 0.0;
    for scores in groups.values() {
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        between += scores.len() as f64 * (mean - grand_mean).powi(2);
        within += scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(between / within)
}

/// Reverse of [`partition_to_annotation`] for round-trip checks: each window
/// takes the label of the turn containing its midpoint.
pub fn annotation_to_labels(recording: &Recording, annotation: &Annotation) -> Result<Vec<usize>> {
    let mut speaker_ids: BTreeMap<&str, usize> = BTreeMap::new();
    for t in &annotation.turns {
        let next = speaker_ids.len();
        speaker_ids.entry(t.speaker.as_str()).or_insert(next);
    }
    recording
        .windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mid = w.midpoint();
            annotation
                .turns
                .iter()
                .find(|t| mid >= t.onset && mid < t.offset())
                .map(|t| speaker_ids[t.speaker.as_str()])
                .ok_or_else(|| {
                    Error::Input(format!("window {i} midpoint not covered by any turn"))
                })
        })
        .collect()
}
