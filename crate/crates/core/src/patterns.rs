//! Cross-window verification, the pattern database and occurrence scanning.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{segments_of, Circuit};
use crate::ddmin::{discover, DiscoverOptions, DiscoveryStatus};
use crate::error::{Error, Result};
use crate::hardware::{export_calibration, open_window, BackendSpec, ContextRule};
use crate::seed;
use crate::template::{extract_template, find_occurrences_with, Template, Timelines};

pub const DB_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MIN_CONSISTENCY: f64 = 0.7;

/// One calibration window of one verification session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowRef {
    pub session: u64,
    pub index: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRun {
    pub window: WindowRef,
    pub status: DiscoveryStatus,
    pub flagged_segments: Vec<usize>,
    pub baseline_ratio: f64,
    pub tau: f64,
    pub oracle_calls: usize,
    /// Whether the mock backend drew a transient rule for this window.
    pub transient_rule: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTally {
    pub segment: usize,
    pub flagged: usize,
    pub windows: usize,
    pub consistency: f64,
}

/// Ops of a segment flagged at least once, and the template they would promote to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentCandidate {
    pub segment: usize,
    pub op_ids: Vec<usize>,
    pub ops: Vec<String>,
    /// Largest connected group of the segment's ops, if it has at least two.
    pub template: Option<Template>,
    pub qubit_tuple: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub backend_id: String,
    pub session: u64,
    pub segment_size: usize,
    pub num_segments: usize,
    pub windows: Vec<WindowRun>,
    pub tallies: Vec<SegmentTally>,
    pub candidates: Vec<SegmentCandidate>,
}

/// Runs `discover` in `n_windows` independent calibration windows of `spec`
/// and tallies how often each segment is flagged.
pub fn verify(
    circuit: &Circuit,
    spec: &BackendSpec,
    n_windows: usize,
    opts: &DiscoverOptions,
    master_seed: u64,
) -> Result<PersistenceReport> {
    if n_windows < 2 {
        return Err(Error::invalid("verification needs at least two windows"));
    }
    let num_segments = segments_of(circuit, opts.segment_size)?.len();
    let windows: Vec<WindowRun> = (0..n_windows as u64)
        .into_par_iter()
        .map(|w| {
            let window = open_window(spec, w, master_seed)?;
            let nm = export_calibration(&window);
            let seed = seed::derive(master_seed, &[seed::tag("discover"), w]);
            let r = discover(circuit, &window, &nm, opts, seed)?;
            Ok(WindowRun {
                window: WindowRef {
                    session: master_seed,
                    index: w,
                },
                status: r.status,
                flagged_segments: r.flagged_segments,
                baseline_ratio: r.baseline.ratio,
                tau: r.calibration.tau,
                oracle_calls: r.oracle_calls,
                transient_rule: window.transient,
            })
        })
        .collect::<Result<_>>()?;

    let tallies: Vec<SegmentTally> = (0..num_segments)
        .map(|s| {
            let flagged = windows.iter().filter(|w| w.flagged_segments.contains(&s)).count();
            SegmentTally {
                segment: s,
                flagged,
                windows: n_windows,
                consistency: flagged as f64 / n_windows as f64,
            }
        })
        .collect();
    let candidates = tallies
        .iter()
        .filter(|t| t.flagged > 0)
        .map(|t| segment_candidate(circuit, opts.segment_size, t.segment))
        .collect::<Result<_>>()?;
    Ok(PersistenceReport {
        backend_id: circuit.backend_id.clone(),
        session: master_seed,
        segment_size: opts.segment_size,
        num_segments,
        windows,
        tallies,
        candidates,
    })
}

/// Splits the segment's non-measurement ops into groups connected through
/// shared qubits and extracts the largest (earliest on ties).
pub fn segment_candidate(circuit: &Circuit, segment_size: usize, segment: usize) -> Result<SegmentCandidate> {
    let segments = segments_of(circuit, segment_size)?;
    let seg = segments
        .get(segment)
        .ok_or_else(|| Error::invalid(format!("segment {segment} out of range")))?;
    let mut positions: Vec<usize> = seg.op_indices.clone();
    positions.sort_unstable();
    let ops = circuit.ops();
    let usable: Vec<usize> = positions.iter().copied().filter(|&p| !ops[p].kind.is_measure()).collect();

    let mut component = vec![usize::MAX; usable.len()];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..usable.len() {
        if component[i] != usize::MAX {
            continue;
        }
        let id = groups.len();
        component[i] = id;
        let mut stack = vec![i];
        let mut members = Vec::new();
        while let Some(k) = stack.pop() {
            members.push(usable[k]);
            for j in 0..usable.len() {
                if component[j] == usize::MAX && ops[usable[k]].shares_qubit(&ops[usable[j]]) {
                    component[j] = id;
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    let best = groups
        .iter()
        .enumerate()
        .max_by_key(|(i, g)| (g.len(), std::cmp::Reverse(*i)))
        .map(|(_, g)| g.clone());
    let (template, qubit_tuple) = match best {
        Some(g) if g.len() >= 2 => {
            let (t, b) = extract_template(circuit, &g)?;
            (Some(t), b)
        }
        _ => (None, Vec::new()),
    };
    Ok(SegmentCandidate {
        segment,
        op_ids: positions.iter().map(|&p| ops[p].id).collect(),
        ops: positions.iter().map(|&p| ops[p].to_string()).collect(),
        template,
        qubit_tuple,
    })
}

impl PersistenceReport {
    pub fn tally(&self, segment: usize) -> Option<&SegmentTally> {
        self.tallies.get(segment)
    }

    /// One row per window: the abnormal segments it reported.
    pub fn windows_csv(&self) -> String {
        let mut out = String::from("window,status,abnormal_segments\n");
        for w in &self.windows {
            let segs: Vec<String> = w.flagged_segments.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "{},{},{}", w.window.index + 1, w.status.as_str(), segs.join(" "));
        }
        out
    }

    /// One row per segment flagged at least once.
    pub fn tally_csv(&self) -> String {
        let mut out = String::from("segment,flagged,windows,consistency\n");
        for t in self.tallies.iter().filter(|t| t.flagged > 0) {
            let _ = writeln!(out, "{},{},{},{:.3}", t.segment, t.flagged, t.windows, t.consistency);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PatternKey {
    pub backend_id: String,
    pub qubit_tuple: Vec<u32>,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSegment {
    pub session: u64,
    pub segment: usize,
    pub op_ids: Vec<usize>,
    pub ops: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryMetadata {
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternEntry {
    pub backend_id: String,
    pub qubit_tuple: Vec<u32>,
    pub template: Template,
    pub windows_flagged: usize,
    pub windows_total: usize,
    /// Windows that flagged the pattern.
    pub window_ids: BTreeSet<WindowRef>,
    /// Every window the pattern was tested in.
    pub windows_seen: BTreeSet<WindowRef>,
    pub source_segment: Option<SourceSegment>,
    pub metadata: EntryMetadata,
}

impl PatternEntry {
    /// An entry with no window evidence, mirroring a known rule.
    pub fn from_rule(backend_id: &str, rule: &ContextRule, now: DateTime<Utc>) -> Self {
        PatternEntry {
            backend_id: backend_id.to_string(),
            qubit_tuple: rule.qubits.clone(),
            template: rule.template.clone(),
            windows_flagged: 0,
            windows_total: 0,
            window_ids: BTreeSet::new(),
            windows_seen: BTreeSet::new(),
            source_segment: None,
            metadata: EntryMetadata { created: now, updated: now },
        }
    }

    pub fn key(&self) -> PatternKey {
        PatternKey {
            backend_id: self.backend_id.clone(),
            qubit_tuple: self.qubit_tuple.clone(),
            template: self.template.clone(),
        }
    }

    pub fn consistency(&self) -> f64 {
        if self.windows_total == 0 {
            0.0
        } else {
            self.windows_flagged as f64 / self.windows_total as f64
        }
    }

    fn validate(&self) -> Result<()> {
        if self.windows_flagged > self.windows_total {
            return Err(Error::invalid("windows_flagged exceeds windows_total"));
        }
        if self.qubit_tuple.len() != self.template.num_roles() {
            return Err(Error::invalid("qubit tuple does not match the template's roles"));
        }
        Ok(())
    }

    /// Union of both entries' window evidence.
    fn absorb(&mut self, other: &PatternEntry) {
        self.window_ids.extend(other.window_ids.iter().copied());
        self.windows_seen.extend(other.windows_seen.iter().copied());
        self.windows_seen.extend(self.window_ids.iter().copied());
        self.windows_flagged = self.window_ids.len();
        self.windows_total = self.windows_seen.len();
        if self.source_segment.is_none() {
            self.source_segment = other.source_segment.clone();
        }
        self.metadata.created = self.metadata.created.min(other.metadata.created);
        self.metadata.updated = self.metadata.updated.max(other.metadata.updated);
    }
}

/// Entries for segments flagged consistently enough, timestamped now.
pub fn promote(report: &PersistenceReport, min_consistency: f64) -> Result<Vec<PatternEntry>> {
    promote_at(report, min_consistency, Utc::now())
}

/// As [`promote`] with an explicit timestamp. A segment needs
/// `consistency >= min_consistency`, at least two flagging windows and a
/// connected group of two or more ops.
pub fn promote_at(report: &PersistenceReport, min_consistency: f64, now: DateTime<Utc>) -> Result<Vec<PatternEntry>> {
    if !(min_consistency > 0.0 && min_consistency <= 1.0) {
        return Err(Error::invalid("min_consistency must lie in (0, 1]"));
    }
    let seen: BTreeSet<WindowRef> = report.windows.iter().map(|w| w.window).collect();
    let mut db = PatternDb::new();
    for cand in &report.candidates {
        let Some(tally) = report.tally(cand.segment) else { continue };
        let Some(template) = &cand.template else { continue };
        // Compare counts, not the float ratio, so the boundary is inclusive.
        let needed = (min_consistency * tally.windows as f64 - 1e-9).ceil() as usize;
        if tally.flagged < 2 || tally.flagged < needed {
            continue;
        }
        let flagged: BTreeSet<WindowRef> = report
            .windows
            .iter()
            .filter(|w| w.flagged_segments.contains(&cand.segment))
            .map(|w| w.window)
            .collect();
        db.insert(PatternEntry {
            backend_id: report.backend_id.clone(),
            qubit_tuple: cand.qubit_tuple.clone(),
            template: template.clone(),
            windows_flagged: flagged.len(),
            windows_total: seen.len(),
            window_ids: flagged,
            windows_seen: seen.clone(),
            source_segment: Some(SourceSegment {
                session: report.session,
                segment: cand.segment,
                op_ids: cand.op_ids.clone(),
                ops: cand.ops.clone(),
            }),
            metadata: EntryMetadata { created: now, updated: now },
        });
    }
    Ok(db.entries)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternDb {
    pub format_version: u32,
    pub entries: Vec<PatternEntry>,
}

impl Default for PatternDb {
    fn default() -> Self {
        Self::new()
    }
}

impl PatternDb {
    pub fn new() -> Self {
        PatternDb {
            format_version: DB_FORMAT_VERSION,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(entries: impl IntoIterator<Item = PatternEntry>) -> Self {
        let mut db = Self::new();
        for e in entries {
            db.insert(e);
        }
        db
    }

    /// Adds `entry`, folding it into an existing entry with the same key.
    /// Entries stay sorted by key.
    pub fn insert(&mut self, entry: PatternEntry) {
        let key = entry.key();
        match self.entries.binary_search_by(|e| e.key().cmp(&key)) {
            Ok(i) => self.entries[i].absorb(&entry),
            Err(i) => {
                let mut fresh = entry;
                let copy = fresh.clone();
                fresh.absorb(&copy);
                self.entries.insert(i, fresh);
            }
        }
    }

    pub fn merge(&self, other: &PatternDb) -> PatternDb {
        let mut out = self.clone();
        for e in &other.entries {
            out.insert(e.clone());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(text: &str) -> Result<PatternDb> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(parse_error)?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "missing format_version".into(),
            })?;
        if found != u64::from(DB_FORMAT_VERSION) {
            return Err(Error::Migration {
                found: u32::try_from(found).unwrap_or(u32::MAX),
                expected: DB_FORMAT_VERSION,
            });
        }
        let db: PatternDb = serde_json::from_str(text).map_err(parse_error)?;
        let mut seen = BTreeSet::new();
        for e in &db.entries {
            e.validate()?;
            if !seen.insert(e.key()) {
                return Err(Error::invalid("duplicate pattern key in database"));
            }
        }
        Ok(PatternDb::from_entries(db.entries))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<PatternDb> {
        PatternDb::from_json(&std::fs::read_to_string(path)?)
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_json()?.as_bytes())?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    /// Matched op ids, in template order.
    pub op_ids: Vec<usize>,
    pub pattern: PatternKey,
    /// Index of the matched entry in the database.
    pub entry: usize,
}

/// Every occurrence of every entry for the circuit's backend, ordered by
/// earliest matched position. Entries that cannot bind (qubits out of range,
/// for instance) simply match nothing.
pub fn scan(circuit: &Circuit, db: &PatternDb) -> Vec<Occurrence> {
    let timelines = Timelines::new(circuit);
    let ops = circuit.ops();
    let mut found: Vec<(usize, Occurrence)> = Vec::new();
    for (i, entry) in db.entries.iter().enumerate() {
        if entry.backend_id != circuit.backend_id {
            continue;
        }
        let Ok(occs) = find_occurrences_with(circuit, &timelines, &entry.template, &entry.qubit_tuple) else {
            continue;
        };
        for positions in occs {
            let first = *positions.iter().min().expect("templates are non-empty");
            found.push((
                first,
                Occurrence {
                    op_ids: positions.iter().map(|&p| ops[p].id).collect(),
                    pattern: entry.key(),
                    entry: i,
                },
            ));
        }
    }
    found.sort_by_key(|f| (f.0, f.1.entry));
    found.into_iter().map(|(_, o)| o).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::GateKind;
    use crate::hardware::four_gate_template;

    fn ts(secs: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(secs, 0).unwrap()
    }

    fn fez_entry() -> PatternEntry {
        PatternEntry::from_rule(
            "ibm_fez",
            &ContextRule {
                template: four_gate_template(),
                qubits: vec![107, 108],
                excess: 0.05,
            },
            ts(0),
        )
    }

    fn fez_pattern_circuit() -> Circuit {
        Circuit::from_gates(
            "ibm_fez",
            156,
            [
                (GateKind::Sx, vec![107]),
                (GateKind::Rz(0.39), vec![107]),
                (GateKind::Sx, vec![108]),
                (GateKind::Cz, vec![108, 107]),
            ],
        )
        .unwrap()
    }

    fn with_evidence(mut e: PatternEntry, session: u64, flagged: &[u64], total: u64) -> PatternEntry {
        e.window_ids = flagged.iter().map(|&index| WindowRef { session, index }).collect();
        e.windows_seen = (0..total).map(|index| WindowRef { session, index }).collect();
        e.windows_flagged = e.window_ids.len();
        e.windows_total = e.windows_seen.len();
        e
    }

    #[test]
    fn scan_finds_the_fez_pattern() {
        let db = PatternDb::from_entries([fez_entry()]);
        let occ = scan(&fez_pattern_circuit(), &db);
        assert_eq!(occ.len(), 1);
        assert_eq!(occ[0].op_ids, vec![0, 1, 2, 3]);
    }

    #[test]
    fn an_extra_gate_on_the_timeline_breaks_the_match() {
        let c = Circuit::from_gates(
            "ibm_fez",
            156,
            [
                (GateKind::Sx, vec![107]),
                (GateKind::Rz(0.39), vec![107]),
                (GateKind::Sx, vec![107]),
                (GateKind::Sx, vec![108]),
                (GateKind::Cz, vec![108, 107]),
            ],
        )
        .unwrap();
        assert!(scan(&c, &PatternDb::from_entries([fez_entry()])).is_empty());
    }

    #[test]
    fn scan_is_backend_specific_and_empty_db_matches_nothing() {
        let mut other = fez_pattern_circuit();
        other.backend_id = "ibm_kingston".into();
        assert!(scan(&other, &PatternDb::from_entries([fez_entry()])).is_empty());
        assert!(scan(&fez_pattern_circuit(), &PatternDb::new()).is_empty());
    }

    #[test]
    fn merge_sums_disjoint_windows_and_is_idempotent() {
        let a = PatternDb::from_entries([with_evidence(fez_entry(), 1, &[0, 1, 2, 3], 5)]);
        let b = PatternDb::from_entries([with_evidence(fez_entry(), 2, &[0, 2, 3, 4], 5)]);
        let ab = a.merge(&b);
        assert_eq!(ab.len(), 1);
        assert_eq!((ab.entries[0].windows_flagged, ab.entries[0].windows_total), (8, 10));
        assert_eq!(ab.merge(&ab), ab);
        assert_eq!(ab.merge(&a), ab);
        assert_eq!(a.merge(&PatternDb::new()), a);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let db = PatternDb::from_entries([with_evidence(fez_entry(), 7, &[1, 2], 3)]);
        let text = db.to_json().unwrap();
        assert_eq!(PatternDb::from_json(&text).unwrap(), db);
        let bumped = text.replace("\"format_version\": 1", "\"format_version\": 2");
        assert!(matches!(PatternDb::from_json(&bumped), Err(Error::Migration { found: 2, .. })));
        assert!(matches!(PatternDb::from_json("{ not json"), Err(Error::Parse { .. })));
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        let db = PatternDb::from_entries([with_evidence(fez_entry(), 3, &[0], 2)]);
        db.save(&path).unwrap();
        assert_eq!(PatternDb::load(&path).unwrap(), db);
    }

    fn report(flags: &[&[usize]]) -> PersistenceReport {
        let c = fez_pattern_circuit();
        let windows: Vec<WindowRun> = flags
            .iter()
            .enumerate()
            .map(|(i, f)| WindowRun {
                window: WindowRef { session: 9, index: i as u64 },
                status: if f.is_empty() { DiscoveryStatus::NoExcess } else { DiscoveryStatus::Found },
                flagged_segments: f.to_vec(),
                baseline_ratio: 1.2,
                tau: 0.05,
                oracle_calls: 10,
                transient_rule: false,
            })
            .collect();
        let n = windows.len();
        let flagged = windows.iter().filter(|w| w.flagged_segments.contains(&0)).count();
        PersistenceReport {
            backend_id: "ibm_fez".into(),
            session: 9,
            segment_size: 3,
            num_segments: 1,
            windows,
            tallies: vec![SegmentTally {
                segment: 0,
                flagged,
                windows: n,
                consistency: flagged as f64 / n as f64,
            }],
            candidates: if flagged > 0 { vec![segment_candidate(&c, 3, 0).unwrap()] } else { vec![] },
        }
    }

    #[test]
    fn promotion_threshold_is_inclusive() {
        let seven: Vec<&[usize]> = (0..10).map(|i| if i < 7 { &[0usize][..] } else { &[][..] }).collect();
        let entries = promote_at(&report(&seven), 0.7, ts(5)).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].template, four_gate_template());
        assert_eq!(entries[0].qubit_tuple, vec![107, 108]);
        assert_eq!((entries[0].windows_flagged, entries[0].windows_total), (7, 10));
        assert!(promote_at(&report(&seven), 0.71, ts(5)).unwrap().is_empty());
    }

    #[test]
    fn a_single_flag_is_never_promoted() {
        let once: Vec<&[usize]> = (0..2).map(|i| if i == 0 { &[0usize][..] } else { &[][..] }).collect();
        assert!(promote_at(&report(&once), 0.5, ts(0)).unwrap().is_empty());
        let one_of_ten: Vec<&[usize]> = (0..10).map(|i| if i == 0 { &[0usize][..] } else { &[][..] }).collect();
        assert!(promote_at(&report(&one_of_ten), 0.1, ts(0)).unwrap().is_empty());
    }

    #[test]
    fn candidate_picks_the_largest_connected_group() {
        let c = Circuit::from_gates(
            "ibm_fez",
            156,
            [
                (GateKind::Sx, vec![1]),
                (GateKind::Sx, vec![5]),
                (GateKind::Cz, vec![1, 2]),
                (GateKind::X, vec![5]),
                (GateKind::Rz(1.0), vec![2]),
            ],
        )
        .unwrap();
        let cand = segment_candidate(&c, 3, 0).unwrap();
        assert_eq!(cand.qubit_tuple, vec![1, 2]);
        assert_eq!(cand.template.unwrap().len(), 3);
    }
}
