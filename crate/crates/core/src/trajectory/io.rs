use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::episodes::{InteractionEpisode, PairSpec, SituationPair};
use super::{frame_key, TrajectorySample, VehicleSeries};
use crate::error::{Result, SsmError};

/// Names of the CSV columns. `lane_id`, `accel`, `leader_id`, `gap` and
/// `length` may be absent from the file: lanes default to 0, accelerations
/// are differenced from speeds, leaders are the closest vehicle ahead in the
/// same lane, gaps come from positions and lengths fall back to
/// `default_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMapping {
    pub time: String,
    pub vehicle_id: String,
    pub lane_id: String,
    pub position: String,
    pub speed: String,
    pub accel: String,
    pub leader_id: String,
    pub gap: String,
    pub length: String,
    pub default_length: f64,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            time: "time_s".into(),
            vehicle_id: "vehicle_id".into(),
            lane_id: "lane_id".into(),
            position: "position_m".into(),
            speed: "speed_mps".into(),
            accel: "accel_mps2".into(),
            leader_id: "leader_id".into(),
            gap: "gap_m".into(),
            length: "length_m".into(),
            default_length: 4.5,
        }
    }
}

/// Row-level diagnostics from a load.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub rejected_negative_speed: usize,
    pub rejected_non_monotone_time: usize,
    pub rejected_malformed: usize,
}

struct Columns {
    time: usize,
    vehicle_id: usize,
    position: usize,
    speed: usize,
    lane_id: Option<usize>,
    accel: Option<usize>,
    leader_id: Option<usize>,
    gap: Option<usize>,
    length: Option<usize>,
}

impl Columns {
    fn resolve(headers: &csv::StringRecord, m: &ColumnMapping) -> Result<Self> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let required =
            |name: &str| find(name).ok_or_else(|| SsmError::MissingColumn(name.to_string()));
        Ok(Self {
            time: required(&m.time)?,
            vehicle_id: required(&m.vehicle_id)?,
            position: required(&m.position)?,
            speed: required(&m.speed)?,
            lane_id: find(&m.lane_id),
            accel: find(&m.accel),
            leader_id: find(&m.leader_id),
            gap: find(&m.gap),
            length: find(&m.length),
        })
    }
}

fn field(rec: &csv::StringRecord, i: usize) -> &str {
    rec.get(i).unwrap_or("").trim()
}

fn optional<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: Option<usize>,
) -> std::result::Result<Option<T>, ()> {
    match i.map(|i| field(rec, i)) {
        None | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| ()),
    }
}

struct RawRow {
    sample: TrajectorySample,
    has_accel: bool,
}

fn parse_row(
    rec: &csv::StringRecord,
    c: &Columns,
    m: &ColumnMapping,
) -> std::result::Result<RawRow, ()> {
    let num = |i: usize| field(rec, i).parse::<f64>().map_err(|_| ());
    let time = num(c.time)?;
    let position = num(c.position)?;
    let speed = num(c.speed)?;
    let vehicle_id = field(rec, c.vehicle_id).parse::<u64>().map_err(|_| ())?;
    if !(time.is_finite() && position.is_finite() && speed.is_finite()) {
        return Err(());
    }
    let accel: Option<f64> = optional(rec, c.accel)?;
    let length: Option<f64> = optional(rec, c.length)?;
    let gap: Option<f64> = optional(rec, c.gap)?;
    // Leader ids of 0 or below mark "no leader", as in common trajectory dumps.
    let leader: Option<i64> = optional(rec, c.leader_id)?;
    Ok(RawRow {
        sample: TrajectorySample {
            time,
            vehicle_id,
            lane_id: optional(rec, c.lane_id)?.unwrap_or(0),
            position,
            speed,
            accel: accel.unwrap_or(0.0),
            leader_id: leader.filter(|&l| l > 0).map(|l| l as u64),
            gap,
            length: length.unwrap_or(m.default_length),
        },
        has_accel: accel.is_some(),
    })
}

/// Reads a trajectory CSV and groups it into per-vehicle series sorted by
/// time. Rows with negative speed, unparsable fields or timestamps that do
/// not increase for their vehicle are dropped and counted.
pub fn load_trajectories<R: Read>(
    source: R,
    mapping: &ColumnMapping,
) -> Result<(Vec<VehicleSeries>, LoadReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(SsmError::InsufficientData(
            "trajectory file has no header".into(),
        ));
    }
    let cols = Columns::resolve(&headers, mapping)?;
    let mut report = LoadReport::default();
    let mut by_vehicle: BTreeMap<u64, Vec<TrajectorySample>> = BTreeMap::new();
    let mut any_accel_missing = false;
    for rec in reader.records() {
        let rec = rec?;
        report.rows_read += 1;
        let Ok(row) = parse_row(&rec, &cols, mapping) else {
            report.rejected_malformed += 1;
            continue;
        };
        if row.sample.speed < 0.0 {
            report.rejected_negative_speed += 1;
            continue;
        }
        let series = by_vehicle.entry(row.sample.vehicle_id).or_default();
        if series.last().is_some_and(|p| row.sample.time <= p.time) {
            report.rejected_non_monotone_time += 1;
            continue;
        }
        any_accel_missing |= !row.has_accel;
        series.push(row.sample);
        report.rows_kept += 1;
    }
    let mut series: Vec<VehicleSeries> = by_vehicle
        .into_iter()
        .map(|(vehicle_id, samples)| VehicleSeries {
            vehicle_id,
            samples,
        })
        .collect();
    if any_accel_missing && cols.accel.is_none() {
        difference_accelerations(&mut series);
    }
    if cols.leader_id.is_none() {
        assign_closest_leaders(&mut series);
    }
    fill_gaps_from_positions(&mut series);
    Ok((series, report))
}

fn difference_accelerations(series: &mut [VehicleSeries]) {
    for s in series {
        let n = s.samples.len();
        if n < 2 {
            continue;
        }
        let acc: Vec<f64> = (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                let (p, q) = (&s.samples[a], &s.samples[b]);
                (q.speed - p.speed) / (q.time - p.time)
            })
            .collect();
        for (x, a) in s.samples.iter_mut().zip(acc) {
            x.accel = a;
        }
    }
}

/// Per frame and lane, each vehicle's leader is the nearest vehicle ahead;
/// ties go to the smaller gap, then the smaller id.
fn assign_closest_leaders(series: &mut [VehicleSeries]) {
    type Entry = (f64, f64, u64);
    let mut frames: HashMap<(i64, i64), Vec<Entry>> = HashMap::new();
    for s in series.iter() {
        for x in &s.samples {
            frames
                .entry((frame_key(x.time), x.lane_id))
                .or_default()
                .push((x.position, x.length, x.vehicle_id));
        }
    }
    for s in series.iter_mut() {
        for x in &mut s.samples {
            let others = &frames[&(frame_key(x.time), x.lane_id)];
            let best = others
                .iter()
                .filter(|(p, _, id)| *id != x.vehicle_id && *p > x.position)
                .min_by(|a, b| {
                    let key = |e: &Entry| (e.0 - x.position, e.0 - x.position - e.1, e.2);
                    let (ka, kb) = (key(a), key(b));
                    ka.0.total_cmp(&kb.0)
                        .then(ka.1.total_cmp(&kb.1))
                        .then(ka.2.cmp(&kb.2))
                });
            x.leader_id = best.map(|e| e.2);
        }
    }
}

fn fill_gaps_from_positions(series: &mut [VehicleSeries]) {
    let mut at: HashMap<(u64, i64), (f64, f64)> = HashMap::new();
    for s in series.iter() {
        for x in &s.samples {
            at.insert((x.vehicle_id, frame_key(x.time)), (x.position, x.length));
        }
    }
    for s in series.iter_mut() {
        for x in &mut s.samples {
            if x.gap.is_some() {
                continue;
            }
            if let Some(l) = x.leader_id {
                if let Some((pos, len)) = at.get(&(l, frame_key(x.time))) {
                    x.gap = Some(pos - x.position - len);
                }
            }
        }
    }
}

/// Writes series in the default column layout.
pub fn write_trajectories_csv<W: Write>(out: W, series: &[VehicleSeries]) -> Result<()> {
    let m = ColumnMapping::default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        &m.time,
        &m.vehicle_id,
        &m.lane_id,
        &m.position,
        &m.speed,
        &m.accel,
        &m.leader_id,
        &m.gap,
        &m.length,
    ])?;
    for s in series {
        for x in &s.samples {
            w.write_record([
                x.time.to_string(),
                x.vehicle_id.to_string(),
                x.lane_id.to_string(),
                x.position.to_string(),
                x.speed.to_string(),
                x.accel.to_string(),
                x.leader_id.map(|l| l.to_string()).unwrap_or_default(),
                x.gap.map(|g| g.to_string()).unwrap_or_default(),
                x.length.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PAIR_X_COLUMNS: [&str; 4] = ["v_lead", "a_lead", "v_ego", "ln_gap"];

/// One row per pair: the four initial-situation values, then `y1..yn`.
pub fn write_pairs_csv<W: Write>(out: W, pairs: &[SituationPair]) -> Result<()> {
    let n = pairs.first().map_or(0, |p| p.y.len());
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = PAIR_X_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=n).map(|k| format!("y{k}")))
        .collect();
    w.write_record(&header)?;
    for p in pairs {
        if p.y.len() != n {
            return Err(SsmError::DimensionMismatch {
                expected: n,
                got: p.y.len(),
            });
        }
        w.write_record(p.x.iter().chain(&p.y).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(source: R) -> Result<Vec<SituationPair>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    for (i, name) in PAIR_X_COLUMNS.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(SsmError::MissingColumn(name.to_string()));
        }
    }
    let n = headers.len() - PAIR_X_COLUMNS.len();
    let mut pairs = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SsmError::Format(format!("pair row {}: {e}", line + 1)))?;
        if vals.len() != 4 + n {
            return Err(SsmError::Format(format!(
                "pair row {} has {} fields",
                line + 1,
                vals.len()
            )));
        }
        pairs.push(SituationPair {
            x: [vals[0], vals[1], vals[2], vals[3]],
            y: vals[4..].to_vec(),
        });
    }
    Ok(pairs)
}

/// Episode summary for inspection: one row per episode with its pair count.
pub fn write_episodes_csv<W: Write>(
    out: W,
    episodes: &[InteractionEpisode],
    spec: &PairSpec,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "follower_id",
        "leader_id",
        "start_time",
        "end_time",
        "samples",
        "pairs",
    ])?;
    for e in episodes {
        w.write_record([
            e.follower_id.to_string(),
            e.leader_id.to_string(),
            e.start_time.to_string(),
            e.end_time.to_string(),
            e.samples.len().to_string(),
            spec.pair_count(e).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
