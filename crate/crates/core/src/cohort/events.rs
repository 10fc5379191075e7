//! Event records and ingestion from JSON-lines or CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use tracing::warn;

use super::CohortError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Pain,
    Rass,
    Map,
    Hr,
    Spo2,
    Temp,
    Wbc,
    Lactate,
    UrineRate,
    NorepiEq,
    Rhythm,
    SofaTotal,
    SofaResp,
    SofaCoag,
    SofaLiver,
    SofaCardio,
    SofaCns,
    SofaRenal,
}

impl EventKind {
    pub const ALL: [EventKind; 18] = [
        EventKind::Pain,
        EventKind::Rass,
        EventKind::Map,
        EventKind::Hr,
        EventKind::Spo2,
        EventKind::Temp,
        EventKind::Wbc,
        EventKind::Lactate,
        EventKind::UrineRate,
        EventKind::NorepiEq,
        EventKind::Rhythm,
        EventKind::SofaTotal,
        EventKind::SofaResp,
        EventKind::SofaCoag,
        EventKind::SofaLiver,
        EventKind::SofaCardio,
        EventKind::SofaCns,
        EventKind::SofaRenal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pain => "PAIN",
            EventKind::Rass => "RASS",
            EventKind::Map => "MAP",
            EventKind::Hr => "HR",
            EventKind::Spo2 => "SPO2",
            EventKind::Temp => "TEMP",
            EventKind::Wbc => "WBC",
            EventKind::Lactate => "LACTATE",
            EventKind::UrineRate => "URINE_RATE",
            EventKind::NorepiEq => "NOREPI_EQ",
            EventKind::Rhythm => "RHYTHM",
            EventKind::SofaTotal => "SOFA_TOTAL",
            EventKind::SofaResp => "SOFA_RESP",
            EventKind::SofaCoag => "SOFA_COAG",
            EventKind::SofaLiver => "SOFA_LIVER",
            EventKind::SofaCardio => "SOFA_CARDIO",
            EventKind::SofaCns => "SOFA_CNS",
            EventKind::SofaRenal => "SOFA_RENAL",
        }
    }

    pub fn is_sofa_component(self) -> bool {
        matches!(
            self,
            EventKind::SofaResp
                | EventKind::SofaCoag
                | EventKind::SofaLiver
                | EventKind::SofaCardio
                | EventKind::SofaCns
                | EventKind::SofaRenal
        )
    }

    /// Checks the value invariants of this kind.
    fn validate(self, value: &EventValue) -> Result<(), String> {
        let number = match (self, value) {
            (EventKind::Rhythm, EventValue::Token(t)) if !t.trim().is_empty() => return Ok(()),
            (EventKind::Rhythm, _) => return Err("RHYTHM needs a non-empty token".into()),
            (_, EventValue::Token(t)) => return Err(format!("{self} needs a number, got `{t}`")),
            (_, EventValue::Number(v)) => *v,
        };
        if !number.is_finite() {
            return Err(format!("{self} value is not finite"));
        }
        let integer_in = |lo: f64, hi: f64| number.fract() == 0.0 && (lo..=hi).contains(&number);
        let ok = match self {
            EventKind::Pain => integer_in(0.0, 10.0),
            EventKind::Rass => integer_in(-5.0, 4.0),
            EventKind::SofaTotal => integer_in(0.0, 24.0),
            k if k.is_sofa_component() => integer_in(0.0, 4.0),
            _ => number >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{self} value {number} out of range"))
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        EventKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventValue {
    Number(f64),
    Token(String),
}

/// One time-stamped clinical observation for a stay.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub stay_id: String,
    /// Minutes since stay start.
    pub time_min: i64,
    pub kind: EventKind,
    pub value: EventValue,
}

impl EventRecord {
    pub fn number(stay_id: &str, time_min: i64, kind: EventKind, value: f64) -> Self {
        EventRecord {
            stay_id: stay_id.to_string(),
            time_min,
            kind,
            value: EventValue::Number(value),
        }
    }

    pub fn token(stay_id: &str, time_min: i64, kind: EventKind, token: &str) -> Self {
        EventRecord {
            stay_id: stay_id.to_string(),
            time_min,
            kind,
            value: EventValue::Token(token.to_string()),
        }
    }

    pub fn to_json(&self) -> Value {
        let value = match &self.value {
            EventValue::Number(v) => serde_json::Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            EventValue::Token(t) => Value::String(t.clone()),
        };
        serde_json::json!({
            "stay_id": self.stay_id,
            "time_min": self.time_min,
            "kind": self.kind.as_str(),
            "value": value,
        })
    }
}

/// Time-sorted observations of a single stay, split by kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StayEvents {
    pub(crate) numeric: BTreeMap<EventKind, Vec<(i64, f64)>>,
    pub(crate) rhythm: Vec<(i64, String)>,
}

impl StayEvents {
    /// Groups records into per-kind series under a canonical total order
    /// (time, then value), so the result does not depend on input order.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut stay = StayEvents::default();
        for r in records {
            match &r.value {
                EventValue::Number(v) => stay.numeric.entry(r.kind).or_default().push((r.time_min, *v)),
                EventValue::Token(t) => stay.rhythm.push((r.time_min, t.clone())),
            }
        }
        for series in stay.numeric.values_mut() {
            series.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        stay.rhythm.sort();
        stay
    }

    pub fn series(&self, kind: EventKind) -> &[(i64, f64)] {
        self.numeric.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rhythm(&self) -> &[(i64, String)] {
        &self.rhythm
    }

    /// Latest event time over all kinds.
    pub fn last_time(&self) -> Option<i64> {
        self.numeric
            .values()
            .filter_map(|s| s.last().map(|e| e.0))
            .chain(self.rhythm.last().map(|e| e.0))
            .max()
    }
}

/// Result of reading an event file.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub stays: BTreeMap<String, StayEvents>,
    pub records: usize,
    pub rejected_unknown_kind: usize,
    pub rejected_invalid: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    JsonLines,
    Csv,
}

impl EventFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EventFormat::Csv,
            _ => EventFormat::JsonLines,
        }
    }
}

pub fn read_events(path: &Path) -> Result<Ingested, CohortError> {
    let file = File::open(path).map_err(|e| CohortError::Io(path.display().to_string(), e))?;
    ingest(BufReader::new(file), EventFormat::from_path(path))
}

/// Raw row before kind/value validation.
struct RawRow {
    line: usize,
    stay_id: String,
    time_min: i64,
    kind: String,
    value: Value,
}

/// Reads records, requiring times to be non-decreasing within each stay.
///
/// Unknown kinds and out-of-range values are skipped and counted; malformed
/// rows and unsorted stays are errors.
pub fn ingest<R: Read>(reader: R, format: EventFormat) -> Result<Ingested, CohortError> {
    let rows = match format {
        EventFormat::JsonLines => read_jsonl_rows(BufReader::new(reader))?,
        EventFormat::Csv => read_csv_rows(reader)?,
    };

    let mut out = Ingested::default();
    let mut per_stay: BTreeMap<String, Vec<EventRecord>> = BTreeMap::new();
    let mut last_time: BTreeMap<String, i64> = BTreeMap::new();

    for row in rows {
        out.records += 1;
        if let Some(prev) = last_time.get(&row.stay_id) {
            if row.time_min < *prev {
                return Err(CohortError::Unsorted {
                    stay_id: row.stay_id,
                    line: row.line,
                });
            }
        }
        last_time.insert(row.stay_id.clone(), row.time_min);

        let Ok(kind) = row.kind.parse::<EventKind>() else {
            out.rejected_unknown_kind += 1;
            warn!(line = row.line, kind = %row.kind, "unknown event kind, record skipped");
            continue;
        };
        let value = match &row.value {
            Value::Number(n) => n.as_f64().map(EventValue::Number),
            Value::String(s) if kind == EventKind::Rhythm => Some(EventValue::Token(s.clone())),
            Value::String(s) => s.trim().parse::<f64>().ok().map(EventValue::Number),
            _ => None,
        };
        let checked = match value {
            Some(v) if row.time_min >= 0 => kind.validate(&v).map(|_| v),
            Some(_) => Err("negative time".to_string()),
            None => Err(format!("unusable value {}", row.value)),
        };
        match checked {
            Ok(value) => per_stay.entry(row.stay_id.clone()).or_default().push(EventRecord {
                stay_id: row.stay_id,
                time_min: row.time_min,
                kind,
                value,
            }),
            Err(why) => {
                out.rejected_invalid += 1;
                warn!(line = row.line, %why, "invalid event record skipped");
            }
        }
    }

    out.stays = per_stay
        .into_iter()
        .map(|(id, recs)| (id, StayEvents::from_records(&recs)))
        .collect();
    Ok(out)
}

fn stay_id_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn read_jsonl_rows<R: BufRead>(reader: R) -> Result<Vec<RawRow>, CohortError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CohortError::Io(format!("line {line_no}"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |detail: &str| CohortError::Malformed {
            line: line_no,
            detail: detail.to_string(),
        };
        let v: Value = serde_json::from_str(&line).map_err(|e| malformed(&e.to_string()))?;
        let stay_id = v
            .get("stay_id")
            .and_then(stay_id_of)
            .ok_or_else(|| malformed("missing stay_id"))?;
        let time_min = v
            .get("time_min")
            .and_then(Value::as_i64)
            .ok_or_else(|| malformed("missing integer time_min"))?;
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| malformed("missing kind"))?
            .to_string();
        let value = v.get("value").cloned().unwrap_or(Value::Null);
        rows.push(RawRow {
            line: line_no,
            stay_id,
            time_min,
            kind,
            value,
        });
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct CsvRow {
    stay_id: String,
    time_min: i64,
    kind: String,
    value: String,
}

fn read_csv_rows<R: Read>(reader: R) -> Result<Vec<RawRow>, CohortError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for (idx, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let rec = rec.map_err(|e| CohortError::Malformed {
            line,
            detail: e.to_string(),
        })?;
        rows.push(RawRow {
            line,
            stay_id: rec.stay_id,
            time_min: rec.time_min,
            kind: rec.kind,
            value: Value::String(rec.value),
        });
    }
    Ok(rows)
}

/// Writes records as JSON-lines.
pub fn write_jsonl<W: std::io::Write>(mut w: W, records: &[EventRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &r.to_json())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes records as CSV with the `stay_id,time_min,kind,value` header.
pub fn write_csv<W: std::io::Write>(w: W, records: &[EventRecord]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["stay_id", "time_min", "kind", "value"])?;
    for r in records {
        let value = match &r.value {
            EventValue::Number(v) => v.to_string(),
            EventValue::Token(t) => t.clone(),
        };
        wtr.write_record([r.stay_id.as_str(), &r.time_min.to_string(), r.kind.as_str(), &value])?;
    }
    wtr.flush()
}
