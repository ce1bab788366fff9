//! Trace files: one CSV row per vehicle and sample, plus a JSON sidecar
//! holding the collision events. The reader accepts traces produced by
//! other simulators as long as they follow the same columns.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{vehicle_index, CollisionEvent, ConcreteTrace, Sample, VehicleSample, VEHICLES};
use crate::model::VehicleId;

pub const CSV_HEADER: [&str; 8] = ["t", "veh", "x", "y", "lane", "speed", "throttle", "brake"];

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("events file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace format error: {0}")]
    Format(String),
}

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    veh: String,
    x: f64,
    y: f64,
    lane: u8,
    speed: f64,
    #[serde(default)]
    throttle: Option<f64>,
    #[serde(default)]
    brake: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventsFile {
    scenario_id: String,
    dt: f64,
    events: Vec<CollisionEvent>,
}

pub fn write_trace_csv<W: Write>(out: W, trace: &ConcreteTrace) -> Result<(), TraceFileError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in &trace.samples {
        for (id, v) in VEHICLES.iter().zip(&s.vehicles) {
            let (throttle, brake) = if *id == VehicleId::Ego { (s.throttle, s.brake) } else { (0.0, 0.0) };
            w.write_record([
                format!("{:.4}", s.t),
                id.to_string(),
                format!("{:.6}", v.x),
                format!("{:.6}", v.y),
                v.lane.to_string(),
                format!("{:.6}", v.speed),
                format!("{throttle:.4}"),
                format!("{brake:.4}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_json<W: Write>(mut out: W, trace: &ConcreteTrace) -> Result<(), TraceFileError> {
    let file = EventsFile { scenario_id: trace.scenario_id.clone(), dt: trace.dt, events: trace.events.clone() };
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Parses the CSV part. Every sample time must list `ego`, `car1` and
/// `car2`; rows may come in any vehicle order but times must increase.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<Sample>, TraceFileError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    for col in ["t", "veh", "x", "y", "lane", "speed"] {
        if !headers.iter().any(|h| h == col) {
            return Err(TraceFileError::Format(format!("missing column `{col}`")));
        }
    }
    let empty = VehicleSample { x: 0.0, y: 0.0, lane: 0, speed: 0.0 };
    let mut samples: Vec<Sample> = Vec::new();
    let mut seen: Vec<[bool; 3]> = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row?;
        let id = VehicleId::parse(&row.veh)
            .ok_or_else(|| TraceFileError::Format(format!("row {}: unknown vehicle `{}`", line + 2, row.veh)))?;
        let same_t = samples.last().is_some_and(|s| (s.t - row.t).abs() < 1e-9);
        if !same_t {
            if let Some(prev) = samples.last() {
                if row.t <= prev.t {
                    return Err(TraceFileError::Format(format!("row {}: time does not increase", line + 2)));
                }
            }
            samples.push(Sample { t: row.t, vehicles: [empty; 3], throttle: 0.0, brake: 0.0 });
            seen.push([false; 3]);
        }
        let i = vehicle_index(id);
        let slot = seen.last_mut().expect("pushed above");
        if slot[i] {
            return Err(TraceFileError::Format(format!("row {}: duplicate {id} at t={}", line + 2, row.t)));
        }
        slot[i] = true;
        let s = samples.last_mut().expect("pushed above");
        s.vehicles[i] = VehicleSample { x: row.x, y: row.y, lane: row.lane, speed: row.speed };
        if id == VehicleId::Ego {
            s.throttle = row.throttle.unwrap_or(0.0);
            s.brake = row.brake.unwrap_or(0.0);
        }
    }
    if let Some(k) = seen.iter().position(|s| s.iter().any(|v| !v)) {
        return Err(TraceFileError::Format(format!("sample at t={} does not list every vehicle", samples[k].t)));
    }
    if samples.is_empty() {
        return Err(TraceFileError::Format("no samples".into()));
    }
    Ok(samples)
}

/// Reads a CSV trace and, when given, its events sidecar. Without a
/// sidecar the trace has no events and the scenario id is empty.
pub fn read_trace<R: Read, E: Read>(csv_input: R, events: Option<E>) -> Result<ConcreteTrace, TraceFileError> {
    let samples = read_trace_csv(csv_input)?;
    let inferred_dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { 0.0 };
    match events {
        Some(e) => {
            let file: EventsFile = serde_json::from_reader(e)?;
            Ok(ConcreteTrace { scenario_id: file.scenario_id, dt: file.dt, samples, events: file.events })
        }
        None => Ok(ConcreteTrace { scenario_id: String::new(), dt: inferred_dt, samples, events: vec![] }),
    }
}
