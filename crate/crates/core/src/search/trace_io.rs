//! JSON-lines trace format.
//!
//! The first line is a [`TraceHeader`]; each following line is one state
//! with the input applied from it (absent on the last line). Rationals are
//! written as `"p/q"` strings.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{GridConfig, ScenarioSpec};
use crate::model::{ControlInput, ModelParams, WorldState};

use super::AbstractTrace;

pub const TRACE_FORMAT: &str = "abstract-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub spec_id: String,
    pub first: [u8; 2],
    pub second: [u8; 2],
    pub params_hash: String,
    pub steps: usize,
    pub phase1_index: usize,
    pub phase2_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InputPair {
    car1: ControlInput,
    car2: ControlInput,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateLine {
    #[serde(flatten)]
    state: WorldState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<InputPair>,
}

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace format error: {0}")]
    Format(String),
}

pub fn write_trace_jsonl<W: Write>(
    out: &mut W,
    trace: &AbstractTrace,
    spec: &ScenarioSpec,
    params: &ModelParams,
) -> Result<(), TraceIoError> {
    let header = TraceHeader {
        format: TRACE_FORMAT.to_string(),
        spec_id: trace.spec_id.clone(),
        first: spec.first.numbers(),
        second: spec.second.numbers(),
        params_hash: params.params_hash(),
        steps: trace.inputs.len(),
        phase1_index: trace.phase1_index,
        phase2_index: trace.phase2_index,
    };
    serde_json::to_writer(&mut *out, &header).map_err(|source| TraceIoError::Json { line: 1, source })?;
    out.write_all(b"\n")?;
    for (k, state) in trace.states.iter().enumerate() {
        let line = StateLine {
            state: state.clone(),
            input: trace.inputs.get(k).map(|(a, b)| InputPair { car1: a.clone(), car2: b.clone() }),
        };
        serde_json::to_writer(&mut *out, &line).map_err(|source| TraceIoError::Json { line: k + 2, source })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a trace and the scenario recorded in its header.
pub fn read_trace_jsonl<R: BufRead>(input: R) -> Result<(TraceHeader, ScenarioSpec, AbstractTrace), TraceIoError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
    let (_, first) = lines.next().ok_or_else(|| TraceIoError::Format("empty trace file".into()))?;
    let header: TraceHeader =
        serde_json::from_str(&first?).map_err(|source| TraceIoError::Json { line: 1, source })?;
    if header.format != TRACE_FORMAT {
        return Err(TraceIoError::Format(format!("unsupported format `{}`", header.format)));
    }
    let cfg = |n: [u8; 2]| {
        GridConfig::from_numbers(n[0], n[1]).ok_or_else(|| TraceIoError::Format(format!("bad grid config {n:?}")))
    };
    let spec = ScenarioSpec::new(header.spec_id.clone(), cfg(header.first)?, cfg(header.second)?);

    let mut states = Vec::new();
    let mut inputs = Vec::new();
    let mut pending_last = false;
    for (i, line) in lines {
        let parsed: StateLine = serde_json::from_str(&line?).map_err(|source| TraceIoError::Json { line: i + 1, source })?;
        if pending_last {
            return Err(TraceIoError::Format(format!("line {}: state after the final state", i + 1)));
        }
        states.push(parsed.state);
        match parsed.input {
            Some(p) => inputs.push((p.car1, p.car2)),
            None => pending_last = true,
        }
    }
    if !pending_last || states.len() != header.steps + 1 {
        return Err(TraceIoError::Format(format!(
            "header declares {} steps but file has {} states",
            header.steps,
            states.len()
        )));
    }
    let trace = AbstractTrace {
        spec_id: header.spec_id.clone(),
        states,
        inputs,
        phase1_index: header.phase1_index,
        phase2_index: header.phase2_index,
    };
    Ok((header, spec, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qr};

    fn sample() -> (AbstractTrace, ScenarioSpec, ModelParams) {
        let p = ModelParams::default();
        let s0 = WorldState::initial(&p);
        let i = (ControlInput::new(qr(28, 5), 0), ControlInput::new(q(0), 0));
        let s1 = crate::model::step_world(&s0, &i.0, &i.1, &p).unwrap();
        let c = GridConfig::from_numbers(4, 5).unwrap();
        let spec = ScenarioSpec::canonical(c, c);
        let t = AbstractTrace { spec_id: spec.id.clone(), states: vec![s0, s1], inputs: vec![i], phase1_index: 0, phase2_index: 1 };
        (t, spec, p)
    }

    #[test]
    fn round_trip() {
        let (t, spec, p) = sample();
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &t, &spec, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.contains("\"28/5\""), "{text}");
        assert!(text.lines().next().unwrap().contains(&p.params_hash()));
        let (h, spec2, t2) = read_trace_jsonl(buf.as_slice()).unwrap();
        assert_eq!(h.spec_id, spec.id);
        assert_eq!(spec2, spec);
        assert_eq!(t2, t);
    }

    #[test]
    fn truncated_file_rejected() {
        let (t, spec, p) = sample();
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &t, &spec, &p).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_trace_jsonl(cut.as_bytes()), Err(TraceIoError::Format(_))));
        assert!(matches!(read_trace_jsonl("".as_bytes()), Err(TraceIoError::Format(_))));
        assert!(matches!(read_trace_jsonl("{".as_bytes()), Err(TraceIoError::Json { line: 1, .. })));
    }
}
