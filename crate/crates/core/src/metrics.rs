//! Session logs and the performance measures computed from them.
//!
//! A log file is line-delimited JSON. Each `header` record opens a new
//! attempt; `state`, `sample` and `event` records belong to the most recent
//! header.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::StateMsg;

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("attempt {attempt} has no {event} event")]
    MissingEvent { attempt: u32, event: &'static str },
    #[error("ideal length is zero")]
    ZeroIdeal,
    #[error("no reports to aggregate")]
    Empty,
    #[error("corrupt log at line {line}: {msg}")]
    CorruptLog { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: [f64; 3],
    pub grasp_mark: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    Start,
    Grasp { point: [f64; 3] },
    Place,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        v: u32,
        attempt: u32,
        target: Target,
    },
    State {
        state: StateMsg,
    },
    Sample {
        t: f64,
        position: [f64; 3],
    },
    Event {
        t: f64,
        event: SessionEvent,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub position: Vector3<f64>,
}

/// One attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub attempt: u32,
    pub target: Target,
    pub samples: Vec<Sample>,
    pub events: Vec<(f64, SessionEvent)>,
    /// Full state records, kept for replay.
    pub states: Vec<StateMsg>,
}

impl SessionLog {
    pub fn new(attempt: u32, target: Target) -> Self {
        SessionLog {
            attempt,
            target,
            samples: Vec::new(),
            events: Vec::new(),
            states: Vec::new(),
        }
    }

    pub fn start_time(&self) -> Option<f64> {
        self.events
            .iter()
            .find(|(_, e)| matches!(e, SessionEvent::Start))
            .map(|(t, _)| *t)
    }

    pub fn grasp(&self) -> Option<(f64, Vector3<f64>)> {
        self.events.iter().find_map(|(t, e)| match e {
            SessionEvent::Grasp { point } => Some((*t, Vector3::from(*point))),
            _ => None,
        })
    }

    fn window(&self) -> Result<(f64, f64), MetricsError> {
        let start = self.start_time().ok_or(MetricsError::MissingEvent {
            attempt: self.attempt,
            event: "start",
        })?;
        let (grasp, _) = self.grasp().ok_or(MetricsError::MissingEvent {
            attempt: self.attempt,
            event: "grasp",
        })?;
        Ok((start, grasp))
    }

    /// Samples with timestamps in [start, grasp].
    pub fn task_samples(&self) -> Result<&[Sample], MetricsError> {
        let (t0, t1) = self.window()?;
        let lo = self.samples.partition_point(|s| s.t < t0);
        let hi = self.samples.partition_point(|s| s.t <= t1);
        Ok(&self.samples[lo..hi.max(lo)])
    }

    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = vec![LogRecord::Header {
            v: LOG_VERSION,
            attempt: self.attempt,
            target: self.target,
        }];
        out.extend(self.samples.iter().map(|s| LogRecord::Sample {
            t: s.t,
            position: s.position.into(),
        }));
        out.extend(self.events.iter().map(|&(t, event)| LogRecord::Event { t, event }));
        out
    }
}

pub fn path_length(points: &[Vector3<f64>]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

pub fn trajectory_length(log: &SessionLog) -> Result<f64, MetricsError> {
    let pts: Vec<Vector3<f64>> = log.task_samples()?.iter().map(|s| s.position).collect();
    Ok(path_length(&pts))
}

pub fn execution_time(log: &SessionLog) -> Result<f64, MetricsError> {
    let (t0, t1) = log.window()?;
    Ok((t1 - t0).max(0.0))
}

pub fn ideal_length(start: &Vector3<f64>, object_center: &Vector3<f64>) -> f64 {
    (object_center - start).norm()
}

pub fn increment_pct(length: f64, ideal: f64) -> Result<f64, MetricsError> {
    if ideal <= 0.0 {
        return Err(MetricsError::ZeroIdeal);
    }
    Ok((length - ideal) / ideal * 100.0)
}

pub fn reduction_pct(baseline: f64, improved: f64) -> Result<f64, MetricsError> {
    if baseline <= 0.0 {
        return Err(MetricsError::ZeroIdeal);
    }
    Ok((baseline - improved) / baseline * 100.0)
}

/// Distance between the actual and marked grasp points, in millimeters.
pub fn grasp_error(actual: &Vector3<f64>, marked: &Vector3<f64>) -> f64 {
    (actual - marked).norm() * 1000.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attempt: u32,
    pub trajectory_length: f64,
    pub ideal_length: f64,
    pub execution_time: f64,
    pub grasp_error: f64,
    pub increment_pct: f64,
    /// Attempts made up to and including this one.
    pub attempts: u32,
}

pub fn report(log: &SessionLog) -> Result<MetricsReport, MetricsError> {
    let samples = log.task_samples()?;
    let (_, point) = log.grasp().expect("window checked");
    let length = trajectory_length(log)?;
    let start = samples.first().map(|s| s.position).ok_or(MetricsError::MissingEvent {
        attempt: log.attempt,
        event: "sample",
    })?;
    let ideal = ideal_length(&start, &Vector3::from(log.target.center));
    Ok(MetricsReport {
        attempt: log.attempt,
        trajectory_length: length,
        ideal_length: ideal,
        execution_time: execution_time(log)?,
        grasp_error: grasp_error(&point, &Vector3::from(log.target.grasp_mark)),
        increment_pct: increment_pct(length, ideal)?,
        attempts: log.attempt + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

pub fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Some(Stats {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        sd,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub trajectory_length: Stats,
    pub execution_time: Stats,
    pub grasp_error: Stats,
    pub ideal_length: Stats,
    pub increment_pct: Stats,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<Aggregate, MetricsError> {
    let col = |f: fn(&MetricsReport) -> f64| {
        stats(&reports.iter().map(f).collect::<Vec<_>>()).ok_or(MetricsError::Empty)
    };
    Ok(Aggregate {
        trajectory_length: col(|r| r.trajectory_length)?,
        execution_time: col(|r| r.execution_time)?,
        grasp_error: col(|r| r.grasp_error)?,
        ideal_length: col(|r| r.ideal_length)?,
        increment_pct: col(|r| r.increment_pct)?,
    })
}

impl Aggregate {
    /// Increment of the mean length over the mean ideal.
    pub fn mean_increment_pct(&self) -> Result<f64, MetricsError> {
        increment_pct(self.trajectory_length.mean, self.ideal_length.mean)
    }

    pub fn format_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10} {:>10}", "measure", "min", "max", "mean", "sd");
        for (name, st) in [
            ("trajectory length, m", &self.trajectory_length),
            ("time of operation, s", &self.execution_time),
            ("error at grasping, mm", &self.grasp_error),
        ] {
            let _ = writeln!(
                s,
                "{:<22} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
                name, st.min, st.max, st.mean, st.sd
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<22} {:>10.3}", "ideal length, m", self.ideal_length.mean);
        let _ = writeln!(s, "{:<22} {:>10.3}", "mean length, m", self.trajectory_length.mean);
        match self.mean_increment_pct() {
            Ok(p) => {
                let _ = writeln!(s, "{:<22} {:>10.1}", "increment, %", p);
            }
            Err(_) => {
                let _ = writeln!(s, "{:<22} {:>10}", "increment, %", "n/a");
            }
        }
        let _ = writeln!(s, "{:<22} {:>10}", "attempts", self.trajectory_length.n);
        s
    }

    pub fn format_csv(&self) -> String {
        let mut s = String::from("measure,min,max,mean,sd,n\n");
        for (name, st) in [
            ("trajectory_length_m", &self.trajectory_length),
            ("execution_time_s", &self.execution_time),
            ("grasp_error_mm", &self.grasp_error),
            ("ideal_length_m", &self.ideal_length),
            ("increment_pct", &self.increment_pct),
        ] {
            let _ = writeln!(s, "{name},{},{},{},{},{}", st.min, st.max, st.mean, st.sd, st.n);
        }
        s
    }
}

/// Parses a log; each header starts a new attempt.
pub fn read_log(reader: impl BufRead) -> Result<Vec<SessionLog>, MetricsError> {
    let mut logs: Vec<SessionLog> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |msg: String| MetricsError::CorruptLog { line: n, msg };
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if let LogRecord::Header { v, attempt, target } = rec {
            if v != LOG_VERSION {
                return Err(corrupt(format!("unsupported log version {v}")));
            }
            logs.push(SessionLog::new(attempt, target));
            continue;
        }
        let log = logs
            .last_mut()
            .ok_or_else(|| corrupt("record before header".into()))?;
        match rec {
            LogRecord::Header { .. } => unreachable!(),
            LogRecord::State { state } => {
                push_sample(log, state.time, state.ee).map_err(corrupt)?;
                log.states.push(state);
            }
            LogRecord::Sample { t, position } => push_sample(log, t, position).map_err(corrupt)?,
            LogRecord::Event { t, event } => {
                if matches!(event, SessionEvent::Grasp { .. }) && log.grasp().is_some() {
                    return Err(corrupt("second grasp in one attempt".into()));
                }
                log.events.push((t, event));
            }
        }
    }
    Ok(logs)
}

fn push_sample(log: &mut SessionLog, t: f64, p: [f64; 3]) -> Result<(), String> {
    if !t.is_finite() || !p.iter().all(|x| x.is_finite()) {
        return Err("non-finite sample".into());
    }
    if let Some(last) = log.samples.last() {
        if t <= last.t {
            return Err(format!("timestamp {t} not after {}", last.t));
        }
    }
    log.samples.push(Sample {
        t,
        position: Vector3::from(p),
    });
    Ok(())
}

pub fn load_log(path: &Path) -> Result<Vec<SessionLog>, MetricsError> {
    read_log(io::BufReader::new(fs::File::open(path)?))
}

pub fn write_record(w: &mut impl Write, rec: &LogRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *w, rec)?;
    w.write_all(b"\n")
}
