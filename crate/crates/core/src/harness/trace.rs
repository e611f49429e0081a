//! Recorded episode traces: storage and rendering to PPM frames plus a text table.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::trainer::TraceRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub trial: usize,
    pub steps: Vec<TraceRecord>,
}

pub fn save_traces(path: &Path, traces: &[EpisodeTrace]) -> Result<(), HarnessError> {
    let text = serde_json::to_string(traces).expect("traces serialize");
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn load_traces(path: &Path) -> Result<Vec<EpisodeTrace>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn bits(b: &[bool]) -> String {
    b.iter().map(|&x| if x { '1' } else { '0' }).collect()
}

/// Text table with one line per recorded step.
pub fn summary_table(trace: &EpisodeTrace) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "trial {}", trace.trial);
    let _ = writeln!(s, "{:>4}  {:>3}  {:>2}  {:>6}  {:>6}  note", "t", "s", "z", "action", "reward");
    for rec in &trace.steps {
        let st = &rec.state;
        let _ = writeln!(
            s,
            "{:>4}  {:>3}  {:>2}  {:>6}  {:>6}  {}",
            st.t,
            st.s.map_or("-".into(), |v| bits(&v)),
            st.z.map_or("-".into(), |v| bits(&v)),
            rec.action.map_or("-".into(), |a| a.to_string()),
            rec.reward,
            st.note.as_deref().unwrap_or(""),
        );
    }
    s
}

/// Writes `frame_000.ppm, ...` (when the trace carries frames) and
/// `summary.txt` into `out_dir`; returns the written paths.
pub fn render_trace(
    traces: &[EpisodeTrace],
    trial: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    let trace = traces
        .iter()
        .find(|t| t.trial == trial)
        .ok_or(HarnessError::MissingTrace { trial })?;
    fs::create_dir_all(out_dir).map_err(|e| HarnessError::io(out_dir, e))?;
    let mut written = Vec::new();
    for (k, rec) in trace.steps.iter().enumerate() {
        if let Some(frame) = &rec.state.frame {
            let path = out_dir.join(format!("frame_{k:03}.ppm"));
            fs::write(&path, frame.to_ppm()).map_err(|e| HarnessError::io(&path, e))?;
            written.push(path);
        }
    }
    let path = out_dir.join("summary.txt");
    fs::write(&path, summary_table(trace)).map_err(|e| HarnessError::io(&path, e))?;
    written.push(path);
    Ok(written)
}
