//! Trajectory logs: JSON lines, one header followed by one record per step.

use crate::env::{EpisodeStatus, NamoEnv, RewardBreakdown, StepResult};
use crate::physics::{Action, ContactReport, Pose2D, WorldState};
use crate::scene::MapDocument;
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryHeader {
    pub map: MapDocument,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub robot: Pose2D,
    /// `None` marks an absent box slot.
    pub boxes: Vec<Option<Pose2D>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: u32,
    pub time: f64,
    pub robot: Pose2D,
    pub boxes: Vec<Option<Pose2D>>,
    pub target: Action,
    pub applied: Action,
    pub reward: RewardBreakdown,
    pub contacts: ContactReport,
    pub status: EpisodeStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub header: TrajectoryHeader,
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("empty trajectory log")]
    Empty,
    #[error("line 1 (header): {0}")]
    Header(serde_json::Error),
    #[error("line {line} (record {record}): {message}")]
    Record { line: usize, record: usize, message: String },
}

fn box_poses(w: &WorldState) -> Vec<Option<Pose2D>> {
    w.boxes.iter().map(|b| b.as_ref().map(|b| b.pose)).collect()
}

impl TrajectoryLog {
    /// Starts a log from a freshly reset environment.
    pub fn start(env: &NamoEnv, config_hash: Option<String>) -> Self {
        let w = env.world();
        let g = env.goal();
        let header = TrajectoryHeader {
            map: env.map().document(),
            seed: env.state().map(|s| s.seed).unwrap_or(0),
            config_hash,
            goal: [g.x, g.y],
            goal_radius: env.config().goal_radius,
            robot: w.robot.pose,
            boxes: box_poses(w),
        };
        Self { header, records: Vec::new() }
    }

    /// Appends the step that `env` just took.
    pub fn push(&mut self, env: &NamoEnv, target: Action, r: &StepResult) {
        let w = env.world();
        self.records.push(StepRecord {
            step: r.status.steps_elapsed,
            time: w.time,
            robot: w.robot.pose,
            boxes: box_poses(w),
            target,
            applied: r.applied,
            reward: r.reward,
            contacts: r.contacts.clone(),
            status: r.status,
        });
    }

    pub fn write(&self, w: &mut impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parses and validates a log, naming the first bad record.
    pub fn read(r: impl BufRead) -> Result<Self, TrajectoryError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(TrajectoryError::Empty)?;
        let header: TrajectoryHeader = serde_json::from_str(&first?).map_err(TrajectoryError::Header)?;
        let mut records: Vec<StepRecord> = Vec::new();
        for (i, line) in lines {
            let bad = |message: String| TrajectoryError::Record { line: i + 1, record: records.len(), message };
            let rec: StepRecord = serde_json::from_str(&line?).map_err(|e| bad(e.to_string()))?;
            if rec.boxes.len() != header.boxes.len() {
                return Err(bad(format!("{} box slots, header has {}", rec.boxes.len(), header.boxes.len())));
            }
            if !rec.time.is_finite() {
                return Err(bad("non-finite time".into()));
            }
            if let Some(prev) = records.last() {
                if rec.time <= prev.time || rec.step <= prev.step {
                    return Err(bad(format!("time {} does not follow {}", rec.time, prev.time)));
                }
                if prev.status.done {
                    return Err(bad("record after the episode ended".into()));
                }
            }
            records.push(rec);
        }
        Ok(Self { header, records })
    }
}
