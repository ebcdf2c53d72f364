//! Centre location error, precision curves and the report files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{read_ground_truth, read_numeric_csv, GroundTruthRow};
use crate::tracker::TrackState;

pub const MAX_THRESHOLD: usize = 50;
pub const TRAJECTORY_HEADER: &str = "frame,cx,cy,psr,coasting";

/// Per-frame centres of one target, frames strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub target: usize,
    points: Vec<(u64, (f64, f64))>,
}

impl Trajectory {
    pub fn new(target: usize, points: Vec<(u64, (f64, f64))>) -> Result<Self> {
        if let Some(p) = points.windows(2).find(|p| p[1].0 <= p[0].0) {
            return Err(Error::Contract(format!(
                "trajectory of target {target}: frame {} follows {}",
                p[1].0, p[0].0
            )));
        }
        if points.iter().any(|(_, c)| !(c.0.is_finite() && c.1.is_finite())) {
            return Err(Error::Contract(format!("trajectory of target {target} has a non-finite centre")));
        }
        Ok(Self { target, points })
    }

    pub fn from_ground_truth(target: usize, rows: &[GroundTruthRow]) -> Result<Self> {
        Self::new(target, rows.iter().map(|r| (r.frame, (r.cx, r.cy))).collect())
    }

    pub fn from_states(target: usize, states: &[TrackState]) -> Result<Self> {
        Self::new(target, states.iter().map(|s| (s.frame, s.center)).collect())
    }

    pub fn points(&self) -> &[(u64, (f64, f64))] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads a tracker output CSV `frame,cx,cy,psr,coasting`.
    pub fn read_csv(target: usize, path: impl AsRef<Path>) -> Result<Self> {
        let rows = read_numeric_csv(path.as_ref(), TRAJECTORY_HEADER)?;
        Self::new(target, rows.iter().map(|r| (r[0] as u64, (r[1], r[2]))).collect())
    }

    pub fn read_ground_truth(target: usize, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_ground_truth(target, &read_ground_truth(path)?)
    }
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, states: &[TrackState]) -> Result<()> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for s in states {
        out.push_str(&format!("{},{},{},{},{}\n", s.frame, s.center.0, s.center.1, s.best_psr, s.coasting));
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Euclidean centre errors on the frames both trajectories contain.
pub fn center_errors(traj: &Trajectory, gt: &Trajectory) -> Result<Vec<f64>> {
    let truth: BTreeMap<u64, (f64, f64)> = gt.points.iter().copied().collect();
    let errors: Vec<f64> = traj
        .points
        .iter()
        .filter_map(|(f, p)| truth.get(f).map(|g| (p.0 - g.0).hypot(p.1 - g.1)))
        .collect();
    if errors.is_empty() {
        return Err(Error::Contract(format!(
            "target {}: prediction and ground truth share no frames",
            traj.target
        )));
    }
    Ok(errors)
}

pub fn cle(traj: &Trajectory, gt: &Trajectory) -> Result<f64> {
    let e = center_errors(traj, gt)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// `p[t]` = fraction of errors `<= t` px for `t = 0..=max_threshold`.
pub fn precision_from_errors(errors: &[f64], max_threshold: usize) -> Vec<f64> {
    let n = errors.len() as f64;
    (0..=max_threshold)
        .map(|t| errors.iter().filter(|&&e| e <= t as f64).count() as f64 / n)
        .collect()
}

pub fn precision_curve(traj: &Trajectory, gt: &Trajectory, max_threshold: usize) -> Result<Vec<f64>> {
    Ok(precision_from_errors(&center_errors(traj, gt)?, max_threshold))
}

/// Frames processed per second of wall time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub frames: u64,
    pub seconds: f64,
}

impl Timing {
    pub fn fps(&self) -> f64 {
        if self.seconds > 0.0 {
            self.frames as f64 / self.seconds
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cle: f64,
    pub precision: Vec<f64>,
    pub pr20: f64,
    pub pr50: f64,
    /// `None` when no timing was supplied.
    pub fps: Option<f64>,
    pub frames_evaluated: usize,
}

impl EvalReport {
    fn from_curve(cle: f64, precision: Vec<f64>, frames_evaluated: usize, timing: Option<Timing>) -> Self {
        Self {
            cle,
            pr20: precision[20],
            pr50: precision[MAX_THRESHOLD],
            precision,
            fps: timing.map(|t| t.fps()),
            frames_evaluated,
        }
    }

    /// Unweighted mean of per-sequence reports (each sequence counts once,
    /// whatever its length).
    pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
        if reports.is_empty() {
            return Err(Error::Contract("nothing to aggregate".into()));
        }
        let n = reports.len() as f64;
        let precision = (0..=MAX_THRESHOLD)
            .map(|t| reports.iter().map(|r| r.precision[t]).sum::<f64>() / n)
            .collect();
        let fps = if reports.iter().all(|r| r.fps.is_some()) {
            Some(reports.iter().map(|r| r.fps.unwrap()).sum::<f64>() / n)
        } else {
            None
        };
        let mut out = Self::from_curve(
            reports.iter().map(|r| r.cle).sum::<f64>() / n,
            precision,
            reports.iter().map(|r| r.frames_evaluated).sum(),
            None,
        );
        out.fps = fps;
        Ok(out)
    }
}

/// Scores predicted trajectories against ground truth, pairing them by
/// target id. Targets are averaged unweighted.
pub fn report(trajs: &[Trajectory], gts: &[Trajectory], timing: Option<Timing>) -> Result<EvalReport> {
    if trajs.is_empty() {
        return Err(Error::Contract("no trajectories to evaluate".into()));
    }
    let pred: BTreeMap<usize, &Trajectory> = trajs.iter().map(|t| (t.target, t)).collect();
    let truth: BTreeMap<usize, &Trajectory> = gts.iter().map(|t| (t.target, t)).collect();
    let missing_gt: Vec<String> = pred.keys().filter(|k| !truth.contains_key(k)).map(|k| k.to_string()).collect();
    let missing_pred: Vec<String> = truth.keys().filter(|k| !pred.contains_key(k)).map(|k| k.to_string()).collect();
    if !missing_gt.is_empty() || !missing_pred.is_empty() || pred.len() != trajs.len() {
        return Err(Error::Contract(format!(
            "target ids do not line up (no ground truth for [{}], no prediction for [{}])",
            missing_gt.join(", "),
            missing_pred.join(", ")
        )));
    }
    let per_target = pred
        .iter()
        .map(|(id, p)| {
            let e = center_errors(p, truth[id])?;
            Ok(EvalReport::from_curve(
                e.iter().sum::<f64>() / e.len() as f64,
                precision_from_errors(&e, MAX_THRESHOLD),
                e.len(),
                None,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = EvalReport::aggregate(&per_target)?;
    out.fps = timing.map(|t| t.fps());
    Ok(out)
}

/// Writes `report.json`, `precision.csv` and `metrics.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).map_err(|e| Error::json(&json_path, e))?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let mut curve = String::from("threshold,precision\n");
    for (t, p) in report.precision.iter().enumerate() {
        curve.push_str(&format!("{t},{p}\n"));
    }
    let curve_path = dir.join("precision.csv");
    fs::write(&curve_path, curve).map_err(|e| Error::io(&curve_path, e))?;

    let mut metrics = format!(
        "metric,value\ncle,{}\npr20,{}\npr50,{}\nframes_evaluated,{}\n",
        report.cle, report.pr20, report.pr50, report.frames_evaluated
    );
    if let Some(fps) = report.fps {
        metrics.push_str(&format!("fps,{fps}\n"));
    }
    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, metrics).map_err(|e| Error::io(&metrics_path, e))
}
