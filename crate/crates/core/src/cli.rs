//! Batch subcommands: `simulate`, `track`, `evaluate`, `features` and
//! `register`. Exit codes: 0 success, 2 configuration or scenario error,
//! 3 data error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{report, write_report, write_trajectory_csv, EvalReport, Timing, Trajectory};
use crate::features::FeatureConfig;
use crate::imaging::{crop, load_feature_map, read_ground_truth, save_feature_map, ChannelStack, Rect, SequenceManifest};
use crate::registration::{warp, Homography, Registrar, RegistrationParams};
use crate::sim::{self, ScenarioSpec};
use crate::tracker::{FrameSource, TrackState, Tracker, TrackerConfig, CONFIG_SCHEMA_VERSION};

pub const LOG_ENV: &str = "HKCF_LOG";

#[derive(Debug, Parser)]
#[command(name = "hkcf", version, about = "Multi-ROI correlation filter tracking toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = one per CPU.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic sequence from a scenario spec.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Track every ground-truth target of a sequence.
    Track {
        #[command(flatten)]
        common: Common,
        /// Also write `timing.csv` with per-frame wall time.
        #[arg(long)]
        timing: bool,
    },
    /// Score trajectories against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Directory holding `trajectory_<k>.csv` files.
        #[arg(long)]
        trajectories: Option<PathBuf>,
        /// Manifest whose ground-truth files are the reference.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Ground-truth CSVs, target 0 first (instead of `--manifest`).
        #[arg(long = "gt")]
        ground_truth: Vec<PathBuf>,
    },
    /// Dump per-frame feature tensors as FMAP files.
    Features {
        #[command(flatten)]
        common: Common,
    },
    /// Estimate frame-to-canonical homographies for a sequence.
    Register {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegistrationMode {
    Estimate,
    FromManifest,
    #[default]
    Off,
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

/// Configuration of `track`. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub manifest: PathBuf,
    pub tracker_config: PathBuf,
    #[serde(default)]
    pub feature_map_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub registration: RegistrationMode,
    #[serde(default)]
    pub registration_params: RegistrationParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: usize,
}

/// Configuration of `features`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub manifest: PathBuf,
    #[serde(default)]
    pub features: FeatureConfig,
    /// Canonical-frame window to encode; the whole frame when absent.
    #[serde(default)]
    pub crop: Option<Rect>,
    #[serde(default)]
    pub registration: RegistrationMode,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub threads: usize,
}

fn check_schema(version: u32, path: &Path) -> Result<()> {
    if version != CONFIG_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: schema_version {version} is not supported (expected {CONFIG_SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("{} does not exist", path.display())),
        _ => Error::io(path, e),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_exists(p: &Path, what: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", p.display())))
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: RunConfig = read_json(path)?;
        check_schema(cfg.schema_version, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = relative_to(base, &cfg.manifest);
        cfg.tracker_config = relative_to(base, &cfg.tracker_config);
        cfg.feature_map_dir = cfg.feature_map_dir.map(|p| relative_to(base, &p));
        cfg.output_dir = cfg.output_dir.map(|p| relative_to(base, &p));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        require_exists(&self.manifest, "manifest")?;
        require_exists(&self.tracker_config, "tracker config")?;
        if let Some(d) = &self.feature_map_dir {
            require_exists(d, "feature map directory")?;
        }
        Ok(())
    }
}

impl FeaturesConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: FeaturesConfig = read_json(path)?;
        check_schema(cfg.schema_version, path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.manifest = relative_to(base, &cfg.manifest);
        cfg.output_dir = cfg.output_dir.map(|p| relative_to(base, &p));
        require_exists(&cfg.manifest, "manifest")?;
        cfg.features.validate()?;
        Ok(cfg)
    }
}

/// Options of a tracking run that are not part of the tracker itself.
#[derive(Debug, Clone, Default)]
pub struct TrackOptions {
    pub registration: RegistrationMode,
    pub registration_params: RegistrationParams,
    /// Directory of whole-frame FMAP files for `deep-from-file` features.
    pub feature_map_dir: Option<PathBuf>,
}

/// Trajectories of a run, one per ground-truth target, plus per-frame
/// wall time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRun {
    pub states: Vec<Vec<TrackState>>,
    pub frame_seconds: Vec<f64>,
}

impl TrackRun {
    pub fn timing(&self) -> Timing {
        Timing {
            frames: self.frame_seconds.len() as u64,
            seconds: self.frame_seconds.iter().sum(),
        }
    }
}

pub fn feature_map_path(dir: &Path, frame: u64) -> PathBuf {
    dir.join(format!("frame_{frame:05}.fmap"))
}

/// Supplies each frame's canonical-frame homography.
struct Registration<'a> {
    mode: RegistrationMode,
    manifest: &'a SequenceManifest,
    registrar: Option<Registrar>,
}

impl<'a> Registration<'a> {
    fn new(mode: RegistrationMode, params: &RegistrationParams, manifest: &'a SequenceManifest) -> Result<Self> {
        if mode == RegistrationMode::FromManifest && manifest.homographies.is_none() {
            return Err(Error::Config("registration 'from-manifest' needs homographies in the manifest".into()));
        }
        Ok(Self {
            mode,
            manifest,
            registrar: (mode == RegistrationMode::Estimate).then(|| Registrar::new(params.clone())),
        })
    }

    fn needs_pixels(&self) -> bool {
        self.mode == RegistrationMode::Estimate
    }

    fn homography(&mut self, i: usize, raw: Option<&ChannelStack>) -> Result<Homography> {
        match self.mode {
            RegistrationMode::Off => Ok(Homography::IDENTITY),
            RegistrationMode::FromManifest => Homography::from_array(&self.manifest.homographies.as_ref().unwrap()[i]),
            RegistrationMode::Estimate => self
                .registrar
                .as_mut()
                .unwrap()
                .push(raw.expect("estimation reads pixels"))
                .map_err(|e| match e {
                    Error::Estimation(m) => Error::Estimation(format!("frame {}: {m}", self.manifest.frames[i].index)),
                    other => other,
                }),
        }
    }
}

/// Runs one tracker per ground-truth target over the manifest on the
/// current rayon pool.
pub fn track_manifest(manifest: &SequenceManifest, config: &TrackerConfig, opts: &TrackOptions) -> Result<TrackRun> {
    config.validate()?;
    let first = manifest
        .frames
        .first()
        .ok_or_else(|| Error::Contract("manifest has no frames".into()))?
        .index;
    let gt_paths = manifest.ground_truth_paths();
    if gt_paths.is_empty() {
        return Err(Error::Config("manifest names no ground truth to initialize from".into()));
    }
    let starts = gt_paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            read_ground_truth(p)?
                .into_iter()
                .find(|r| r.frame == first)
                .map(|r| (r.cx, r.cy))
                .ok_or_else(|| Error::Contract(format!("target {k}: no ground truth on frame {first}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let deep = config.features.build()?.reads_feature_maps();
    let fmap_dir = match (&opts.feature_map_dir, deep) {
        (Some(d), true) => Some(d.clone()),
        (None, true) => return Err(Error::Config("deep-from-file features need feature_map_dir".into())),
        _ => None,
    };
    let mut reg = Registration::new(opts.registration, &opts.registration_params, manifest)?;
    let mut trackers: Vec<Tracker> = Vec::new();
    let mut states: Vec<Vec<TrackState>> = vec![Vec::new(); starts.len()];
    let mut frame_seconds = Vec::with_capacity(manifest.frames.len());

    for (i, entry) in manifest.frames.iter().enumerate() {
        let clock = Instant::now();
        let raw = if fmap_dir.is_none() || reg.needs_pixels() {
            Some(manifest.load_frame(i)?)
        } else {
            None
        };
        let h = reg.homography(i, raw.as_ref())?;
        let map;
        let canonical;
        let source = match &fmap_dir {
            Some(dir) => {
                let path = feature_map_path(dir, entry.index);
                if !path.exists() {
                    return Err(Error::MissingFeatureMap { frame: entry.index, path });
                }
                let (m, stride) = load_feature_map(&path)?;
                map = m;
                FrameSource::FeatureMap { map: &map, stride: stride as usize }
            }
            None => {
                canonical = warp(raw.as_ref().unwrap(), &h)?.stack;
                FrameSource::Pixels(&canonical)
            }
        };
        if i == 0 {
            trackers = starts
                .par_iter()
                .map(|&c| Tracker::init(config, source, c))
                .collect::<Result<_>>()?;
            for (k, &c) in starts.iter().enumerate() {
                states[k].push(TrackState { frame: entry.index, center: c, best_psr: 0.0, coasting: false, lost: false });
            }
        } else {
            let step: Vec<TrackState> = trackers
                .par_iter_mut()
                .map(|t| t.step(source, entry.index))
                .collect::<Result<_>>()?;
            for (k, s) in step.into_iter().enumerate() {
                states[k].push(s);
            }
        }
        frame_seconds.push(clock.elapsed().as_secs_f64());
        debug!("frame {} done in {:.3}s", entry.index, frame_seconds[i]);
    }
    Ok(TrackRun { states, frame_seconds })
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config(format!("missing {what}")))
}

pub fn cmd_simulate(spec_path: &Path, out: &Path, seed: Option<u64>, threads: usize) -> Result<SequenceManifest> {
    let mut spec: ScenarioSpec = read_json(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    with_pool(threads, || sim::generate(&spec, out))
}

pub fn trajectory_file_name(target: usize) -> String {
    format!("trajectory_{target}.csv")
}

pub fn cmd_track(run: &RunConfig, out: &Path, write_timing: bool) -> Result<TrackRun> {
    let manifest = SequenceManifest::load(&run.manifest)?;
    let config = TrackerConfig::load(&run.tracker_config)?;
    let mut params = run.registration_params.clone();
    params.ransac.seed = run.seed;
    let opts = TrackOptions {
        registration: run.registration,
        registration_params: params,
        feature_map_dir: run.feature_map_dir.clone(),
    };
    let result = with_pool(run.threads, || track_manifest(&manifest, &config, &opts))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (k, states) in result.states.iter().enumerate() {
        write_trajectory_csv(out.join(trajectory_file_name(k)), states)?;
    }
    if write_timing {
        let mut text = String::from("frame,seconds\n");
        for (entry, s) in manifest.frames.iter().zip(&result.frame_seconds) {
            text.push_str(&format!("{},{s}\n", entry.index));
        }
        let t = result.timing();
        text.push_str(&format!("# {} frames in {}s, {} fps\n", t.frames, t.seconds, t.fps()));
        let p = out.join("timing.csv");
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    info!("tracked {} target(s) over {} frames", result.states.len(), manifest.frames.len());
    Ok(result)
}

/// Reads `timing.csv` as written by `track --timing`.
pub fn read_timing(path: &Path) -> Result<Timing> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut t = Timing { frames: 0, seconds: 0.0 };
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let secs = line
            .split(',')
            .nth(1)
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Csv { path: path.to_path_buf(), line: n + 1, message: format!("bad row '{line}'") })?;
        t.frames += 1;
        t.seconds += secs;
    }
    Ok(t)
}

pub fn cmd_evaluate(traj_dir: &Path, gts: &[PathBuf], out: &Path) -> Result<EvalReport> {
    let truth = gts
        .iter()
        .enumerate()
        .map(|(k, p)| Trajectory::read_ground_truth(k, p))
        .collect::<Result<Vec<_>>>()?;
    let mut preds = Vec::new();
    let entries = fs::read_dir(traj_dir).map_err(|e| Error::io(traj_dir, e))?;
    let mut names: Vec<(usize, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k = name.strip_prefix("trajectory_")?.strip_suffix(".csv")?.parse().ok()?;
            Some((k, e.path()))
        })
        .collect();
    names.sort();
    for (k, p) in names {
        preds.push(Trajectory::read_csv(k, p)?);
    }
    let timing_path = traj_dir.join("timing.csv");
    let timing = if timing_path.exists() { Some(read_timing(&timing_path)?) } else { None };
    let r = report(&preds, &truth, timing)?;
    write_report(&r, out)?;
    Ok(r)
}

/// Writes one FMAP per frame, `frame_<index>.fmap`, with stride equal to
/// the cell size.
pub fn cmd_features(cfg: &FeaturesConfig, out: &Path) -> Result<usize> {
    let manifest = SequenceManifest::load(&cfg.manifest)?;
    let extractor = cfg.features.build()?;
    if extractor.reads_feature_maps() {
        return Err(Error::Config(format!("feature kind '{}' cannot be computed from pixels", extractor.name())));
    }
    let stride = u16::try_from(cfg.features.cell_size)
        .map_err(|_| Error::Config("cell_size does not fit the FMAP stride field".into()))?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut reg = Registration::new(cfg.registration, &RegistrationParams::default(), &manifest)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for i in 0..manifest.frames.len() {
        let raw = manifest.load_frame(i)?;
        let h = reg.homography(i, Some(&raw))?;
        frames.push((i, h));
    }
    with_pool(cfg.threads, || {
        frames.par_iter().try_for_each(|&(i, h)| {
            let canonical = warp(&manifest.load_frame(i)?, &h)?.stack;
            let patch = match cfg.crop {
                Some(r) => crop(&canonical, r),
                None => canonical,
            };
            let fm = extractor.extract(&patch)?;
            save_feature_map(feature_map_path(out, manifest.frames[i].index), &fm, stride)
        })
    })?;
    Ok(frames.len())
}

/// Per-frame registration output of `register`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredFrame {
    pub frame: u64,
    pub homography: [f64; 9],
    /// Largest displacement of the frame corners between the estimate and
    /// the manifest's homography, when the manifest has one.
    pub corner_error_px: Option<f64>,
}

fn corner_error(a: &Homography, b: &Homography, w: f64, h: f64) -> f64 {
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
        .iter()
        .map(|&(x, y)| {
            let (p, q) = (a.apply(x, y), b.apply(x, y));
            (p.0 - q.0).hypot(p.1 - q.1)
        })
        .fold(0.0, f64::max)
}

/// Estimates the homographies, writes `registration.json` and a copy of
/// the manifest carrying them to `out`.
pub fn cmd_register(manifest_path: &Path, out: &Path, params: &RegistrationParams, threads: usize) -> Result<Vec<RegisteredFrame>> {
    let manifest = SequenceManifest::load(manifest_path)?;
    let frames = with_pool(threads, || {
        let mut registrar = Registrar::new(params.clone());
        manifest
            .frames
            .iter()
            .enumerate()
            .map(|(i, entry)| {
                let raw = manifest.load_frame(i)?;
                let h = registrar.push(&raw).map_err(|e| match e {
                    Error::Estimation(m) => Error::Estimation(format!("frame {}: {m}", entry.index)),
                    other => other,
                })?;
                let corner_error_px = match &manifest.homographies {
                    Some(hs) => Some(corner_error(&h, &Homography::from_array(&hs[i])?, raw.width() as f64, raw.height() as f64)),
                    None => None,
                };
                Ok(RegisteredFrame { frame: entry.index, homography: h.to_array(), corner_error_px })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let json_path = out.join("registration.json");
    let mut text = serde_json::to_string_pretty(&frames).map_err(|e| Error::json(&json_path, e))?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;

    let mut registered = manifest.clone();
    registered.homographies = Some(frames.iter().map(|f| f.homography).collect());
    let base = fs::canonicalize(&manifest.base_dir).unwrap_or_else(|_| manifest.base_dir.clone());
    let absolute = |p: &str| base.join(p).to_string_lossy().into_owned();
    for f in &mut registered.frames {
        f.path = absolute(&f.path);
    }
    registered.ground_truth = registered.ground_truth.as_deref().map(absolute);
    registered.additional_ground_truth = registered.additional_ground_truth.iter().map(|p| absolute(p)).collect();
    registered.occlusion = registered.occlusion.as_deref().map(absolute);
    registered.save(out.join("manifest.json"))?;
    Ok(frames)
}

fn config_dir_default(config: &Path, name: &str) -> PathBuf {
    config.parent().unwrap_or(Path::new("")).join(name)
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let spec = need(&common.config, "--config <scenario.json>")?;
            let out = common.out.clone().unwrap_or_else(|| config_dir_default(spec, "sequence"));
            let m = cmd_simulate(spec, &out, common.seed, common.threads.unwrap_or(0))?;
            info!("wrote {} frames to {}", m.frames.len(), out.display());
        }
        Command::Track { common, timing } => {
            let path = need(&common.config, "--config <run.json>")?;
            let mut run = RunConfig::load(path)?;
            if let Some(s) = common.seed {
                run.seed = s;
            }
            if let Some(t) = common.threads {
                run.threads = t;
            }
            let out = common
                .out
                .clone()
                .or_else(|| run.output_dir.clone())
                .unwrap_or_else(|| config_dir_default(path, "tracks"));
            cmd_track(&run, &out, timing)?;
        }
        Command::Evaluate { common, trajectories, manifest, ground_truth } => {
            let dir = need(&trajectories, "--trajectories <dir>")?;
            let gts = match (&manifest, ground_truth.is_empty()) {
                (Some(m), true) => SequenceManifest::load(m)?.ground_truth_paths(),
                (None, false) => ground_truth,
                _ => return Err(Error::Config("give exactly one of --manifest or --gt".into())),
            };
            let out = common.out.clone().unwrap_or_else(|| dir.clone());
            let r = cmd_evaluate(dir, &gts, &out)?;
            println!("cle {:.3} px, pr20 {:.4}, pr50 {:.4}", r.cle, r.pr20, r.pr50);
        }
        Command::Features { common } => {
            let path = need(&common.config, "--config <features.json>")?;
            let mut cfg = FeaturesConfig::load(path)?;
            if let Some(t) = common.threads {
                cfg.threads = t;
            }
            let out = common
                .out
                .clone()
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| config_dir_default(path, "features"));
            let n = cmd_features(&cfg, &out)?;
            info!("wrote {n} feature maps to {}", out.display());
        }
        Command::Register { common, manifest } => {
            let m = need(&manifest, "--manifest <manifest.json>")?;
            let mut params: RegistrationParams = match &common.config {
                Some(p) => read_json(p)?,
                None => RegistrationParams::default(),
            };
            if let Some(s) = common.seed {
                params.ransac.seed = s;
            }
            let out = common.out.clone().unwrap_or_else(|| config_dir_default(m, "registered"));
            let frames = cmd_register(m, &out, &params, common.threads.unwrap_or(0))?;
            if let Some(worst) = frames.iter().filter_map(|f| f.corner_error_px).reduce(f64::max) {
                println!("largest corner error against the manifest: {worst:.3} px");
            }
        }
    }
    Ok(())
}

/// Entry point shared by the binary: initializes logging, runs, maps
/// errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
