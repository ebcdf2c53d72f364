//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report is always printed; exits non-zero if any
//! criterion fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use common::*;
use hkcf::cli::{track_manifest, TrackOptions};
use hkcf::eval::{cle, precision_curve, report, write_trajectory_csv, Trajectory, MAX_THRESHOLD};
use hkcf::fft::FftCache;
use hkcf::imaging::{read_ground_truth, ChannelStack, FrameEntry, SequenceManifest};
use hkcf::kcf::{kernel_correlation, psr, Kcf, KcfParams};
use hkcf::registration::{estimate_homography_ransac, reprojection_error, Homography, Match, RansacParams, Registrar, RegistrationParams};
use hkcf::sim::{self, ScenarioSpec};
use hkcf::tracker::{grid_rois, FrameSource, GridConfig, TrackState, Tracker, TrackerConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn scenario(json: serde_json::Value) -> ScenarioSpec {
    let spec: ScenarioSpec = serde_json::from_value(json).expect("scenario parses");
    spec.validate().expect("scenario is valid");
    spec
}

fn simulate(spec: &ScenarioSpec, dir: &Path) -> SequenceManifest {
    sim::generate(spec, dir).expect("simulation runs");
    SequenceManifest::load(dir.join("manifest.json")).expect("manifest loads")
}

fn on_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn ground_truth(manifest: &SequenceManifest) -> Trajectory {
    Trajectory::read_ground_truth(0, &manifest.ground_truth_paths()[0]).unwrap()
}

fn circulant_oracle() -> Outcome {
    let clock = Instant::now();
    let kcf = Kcf::new(KcfParams::default()).unwrap();
    let p = kcf.params().clone();
    let fft = FftCache::new();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let x = windowed(&mut r, 8, 8, 1);
        let mut alpha = kcf.train(&x).unwrap().alpha_hat().to_vec();
        fft.inverse(8, 8, &mut alpha);
        let alpha: Vec<f64> = alpha.iter().map(|v| v.re).collect();
        let y = label(8, 8, p.output_sigma_factor * 8.0);
        let dense = dense_dual(&x, &y, p.lambda, |a, b| gaussian_kappa(a, b, p.kernel_sigma));
        worst = worst.max(relative_error(&alpha, &dense));
    }
    let secs = clock.elapsed().as_secs_f64();
    outcome(worst < 1e-6 && secs < 5.0, format!("max relative error {worst:.2e} over 50 instances in {secs:.2} s"))
}

fn detection_oracle() -> Outcome {
    let kcf = Kcf::new(KcfParams::default()).unwrap();
    let p = kcf.params().clone();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (x, z) = (windowed(&mut r, 8, 8, 1), windowed(&mut r, 8, 8, 1));
        let got = kcf.detect(&kcf.train(&x).unwrap(), &z).unwrap().values;
        let kappa = |a: &[f64], b: &[f64]| gaussian_kappa(a, b, p.kernel_sigma);
        let alpha = dense_dual(&x, &label(8, 8, p.output_sigma_factor * 8.0), p.lambda, kappa);
        let want = brute_force_response(&x, &z, &alpha, kappa);
        worst = worst.max(relative_error(&got, &want));
    }
    outcome(worst < 1e-6, format!("max relative error {worst:.2e} over 64 shifts x 50 instances"))
}

fn primal_dual() -> Outcome {
    let kcf = Kcf::new(KcfParams { kernel: "linear".into(), ..KcfParams::default() }).unwrap();
    let p = kcf.params().clone();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (x, z) = (windowed(&mut r, 8, 8, 1), windowed(&mut r, 8, 8, 1));
        let got = kcf.detect(&kcf.train(&x).unwrap(), &z).unwrap().values;
        let want = primal_response(&x, &z, &label(8, 8, p.output_sigma_factor * 8.0), p.lambda);
        worst = worst.max(relative_error(&got, &want));
    }
    outcome(worst < 1e-5, format!("linear kernel, max relative error {worst:.2e} against the primal ridge solution"))
}

fn kernel_brute_force() -> Outcome {
    let mut r = rng(4);
    let (mut worst, mut self_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (x, z) = (random_stack(&mut r, 4, 4, 2), random_stack(&mut r, 4, 4, 2));
        let sigma = r.random_range(0.3..2.0);
        let got = kernel_correlation(&x, &z, sigma).unwrap();
        let want = kernel_by_shifts(&x, &z, |a, b| gaussian_kappa(a, b, sigma));
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        self_err = self_err.max((kernel_correlation(&x, &x, sigma).unwrap()[0] - 1.0).abs());
    }
    outcome(
        worst < 1e-9 && self_err < 1e-12,
        format!("max abs error {worst:.2e}, |k_xx(0,0) - 1| = {self_err:.2e}"),
    )
}

fn psr_properties() -> Outcome {
    let mut r = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (h, w) = (r.random_range(12..20), r.random_range(12..20));
        let map: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let (a, c) = (r.random_range(0.01..100.0), r.random_range(-50.0..50.0));
        let scaled: Vec<f64> = map.iter().map(|v| a * v + c).collect();
        worst = worst.max((psr(&map, h, w) - psr(&scaled, h, w)).abs());
    }
    let mut example = vec![0.0; 15 * 15];
    let mut side = 0;
    for y in 0..15 {
        for x in 0..15 {
            let inside = (2..13).contains(&y) && (2..13).contains(&x);
            example[y * 15 + x] = if inside {
                5.0
            } else {
                side += 1;
                if side % 2 == 0 { 1.0 } else { 3.0 }
            };
        }
    }
    example[7 * 15 + 7] = 10.0;
    let eight = psr(&example, 15, 15);
    let flat = psr(&vec![0.25; 144], 12, 12);
    outcome(
        worst < 1e-9 && (eight - 8.0).abs() < 1e-12 && flat == 0.0 && side == 104,
        format!("affine invariance error {worst:.2e}, 15x15 example {eight}, constant map {flat}"),
    )
}

fn seeded_frames(seed: u64, n: usize) -> Vec<ChannelStack> {
    let mut r = rng(seed);
    let base = random_stack(&mut r, 200, 200, 1);
    (0..n)
        .map(|_| {
            let (ox, oy) = (r.random_range(0..8usize), r.random_range(0..8usize));
            ChannelStack::from_fn(160, 160, 1, |_, y, x| base.get(0, y + oy, x + ox) + 0.2 * r.random_range(-1.0f32..1.0))
        })
        .collect()
}

fn grid_geometry() -> Outcome {
    let grid = GridConfig::default();
    let rois = grid_rois(&grid, (100.0, 100.0)).unwrap();
    let full = grid.full_roi((100.0, 100.0));
    let offsets_ok = rois.iter().enumerate().all(|(k, r)| {
        r.x - full.x == 16 * (k as i64 % 4) && r.y - full.y == 16 * (k as i64 / 4) && r.w == 48 && r.h == 48
    });
    let geometry = rois.len() == 16 && grid.stride() == 16 && offsets_ok;

    let mut cfg = TrackerConfig::default();
    cfg.grid = GridConfig { grid_n: 1, full_roi_size: 48, psr_threshold: 0.0, ..GridConfig::default() };
    let frames = seeded_frames(6, 21);
    let start = (80.0, 80.0);
    let mut tracker = Tracker::init(&cfg, FrameSource::Pixels(&frames[0]), start).unwrap();
    let ours: Vec<TrackState> = frames[1..]
        .iter()
        .enumerate()
        .map(|(i, f)| tracker.step(FrameSource::Pixels(f), i as u64 + 1).unwrap())
        .collect();
    let direct: Vec<TrackState> = direct_kcf(&cfg, &frames, start)
        .into_iter()
        .enumerate()
        .map(|(i, (center, psr))| TrackState { frame: i as u64 + 1, center, best_psr: psr, coasting: false, lost: false })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("grid.csv"), dir.path().join("direct.csv"));
    write_trajectory_csv(&a, &ours).unwrap();
    write_trajectory_csv(&b, &direct).unwrap();
    let identical = fs::read(&a).unwrap() == fs::read(&b).unwrap() && ours == direct;
    outcome(
        geometry && identical,
        format!(
            "{} ROIs at stride {}, 1x1 trajectory over {} frames {} the direct KCF",
            rois.len(),
            grid.stride(),
            ours.len(),
            if identical { "byte-identical to" } else { "differs from" }
        ),
    )
}

fn tracker_config(grid_n: usize) -> TrackerConfig {
    let mut cfg = TrackerConfig::default();
    if grid_n == 1 {
        cfg.grid = GridConfig { grid_n: 1, full_roi_size: 48, ..GridConfig::default() };
    }
    cfg
}

fn pr50(manifest: &SequenceManifest, cfg: &TrackerConfig) -> f64 {
    let run = track_manifest(manifest, cfg, &TrackOptions::default()).unwrap();
    let traj = Trajectory::from_states(0, &run.states[0]).unwrap();
    report(&[traj], &[ground_truth(manifest)], None).unwrap().pr50
}

/// Values from the first verified run of the 30 px/frame scenario.
const PR50_GRID_4: f64 = 1.0;
const PR50_GRID_1: f64 = 0.05;

fn multi_roi_benefit() -> Outcome {
    let spec = scenario(serde_json::json!({
        "width": 512, "height": 512, "frames": 40, "fps": 1.42, "seed": 7,
        "targets": [{"size": [20.0, 10.0], "position": [60.0, 60.0],
                     "waypoints": [[450.0, 450.0], [450.0, 60.0], [60.0, 450.0]],
                     "speed": 42.6, "albedo": [0.9]}]
    }));
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate(&spec, dir.path());
    let gt = read_ground_truth(&manifest.ground_truth_paths()[0]).unwrap();
    let step = (gt[1].cx - gt[0].cx).hypot(gt[1].cy - gt[0].cy);
    let (four, one) = (pr50(&manifest, &tracker_config(4)), pr50(&manifest, &tracker_config(1)));
    let baseline = (four - PR50_GRID_4).abs() < 1e-12 && (one - PR50_GRID_1).abs() < 1e-12;
    outcome(
        four - one >= 0.15 && (step - 30.0).abs() < 1e-9 && baseline,
        format!(
            "{step:.1} px/frame: pr50 4x4 = {four:.3}, 1x1 = {one:.3}, gap {:.1} pp (baseline {})",
            100.0 * (four - one),
            if baseline { "matches" } else { "changed" }
        ),
    )
}

fn occlusion_behavior() -> Outcome {
    let spec = scenario(serde_json::json!({
        "width": 480, "height": 256, "frames": 40, "fps": 1.42, "seed": 11,
        "targets": [{"size": [20.0, 10.0], "position": [60.0, 128.0], "waypoints": [[420.0, 128.0]],
                     "speed": 8.0 * 1.42, "albedo": [0.9]}],
        "occluders": [{"rect": {"x": 200, "y": 0, "w": 96, "h": 256}}]
    }));
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate(&spec, dir.path());
    let flags = sim::read_occlusion(manifest.resolve(manifest.occlusion.as_deref().unwrap())).unwrap();
    let mut cfg = TrackerConfig::default();
    cfg.grid.fusion = "soft".into();
    cfg.grid.psr_threshold = 7.0;
    let run = track_manifest(&manifest, &cfg, &TrackOptions::default()).unwrap();
    let occluded: Vec<u64> = flags.iter().filter(|f| f.1 == 0 && f.2).map(|f| f.0).collect();
    let coasted = run.states[0].iter().filter(|s| s.coasting && occluded.contains(&s.frame)).count();
    let share = occluded.len() as f64 / spec.frames as f64;
    let rate = coasted as f64 / occluded.len().max(1) as f64;
    let best: f64 = run.states[0]
        .iter()
        .filter(|s| occluded.contains(&s.frame))
        .map(|s| s.best_psr)
        .fold(f64::INFINITY, f64::min);
    outcome(
        rate >= 0.9 && (share - 0.25).abs() < 1e-9,
        format!(
            "{} of {} frames fully occluded ({:.0}%), coasted on {coasted} ({:.0}%), lowest best-ROI PSR while hidden {best:.1}",
            occluded.len(),
            spec.frames,
            100.0 * share,
            100.0 * rate
        ),
    )
}

fn registration() -> Outcome {
    let truth = Homography::new([[1.02, 0.03, 4.0], [-0.02, 0.99, -3.0], [1e-5, -2e-5, 1.0]]).unwrap();
    let mut r = rng(9);
    let mut matches = Vec::new();
    let mut inlier = Vec::new();
    for k in 0..200 {
        let p = (r.random_range(0.0..512.0), r.random_range(0.0..512.0));
        let outlier = k % 10 < 3;
        let q = if outlier {
            (r.random_range(0.0..512.0), r.random_range(0.0..512.0))
        } else {
            let q = truth.apply(p.0, p.1);
            (q.0 + r.random_range(-0.3..0.3), q.1 + r.random_range(-0.3..0.3))
        };
        matches.push(Match { p, q, score: 1.0 });
        inlier.push(!outlier);
    }
    let (h, _) = estimate_homography_ransac(&matches, &RansacParams::default()).unwrap();
    let errs: Vec<f64> = matches.iter().zip(&inlier).filter(|m| *m.1).map(|m| reprojection_error(&h, m.0)).collect();
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();

    let spec = scenario(serde_json::json!({
        "width": 256, "height": 256, "frames": 157, "fps": 1.42, "seed": 21,
        "camera_jitter": {"max_translation": 1.5, "max_rotation_deg": 0.2}
    }));
    let plan = sim::plan(&spec).unwrap();
    let mut registrar = Registrar::new(RegistrationParams::default());
    let mut drift = 0.0f64;
    for t in 0..spec.frames {
        let est = registrar.push(&sim::render(&spec, &plan, t)).unwrap();
        for (x, y) in [(0.0, 0.0), (256.0, 0.0), (0.0, 256.0), (256.0, 256.0)] {
            let (a, b) = (est.apply(x, y), plan.cameras[t].apply(x, y));
            drift = drift.max((a.0 - b.0).hypot(a.1 - b.1));
        }
    }
    outcome(
        rms < 0.5 && drift < 2.0,
        format!("inlier RMS {rms:.3} px with 30% outliers; worst corner drift over 157 jittered frames {drift:.3} px"),
    )
}

fn metrics() -> Outcome {
    let mut r = rng(10);
    let mut monotone = true;
    for _ in 0..50 {
        let n = r.random_range(1..200);
        let pts = |r: &mut rand_chacha::ChaCha8Rng| {
            (0..n as u64).map(|f| (f, (r.random_range(0.0..300.0), r.random_range(0.0..300.0)))).collect::<Vec<_>>()
        };
        let a = Trajectory::new(0, pts(&mut r)).unwrap();
        let b = Trajectory::new(0, pts(&mut r)).unwrap();
        let curve = precision_curve(&a, &b, MAX_THRESHOLD).unwrap();
        monotone &= curve.windows(2).all(|w| w[0] <= w[1]);
    }
    let e = cle(&Trajectory::new(0, vec![(0, (0.0, 0.0))]).unwrap(), &Trajectory::new(0, vec![(0, (3.0, 4.0))]).unwrap())
        .unwrap();
    let manifest = SequenceManifest {
        fps: 1.42,
        channels: 1,
        frames: (0..157).map(|i| FrameEntry { index: i, path: format!("frame_{i:05}.hsif"), timestamp: i as f64 / 1.42 }).collect(),
        homographies: None,
        ground_truth: None,
        additional_ground_truth: Vec::new(),
        occlusion: None,
        wavelengths_nm: None,
        base_dir: PathBuf::new(),
    };
    let half = sim::downsample(&manifest, 2).unwrap();
    outcome(
        monotone && e == 5.0 && (half.fps - 0.71).abs() < 1e-12,
        format!("precision monotone: {monotone}, CLE 3-4-5 = {e}, downsampled fps {} over {} frames", half.fps, half.frames.len()),
    )
}

fn throughput() -> Outcome {
    let spec = scenario(serde_json::json!({
        "width": 512, "height": 512, "frames": 24, "fps": 1.42, "seed": 12,
        "targets": [{"size": [20.0, 10.0], "position": [100.0, 100.0], "waypoints": [[400.0, 400.0]],
                     "speed": 14.2, "albedo": [0.9]}]
    }));
    let dir = tempfile::tempdir().unwrap();
    let manifest = simulate(&spec, dir.path());
    let cfg = TrackerConfig::default();
    let run = |threads| on_pool(threads, || track_manifest(&manifest, &cfg, &TrackOptions::default()).unwrap());
    let single = run(1);
    let parallel = run(4);
    let (fps1, fps4) = (single.timing().fps(), parallel.timing().fps());
    let speedup = fps4 / fps1;
    let identical = single.states == parallel.states;
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    outcome(
        fps1 >= 1.0 && speedup >= 2.0 && identical,
        format!(
            "512x512 4x4 fHoG: {fps1:.1} fps on 1 thread, {fps4:.1} fps on 4 ({speedup:.2}x, host has {cpus} CPU{}), trajectories {}",
            if cpus == 1 { "" } else { "s" },
            if identical { "bit-identical" } else { "differ" }
        ),
    )
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn hkcf(args: &[&str], cwd: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_hkcf")).args(args).current_dir(cwd).status().unwrap().code().unwrap_or(-1)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let write = |name: &str, v: serde_json::Value| fs::write(d.join(name), v.to_string()).unwrap();
    write(
        "scene.json",
        serde_json::json!({
            "width": 192, "height": 192, "frames": 8, "fps": 1.42, "seed": 3,
            "camera_jitter": {"max_translation": 1.0, "max_rotation_deg": 0.1},
            "targets": [{"size": [20.0, 10.0], "position": [60.0, 60.0], "waypoints": [[130.0, 130.0]], "speed": 14.2, "albedo": [0.9]},
                        {"size": [20.0, 10.0], "position": [140.0, 50.0], "waypoints": [[60.0, 140.0]], "speed": 11.0, "albedo": [0.2]}]
        }),
    );
    write("tracker.json", serde_json::json!({}));
    let mut codes = Vec::new();
    let mut same = Vec::new();
    for run in ["a", "b"] {
        codes.push(hkcf(&["simulate", "--config", "scene.json", "--out", &format!("{run}/seq")], d));
        write(
            &format!("{run}/run.json"),
            serde_json::json!({"manifest": "seq/manifest.json", "tracker_config": "../tracker.json", "registration": "estimate"}),
        );
        write(&format!("{run}/features.json"), serde_json::json!({"manifest": "seq/manifest.json"}));
        codes.push(hkcf(&["track", "--config", &format!("{run}/run.json"), "--seed", "5", "--out", &format!("{run}/tracks")], d));
        codes.push(hkcf(
            &["evaluate", "--trajectories", &format!("{run}/tracks"), "--manifest", &format!("{run}/seq/manifest.json"), "--out", &format!("{run}/eval")],
            d,
        ));
        codes.push(hkcf(&["features", "--config", &format!("{run}/features.json"), "--out", &format!("{run}/fmaps")], d));
        codes.push(hkcf(&["register", "--manifest", &format!("{run}/seq/manifest.json"), "--out", &format!("{run}/reg")], d));
    }
    for sub in ["seq", "tracks", "eval", "fmaps"] {
        let (a, b) = (tree(&d.join("a").join(sub)), tree(&d.join("b").join(sub)));
        same.push(!a.is_empty() && a == b);
    }
    let reg = |run: &str| fs::read(d.join(run).join("reg/registration.json")).unwrap_or_default();
    same.push(!reg("a").is_empty() && reg("a") == reg("b"));
    let ok = codes.iter().all(|&c| c == 0) && same.iter().all(|&s| s);
    outcome(
        ok,
        format!("exit codes {codes:?}; simulate/track/evaluate/features/register outputs identical: {same:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("circulant oracle", circulant_oracle),
        ("detection oracle", detection_oracle),
        ("primal/dual cross-check", primal_dual),
        ("kernel brute force", kernel_brute_force),
        ("PSR properties", psr_properties),
        ("grid geometry and 1x1 reduction", grid_geometry),
        ("multi-ROI benefit", multi_roi_benefit),
        ("occlusion coasting", occlusion_behavior),
        ("registration", registration),
        ("metrics", metrics),
        ("throughput", throughput),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {:>2} {:<32} {}  {} [{:.1}s]",
            k + 1,
            name,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            clock.elapsed().as_secs_f64()
        );
        if !result.pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("all {} criteria pass", criteria.len());
    } else {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
