//! Synthetic multi-channel sequences with exact ground truth: textured
//! rectangular targets moving along waypoint paths over a value-noise
//! background, opaque occluder strips, and a jittering camera.
//!
//! The scene lives in world coordinates, which are the pixel coordinates
//! of frame 0. Frame `t` samples the world through the camera transform
//! `C_t` (frame pixels to world pixels); `C_t` is what the manifest stores
//! as the frame's homography.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{save_frame, write_ground_truth, ChannelStack, FrameEntry, GroundTruthRow, Rect, SequenceManifest};
use crate::registration::Homography;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundSpec {
    pub mean: f64,
    pub contrast: f64,
    /// Lattice spacing of the coarsest noise octave, px.
    pub scale: f64,
    pub octaves: usize,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            mean: 0.35,
            contrast: 0.25,
            scale: 24.0,
            octaves: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    /// `(w, h)` px.
    pub size: (f64, f64),
    /// Centre on frame 0, world px.
    pub position: (f64, f64),
    /// Visited in order after `position`; the target stops at the last one.
    #[serde(default)]
    pub waypoints: Vec<(f64, f64)>,
    /// px/s along the path.
    #[serde(default)]
    pub speed: f64,
    /// One value per channel, or a single value for all channels.
    pub albedo: Vec<f64>,
    /// Relative amplitude of the surface pattern.
    #[serde(default = "default_texture")]
    pub texture: f64,
    /// In-plane rotation per frame, degrees.
    #[serde(default)]
    pub spin_deg_per_frame: f64,
}

fn default_texture() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccluderSpec {
    pub rect: Rect,
    /// Opacity in `[0, 1]`; 1 hides whatever lies below.
    #[serde(default = "default_coverage")]
    pub coverage: f64,
}

fn default_coverage() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSpec {
    /// Per-axis bound of the per-frame camera translation, px.
    pub max_translation: f64,
    /// Bound of the per-frame camera rotation, degrees.
    pub max_rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub channels: usize,
    pub targets: Vec<TargetSpec>,
    pub occluders: Vec<OccluderSpec>,
    pub camera_jitter: JitterSpec,
    pub background: BackgroundSpec,
    pub wavelengths_nm: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 10,
            fps: 1.42,
            channels: 1,
            targets: Vec::new(),
            occluders: Vec::new(),
            camera_jitter: JitterSpec::default(),
            background: BackgroundSpec::default(),
            wavelengths_nm: None,
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Spec(m));
        if self.width < 16 || self.height < 16 {
            return fail(format!("canvas {}x{} is smaller than 16x16", self.width, self.height));
        }
        if self.frames == 0 || self.channels == 0 {
            return fail("frames and channels must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail(format!("fps must be positive, got {}", self.fps));
        }
        if self.wavelengths_nm.as_ref().is_some_and(|w| w.len() != self.channels) {
            return fail("one wavelength label per channel is required".into());
        }
        let j = &self.camera_jitter;
        if !(j.max_translation >= 0.0 && j.max_rotation_deg >= 0.0) {
            return fail("camera jitter bounds must be non-negative".into());
        }
        let b = &self.background;
        if !(b.scale > 0.0) || b.octaves == 0 {
            return fail("background scale and octaves must be positive".into());
        }
        for (k, t) in self.targets.iter().enumerate() {
            if !(t.size.0 > 0.0 && t.size.1 > 0.0) {
                return fail(format!("target {k}: size must be positive"));
            }
            if !(t.speed >= 0.0 && t.speed.is_finite()) {
                return fail(format!("target {k}: speed must be non-negative"));
            }
            if t.albedo.len() != 1 && t.albedo.len() != self.channels {
                return fail(format!(
                    "target {k}: {} albedo values for {} channels",
                    t.albedo.len(),
                    self.channels
                ));
            }
        }
        for (k, o) in self.occluders.iter().enumerate() {
            if o.rect.w <= 0 || o.rect.h <= 0 || !(0.0..=1.0).contains(&o.coverage) {
                return fail(format!("occluder {k}: needs a positive rect and coverage in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Position of a moving target: arc length `s` along the polyline.
fn along_path(start: (f64, f64), waypoints: &[(f64, f64)], mut s: f64) -> (f64, f64) {
    let mut p = start;
    for &q in waypoints {
        let seg = (q.0 - p.0).hypot(q.1 - p.1);
        if s <= seg {
            let t = if seg > 0.0 { s / seg } else { 0.0 };
            return (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
        }
        s -= seg;
        p = q;
    }
    p
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, x: i64, y: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((x as u64).wrapping_mul(0x1000_0000_01B3) ^ (y as u64).rotate_left(32)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (sx, sy) = (fx * fx * (3.0 - 2.0 * fx), fy * fy * (3.0 - 2.0 * fy));
    let (ix, iy) = (x0 as i64, y0 as i64);
    let top = lattice(seed, ix, iy) * (1.0 - sx) + lattice(seed, ix + 1, iy) * sx;
    let bot = lattice(seed, ix, iy + 1) * (1.0 - sx) + lattice(seed, ix + 1, iy + 1) * sx;
    top * (1.0 - sy) + bot * sy
}

/// Multi-octave value noise in `[0, 1]`.
fn fbm(seed: u64, x: f64, y: f64, scale: f64, octaves: usize) -> f64 {
    let (mut sum, mut norm, mut amp, mut s) = (0.0, 0.0, 1.0, scale);
    for o in 0..octaves {
        sum += amp * value_noise(splitmix(seed.wrapping_add(o as u64)), x / s, y / s);
        norm += amp;
        amp *= 0.5;
        s = (s * 0.5).max(1.0);
    }
    sum / norm
}

struct TargetPose {
    center: (f64, f64),
    angle_rad: f64,
}

/// The per-frame geometry of a scenario, computed before any rendering.
pub struct Plan {
    pub cameras: Vec<Homography>,
    poses: Vec<Vec<TargetPose>>,
}

impl Plan {
    pub fn target_center(&self, frame: usize, target: usize) -> (f64, f64) {
        self.poses[frame][target].center
    }
}

fn camera_step(spec: &ScenarioSpec, frame: usize) -> Homography {
    let j = &spec.camera_jitter;
    if j.max_translation == 0.0 && j.max_rotation_deg == 0.0 {
        return Homography::IDENTITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(spec.seed ^ splitmix(frame as u64 ^ 0xCA3E_7A)));
    let mut draw = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let (tx, ty, rot) = (draw(j.max_translation), draw(j.max_translation), draw(j.max_rotation_deg));
    Homography::rigid(rot, spec.width as f64 / 2.0, spec.height as f64 / 2.0, tx, ty)
}

/// Camera transforms and target poses for every frame; fails if a target
/// leaves the canvas.
pub fn plan(spec: &ScenarioSpec) -> Result<Plan> {
    spec.validate()?;
    let mut cameras = Vec::with_capacity(spec.frames);
    let mut cam = Homography::IDENTITY;
    for t in 0..spec.frames {
        if t > 0 {
            cam = cam.compose(&camera_step(spec, t)).map_err(|e| Error::Spec(format!("frame {t}: {e}")))?;
        }
        cameras.push(cam);
    }
    let mut poses = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut frame = Vec::with_capacity(spec.targets.len());
        for (k, tg) in spec.targets.iter().enumerate() {
            let center = along_path(tg.position, &tg.waypoints, t as f64 * tg.speed / spec.fps);
            let angle_rad = (t as f64 * tg.spin_deg_per_frame).to_radians();
            let (hx, hy) = half_extent(tg.size, angle_rad);
            if center.0 - hx < 0.0
                || center.1 - hy < 0.0
                || center.0 + hx > spec.width as f64
                || center.1 + hy > spec.height as f64
            {
                return Err(Error::Spec(format!(
                    "target {k} leaves the {}x{} canvas at frame {t} (centre {:.2}, {:.2})",
                    spec.width, spec.height, center.0, center.1
                )));
            }
            frame.push(TargetPose { center, angle_rad });
        }
        poses.push(frame);
    }
    Ok(Plan { cameras, poses })
}

/// Half-width and half-height of the axis-aligned box around a rotated
/// rectangle.
fn half_extent(size: (f64, f64), angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (
        0.5 * (size.0 * c.abs() + size.1 * s.abs()),
        0.5 * (size.0 * s.abs() + size.1 * c.abs()),
    )
}

fn channel_mix(c: usize, channels: usize) -> (f64, f64) {
    let a = std::f64::consts::FRAC_PI_2 * (c as f64 + 0.5) / channels as f64;
    (a.cos(), a.sin())
}

/// World radiance of channel-vector at continuous world point `(u, v)`.
fn shade(spec: &ScenarioSpec, poses: &[TargetPose], u: f64, v: f64, out: &mut [f64]) {
    let b = &spec.background;
    let n0 = fbm(splitmix(spec.seed ^ 0xB0), u, v, b.scale, b.octaves) - 0.5;
    let n1 = fbm(splitmix(spec.seed ^ 0xB1), u, v, b.scale * 0.6, b.octaves) - 0.5;
    for (c, o) in out.iter_mut().enumerate() {
        let (ca, cb) = channel_mix(c, spec.channels);
        *o = b.mean + 2.0 * b.contrast * (ca * n0 + cb * n1);
    }
    for (k, (tg, pose)) in spec.targets.iter().zip(poses).enumerate() {
        let (dx, dy) = (u - pose.center.0, v - pose.center.1);
        let (s, co) = pose.angle_rad.sin_cos();
        let (lu, lv) = (co * dx + s * dy, -s * dx + co * dy);
        if lu.abs() <= tg.size.0 / 2.0 && lv.abs() <= tg.size.1 / 2.0 {
            let pattern = fbm(splitmix(spec.seed ^ (0x7A00 + k as u64)), lu + 100.0, lv + 100.0, 4.0, 2) - 0.5;
            for (c, o) in out.iter_mut().enumerate() {
                let albedo = tg.albedo[if tg.albedo.len() == 1 { 0 } else { c }];
                *o = albedo * (1.0 + 2.0 * tg.texture * pattern);
            }
        }
    }
    for (k, occ) in spec.occluders.iter().enumerate() {
        let r = &occ.rect;
        if u >= r.x as f64 && u < r.right() as f64 && v >= r.y as f64 && v < r.bottom() as f64 {
            let canopy = fbm(splitmix(spec.seed ^ (0x0CC0 + k as u64)), u, v, 6.0, 3) - 0.5;
            for (c, o) in out.iter_mut().enumerate() {
                let (ca, _) = channel_mix(c, spec.channels);
                let tree = 0.12 + 0.1 * ca + 0.12 * canopy;
                *o = occ.coverage * tree + (1.0 - occ.coverage) * *o;
            }
        }
    }
    for o in out.iter_mut() {
        *o = o.clamp(0.0, 1.0);
    }
}

/// Renders frame `t` of a planned scenario.
pub fn render(spec: &ScenarioSpec, plan: &Plan, t: usize) -> ChannelStack {
    let (w, h, nc) = (spec.width, spec.height, spec.channels);
    let cam = plan.cameras[t];
    let poses = &plan.poses[t];
    let mut data = vec![0.0f32; w * h * nc];
    let mut px = vec![0.0f64; nc];
    for y in 0..h {
        for x in 0..w {
            let (u, v) = cam.apply(x as f64, y as f64);
            // pixel (x, y) samples the scene at its centre
            shade(spec, poses, u + 0.5, v + 0.5, &mut px);
            for (c, val) in px.iter().enumerate() {
                data[(c * h + y) * w + x] = *val as f32;
            }
        }
    }
    ChannelStack::new(w, h, nc, data).expect("shading is finite")
}

/// Whether target `k` is completely hidden by opaque occluders on frame
/// `t` (its bounding box lies inside one fully opaque occluder).
pub fn fully_occluded(spec: &ScenarioSpec, plan: &Plan, t: usize, k: usize) -> bool {
    let pose = &plan.poses[t][k];
    let (hx, hy) = half_extent(spec.targets[k].size, pose.angle_rad);
    let (cx, cy) = pose.center;
    spec.occluders.iter().any(|o| {
        o.coverage >= 1.0
            && cx - hx >= o.rect.x as f64
            && cy - hy >= o.rect.y as f64
            && cx + hx <= o.rect.right() as f64
            && cy + hy <= o.rect.bottom() as f64
    })
}

pub const OCCLUSION_HEADER: &str = "frame,target,occluded";

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:05}.hsif")
}

/// Writes frames, ground truth, occlusion flags and `manifest.json` to
/// `out_dir`. Frames render in parallel; output bytes depend only on the
/// spec.
pub fn generate(spec: &ScenarioSpec, out_dir: impl AsRef<Path>) -> Result<SequenceManifest> {
    let out = out_dir.as_ref();
    let plan = plan(spec)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    (0..spec.frames)
        .into_par_iter()
        .try_for_each(|t| save_frame(out.join(frame_file_name(t)), &render(spec, &plan, t)))?;

    let mut gt_names = Vec::new();
    for (k, tg) in spec.targets.iter().enumerate() {
        let rows: Vec<GroundTruthRow> = (0..spec.frames)
            .map(|t| {
                let (cx, cy) = plan.target_center(t, k);
                GroundTruthRow {
                    frame: t as u64,
                    cx,
                    cy,
                    w: tg.size.0,
                    h: tg.size.1,
                }
            })
            .collect();
        let name = format!("gt_{k}.csv");
        write_ground_truth(out.join(&name), &rows)?;
        gt_names.push(name);
    }
    let mut occ = String::from(OCCLUSION_HEADER);
    occ.push('\n');
    for t in 0..spec.frames {
        for k in 0..spec.targets.len() {
            occ.push_str(&format!("{t},{k},{}\n", fully_occluded(spec, &plan, t, k)));
        }
    }
    let occ_path = out.join("occlusion.csv");
    fs::write(&occ_path, occ).map_err(|e| Error::io(&occ_path, e))?;

    let mut gt_iter = gt_names.into_iter();
    let manifest = SequenceManifest {
        fps: spec.fps,
        channels: spec.channels,
        frames: (0..spec.frames)
            .map(|t| FrameEntry {
                path: frame_file_name(t),
                index: t as u64,
                timestamp: t as f64 / spec.fps,
            })
            .collect(),
        homographies: Some(plan.cameras.iter().map(Homography::to_array).collect()),
        ground_truth: gt_iter.next(),
        additional_ground_truth: gt_iter.collect(),
        occlusion: Some("occlusion.csv".into()),
        wavelengths_nm: spec.wavelengths_nm.clone(),
        base_dir: out.to_path_buf(),
    };
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads `occlusion.csv` as `(frame, target, occluded)` triples.
pub fn read_occlusion(path: impl AsRef<Path>) -> Result<Vec<(u64, usize, bool)>> {
    Ok(crate::imaging::read_numeric_csv(path.as_ref(), OCCLUSION_HEADER)?
        .into_iter()
        .map(|r| (r[0] as u64, r[1] as usize, r[2] != 0.0))
        .collect())
}

/// Keeps every `factor`-th frame (frame 0 included) and divides the frame
/// rate. Frames keep their original indices, so ground truth keyed by
/// frame index stays valid; homographies already map to frame 0 and are
/// carried over unchanged.
pub fn downsample(manifest: &SequenceManifest, factor: usize) -> Result<SequenceManifest> {
    if factor == 0 {
        return Err(Error::Spec("downsampling factor must be at least 1".into()));
    }
    if factor == 1 {
        return Ok(manifest.clone());
    }
    if factor >= manifest.frames.len() {
        return Err(Error::Spec(format!(
            "downsampling factor {factor} is not below the frame count {}",
            manifest.frames.len()
        )));
    }
    let mut out = manifest.clone();
    out.fps = manifest.fps / factor as f64;
    out.frames = manifest.frames.iter().step_by(factor).cloned().collect();
    out.homographies = manifest
        .homographies
        .as_ref()
        .map(|hs| hs.iter().step_by(factor).copied().collect());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{load_frame, read_ground_truth};

    fn target(position: (f64, f64), waypoints: Vec<(f64, f64)>, speed: f64) -> TargetSpec {
        TargetSpec {
            size: (20.0, 10.0),
            position,
            waypoints,
            speed,
            albedo: vec![0.9],
            texture: 0.0,
            spin_deg_per_frame: 0.0,
        }
    }

    #[test]
    fn static_scene() {
        let spec = ScenarioSpec {
            width: 64,
            height: 48,
            frames: 10,
            targets: vec![target((30.0, 20.0), vec![], 0.0)],
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&spec, dir.path()).unwrap();
        let gt = read_ground_truth(&m.ground_truth_paths()[0]).unwrap();
        assert_eq!(gt.len(), 10);
        assert!(gt.iter().all(|r| (r.cx, r.cy, r.w, r.h) == (30.0, 20.0, 20.0, 10.0)));
        let bytes: Vec<Vec<u8>> = (0..10).map(|t| fs::read(m.frame_path(t)).unwrap()).collect();
        assert!(bytes.windows(2).all(|p| p[0] == p[1]));
        assert!(m.homographies.unwrap().iter().all(|h| *h == Homography::IDENTITY.to_array()));
    }

    #[test]
    fn aerial_rate_gives_thirty_px_per_frame() {
        let spec = ScenarioSpec {
            width: 400,
            height: 100,
            frames: 5,
            fps: 1.42,
            targets: vec![target((20.0, 50.0), vec![(380.0, 50.0)], 42.6)],
            ..Default::default()
        };
        let p = plan(&spec).unwrap();
        for t in 1..5 {
            let d = p.target_center(t, 0).0 - p.target_center(t - 1, 0).0;
            assert!((d - 30.0).abs() < 1e-9, "{d}");
        }
    }

    #[test]
    fn path_follows_waypoints_then_stops() {
        let p = along_path((0.0, 0.0), &[(10.0, 0.0), (10.0, 10.0)], 15.0);
        assert_eq!(p, (10.0, 5.0));
        assert_eq!(along_path((0.0, 0.0), &[(10.0, 0.0)], 99.0), (10.0, 0.0));
    }

    #[test]
    fn occlusion_flags_match_geometry() {
        // 20 frames at 8 px/frame; the strip hides the box while its x span
        // [cx - 10, cx + 10] lies inside [100, 160]
        let spec = ScenarioSpec {
            width: 260,
            height: 60,
            frames: 20,
            fps: 1.0,
            targets: vec![target((30.0, 30.0), vec![(250.0, 30.0)], 8.0)],
            occluders: vec![OccluderSpec { rect: Rect::new(100, 0, 60, 60), coverage: 1.0 }],
            ..Default::default()
        };
        let p = plan(&spec).unwrap();
        let flagged: Vec<usize> = (0..20).filter(|&t| fully_occluded(&spec, &p, t, 0)).collect();
        let oracle: Vec<usize> = (0..20)
            .filter(|&t| {
                let cx = 30.0 + 8.0 * t as f64;
                cx - 10.0 >= 100.0 && cx + 10.0 <= 160.0
            })
            .collect();
        assert_eq!(flagged, oracle);
        assert_eq!(flagged, vec![10, 11, 12, 13, 14, 15]);
        let dir = tempfile::tempdir().unwrap();
        let m = generate(&spec, dir.path()).unwrap();
        let rows = read_occlusion(m.resolve(m.occlusion.as_ref().unwrap())).unwrap();
        let from_file: Vec<usize> = rows.iter().filter(|r| r.2).map(|r| r.0 as usize).collect();
        assert_eq!(from_file, oracle);
        // an occluded target is invisible
        let f = load_frame(m.frame_path(12)).unwrap();
        assert!(f.data().iter().all(|&v| (v - 0.9).abs() > 1e-3));
    }

    #[test]
    fn leaving_the_canvas_is_reported() {
        let spec = ScenarioSpec {
            width: 100,
            height: 100,
            frames: 10,
            fps: 1.0,
            targets: vec![target((50.0, 50.0), vec![], 0.0), target((20.0, 50.0), vec![(200.0, 50.0)], 10.0)],
            ..Default::default()
        };
        match plan(&spec) {
            Err(Error::Spec(m)) => assert!(m.contains("target 1") && m.contains("frame 8"), "{m}"),
            other => panic!("{:?}", other.err()),
        }
    }

    #[test]
    fn ground_truth_is_rendered_centroid() {
        let spec = ScenarioSpec {
            width: 120,
            height: 80,
            frames: 6,
            fps: 1.0,
            targets: vec![target((30.3, 40.7), vec![(90.0, 35.0)], 7.3)],
            background: BackgroundSpec { mean: 0.2, contrast: 0.05, ..Default::default() },
            ..Default::default()
        };
        let p = plan(&spec).unwrap();
        for t in 0..6 {
            let f = render(&spec, &p, t);
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..80 {
                for x in 0..120 {
                    if f.get(0, y, x) == 0.9 {
                        sx += x as f64 + 0.5;
                        sy += y as f64 + 0.5;
                        n += 1.0;
                    }
                }
            }
            let (cx, cy) = p.target_center(t, 0);
            assert!((sx / n - cx).abs() <= 0.5 && (sy / n - cy).abs() <= 0.5, "frame {t}");
        }
    }

    #[test]
    fn homographies_realign_the_background() {
        let spec = ScenarioSpec {
            width: 96,
            height: 96,
            frames: 8,
            camera_jitter: JitterSpec { max_translation: 2.0, max_rotation_deg: 0.5 },
            seed: 11,
            ..Default::default()
        };
        let p = plan(&spec).unwrap();
        let f0 = render(&spec, &p, 0);
        for t in 1..8 {
            let raw = render(&spec, &p, t);
            let w = crate::registration::warp(&raw, &p.cameras[t]).unwrap();
            let (mut before, mut after, mut n) = (0.0f64, 0.0f64, 0.0);
            for i in 0..96 * 96 {
                if w.valid[i] {
                    after += (w.stack.data()[i] - f0.data()[i]).powi(2) as f64;
                    before += (raw.data()[i] - f0.data()[i]).powi(2) as f64;
                    n += 1.0;
                }
            }
            let (before, after) = ((before / n).sqrt(), (after / n).sqrt());
            assert!(after < 0.01 && after < 0.25 * before, "frame {t}: {before} -> {after}");
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = ScenarioSpec {
            width: 64,
            height: 64,
            frames: 4,
            channels: 3,
            targets: vec![TargetSpec { albedo: vec![0.8, 0.6, 0.4], ..target((30.0, 30.0), vec![(40.0, 35.0)], 3.0) }],
            camera_jitter: JitterSpec { max_translation: 1.0, max_rotation_deg: 0.2 },
            seed: 42,
            ..Default::default()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        generate(&spec, a.path()).unwrap();
        generate(&spec, b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 4 + 3);
        for n in names {
            assert_eq!(fs::read(a.path().join(&n)).unwrap(), fs::read(b.path().join(&n)).unwrap());
        }
    }

    #[test]
    fn downsampling() {
        let m = SequenceManifest {
            fps: 1.42,
            channels: 1,
            frames: (0..157).map(|i| FrameEntry { path: frame_file_name(i), index: i as u64, timestamp: i as f64 / 1.42 }).collect(),
            homographies: Some((0..157).map(|i| Homography::translation(i as f64, 0.0).to_array()).collect()),
            ground_truth: None,
            additional_ground_truth: vec![],
            occlusion: None,
            wavelengths_nm: None,
            base_dir: Default::default(),
        };
        assert_eq!(downsample(&m, 1).unwrap(), m);
        let d = downsample(&m, 2).unwrap();
        assert_eq!(d.frames.len(), 79);
        assert!((d.fps - 0.71).abs() < 1e-12);
        assert_eq!(d.frames[1].index, 2);
        assert_eq!(d.homographies.as_ref().unwrap()[1], Homography::translation(2.0, 0.0).to_array());
        d.validate().unwrap();
        assert!(matches!(downsample(&m, 157), Err(Error::Spec(_))));
        assert!(matches!(downsample(&m, 0), Err(Error::Spec(_))));
    }
}
