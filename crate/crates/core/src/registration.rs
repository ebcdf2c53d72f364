//! Global camera-motion removal: Harris keypoints with normalized patch
//! descriptors, mutual ratio-test matching, RANSAC homography estimation,
//! accumulation to the canonical (first) frame and bilinear warping.

use nalgebra::{DMatrix, Matrix3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ChannelStack;

const DET_EPS: f64 = 1e-12;

/// 3x3 projective transform, row-major, normalized so that `h[2][2] = 1`.
/// Maps `(x, y)` in a source frame to the destination frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn new(m: [[f64; 3]; 3]) -> Result<Self> {
        let s = m[2][2];
        if !s.is_finite() || s.abs() < DET_EPS {
            return Err(Error::Degenerate(format!("h[2][2] = {s} cannot be normalized")));
        }
        let mut n = m;
        n.iter_mut().flatten().for_each(|v| *v /= s);
        let h = Homography { m: n };
        if !n.iter().flatten().all(|v| v.is_finite()) || h.det().abs() <= DET_EPS {
            return Err(Error::Degenerate(format!("|det| = {:e}", h.det().abs())));
        }
        Ok(h)
    }

    pub fn from_array(a: &[f64; 9]) -> Result<Self> {
        Self::new([[a[0], a[1], a[2]], [a[3], a[4], a[5]], [a[6], a[7], a[8]]])
    }

    pub fn to_array(&self) -> [f64; 9] {
        let m = &self.m;
        [m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2]]
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation by `degrees` about `(cx, cy)` followed by `(tx, ty)`.
    pub fn rigid(degrees: f64, cx: f64, cy: f64, tx: f64, ty: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Homography {
            m: [
                [c, -s, cx - c * cx + s * cy + tx],
                [s, c, cy - s * cx - c * cy + ty],
                [0.0, 0.0, 1.0],
            ],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn inverse(&self) -> Result<Homography> {
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        Homography::new(adj)
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.m;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        ((m[0][0] * x + m[0][1] * y + m[0][2]) / w, (m[1][0] * x + m[1][1] * y + m[1][2]) / w)
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
        }
        Homography::new(out)
    }

    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Accumulated transform `prev * step`, renormalized.
pub fn accumulate(prev: &Homography, step: &Homography) -> Result<Homography> {
    prev.compose(step)
}

/// Warped raster plus a per-pixel flag telling whether the source sample
/// existed.
#[derive(Debug, Clone, PartialEq)]
pub struct Warped {
    pub stack: ChannelStack,
    pub valid: Vec<bool>,
}

/// Resamples `frame` into the destination frame of `h` (same size) by
/// inverse mapping and bilinear interpolation. Pixels whose source falls
/// outside the frame are zero and flagged invalid.
pub fn warp(frame: &ChannelStack, h: &Homography) -> Result<Warped> {
    let (w, ht, nc) = (frame.width(), frame.height(), frame.channels());
    if *h == Homography::IDENTITY {
        return Ok(Warped {
            stack: frame.clone(),
            valid: vec![true; w * ht],
        });
    }
    let inv = h.inverse()?;
    let (maxx, maxy) = ((w - 1) as f64, (ht - 1) as f64);
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..ht)
        .into_par_iter()
        .map(|y| {
            let mut vals = vec![0.0f32; w * nc];
            let mut valid = vec![false; w];
            for x in 0..w {
                let (sx, sy) = inv.apply(x as f64, y as f64);
                if !(sx >= 0.0 && sy >= 0.0 && sx <= maxx && sy <= maxy) {
                    continue;
                }
                valid[x] = true;
                let x0 = if w > 1 { (sx.floor() as usize).min(w - 2) } else { 0 };
                let y0 = if ht > 1 { (sy.floor() as usize).min(ht - 2) } else { 0 };
                let (fx, fy) = ((sx - x0 as f64) as f32, (sy - y0 as f64) as f32);
                let x1 = (x0 + 1).min(w - 1);
                let y1 = (y0 + 1).min(ht - 1);
                for c in 0..nc {
                    let p = frame.plane(c);
                    let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                    let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                    vals[c * w + x] = top * (1.0 - fy) + bot * fy;
                }
            }
            (vals, valid)
        })
        .collect();
    let mut data = vec![0.0f32; w * ht * nc];
    let mut mask = Vec::with_capacity(w * ht);
    for (y, (vals, valid)) in rows.into_iter().enumerate() {
        for c in 0..nc {
            data[(c * ht + y) * w..(c * ht + y + 1) * w].copy_from_slice(&vals[c * w..(c + 1) * w]);
        }
        mask.extend(valid);
    }
    Ok(Warped {
        stack: ChannelStack::new(w, ht, nc, data)?,
        valid: mask,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub strength: f64,
}

pub const NMS_RADIUS: usize = 5;
pub const PATCH_RADIUS: usize = 5;
pub const PATCH_SIZE: usize = 2 * PATCH_RADIUS + 1;
const HARRIS_K: f64 = 0.04;
const RELATIVE_THRESHOLD: f64 = 1e-8;

fn harris_response(img: &ChannelStack) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let p = img.plane(0);
    let at = |x: i64, y: i64| p[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize] as f64;
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            ixx[i] = gx * gx / 64.0;
            iyy[i] = gy * gy / 64.0;
            ixy[i] = gx * gy / 64.0;
        }
    }
    // 5-tap binomial smoothing of the structure tensor
    let taps = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let smooth = |src: &[f64]| -> Vec<f64> {
        let mut tmp = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * src[y * w + (x as i64 + k as i64 - 2).clamp(0, w as i64 - 1) as usize])
                    .sum();
            }
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                out[y * w + x] = taps
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t * tmp[(y as i64 + k as i64 - 2).clamp(0, h as i64 - 1) as usize * w + x])
                    .sum();
            }
        }
        out
    };
    let (sxx, syy, sxy) = (smooth(&ixx), smooth(&iyy), smooth(&ixy));
    (0..w * h)
        .map(|i| {
            let tr = sxx[i] + syy[i];
            sxx[i] * syy[i] - sxy[i] * sxy[i] - HARRIS_K * tr * tr
        })
        .collect()
}

fn subpixel_offset(l: f64, c: f64, r: f64) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom.abs() < 1e-18 {
        0.0
    } else {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    }
}

/// Harris corners of a single-channel image, non-max suppressed within
/// `NMS_RADIUS`, strongest first, at most `max_count`. Corners are kept at
/// least one patch radius away from the border so each can be described.
pub fn detect_keypoints(img: &ChannelStack, max_count: usize) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    let margin = PATCH_RADIUS + 1;
    if img.channels() != 1 || w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }
    let r = harris_response(img);
    let max = r.iter().cloned().fold(0.0, f64::max);
    if max <= 1e-12 {
        return Vec::new();
    }
    let threshold = max * RELATIVE_THRESHOLD;
    let rad = NMS_RADIUS as i64;
    let mut out = Vec::new();
    for y in margin..h - margin {
        'px: for x in margin..w - margin {
            let v = r[y * w + x];
            if v <= threshold {
                continue;
            }
            for dy in -rad..=rad {
                let yy = y as i64 + dy;
                if yy < 0 || yy >= h as i64 {
                    continue;
                }
                for dx in -rad..=rad {
                    let xx = x as i64 + dx;
                    if (dx == 0 && dy == 0) || xx < 0 || xx >= w as i64 {
                        continue;
                    }
                    let n = r[yy as usize * w + xx as usize];
                    // ties go to the earlier pixel in row-major order
                    if n > v || (n == v && (dy < 0 || (dy == 0 && dx < 0))) {
                        continue 'px;
                    }
                }
            }
            let ox = subpixel_offset(r[y * w + x - 1], v, r[y * w + x + 1]);
            let oy = subpixel_offset(r[(y - 1) * w + x], v, r[(y + 1) * w + x]);
            out.push(Keypoint {
                x: x as f64 + ox,
                y: y as f64 + oy,
                strength: v,
            });
        }
    }
    out.sort_by(|a, b| b.strength.total_cmp(&a.strength));
    out.truncate(max_count);
    out
}

/// A keypoint with its zero-mean, unit-norm 11x11 patch.
#[derive(Debug, Clone)]
pub struct Described {
    pub keypoint: Keypoint,
    pub patch: Vec<f32>,
}

pub fn describe(img: &ChannelStack, keypoints: &[Keypoint]) -> Vec<Described> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let p = img.plane(0);
    let r = PATCH_RADIUS as i64;
    keypoints
        .iter()
        .filter_map(|kp| {
            let (cx, cy) = (kp.x.round() as i64, kp.y.round() as i64);
            if cx < r || cy < r || cx + r >= w || cy + r >= h {
                return None;
            }
            let mut patch: Vec<f32> = (-r..=r)
                .flat_map(|dy| (-r..=r).map(move |dx| ((cy + dy) * w + cx + dx) as usize))
                .map(|i| p[i])
                .collect();
            let mean = patch.iter().sum::<f32>() / patch.len() as f32;
            patch.iter_mut().for_each(|v| *v -= mean);
            let norm = patch.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm < 1e-6 {
                return None;
            }
            patch.iter_mut().for_each(|v| *v /= norm);
            Some(Described { keypoint: *kp, patch })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub p: (f64, f64),
    pub q: (f64, f64),
    pub score: f64,
}

fn patch_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) * (x - y)) as f64).sum::<f64>().sqrt()
}

/// Mutual nearest neighbours whose best distance is below `ratio` times
/// the second best.
pub fn match_descriptors(a: &[Described], b: &[Described], ratio: f64) -> Vec<Match> {
    match_descriptors_within(a, b, ratio, f64::INFINITY)
}

/// As [`match_descriptors`], considering only pairs whose keypoints lie
/// within `max_distance` pixels of each other.
pub fn match_descriptors_within(a: &[Described], b: &[Described], ratio: f64, max_distance: f64) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let near = |da: &Described, db: &Described| {
        let (dx, dy) = (da.keypoint.x - db.keypoint.x, da.keypoint.y - db.keypoint.y);
        dx * dx + dy * dy <= max_distance * max_distance
    };
    let dist: Vec<Vec<f64>> = a
        .par_iter()
        .map(|da| {
            b.iter()
                .map(|db| if near(da, db) { patch_distance(&da.patch, &db.patch) } else { f64::INFINITY })
                .collect()
        })
        .collect();
    let best_for_b: Vec<usize> = (0..b.len())
        .map(|j| {
            (0..a.len())
                .min_by(|&i, &k| dist[i][j].total_cmp(&dist[k][j]))
                .unwrap()
        })
        .collect();
    let mut out = Vec::new();
    for (i, row) in dist.iter().enumerate() {
        let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
        let mut best_j = usize::MAX;
        for (j, &d) in row.iter().enumerate() {
            if d < best {
                second = best;
                best = d;
                best_j = j;
            } else if d < second {
                second = d;
            }
        }
        if best_j == usize::MAX || !best.is_finite() || best_for_b[best_j] != i {
            continue;
        }
        let passes = if second.is_finite() { best < ratio * second } else { ratio > 0.0 };
        if passes {
            out.push(Match {
                p: (a[i].keypoint.x, a[i].keypoint.y),
                q: (b[best_j].keypoint.x, b[best_j].keypoint.y),
                score: best,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub seed: u64,
    /// Stop once the sampled hypothesis count guarantees this confidence.
    pub confidence: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_tol: 2.0,
            seed: 0,
            confidence: 0.999,
        }
    }
}

fn normalizing_transform(pts: &[(f64, f64)]) -> [[f64; 3]; 3] {
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
    let mean_dist = pts.iter().map(|p| ((p.0 - mx).powi(2) + (p.1 - my).powi(2)).sqrt()).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    [[s, 0.0, -s * mx], [0.0, s, -s * my], [0.0, 0.0, 1.0]]
}

fn apply_raw(m: &[[f64; 3]; 3], p: (f64, f64)) -> (f64, f64) {
    let w = m[2][0] * p.0 + m[2][1] * p.1 + m[2][2];
    ((m[0][0] * p.0 + m[0][1] * p.1 + m[0][2]) / w, (m[1][0] * p.0 + m[1][1] * p.1 + m[1][2]) / w)
}

/// Normalized DLT over `n >= 4` correspondences `p -> q`.
pub fn fit_homography(pairs: &[((f64, f64), (f64, f64))]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::Estimation(format!("{} correspondences, need 4", pairs.len())));
    }
    let ps: Vec<_> = pairs.iter().map(|m| m.0).collect();
    let qs: Vec<_> = pairs.iter().map(|m| m.1).collect();
    let tp = normalizing_transform(&ps);
    let tq = normalizing_transform(&qs);
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (p, q)) in ps.iter().zip(&qs).enumerate() {
        let (x, y) = apply_raw(&tp, *p);
        let (u, v) = apply_raw(&tq, *q);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * k, j)] = r0[j];
            a[(2 * k + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Estimation("SVD did not converge".into()))?;
    let smallest = (0..svd.singular_values.len())
        .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
        .unwrap();
    let h = vt.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tp_m = Matrix3::from_row_slice(&tp.concat());
    let tq_inv = Matrix3::from_row_slice(&tq.concat())
        .try_inverse()
        .ok_or_else(|| Error::Estimation("singular normalization".into()))?;
    let full = tq_inv * hn * tp_m;
    let mut m = [[0.0; 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = full[(i, j)];
        }
    }
    Homography::new(m).map_err(|e| Error::Estimation(e.to_string()))
}

fn collinear(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = ((b.0 - a.0).hypot(b.1 - a.1)) * ((c.0 - a.0).hypot(c.1 - a.1));
    cross.abs() <= 1e-6 * scale.max(1e-12)
}

fn degenerate_sample(pts: &[(f64, f64); 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| collinear(pts[i], pts[j], pts[k]))
}

pub fn reprojection_error(h: &Homography, m: &Match) -> f64 {
    let (x, y) = h.apply(m.p.0, m.p.1);
    (x - m.q.0).hypot(y - m.q.1)
}

fn inliers(h: &Homography, matches: &[Match], tol: f64) -> (Vec<bool>, usize, f64) {
    let mut count = 0;
    let mut err = 0.0;
    let mask = matches
        .iter()
        .map(|m| {
            let e = reprojection_error(h, m);
            let ok = e < tol;
            if ok {
                count += 1;
                err += e;
            }
            ok
        })
        .collect();
    (mask, count, err)
}

fn pairs(matches: &[Match], mask: &[bool]) -> Vec<((f64, f64), (f64, f64))> {
    matches.iter().zip(mask).filter(|(_, &k)| k).map(|(m, _)| (m.p, m.q)).collect()
}

/// Best-consensus homography mapping `p` to `q` and its inlier mask.
///
/// Hypotheses come from seeded 4-point samples; collinear samples are
/// skipped. The winner is refit on its inliers with the normalized DLT,
/// then refit twice more at half and a quarter of the tolerance.
pub fn estimate_homography_ransac(matches: &[Match], params: &RansacParams) -> Result<(Homography, Vec<bool>)> {
    if matches.len() < 4 {
        return Err(Error::Estimation(format!("{} matches, need at least 4", matches.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(Homography, Vec<bool>, usize, f64)> = None;
    let mut budget = params.iterations;
    let mut it = 0;
    while it < budget {
        it += 1;
        let idx = sample(&mut rng, matches.len(), 4);
        let ps = [0, 1, 2, 3].map(|k| matches[idx.index(k)].p);
        let qs = [0, 1, 2, 3].map(|k| matches[idx.index(k)].q);
        if degenerate_sample(&ps) || degenerate_sample(&qs) {
            continue;
        }
        let Ok(h) = fit_homography(&ps.iter().copied().zip(qs).collect::<Vec<_>>()) else {
            continue;
        };
        let (mask, count, err) = inliers(&h, matches, params.inlier_tol);
        let better = match &best {
            None => true,
            Some((_, _, c, e)) => count > *c || (count == *c && err < *e),
        };
        if better {
            best = Some((h, mask, count, err));
            let w = count as f64 / matches.len() as f64;
            let denom = (1.0 - w.powi(4)).ln();
            if params.confidence > 0.0 && params.confidence < 1.0 && denom < 0.0 {
                let needed = ((1.0 - params.confidence).ln() / denom).ceil();
                if needed.is_finite() {
                    budget = budget.min((needed as usize).max(it));
                }
            }
        }
    }
    let Some((minimal, min_mask, count, _)) = best else {
        return Err(Error::Estimation("every sample was degenerate".into()));
    };
    if count < 4 {
        return Ok((minimal, min_mask));
    }
    let (mut h, mut mask, mut count) = (minimal, min_mask, count);
    for _ in 0..3 {
        let Ok(refit) = fit_homography(&pairs(matches, &mask)) else { break };
        let (m2, c2, _) = inliers(&refit, matches, params.inlier_tol);
        if c2 < count || c2 < 4 {
            break;
        }
        let grew = c2 > count;
        h = refit;
        mask = m2;
        count = c2;
        if !grew {
            break;
        }
    }
    // tighten the tolerance so near-threshold mismatches stop pulling the
    // least-squares fit
    for shrink in [0.5, 0.25] {
        let (m2, c2, _) = inliers(&h, matches, params.inlier_tol * shrink);
        if c2 < 8 || 2 * c2 < count {
            break;
        }
        let Ok(refit) = fit_homography(&pairs(matches, &m2)) else { break };
        h = refit;
    }
    let (mask, _, _) = inliers(&h, matches, params.inlier_tol);
    Ok((h, mask))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrationParams {
    pub max_keypoints: usize,
    pub ratio: f64,
    /// Largest inter-frame keypoint displacement considered when matching.
    pub max_displacement: f64,
    /// Channels averaged into the registration image; empty means all.
    pub channels: Vec<usize>,
    pub ransac: RansacParams,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            max_keypoints: 500,
            ratio: 0.8,
            max_displacement: 40.0,
            channels: Vec::new(),
            ransac: RansacParams::default(),
        }
    }
}

/// Frame-to-frame registration accumulating into the canonical frame.
pub struct Registrar {
    params: RegistrationParams,
    previous: Option<Vec<Described>>,
    accumulated: Homography,
    frames: u64,
}

impl Registrar {
    pub fn new(params: RegistrationParams) -> Self {
        Self {
            params,
            previous: None,
            accumulated: Homography::IDENTITY,
            frames: 0,
        }
    }

    pub fn luminance(&self, frame: &ChannelStack) -> Result<ChannelStack> {
        frame.mean_of_channels(&self.params.channels)
    }

    /// Homography from `frame` to the canonical frame. The first frame
    /// defines the canonical frame.
    pub fn push(&mut self, frame: &ChannelStack) -> Result<Homography> {
        let gray = self.luminance(frame)?;
        let feats = describe(&gray, &detect_keypoints(&gray, self.params.max_keypoints));
        if let Some(prev) = &self.previous {
            let matches = match_descriptors_within(&feats, prev, self.params.ratio, self.params.max_displacement);
            let ransac = RansacParams {
                seed: self.params.ransac.seed.wrapping_add(self.frames),
                ..self.params.ransac.clone()
            };
            let (step, _) = estimate_homography_ransac(&matches, &ransac)?;
            self.accumulated = accumulate(&self.accumulated, &step)?;
        }
        self.previous = Some(feats);
        self.frames += 1;
        Ok(self.accumulated)
    }
}
