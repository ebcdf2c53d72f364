//! Independent oracles: everything here enumerates cyclic shifts
//! explicitly and solves dense systems instead of going through the FFT.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hkcf::features::{center_channels, hann_window};
use hkcf::imaging::{crop, ChannelStack, Rect};
use hkcf::kcf::{update, Kcf};
use hkcf::tracker::TrackerConfig;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_stack(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ChannelStack {
    ChannelStack::from_fn(w, h, c, |_, _, _| rng.random_range(-1.0f32..1.0))
}

pub fn windowed(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> ChannelStack {
    hann_window(&random_stack(rng, w, h, c))
}

/// `(P^(dy,dx) v)[y][x] = v[y + dy][x + dx]`, cyclic, as a flat f64 vector
/// over all channels.
pub fn shifted(v: &ChannelStack, dy: usize, dx: usize) -> Vec<f64> {
    let (h, w) = (v.height(), v.width());
    let mut out = Vec::with_capacity(h * w * v.channels());
    for c in 0..v.channels() {
        for y in 0..h {
            for x in 0..w {
                out.push(v.get(c, (y + dy) % h, (x + dx) % w) as f64);
            }
        }
    }
    out
}

/// Every cyclic shift of `v`, row-major over `(dy, dx)`.
pub fn all_shifts(v: &ChannelStack) -> Vec<Vec<f64>> {
    (0..v.height())
        .flat_map(|dy| (0..v.width()).map(move |dx| (dy, dx)))
        .map(|(dy, dx)| shifted(v, dy, dx))
        .collect()
}

pub fn gaussian_kappa(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-d2 / (sigma * sigma * a.len() as f64)).exp()
}

pub fn linear_kappa(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `k[d] = kappa(x, P^d z)` by enumeration.
pub fn kernel_by_shifts(x: &ChannelStack, z: &ChannelStack, kappa: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let base = shifted(x, 0, 0);
    all_shifts(z).iter().map(|s| kappa(&base, s)).collect()
}

/// Desired response written out directly: peak 1 at shift zero, shifts
/// above `n / 2` counted as negative.
pub fn label(h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let signed = |i: usize, n: usize| if i > n / 2 { i as f64 - n as f64 } else { i as f64 };
    let mut y = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let (dy, dx) = (signed(i, h), signed(j, w));
            y.push((-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp());
        }
    }
    y
}

/// Solves `(K + lambda I) alpha = y` with `K_ij = kappa(P^i x, P^j x)`.
pub fn dense_dual(x: &ChannelStack, y: &[f64], lambda: f64, kappa: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let shifts = all_shifts(x);
    let n = shifts.len();
    let k = DMatrix::from_fn(n, n, |i, j| kappa(&shifts[i], &shifts[j]) + if i == j { lambda } else { 0.0 });
    let alpha = k.lu().solve(&DVector::from_column_slice(y)).expect("K + lambda I is invertible");
    alpha.iter().copied().collect()
}

/// `r[d] = sum_i alpha_i kappa(P^i x, P^d z)`.
pub fn brute_force_response(
    x: &ChannelStack,
    z: &ChannelStack,
    alpha: &[f64],
    kappa: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<f64> {
    let xs = all_shifts(x);
    all_shifts(z)
        .iter()
        .map(|zd| xs.iter().zip(alpha).map(|(xi, a)| a * kappa(xi, zd)).sum())
        .collect()
}

/// Ridge regression in the primal, `(X^T X + lambda I) w = X^T y` with the
/// rows of `X` the shifts of `x`; returns `<w, P^d z>` for every `d`.
pub fn primal_response(x: &ChannelStack, z: &ChannelStack, y: &[f64], lambda: f64) -> Vec<f64> {
    let shifts = all_shifts(x);
    let (n, m) = (shifts.len(), shifts[0].len());
    let xm = DMatrix::from_fn(n, m, |i, j| shifts[i][j]);
    let lhs = xm.transpose() * &xm + DMatrix::identity(m, m) * lambda;
    let rhs = xm.transpose() * DVector::from_column_slice(y);
    let w = lhs.lu().solve(&rhs).expect("regularized normal equations are invertible");
    all_shifts(z).iter().map(|s| s.iter().zip(w.iter()).map(|(a, b)| a * b).sum()).collect()
}

pub fn relative_error(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got.iter().zip(want).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let den: f64 = want.iter().map(|b| b * b).sum::<f64>().sqrt();
    num / den
}

/// Textbook single-window KCF: detect in the window around the last
/// position, move by the peak shift, retrain there and blend.
pub fn direct_kcf(config: &TrackerConfig, frames: &[ChannelStack], start: (f64, f64)) -> Vec<((f64, f64), f64)> {
    let kcf = Kcf::new(config.kcf.clone()).unwrap();
    let extractor = config.features.build().unwrap();
    let cell = config.kcf.cell_size as f64;
    let size = config.grid.roi_size;
    let window = |frame: &ChannelStack, c: (f64, f64)| {
        let roi = Rect::centered(c.0, c.1, size);
        (roi, hann_window(&center_channels(&extractor.extract(&crop(frame, roi)).unwrap())))
    };
    let mut model = kcf.train(&window(&frames[0], start).1).unwrap();
    let mut center = start;
    let mut out = Vec::new();
    for frame in &frames[1..] {
        let (roi, z) = window(frame, center);
        let r = kcf.detect(&model, &z).unwrap();
        let (dy, dx) = r.shift();
        let (cx, cy) = roi.center();
        center = (cx + dx as f64 * cell, cy + dy as f64 * cell);
        let fresh = kcf.train(&window(frame, center).1).unwrap();
        model = update(&model, &fresh, config.kcf.learning_rate).unwrap();
        out.push((center, r.psr));
    }
    out
}
