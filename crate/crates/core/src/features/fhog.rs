//! Felzenszwalb HoG: 18 contrast-sensitive and 9 contrast-insensitive
//! orientation channels plus 4 texture-energy channels per cell.

use crate::error::{Error, Result};
use crate::imaging::ChannelStack;

pub const FHOG_CHANNELS: usize = 31;
const ORIENTATIONS: usize = 9;
const CLIP: f32 = 0.2;
const TEXTURE_SCALE: f32 = 0.2357;
const NORM_EPS: f32 = 1e-4;

/// Computes the 31-channel fHoG of a single-channel image on a
/// `floor(h / cell) x floor(w / cell)` grid.
///
/// Gradients are central differences on interior pixels, binned into the
/// nearest of 18 orientations and spread over the four nearest cells by
/// bilinear weights. Each cell is normalized against the four 2x2 blocks
/// that contain it (indices clamped at the border) and clipped at 0.2.
pub fn extract_fhog(img: &ChannelStack, cell_size: usize) -> Result<ChannelStack> {
    if img.channels() != 1 {
        return Err(Error::Dimension(format!("fHoG needs one channel, got {}", img.channels())));
    }
    if cell_size == 0 {
        return Err(Error::Dimension("cell size must be at least 1".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w < cell_size || h < cell_size {
        return Err(Error::Dimension(format!("{w}x{h} image is smaller than one {cell_size}px cell")));
    }
    let (cw, ch) = (w / cell_size, h / cell_size);
    let px = img.plane(0);
    let mut hist = vec![0.0f32; cw * ch * 2 * ORIENTATIONS];

    let (uu, vv): (Vec<f32>, Vec<f32>) = (0..ORIENTATIONS)
        .map(|o| {
            let a = o as f32 * std::f32::consts::PI / ORIENTATIONS as f32;
            (a.cos(), a.sin())
        })
        .unzip();
    let sbin = cell_size as f32;

    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let dx = px[y * w + x + 1] - px[y * w + x - 1];
            let dy = px[(y + 1) * w + x] - px[(y - 1) * w + x];
            let mag2 = dx * dx + dy * dy;
            if mag2 == 0.0 {
                continue;
            }
            let mut best = 0.0f32;
            let mut bin = 0usize;
            for o in 0..ORIENTATIONS {
                let dot = uu[o] * dx + vv[o] * dy;
                if dot > best {
                    best = dot;
                    bin = o;
                } else if -dot > best {
                    best = -dot;
                    bin = o + ORIENTATIONS;
                }
            }
            let mag = mag2.sqrt();
            let xp = (x as f32 + 0.5) / sbin - 0.5;
            let yp = (y as f32 + 0.5) / sbin - 0.5;
            let (ixp, iyp) = (xp.floor() as i64, yp.floor() as i64);
            let (vx0, vy0) = (xp - ixp as f32, yp - iyp as f32);
            let (vx1, vy1) = (1.0 - vx0, 1.0 - vy0);
            for (oy, wy) in [(0, vy1), (1, vy0)] {
                let cy = iyp + oy;
                if cy < 0 || cy >= ch as i64 {
                    continue;
                }
                for (ox, wx) in [(0, vx1), (1, vx0)] {
                    let cx = ixp + ox;
                    if cx < 0 || cx >= cw as i64 {
                        continue;
                    }
                    let cell = cy as usize * cw + cx as usize;
                    hist[cell * 2 * ORIENTATIONS + bin] += mag * wx * wy;
                }
            }
        }
    }

    let energy: Vec<f32> = hist
        .chunks(2 * ORIENTATIONS)
        .map(|hc| (0..ORIENTATIONS).map(|o| (hc[o] + hc[o + ORIENTATIONS]).powi(2)).sum())
        .collect();
    let e = |y: i64, x: i64| -> f32 {
        let y = y.clamp(0, ch as i64 - 1) as usize;
        let x = x.clamp(0, cw as i64 - 1) as usize;
        energy[y * cw + x]
    };

    let mut out = ChannelStack::zeros(cw, ch, FHOG_CHANNELS);
    for y in 0..ch {
        for x in 0..cw {
            let (yi, xi) = (y as i64, x as i64);
            let block = |dy: i64, dx: i64| {
                let s = e(yi + dy, xi + dx) + e(yi + dy, xi + dx + 1) + e(yi + dy + 1, xi + dx) + e(yi + dy + 1, xi + dx + 1);
                1.0 / (s + NORM_EPS).sqrt()
            };
            let norms = [block(0, 0), block(-1, 0), block(0, -1), block(-1, -1)];
            let hc = &hist[(y * cw + x) * 2 * ORIENTATIONS..(y * cw + x + 1) * 2 * ORIENTATIONS];
            let mut texture = [0.0f32; 4];
            for (o, &v) in hc.iter().enumerate() {
                let mut sum = 0.0;
                for (t, n) in texture.iter_mut().zip(norms) {
                    let c = (v * n).min(CLIP);
                    sum += c;
                    *t += c;
                }
                out.set(o, y, x, 0.5 * sum);
            }
            for o in 0..ORIENTATIONS {
                let v = hc[o] + hc[o + ORIENTATIONS];
                let sum: f32 = norms.iter().map(|n| (v * n).min(CLIP)).sum();
                out.set(2 * ORIENTATIONS + o, y, x, 0.5 * sum);
            }
            for (k, t) in texture.iter().enumerate() {
                out.set(3 * ORIENTATIONS + k, y, x, TEXTURE_SCALE * t);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_edge(w: usize, h: usize, at: usize) -> ChannelStack {
        ChannelStack::from_fn(w, h, 1, |_, _, x| if x >= at { 1.0 } else { 0.0 })
    }

    #[test]
    fn constant_image_has_no_orientation_energy() {
        let img = ChannelStack::from_fn(20, 17, 1, |_, _, _| 0.37);
        let f = extract_fhog(&img, 4).unwrap();
        assert_eq!((f.width(), f.height(), f.channels()), (5, 4, 31));
        assert!(f.data().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn output_grid_is_floor_division() {
        let img = ChannelStack::from_fn(48, 48, 1, |_, y, x| ((x * 7 + y * 3) % 11) as f32 / 11.0);
        let f = extract_fhog(&img, 4).unwrap();
        assert_eq!((f.width(), f.height(), f.channels()), (12, 12, 31));
        let f = extract_fhog(&ChannelStack::zeros(50, 47, 1), 4).unwrap();
        assert_eq!((f.width(), f.height()), (12, 11));
    }

    #[test]
    fn values_bounded_by_clipped_normalization() {
        let img = ChannelStack::from_fn(40, 32, 1, |_, y, x| (((x * 31 + y * 17) * 2654435761usize) % 1000) as f32 / 1000.0);
        let f = extract_fhog(&img, 4).unwrap();
        assert!(f.data().iter().all(|&v| (0.0..=0.8).contains(&v)));
    }

    #[test]
    fn vertical_step_edge_fills_horizontal_gradient_bins() {
        // Brute-force oracle: every nonzero gradient of the step image is
        // (dx, 0), so all votes land in bin 0 (dx > 0).
        let img = step_edge(8, 8, 4);
        let mut votes = [0usize; 18];
        let px = img.plane(0);
        for y in 1..7 {
            for x in 1..7 {
                let dx = px[y * 8 + x + 1] - px[y * 8 + x - 1];
                let dy = px[(y + 1) * 8 + x] - px[(y - 1) * 8 + x];
                if dx != 0.0 || dy != 0.0 {
                    let ang = dy.atan2(dx).rem_euclid(2.0 * std::f32::consts::PI);
                    votes[((ang / (std::f32::consts::PI / 9.0)).round() as usize) % 18] += 1;
                }
            }
        }
        assert_eq!(votes[0], 12);
        assert_eq!(votes.iter().sum::<usize>(), 12);

        let f = extract_fhog(&img, 4).unwrap();
        let sum = |chans: &[usize]| -> f32 {
            chans.iter().map(|&c| f.plane(c).iter().sum::<f32>()).sum()
        };
        let horizontal = sum(&[0, 9, 18]);
        let orthogonal = sum(&[4, 5, 13, 14, 22, 23]);
        assert!(horizontal > 0.0);
        assert!(horizontal >= 10.0 * orthogonal, "{horizontal} vs {orthogonal}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(extract_fhog(&ChannelStack::zeros(3, 8, 1), 4).is_err());
        assert!(extract_fhog(&ChannelStack::zeros(8, 8, 2), 4).is_err());
        assert!(extract_fhog(&ChannelStack::zeros(8, 8, 1), 0).is_err());
    }
}
