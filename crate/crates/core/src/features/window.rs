use crate::imaging::ChannelStack;

/// `w(n) = 0.5 (1 - cos(2 pi n / (N - 1)))`; a single sample is 1.
pub fn hann(n: usize) -> Vec<f32> {
    if n == 1 {
        return vec![1.0];
    }
    let denom = (n - 1) as f64;
    (0..n)
        .map(|i| (0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / denom).cos())) as f32)
        .collect()
}

/// Subtracts each channel's spatial mean.
pub fn center_channels(features: &ChannelStack) -> ChannelStack {
    let mut out = features.clone();
    for c in 0..features.channels() {
        let plane = out.plane_mut(c);
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len().max(1) as f64;
        plane.iter_mut().for_each(|v| *v -= mean as f32);
    }
    out
}

/// Multiplies every channel by the outer product of 1-D Hann windows.
pub fn hann_window(features: &ChannelStack) -> ChannelStack {
    let (w, h) = (features.width(), features.height());
    let (wx, wy) = (hann(w), hann(h));
    let mut out = features.clone();
    for c in 0..features.channels() {
        let plane = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                plane[y * w + x] *= wy[y] * wx[x];
            }
        }
    }
    out
}
