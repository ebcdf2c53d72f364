/// Side length of the square excluded around the peak.
pub const SIDELOBE_EXCLUSION: usize = 11;
const MIN_SIDELOBE_STD: f64 = 1e-6;

/// First row-major index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Peak-to-sidelobe ratio of an `h x w` map. The sidelobe is every cell
/// outside the 11x11 window centred on the peak (clipped at the borders).
pub fn psr(values: &[f64], h: usize, w: usize) -> f64 {
    assert_eq!(values.len(), h * w);
    if values.is_empty() {
        return 0.0;
    }
    let peak_idx = argmax(values);
    let (py, px) = (peak_idx / w, peak_idx % w);
    let half = SIDELOBE_EXCLUSION / 2;
    let (y0, y1) = (py.saturating_sub(half), (py + half + 1).min(h));
    let (x0, x1) = (px.saturating_sub(half), (px + half + 1).min(w));
    let sidelobe = || {
        values
            .iter()
            .enumerate()
            .filter(move |(i, _)| {
                let (y, x) = (i / w, i % w);
                !(y >= y0 && y < y1 && x >= x0 && x < x1)
            })
            .map(|(_, &v)| v)
    };
    let n = sidelobe().count();
    if n == 0 {
        return 0.0;
    }
    // statistics of (peak - v) so a constant map gives exactly zero
    let peak = values[peak_idx];
    let margin = sidelobe().map(|v| peak - v).sum::<f64>() / n as f64;
    let var = sidelobe().map(|v| (peak - v - margin).powi(2)).sum::<f64>() / n as f64;
    (margin / var.sqrt().max(MIN_SIDELOBE_STD)).max(0.0)
}

/// Offset of the zero-shift cell in a window-relative map of length `n`.
pub fn zero_shift_index(n: usize) -> usize {
    (n - 1) / 2
}

/// Signed cyclic shift for index `i` of an axis of length `n`: indices
/// above `n / 2` wrap to negative shifts.
pub fn signed_shift(i: usize, n: usize) -> i64 {
    if i > n / 2 {
        i as i64 - n as i64
    } else {
        i as i64
    }
}

/// Re-indexes a cyclic-shift map so that window-relative cell
/// `(zero_shift_index(h), zero_shift_index(w))` holds the zero shift.
pub fn centered(values: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (cy, cx) = (zero_shift_index(h), zero_shift_index(w));
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        let sy = (y + h - cy) % h;
        for x in 0..w {
            let sx = (x + w - cx) % w;
            out[y * w + x] = values[sy * w + sx];
        }
    }
    out
}
