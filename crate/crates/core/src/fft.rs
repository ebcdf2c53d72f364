//! Cached 2-D complex FFT plans over row-major buffers.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Plan2d {
    h: usize,
    w: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Plan2d {
    fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn run(&self, buf: &mut [Complex64], rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (h, w) = (self.h, self.w);
        assert_eq!(buf.len(), h * w, "buffer does not match {h}x{w} plan");
        if w > 1 {
            rows.process(buf);
        }
        if h > 1 {
            let mut t = vec![Complex64::default(); h * w];
            for y in 0..h {
                for x in 0..w {
                    t[x * h + y] = buf[y * w + x];
                }
            }
            cols.process(&mut t);
            for x in 0..w {
                for y in 0..h {
                    buf[y * w + x] = t[x * h + y];
                }
            }
        }
    }
}

/// Thread-safe plan cache keyed by `(rows, cols)`. Counts transforms so
/// callers can assert on operation counts instead of wall time.
#[derive(Default)]
pub struct FftCache {
    plans: Mutex<HashMap<(usize, usize), Arc<Plan2d>>>,
    transforms: AtomicU64,
}

impl FftCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn plan(&self, h: usize, w: usize) -> Arc<Plan2d> {
        let mut plans = self.plans.lock().unwrap();
        plans.entry((h, w)).or_insert_with(|| Arc::new(Plan2d::new(h, w))).clone()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, h: usize, w: usize, buf: &mut [Complex64]) {
        let plan = self.plan(h, w);
        plan.run(buf, plan.row_fwd.as_ref(), plan.col_fwd.as_ref());
        self.transforms.fetch_add(1, Ordering::Relaxed);
    }

    /// Inverse transform in place, scaled by `1 / (h * w)`.
    pub fn inverse(&self, h: usize, w: usize, buf: &mut [Complex64]) {
        let plan = self.plan(h, w);
        plan.run(buf, plan.row_inv.as_ref(), plan.col_inv.as_ref());
        let scale = 1.0 / (h * w) as f64;
        buf.iter_mut().for_each(|v| *v *= scale);
        self.transforms.fetch_add(1, Ordering::Relaxed);
    }

    pub fn forward_real(&self, h: usize, w: usize, values: impl IntoIterator<Item = f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.into_iter().map(|v| Complex64::new(v, 0.0)).collect();
        self.forward(h, w, &mut buf);
        buf
    }

    pub fn transform_count(&self) -> u64 {
        self.transforms.load(Ordering::Relaxed)
    }
}
