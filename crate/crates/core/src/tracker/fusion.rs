//! Turning the per-ROI responses of one frame into a single position.

use crate::error::{Error, Result};
use crate::imaging::Rect;
use crate::kcf::{argmax, zero_shift_index, ResponseMap};
use crate::registry::Registry;

/// Geometry shared by every ROI of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionFrame {
    pub full_roi: Rect,
    /// Pixels per response cell.
    pub cell_px: f64,
    pub psr_threshold: f64,
    pub previous: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fused {
    pub center: (f64, f64),
    pub best_psr: f64,
    pub coasting: bool,
}

pub trait Fusion: Send + Sync {
    fn name(&self) -> &'static str;

    /// Results must not depend on the order of `responses`/`rois`.
    fn fuse(&self, responses: &[ResponseMap], rois: &[Rect], frame: &FusionFrame) -> Result<Fused>;
}

fn check(responses: &[ResponseMap], rois: &[Rect]) -> Result<()> {
    if responses.is_empty() {
        return Err(Error::Contract("no responses to fuse".into()));
    }
    if responses.len() != rois.len() {
        return Err(Error::Contract(format!(
            "{} responses for {} ROIs",
            responses.len(),
            rois.len()
        )));
    }
    Ok(())
}

/// ROI indices sorted by position, so reductions run in a fixed order.
fn spatial_order(rois: &[Rect]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rois.len()).collect();
    idx.sort_by_key(|&i| (rois[i].y, rois[i].x, rois[i].h, rois[i].w));
    idx
}

fn best_psr(responses: &[ResponseMap]) -> f64 {
    responses.iter().map(|r| r.psr).fold(0.0, f64::max)
}

fn coast(responses: &[ResponseMap], frame: &FusionFrame) -> Fused {
    Fused {
        center: frame.previous,
        best_psr: best_psr(responses),
        coasting: true,
    }
}

/// Peak of the centred map as a signed `(dy, dx)` shift.
fn centered_peak(r: &ResponseMap) -> (i64, i64) {
    let idx = argmax(&r.centered());
    (
        (idx / r.width) as i64 - zero_shift_index(r.height) as i64,
        (idx % r.width) as i64 - zero_shift_index(r.width) as i64,
    )
}

/// Winner-takes-all: the ROI with the highest PSR decides.
pub struct HardFusion;

impl Fusion for HardFusion {
    fn name(&self) -> &'static str {
        "hard"
    }

    fn fuse(&self, responses: &[ResponseMap], rois: &[Rect], frame: &FusionFrame) -> Result<Fused> {
        check(responses, rois)?;
        let mut best = None;
        for i in spatial_order(rois) {
            if best.is_none_or(|b: usize| responses[i].psr > responses[b].psr) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        if responses[b].psr <= frame.psr_threshold {
            return Ok(coast(responses, frame));
        }
        let (dy, dx) = centered_peak(&responses[b]);
        let (cx, cy) = rois[b].center();
        Ok(Fused {
            center: (cx + dx as f64 * frame.cell_px, cy + dy as f64 * frame.cell_px),
            best_psr: responses[b].psr,
            coasting: false,
        })
    }
}

/// PSR-weighted sum of the responses on a canvas covering the full ROI.
/// ROIs at or below the threshold get zero weight.
pub struct SoftFusion;

impl Fusion for SoftFusion {
    fn name(&self) -> &'static str {
        "soft"
    }

    fn fuse(&self, responses: &[ResponseMap], rois: &[Rect], frame: &FusionFrame) -> Result<Fused> {
        check(responses, rois)?;
        let order: Vec<usize> = spatial_order(rois)
            .into_iter()
            .filter(|&i| responses[i].psr > frame.psr_threshold)
            .collect();
        if order.is_empty() {
            return Ok(coast(responses, frame));
        }
        let (fcx, fcy) = frame.full_roi.center();
        // each map's zero-shift cell, in cells relative to the full-ROI centre
        let origin = |i: usize| {
            let (cx, cy) = rois[i].center();
            (
                ((cy - fcy) / frame.cell_px).round() as i64 - zero_shift_index(responses[i].height) as i64,
                ((cx - fcx) / frame.cell_px).round() as i64 - zero_shift_index(responses[i].width) as i64,
            )
        };
        let (mut y0, mut x0, mut y1, mut x1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
        for &i in &order {
            let (oy, ox) = origin(i);
            y0 = y0.min(oy);
            x0 = x0.min(ox);
            y1 = y1.max(oy + responses[i].height as i64);
            x1 = x1.max(ox + responses[i].width as i64);
        }
        let (ch, cw) = ((y1 - y0) as usize, (x1 - x0) as usize);
        let mut canvas = vec![0.0f64; ch * cw];
        let mut covered = vec![false; ch * cw];
        for &i in &order {
            let r = &responses[i];
            let (oy, ox) = origin(i);
            let weight = r.psr;
            let centred = r.centered();
            for y in 0..r.height {
                let row = (oy - y0) as usize + y;
                for x in 0..r.width {
                    let k = row * cw + (ox - x0) as usize + x;
                    canvas[k] += weight * centred[y * r.width + x];
                    covered[k] = true;
                }
            }
        }
        let mut best = None;
        for (k, (&v, &c)) in canvas.iter().zip(&covered).enumerate() {
            if c && best.is_none_or(|b: usize| v > canvas[b]) {
                best = Some(k);
            }
        }
        let k = best.unwrap();
        let (dy, dx) = ((k / cw) as i64 + y0, (k % cw) as i64 + x0);
        Ok(Fused {
            center: (fcx + dx as f64 * frame.cell_px, fcy + dy as f64 * frame.cell_px),
            best_psr: order.iter().map(|&i| responses[i].psr).fold(0.0, f64::max),
            coasting: false,
        })
    }
}

pub fn fusions() -> Registry<dyn Fusion, ()> {
    let mut reg: Registry<dyn Fusion, ()> = Registry::new("fusion");
    reg.register("hard", |_| Ok(Box::new(HardFusion)));
    reg.register("soft", |_| Ok(Box::new(SoftFusion)));
    reg
}
