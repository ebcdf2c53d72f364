//! Mapping pixel ROIs onto a feature map computed once for a larger
//! window.

use crate::error::{Error, Result};
use crate::imaging::{crop, ChannelStack, Rect};

/// `round(a / b)` with halves rounded up, for `b > 0`.
pub fn div_round_half_up(a: i64, b: i64) -> i64 {
    (2 * a + b).div_euclid(2 * b)
}

/// Cell rectangle covering `roi` on an `map_w x map_h` map of the given
/// stride: edges rounded half-up, clamped to the map, at least one cell.
pub fn project_cells(map_w: usize, map_h: usize, stride: usize, roi: Rect) -> Result<Rect> {
    let s = stride as i64;
    let (mw, mh) = (map_w as i64, map_h as i64);
    if roi.right() <= 0 || roi.bottom() <= 0 || roi.x >= mw * s || roi.y >= mh * s {
        return Err(Error::EmptyProjection(roi));
    }
    let span = |lo: i64, hi: i64, n: i64| {
        let a = div_round_half_up(lo, s).clamp(0, n);
        let b = div_round_half_up(hi, s).clamp(0, n);
        if b > a {
            (a, b)
        } else if a < n {
            (a, a + 1)
        } else {
            (n - 1, n)
        }
    };
    let (x0, x1) = span(roi.x, roi.right(), mw);
    let (y0, y1) = span(roi.y, roi.bottom(), mh);
    Ok(Rect::new(x0, y0, x1 - x0, y1 - y0))
}

/// Feature sub-tensor covering `roi`, expressed in pixels of the raster
/// the map was computed from.
pub fn project_roi(fm: &ChannelStack, stride: usize, roi: Rect) -> Result<ChannelStack> {
    if stride == 0 {
        return Err(Error::Contract("stride must be positive".into()));
    }
    let cells = project_cells(fm.width(), fm.height(), stride, roi)?;
    Ok(crop(fm, cells))
}

/// Fixed-size variant used for detection windows: the origin cell is the
/// rounded top-left corner and the window is `cells_w x cells_h`, edge
/// replicated where it leaves the map.
pub fn project_fixed(fm: &ChannelStack, stride: usize, roi: Rect, cells_w: usize, cells_h: usize) -> Result<ChannelStack> {
    let s = stride as i64;
    if roi.right() <= 0 || roi.bottom() <= 0 || roi.x >= fm.width() as i64 * s || roi.y >= fm.height() as i64 * s {
        return Err(Error::EmptyProjection(roi));
    }
    let x0 = div_round_half_up(roi.x, s);
    let y0 = div_round_half_up(roi.y, s);
    Ok(crop(fm, Rect::new(x0, y0, cells_w as i64, cells_h as i64)))
}
