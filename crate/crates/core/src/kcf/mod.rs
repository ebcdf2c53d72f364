//! Kernelized correlation filter: ridge regression over all cyclic shifts
//! of a template, solved elementwise in the Fourier domain.
//!
//! Shift convention: `(P^d v)[n] = v[n + d]`. Training solves
//! `(K + lambda I) alpha = y` with `K_ij = kappa(P^i x, P^j x)`; detection
//! returns `r[d] = sum_i alpha_i kappa(P^i x, P^d z)`. If the content of
//! `z` is the template moved by `+s` cells, the response peaks at `s`.

mod kernel;
mod psr;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftCache;
use crate::imaging::ChannelStack;

pub use kernel::{kernel_correlation, kernels, GaussianKernel, Kernel, LinearKernel};
pub use psr::{argmax, centered, psr, signed_shift, zero_shift_index, SIDELOBE_EXCLUSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KcfParams {
    pub lambda: f64,
    pub kernel_sigma: f64,
    pub learning_rate: f64,
    pub output_sigma_factor: f64,
    pub cell_size: usize,
    pub kernel: String,
}

impl Default for KcfParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            kernel_sigma: 0.5,
            learning_rate: 0.02,
            output_sigma_factor: 0.1,
            cell_size: 4,
            kernel: "gaussian".into(),
        }
    }
}

impl KcfParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.kernel_sigma > 0.0) {
            return bad(format!("kernel_sigma must be positive, got {}", self.kernel_sigma));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return bad(format!("learning_rate must lie in [0, 1], got {}", self.learning_rate));
        }
        if !(self.output_sigma_factor > 0.0) {
            return bad(format!("output_sigma_factor must be positive, got {}", self.output_sigma_factor));
        }
        if self.cell_size == 0 {
            return bad("cell_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-channel 2-D spectra, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(features: &ChannelStack, fft: &FftCache) -> Self {
        let (h, w) = (features.height(), features.width());
        let mut data = Vec::with_capacity(h * w * features.channels());
        for plane in features.planes() {
            data.extend(fft.forward_real(h, w, plane.iter().map(|&v| v as f64)));
        }
        Self {
            height: h,
            width: w,
            channels: features.channels(),
            data,
        }
    }

    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Spectrum) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Spatial-domain energy via Parseval.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / (self.height * self.width) as f64
    }
}

/// Learned dual coefficients and template spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    alpha_hat: Vec<Complex64>,
    template: Spectrum,
}

impl FilterModel {
    pub fn alpha_hat(&self) -> &[Complex64] {
        &self.alpha_hat
    }

    pub fn template(&self) -> &Spectrum {
        &self.template
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.template.height, self.template.width)
    }

    pub fn channels(&self) -> usize {
        self.template.channels
    }
}

/// Correlation response over all cyclic shifts, at feature-grid
/// resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, indexed by cyclic shift.
    pub values: Vec<f64>,
    pub psr: f64,
    /// `(row, col)` of the first maximum in row-major order.
    pub peak: (usize, usize),
}

impl ResponseMap {
    fn from_values(height: usize, width: usize, values: Vec<f64>) -> Self {
        let idx = argmax(&values);
        let psr = psr(&centered(&values, height, width), height, width);
        Self {
            height,
            width,
            values,
            psr,
            peak: (idx / width, idx % width),
        }
    }

    /// Peak position as a signed `(dy, dx)` shift in cells.
    pub fn shift(&self) -> (i64, i64) {
        (signed_shift(self.peak.0, self.height), signed_shift(self.peak.1, self.width))
    }

    /// Values re-indexed so the zero shift sits at
    /// `(zero_shift_index(h), zero_shift_index(w))`.
    pub fn centered(&self) -> Vec<f64> {
        centered(&self.values, self.height, self.width)
    }
}

/// Desired response: a Gaussian of peak 1 whose peak sits at shift (0, 0).
pub fn gaussian_target(h: usize, w: usize, output_sigma: f64) -> Vec<f64> {
    let (cy, cx) = (h / 2, w / 2);
    let denom = 2.0 * output_sigma * output_sigma;
    let mut y = Vec::with_capacity(h * w);
    for i in 0..h {
        let dy = ((i + cy) % h) as f64 - cy as f64;
        for j in 0..w {
            let dx = ((j + cx) % w) as f64 - cx as f64;
            y.push((-(dy * dy + dx * dx) / denom).exp());
        }
    }
    y
}

/// Convex blend `(1 - beta) old + beta new` of both spectra.
pub fn update(model: &FilterModel, new_model: &FilterModel, learning_rate: f64) -> Result<FilterModel> {
    if !model.template.same_shape(&new_model.template) {
        return Err(Error::Contract(format!(
            "cannot blend {:?}x{} model with {:?}x{}",
            model.dims(),
            model.channels(),
            new_model.dims(),
            new_model.channels()
        )));
    }
    if learning_rate == 0.0 {
        return Ok(model.clone());
    }
    if learning_rate == 1.0 {
        return Ok(new_model.clone());
    }
    let keep = 1.0 - learning_rate;
    let blend = |a: &[Complex64], b: &[Complex64]| -> Vec<Complex64> {
        a.iter().zip(b).map(|(x, y)| x * keep + y * learning_rate).collect()
    };
    Ok(FilterModel {
        alpha_hat: blend(&model.alpha_hat, &new_model.alpha_hat),
        template: Spectrum {
            data: blend(&model.template.data, &new_model.template.data),
            ..model.template.clone()
        },
    })
}

/// Training and detection engine holding the hyperparameters, the kernel
/// strategy and the FFT plans.
pub struct Kcf {
    params: KcfParams,
    kernel: Box<dyn Kernel>,
    fft: FftCache,
}

impl Kcf {
    pub fn new(params: KcfParams) -> Result<Self> {
        params.validate()?;
        let kernel = kernels().create(&params.kernel, &params)?;
        Ok(Self {
            params,
            kernel,
            fft: FftCache::new(),
        })
    }

    pub fn params(&self) -> &KcfParams {
        &self.params
    }

    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel.as_ref()
    }

    pub fn fft(&self) -> &FftCache {
        &self.fft
    }

    pub fn output_sigma(&self, h: usize, w: usize) -> f64 {
        self.params.output_sigma_factor * ((h * w) as f64).sqrt()
    }

    /// `alpha_hat = y_hat / (k_hat^{xx} + lambda)` for Hanning-windowed
    /// features.
    pub fn train(&self, features: &ChannelStack) -> Result<FilterModel> {
        let (h, w) = (features.height(), features.width());
        if h == 0 || w == 0 || features.channels() == 0 {
            return Err(Error::Dimension("cannot train on an empty feature stack".into()));
        }
        let template = Spectrum::of(features, &self.fft);
        let kxx = self.kernel.correlation(&template, &template, &self.fft)?;
        let kxx_hat = self.fft.forward_real(h, w, kxx);
        let y_hat = self.fft.forward_real(h, w, gaussian_target(h, w, self.output_sigma(h, w)));
        let lambda = self.params.lambda;
        let alpha_hat = y_hat.iter().zip(&kxx_hat).map(|(y, k)| y / (k + lambda)).collect();
        Ok(FilterModel { alpha_hat, template })
    }

    /// `r = F^-1(k_hat^{xz} * alpha_hat)`, with peak and PSR.
    pub fn detect(&self, model: &FilterModel, z: &ChannelStack) -> Result<ResponseMap> {
        let (h, w) = model.dims();
        if (z.height(), z.width(), z.channels()) != (h, w, model.channels()) {
            return Err(Error::Contract(format!(
                "detection window {}x{}x{} does not match model {h}x{w}x{}",
                z.height(),
                z.width(),
                z.channels(),
                model.channels()
            )));
        }
        let zs = Spectrum::of(z, &self.fft);
        let kxz = self.kernel.correlation(&model.template, &zs, &self.fft)?;
        let mut r = self.fft.forward_real(h, w, kxz);
        r.iter_mut().zip(&model.alpha_hat).for_each(|(k, a)| *k *= a);
        self.fft.inverse(h, w, &mut r);
        Ok(ResponseMap::from_values(h, w, r.into_iter().map(|v| v.re).collect()))
    }
}
