use rustfft::num_complex::Complex64;

use super::{KcfParams, Spectrum};
use crate::error::{Error, Result};
use crate::fft::FftCache;
use crate::imaging::ChannelStack;
use crate::registry::Registry;

/// Kernel correlation between a template and all cyclic shifts of a
/// candidate, evaluated in the Fourier domain.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns `k[d] = kappa(x, P^d z)` over the `h x w` grid of cyclic
    /// shifts, where `(P^d z)[n] = z[n + d]`.
    fn correlation(&self, x: &Spectrum, z: &Spectrum, fft: &FftCache) -> Result<Vec<f64>>;
}

/// Cross-correlation summed over channels, `F^-1(sum_c conj(x_c) * z_c)`,
/// with the imaginary residue dropped.
pub(crate) fn cross_correlation(x: &Spectrum, z: &Spectrum, fft: &FftCache) -> Result<Vec<f64>> {
    if !x.same_shape(z) {
        return Err(Error::Contract(format!(
            "kernel correlation of {}x{}x{} with {}x{}x{}",
            x.height, x.width, x.channels, z.height, z.width, z.channels
        )));
    }
    let n = x.height * x.width;
    let mut acc = vec![Complex64::default(); n];
    for c in 0..x.channels {
        for ((a, xv), zv) in acc.iter_mut().zip(x.channel(c)).zip(z.channel(c)) {
            *a += xv.conj() * zv;
        }
    }
    fft.inverse(x.height, x.width, &mut acc);
    Ok(acc.into_iter().map(|v| v.re).collect())
}

/// `exp(-max(0, |x|^2 + |z|^2 - 2 x.z) / (sigma^2 N))` with `N` the total
/// number of feature values, as in the reference KCF implementation.
pub struct GaussianKernel {
    pub sigma: f64,
}

impl Kernel for GaussianKernel {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn correlation(&self, x: &Spectrum, z: &Spectrum, fft: &FftCache) -> Result<Vec<f64>> {
        let cross = cross_correlation(x, z, fft)?;
        let (xx, zz) = (x.norm_sq(), z.norm_sq());
        let scale = 1.0 / (self.sigma * self.sigma * (x.height * x.width * x.channels) as f64);
        Ok(cross
            .into_iter()
            .map(|c| (-(xx + zz - 2.0 * c).max(0.0) * scale).exp())
            .collect())
    }
}

/// Plain inner product. With one channel the dual solution coincides with
/// the MOSSE-style primal filter.
pub struct LinearKernel;

impl Kernel for LinearKernel {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn correlation(&self, x: &Spectrum, z: &Spectrum, fft: &FftCache) -> Result<Vec<f64>> {
        cross_correlation(x, z, fft)
    }
}

pub fn kernels() -> Registry<dyn Kernel, KcfParams> {
    let mut reg: Registry<dyn Kernel, KcfParams> = Registry::new("kernel");
    reg.register("gaussian", |p| Ok(Box::new(GaussianKernel { sigma: p.kernel_sigma })));
    reg.register("linear", |_| Ok(Box::new(LinearKernel)));
    reg
}

/// Gaussian kernel correlation `k^{xz}` of two feature stacks.
pub fn kernel_correlation(x: &ChannelStack, z: &ChannelStack, kernel_sigma: f64) -> Result<Vec<f64>> {
    if !x.same_shape(z) {
        return Err(Error::Contract(format!(
            "kernel correlation of {}x{}x{} with {}x{}x{}",
            x.height(),
            x.width(),
            x.channels(),
            z.height(),
            z.width(),
            z.channels()
        )));
    }
    let fft = FftCache::new();
    let xs = Spectrum::of(x, &fft);
    let zs = Spectrum::of(z, &fft);
    GaussianKernel { sigma: kernel_sigma }.correlation(&xs, &zs, &fft)
}
