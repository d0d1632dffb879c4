//! im2col / col2im kernels behind the convolution ops.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Geometry of a square-kernel 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel, stride: 1, dilation: 1, padding: kernel / 2 }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn effective_kernel(&self) -> usize {
        (self.kernel - 1) * self.dilation + 1
    }

    fn check_common(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 {
            return Err(Error::Config(format!("degenerate convolution {self:?}")));
        }
        if self.stride == 0 || self.dilation == 0 {
            return Err(Error::Config("stride and dilation must be at least 1".into()));
        }
        Ok(())
    }

    /// Output extent of the forward convolution along one axis.
    pub fn conv_output(&self, extent: usize) -> Result<usize> {
        self.check_common()?;
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("convolution kernel must be odd, got {}", self.kernel)));
        }
        let padded = extent + 2 * self.padding;
        if self.effective_kernel() > padded {
            return Err(Error::Dimension(format!(
                "effective kernel {} exceeds padded extent {padded}",
                self.effective_kernel()
            )));
        }
        Ok((padded - self.effective_kernel()) / self.stride + 1)
    }

    /// Output extent of the transposed convolution along one axis.
    pub fn transpose_output(&self, extent: usize) -> Result<usize> {
        self.check_common()?;
        let full = (extent.max(1) - 1) * self.stride + self.effective_kernel();
        if extent == 0 || full <= 2 * self.padding {
            return Err(Error::Dimension(format!("transposed convolution collapses extent {extent}")));
        }
        Ok(full - 2 * self.padding)
    }
}

/// Geometry of one im2col unrolling: `channels × in_h × in_w` image to
/// `(channels·k·k) × (out_h·out_w)` columns.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Unroll {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl Unroll {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    #[inline]
    fn source(&self, out: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (out * self.stride + k * self.dilation) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    pub fn im2col<T: Scalar>(&self, image: &[T], cols: &mut [T]) {
        let plane = self.in_h * self.in_w;
        let ncols = self.cols();
        for c in 0..self.channels {
            let img = &image[c * plane..(c + 1) * plane];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        match self.source(oy, ky, self.in_h) {
                            None => line.iter_mut().for_each(|v| *v = T::zero()),
                            Some(iy) => {
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.source(ox, kx, self.in_w) {
                                        Some(ix) => img[iy * self.in_w + ix],
                                        None => T::zero(),
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds columns back into an image; adjoint of [`Unroll::im2col`].
    pub fn col2im<T: Scalar>(&self, cols: &[T], image: &mut [T]) {
        let plane = self.in_h * self.in_w;
        let ncols = self.cols();
        for c in 0..self.channels {
            let img = &mut image[c * plane..(c + 1) * plane];
            for ky in 0..self.kernel {
                for kx in 0..self.kernel {
                    let row = (c * self.kernel + ky) * self.kernel + kx;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ky, self.in_h) else { continue };
                        for ox in 0..self.out_w {
                            if let Some(ix) = self.source(ox, kx, self.in_w) {
                                img[iy * self.in_w + ix] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
