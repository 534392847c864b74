//! Image and flow value types plus the sampling kernels everything else is
//! built on. Layout is row-major, channel-last.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `height × width × channels` real image stored row-major, channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageTensor<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "image dimensions must be non-zero, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, T::zero())
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty image");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y, c)` at every element.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty image");
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: T) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    #[inline]
    pub(crate) fn add_at(&mut self, x: usize, y: usize, c: usize, value: T) {
        let i = self.index(x, y, c);
        self.data[i] = self.data[i] + value;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
            ..self.clone()
        })
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, scale: T, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mean over channels; single-channel images are returned unchanged.
    pub fn channel_mean(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        let inv = T::one() / T::from_usize(self.channels).unwrap();
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().copied().sum::<T>() * inv)
            .collect();
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Single-channel image holding channel `c`.
    pub fn channel(&self, c: usize) -> Self {
        assert!(c < self.channels);
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        Self {
            height: self.height,
            width: self.width,
            channels: 1,
            data,
        }
    }

    /// Bilinear interpolation at real coordinates `(x, y)` with replicate
    /// clamping to the image border.
    #[inline]
    pub fn bilinear_sample(&self, x: T, y: T, channel: usize) -> T {
        debug_assert!(channel < self.channels);
        let taps = BilinearTaps::new(x, y, self.width, self.height);
        let p00 = self.get(taps.x0, taps.y0, channel);
        let p10 = self.get(taps.x1, taps.y0, channel);
        let p01 = self.get(taps.x0, taps.y1, channel);
        let p11 = self.get(taps.x1, taps.y1, channel);
        taps.w00 * p00 + taps.w10 * p10 + taps.w01 * p01 + taps.w11 * p11
    }

    /// Non-overlapping `factor × factor` box average per channel.
    pub fn downsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !factor.is_power_of_two() {
            return Err(Error::invalid(format!(
                "downsample factor must be a power of two, got {factor}"
            )));
        }
        if self.height % factor != 0 || self.width % factor != 0 {
            return Err(Error::shape(format!(
                "downsample factor {factor} does not divide {}x{}",
                self.height, self.width
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (h, w, ch) = (self.height / factor, self.width / factor, self.channels);
        let norm = T::one() / T::from_usize(factor * factor).unwrap();
        let mut out = Self::zeros(h, w, ch);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..ch {
                    out.add_at(x / factor, y / factor, c, self.get(x, y, c));
                }
            }
        }
        out.scale(norm);
        Ok(out)
    }

    /// Adjoint of [`downsample`](Self::downsample): spreads each coarse value
    /// evenly over its `factor × factor` block.
    pub fn downsample_adjoint(&self, factor: usize) -> Self {
        if factor == 1 {
            return self.clone();
        }
        let norm = T::one() / T::from_usize(factor * factor).unwrap();
        Self::from_fn(
            self.height * factor,
            self.width * factor,
            self.channels,
            |x, y, c| self.get(x / factor, y / factor, c) * norm,
        )
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// Casts every element to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap())
                .collect(),
        }
    }
}

/// The four source pixels and weights of one clamped bilinear lookup.
#[derive(Clone, Copy, Debug)]
pub(crate) struct BilinearTaps<T> {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub w00: T,
    pub w10: T,
    pub w01: T,
    pub w11: T,
}

impl<T: Scalar> BilinearTaps<T> {
    #[inline]
    pub fn new(x: T, y: T, width: usize, height: usize) -> Self {
        let (x0, x1, fx) = axis_taps(x, width);
        let (y0, y1, fy) = axis_taps(y, height);
        let one = T::one();
        Self {
            x0,
            x1,
            y0,
            y1,
            w00: (one - fx) * (one - fy),
            w10: fx * (one - fy),
            w01: (one - fx) * fy,
            w11: fx * fy,
        }
    }
}

#[inline]
fn axis_taps<T: Scalar>(p: T, size: usize) -> (usize, usize, T) {
    let max = T::from_usize(size - 1).unwrap();
    // NaN clamps to 0 via the `max` below.
    let p = p.max(T::zero()).min(max);
    let p0 = p.floor();
    let i0 = p0.to_usize().unwrap_or(0);
    let i1 = (i0 + 1).min(size - 1);
    (i0, i1, p - p0)
}

/// Dense displacement field; `u` horizontal and `v` vertical, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T> {
    height: usize,
    width: usize,
    u: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(height: usize, width: usize, u: Vec<T>, v: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("flow dimensions must be non-zero"));
        }
        if u.len() != height * width || v.len() != height * width {
            return Err(Error::shape(format!(
                "flow component lengths {}/{} do not match {height}x{width}",
                u.len(),
                v.len()
            )));
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, T::zero(), T::zero())
    }

    pub fn constant(height: usize, width: usize, u: T, v: T) -> Self {
        assert!(height > 0 && width > 0, "empty flow");
        Self {
            height,
            width,
            u: vec![u; height * width],
            v: vec![v; height * width],
        }
    }

    /// Builds a flow from `f(x, y) -> (u, v)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (T, T)) -> Self {
        assert!(height > 0 && width > 0, "empty flow");
        let n = height * width;
        let (mut u, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self {
            height,
            width,
            u,
            v,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn u(&self) -> &[T] {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &[T] {
        &self.v
    }

    pub(crate) fn u_mut(&mut self) -> &mut [T] {
        &mut self.u
    }

    pub(crate) fn v_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (T, T) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|v| v.is_finite())
    }

    /// Mean Euclidean endpoint error against another field of the same size.
    pub fn cast<U: Scalar>(&self) -> FlowField<U> {
        let conv = |xs: &[T]| {
            xs.iter()
                .map(|v| U::from_f64(v.as_f64()).unwrap())
                .collect()
        };
        FlowField {
            height: self.height,
            width: self.width,
            u: conv(&self.u),
            v: conv(&self.v),
        }
    }

    pub fn mean_endpoint_error(&self, other: &Self) -> Result<T> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::shape("endpoint error of differently sized flows"));
        }
        let total: T = (0..self.u.len())
            .map(|i| {
                let du = self.u[i] - other.u[i];
                let dv = self.v[i] - other.v[i];
                (du * du + dv * dv).sqrt()
            })
            .sum();
        Ok(total / T::from_usize(self.u.len()).unwrap())
    }

    /// Doubles resolution (nearest neighbour) and displacement magnitude.
    pub(crate) fn upsample2(&self) -> Self {
        let two = T::lit(2.0);
        Self::from_fn(self.height * 2, self.width * 2, |x, y| {
            let (u, v) = self.at(x / 2, y / 2);
            (u * two, v * two)
        })
    }
}
