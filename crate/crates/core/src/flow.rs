//! Dense optical flow (coarse-to-fine Horn–Schunck) and backward warping with
//! its exact adjoint.
//!
//! Convention: `warp(a, estimate_flow(a, b)) ≈ b`, i.e. the flow at pixel `p`
//! of `b` points to where that content sits in `a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{BilinearTaps, FlowField, ImageTensor};

/// Horn–Schunck parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    /// Smoothness weight α, in units of 8-bit intensity.
    pub smoothness: f64,
    /// Jacobi iterations per warp pass.
    pub iterations: usize,
    pub pyramid_levels: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            smoothness: 15.0,
            iterations: 200,
            pyramid_levels: 3,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothness > 0.0) || !self.smoothness.is_finite() {
            return Err(Error::invalid("flow smoothness must be > 0"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("flow iterations must be >= 1"));
        }
        if self.pyramid_levels == 0 {
            return Err(Error::invalid("pyramid_levels must be >= 1"));
        }
        Ok(())
    }
}

const MIN_LEVEL_SIZE: usize = 4;
/// Re-linearisation passes per pyramid level.
const WARP_PASSES: usize = 3;
/// Images live in [-1, 1]; the data term works on an 8-bit scale so that the
/// smoothness weight keeps its customary magnitude.
const INTENSITY_SCALE: f64 = 127.5;

/// Backward warp: `out(x, y, c) = image(x + u, y + v, c)`, bilinear and
/// border-clamped.
pub fn warp<T: Scalar>(image: &ImageTensor<T>, flow: &FlowField<T>) -> Result<ImageTensor<T>> {
    check_flow_shape(image, flow)?;
    Ok(WarpPlan::new(flow).apply(image))
}

/// Transpose of [`warp`] as a linear map in image intensities.
pub fn warp_adjoint<T: Scalar>(
    upstream: &ImageTensor<T>,
    flow: &FlowField<T>,
) -> Result<ImageTensor<T>> {
    check_flow_shape(upstream, flow)?;
    Ok(WarpPlan::new(flow).adjoint(upstream))
}

/// Bilinear taps of a flow field resolved once, for repeated warping.
#[derive(Clone, Debug)]
pub(crate) struct WarpPlan<T> {
    height: usize,
    width: usize,
    /// Source pixel indices `[00, 10, 01, 11]` per output pixel.
    pixels: Vec<[usize; 4]>,
    weights: Vec<[T; 4]>,
}

impl<T: Scalar> WarpPlan<T> {
    pub fn new(flow: &FlowField<T>) -> Self {
        let (h, w) = (flow.height(), flow.width());
        let mut pixels = Vec::with_capacity(h * w);
        let mut weights = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (u, v) = flow.at(x, y);
                let t = BilinearTaps::new(
                    T::from_usize(x).unwrap() + u,
                    T::from_usize(y).unwrap() + v,
                    w,
                    h,
                );
                pixels.push([
                    t.y0 * w + t.x0,
                    t.y0 * w + t.x1,
                    t.y1 * w + t.x0,
                    t.y1 * w + t.x1,
                ]);
                weights.push([t.w00, t.w10, t.w01, t.w11]);
            }
        }
        Self {
            height: h,
            width: w,
            pixels,
            weights,
        }
    }

    /// Caller guarantees the image matches the flow's height and width.
    pub fn apply(&self, image: &ImageTensor<T>) -> ImageTensor<T> {
        debug_assert_eq!((image.height(), image.width()), (self.height, self.width));
        let ch = image.channels();
        let src = image.data();
        let mut out = vec![T::zero(); src.len()];
        for (p, (idx, wt)) in self.pixels.iter().zip(&self.weights).enumerate() {
            for c in 0..ch {
                out[p * ch + c] = wt[0] * src[idx[0] * ch + c]
                    + wt[1] * src[idx[1] * ch + c]
                    + wt[2] * src[idx[2] * ch + c]
                    + wt[3] * src[idx[3] * ch + c];
            }
        }
        ImageTensor::new(self.height, self.width, ch, out).expect("plan shape")
    }

    pub fn adjoint(&self, upstream: &ImageTensor<T>) -> ImageTensor<T> {
        debug_assert_eq!(
            (upstream.height(), upstream.width()),
            (self.height, self.width)
        );
        let ch = upstream.channels();
        let g = upstream.data();
        let mut out = vec![T::zero(); g.len()];
        for (p, (idx, wt)) in self.pixels.iter().zip(&self.weights).enumerate() {
            for c in 0..ch {
                let v = g[p * ch + c];
                for k in 0..4 {
                    let o = &mut out[idx[k] * ch + c];
                    *o = *o + wt[k] * v;
                }
            }
        }
        ImageTensor::new(self.height, self.width, ch, out).expect("plan shape")
    }
}

fn check_flow_shape<T: Scalar>(image: &ImageTensor<T>, flow: &FlowField<T>) -> Result<()> {
    if image.height() != flow.height() || image.width() != flow.width() {
        return Err(Error::shape(format!(
            "image {}x{} vs flow {}x{}",
            image.height(),
            image.width(),
            flow.height(),
            flow.width()
        )));
    }
    Ok(())
}

/// Coarse-to-fine Horn–Schunck flow such that `warp(a, flow) ≈ b`.
///
/// Multi-channel inputs are reduced to their channel mean. The pyramid is
/// truncated when a level would drop below 4×4 or stop halving evenly.
pub fn estimate_flow<T: Scalar>(
    a: &ImageTensor<T>,
    b: &ImageTensor<T>,
    params: &FlowParams,
) -> Result<FlowField<T>> {
    params.validate()?;
    a.check_same_shape(b, "estimate_flow")?;
    if a.height() < MIN_LEVEL_SIZE || a.width() < MIN_LEVEL_SIZE {
        return Err(Error::shape(format!(
            "flow needs images of at least {MIN_LEVEL_SIZE}x{MIN_LEVEL_SIZE}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let scale = T::lit(INTENSITY_SCALE);
    let a = a.channel_mean().map(|v| v * scale);
    let b = b.channel_mean().map(|v| v * scale);

    let mut pyramid = vec![(a, b)];
    while pyramid.len() < params.pyramid_levels {
        let (pa, pb) = pyramid.last().unwrap();
        let (h, w) = (pa.height(), pa.width());
        if h % 2 != 0 || w % 2 != 0 || h / 2 < MIN_LEVEL_SIZE || w / 2 < MIN_LEVEL_SIZE {
            break;
        }
        let next = (pa.downsample(2)?, pb.downsample(2)?);
        pyramid.push(next);
    }

    let alpha2 = T::lit(params.smoothness * params.smoothness);
    let mut flow: Option<FlowField<T>> = None;
    for (la, lb) in pyramid.iter().rev() {
        let mut f = match flow {
            Some(coarse) => coarse.upsample2(),
            None => FlowField::zeros(la.height(), la.width()),
        };
        for _ in 0..WARP_PASSES {
            f = refine_level(la, lb, f, alpha2, params.iterations)?;
        }
        flow = Some(f);
    }
    Ok(flow.expect("pyramid has at least one level"))
}

/// One linearise-and-solve pass of Horn–Schunck around `base`.
fn refine_level<T: Scalar>(
    a: &ImageTensor<T>,
    b: &ImageTensor<T>,
    base: FlowField<T>,
    alpha2: T,
    iterations: usize,
) -> Result<FlowField<T>> {
    let (h, w) = (a.height(), a.width());
    let warped = warp(a, &base)?;
    let n = h * w;
    let mut ix = vec![T::zero(); n];
    let mut iy = vec![T::zero(); n];
    let mut it = vec![T::zero(); n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            // central differences of the warped source, one-sided at borders
            ix[i] = (warped.get(xr, y, 0) - warped.get(xl, y, 0)) / T::from_usize(xr - xl).unwrap();
            iy[i] = (warped.get(x, yd, 0) - warped.get(x, yu, 0)) / T::from_usize(yd - yu).unwrap();
            // temporal difference between the frames being matched
            it[i] = warped.get(x, y, 0) - b.get(x, y, 0);
        }
    }

    let (u0, v0) = (base.u().to_vec(), base.v().to_vec());
    let mut cur = base;
    let mut next_u = vec![T::zero(); n];
    let mut next_v = vec![T::zero(); n];
    let (c_edge, c_diag) = (T::lit(1.0 / 6.0), T::lit(1.0 / 12.0));
    for _ in 0..iterations {
        {
            let (u, v) = (cur.u(), cur.v());
            for y in 0..h {
                for x in 0..w {
                    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
                    let at = |f: &[T], xx: usize, yy: usize| f[yy * w + xx];
                    let avg = |f: &[T]| {
                        c_edge * (at(f, xl, y) + at(f, xr, y) + at(f, x, yu) + at(f, x, yd))
                            + c_diag
                                * (at(f, xl, yu) + at(f, xr, yu) + at(f, xl, yd) + at(f, xr, yd))
                    };
                    let i = y * w + x;
                    let (ub, vb) = (avg(u), avg(v));
                    let resid = ix[i] * (ub - u0[i]) + iy[i] * (vb - v0[i]) + it[i];
                    let k = resid / (alpha2 + ix[i] * ix[i] + iy[i] * iy[i]);
                    next_u[i] = ub - ix[i] * k;
                    next_v[i] = vb - iy[i] * k;
                }
            }
        }
        cur.u_mut().copy_from_slice(&next_u);
        cur.v_mut().copy_from_slice(&next_v);
    }
    Ok(cur)
}
