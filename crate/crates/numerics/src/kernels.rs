//! Raw forward/backward kernels on contiguous NCHW buffers.

use crate::error::{shape_err, NumericsError, Result};
use crate::float::{gemm, Float, MatRef};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new<T: Float>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let (n, cin, h, w) = input.dims4("conv2d")?;
        let (cout, wcin, kh, kw) = weight.dims4("conv2d")?;
        if wcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("input has {cin} channels but weight expects {wcin}"),
            ));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err("conv2d", format!("kernel {kh}x{kw} must be odd-sized")));
        }
        if stride == 0 {
            return Err(shape_err("conv2d", "stride must be at least 1"));
        }
        if bias.shape() != [cout] {
            return Err(shape_err(
                "conv2d",
                format!("bias shape {:?} does not match {cout} output channels", bias.shape()),
            ));
        }
        let out_dim = |len: usize, k: usize| -> Result<usize> {
            let padded = len + 2 * pad;
            if padded < k {
                return Err(shape_err("conv2d", format!("kernel {k} larger than padded input {padded}")));
            }
            if (padded - k) % stride != 0 {
                return Err(NumericsError::InexactOutput {
                    op: "conv2d",
                    detail: format!("({len} + 2*{pad} - {k}) is not divisible by stride {stride}"),
                });
            }
            Ok((padded - k) / stride + 1)
        };
        let oh = out_dim(h, kh)?;
        let ow = out_dim(w, kw)?;
        Ok(Self { n, cin, h, w, cout, kh, kw, stride, pad, oh, ow })
    }

    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// 1x1, stride 1, no padding: the input plane already is the column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Float>(g: &ConvGeometry, x: &[T], col: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<T: Float>(g: &ConvGeometry, col: &[T], dx: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * p..(row + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Float>(
    g: &ConvGeometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Tensor<T> {
    let p = g.positions();
    let k = g.patch_len();
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * p;
    let mut out = vec![T::zero(); g.n * out_per];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..g.n {
        let x = &input.data()[b * in_per..(b + 1) * in_per];
        let o = &mut out[b * out_per..(b + 1) * out_per];
        for (co, chunk) in o.chunks_mut(p).enumerate() {
            chunk.fill(bias.data()[co]);
        }
        let cols: &[T] = if g.is_pointwise() {
            x
        } else {
            im2col(g, x, &mut col);
            &col
        };
        gemm(MatRef::new(weight.data(), g.cout, k), MatRef::new(cols, k, p), T::one(), o);
    }
    Tensor::new(vec![g.n, g.cout, g.oh, g.ow], out).expect("conv2d output shape")
}

/// Gradients of conv2d w.r.t. (input, weight, bias); each is computed only if requested.
pub fn conv2d_backward<T: Float>(
    g: &ConvGeometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    want: [bool; 3],
) -> [Option<Tensor<T>>; 3] {
    let p = g.positions();
    let k = g.patch_len();
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * p;
    let mut dx = want[0].then(|| vec![T::zero(); g.n * in_per]);
    let mut dw = want[1].then(|| vec![T::zero(); g.cout * k]);
    let mut db = want[2].then(|| vec![T::zero(); g.cout]);
    let mut col = vec![T::zero(); if g.is_pointwise() { 0 } else { k * p }];
    let mut dcol = vec![T::zero(); if want[0] && !g.is_pointwise() { k * p } else { 0 }];
    for b in 0..g.n {
        let go = &grad_out.data()[b * out_per..(b + 1) * out_per];
        if let Some(db) = db.as_mut() {
            for (co, chunk) in go.chunks(p).enumerate() {
                db[co] += chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_mut() {
            let x = &input.data()[b * in_per..(b + 1) * in_per];
            let cols: &[T] = if g.is_pointwise() {
                x
            } else {
                im2col(g, x, &mut col);
                &col
            };
            gemm(MatRef::new(go, g.cout, p), MatRef::new(cols, k, p).t(), T::one(), dw);
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_per..(b + 1) * in_per];
            let wt = MatRef::new(weight.data(), g.cout, k).t();
            if g.is_pointwise() {
                gemm(wt, MatRef::new(go, g.cout, p), T::one(), dxb);
            } else {
                gemm(wt, MatRef::new(go, g.cout, p), T::zero(), &mut dcol);
                col2im(g, &dcol, dxb);
            }
        }
    }
    [
        dx.map(|d| Tensor::new(vec![g.n, g.cin, g.h, g.w], d).expect("dx shape")),
        dw.map(|d| Tensor::new(vec![g.cout, g.cin, g.kh, g.kw], d).expect("dw shape")),
        db.map(|d| Tensor::new(vec![g.cout], d).expect("db shape")),
    ]
}

fn even_dims<T: Float>(op: &'static str, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4(op)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err(op, format!("spatial dims {h}x{w} must be even")));
    }
    Ok((n, c, h, w))
}

/// 2x2/stride-2 max pooling. Returns the output and, per output cell, the flat
/// input index of the selected element (first row-major maximum on ties).
pub fn max_pool2_forward<T: Float>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, h, w) = even_dims("max_pool2", input)?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

pub fn avg_pool2_forward<T: Float>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = even_dims("avg_pool2", input)?;
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let quarter = T::from_f64_lossy(0.25);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i = base + 2 * oy * w + 2 * ox;
                out.push((x[i] + x[i + 1] + x[i + w] + x[i + w + 1]) * quarter);
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

pub fn avg_pool2_backward<T: Float>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let planes = input_shape[0] * input_shape[1];
    let quarter = T::from_f64_lossy(0.25);
    let mut dx = vec![T::zero(); planes * h * w];
    let go = grad_out.data();
    for plane in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = go[(plane * oh + oy) * ow + ox] * quarter;
                let i = plane * h * w + 2 * oy * w + 2 * ox;
                dx[i] += g;
                dx[i + 1] += g;
                dx[i + w] += g;
                dx[i + w + 1] += g;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("avg_pool2 grad shape")
}

pub fn upsample_nearest2_forward<T: Float>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("upsample_nearest2")?;
    let (oh, ow) = (2 * h, 2 * w);
    let x = input.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                out[(plane * oh + oy) * ow + ox] = x[(plane * h + oy / 2) * w + ox / 2];
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], out)
}

pub fn upsample_nearest2_backward<T: Float>(input_shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (input_shape[2], input_shape[3]);
    let (oh, ow) = (2 * h, 2 * w);
    let planes = input_shape[0] * input_shape[1];
    let go = grad_out.data();
    let mut dx = vec![T::zero(); planes * h * w];
    for plane in 0..planes {
        for oy in 0..oh {
            for ox in 0..ow {
                dx[(plane * h + oy / 2) * w + ox / 2] += go[(plane * oh + oy) * ow + ox];
            }
        }
    }
    Tensor::new(input_shape.to_vec(), dx).expect("upsample grad shape")
}

/// Concatenates 4-D tensors along the channel axis, in argument order.
pub fn concat_channels_forward<T: Float>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs.first().ok_or_else(|| shape_err("concat_channels", "no inputs"))?;
    let (n, _, h, w) = first.dims4("concat_channels")?;
    let mut c_total = 0;
    for t in inputs {
        let (tn, tc, th, tw) = t.dims4("concat_channels")?;
        if (tn, th, tw) != (n, h, w) {
            return Err(shape_err(
                "concat_channels",
                format!("{:?} does not match {:?} on N,H,W", t.shape(), first.shape()),
            ));
        }
        c_total += tc;
    }
    let mut out = Vec::with_capacity(n * c_total * h * w);
    for b in 0..n {
        for t in inputs {
            let per = t.shape()[1] * h * w;
            out.extend_from_slice(&t.data()[b * per..(b + 1) * per]);
        }
    }
    Tensor::new(vec![n, c_total, h, w], out)
}

pub fn concat_channels_backward<T: Float>(shapes: &[Vec<usize>], grad_out: &Tensor<T>) -> Vec<Tensor<T>> {
    let n = grad_out.shape()[0];
    let c_total = grad_out.shape()[1];
    let hw = grad_out.shape()[2] * grad_out.shape()[3];
    let mut offset = 0;
    shapes
        .iter()
        .map(|shape| {
            let c = shape[1];
            let mut d = Vec::with_capacity(n * c * hw);
            for b in 0..n {
                let start = (b * c_total + offset) * hw;
                d.extend_from_slice(&grad_out.data()[start..start + c * hw]);
            }
            offset += c;
            Tensor::new(shape.clone(), d).expect("concat grad shape")
        })
        .collect()
}
