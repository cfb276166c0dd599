//! Eager tape for reverse-mode differentiation.
//!
//! Each operation computes its output immediately and records itself on the
//! tape. `Tape::backward` walks the records in reverse, visiting every node
//! exactly once, and returns per-node gradient buffers.
//!
//! Convolution kernels are stored as grids of shape
//! `(out_channels * in_channels, kh, kw)` with the kernel for output channel
//! `co` and input channel `ci` living at channel `co * in_channels + ci`.
//! Fully-connected weights are `(1, out_dim, in_dim)` grids.

use crate::autograd::Grid;
use crate::error::{Error, Result};

const CLAMP_LO: f64 = 1e-7;
const CLAMP_HI: f64 = 1.0 - 1e-7;

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Relu {
        x: NodeId,
    },
    Sigmoid {
        x: NodeId,
    },
    Softplus {
        x: NodeId,
    },
    Log {
        x: NodeId,
    },
    Clamp {
        x: NodeId,
        lo: f64,
        hi: f64,
    },
    PowConst {
        x: NodeId,
        p: f64,
    },
    Scale {
        x: NodeId,
        c: f64,
    },
    AddConst {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Sum {
        x: NodeId,
    },
    Mean {
        x: NodeId,
    },
    Dot {
        a: NodeId,
        b: NodeId,
    },
    Conv2d {
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    DepthwiseConv {
        x: NodeId,
        k: NodeId,
    },
    TransposeConv2d {
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
    },
    BilinearUpsample {
        x: NodeId,
        factor: usize,
    },
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
    },
    FullyConnected {
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
    },
    L2Normalize {
        x: NodeId,
        norm: f64,
    },
    BilinearSample {
        x: NodeId,
        points: Vec<(f64, f64)>,
    },
    SliceChannels {
        x: NodeId,
        c0: usize,
    },
    ConcatChannels {
        parts: Vec<NodeId>,
    },
    Reshape {
        x: NodeId,
    },
    FocalLoss {
        pred: NodeId,
        target: Grid,
        alpha: f64,
        beta: f64,
        n_pos: usize,
    },
    WeightedBce {
        pred: NodeId,
        target: Grid,
        pos_weight: f64,
    },
    MaskedL1 {
        pred: NodeId,
        target: Grid,
        mask: Grid,
        n_pos: usize,
    },
    MaskedSmoothL1 {
        pred: NodeId,
        target: Grid,
        mask: Grid,
        n_pos: usize,
    },
}

struct Node {
    value: Grid,
    op: Op,
}

/// Gradient buffers produced by [`Tape::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Grid>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Grid> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node, or zeros of `like`'s shape when the node was
    /// never reached by backward.
    pub fn get_or_zeros(&self, id: NodeId, like: &Grid) -> Grid {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let (c, h, w) = like.shape();
                Grid::zeros(c, h, w)
            }
        }
    }
}

/// Recording tape. One tape per forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Grid {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Grid, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn shape_err(op: &'static str, expected: String, got: &Grid) -> Error {
        Error::ShapeMismatch {
            op,
            expected,
            got: got.shape_string(),
        }
    }

    /// Insert a constant or parameter value.
    pub fn leaf(&mut self, value: Grid) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|v| v.max(0.0));
        self.push(v, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid { x })
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(softplus);
        self.push(v, Op::Softplus { x })
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::ln);
        self.push(v, Op::Log { x })
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let v = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(v, Op::Clamp { x, lo, hi })
    }

    pub fn pow_const(&mut self, x: NodeId, p: f64) -> NodeId {
        let v = self.value(x).map(|v| v.powf(p));
        self.push(v, Op::PowConst { x, p })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|v| v * c);
        self.push(v, Op::Scale { x, c })
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).map(|v| v + c);
        self.push(v, Op::AddConst { x })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    fn binary_same_shape(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Self::shape_err(name, va.shape_string(), vb));
        }
        let data: Vec<f64> = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let (c, h, w) = va.shape();
        let v = Grid::from_vec(c, h, w, data)?;
        Ok(self.push(v, op))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Grid::scalar(self.value(x).data().iter().sum());
        self.push(v, Op::Sum { x })
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let g = self.value(x);
        let v = Grid::scalar(g.data().iter().sum::<f64>() / g.len() as f64);
        self.push(v, Op::Mean { x })
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(Self::shape_err("dot", va.shape_string(), vb));
        }
        let v: f64 = va.data().iter().zip(vb.data()).map(|(&x, &y)| x * y).sum();
        Ok(self.push(Grid::scalar(v), Op::Dot { a, b }))
    }

    /// 2D convolution with zero padding.
    ///
    /// `x` is `(cin, h, w)`, `k` is `(cout * cin, kh, kw)`, optional bias is
    /// `(1, 1, cout)`.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (cin, h, w) = self.value(x).shape();
        let (kc, kh, kw) = self.value(k).shape();
        if kc % cin != 0 {
            return Err(Self::shape_err(
                "conv2d",
                format!("kernel channels divisible by input channels {cin}"),
                self.value(k),
            ));
        }
        let cout = kc / cin;
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Self::shape_err(
                "conv2d",
                format!("input at least {kh}x{kw} after padding {pad}"),
                self.value(x),
            ));
        }
        if let Some(b) = bias {
            let bs = self.value(b).shape();
            if bs != (1, 1, cout) {
                return Err(Self::shape_err(
                    "conv2d bias",
                    format!("1x1x{cout}"),
                    self.value(b),
                ));
            }
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = Grid::zeros(cout, oh, ow);
        if let Some(b) = bias {
            let bv = self.value(b);
            for co in 0..cout {
                let bias_v = bv.data()[co];
                for oy in 0..oh {
                    out.row_mut(co, oy).fill(bias_v);
                }
            }
        }
        {
            let xv = &self.nodes[x.0].value;
            let kv = &self.nodes[k.0].value;
            for co in 0..cout {
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wgt = kv.at(co * cin + ci, ky, kx);
                            if wgt == 0.0 {
                                continue;
                            }
                            let (ox_lo, ox_hi) = valid_range(kx, pad, stride, w, ow);
                            for oy in 0..oh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = xv.row(ci, iy as usize);
                                let orow = out.row_mut(co, oy);
                                for ox in ox_lo..ox_hi {
                                    let ix = ox * stride + kx - pad;
                                    orow[ox] += wgt * xrow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                k,
                bias,
                stride,
                pad,
            },
        ))
    }

    /// Per-channel convolution, stride 1, no padding.
    ///
    /// `x` is `(c, h, w)`, `k` is `(c, kh, kw)`; output is
    /// `(c, h-kh+1, w-kw+1)`.
    pub fn depthwise_conv(&mut self, x: NodeId, k: NodeId) -> Result<NodeId> {
        let (c, h, w) = self.value(x).shape();
        let (kc, kh, kw) = self.value(k).shape();
        if kc != c || kh > h || kw > w {
            return Err(Self::shape_err(
                "depthwise_conv",
                format!("kernel {c}x(<= {h})x(<= {w})"),
                self.value(k),
            ));
        }
        let oh = h - kh + 1;
        let ow = w - kw + 1;
        let mut out = Grid::zeros(c, oh, ow);
        {
            let xv = &self.nodes[x.0].value;
            let kv = &self.nodes[k.0].value;
            for ch in 0..c {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = kv.at(ch, ky, kx);
                        for oy in 0..oh {
                            let xrow = xv.row(ch, oy + ky);
                            let orow = out.row_mut(ch, oy);
                            for ox in 0..ow {
                                orow[ox] += wgt * xrow[ox + kx];
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(out, Op::DepthwiseConv { x, k }))
    }

    /// Transposed convolution (fractional-stride upsampling), no padding.
    ///
    /// `x` is `(cin, h, w)`, `k` is `(cout * cin, kh, kw)`; output is
    /// `(cout, (h-1)*stride + kh, (w-1)*stride + kw)`.
    pub fn transpose_conv2d(
        &mut self,
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
    ) -> Result<NodeId> {
        let (cin, h, w) = self.value(x).shape();
        let (kc, kh, kw) = self.value(k).shape();
        if kc % cin != 0 {
            return Err(Self::shape_err(
                "transpose_conv2d",
                format!("kernel channels divisible by input channels {cin}"),
                self.value(k),
            ));
        }
        let cout = kc / cin;
        if let Some(b) = bias {
            if self.value(b).shape() != (1, 1, cout) {
                return Err(Self::shape_err(
                    "transpose_conv2d bias",
                    format!("1x1x{cout}"),
                    self.value(b),
                ));
            }
        }
        let oh = (h - 1) * stride + kh;
        let ow = (w - 1) * stride + kw;
        let mut out = Grid::zeros(cout, oh, ow);
        if let Some(b) = bias {
            let bv = self.value(b);
            for co in 0..cout {
                let bias_v = bv.data()[co];
                for oy in 0..oh {
                    out.row_mut(co, oy).fill(bias_v);
                }
            }
        }
        {
            let xv = &self.nodes[x.0].value;
            let kv = &self.nodes[k.0].value;
            for co in 0..cout {
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wgt = kv.at(co * cin + ci, ky, kx);
                            if wgt == 0.0 {
                                continue;
                            }
                            for iy in 0..h {
                                let xrow = xv.row(ci, iy);
                                let orow = out.row_mut(co, iy * stride + ky);
                                for ix in 0..w {
                                    orow[ix * stride + kx] += wgt * xrow[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            out,
            Op::TransposeConv2d { x, k, bias, stride },
        ))
    }

    /// Bilinear upsampling by an integer factor (half-pixel alignment).
    pub fn bilinear_upsample(&mut self, x: NodeId, factor: usize) -> NodeId {
        let (c, h, w) = self.value(x).shape();
        let (oh, ow) = (h * factor, w * factor);
        let mut out = Grid::zeros(c, oh, ow);
        {
            let xv = &self.nodes[x.0].value;
            for ch in 0..c {
                for oy in 0..oh {
                    let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
                    for ox in 0..ow {
                        let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
                        out.set(ch, oy, ox, xv.sample_bilinear(ch, sx, sy));
                    }
                }
            }
        }
        self.push(out, Op::BilinearUpsample { x, factor })
    }

    /// Max pooling with window `(kh, kw)` and stride `(sh, sw)`.
    ///
    /// Ties resolve to the first element in scan order.
    pub fn max_pool(
        &mut self,
        x: NodeId,
        kh: usize,
        kw: usize,
        sh: usize,
        sw: usize,
    ) -> Result<NodeId> {
        let (c, h, w) = self.value(x).shape();
        if kh > h || kw > w || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Self::shape_err(
                "max_pool",
                format!("window <= {h}x{w}, nonzero strides"),
                self.value(x),
            ));
        }
        let oh = (h - kh) / sh + 1;
        let ow = (w - kw) / sw + 1;
        let mut out = Grid::zeros(c, oh, ow);
        let mut argmax = vec![0usize; c * oh * ow];
        {
            let xv = &self.nodes[x.0].value;
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let iy = oy * sh + dy;
                                let ix = ox * sw + dx;
                                let v = xv.at(ch, iy, ix);
                                if v > best {
                                    best = v;
                                    best_idx = xv.idx(ch, iy, ix);
                                }
                            }
                        }
                        out.set(ch, oy, ox, best);
                        argmax[(ch * oh + oy) * ow + ox] = best_idx;
                    }
                }
            }
        }
        Ok(self.push(out, Op::MaxPool { x, argmax }))
    }

    /// Dense layer: `x` is `(1, 1, n)`, `w` is `(1, m, n)`, bias `(1, 1, m)`.
    pub fn fully_connected(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: Option<NodeId>,
    ) -> Result<NodeId> {
        let xs = self.value(x).shape();
        let (wc, m, n) = self.value(w).shape();
        if xs != (1, 1, n) || wc != 1 {
            return Err(Self::shape_err(
                "fully_connected",
                format!("input 1x1x{n} for weight 1x{m}x{n}"),
                self.value(x),
            ));
        }
        if let Some(b) = bias {
            if self.value(b).shape() != (1, 1, m) {
                return Err(Self::shape_err(
                    "fully_connected bias",
                    format!("1x1x{m}"),
                    self.value(b),
                ));
            }
        }
        let mut data = vec![0.0; m];
        {
            let xv = self.nodes[x.0].value.data();
            let wv = &self.nodes[w.0].value;
            for (o, slot) in data.iter_mut().enumerate() {
                *slot = wv.row(0, o).iter().zip(xv).map(|(&a, &b)| a * b).sum();
            }
            if let Some(b) = bias {
                for (slot, &bv) in data.iter_mut().zip(self.nodes[b.0].value.data()) {
                    *slot += bv;
                }
            }
        }
        Ok(self.push(Grid::vector(data), Op::FullyConnected { x, w, bias }))
    }

    /// Scale to unit Euclidean norm. Fails on (near-)zero input.
    pub fn l2_normalize(&mut self, x: NodeId) -> Result<NodeId> {
        let norm = self
            .value(x)
            .data()
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroVector(norm));
        }
        let v = self.value(x).map(|v| v / norm);
        Ok(self.push(v, Op::L2Normalize { x, norm }))
    }

    /// Sample a grid at continuous `(x, y)` positions, bilinear with border
    /// clamping. Output shape is `(c, out_h, out_w)` with the points laid
    /// out row-major. Gradients flow into the sampled grid only, never the
    /// coordinates.
    pub fn bilinear_sample(
        &mut self,
        x: NodeId,
        points: Vec<(f64, f64)>,
        out_h: usize,
        out_w: usize,
    ) -> Result<NodeId> {
        if points.len() != out_h * out_w {
            return Err(Error::ShapeMismatch {
                op: "bilinear_sample",
                expected: format!("{} points", out_h * out_w),
                got: format!("{} points", points.len()),
            });
        }
        let (c, _, _) = self.value(x).shape();
        let mut out = Grid::zeros(c, out_h, out_w);
        {
            let xv = &self.nodes[x.0].value;
            for ch in 0..c {
                for (i, &(px, py)) in points.iter().enumerate() {
                    let (oy, ox) = (i / out_w, i % out_w);
                    out.set(ch, oy, ox, xv.sample_bilinear(ch, px, py));
                }
            }
        }
        Ok(self.push(out, Op::BilinearSample { x, points }))
    }

    /// View of channels `c0 .. c0 + len`.
    pub fn slice_channels(&mut self, x: NodeId, c0: usize, len: usize) -> Result<NodeId> {
        let (c, h, w) = self.value(x).shape();
        if c0 + len > c || len == 0 {
            return Err(Self::shape_err(
                "slice_channels",
                format!("channels {c0}..{} within {c}", c0 + len),
                self.value(x),
            ));
        }
        let mut out = Grid::zeros(len, h, w);
        for ch in 0..len {
            let src = self.nodes[x.0].value.channel(c0 + ch);
            out.data_mut()[ch * h * w..(ch + 1) * h * w].copy_from_slice(src.data());
        }
        Ok(self.push(out, Op::SliceChannels { x, c0 }))
    }

    /// Stack grids with equal spatial size along the channel axis.
    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "concat_channels",
                expected: "at least one part".into(),
                got: "0 parts".into(),
            });
        }
        let (_, h, w) = self.value(parts[0]).shape();
        let mut total_c = 0;
        for &p in parts {
            let (pc, ph, pw) = self.value(p).shape();
            if (ph, pw) != (h, w) {
                return Err(Self::shape_err(
                    "concat_channels",
                    format!("spatial {h}x{w}"),
                    self.value(p),
                ));
            }
            total_c += pc;
        }
        let mut out = Grid::zeros(total_c, h, w);
        let mut offset = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            let n = v.len();
            out.data_mut()[offset..offset + n].copy_from_slice(v.data());
            offset += n;
        }
        Ok(self.push(
            out,
            Op::ConcatChannels {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Reinterpret the buffer with a new shape of identical length.
    pub fn reshape(&mut self, x: NodeId, c: usize, h: usize, w: usize) -> Result<NodeId> {
        let v = self.value(x);
        if v.len() != c * h * w {
            return Err(Self::shape_err(
                "reshape",
                format!("{} values", c * h * w),
                v,
            ));
        }
        let out = Grid::from_vec(c, h, w, v.data().to_vec())?;
        Ok(self.push(out, Op::Reshape { x }))
    }

    /// Flatten to a `(1, 1, n)` vector.
    pub fn flatten(&mut self, x: NodeId) -> NodeId {
        let n = self.value(x).len();
        self.reshape(x, 1, 1, n).expect("length preserved")
    }

    /// Variant focal loss over a confidence map (two-branch, normalized by
    /// the number of target-1 pixels). Predictions are clamped to
    /// `[1e-7, 1 - 1e-7]` before logarithms.
    pub fn focal_loss(
        &mut self,
        pred: NodeId,
        target: &Grid,
        alpha: f64,
        beta: f64,
    ) -> Result<NodeId> {
        let pv = self.value(pred);
        if !pv.same_shape(target) {
            return Err(Self::shape_err(
                "focal_loss",
                target.shape_string(),
                pv,
            ));
        }
        let n_pos = target.data().iter().filter(|&&t| t == 1.0).count();
        let mut loss = 0.0;
        if n_pos > 0 {
            for (&p, &t) in pv.data().iter().zip(target.data()) {
                let p = p.clamp(CLAMP_LO, CLAMP_HI);
                if t == 1.0 {
                    loss -= (1.0 - p).powf(alpha) * p.ln();
                } else {
                    loss -= (1.0 - t).powf(beta) * p.powf(alpha) * (1.0 - p).ln();
                }
            }
            loss /= n_pos as f64;
        }
        Ok(self.push(
            Grid::scalar(loss),
            Op::FocalLoss {
                pred,
                target: target.clone(),
                alpha,
                beta,
                n_pos,
            },
        ))
    }

    /// Mean binary cross entropy with a weight on positive-target pixels.
    pub fn weighted_bce(&mut self, pred: NodeId, target: &Grid, pos_weight: f64) -> Result<NodeId> {
        let pv = self.value(pred);
        if !pv.same_shape(target) {
            return Err(Self::shape_err(
                "weighted_bce",
                target.shape_string(),
                pv,
            ));
        }
        let mut loss = 0.0;
        for (&p, &t) in pv.data().iter().zip(target.data()) {
            let p = p.clamp(CLAMP_LO, CLAMP_HI);
            let w = if t > 0.0 { pos_weight } else { 1.0 };
            loss += w * (-t * p.ln() - (1.0 - t) * (1.0 - p).ln());
        }
        loss /= pv.len() as f64;
        Ok(self.push(
            Grid::scalar(loss),
            Op::WeightedBce {
                pred,
                target: target.clone(),
                pos_weight,
            },
        ))
    }

    /// L1 loss restricted to pixels where `mask > 0`, averaged over the
    /// masked pixel count (channels summed).
    pub fn masked_l1(&mut self, pred: NodeId, target: &Grid, mask: &Grid) -> Result<NodeId> {
        self.masked_reg(pred, target, mask, false)
    }

    /// Smooth-L1 (Huber, transition at 1) restricted to masked pixels.
    pub fn masked_smooth_l1(
        &mut self,
        pred: NodeId,
        target: &Grid,
        mask: &Grid,
    ) -> Result<NodeId> {
        self.masked_reg(pred, target, mask, true)
    }

    fn masked_reg(
        &mut self,
        pred: NodeId,
        target: &Grid,
        mask: &Grid,
        smooth: bool,
    ) -> Result<NodeId> {
        let pv = self.value(pred);
        let (c, h, w) = pv.shape();
        if !pv.same_shape(target) {
            return Err(Self::shape_err("masked_reg", target.shape_string(), pv));
        }
        if mask.shape() != (1, h, w) {
            return Err(Error::ShapeMismatch {
                op: "masked_reg",
                expected: format!("mask 1x{h}x{w}"),
                got: mask.shape_string(),
            });
        }
        let n_pos = mask.data().iter().filter(|&&m| m > 0.0).count();
        let mut loss = 0.0;
        if n_pos > 0 {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        if mask.at(0, y, x) <= 0.0 {
                            continue;
                        }
                        let d = pv.at(ch, y, x) - target.at(ch, y, x);
                        loss += if smooth { smooth_l1(d) } else { d.abs() };
                    }
                }
            }
            loss /= n_pos as f64;
        }
        let op = if smooth {
            Op::MaskedSmoothL1 {
                pred,
                target: target.clone(),
                mask: mask.clone(),
                n_pos,
            }
        } else {
            Op::MaskedL1 {
                pred,
                target: target.clone(),
                mask: mask.clone(),
                n_pos,
            }
        };
        Ok(self.push(Grid::scalar(loss), op))
    }

    /// Reverse pass from a scalar loss node. Returns gradients for every
    /// node reached by the chain rule.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape_string()));
        }
        let mut grads: Vec<Option<Grid>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Grid::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(gout) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, gout: &Grid, grads: &mut [Option<Grid>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Relu { x } => {
                let xv = self.value(*x);
                let g = elementwise(gout, xv, |g, x| if x > 0.0 { g } else { 0.0 });
                accumulate(grads, *x, g);
            }
            Op::Sigmoid { x } => {
                let g = elementwise(gout, &node.value, |g, y| g * y * (1.0 - y));
                accumulate(grads, *x, g);
            }
            Op::Softplus { x } => {
                let xv = self.value(*x);
                let g = elementwise(gout, xv, |g, x| g * sigmoid(x));
                accumulate(grads, *x, g);
            }
            Op::Log { x } => {
                let xv = self.value(*x);
                let g = elementwise(gout, xv, |g, x| g / x);
                accumulate(grads, *x, g);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x);
                let (lo, hi) = (*lo, *hi);
                let g = elementwise(gout, xv, |g, x| if x >= lo && x <= hi { g } else { 0.0 });
                accumulate(grads, *x, g);
            }
            Op::PowConst { x, p } => {
                let xv = self.value(*x);
                let p = *p;
                let g = elementwise(gout, xv, |g, x| g * p * x.powf(p - 1.0));
                accumulate(grads, *x, g);
            }
            Op::Scale { x, c } => {
                let c = *c;
                accumulate(grads, *x, gout.map(|g| g * c));
            }
            Op::AddConst { x } => {
                accumulate(grads, *x, gout.clone());
            }
            Op::Add { a, b } => {
                accumulate(grads, *a, gout.clone());
                accumulate(grads, *b, gout.clone());
            }
            Op::Sub { a, b } => {
                accumulate(grads, *a, gout.clone());
                accumulate(grads, *b, gout.map(|g| -g));
            }
            Op::Mul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, elementwise(gout, vb, |g, y| g * y));
                accumulate(grads, *b, elementwise(gout, va, |g, x| g * x));
            }
            Op::Sum { x } => {
                let s = gout.scalar_value();
                let (c, h, w) = self.value(*x).shape();
                accumulate(grads, *x, Grid::full(c, h, w, s));
            }
            Op::Mean { x } => {
                let xv = self.value(*x);
                let s = gout.scalar_value() / xv.len() as f64;
                let (c, h, w) = xv.shape();
                accumulate(grads, *x, Grid::full(c, h, w, s));
            }
            Op::Dot { a, b } => {
                let s = gout.scalar_value();
                accumulate(grads, *a, self.value(*b).map(|v| v * s));
                accumulate(grads, *b, self.value(*a).map(|v| v * s));
            }
            Op::Conv2d {
                x,
                k,
                bias,
                stride,
                pad,
            } => self.backward_conv2d(*x, *k, *bias, *stride, *pad, gout, grads),
            Op::DepthwiseConv { x, k } => self.backward_depthwise(*x, *k, gout, grads),
            Op::TransposeConv2d { x, k, bias, stride } => {
                self.backward_transpose_conv(*x, *k, *bias, *stride, gout, grads)
            }
            Op::BilinearUpsample { x, factor } => {
                let (c, h, w) = self.value(*x).shape();
                let factor = *factor;
                let mut gx = Grid::zeros(c, h, w);
                let (oh, ow) = (h * factor, w * factor);
                for ch in 0..c {
                    for oy in 0..oh {
                        let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
                        for ox in 0..ow {
                            let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
                            scatter_bilinear(&mut gx, ch, sx, sy, gout.at(ch, oy, ox));
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::MaxPool { x, argmax } => {
                let (c, h, w) = self.value(*x).shape();
                let mut gx = Grid::zeros(c, h, w);
                for (i, &src) in argmax.iter().enumerate() {
                    gx.data_mut()[src] += gout.data()[i];
                }
                accumulate(grads, *x, gx);
            }
            Op::FullyConnected { x, w, bias } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (_, m, n) = wv.shape();
                let mut gx = vec![0.0; n];
                let mut gw = Grid::zeros(1, m, n);
                for o in 0..m {
                    let go = gout.data()[o];
                    let wrow = wv.row(0, o);
                    let gwrow = gw.row_mut(0, o);
                    for i in 0..n {
                        gx[i] += go * wrow[i];
                        gwrow[i] = go * xv.data()[i];
                    }
                }
                accumulate(grads, *x, Grid::vector(gx));
                accumulate(grads, *w, gw);
                if let Some(b) = bias {
                    accumulate(grads, *b, gout.clone());
                }
            }
            Op::L2Normalize { x, norm } => {
                let y = &node.value;
                let dot: f64 = y
                    .data()
                    .iter()
                    .zip(gout.data())
                    .map(|(&a, &b)| a * b)
                    .sum();
                let norm = *norm;
                let mut g = gout.clone();
                for (gi, &yi) in g.data_mut().iter_mut().zip(y.data()) {
                    *gi = (*gi - yi * dot) / norm;
                }
                accumulate(grads, *x, g);
            }
            Op::BilinearSample { x, points } => {
                let (c, h, w) = self.value(*x).shape();
                let mut gx = Grid::zeros(c, h, w);
                let ow = node.value.width();
                for ch in 0..c {
                    for (i, &(px, py)) in points.iter().enumerate() {
                        let g = gout.at(ch, i / ow, i % ow);
                        scatter_bilinear(&mut gx, ch, px, py, g);
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::SliceChannels { x, c0 } => {
                let (c, h, w) = self.value(*x).shape();
                let mut gx = Grid::zeros(c, h, w);
                let n = gout.len();
                let start = c0 * h * w;
                gx.data_mut()[start..start + n].copy_from_slice(gout.data());
                accumulate(grads, *x, gx);
            }
            Op::ConcatChannels { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let v = self.value(p);
                    let (c, h, w) = v.shape();
                    let n = v.len();
                    let mut gp = Grid::zeros(c, h, w);
                    gp.data_mut()
                        .copy_from_slice(&gout.data()[offset..offset + n]);
                    offset += n;
                    accumulate(grads, p, gp);
                }
            }
            Op::Reshape { x } => {
                let (c, h, w) = self.value(*x).shape();
                let g = Grid::from_vec(c, h, w, gout.data().to_vec()).expect("same length");
                accumulate(grads, *x, g);
            }
            Op::FocalLoss {
                pred,
                target,
                alpha,
                beta,
                n_pos,
            } => {
                let pv = self.value(*pred);
                let (c, h, w) = pv.shape();
                let mut g = Grid::zeros(c, h, w);
                if *n_pos > 0 {
                    let scale = gout.scalar_value() / *n_pos as f64;
                    for (i, (&praw, &t)) in pv.data().iter().zip(target.data()).enumerate() {
                        if !(CLAMP_LO..=CLAMP_HI).contains(&praw) {
                            continue;
                        }
                        let p = praw;
                        let d = if t == 1.0 {
                            -(-alpha * (1.0 - p).powf(alpha - 1.0) * p.ln()
                                + (1.0 - p).powf(*alpha) / p)
                        } else {
                            -(1.0 - t).powf(*beta)
                                * (alpha * p.powf(alpha - 1.0) * (1.0 - p).ln()
                                    - p.powf(*alpha) / (1.0 - p))
                        };
                        g.data_mut()[i] = scale * d;
                    }
                }
                accumulate(grads, *pred, g);
            }
            Op::WeightedBce {
                pred,
                target,
                pos_weight,
            } => {
                let pv = self.value(*pred);
                let (c, h, w) = pv.shape();
                let mut g = Grid::zeros(c, h, w);
                let scale = gout.scalar_value() / pv.len() as f64;
                for (i, (&praw, &t)) in pv.data().iter().zip(target.data()).enumerate() {
                    if !(CLAMP_LO..=CLAMP_HI).contains(&praw) {
                        continue;
                    }
                    let wgt = if t > 0.0 { *pos_weight } else { 1.0 };
                    g.data_mut()[i] = scale * wgt * (-t / praw + (1.0 - t) / (1.0 - praw));
                }
                accumulate(grads, *pred, g);
            }
            Op::MaskedL1 {
                pred,
                target,
                mask,
                n_pos,
            }
            | Op::MaskedSmoothL1 {
                pred,
                target,
                mask,
                n_pos,
            } => {
                let smooth = matches!(node.op, Op::MaskedSmoothL1 { .. });
                let pv = self.value(*pred);
                let (c, h, w) = pv.shape();
                let mut g = Grid::zeros(c, h, w);
                if *n_pos > 0 {
                    let scale = gout.scalar_value() / *n_pos as f64;
                    for ch in 0..c {
                        for y in 0..h {
                            for x in 0..w {
                                if mask.at(0, y, x) <= 0.0 {
                                    continue;
                                }
                                let d = pv.at(ch, y, x) - target.at(ch, y, x);
                                let dd = if smooth {
                                    if d.abs() <= 1.0 {
                                        d
                                    } else {
                                        d.signum()
                                    }
                                } else if d == 0.0 {
                                    0.0
                                } else {
                                    d.signum()
                                };
                                g.set(ch, y, x, scale * dd);
                            }
                        }
                    }
                }
                accumulate(grads, *pred, g);
            }
        }
    }

    fn backward_conv2d(
        &self,
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        pad: usize,
        gout: &Grid,
        grads: &mut [Option<Grid>],
    ) {
        let xv = self.value(x);
        let kv = self.value(k);
        let (cin, h, w) = xv.shape();
        let (kc, kh, kw) = kv.shape();
        let cout = kc / cin;
        let (_, oh, ow) = gout.shape();

        let mut gx = Grid::zeros(cin, h, w);
        let mut gk = Grid::zeros(kc, kh, kw);
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = kv.at(co * cin + ci, ky, kx);
                        let (ox_lo, ox_hi) = valid_range(kx, pad, stride, w, ow);
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let grow = gout.row(co, oy);
                            let xrow = xv.row(ci, iy as usize);
                            let gxrow = gx.row_mut(ci, iy as usize);
                            for ox in ox_lo..ox_hi {
                                let ix = ox * stride + kx - pad;
                                let g = grow[ox];
                                gxrow[ix] += wgt * g;
                                acc += g * xrow[ix];
                            }
                        }
                        gk.add_at(co * cin + ci, ky, kx, acc);
                    }
                }
            }
        }
        accumulate(grads, x, gx);
        accumulate(grads, k, gk);
        if let Some(b) = bias {
            let mut gb = vec![0.0; cout];
            for (co, slot) in gb.iter_mut().enumerate() {
                for oy in 0..oh {
                    *slot += gout.row(co, oy).iter().sum::<f64>();
                }
            }
            accumulate(grads, b, Grid::vector(gb));
        }
    }

    fn backward_depthwise(&self, x: NodeId, k: NodeId, gout: &Grid, grads: &mut [Option<Grid>]) {
        let xv = self.value(x);
        let kv = self.value(k);
        let (c, h, w) = xv.shape();
        let (_, kh, kw) = kv.shape();
        let (_, oh, ow) = gout.shape();
        let mut gx = Grid::zeros(c, h, w);
        let mut gk = Grid::zeros(c, kh, kw);
        for ch in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wgt = kv.at(ch, ky, kx);
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let grow = gout.row(ch, oy);
                        let xrow = xv.row(ch, oy + ky);
                        let gxrow = gx.row_mut(ch, oy + ky);
                        for ox in 0..ow {
                            let g = grow[ox];
                            gxrow[ox + kx] += wgt * g;
                            acc += g * xrow[ox + kx];
                        }
                    }
                    gk.add_at(ch, ky, kx, acc);
                }
            }
        }
        accumulate(grads, x, gx);
        accumulate(grads, k, gk);
    }

    fn backward_transpose_conv(
        &self,
        x: NodeId,
        k: NodeId,
        bias: Option<NodeId>,
        stride: usize,
        gout: &Grid,
        grads: &mut [Option<Grid>],
    ) {
        let xv = self.value(x);
        let kv = self.value(k);
        let (cin, h, w) = xv.shape();
        let (kc, kh, kw) = kv.shape();
        let cout = kc / cin;
        let (_, oh, ow) = gout.shape();
        let mut gx = Grid::zeros(cin, h, w);
        let mut gk = Grid::zeros(kc, kh, kw);
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wgt = kv.at(co * cin + ci, ky, kx);
                        let mut acc = 0.0;
                        for iy in 0..h {
                            let grow = gout.row(co, iy * stride + ky);
                            let xrow = xv.row(ci, iy);
                            let gxrow = gx.row_mut(ci, iy);
                            for ix in 0..w {
                                let g = grow[ix * stride + kx];
                                gxrow[ix] += wgt * g;
                                acc += g * xrow[ix];
                            }
                        }
                        gk.add_at(co * cin + ci, ky, kx, acc);
                    }
                }
            }
        }
        accumulate(grads, x, gx);
        accumulate(grads, k, gk);
        if let Some(b) = bias {
            let mut gb = vec![0.0; cout];
            for (co, slot) in gb.iter_mut().enumerate() {
                for oy in 0..oh {
                    *slot += gout.row(co, oy).iter().sum::<f64>();
                }
            }
            accumulate(grads, b, Grid::vector(gb));
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn smooth_l1(d: f64) -> f64 {
    if d.abs() <= 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Valid output-x range so `ox * stride + kx - pad` stays inside `[0, w)`.
fn valid_range(kx: usize, pad: usize, stride: usize, w: usize, ow: usize) -> (usize, usize) {
    let lo = if pad > kx {
        (pad - kx + stride - 1) / stride
    } else {
        0
    };
    let hi = if w + pad > kx {
        ((w + pad - kx - 1) / stride + 1).min(ow)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn elementwise(gout: &Grid, other: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
    let mut g = gout.clone();
    for (gi, &oi) in g.data_mut().iter_mut().zip(other.data()) {
        *gi = f(*gi, oi);
    }
    g
}

fn scatter_bilinear(gx: &mut Grid, c: usize, x: f64, y: f64, g: f64) {
    let w = gx.width();
    let h = gx.height();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    gx.add_at(c, y0, x0, g * (1.0 - fy) * (1.0 - fx));
    gx.add_at(c, y0, x1, g * (1.0 - fy) * fx);
    gx.add_at(c, y1, x0, g * fy * (1.0 - fx));
    gx.add_at(c, y1, x1, g * fy * fx);
}

fn accumulate(grads: &mut [Option<Grid>], id: NodeId, delta: Grid) {
    match &mut grads[id.0] {
        Some(g) => {
            for (gi, &di) in g.data_mut().iter_mut().zip(delta.data()) {
                *gi += di;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv2d_identity_kernel_preserves_input() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::from_vec(1, 3, 3, (1..=9).map(f64::from).collect()).unwrap());
        let k = tape.leaf(Grid::from_vec(1, 1, 1, vec![1.0]).unwrap());
        let y = tape.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(tape.value(y), tape.value(x));
    }

    #[test]
    fn conv2d_shape_mismatch_reports_both_shapes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::zeros(3, 4, 4));
        let k = tape.leaf(Grid::zeros(4, 3, 3)); // 4 not divisible by 3
        let err = tape.conv2d(x, k, None, 1, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv2d") && msg.contains("4x3x3"), "{msg}");
    }

    #[test]
    fn sum_backward_is_all_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::from_vec(1, 2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap());
        let loss = tape.sum(x);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn relu_of_negative_input_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::from_vec(1, 1, 3, vec![-1.0, -5.0, -0.1]).unwrap());
        let r = tape.relu(x);
        let loss = tape.sum(r);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::zeros(1, 2, 2));
        let y = tape.relu(x);
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn l2_normalize_unit_norm_and_zero_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::vector(vec![3.0, 4.0]));
        let y = tape.l2_normalize(x).unwrap();
        let norm: f64 = tape.value(y).data().iter().map(|v| v * v).sum::<f64>();
        assert!((norm - 1.0).abs() < 1e-12);

        let z = tape.leaf(Grid::vector(vec![0.0, 0.0]));
        assert!(matches!(tape.l2_normalize(z), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn max_pool_tracks_first_maximum() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::from_vec(1, 2, 2, vec![5.0, 5.0, 1.0, 0.0]).unwrap());
        let y = tape.max_pool(x, 2, 2, 2, 2).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bilinear_sample_exact_at_integer_coords() {
        let mut tape = Tape::new();
        let x = tape.leaf(Grid::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape
            .bilinear_sample(x, vec![(0.0, 0.0), (1.0, 1.0)], 1, 2)
            .unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 4.0]);
    }

    #[test]
    fn focal_loss_matches_direct_formula_single_positive() {
        // target = 1 at one pixel, pred = 0.5 there; other pixels have
        // target 0 and tiny predictions.
        let mut tape = Tape::new();
        let pred = tape.leaf(Grid::from_vec(1, 1, 2, vec![0.5, 1e-7]).unwrap());
        let target = Grid::from_vec(1, 1, 2, vec![1.0, 0.0]).unwrap();
        let loss = tape.focal_loss(pred, &target, 2.0, 4.0).unwrap();
        let expected = -(0.5f64.powi(2) * 0.5f64.ln());
        assert!((tape.value(loss).scalar_value() - expected).abs() < 1e-9);
    }

    #[test]
    fn smooth_l1_piecewise_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(2.0), 1.5);
    }

    #[test]
    fn replaying_a_tape_is_deterministic() {
        let build = || {
            let mut tape = Tape::new();
            let x = tape.leaf(Grid::from_vec(1, 4, 4, (0..16).map(|i| i as f64 * 0.37 - 2.0).collect()).unwrap());
            let k = tape.leaf(Grid::from_vec(1, 3, 3, (0..9).map(|i| (i as f64).sin()).collect()).unwrap());
            let c = tape.conv2d(x, k, None, 1, 1).unwrap();
            let s = tape.sigmoid(c);
            let loss = tape.mean(s);
            let grads = tape.backward(loss).unwrap();
            (
                tape.value(loss).scalar_value(),
                grads.get(k).unwrap().data().to_vec(),
            )
        };
        let (l1, g1) = build();
        let (l2, g2) = build();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }
}
