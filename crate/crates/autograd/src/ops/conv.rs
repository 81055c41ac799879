use crate::linalg::gemm;
use crate::{shape_err, Graph, GraphError, Result, Tensor, Var};

fn bias_grad(grad: &Tensor) -> Tensor {
    let (b, c, k) = grad.dims3().expect("rank-3 grad");
    let mut out = vec![0.0; c];
    for bi in 0..b {
        for (ci, o) in out.iter_mut().enumerate() {
            let off = (bi * c + ci) * k;
            *o += grad.data()[off..off + k].iter().sum::<f64>();
        }
    }
    Tensor::from_vec(&[c], out).expect("bias shape")
}

fn add_bias(out: &mut Tensor, bias: &Tensor) {
    let (b, c, k) = out.dims3().expect("rank-3 output");
    let d = out.data_mut();
    for bi in 0..b {
        for ci in 0..c {
            let v = bias.data()[ci];
            for x in &mut d[(bi * c + ci) * k..(bi * c + ci + 1) * k] {
                *x += v;
            }
        }
    }
}

fn check_bias(g: &Graph, bias: Option<Var>, channels: usize) -> Result<()> {
    if let Some(bv) = bias {
        if g.value(bv).shape() != [channels] {
            return shape_err(format!("bias {:?}, expected [{channels}]", g.value(bv).shape()));
        }
    }
    Ok(())
}

/// Extracts `[L, K]` frames with hop `stride` from one waveform.
fn frames_of(x: &[f64], len: usize, stride: usize, count: usize) -> Vec<f64> {
    let mut f = vec![0.0; len * count];
    for k in 0..count {
        for l in 0..len {
            f[l * count + k] = x[k * stride + l];
        }
    }
    f
}

impl Graph {
    /// Width-1 convolution: `y[b] = W x[b] (+ bias)`, with `W` of shape `[Co, Ci]`.
    pub fn pointwise_conv(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (b, ci, k) = self.dims3(x)?;
        let (co, wci) = self.value(w).dims2()?;
        if wci != ci {
            return shape_err(format!("pointwise_conv: weight [{co}, {wci}] vs input channels {ci}"));
        }
        check_bias(self, bias, co)?;
        let mut out = Tensor::zeros(&[b, co, k]);
        {
            let (xv, wv) = (self.value(x), self.value(w));
            for bi in 0..b {
                let (xs, ys) = (xv.item_slice(bi), &mut out.item_slice_mut(bi)[..]);
                gemm(false, false, co, k, ci, 1.0, wv.data(), xs, 0.0, ys);
            }
        }
        let mut parents = vec![x, w];
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv));
            parents.push(bv);
        }
        Ok(self.push(
            out,
            &parents,
            Box::new(move |c| {
                let (xv, wv, g) = (c.inputs[0], c.inputs[1], c.grad);
                let dx = c.needs[0].then(|| {
                    let mut dx = Tensor::zeros(xv.shape());
                    for bi in 0..b {
                        gemm(true, false, ci, k, co, 1.0, wv.data(), g.item_slice(bi), 0.0, dx.item_slice_mut(bi));
                    }
                    dx
                });
                let dw = c.needs[1].then(|| {
                    let mut dw = Tensor::zeros(wv.shape());
                    for bi in 0..b {
                        gemm(false, true, co, ci, k, 1.0, g.item_slice(bi), xv.item_slice(bi), 1.0, dw.data_mut());
                    }
                    dw
                });
                let mut grads = vec![dx, dw];
                if c.inputs.len() == 3 {
                    grads.push(c.needs[2].then(|| bias_grad(g)));
                }
                grads
            }),
        ))
    }

    /// Dense layer without bias: `[B, D] x [C, D]^T -> [B, C]`.
    pub fn linear(&mut self, a: Var, w: Var) -> Result<Var> {
        let (b, d) = self.value(a).dims2()?;
        let (c_out, wd) = self.value(w).dims2()?;
        if wd != d {
            return shape_err(format!("linear: weight [{c_out}, {wd}] vs input [{b}, {d}]"));
        }
        let mut out = Tensor::zeros(&[b, c_out]);
        gemm(false, true, b, c_out, d, 1.0, self.value(a).data(), self.value(w).data(), 0.0, out.data_mut());
        Ok(self.push(
            out,
            &[a, w],
            Box::new(move |c| {
                let (av, wv, g) = (c.inputs[0], c.inputs[1], c.grad);
                let da = c.needs[0].then(|| {
                    let mut da = Tensor::zeros(av.shape());
                    gemm(false, false, b, d, c_out, 1.0, g.data(), wv.data(), 0.0, da.data_mut());
                    da
                });
                let dw = c.needs[1].then(|| {
                    let mut dw = Tensor::zeros(wv.shape());
                    gemm(true, false, c_out, d, b, 1.0, g.data(), av.data(), 0.0, dw.data_mut());
                    dw
                });
                vec![da, dw]
            }),
        ))
    }

    /// Depth-wise 1-D convolution with "same" zero padding.
    ///
    /// `w` is `[C, S]` with odd kernel size `S`; tap `j` reads
    /// `x[t + j*dilation - dilation*(S-1)/2]`.
    pub fn depthwise_conv(&mut self, x: Var, w: Var, bias: Option<Var>, dilation: usize) -> Result<Var> {
        let (b, ch, k) = self.dims3(x)?;
        let (wc, ks) = self.value(w).dims2()?;
        if wc != ch || ks % 2 == 0 || dilation == 0 {
            return shape_err(format!("depthwise_conv: weight [{wc}, {ks}] (dilation {dilation}) vs {ch} channels"));
        }
        check_bias(self, bias, ch)?;
        let pad = (dilation * (ks - 1) / 2) as isize;
        let taps: Vec<(usize, isize)> = (0..ks).map(|j| (j, (j * dilation) as isize - pad)).collect();
        let range = move |off: isize| -> (usize, usize) {
            let lo = (-off).max(0) as usize;
            let hi = (k as isize - off).clamp(0, k as isize) as usize;
            (lo.min(hi), hi)
        };
        let mut out = Tensor::zeros(&[b, ch, k]);
        {
            let (xv, wv) = (self.value(x).data(), self.value(w).data());
            let od = out.data_mut();
            for row in 0..b * ch {
                let c_idx = row % ch;
                let xs = &xv[row * k..(row + 1) * k];
                let ys = &mut od[row * k..(row + 1) * k];
                for &(j, off) in &taps {
                    let wj = wv[c_idx * ks + j];
                    let (lo, hi) = range(off);
                    for t in lo..hi {
                        ys[t] += wj * xs[(t as isize + off) as usize];
                    }
                }
            }
        }
        let mut parents = vec![x, w];
        if let Some(bv) = bias {
            add_bias(&mut out, self.value(bv));
            parents.push(bv);
        }
        Ok(self.push(
            out,
            &parents,
            Box::new(move |c| {
                let (xv, wv, g) = (c.inputs[0].data(), c.inputs[1].data(), c.grad.data());
                let mut dx = c.needs[0].then(|| Tensor::zeros(&[b, ch, k]));
                let mut dw = c.needs[1].then(|| Tensor::zeros(&[ch, ks]));
                for row in 0..b * ch {
                    let c_idx = row % ch;
                    let gs = &g[row * k..(row + 1) * k];
                    for &(j, off) in &taps {
                        let (lo, hi) = range(off);
                        if let Some(dx) = dx.as_mut() {
                            let wj = wv[c_idx * ks + j];
                            let ds = &mut dx.data_mut()[row * k..(row + 1) * k];
                            for t in lo..hi {
                                ds[(t as isize + off) as usize] += wj * gs[t];
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            let xs = &xv[row * k..(row + 1) * k];
                            let mut s = 0.0;
                            for t in lo..hi {
                                s += gs[t] * xs[(t as isize + off) as usize];
                            }
                            dw.data_mut()[c_idx * ks + j] += s;
                        }
                    }
                }
                let mut grads = vec![dx, dw];
                if c.inputs.len() == 3 {
                    grads.push(c.needs[2].then(|| bias_grad(c.grad)));
                }
                grads
            }),
        ))
    }

    /// Strided 1-D analysis convolution of waveforms: `[B, T]` with basis
    /// `[N, L]` and hop `stride` gives `[B, N, K]`, `K = (T - L)/stride + 1`.
    pub fn frame_conv(&mut self, x: Var, w: Var, stride: usize) -> Result<Var> {
        let (b, t) = self.value(x).dims2()?;
        let (n, l) = self.value(w).dims2()?;
        if stride == 0 || t < l || (t - l) % stride != 0 {
            return shape_err(format!("frame_conv: length {t} does not tile with kernel {l} / hop {stride}"));
        }
        let k = (t - l) / stride + 1;
        let mut out = Tensor::zeros(&[b, n, k]);
        for bi in 0..b {
            let frames = frames_of(self.value(x).item_slice(bi), l, stride, k);
            gemm(false, false, n, k, l, 1.0, self.value(w).data(), &frames, 0.0, out.item_slice_mut(bi));
        }
        Ok(self.push(
            out,
            &[x, w],
            Box::new(move |c| {
                let (xv, wv, g) = (c.inputs[0], c.inputs[1], c.grad);
                let mut dx = c.needs[0].then(|| Tensor::zeros(&[b, t]));
                let mut dw = c.needs[1].then(|| Tensor::zeros(&[n, l]));
                let mut dframes = vec![0.0; l * k];
                for bi in 0..b {
                    if let Some(dw) = dw.as_mut() {
                        let frames = frames_of(xv.item_slice(bi), l, stride, k);
                        gemm(false, true, n, l, k, 1.0, g.item_slice(bi), &frames, 1.0, dw.data_mut());
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(true, false, l, k, n, 1.0, wv.data(), g.item_slice(bi), 0.0, &mut dframes);
                        let xs = dx.item_slice_mut(bi);
                        for li in 0..l {
                            for ki in 0..k {
                                xs[ki * stride + li] += dframes[li * k + ki];
                            }
                        }
                    }
                }
                vec![dx, dw]
            }),
        ))
    }

    /// Synthesis by transposed convolution: each of the `K` frames of
    /// `[B, N, K]` is projected through the basis `[N, L]` to `L` samples and
    /// the frames are overlap-added at hop `stride`. The result is trimmed
    /// (or checked) to `out_len` samples.
    pub fn overlap_add(&mut self, s: Var, w: Var, stride: usize, out_len: usize) -> Result<Var> {
        let (b, n, k) = self.dims3(s)?;
        let (wn, l) = self.value(w).dims2()?;
        if wn != n {
            return shape_err(format!("overlap_add: basis [{wn}, {l}] vs {n} channels"));
        }
        let raw = (k.max(1) - 1) * stride + l;
        if k == 0 || out_len > raw || raw - out_len >= stride.max(1) {
            return Err(GraphError::Shape(format!(
                "overlap_add: {k} frames (raw length {raw}) inconsistent with {out_len} samples"
            )));
        }
        let mut out = Tensor::zeros(&[b, out_len]);
        let mut frames = vec![0.0; l * k];
        for bi in 0..b {
            gemm(true, false, l, k, n, 1.0, self.value(w).data(), self.value(s).item_slice(bi), 0.0, &mut frames);
            let ys = out.item_slice_mut(bi);
            for li in 0..l {
                for ki in 0..k {
                    let pos = ki * stride + li;
                    if pos < out_len {
                        ys[pos] += frames[li * k + ki];
                    }
                }
            }
        }
        Ok(self.push(
            out,
            &[s, w],
            Box::new(move |c| {
                let (sv, wv, g) = (c.inputs[0], c.inputs[1], c.grad);
                let mut ds = c.needs[0].then(|| Tensor::zeros(&[b, n, k]));
                let mut dw = c.needs[1].then(|| Tensor::zeros(&[n, l]));
                let mut dframes = vec![0.0; l * k];
                for bi in 0..b {
                    let gs = g.item_slice(bi);
                    for li in 0..l {
                        for ki in 0..k {
                            let pos = ki * stride + li;
                            dframes[li * k + ki] = if pos < out_len { gs[pos] } else { 0.0 };
                        }
                    }
                    if let Some(ds) = ds.as_mut() {
                        gemm(false, false, n, k, l, 1.0, wv.data(), &dframes, 0.0, ds.item_slice_mut(bi));
                    }
                    if let Some(dw) = dw.as_mut() {
                        gemm(false, true, n, l, k, 1.0, sv.item_slice(bi), &dframes, 1.0, dw.data_mut());
                    }
                }
                vec![ds, dw]
            }),
        ))
    }

    /// 3-D convolution over `[B, Ci, F, H, W]` with weight
    /// `[Co, Ci, kt, kh, kw]`, per-axis stride and zero padding.
    pub fn conv3d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: [usize; 3], pad: [usize; 3]) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (b, ci, f, h, wd) = match xs[..] {
            [b, ci, f, h, w] => (b, ci, f, h, w),
            _ => return Err(rank5(&xs)),
        };
        let (co, wci, kt, kh, kw) = match ws[..] {
            [co, ci, kt, kh, kw] => (co, ci, kt, kh, kw),
            _ => return Err(rank5(&ws)),
        };
        if wci != ci {
            return shape_err(format!("conv3d: weight channels {wci} vs input {ci}"));
        }
        check_bias(self, bias, co)?;
        let geo = Conv3dGeometry::new([f, h, wd], [kt, kh, kw], stride, pad)?;
        let [fo, ho, wo] = geo.out;
        let rows = ci * kt * kh * kw;
        let cols_n = fo * ho * wo;
        let mut out = Tensor::zeros(&[b, co, fo, ho, wo]);
        for bi in 0..b {
            let cols = geo.im2col(self.value(x).item_slice(bi), ci);
            gemm(false, false, co, cols_n, rows, 1.0, self.value(w).data(), &cols, 0.0, out.item_slice_mut(bi));
        }
        let mut parents = vec![x, w];
        if let Some(bv) = bias {
            let bias_v = self.value(bv).data().to_vec();
            let od = out.data_mut();
            for bi in 0..b {
                for (c_idx, bvv) in bias_v.iter().enumerate() {
                    let off = (bi * co + c_idx) * cols_n;
                    od[off..off + cols_n].iter_mut().for_each(|v| *v += bvv);
                }
            }
            parents.push(bv);
        }
        Ok(self.push(
            out,
            &parents,
            Box::new(move |c| {
                let (xv, wv, g) = (c.inputs[0], c.inputs[1], c.grad);
                let mut dx = c.needs[0].then(|| Tensor::zeros(xv.shape()));
                let mut dw = c.needs[1].then(|| Tensor::zeros(wv.shape()));
                let mut dcols = vec![0.0; rows * cols_n];
                for bi in 0..b {
                    let gs = g.item_slice(bi);
                    if let Some(dw) = dw.as_mut() {
                        let cols = geo.im2col(xv.item_slice(bi), ci);
                        gemm(false, true, co, rows, cols_n, 1.0, gs, &cols, 1.0, dw.data_mut());
                    }
                    if let Some(dx) = dx.as_mut() {
                        gemm(true, false, rows, cols_n, co, 1.0, wv.data(), gs, 0.0, &mut dcols);
                        geo.col2im(&dcols, ci, dx.item_slice_mut(bi));
                    }
                }
                let mut grads = vec![dx, dw];
                if c.inputs.len() == 3 {
                    grads.push(c.needs[2].then(|| {
                        let mut db = vec![0.0; co];
                        for bi in 0..b {
                            for (c_idx, d) in db.iter_mut().enumerate() {
                                let off = (bi * co + c_idx) * cols_n;
                                *d += g.data()[off..off + cols_n].iter().sum::<f64>();
                            }
                        }
                        Tensor::from_vec(&[co], db).expect("bias")
                    }));
                }
                grads
            }),
        ))
    }
}

fn rank5(s: &[usize]) -> GraphError {
    GraphError::Shape(format!("conv3d expects rank-5 tensors, got {s:?}"))
}

#[derive(Clone, Copy)]
struct Conv3dGeometry {
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    out: [usize; 3],
}

impl Conv3dGeometry {
    fn new(input: [usize; 3], kernel: [usize; 3], stride: [usize; 3], pad: [usize; 3]) -> Result<Self> {
        let mut out = [0; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * pad[a];
            if stride[a] == 0 || padded < kernel[a] {
                return shape_err(format!("conv3d: axis {a} too short for kernel {}", kernel[a]));
            }
            out[a] = (padded - kernel[a]) / stride[a] + 1;
        }
        Ok(Conv3dGeometry { input, kernel, stride, pad, out })
    }

    /// Visits every (column-matrix index, input index) pair that lies inside
    /// the unpadded input.
    fn for_each(&self, channels: usize, mut visit: impl FnMut(usize, usize)) {
        let [f, h, w] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [fo, ho, wo] = self.out;
        let cols_n = fo * ho * wo;
        for c in 0..channels {
            for a in 0..kt {
                for bb in 0..kh {
                    for cc in 0..kw {
                        let row = ((c * kt + a) * kh + bb) * kw + cc;
                        for of in 0..fo {
                            let fi = (of * self.stride[0] + a) as isize - self.pad[0] as isize;
                            if fi < 0 || fi >= f as isize {
                                continue;
                            }
                            for oh in 0..ho {
                                let hi = (oh * self.stride[1] + bb) as isize - self.pad[1] as isize;
                                if hi < 0 || hi >= h as isize {
                                    continue;
                                }
                                for ow in 0..wo {
                                    let wi = (ow * self.stride[2] + cc) as isize - self.pad[2] as isize;
                                    if wi < 0 || wi >= w as isize {
                                        continue;
                                    }
                                    let col = (of * ho + oh) * wo + ow;
                                    let src = ((c * f + fi as usize) * h + hi as usize) * w + wi as usize;
                                    visit(row * cols_n + col, src);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let [kt, kh, kw] = self.kernel;
        let [fo, ho, wo] = self.out;
        let mut cols = vec![0.0; channels * kt * kh * kw * fo * ho * wo];
        self.for_each(channels, |dst, src| cols[dst] = x[src]);
        cols
    }

    fn col2im(&self, cols: &[f64], channels: usize, dx: &mut [f64]) {
        self.for_each(channels, |src, dst| dx[dst] += cols[src]);
    }
}
