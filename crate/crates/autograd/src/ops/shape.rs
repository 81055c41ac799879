use crate::{shape_err, Graph, Result, Tensor, Var};

/// Source position(s) for linear interpolation of `f` frames onto `k`.
fn linear_taps(j: usize, f: usize, k: usize) -> (usize, usize, f64) {
    let pos = ((j as f64 + 0.5) * f as f64 / k as f64 - 0.5).clamp(0.0, (f - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(f - 1);
    (lo, hi, pos - lo as f64)
}

impl Graph {
    /// Concatenates `[B, Ci, K]` sequences along the channel axis.
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return shape_err("concat_channels: no inputs");
        };
        let (b, _, k) = self.dims3(first)?;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (xb, xc, xk) = self.dims3(x)?;
            if xb != b || xk != k {
                return shape_err(format!("concat_channels: [{xb}, _, {xk}] vs [{b}, _, {k}]"));
            }
            widths.push(xc);
        }
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(&[b, total, k]);
        for bi in 0..b {
            let mut off = 0;
            for (&x, &w) in xs.iter().zip(&widths) {
                let src = self.value(x).item_slice(bi);
                out.item_slice_mut(bi)[off * k..(off + w) * k].copy_from_slice(src);
                off += w;
            }
        }
        Ok(self.push(
            out,
            xs,
            Box::new(move |c| {
                let mut off = 0;
                widths
                    .iter()
                    .zip(&c.needs)
                    .map(|(&w, &need)| {
                        let start = off;
                        off += w;
                        need.then(|| {
                            let mut d = Tensor::zeros(&[b, w, k]);
                            for bi in 0..b {
                                d.item_slice_mut(bi)
                                    .copy_from_slice(&c.grad.item_slice(bi)[start * k..(start + w) * k]);
                            }
                            d
                        })
                    })
                    .collect()
            }),
        ))
    }

    /// Broadcasts `[B, C]` along a new time axis of length `k`.
    pub fn repeat_time(&mut self, a: Var, k: usize) -> Result<Var> {
        let (b, ch) = self.value(a).dims2()?;
        let mut out = Tensor::zeros(&[b, ch, k]);
        for (row, &v) in self.value(a).data().iter().enumerate() {
            out.data_mut()[row * k..(row + 1) * k].fill(v);
        }
        Ok(self.push(
            out,
            &[a],
            Box::new(move |c| {
                let d = (0..b * ch).map(|row| c.grad.data()[row * k..(row + 1) * k].iter().sum()).collect();
                vec![Some(Tensor::from_vec(&[b, ch], d).expect("shape"))]
            }),
        ))
    }

    /// Non-overlapping average pooling along time with the given kernel
    /// (clamped to the sequence length); a trailing remainder is dropped.
    pub fn avg_pool_time(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let (b, ch, k) = self.dims3(x)?;
        if k == 0 || kernel == 0 {
            return shape_err("avg_pool_time: empty sequence or kernel");
        }
        let kernel = kernel.min(k);
        let ko = k / kernel;
        let inv = 1.0 / kernel as f64;
        let mut out = Tensor::zeros(&[b, ch, ko]);
        for row in 0..b * ch {
            let src = &self.value(x).data()[row * k..(row + 1) * k];
            for o in 0..ko {
                out.data_mut()[row * ko + o] = src[o * kernel..(o + 1) * kernel].iter().sum::<f64>() * inv;
            }
        }
        Ok(self.push(
            out,
            &[x],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, ch, k]);
                for row in 0..b * ch {
                    for o in 0..ko {
                        let gv = c.grad.data()[row * ko + o] * inv;
                        d.data_mut()[row * k + o * kernel..row * k + (o + 1) * kernel].fill(gv);
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Mean over the time axis: `[B, C, K] -> [B, C]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        let (b, ch, k) = self.dims3(x)?;
        if k == 0 {
            return shape_err("mean_time: empty sequence");
        }
        let inv = 1.0 / k as f64;
        let d = (0..b * ch).map(|row| self.value(x).data()[row * k..(row + 1) * k].iter().sum::<f64>() * inv).collect();
        let out = Tensor::from_vec(&[b, ch], d)?;
        Ok(self.push(
            out,
            &[x],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, ch, k]);
                for row in 0..b * ch {
                    d.data_mut()[row * k..(row + 1) * k].fill(c.grad.data()[row] * inv);
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Nearest-neighbour upsampling along time: output frame `j` copies input
    /// frame `floor(j * F / K)`.
    pub fn upsample_repeat(&mut self, x: Var, k: usize) -> Result<Var> {
        let (b, ch, f) = self.dims3(x)?;
        if f == 0 || k < f {
            return shape_err(format!("upsample: cannot map {f} frames onto {k}"));
        }
        let src: Vec<usize> = (0..k).map(|j| j * f / k).collect();
        let mut out = Tensor::zeros(&[b, ch, k]);
        for row in 0..b * ch {
            let xs = &self.value(x).data()[row * f..(row + 1) * f];
            let ys = &mut out.data_mut()[row * k..(row + 1) * k];
            for (y, &s) in ys.iter_mut().zip(&src) {
                *y = xs[s];
            }
        }
        Ok(self.push(
            out,
            &[x],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, ch, f]);
                for row in 0..b * ch {
                    let gs = &c.grad.data()[row * k..(row + 1) * k];
                    let ds = &mut d.data_mut()[row * f..(row + 1) * f];
                    for (gv, &s) in gs.iter().zip(&src) {
                        ds[s] += gv;
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Linear-interpolation upsampling along time (frame centres aligned).
    pub fn upsample_linear(&mut self, x: Var, k: usize) -> Result<Var> {
        let (b, ch, f) = self.dims3(x)?;
        if f == 0 || k < f {
            return shape_err(format!("upsample: cannot map {f} frames onto {k}"));
        }
        let taps: Vec<_> = (0..k).map(|j| linear_taps(j, f, k)).collect();
        let mut out = Tensor::zeros(&[b, ch, k]);
        for row in 0..b * ch {
            let xs = &self.value(x).data()[row * f..(row + 1) * f];
            let ys = &mut out.data_mut()[row * k..(row + 1) * k];
            for (y, &(lo, hi, w)) in ys.iter_mut().zip(&taps) {
                *y = (1.0 - w) * xs[lo] + w * xs[hi];
            }
        }
        Ok(self.push(
            out,
            &[x],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, ch, f]);
                for row in 0..b * ch {
                    let gs = &c.grad.data()[row * k..(row + 1) * k];
                    let ds = &mut d.data_mut()[row * f..(row + 1) * f];
                    for (gv, &(lo, hi, w)) in gs.iter().zip(&taps) {
                        ds[lo] += (1.0 - w) * gv;
                        ds[hi] += w * gv;
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Mean over the two trailing spatial axes: `[B, C, F, H, W] -> [B, C, F]`.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).shape().to_vec();
        let [b, ch, f, h, w] = s[..] else {
            return shape_err(format!("spatial_mean expects rank 5, got {s:?}"));
        };
        let area = h * w;
        if area == 0 {
            return shape_err("spatial_mean: empty image");
        }
        let inv = 1.0 / area as f64;
        let d =
            (0..b * ch * f).map(|i| self.value(x).data()[i * area..(i + 1) * area].iter().sum::<f64>() * inv).collect();
        let out = Tensor::from_vec(&[b, ch, f], d)?;
        Ok(self.push(
            out,
            &[x],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, ch, f, h, w]);
                for i in 0..b * ch * f {
                    d.data_mut()[i * area..(i + 1) * area].fill(c.grad.data()[i] * inv);
                }
                vec![Some(d)]
            }),
        ))
    }
}
