use crate::{shape_err, Graph, ParamId, ParamStore, Result, Tensor, Var};

/// Running statistics of a batch-normalization layer.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormStats {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

/// Normalized values and reciprocal standard deviations per group.
struct Normalized {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

/// Backward of `y = gamma[c] * xhat + beta[c]` where `xhat` was normalized
/// over index groups given by `group_of`.
fn norm_backward(
    g: &Tensor,
    gamma: &[f64],
    saved: &Normalized,
    dims: (usize, usize, usize),
    per_channel_groups: bool,
    needs: &[bool],
) -> Vec<Option<Tensor>> {
    let (b, ch, k) = dims;
    let gd = g.data();
    let groups = saved.inv_std.len();
    let group_of = |bi: usize, ci: usize| if per_channel_groups { ci } else { bi };
    let count = if per_channel_groups { (b * k) as f64 } else { (ch * k) as f64 };

    let mut dgamma = vec![0.0; ch];
    let mut dbeta = vec![0.0; ch];
    let mut mean_dxhat = vec![0.0; groups];
    let mut mean_dxhat_xhat = vec![0.0; groups];
    for bi in 0..b {
        for ci in 0..ch {
            let grp = group_of(bi, ci);
            let off = (bi * ch + ci) * k;
            for t in 0..k {
                let (gv, xh) = (gd[off + t], saved.xhat[off + t]);
                dgamma[ci] += gv * xh;
                dbeta[ci] += gv;
                let dxh = gv * gamma[ci];
                mean_dxhat[grp] += dxh;
                mean_dxhat_xhat[grp] += dxh * xh;
            }
        }
    }
    let dx = needs[0].then(|| {
        let mut dx = Tensor::zeros(&[b, ch, k]);
        let dd = dx.data_mut();
        for bi in 0..b {
            for ci in 0..ch {
                let grp = group_of(bi, ci);
                let (m1, m2) = (mean_dxhat[grp] / count, mean_dxhat_xhat[grp] / count);
                let inv = saved.inv_std[grp];
                let off = (bi * ch + ci) * k;
                for t in 0..k {
                    let xh = saved.xhat[off + t];
                    dd[off + t] = inv * (gd[off + t] * gamma[ci] - m1 - xh * m2);
                }
            }
        }
        dx
    });
    vec![
        dx,
        needs[1].then(|| Tensor::from_vec(&[ch], dgamma).expect("gamma")),
        needs[2].then(|| Tensor::from_vec(&[ch], dbeta).expect("beta")),
    ]
}

fn affine(saved: &Normalized, gamma: &[f64], beta: &[f64], dims: (usize, usize, usize)) -> Tensor {
    let (b, ch, k) = dims;
    let mut out = Tensor::zeros(&[b, ch, k]);
    let od = out.data_mut();
    for bi in 0..b {
        for ci in 0..ch {
            let off = (bi * ch + ci) * k;
            for t in 0..k {
                od[off + t] = gamma[ci] * saved.xhat[off + t] + beta[ci];
            }
        }
    }
    out
}

impl Graph {
    fn check_affine(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let dims = self.dims3(x)?;
        if self.value(gamma).shape() != [dims.1] || self.value(beta).shape() != [dims.1] {
            return shape_err(format!(
                "normalization affine {:?}/{:?} vs {} channels",
                self.value(gamma).shape(),
                self.value(beta).shape(),
                dims.1
            ));
        }
        Ok(dims)
    }

    /// Global layer normalization: each item is normalized over all of its
    /// channels and frames, then scaled and shifted per channel.
    pub fn global_layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let dims @ (b, ch, k) = self.check_affine(x, gamma, beta)?;
        let xd = self.value(x).data();
        let n = (ch * k) as f64;
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; b];
        for bi in 0..b {
            let seg = &xd[bi * ch * k..(bi + 1) * ch * k];
            let mean = seg.iter().sum::<f64>() / n;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[bi] = inv;
            for (o, v) in xhat[bi * ch * k..(bi + 1) * ch * k].iter_mut().zip(seg) {
                *o = (v - mean) * inv;
            }
        }
        let saved = Normalized { xhat, inv_std };
        let out = affine(&saved, self.value(gamma).data(), self.value(beta).data(), dims);
        Ok(self.push(
            out,
            &[x, gamma, beta],
            Box::new(move |c| norm_backward(c.grad, c.inputs[1].data(), &saved, dims, false, &c.needs)),
        ))
    }

    /// Batch normalization over `[B, C, K]`, statistics per channel.
    ///
    /// In training graphs the batch statistics are used and an update of the
    /// running statistics is queued (see [`Graph::take_buffer_updates`]); in
    /// evaluation graphs the running statistics are used as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        store: &ParamStore,
        stats: BatchNormStats,
    ) -> Result<Var> {
        let dims @ (b, ch, k) = self.check_affine(x, gamma, beta)?;
        let xd = self.value(x).data();
        let mut xhat = vec![0.0; xd.len()];
        let mut inv_std = vec![0.0; ch];
        if self.is_training() {
            let n = (b * k) as f64;
            let mut means = vec![0.0; ch];
            let mut vars = vec![0.0; ch];
            for ci in 0..ch {
                let rows = (0..b).map(|bi| &xd[(bi * ch + ci) * k..(bi * ch + ci + 1) * k]);
                let mean = rows.clone().flatten().sum::<f64>() / n;
                let var = rows.flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                means[ci] = mean;
                vars[ci] = var;
                inv_std[ci] = 1.0 / (var + stats.eps).sqrt();
            }
            for bi in 0..b {
                for ci in 0..ch {
                    let off = (bi * ch + ci) * k;
                    for t in 0..k {
                        xhat[off + t] = (xd[off + t] - means[ci]) * inv_std[ci];
                    }
                }
            }
            let m = stats.momentum;
            let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let rm = store.get(stats.running_mean);
            let rv = store.get(stats.running_var);
            let new_rm: Vec<f64> = rm.data().iter().zip(&means).map(|(r, v)| (1.0 - m) * r + m * v).collect();
            let new_rv: Vec<f64> = rv.data().iter().zip(&vars).map(|(r, v)| (1.0 - m) * r + m * v * unbias).collect();
            self.queue_buffer_update(stats.running_mean, Tensor::from_vec(&[ch], new_rm)?);
            self.queue_buffer_update(stats.running_var, Tensor::from_vec(&[ch], new_rv)?);
            let saved = Normalized { xhat, inv_std };
            let out = affine(&saved, self.value(gamma).data(), self.value(beta).data(), dims);
            Ok(self.push(
                out,
                &[x, gamma, beta],
                Box::new(move |c| norm_backward(c.grad, c.inputs[1].data(), &saved, dims, true, &c.needs)),
            ))
        } else {
            let rm = store.get(stats.running_mean).data();
            let rv = store.get(stats.running_var).data();
            for ci in 0..ch {
                inv_std[ci] = 1.0 / (rv[ci] + stats.eps).sqrt();
            }
            for bi in 0..b {
                for ci in 0..ch {
                    let off = (bi * ch + ci) * k;
                    for t in 0..k {
                        xhat[off + t] = (xd[off + t] - rm[ci]) * inv_std[ci];
                    }
                }
            }
            let saved = Normalized { xhat, inv_std };
            let out = affine(&saved, self.value(gamma).data(), self.value(beta).data(), dims);
            Ok(self.push(
                out,
                &[x, gamma, beta],
                Box::new(move |c| {
                    // Statistics are constants here, so dx is a per-channel scale.
                    let gamma = c.inputs[1].data();
                    let gd = c.grad.data();
                    let mut dgamma = vec![0.0; ch];
                    let mut dbeta = vec![0.0; ch];
                    let mut dx = c.needs[0].then(|| Tensor::zeros(&[b, ch, k]));
                    for bi in 0..b {
                        for ci in 0..ch {
                            let off = (bi * ch + ci) * k;
                            for t in 0..k {
                                dgamma[ci] += gd[off + t] * saved.xhat[off + t];
                                dbeta[ci] += gd[off + t];
                            }
                            if let Some(dx) = dx.as_mut() {
                                let s = gamma[ci] * saved.inv_std[ci];
                                for t in 0..k {
                                    dx.data_mut()[off + t] = gd[off + t] * s;
                                }
                            }
                        }
                    }
                    vec![
                        dx,
                        c.needs[1].then(|| Tensor::from_vec(&[ch], dgamma).expect("gamma")),
                        c.needs[2].then(|| Tensor::from_vec(&[ch], dbeta).expect("beta")),
                    ]
                }),
            ))
        }
    }
}
