use crate::{shape_err, Graph, GraphError, Result, Tensor, Var};

/// Magnitude bound on SI-SDR values, in dB.
pub const SI_SDR_CAP_DB: f64 = 60.0;
/// Below `residual_energy < SI_SDR_CAP_RATIO * projection_energy` the
/// reconstruction counts as perfect and the cap is returned without a log.
pub const SI_SDR_CAP_RATIO: f64 = 1e-12;

struct SiSdrItem {
    value: f64,
    /// `d value / d est`, absent when the value is clamped.
    grad: Option<Vec<f64>>,
}

fn si_sdr_item(est: &[f64], reference: &[f64]) -> SiSdrItem {
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    let dot: f64 = est.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = dot / ref_energy;
    let proj: Vec<f64> = reference.iter().map(|r| alpha * r).collect();
    let resid: Vec<f64> = est.iter().zip(&proj).map(|(e, p)| e - p).collect();
    let p2: f64 = proj.iter().map(|v| v * v).sum();
    let e2: f64 = resid.iter().map(|v| v * v).sum();
    if e2 <= SI_SDR_CAP_RATIO * p2 {
        return SiSdrItem { value: SI_SDR_CAP_DB, grad: None };
    }
    if p2 <= SI_SDR_CAP_RATIO * e2 {
        return SiSdrItem { value: -SI_SDR_CAP_DB, grad: None };
    }
    let value = 10.0 * (p2 / e2).log10();
    if value.abs() >= SI_SDR_CAP_DB {
        return SiSdrItem { value: value.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB), grad: None };
    }
    // value = 10/ln10 * (ln |p|^2 - ln |e|^2); d|p|^2 = 2p, d|e|^2 = 2e.
    let c = 20.0 / std::f64::consts::LN_10;
    let grad = proj.iter().zip(&resid).map(|(p, e)| c * (p / p2 - e / e2)).collect();
    SiSdrItem { value, grad: Some(grad) }
}

/// Scale-invariant SDR of one estimate against a reference, in dB, clamped to
/// `[-SI_SDR_CAP_DB, SI_SDR_CAP_DB]`.
pub fn si_sdr_db(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return shape_err(format!("si_sdr: lengths {} vs {}", est.len(), reference.len()));
    }
    if reference.iter().all(|&v| v == 0.0) {
        return Err(GraphError::Invalid("si_sdr: reference is all zeros".into()));
    }
    if est.iter().all(|&v| v == 0.0) {
        return Err(GraphError::Invalid("si_sdr: estimate is all zeros".into()));
    }
    Ok(si_sdr_item(est, reference).value)
}

impl Graph {
    /// Per-item SI-SDR in dB of `est` (`[B, T]`) against constant references.
    ///
    /// Items whose value is clamped at the cap contribute no gradient.
    pub fn si_sdr(&mut self, est: Var, reference: &Tensor) -> Result<Var> {
        let (b, t) = self.value(est).dims2()?;
        if reference.shape() != [b, t] {
            return shape_err(format!("si_sdr: estimate [{b}, {t}] vs reference {:?}", reference.shape()));
        }
        let mut values = Vec::with_capacity(b);
        let mut grads = Vec::with_capacity(b);
        for bi in 0..b {
            let r = reference.item_slice(bi);
            if r.iter().all(|&v| v == 0.0) {
                return Err(GraphError::Invalid(format!("si_sdr: reference {bi} is all zeros")));
            }
            let item = si_sdr_item(self.value(est).item_slice(bi), r);
            values.push(item.value);
            grads.push(item.grad);
        }
        let out = Tensor::from_vec(&[b], values)?;
        Ok(self.push(
            out,
            &[est],
            Box::new(move |c| {
                let mut d = Tensor::zeros(&[b, t]);
                for (bi, g) in grads.iter().enumerate() {
                    if let Some(g) = g {
                        let scale = c.grad.data()[bi];
                        for (o, v) in d.item_slice_mut(bi).iter_mut().zip(g) {
                            *o = scale * v;
                        }
                    }
                }
                vec![Some(d)]
            }),
        ))
    }

    /// Per-item softmax cross-entropy `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (b, classes) = self.value(logits).dims2()?;
        if labels.len() != b {
            return shape_err(format!("cross_entropy: {} labels for batch {b}", labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(GraphError::Invalid(format!("label {bad} out of range for {classes} classes")));
        }
        let mut probs = vec![0.0; b * classes];
        let mut losses = Vec::with_capacity(b);
        for (bi, &y) in labels.iter().enumerate() {
            let z = &self.value(logits).data()[bi * classes..(bi + 1) * classes];
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = z.iter().map(|v| (v - m).exp()).sum();
            let lse = m + sum_exp.ln();
            for (p, v) in probs[bi * classes..(bi + 1) * classes].iter_mut().zip(z) {
                *p = (v - lse).exp();
            }
            losses.push(lse - z[y]);
        }
        let labels = labels.to_vec();
        let out = Tensor::from_vec(&[b], losses)?;
        Ok(self.push(
            out,
            &[logits],
            Box::new(move |c| {
                let mut d = probs.clone();
                for (bi, &y) in labels.iter().enumerate() {
                    d[bi * classes + y] -= 1.0;
                    let gs = c.grad.data()[bi];
                    d[bi * classes..(bi + 1) * classes].iter_mut().for_each(|v| *v *= gs);
                }
                vec![Some(Tensor::from_vec(&[b, classes], d).expect("shape"))]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_projection_gives_zero_db() {
        assert_eq!(si_sdr_db(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn perfect_and_scaled_estimates_hit_the_cap() {
        let r = [0.3, -1.2, 0.7, 2.0];
        assert_eq!(si_sdr_db(&r, &r).unwrap(), SI_SDR_CAP_DB);
        let neg: Vec<f64> = r.iter().map(|v| -2.0 * v).collect();
        assert_eq!(si_sdr_db(&neg, &r).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(si_sdr_db(&[1.0, 2.0], &[0.0, 0.0]).is_err());
        assert!(si_sdr_db(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(si_sdr_db(&[1.0], &[1.0, 2.0]).is_err());
    }
}
