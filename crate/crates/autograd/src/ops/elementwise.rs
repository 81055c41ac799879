use crate::{shape_err, Graph, Result, Tensor, Var};

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("same shape")
}

impl Graph {
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(
            out,
            &[a, b],
            Box::new(|c| vec![c.needs[0].then(|| c.grad.clone()), c.needs[1].then(|| c.grad.clone())]),
        ))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(
            out,
            &[a, b],
            Box::new(|c| vec![c.needs[0].then(|| c.grad.clone()), c.needs[1].then(|| c.grad.scale(-1.0))]),
        ))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(
            out,
            &[a, b],
            Box::new(|c| {
                vec![
                    c.needs[0].then(|| zip_map(c.grad, c.inputs[1], |g, y| g * y)),
                    c.needs[1].then(|| zip_map(c.grad, c.inputs[0], |g, x| g * x)),
                ]
            }),
        ))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        self.push(out, &[a], Box::new(move |c| vec![Some(c.grad.scale(s))]))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(
            out,
            &[a],
            Box::new(|c| vec![Some(zip_map(c.grad, c.inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))]),
        )
    }

    /// Parametric ReLU with a single learnable slope `alpha` (shape `[1]`).
    pub fn prelu(&mut self, a: Var, alpha: Var) -> Result<Var> {
        if self.value(alpha).len() != 1 {
            return shape_err(format!("prelu slope must have one element, got {:?}", self.value(alpha).shape()));
        }
        let w = self.value(alpha).data()[0];
        let out = self.value(a).map(|x| if x > 0.0 { x } else { w * x });
        Ok(self.push(
            out,
            &[a, alpha],
            Box::new(|c| {
                let w = c.inputs[1].data()[0];
                let dx = c.needs[0].then(|| zip_map(c.grad, c.inputs[0], |g, x| if x > 0.0 { g } else { w * g }));
                let dw = c.needs[1].then(|| {
                    let s: f64 = c
                        .grad
                        .data()
                        .iter()
                        .zip(c.inputs[0].data())
                        .map(|(&g, &x)| if x > 0.0 { 0.0 } else { g * x })
                        .sum();
                    Tensor::from_vec(&[1], vec![s]).expect("scalar")
                });
                vec![dx, dw]
            }),
        ))
    }

    /// Sum of all elements, as a shape-`[]` scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, &[a], Box::new(|c| vec![Some(Tensor::full(c.inputs[0].shape(), c.grad.item()))]))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }
}
