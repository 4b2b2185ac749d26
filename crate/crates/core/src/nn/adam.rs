use super::{Grads, Mlp, Real};
use crate::{LspcError, Result};

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Grads<F>,
    pub v: Grads<F>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Real> AdamState<F> {
    pub fn new(net: &Mlp<F>) -> Self {
        AdamState { m: Grads::zeros_like(net), v: Grads::zeros_like(net), t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam update. A non-finite gradient aborts before
    /// anything is modified.
    pub fn step(&mut self, net: &mut Mlp<F>, grads: &Grads<F>, lr: f64) -> Result<()> {
        if grads.layers.len() != net.layers().len()
            || grads.layers.iter().zip(net.layers()).any(|((w, b), l)| w.len() != l.w.len() || b.len() != l.b.len())
        {
            return Err(LspcError::Shape("gradient buffer does not match network".into()));
        }
        if let Some(name) = grads.first_non_finite() {
            return Err(LspcError::numeric(format!("gradient tensor {name}")));
        }
        self.t += 1;
        let (b1, b2) = (F::lit(self.beta1), F::lit(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = F::lit(lr / c1);
        let inv_c2 = F::lit(1.0 / c2);
        let eps = F::lit(self.eps);
        let one = F::one();
        let update = |p: &mut [F], g: &[F], m: &mut [F], v: &mut [F]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] -= step * m[i] / ((v[i] * inv_c2).sqrt() + eps);
            }
        };
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.m.layers[k];
            let (vw, vb) = &mut self.v.layers[k];
            update(&mut layer.w, gw, mw, vw);
            update(&mut layer.b, gb, mb, vb);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Head, Layer};

    fn scalar(w: f64) -> Mlp<f64> {
        Mlp::from_layers(vec![Layer { in_dim: 1, out_dim: 1, w: vec![w], b: vec![0.0] }], Activation::Relu, Head::Linear)
            .unwrap()
    }

    fn grad(g: f64) -> Grads<f64> {
        Grads { layers: vec![(vec![g], vec![0.0])] }
    }

    #[test]
    fn zero_grads_leave_parameters() {
        let mut net = scalar(0.3);
        let mut st = AdamState::new(&net);
        st.step(&mut net, &grad(0.0), 0.1).unwrap();
        assert_eq!(net.flat_params(), vec![0.3, 0.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = scalar(0.0);
        let mut st = AdamState::new(&net);
        st.step(&mut net, &grad(1.0), 0.1).unwrap();
        assert!((net.param(0) + 0.1).abs() < 1e-7);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let mut net = scalar(1.0);
        let mut st = AdamState::new(&net);
        let mut prev = 1.0f64;
        for _ in 0..100 {
            let w = net.param(0);
            st.step(&mut net, &grad(2.0 * w), 3e-4).unwrap();
            let now = net.param(0).abs();
            assert!(now < prev);
            prev = now;
        }
        assert_eq!(st.t, 100);
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut net = scalar(1.0);
        let mut st = AdamState::new(&net);
        let err = st.step(&mut net, &grad(f64::NAN), 0.1).unwrap_err();
        assert!(err.to_string().contains("L0.w"), "{err}");
        assert_eq!(net.param(0), 1.0);
        assert_eq!(st.t, 0);
    }
}
