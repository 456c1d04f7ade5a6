//! Action-value critic: observation features plus the applied command in,
//! scalar value out.

use crate::costnet::{Adam, Mlp, PolicyObservation};
use crate::scalar::Real;
use nalgebra::DVector;

#[derive(Debug, Clone)]
pub struct Critic<T: Real> {
    pub mlp: Mlp<T>,
}

impl<T: Real> Critic<T> {
    pub fn new(feature_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut sizes = vec![feature_dim + 1];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut mlp = Mlp::new(&sizes, seed);
        mlp.quantize_to_f32();
        Self { mlp }
    }

    fn input(&self, obs: &PolicyObservation<T>, omega: T) -> DVector<T> {
        let f = obs.features();
        let mut v = Vec::with_capacity(f.len() + 1);
        v.extend(f.iter().copied());
        v.push(omega);
        DVector::from_vec(v)
    }

    pub fn value(&self, obs: &PolicyObservation<T>, omega: T) -> T {
        self.mlp.forward(&self.input(obs, omega))[0]
    }

    /// Value and its derivative with respect to the command input.
    pub fn value_and_domega(&self, obs: &PolicyObservation<T>, omega: T) -> (T, T) {
        let x = self.input(obs, omega);
        let (out, cache) = self.mlp.forward_cached(&x);
        let mut scratch = vec![T::zero(); self.mlp.param_count()];
        let din = self
            .mlp
            .backward(&cache, &DVector::from_vec(vec![T::one()]), &mut scratch);
        (out[0], din[din.len() - 1])
    }

    /// One squared-error regression step over a batch; returns the mean
    /// loss before the step.
    pub fn regress(
        &mut self,
        batch: &[(&PolicyObservation<T>, T, T)], // (obs, omega, target)
        opt: &mut Adam<T>,
        lr: T,
        grad_clip: T,
    ) -> T {
        let mut grad = vec![T::zero(); self.mlp.param_count()];
        let mut loss = T::zero();
        let inv = T::one() / T::of(batch.len().max(1) as f64);
        for (obs, omega, target) in batch {
            let x = self.input(obs, *omega);
            let (out, cache) = self.mlp.forward_cached(&x);
            let err = out[0] - *target;
            loss += err * err * inv;
            self.mlp.backward(
                &cache,
                &DVector::from_vec(vec![T::of(2.0) * err * inv]),
                &mut grad,
            );
        }
        crate::costnet::clip_global_norm(&mut grad, grad_clip);
        let mut params = self.mlp.flat_params();
        opt.step(&mut params, &grad, lr);
        self.mlp.set_flat_params(&params);
        self.mlp.quantize_to_f32();
        loss
    }
}
