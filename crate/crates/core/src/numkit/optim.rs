//! Adaptive-moment (Adam) optimizer over [`MlpParams`].

use ndarray::Zip;

use super::mlp::{MlpGrads, MlpParams};
use crate::error::{Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamConfig<T> {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr: T::lit(lr),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    /// Default for critic heads.
    pub fn critic() -> Self {
        Self::with_lr(1e-3)
    }

    /// Default for actor groups.
    pub fn actor() -> Self {
        Self::with_lr(1e-4)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > T::zero()
            && self.beta1 >= T::zero()
            && self.beta1 < T::one()
            && self.beta2 >= T::zero()
            && self.beta2 < T::one()
            && self.eps > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer hyperparameters {self:?}")))
        }
    }
}

/// Moment accumulators for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState<T> {
    pub config: AdamConfig<T>,
    pub first: MlpGrads<T>,
    pub second: MlpGrads<T>,
    pub step: u64,
}

impl<T: Scalar> OptState<T> {
    pub fn new(params: &MlpParams<T>, config: AdamConfig<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first: MlpGrads::zeros_like(params),
            second: MlpGrads::zeros_like(params),
            step: 0,
        })
    }

    /// Applies one descent step. Non-finite gradients are rejected before any
    /// state is touched.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &MlpGrads<T>) -> Result<()> {
        if !grads.matches(params) || !self.first.matches(params) {
            return Err(Error::Shape("gradient/optimizer shapes do not match parameters".into()));
        }
        if !grads.is_finite() {
            let bad = grads.flatten().iter().filter(|v| !v.is_finite()).count();
            return Err(Error::NonFinite(format!(
                "{bad} non-finite gradient entries at optimizer step {}",
                self.step
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = T::one() - beta1.powi(t);
        let c2 = T::one() - beta2.powi(t);
        let (one_b1, one_b2) = (T::one() - beta1, T::one() - beta2);
        let update = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = beta1 * *m + one_b1 * g;
            *v = beta2 * *v + one_b2 * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (j, layer) in params.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[j];
            let (mw, mb) = &mut self.first.layers[j];
            let (vw, vb) = &mut self.second.layers[j];
            Zip::from(&mut layer.weight)
                .and(mw)
                .and(vw)
                .and(gw)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(mb)
                .and(vb)
                .and(gb)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}
