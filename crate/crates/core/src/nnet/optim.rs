use super::Tensor4;
use crate::{Error, Real, Result};

/// Mean Charbonnier penalty `sqrt(d² + eps²)` and its gradient with respect
/// to `pred`.
pub fn charbonnier_loss<T: Real>(pred: &Tensor4<T>, target: &Tensor4<T>, eps: T) -> Result<(T, Tensor4<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "charbonnier: prediction {:?}, target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (loss, grad) = charbonnier_slices(pred.data(), target.data(), eps)?;
    Ok((loss, Tensor4::new(pred.shape(), grad)?))
}

pub fn charbonnier_slices<T: Real>(pred: &[T], target: &[T], eps: T) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "charbonnier: {} vs {} values",
            pred.len(),
            target.len()
        )));
    }
    if !(eps > T::zero()) {
        return Err(Error::invalid("charbonnier eps must be positive"));
    }
    let count = T::from_usize_lossy(pred.len().max(1));
    let eps2 = eps * eps;
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            let r = (d * d + eps2).sqrt();
            loss += r;
            d / r / count
        })
        .collect();
    Ok((loss / count, grad))
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: T) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update `params` in place; moment buffers are sized on the first call.
    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::shape("adam: parameter and gradient layouts differ"));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::shape("adam: layout changed between steps"));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .into_iter()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
