use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::Tensor;

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

/// Gradients keyed by parameter name.
pub type ParamGrads = BTreeMap<String, Vec<f64>>;

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Contract(format!("duplicate parameter {name}")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators, one pair per parameter in [`ParamSet`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect::<Vec<_>>();
        OptimizerState {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn optimizer_step(params: &mut ParamSet, grads: &ParamGrads, state: &mut OptimizerState) -> Result<()> {
    if state.first.len() != params.len() {
        return Err(Error::Contract(format!(
            "optimizer state tracks {} tensors, parameter set has {}",
            state.first.len(),
            params.len()
        )));
    }
    for (i, (name, t)) in params.iter().enumerate() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing gradient for parameter {name}")))?;
        if g.len() != t.numel() || state.first[i].len() != t.numel() {
            return Err(Error::Contract(format!(
                "parameter {name} has {} values, gradient {} and state {}",
                t.numel(),
                g.len(),
                state.first[i].len()
            )));
        }
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, (name, param)) in params.iter_mut().enumerate() {
        let g = &grads[name];
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (((p, &gi), mi), vi) in param.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(value)).unwrap();
        p
    }

    fn grads(value: f64) -> ParamGrads {
        BTreeMap::from([("w".to_string(), vec![value])])
    }

    #[test]
    fn zero_gradient_leaves_params_alone() {
        let mut p = single(0.7);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        optimizer_step(&mut p, &grads(0.0), &mut s).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[0.7]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single(0.0);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        optimizer_step(&mut p, &grads(1.0), &mut s).unwrap();
        // m_hat = v_hat = 1 after bias correction: delta = lr / (1 + eps).
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.get("w").unwrap().data()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn step_count_increments_and_is_deterministic() {
        let run = || {
            let mut p = single(1.0);
            let mut s = OptimizerState::new(&p, AdamConfig::default());
            for _ in 0..2 {
                optimizer_step(&mut p, &grads(0.3), &mut s).unwrap();
            }
            (p, s)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(sa.step, 2);
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut p = single(1.0);
        let mut s = OptimizerState::new(&p, AdamConfig::default());
        let err = optimizer_step(&mut p, &ParamGrads::new(), &mut s).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        assert_eq!(s.step, 0);
    }
}
