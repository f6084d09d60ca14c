use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(z − y)²` on a single real output.
    Squared,
    /// `ln(1 + e^z) − y·z` with `y ∈ {0, 1}`.
    Logistic,
    /// `logsumexp(z) − z_y` with `y ∈ [0, C)`.
    SoftmaxCrossEntropy,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Squared => "squared",
            Self::Logistic => "logistic",
            Self::SoftmaxCrossEntropy => "softmax_cross_entropy",
        }
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Self::Squared)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub classes: usize,
}

impl LossSpec {
    pub fn new(kind: LossKind, classes: usize) -> Result<Self> {
        let spec = Self { kind, classes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared() -> Self {
        Self { kind: LossKind::Squared, classes: 1 }
    }

    pub fn logistic() -> Self {
        Self { kind: LossKind::Logistic, classes: 1 }
    }

    pub fn softmax(classes: usize) -> Result<Self> {
        Self::new(LossKind::SoftmaxCrossEntropy, classes)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            LossKind::Squared | LossKind::Logistic if self.classes != 1 => {
                bail!(Argument, "{} loss has one output, got C = {}", self.kind.name(), self.classes)
            }
            LossKind::SoftmaxCrossEntropy if self.classes < 2 => {
                bail!(Argument, "softmax cross-entropy needs C >= 2, got {}", self.classes)
            }
            _ => Ok(()),
        }
    }

    pub fn check_label(&self, y: f64) -> bool {
        match self.kind {
            LossKind::Squared => y.is_finite(),
            LossKind::Logistic => y == 0.0 || y == 1.0,
            LossKind::SoftmaxCrossEntropy => y >= 0.0 && y < self.classes as f64 && libm::trunc(y) == y,
        }
    }

    /// Loss value; writes `∂loss/∂z` into `grad`.
    pub fn value_and_grad(&self, z: &[f64], y: f64, grad: &mut [f64]) -> f64 {
        match self.kind {
            LossKind::Squared => {
                let r = z[0] - y;
                grad[0] = 2.0 * r;
                r * r
            }
            LossKind::Logistic => {
                grad[0] = sigmoid(z[0]) - y;
                softplus(z[0]) - y * z[0]
            }
            LossKind::SoftmaxCrossEntropy => {
                let lse = log_sum_exp(z);
                let label = y as usize;
                for (c, (g, &zc)) in grad.iter_mut().zip(z).enumerate() {
                    *g = libm::exp(zc - lse) - if c == label { 1.0 } else { 0.0 };
                }
                lse - z[label]
            }
        }
    }

    pub fn value(&self, z: &[f64], y: f64) -> f64 {
        match self.kind {
            LossKind::Squared => (z[0] - y) * (z[0] - y),
            LossKind::Logistic => softplus(z[0]) - y * z[0],
            LossKind::SoftmaxCrossEntropy => log_sum_exp(z) - z[y as usize],
        }
    }

    /// Predicted class: sign for logistic, argmax (lowest index on ties) for softmax.
    pub fn predict(&self, z: &[f64]) -> f64 {
        match self.kind {
            LossKind::Squared => z[0],
            LossKind::Logistic => {
                if z[0] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::SoftmaxCrossEntropy => argmax(z) as f64,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + libm::log(z.iter().map(|&v| libm::exp(v - m)).sum::<f64>())
}

/// First index of the maximum.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_c() {
        for c in 2..6 {
            let spec = LossSpec::softmax(c).unwrap();
            let z = alloc::vec![0.3; c];
            assert!((spec.value(&z, 1.0) - libm::log(c as f64)).abs() < 1e-14);
        }
    }

    #[test]
    fn logistic_matches_direct_formula() {
        let spec = LossSpec::logistic();
        for &z in &[-40.0, -2.0, 0.0, 0.7, 35.0] {
            for y in [0.0, 1.0] {
                let p = 1.0 / (1.0 + libm::exp(-z));
                let direct = -(y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p));
                if direct.is_finite() && z.abs() < 30.0 {
                    assert!((spec.value(&[z], y) - direct).abs() < 1e-12);
                }
            }
        }
        // no overflow in the tails
        assert!(spec.value(&[800.0], 0.0).is_finite());
        assert!(spec.value(&[-800.0], 1.0).is_finite());
    }

    #[test]
    fn spec_validation_and_labels() {
        assert!(LossSpec::softmax(1).is_err());
        assert!(LossSpec::new(LossKind::Logistic, 2).is_err());
        let s = LossSpec::softmax(3).unwrap();
        assert!(s.check_label(2.0) && !s.check_label(3.0) && !s.check_label(0.5));
        assert!(!LossSpec::logistic().check_label(0.5));
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
