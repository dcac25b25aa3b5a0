use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Affine map `z = W x + b`, with `W` stored as (outputs × inputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Linear { weight: Array2::zeros((outputs, inputs)), bias: Array1::zeros(outputs) }
    }

    pub fn random<R: Rng>(outputs: usize, inputs: usize, std: f64, rng: &mut R) -> Self {
        Linear {
            weight: Array2::from_shape_fn((outputs, inputs), |_| std * rng.sample::<f64, _>(StandardNormal)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Accumulates `dW += g xᵀ`, `db += g` and returns `Wᵀ g`.
    pub(crate) fn backward(&self, x: ArrayView1<'_, f64>, g: &Array1<f64>, grad: &mut Linear) -> Array1<f64> {
        for (i, &gi) in g.iter().enumerate() {
            if gi != 0.0 {
                grad.weight.row_mut(i).scaled_add(gi, &x);
            }
        }
        grad.bias += g;
        self.weight.t().dot(g)
    }
}

/// All trainable parameters of the joint model. Gradients and optimizer
/// moments use the same layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// Width embeddings, one row per span length (row `l - 1` for length `l`).
    pub widths: Array2<f64>,
    /// `|entity types| + 1` logits; class 0 is "no entity".
    pub entity: Linear,
    pub attribute: Linear,
    pub relation: Linear,
}

impl HeadParams {
    pub fn zeros_like(other: &HeadParams) -> HeadParams {
        HeadParams {
            widths: Array2::zeros(other.widths.raw_dim()),
            entity: Linear::zeros(other.entity.outputs(), other.entity.inputs()),
            attribute: Linear::zeros(other.attribute.outputs(), other.attribute.inputs()),
            relation: Linear::zeros(other.relation.outputs(), other.relation.inputs()),
        }
    }

    /// Every scalar parameter, in a fixed order.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.widths
            .iter()
            .chain(self.entity.weight.iter())
            .chain(self.entity.bias.iter())
            .chain(self.attribute.weight.iter())
            .chain(self.attribute.bias.iter())
            .chain(self.relation.weight.iter())
            .chain(self.relation.bias.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.widths
            .iter_mut()
            .chain(self.entity.weight.iter_mut())
            .chain(self.entity.bias.iter_mut())
            .chain(self.attribute.weight.iter_mut())
            .chain(self.attribute.bias.iter_mut())
            .chain(self.relation.weight.iter_mut())
            .chain(self.relation.bias.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.values().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_shape(&self, other: &HeadParams) -> bool {
        self.widths.dim() == other.widths.dim()
            && self.entity.weight.dim() == other.entity.weight.dim()
            && self.attribute.weight.dim() == other.attribute.weight.dim()
            && self.relation.weight.dim() == other.relation.weight.dim()
            && self.entity.bias.len() == other.entity.bias.len()
            && self.attribute.bias.len() == other.attribute.bias.len()
            && self.relation.bias.len() == other.relation.bias.len()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: HeadParams,
    second: HeadParams,
}

impl Adam {
    pub fn new(params: &HeadParams, learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: HeadParams::zeros_like(params),
            second: HeadParams::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut HeadParams, grads: &HeadParams) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        for (((p, &g), m), v) in
            params.values_mut().zip(grads.values()).zip(self.first.values_mut()).zip(self.second.values_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_backward() {
        let lin = Linear { weight: array![[1.0, 2.0], [3.0, 4.0], [0.5, -1.0]], bias: array![0.0, 1.0, 2.0] };
        let x = array![1.0, -1.0];
        assert_eq!(lin.forward(x.view()), array![-1.0, 0.0, 3.5]);
        let mut grad = Linear::zeros(3, 2);
        let g = array![1.0, 0.0, 2.0];
        let dx = lin.backward(x.view(), &g, &mut grad);
        assert_eq!(dx, array![2.0, 0.0]);
        assert_eq!(grad.weight, array![[1.0, -1.0], [0.0, 0.0], [2.0, -2.0]]);
        assert_eq!(grad.bias, g);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = HeadParams {
            widths: Array2::zeros((1, 1)),
            entity: Linear::zeros(1, 1),
            attribute: Linear::zeros(1, 1),
            relation: Linear::zeros(1, 1),
        };
        let mut g = HeadParams::zeros_like(&p);
        g.entity.bias[0] = 3.0;
        g.relation.weight[[0, 0]] = -0.1;
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &g);
        assert!((p.entity.bias[0] + 0.01).abs() < 1e-6);
        assert!((p.relation.weight[[0, 0]] - 0.01).abs() < 1e-6);
        assert_eq!(p.widths[[0, 0]], 0.0);
        assert_eq!(p.len(), 7);
    }
}
