//! Reverse-mode differentiation of the summed loss.

use ndarray::{Array2, Axis};

use super::loss::{logit_loss_and_grad, LossKind};
use super::{NetError, NetworkParams};
use crate::data::LabeledDataset;

/// Loss and full parameter gradient at `params`, returned as a
/// parameter-shaped [`NetworkParams`].
pub fn gradient(params: &NetworkParams, ds: &LabeledDataset, kind: LossKind) -> Result<(f64, NetworkParams), NetError> {
    kind.check(params.output_dim(), ds.class_count())?;
    gradient_on(params, ds.points(), ds.labels(), kind)
}

pub(crate) fn gradient_on(
    params: &NetworkParams,
    inputs: &Array2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, NetworkParams), NetError> {
    if inputs.nrows() != params.input_dim() {
        return Err(NetError::Shape(format!(
            "input dimension {} but network expects {}",
            inputs.nrows(),
            params.input_dim()
        )));
    }
    // Forward pass, keeping every layer's input and pre-activation.
    let mut layer_inputs = Vec::with_capacity(params.hidden.len());
    let mut pre_acts = Vec::with_capacity(params.hidden.len());
    let mut a = inputs.to_owned();
    for layer in &params.hidden {
        let z = layer.pre_activation(&a);
        let act = layer.activation;
        let next = z.mapv(|u| act.apply(u));
        layer_inputs.push(a);
        pre_acts.push(z);
        a = next;
    }
    let features = a;
    let logits = params.logits_from_features(&features);
    let (loss, dlogits) = logit_loss_and_grad(&logits, labels, kind, true)?;
    let dlogits = dlogits.expect("gradient requested");

    let mut grad = params.zeros_like();
    grad.last_weight = dlogits.dot(&features.t());
    if let Some(b) = grad.last_bias.as_mut() {
        *b = dlogits.sum_axis(Axis(1));
    }

    let mut upstream = params.last_weight.t().dot(&dlogits);
    for (l, layer) in params.hidden.iter().enumerate().rev() {
        let act = layer.activation;
        let mut dz = upstream;
        dz.zip_mut_with(&pre_acts[l], |g, &u| *g *= act.derivative(u));
        grad.hidden[l].weight = dz.dot(&layer_inputs[l].t());
        grad.hidden[l].bias = dz.sum_axis(Axis(1));
        upstream = if l > 0 { layer.weight.t().dot(&dz) } else { Array2::zeros((0, 0)) };
    }

    if grad.flatten().iter().any(|v| !v.is_finite()) {
        return Err(NetError::NumericalOverflow("non-finite gradient".into()));
    }
    Ok((loss, grad))
}

/// Loss and gradient with respect to the last layer only, for a fixed
/// feature matrix. Returns `(loss, d/dW, d/db)`.
pub fn last_layer_gradient(
    params: &NetworkParams,
    features: &Array2<f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, Array2<f64>, Option<ndarray::Array1<f64>>), NetError> {
    if features.nrows() != params.feature_dim() {
        return Err(NetError::Shape(format!(
            "feature dimension {} but last layer expects {}",
            features.nrows(),
            params.feature_dim()
        )));
    }
    let logits = params.logits_from_features(features);
    let (loss, dlogits) = logit_loss_and_grad(&logits, labels, kind, true)?;
    let dlogits = dlogits.expect("gradient requested");
    let dw = dlogits.dot(&features.t());
    let db = params.last_bias.as_ref().map(|_| dlogits.sum_axis(Axis(1)));
    Ok((loss, dw, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label_sign;
    use crate::net::{Architecture, DenseLayer};
    use ndarray::{array, Array1};

    fn toy() -> LabeledDataset {
        LabeledDataset::new(array![[0.5, -1.0, 2.0], [1.0, 0.3, -0.7]], vec![1, 2, 1], 2).unwrap()
    }

    #[test]
    fn zero_network_exponential_gradient() {
        // With all-zero parameters every margin is zero, so each e^{-u} factor is 1
        // and the last-layer gradient is -sum_n y_n delta_n.
        let ds = toy();
        let mut p = NetworkParams::init(&Architecture::two_stage(2, 3, 2, 1, false), 1);
        p.scale(0.0);
        // give the feature layer a non-zero bias so delta is non-trivial
        p.hidden[1].bias = array![0.25, -1.5];
        let mut q = p.clone();
        q.last_weight.fill(0.0);
        let (_, g) = gradient(&q, &ds, LossKind::Exponential).unwrap();
        let feats = q.feature_matrix(ds.points()).unwrap();
        let mut expect = Array1::<f64>::zeros(2);
        for (n, &y) in ds.labels().iter().enumerate() {
            expect.scaled_add(-label_sign(y), &feats.column(n));
        }
        for i in 0..2 {
            assert!((g.last_weight[[0, i]] - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_gradient_rows() {
        let ds = LabeledDataset::new(array![[0.5, -1.0, 2.0, 0.1], [1.0, 0.3, -0.7, 0.2]], vec![1, 2, 3, 3], 3).unwrap();
        let p = NetworkParams::init(&Architecture::two_stage(2, 4, 2, 3, true), 5);
        let (_, g) = gradient(&p, &ds, LossKind::CrossEntropy).unwrap();
        let feats = p.feature_matrix(ds.points()).unwrap();
        let logits = p.logits_from_features(&feats);
        for k in 0..3 {
            let mut expect = Array1::<f64>::zeros(2);
            for n in 0..ds.len() {
                let col = logits.column(n);
                let s: f64 = col.iter().map(|v| v.exp()).sum();
                let p_k = col[k].exp() / s;
                let ind = if ds.labels()[n] == k + 1 { 1.0 } else { 0.0 };
                expect.scaled_add(p_k - ind, &feats.column(n));
            }
            for i in 0..2 {
                assert!((g.last_weight[[k, i]] - expect[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn last_layer_gradient_matches_full_backprop() {
        let ds = toy();
        let p = NetworkParams::init(&Architecture::two_stage(2, 6, 2, 1, true), 8);
        let (l1, g) = gradient(&p, &ds, LossKind::Logistic).unwrap();
        let feats = p.feature_matrix(ds.points()).unwrap();
        let (l2, dw, db) = last_layer_gradient(&p, &feats, ds.labels(), LossKind::Logistic).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g.last_weight, dw);
        assert_eq!(g.last_bias, db);
    }

    #[test]
    fn relu_kink_uses_zero_subgradient() {
        let ds = LabeledDataset::new(array![[0.0, 1.0]], vec![1, 2], 2).unwrap();
        let p = NetworkParams {
            hidden: vec![DenseLayer {
                weight: array![[1.0]],
                bias: array![0.0],
                activation: crate::net::Activation::Relu,
            }],
            last_weight: array![[1.0]],
            last_bias: None,
        };
        let (_, g) = gradient(&p, &ds, LossKind::Exponential).unwrap();
        // sample 0 sits exactly on the kink and contributes nothing to the hidden weight
        // sample 1: dL/dz = -y e^{-y z} with y=-1, z=1 -> e^{1}; d/dw1 = e * x = e
        assert!((g.hidden[0].weight[[0, 0]] - 1.0_f64.exp()).abs() < 1e-12);
    }
}
