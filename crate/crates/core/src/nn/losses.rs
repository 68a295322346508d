use hullscan_tensor::{Float, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{Error, Result};

pub const COSSIM_EPS: f64 = 1e-4;
pub const PROB_CLAMP: f64 = 1e-7;

fn same_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: lengths {a} and {b} differ")))
    }
}

/// Masked L1 distance between predicted and target curves. Masked-out
/// positions contribute nothing, whatever their values.
pub fn range_aware_loss(pred: &[f64], target: &[f64], mask: &[bool]) -> Result<f64> {
    same_len("range_aware_loss pred/target", pred.len(), target.len())?;
    same_len("range_aware_loss pred/mask", pred.len(), mask.len())?;
    Ok(pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((p, t), _)| (t - p).abs())
        .sum())
}

/// Differentiable form of [`range_aware_loss`] summed over every element.
/// Targets under a zero mask are ignored even if non-finite.
pub fn range_aware_loss_var<T: Float>(
    pred: &Var<T>,
    target: &Tensor<T>,
    mask: &Tensor<T>,
) -> Result<Var<T>> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::Shape(format!(
            "range_aware_loss: pred {:?}, target {:?}, mask {:?}",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let clean = target.zip_map(mask, |t, m| if m != T::zero() { t } else { T::zero() });
    Ok(pred.sub(&Var::constant(clean)).abs().mul_const(mask).sum())
}

/// Negated binary log-likelihood of label `l` under probability `p`.
pub fn bce(l: bool, p: f64, clamp: f64) -> f64 {
    let p = p.clamp(clamp, 1.0 - clamp);
    if l {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Elementwise [`bce`] for probabilities `p` and 0/1 `labels` of equal shape.
pub fn bce_var<T: Float>(p: &Var<T>, labels: &Tensor<T>, clamp: f64) -> Var<T> {
    let p = p.clamp(T::of(clamp), T::of(1.0 - clamp));
    let pos = p.ln().mul_const(labels);
    let neg = p
        .rsub_scalar(T::one())
        .ln()
        .mul_const(&labels.map(|l| T::one() - l));
    pos.add(&neg).neg()
}

/// `log(1 + e^x)` without overflow.
fn softplus<T: Float>(x: &Var<T>) -> Var<T> {
    x.relu().add(&x.abs().neg().exp().add_scalar(T::one()).ln())
}

/// Mean per-pixel sigmoid cross-entropy on logits; positives weighted by
/// `pos_weight`.
pub fn bce_with_logits<T: Float>(logits: &Var<T>, targets: &Tensor<T>, pos_weight: f64) -> Var<T> {
    assert_eq!(
        logits.shape(),
        targets.shape(),
        "bce_with_logits shape mismatch"
    );
    let sp = softplus(logits);
    // softplus(-x) = softplus(x) - x
    let pos = sp
        .sub(logits)
        .mul_const(&targets.map(|t| t * T::of(pos_weight)));
    let neg = sp.mul_const(&targets.map(|t| T::one() - t));
    pos.add(&neg).mean()
}

/// Mean negative log-likelihood of `classes` under row-wise softmax.
pub fn softmax_nll<T: Float>(logits: &Var<T>, classes: &[usize]) -> Var<T> {
    let (n, k) = (logits.dim(0), logits.dim(1));
    assert_eq!(classes.len(), n);
    let mut onehot = Tensor::zeros(&[n, k]);
    for (i, &c) in classes.iter().enumerate() {
        onehot.set(&[i, c], T::one());
    }
    logits
        .log_softmax()
        .mul_const(&onehot)
        .sum()
        .mul_scalar(T::of(-1.0 / n as f64))
}

pub fn cosine_similarity(x: &[f64], y: &[f64], eps: f64) -> Result<f64> {
    same_len("cosine_similarity", x.len(), y.len())?;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(dot / (nx * ny).max(eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClsLossConfig {
    /// Per-class weights in corrosion, fouling, delamination order.
    pub weights: [f64; 3],
    pub lambda: f64,
    pub eps: f64,
    pub prob_clamp: f64,
}

impl Default for ClsLossConfig {
    fn default() -> Self {
        Self {
            weights: [1.0, 2.0, 4.0],
            lambda: 1.0,
            eps: COSSIM_EPS,
            prob_clamp: PROB_CLAMP,
        }
    }
}

impl ClsLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::validation(
                "loss.weights",
                "weights must be positive",
            ));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::validation(
                "loss.lambda",
                "lambda must be non-negative",
            ));
        }
        if !(self.eps > 0.0) || !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::validation(
                "loss.eps",
                "eps and prob_clamp must be small positive values",
            ));
        }
        Ok(())
    }
}

/// Weighted BCE over the three classes plus `lambda * |cos(F_G, F_D)|`.
pub fn classification_loss(
    labels: Labels,
    p: [f64; 3],
    f_g: &[f64],
    f_d: &[f64],
    cfg: &ClsLossConfig,
) -> Result<f64> {
    let cos = cosine_similarity(f_g, f_d, cfg.eps)?;
    let bces: f64 = (0..3)
        .map(|i| cfg.weights[i] * bce(labels[i], p[i], cfg.prob_clamp))
        .sum();
    Ok(bces + cfg.lambda * cos.abs())
}

/// Batch mean of [`classification_loss`]. Without `f_d` the regularizer is
/// dropped. Also returns the per-sample `|cos|` values when computed.
pub fn classification_loss_var<T: Float>(
    p: &Var<T>,
    labels: &Tensor<T>,
    f_g: &Var<T>,
    f_d: Option<&Var<T>>,
    cfg: &ClsLossConfig,
) -> (Var<T>, Option<Vec<f64>>) {
    let n = p.dim(0);
    let w: Vec<T> = (0..n).flat_map(|_| cfg.weights.map(T::of)).collect();
    let weighted = bce_var(p, labels, cfg.prob_clamp).mul_const(&Tensor::from_vec(&[n, 3], w));
    let mut total = weighted.sum();
    let mut cos_abs = None;
    if let Some(f_d) = f_d {
        let c = f_g.cosine_similarity(f_d, cfg.eps).abs();
        cos_abs = Some(c.value().to_f64_vec());
        if cfg.lambda > 0.0 {
            total = total.add(&c.sum().mul_scalar(T::of(cfg.lambda)));
        }
    }
    (total.mul_scalar(T::of(1.0 / n as f64)), cos_abs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hullscan_tensor::gradcheck::{grad_check, GradCheckOptions};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn range_aware_hand_values() {
        assert_eq!(
            range_aware_loss(&[0.5, 0.9], &[0.3, 0.1], &[true, false]).unwrap(),
            0.5 - 0.3
        );
        assert_eq!(
            range_aware_loss(&[0.5, 0.9], &[0.3, 0.1], &[false, false]).unwrap(),
            0.0
        );
        assert_eq!(
            range_aware_loss(&[0.2, 0.4], &[0.2, 0.4], &[true, true]).unwrap(),
            0.0
        );
        assert!(range_aware_loss(&[0.1], &[0.1, 0.2], &[true]).is_err());
    }

    #[test]
    fn range_aware_var_ignores_masked_positions() {
        let pred = Var::leaf(Tensor::<f64>::from_f64(&[1, 2, 2], &[0.5, 0.1, 0.9, 0.7]));
        let target = Tensor::from_f64(&[1, 2, 2], &[0.3, f64::NAN, 0.2, 0.1]);
        let mask = Tensor::from_f64(&[1, 2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let l = range_aware_loss_var(&pred, &target, &mask).unwrap();
        assert!((l.value().item() - 0.2).abs() < 1e-12);
        let g = l.backward().wrt(&pred);
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
        let bad = Tensor::zeros(&[1, 2, 3]);
        assert!(range_aware_loss_var(&pred, &bad, &bad).is_err());
    }

    #[test]
    fn range_aware_grad_check() {
        let target = Tensor::from_f64(&[2, 4], &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]);
        let mask = Tensor::from_f64(&[2, 4], &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
        let x = Tensor::from_f64(&[2, 4], &[0.3, -0.4, 0.8, 0.1, 1.2, 0.05, -0.2, 0.45]);
        let r = grad_check(
            |v| range_aware_loss_var(&v.sigmoid(), &target, &mask).unwrap(),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn bce_hand_values() {
        assert!(bce(true, 1.0, PROB_CLAMP) < 1e-6);
        assert!((bce(true, 0.5, PROB_CLAMP) - LN_2).abs() < 1e-12);
        assert!((bce(false, 0.5, PROB_CLAMP) - LN_2).abs() < 1e-12);
        assert!(bce(true, 0.0, PROB_CLAMP).is_finite());
    }

    #[test]
    fn classification_loss_hand_values() {
        let cfg = ClsLossConfig::default();
        let l = classification_loss([true; 3], [0.5; 3], &[1.0, 0.0], &[0.0, 1.0], &cfg).unwrap();
        assert!((l - 7.0 * LN_2).abs() < 1e-9);
        assert!((l - 4.8520).abs() < 1e-4);
        let f = [0.3, -1.2, 2.0];
        let l = classification_loss([true, false, true], [1.0, 0.0, 1.0], &f, &f, &cfg).unwrap();
        assert!((l - 1.0).abs() < 1e-5);
        let pure = ClsLossConfig { lambda: 0.0, ..cfg };
        let l = classification_loss([true, false, false], [0.5; 3], &f, &f, &pure).unwrap();
        assert!((l - 7.0 * LN_2).abs() < 1e-9);
    }

    #[test]
    fn var_loss_matches_scalar() {
        let cfg = ClsLossConfig::default();
        let p = Var::constant(Tensor::<f64>::from_f64(
            &[2, 3],
            &[0.7, 0.2, 0.4, 0.1, 0.95, 0.5],
        ));
        let labels = Tensor::from_f64(&[2, 3], &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let fg = Var::constant(Tensor::from_f64(&[2, 2], &[1.0, 2.0, -1.0, 0.5]));
        let fd = Var::constant(Tensor::from_f64(&[2, 2], &[2.0, -1.0, 3.0, 0.2]));
        let (l, cos) = classification_loss_var(&p, &labels, &fg, Some(&fd), &cfg);
        let a = classification_loss(
            [true, false, true],
            [0.7, 0.2, 0.4],
            &[1.0, 2.0],
            &[2.0, -1.0],
            &cfg,
        )
        .unwrap();
        let b = classification_loss(
            [false, true, false],
            [0.1, 0.95, 0.5],
            &[-1.0, 0.5],
            &[3.0, 0.2],
            &cfg,
        )
        .unwrap();
        assert!((l.value().item() - (a + b) / 2.0).abs() < 1e-12);
        assert_eq!(cos.unwrap().len(), 2);
    }

    #[test]
    fn classification_loss_grad_checks() {
        let cfg = ClsLossConfig::default();
        let labels = Tensor::from_f64(&[2, 3], &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let fg = Tensor::from_f64(&[2, 4], &[0.3, -0.2, 0.9, 0.4, -0.5, 0.1, 0.2, 0.8]);
        let fd = Tensor::from_f64(&[2, 4], &[0.6, 0.3, -0.4, 0.2, 0.1, 0.7, -0.3, 0.5]);
        let logits = Tensor::from_f64(&[2, 3], &[0.2, -0.7, 1.1, -0.3, 0.4, 0.9]);
        let wrt_p = grad_check(
            |v| {
                let (l, _) = classification_loss_var(
                    &v.sigmoid(),
                    &labels,
                    &Var::constant(fg.clone()),
                    Some(&Var::constant(fd.clone())),
                    &cfg,
                );
                l
            },
            &logits,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(wrt_p.passed, "{wrt_p:?}");
        let p = Var::constant(Tensor::from_f64(&[2, 3], &[0.6, 0.3, 0.8, 0.2, 0.7, 0.55]));
        let wrt_fg = grad_check(
            |v| classification_loss_var(&p, &labels, v, Some(&Var::constant(fd.clone())), &cfg).0,
            &fg,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(wrt_fg.passed, "{wrt_fg:?}");
        let wrt_fd = grad_check(
            |v| classification_loss_var(&p, &labels, &Var::constant(fg.clone()), Some(v), &cfg).0,
            &fd,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(wrt_fd.passed, "{wrt_fd:?}");
    }

    #[test]
    fn logits_bce_matches_probability_bce() {
        let x = Tensor::<f64>::from_f64(&[1, 4], &[-3.0, -0.2, 0.5, 4.0]);
        let t = Tensor::from_f64(&[1, 4], &[0.0, 1.0, 1.0, 0.0]);
        let got = bce_with_logits(&Var::constant(x.clone()), &t, 1.0)
            .value()
            .item();
        let want: f64 = x
            .data()
            .iter()
            .zip(t.data())
            .map(|(&v, &l)| bce(l == 1.0, 1.0 / (1.0 + (-v).exp()), 1e-15))
            .sum::<f64>()
            / 4.0;
        assert!((got - want).abs() < 1e-12);
        let r = grad_check(
            |v| bce_with_logits(v, &t, 3.0),
            &x,
            GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.passed);
    }

    #[test]
    fn softmax_nll_uniform() {
        let l = softmax_nll(&Var::constant(Tensor::<f64>::zeros(&[2, 3])), &[0, 2]);
        assert!((l.value().item() - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        assert!(
            (cosine_similarity(&[3.0, 4.0], &[4.0, 3.0], COSSIM_EPS).unwrap() - 0.96).abs() < 1e-12
        );
        assert_eq!(
            cosine_similarity(&[1.0, 0.0], &[0.0, 1.0], COSSIM_EPS).unwrap(),
            0.0
        );
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0], COSSIM_EPS).is_err());
        // Below eps the denominator is clamped.
        assert!(
            (cosine_similarity(&[1e-3, 0.0], &[1e-3, 0.0], COSSIM_EPS).unwrap() - 0.01).abs()
                < 1e-12
        );
    }

    proptest! {
        #[test]
        fn loss_never_negative(
            l in proptest::array::uniform3(any::<bool>()),
            p in proptest::array::uniform3(0.0f64..=1.0),
            fg in proptest::collection::vec(-5.0f64..5.0, 4),
            fd in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let v = classification_loss(l, p, &fg, &fd, &ClsLossConfig::default()).unwrap();
            prop_assert!(v >= 0.0);
        }

        #[test]
        fn masked_perturbation_is_invisible(
            pred in proptest::collection::vec(0.0f64..1.0, 8),
            target in proptest::collection::vec(0.0f64..1.0, 8),
            mask in proptest::collection::vec(any::<bool>(), 8),
            k in 0usize..8,
            delta in -1.0f64..1.0,
        ) {
            let base = range_aware_loss(&pred, &target, &mask).unwrap();
            let mut moved = pred.clone();
            moved[k] += delta;
            let after = range_aware_loss(&moved, &target, &mask).unwrap();
            if !mask[k] {
                prop_assert_eq!(base, after);
            }
            prop_assert!(base >= 0.0);
        }
    }
}
