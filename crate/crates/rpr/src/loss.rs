//! Instance invariance/spreading objective: a softmax over batch
//! instances pulls each augmentation onto its own instance and pushes it
//! off every other one.
//!
//! With `P(i|x_j) = exp(f_i . fhat_j / tau) / sum_k exp(f_k . fhat_j / tau)`,
//! the loss is
//!
//! ```text
//! L = ( -sum_i log P(i|x_i) - sum_i sum_{j!=i} log(1 - P(i|x_j)) ) / B
//! ```
//!
//! Evaluation stays in the log domain throughout so small temperatures
//! do not overflow.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Softmax temperature, > 0.
    pub temperature: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { temperature: 0.1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::Config("loss temperature must be > 0".into()));
        }
        Ok(())
    }
}

fn validate_inputs(instances: ArrayView2<f64>, augmentations: ArrayView2<f64>) -> Result<usize> {
    let (b, d) = instances.dim();
    if b == 0 {
        return Err(Error::Argument("loss requires at least one instance".into()));
    }
    if augmentations.dim() != (b, d) {
        return Err(Error::Argument(format!(
            "shape mismatch: instances {:?} vs augmentations {:?}",
            instances.dim(),
            augmentations.dim()
        )));
    }
    for (name, m) in [("instance", instances), ("augmentation", augmentations)] {
        for (i, row) in m.rows().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::Argument(format!(
                    "{name} row {i} has norm {norm}, expected unit"
                )));
            }
        }
    }
    Ok(b)
}

/// Log-softmax over instances for each augmentation column:
/// `logp[[i, j]] = log P(i | x_j)`.
fn log_probs(instances: ArrayView2<f64>, augmentations: ArrayView2<f64>, tau: f64) -> Array2<f64> {
    let scores = instances.dot(&augmentations.t()) / tau;
    let b = scores.nrows();
    let mut logp = scores;
    for j in 0..b {
        let col = logp.column(j);
        let m = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + col.iter().map(|&s| (s - m).exp()).sum::<f64>().ln();
        logp.column_mut(j).mapv_inplace(|s| s - lse);
    }
    logp
}

/// Loss value only.
pub fn instance_loss(
    instances: ArrayView2<f64>,
    augmentations: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<f64> {
    instance_loss_and_grad(instances, augmentations, cfg).map(|(l, _, _)| l)
}

/// Loss value and gradients with respect to both inputs.
pub fn instance_loss_and_grad(
    instances: ArrayView2<f64>,
    augmentations: ArrayView2<f64>,
    cfg: &LossConfig,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    cfg.validate()?;
    let b = validate_inputs(instances, augmentations)?;
    let tau = cfg.temperature;
    let logp = log_probs(instances, augmentations, tau);

    let mut loss = 0.0;
    for j in 0..b {
        loss -= logp[[j, j]];
        for i in 0..b {
            if i != j {
                // log(1 - P) via ln1p for stability.
                loss -= (-logp[[i, j]].exp()).ln_1p();
            }
        }
    }
    loss /= b as f64;

    // dL/ds[k][j] where s = score matrix before softmax.
    let mut score_grad = Array2::<f64>::zeros((b, b));
    for j in 0..b {
        let mut q_sum = 0.0;
        for i in 0..b {
            if i != j {
                let p = logp[[i, j]].exp();
                q_sum += p / (1.0 - p);
            }
        }
        for k in 0..b {
            let p_kj = logp[[k, j]].exp();
            let mut g = p_kj - if k == j { 1.0 } else { 0.0 };
            if k != j {
                g += p_kj / (1.0 - p_kj);
            }
            g -= p_kj * q_sum;
            score_grad[[k, j]] = g / b as f64;
        }
    }

    let grad_instances = score_grad.dot(&augmentations) / tau;
    let grad_augmentations = score_grad.t().dot(&instances) / tau;
    Ok((loss, grad_instances, grad_augmentations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn unit_rows(rng: &mut ChaCha8Rng, b: usize, d: usize) -> Array2<f64> {
        let mut m = Array2::from_shape_fn((b, d), |_| rng.sample::<f64, _>(StandardNormal));
        for mut row in m.rows_mut() {
            let n = row.dot(&row).sqrt();
            row.mapv_inplace(|v| v / n);
        }
        m
    }

    #[test]
    fn single_matching_pair_has_zero_loss() {
        let f = array![[1.0, 0.0, 0.0]];
        let l = instance_loss(f.view(), f.view(), &LossConfig { temperature: 0.1 }).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn two_orthogonal_pairs_match_scalar_oracle() {
        // f1 = fhat1 = e1, f2 = fhat2 = e2, tau = 1. Scalar arithmetic:
        // each softmax column is (e, 1)/(e + 1) up to ordering, so
        // L = (2 * -log(e/(1+e)) + 2 * -log(1 - 1/(1+e))) / 2
        //   = 2 * (ln(1 + e) - 1).
        let e = std::f64::consts::E;
        let expected = 2.0 * ((1.0 + e).ln() - 1.0);
        let f = array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]];
        let l = instance_loss(f.view(), f.view(), &LossConfig { temperature: 1.0 }).unwrap();
        assert_relative_eq!(l, expected, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = array![[1.0, 0.0], [0.0, 1.0]];
        let long = array![[2.0, 0.0], [0.0, 1.0]];
        let cfg = LossConfig::default();
        assert!(matches!(
            instance_loss(long.view(), f.view(), &cfg),
            Err(Error::Argument(_))
        ));
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(
            instance_loss(empty.view(), empty.view(), &cfg),
            Err(Error::Argument(_))
        ));
        let three = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(
            instance_loss(f.view(), three.view(), &cfg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &tau in &[0.1, 1.0] {
            let cfg = LossConfig { temperature: tau };
            let f = unit_rows(&mut rng, 4, 8);
            let fh = unit_rows(&mut rng, 4, 8);
            let (_, gf, gfh) = instance_loss_and_grad(f.view(), fh.view(), &cfg).unwrap();
            let h = 1e-3;
            let mut max_rel = 0.0f64;
            for (m, g, is_instance) in [(&f, &gf, true), (&fh, &gfh, false)] {
                for i in 0..4 {
                    for d in 0..8 {
                        let mut plus = m.clone();
                        let mut minus = m.clone();
                        plus[[i, d]] += h;
                        minus[[i, d]] -= h;
                        let (lp, lm) = if is_instance {
                            (
                                instance_loss(plus.view(), fh.view(), &cfg).unwrap(),
                                instance_loss(minus.view(), fh.view(), &cfg).unwrap(),
                            )
                        } else {
                            (
                                instance_loss(f.view(), plus.view(), &cfg).unwrap(),
                                instance_loss(f.view(), minus.view(), &cfg).unwrap(),
                            )
                        };
                        let fd = (lp - lm) / (2.0 * h);
                        let rel = (g[[i, d]] - fd).abs() / fd.abs().max(1e-8);
                        max_rel = max_rel.max(rel);
                    }
                }
            }
            assert!(max_rel < 1e-4, "tau {tau}: max relative error {max_rel}");
        }
    }

    #[test]
    fn loss_is_nonnegative_and_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = LossConfig::default();
        for _ in 0..20 {
            let b = rng.random_range(1..6);
            let f = unit_rows(&mut rng, b, 6);
            let fh = unit_rows(&mut rng, b, 6);
            let l = instance_loss(f.view(), fh.view(), &cfg).unwrap();
            assert!(l >= 0.0);

            // Same permutation applied to both inputs.
            let mut perm: Vec<usize> = (0..b).collect();
            for i in (1..b).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let fp = ndarray::stack(
                ndarray::Axis(0),
                &perm.iter().map(|&i| f.row(i)).collect::<Vec<_>>(),
            )
            .unwrap();
            let fhp = ndarray::stack(
                ndarray::Axis(0),
                &perm.iter().map(|&i| fh.row(i)).collect::<Vec<_>>(),
            )
            .unwrap();
            let lp = instance_loss(fp.view(), fhp.view(), &cfg).unwrap();
            assert_relative_eq!(l, lp, max_relative = 1e-12);
        }
    }

    #[test]
    fn loss_invariant_under_joint_orthogonal_transform() {
        // Householder reflection: orthogonal, applied to every row.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let d = 6;
        let v = unit_rows(&mut rng, 1, d);
        let v = v.row(0).to_owned();
        let reflect = |m: &Array2<f64>| -> Array2<f64> {
            let mut out = m.clone();
            for mut row in out.rows_mut() {
                let proj = 2.0 * row.dot(&v);
                for k in 0..d {
                    row[k] -= proj * v[k];
                }
            }
            out
        };
        let cfg = LossConfig { temperature: 0.3 };
        let f = unit_rows(&mut rng, 5, d);
        let fh = unit_rows(&mut rng, 5, d);
        let l = instance_loss(f.view(), fh.view(), &cfg).unwrap();
        let lr = instance_loss(reflect(&f).view(), reflect(&fh).view(), &cfg).unwrap();
        assert_relative_eq!(l, lr, max_relative = 1e-10);
    }

    #[test]
    fn weakening_a_matched_pair_never_decreases_loss() {
        // Rotate fhat_i away from f_i in their common plane; all other
        // dot products with the remaining (orthogonal) rows stay zero.
        let cfg = LossConfig { temperature: 0.5 };
        let base = array![
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0]
        ];
        let mut prev = instance_loss(base.view(), base.view(), &cfg).unwrap();
        for step in 1..8 {
            let ang = 0.15 * step as f64;
            let mut fh = base.clone();
            fh[[0, 0]] = ang.cos();
            fh[[0, 3]] = ang.sin();
            let l = instance_loss(base.view(), fh.view(), &cfg).unwrap();
            assert!(l >= prev - 1e-12, "loss decreased: {prev} -> {l}");
            prev = l;
        }
    }
}
