//! Elastic-net regularized negative log-likelihood of the demonstration as a
//! function of the weight increment, and its proximal-gradient minimizer.

use crate::domain::{check_len, dot, log_sum_exp, WeightVector};
use crate::error::{Error, Result};
use crate::irl::config::IrlConfig;
use crate::irl::dataset::IrlDataset;

/// Smooth part `Σ_d θ_d · log(1 + Σᵢ γᵢ e^{−dwᵀΔΦ_{i,d}})` and its gradient.
fn smooth_part(dw: &[f64], dataset: &IrlDataset, with_gradient: bool) -> (f64, Vec<f64>) {
    let dim = dataset.dim();
    let mut value = 0.0;
    let mut grad = if with_gradient {
        vec![0.0; dim]
    } else {
        Vec::new()
    };
    let entries = dataset.entries();
    // slot 0 is the demonstration's own term, e^0
    let mut exponents = vec![0.0; entries.len() + 1];
    for (d, &theta) in dataset.thetas().iter().enumerate() {
        for (slot, e) in exponents[1..].iter_mut().zip(entries) {
            *slot = e.log_gamma - dot(dw, &e.diffs[d]);
        }
        let lse = log_sum_exp(&exponents);
        value += theta * lse;
        if with_gradient {
            for (a, e) in exponents[1..].iter().zip(entries) {
                let share = theta * (a - lse).exp();
                for (g, diff) in grad.iter_mut().zip(&e.diffs[d]) {
                    *g -= share * diff;
                }
            }
        }
    }
    (value, grad)
}

fn check_dim(dw: &[f64], dataset: &IrlDataset) -> Result<()> {
    check_len(dataset.dim(), dw.len())
}

/// Full objective including `λ‖dw‖₁ + (β/2)‖dw‖₂²`.
pub fn nll_objective(
    dw: &[f64],
    dataset: &IrlDataset,
    lambda_l1: f64,
    beta_l2: f64,
) -> Result<f64> {
    check_dim(dw, dataset)?;
    let (smooth, _) = smooth_part(dw, dataset, false);
    let l1: f64 = dw.iter().map(|v| v.abs()).sum();
    let l2: f64 = dw.iter().map(|v| v * v).sum();
    Ok(smooth + lambda_l1 * l1 + 0.5 * beta_l2 * l2)
}

/// Gradient of the smooth part plus `β·dw`. The L1 term is left to the
/// proximal step.
pub fn nll_gradient(
    dw: &[f64],
    dataset: &IrlDataset,
    _lambda_l1: f64,
    beta_l2: f64,
) -> Result<Vec<f64>> {
    check_dim(dw, dataset)?;
    let (_, mut grad) = smooth_part(dw, dataset, true);
    for (g, v) in grad.iter_mut().zip(dw) {
        *g += beta_l2 * v;
    }
    Ok(grad)
}

/// Smooth value (with the L2 term) and gradient in one pass.
fn smooth_with_l2(dw: &[f64], dataset: &IrlDataset, beta: f64) -> (f64, Vec<f64>) {
    let (mut value, mut grad) = smooth_part(dw, dataset, true);
    for (g, v) in grad.iter_mut().zip(dw) {
        *g += beta * v;
        value += 0.5 * beta * v * v;
    }
    (value, grad)
}

/// Feasible box for the increment: `dw ≥ −w + ε` and, when bounded,
/// `dw ≤ ub − w`.
#[derive(Debug, Clone)]
pub(crate) struct StepBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StepBox {
    pub fn new(w: &WeightVector, epsilon: f64, upper_bound: Option<f64>) -> Self {
        let lower = w.as_slice().iter().map(|&wi| epsilon - wi).collect();
        let upper = w
            .as_slice()
            .iter()
            .map(|&wi| upper_bound.map_or(f64::INFINITY, |ub| ub - wi))
            .collect();
        Self { lower, upper }
    }

    /// Soft-threshold by `threshold`, then clip into the box. Exact prox of
    /// `threshold·|·|` plus the box indicator, coordinate by coordinate.
    fn prox(&self, z: &[f64], threshold: f64) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| {
                let shrunk = v.signum() * (v.abs() - threshold).max(0.0);
                shrunk.clamp(lo, hi)
            })
            .collect()
    }
}

/// Minimizes the regularized objective over the feasible box by proximal
/// gradient descent with Barzilai-Borwein initial steps and backtracking.
pub fn solve_step_direction(
    w: &WeightVector,
    dataset: &IrlDataset,
    cfg: &IrlConfig,
) -> Result<Vec<f64>> {
    check_len(dataset.dim(), w.len())?;
    if dataset.entries().is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lambda = cfg.lambda_l1;
    let beta = cfg.beta_l2;
    let bounds = StepBox::new(w, cfg.inner.box_epsilon, cfg.weight_upper_bound);

    let origin = bounds.prox(&vec![0.0; w.len()], 0.0);
    let mut x = origin.clone();
    let (mut fx, mut gx) = smooth_with_l2(&x, dataset, beta);
    if !fx.is_finite() {
        return Err(Error::NonFinite(format!(
            "step objective is {fx} at dw = 0"
        )));
    }
    let mut step = 1.0;

    for _ in 0..cfg.inner.max_iterations {
        let (z, fz, d) = loop {
            let trial: Vec<f64> = x.iter().zip(&gx).map(|(xi, gi)| xi - step * gi).collect();
            let z = bounds.prox(&trial, step * lambda);
            let d: Vec<f64> = z.iter().zip(&x).map(|(a, b)| a - b).collect();
            let (fz, _) = smooth_part(&z, dataset, false);
            let fz = fz + 0.5 * beta * z.iter().map(|v| v * v).sum::<f64>();
            let model = fx + dot(&gx, &d) + dot(&d, &d) / (2.0 * step);
            if fz <= model || step < 1e-20 {
                break (z, fz, d);
            }
            step *= 0.5;
        };
        if !fz.is_finite() {
            return Err(Error::NonFinite(format!("step objective is {fz}")));
        }
        let (_, gz) = smooth_with_l2(&z, dataset, beta);
        // length of a unit proximal-gradient step from z; zero only at the
        // minimizer, unlike the backtracked step just taken
        let unit: Vec<f64> = z.iter().zip(&gz).map(|(zi, gi)| zi - gi).collect();
        let step_norm = bounds
            .prox(&unit, lambda)
            .iter()
            .zip(&z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

        let y: Vec<f64> = gz.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&d, &y);
        step = if sy > 0.0 {
            (dot(&d, &d) / sy).clamp(1e-12, 1e12)
        } else {
            (step * 2.0).min(1e12)
        };

        x = z;
        fx = fz;
        gx = gz;
        if step_norm < cfg.inner.step_tolerance {
            break;
        }
    }
    let l1 = |v: &[f64]| lambda * v.iter().map(|a| a.abs()).sum::<f64>();
    let (f0, _) = smooth_with_l2(&origin, dataset, beta);
    if fx + l1(&x) > f0 + l1(&origin) {
        return Ok(origin);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irl::dataset::DatasetEntry;

    fn single(diff: Vec<f64>, log_gamma: f64) -> IrlDataset {
        IrlDataset::from_parts(
            vec![1.0],
            vec![DatasetEntry {
                log_gamma,
                diffs: vec![diff],
            }],
        )
        .unwrap()
    }

    #[test]
    fn objective_at_zero_is_log_two() {
        let ds = single(vec![1.0, -2.0], 0.0);
        let v = nll_objective(&[0.0, 0.0], &ds, 0.7, 3.0).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn objective_rejects_wrong_dimension() {
        let ds = single(vec![1.0, -2.0], 0.0);
        assert!(nll_objective(&[0.0], &ds, 0.0, 0.0).is_err());
        assert!(nll_gradient(&[0.0, 0.0, 0.0], &ds, 0.0, 0.0).is_err());
    }

    #[test]
    fn gradient_at_zero_is_half_difference() {
        let ds = single(vec![1.0, -2.0], 0.0);
        let g = nll_gradient(&[0.0, 0.0], &ds, 0.0, 0.5).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_reduces_to_ridge_term_for_zero_differences() {
        let ds = IrlDataset::from_parts(
            vec![1.0, 0.5],
            vec![DatasetEntry {
                log_gamma: 0.3,
                diffs: vec![vec![0.0; 3], vec![0.0; 3]],
            }],
        )
        .unwrap();
        let dw = [0.4, -1.0, 2.5];
        let g = nll_gradient(&dw, &ds, 0.1, 0.2).unwrap();
        for (gi, di) in g.iter().zip(dw) {
            assert!((gi - 0.2 * di).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_differences_yield_zero_step() {
        let ds = single(vec![0.0; 4], 0.0);
        let w = WeightVector::filled(4, 0.01);
        let dw = solve_step_direction(&w, &ds, &IrlConfig::default()).unwrap();
        assert!(dw.iter().all(|&v| v == 0.0), "{dw:?}");
    }

    #[test]
    fn step_respects_box() {
        let ds = single(vec![-5.0, 3.0, 0.5], 0.0);
        let w = WeightVector(vec![0.01, 0.5, 0.9]);
        let cfg = IrlConfig::bounded();
        let dw = solve_step_direction(&w, &ds, &cfg).unwrap();
        for (wi, di) in w.as_slice().iter().zip(&dw) {
            let next = wi + di;
            assert!(
                next >= cfg.inner.box_epsilon - 1e-18 && next <= 1.0,
                "{next}"
            );
        }
        // lowering the first weight is blocked by the box
        assert!((w.0[0] + dw[0] - cfg.inner.box_epsilon).abs() < 1e-15);
    }

    #[test]
    fn costlier_sample_pushes_weights_towards_its_excess() {
        let ds = single(vec![2.0, 1.0], 0.0);
        let w = WeightVector(vec![0.01, 0.01]);
        let cfg = IrlConfig {
            lambda_l1: 0.0,
            beta_l2: 1e-3,
            ..IrlConfig::default()
        };
        let dw = solve_step_direction(&w, &ds, &cfg).unwrap();
        let at = nll_objective(&dw, &ds, 0.0, 1e-3).unwrap();
        let zero = nll_objective(&[0.0, 0.0], &ds, 0.0, 1e-3).unwrap();
        assert!(at <= zero);
        assert!(dot(&dw, &[2.0, 1.0]) > 0.0);
    }
}
