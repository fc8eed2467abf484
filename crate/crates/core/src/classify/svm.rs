//! RBF support vector machines trained with sequential minimal optimization.
//!
//! Both the soft-margin classifier and the ν one-class machine reduce to
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  yᵀα = Δ,  0 ≤ α_i ≤ C
//! ```
//!
//! which [`solve`] handles with second-order working-set selection. The
//! stopping rule is the maximal KKT violation `m(α) - M(α) < tol`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

const TAU: f64 = 1e-12;

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dense symmetric kernel matrix.
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn rbf(points: &[Vec<f64>], gamma: f64, exec: Exec) -> Self {
        let n = points.len();
        let rows = exec.map_range(n, |i| points.iter().map(|q| rbf(&points[i], q, gamma)).collect::<Vec<f64>>());
        Self {
            n,
            values: rows.concat(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

pub struct SmoProblem<'a> {
    pub kernel: &'a KernelMatrix,
    /// Labels in {-1, +1}.
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub upper: f64,
    pub alpha: Vec<f64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Final maximal KKT violation `m(α) - M(α)`.
    pub gap: f64,
}

pub fn solve(prob: SmoProblem<'_>) -> Result<SmoSolution> {
    let SmoProblem {
        kernel,
        y,
        p,
        upper,
        mut alpha,
        tolerance,
        max_iterations,
    } = prob;
    let n = y.len();
    let qd: Vec<f64> = (0..n).map(|i| kernel.get(i, i)).collect();
    // Q_ij = y_i y_j K_ij
    let mut grad = p.clone();
    for i in 0..n {
        if alpha[i] != 0.0 {
            let row = kernel.row(i);
            for k in 0..n {
                grad[k] += alpha[i] * y[i] * y[k] * row[k];
            }
        }
    }
    let is_upper = |a: f64| a >= upper;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    loop {
        // Working set: i maximizes -y G over I_up; j minimizes the
        // second-order objective decrease over I_low.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if y[t] > 0.0 {
                if !is_upper(alpha[t]) && -grad[t] >= g_max {
                    g_max = -grad[t];
                    i_sel = Some(t);
                }
            } else if !is_lower(alpha[t]) && grad[t] >= g_max {
                g_max = grad[t];
                i_sel = Some(t);
            }
        }
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        if let Some(i) = i_sel {
            let ki = kernel.row(i);
            for t in 0..n {
                if y[t] > 0.0 {
                    if !is_lower(alpha[t]) {
                        let diff = g_max + grad[t];
                        g_max2 = g_max2.max(grad[t]);
                        if diff > 0.0 {
                            let quad = qd[i] + qd[t] - 2.0 * y[i] * (y[i] * y[t] * ki[t]);
                            let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                            if obj <= obj_min {
                                obj_min = obj;
                                j_sel = Some(t);
                            }
                        }
                    }
                } else if !is_upper(alpha[t]) {
                    let diff = g_max - grad[t];
                    g_max2 = g_max2.max(-grad[t]);
                    if diff > 0.0 {
                        let quad = qd[i] + qd[t] + 2.0 * y[i] * (y[i] * y[t] * ki[t]);
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            }
        }
        let gap = g_max + g_max2;
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gap >= tolerance => (i, j),
            _ => {
                let rho = compute_rho(&y, &grad, &alpha, upper);
                return Ok(SmoSolution {
                    alpha,
                    rho,
                    iterations,
                    gap: if gap.is_finite() { gap.max(0.0) } else { 0.0 },
                });
            }
        };
        if iterations >= max_iterations {
            return Err(Error::SmoNonConvergence { iterations, gap });
        }
        iterations += 1;

        let qij = y[i] * y[j] * kernel.get(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let c = upper;
        if y[i] != y[j] {
            let quad = (qd[i] + qd[j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ki, kj) = (kernel.row(i), kernel.row(j));
        for k in 0..n {
            grad[k] += y[k] * (y[i] * ki[k] * di + y[j] * kj[k] * dj);
        }
    }
}

fn compute_rho(y: &[f64], grad: &[f64], alpha: &[f64], upper: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for i in 0..y.len() {
        let yg = y[i] * grad[i];
        if alpha[i] >= upper {
            if y[i] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[i] <= 0.0 {
            if y[i] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Kernel expansion `sum_i coef_i K(sv_i, x) - rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelExpansion {
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    /// Maximal KKT violation reached by the solver.
    pub kkt_gap: f64,
}

impl KernelExpansion {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }

    fn from_solution(points: &[Vec<f64>], y: &[f64], sol: &SmoSolution, gamma: f64) -> Self {
        let (support_vectors, coefficients) = sol
            .alpha
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0.0)
            .map(|(i, &a)| (points[i].clone(), y[i] * a))
            .unzip();
        Self {
            support_vectors,
            coefficients,
            rho: sol.rho,
            gamma,
            kkt_gap: sol.gap,
        }
    }
}

pub struct SmoSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub exec: Exec,
}

/// Soft-margin C-SVC; `labels[i]` is true for the positive class.
pub fn fit_svc(points: &[Vec<f64>], labels: &[bool], c: f64, gamma: f64, s: &SmoSettings) -> Result<KernelExpansion> {
    let kernel = KernelMatrix::rbf(points, gamma, s.exec);
    let y: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    let n = points.len();
    let sol = solve(SmoProblem {
        kernel: &kernel,
        y: y.clone(),
        p: vec![-1.0; n],
        upper: c,
        alpha: vec![0.0; n],
        tolerance: s.tolerance,
        max_iterations: s.max_iterations,
    })?;
    Ok(KernelExpansion::from_solution(points, &y, &sol, gamma))
}

/// ν one-class SVM: `sum α = ν n`, `0 ≤ α ≤ 1`. The decision is positive
/// inside the learned support region.
pub fn fit_one_class(points: &[Vec<f64>], nu: f64, gamma: f64, s: &SmoSettings) -> Result<KernelExpansion> {
    let n = points.len();
    let kernel = KernelMatrix::rbf(points, gamma, s.exec);
    let total = nu * n as f64;
    let full = (total.floor() as usize).min(n);
    let mut alpha = vec![0.0; n];
    alpha[..full].iter_mut().for_each(|a| *a = 1.0);
    if full < n {
        alpha[full] = total - full as f64;
    }
    let y = vec![1.0; n];
    let sol = solve(SmoProblem {
        kernel: &kernel,
        y: y.clone(),
        p: vec![0.0; n],
        upper: 1.0,
        alpha,
        tolerance: s.tolerance,
        max_iterations: s.max_iterations,
    })?;
    Ok(KernelExpansion::from_solution(points, &y, &sol, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> SmoSettings {
        SmoSettings {
            tolerance: 1e-3,
            max_iterations: 100_000,
            exec: Exec::Sequential,
        }
    }

    #[test]
    fn two_points_are_both_support_vectors() {
        let pts = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
        let m = fit_svc(&pts, &[false, true], 1.0, 0.5, &settings()).unwrap();
        assert_eq!(m.support_vectors.len(), 2);
        assert!(m.decision(&pts[0]) < 0.0);
        assert!(m.decision(&pts[1]) > 0.0);
    }

    #[test]
    fn dual_constraint_holds() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()]).collect();
        let labels: Vec<bool> = pts.iter().map(|p| p[0] + 0.3 * p[1] > 0.0).collect();
        let m = fit_svc(&pts, &labels, 1.0, 1.0, &settings()).unwrap();
        assert!(m.coefficients.iter().sum::<f64>().abs() < 1e-9);
        assert!(m.coefficients.iter().all(|c| c.abs() <= 1.0 + 1e-12));
        assert!(m.kkt_gap < 1e-3);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64 * 2.1).cos()]).collect();
        let labels: Vec<bool> = (0..30).map(|i| i % 2 == 0).collect();
        let s = SmoSettings {
            max_iterations: 2,
            ..settings()
        };
        assert!(matches!(
            fit_svc(&pts, &labels, 10.0, 1.0, &s),
            Err(Error::SmoNonConvergence { iterations: 2, .. })
        ));
    }

    #[test]
    fn one_class_alpha_budget() {
        let pts: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()]).collect();
        let m = fit_one_class(&pts, 0.2, 0.5, &settings()).unwrap();
        assert!((m.coefficients.iter().sum::<f64>() - 10.0).abs() < 1e-9);
    }
}
