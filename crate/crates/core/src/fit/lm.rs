//! Damped Gauss–Newton (Levenberg–Marquardt) minimizer for small dense
//! problems, with Marquardt's diagonal scaling.

use nalgebra::{DMatrix, DVector};

/// A least-squares problem `min ½‖r(p)‖²`.
pub trait Residuals {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;

    /// Weighted residuals at `p`.
    fn residuals(&self, p: &[f64], out: &mut [f64]);

    /// Analytic Jacobian of the residuals. Returns `false` when not
    /// available, in which case central differences are used.
    fn jacobian(&self, _p: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Maps `p` back into the feasible region.
    fn project(&self, _p: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Relative reduction of the cost below which an accepted step counts as converged.
    pub ftol: f64,
    /// Relative step size below which the iteration counts as converged.
    pub xtol: f64,
    /// Infinity-norm of the gradient below which the iteration counts as converged.
    pub gtol: f64,
    pub initial_lambda: f64,
    /// Relative step for central differences.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-15,
            xtol: 1e-13,
            gtol: 1e-15,
            initial_lambda: 1e-3,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    SmallCostReduction,
    SmallStep,
    SmallGradient,
    ZeroResidual,
    /// No downhill step exists at machine precision.
    Stalled,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Sum of squared weighted residuals at `params`.
    pub rss: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub termination: Termination,
    /// JᵀJ at `params`.
    pub jtj: DMatrix<f64>,
    /// RSS after every accepted step, starting with the initial point.
    pub rss_history: Vec<f64>,
}

pub fn central_difference_jacobian<P: Residuals + ?Sized>(
    problem: &P,
    p: &[f64],
    rel_step: f64,
) -> DMatrix<f64> {
    let m = problem.n_residuals();
    let n = problem.n_params();
    let mut jac = DMatrix::zeros(m, n);
    let mut up = vec![0.0; m];
    let mut dn = vec![0.0; m];
    let mut q = p.to_vec();
    for j in 0..n {
        let h = rel_step * p[j].abs().max(1.0);
        q[j] = p[j] + h;
        problem.residuals(&q, &mut up);
        q[j] = p[j] - h;
        problem.residuals(&q, &mut dn);
        q[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - dn[i]) / (2.0 * h);
        }
    }
    jac
}

fn jacobian_at<P: Residuals + ?Sized>(problem: &P, p: &[f64], opts: &LmOptions) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(problem.n_residuals(), problem.n_params());
    if problem.jacobian(p, &mut jac) {
        jac
    } else {
        central_difference_jacobian(problem, p, opts.fd_step)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

pub fn minimize<P: Residuals + ?Sized>(problem: &P, p0: &[f64], opts: &LmOptions) -> LmOutcome {
    let n = problem.n_params();
    let m = problem.n_residuals();
    let mut p = p0.to_vec();
    problem.project(&mut p);
    let mut r = vec![0.0; m];
    problem.residuals(&p, &mut r);
    let mut rss = sum_sq(&r);
    let mut history = vec![rss];
    let mut lambda = opts.initial_lambda;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];

    let finish = |p: Vec<f64>, rss, n_iter, termination, history| {
        let jac = jacobian_at(problem, &p, opts);
        LmOutcome {
            params: p,
            rss,
            n_iter,
            converged: matches!(
                termination,
                Termination::SmallCostReduction
                    | Termination::SmallStep
                    | Termination::SmallGradient
                    | Termination::ZeroResidual
                    | Termination::Stalled
            ),
            termination,
            jtj: jac.transpose() * &jac,
            rss_history: history,
        }
    };

    if !rss.is_finite() {
        return finish(p, rss, 0, Termination::NonFinite, history);
    }

    for iter in 1..=opts.max_iter {
        if rss == 0.0 {
            return finish(p, rss, iter - 1, Termination::ZeroResidual, history);
        }
        let jac = jacobian_at(problem, &p, opts);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        if grad.amax() <= opts.gtol * rss.max(f64::MIN_POSITIVE).sqrt() {
            return finish(p, rss, iter - 1, Termination::SmallGradient, history);
        }
        let diag: Vec<f64> = (0..n).map(|j| jtj[(j, j)].max(1e-30)).collect();

        loop {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * diag[j];
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return finish(p, rss, iter, Termination::Stalled, history);
                    }
                    continue;
                }
            };
            for j in 0..n {
                trial[j] = p[j] + step[j];
            }
            problem.project(&mut trial);
            problem.residuals(&trial, &mut r_trial);
            let rss_trial = sum_sq(&r_trial);
            if rss_trial.is_finite() && rss_trial < rss {
                let step_norm: f64 = p
                    .iter()
                    .zip(&trial)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let p_norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                let reduction = (rss - rss_trial) / rss;
                p.copy_from_slice(&trial);
                r.copy_from_slice(&r_trial);
                rss = rss_trial;
                history.push(rss);
                lambda = (lambda / 3.0).max(1e-15);
                if reduction <= opts.ftol {
                    return finish(p, rss, iter, Termination::SmallCostReduction, history);
                }
                if step_norm <= opts.xtol * (p_norm + opts.xtol) {
                    return finish(p, rss, iter, Termination::SmallStep, history);
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e20 {
                return finish(p, rss, iter, Termination::Stalled, history);
            }
        }
    }
    finish(p, rss, opts.max_iter, Termination::MaxIterations, history)
}

/// Linearized parameter covariance `(JᵀJ)⁻¹ · rss/(n − p)`, or `None` when
/// the information matrix is numerically singular or there are no degrees
/// of freedom left.
pub fn covariance(jtj: &DMatrix<f64>, rss: f64, n_points: usize) -> Option<DMatrix<f64>> {
    let n = jtj.nrows();
    if n_points <= n {
        return None;
    }
    // Condition check on the scale-normalized matrix.
    let d: Vec<f64> = (0..n).map(|j| jtj[(j, j)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return None;
    }
    let mut normed = jtj.clone();
    for i in 0..n {
        for j in 0..n {
            normed[(i, j)] /= (d[i] * d[j]).sqrt();
        }
    }
    let eig = normed.clone().symmetric_eigen();
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e)));
    if !(lo > 1e-12 * hi) {
        return None;
    }
    let inv = normed.try_inverse()?;
    let s2 = rss / (n_points - n) as f64;
    let mut cov = inv;
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] *= s2 / (d[i] * d[j]).sqrt();
        }
    }
    Some(cov)
}
