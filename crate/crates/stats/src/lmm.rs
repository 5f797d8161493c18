//! Random-intercept linear mixed model fit by maximum likelihood.
//!
//! Model: `y = Xβ + u_g + ε` with `u_g ~ N(0, σu²)` per group and
//! `ε ~ N(0, σe²)`. Writing λ = σu²/σe², the covariance of a group of size m
//! is `σe²(I + λ 1 1ᵀ)`, whose inverse is `I − c 1 1ᵀ` with `c = λ/(1+λm)`.
//! That gives closed-form GLS sufficient statistics per group:
//!
//! ```text
//! A(λ) = Σ_g [XgᵀXg − c_g sx_g sx_gᵀ]      b(λ) = Σ_g [Xgᵀyg − c_g sx_g sy_g]
//! q(λ) = Σ_g [ygᵀyg − c_g sy_g²]           β̂ = A⁻¹b,  RSS_W = q − β̂ᵀb
//! ```
//!
//! and the profiled log-likelihood
//! `ℓ(λ) = −n/2·[ln 2π + ln(RSS_W/n) + 1] − ½·Σ_g ln(1+λ m_g)`,
//! which is maximized over log λ ∈ [−12, 12] by golden section (tolerance
//! 1e−8). λ = 0 is evaluated as an explicit extra candidate; when it wins the
//! fit collapses to exact OLS and is flagged singular. σ̂e² = RSS_W/n (ML),
//! σ̂u² = λ̂·σ̂e², and Wald inference uses `Cov(β̂) = σ̂e²·A(λ̂)⁻¹`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{FitResult, PairedSample, Result, StatsError, Z_975};

/// Search interval for log λ and the golden-section stopping width.
const LOG_LAMBDA_RANGE: (f64, f64) = (-12.0, 12.0);
const GOLDEN_TOL: f64 = 1e-8;
const INV_PHI: f64 = 0.618_033_988_749_894_9; // (√5 − 1) / 2

/// Design for a random-intercept fit: response, fixed-effect design matrix,
/// and one group index per observation.
#[derive(Debug, Clone)]
pub struct LmmSpec {
    pub y: Vec<f64>,
    /// n × p fixed-effect design; must have full column rank.
    pub x: DMatrix<f64>,
    /// Group membership per observation. Indices need not be contiguous;
    /// groups are processed in order of first appearance.
    pub groups: Vec<usize>,
}

/// One fixed-effect coefficient with Wald inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    /// Wald 95% interval (estimate ± 1.96·se).
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Full ML fit: coefficients plus variance components and diagnostics.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub coefficients: Vec<Coefficient>,
    pub sigma_e2: f64,
    pub sigma_u2: f64,
    /// Estimated variance ratio σu²/σe²; 0 on a singular fit.
    pub lambda: f64,
    pub log_likelihood: f64,
    /// True when the likelihood was maximized at the λ = 0 boundary, i.e. the
    /// random-intercept variance collapsed and the fit equals OLS.
    pub singular: bool,
    pub n_obs: usize,
    pub n_groups: usize,
}

/// Per-group sufficient statistics, computed once; every likelihood
/// evaluation is then O(k·p²).
struct GroupStats {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    sx: DVector<f64>,
    sy: f64,
    m: usize,
}

struct Profiled {
    ll: f64,
    beta: DVector<f64>,
    a: DMatrix<f64>,
    sigma_e2: f64,
}

struct Problem {
    groups: Vec<GroupStats>,
    n: usize,
    p: usize,
}

impl Problem {
    fn build(spec: &LmmSpec) -> Result<Self> {
        let n = spec.y.len();
        let p = spec.x.ncols();
        if n == 0 || spec.x.nrows() != n || spec.groups.len() != n {
            return Err(StatsError::EmptySample);
        }
        if n <= p {
            return Err(StatsError::TooFew { got: n, need: p + 1 });
        }
        // Partition observation indices by group, groups in first-appearance
        // order and rows in data order, so floating-point sums are identical
        // on every platform and run.
        let mut order: Vec<usize> = Vec::new();
        let mut rows_by_group: Vec<Vec<usize>> = Vec::new();
        for (i, g) in spec.groups.iter().enumerate() {
            match order.iter().position(|o| o == g) {
                Some(k) => rows_by_group[k].push(i),
                None => {
                    order.push(*g);
                    rows_by_group.push(vec![i]);
                }
            }
        }
        if order.len() < 2 {
            return Err(StatsError::TooFewGroups { got: order.len() });
        }
        let groups = rows_by_group
            .iter()
            .map(|rows| {
                let m = rows.len();
                let mut gram = DMatrix::zeros(p, p);
                let mut xty = DVector::zeros(p);
                let mut sx = DVector::zeros(p);
                let mut yty = 0.0;
                let mut sy = 0.0;
                for &i in rows {
                    let xi = spec.x.row(i).transpose();
                    gram.ger(1.0, &xi, &xi, 1.0);
                    xty.axpy(spec.y[i], &xi, 1.0);
                    sx += &xi;
                    yty += spec.y[i] * spec.y[i];
                    sy += spec.y[i];
                }
                GroupStats { gram, xty, yty, sx, sy, m }
            })
            .collect();
        Ok(Self { groups, n, p })
    }

    /// GLS fit and profiled log-likelihood at a fixed variance ratio λ.
    fn profiled(&self, lambda: f64) -> Result<Profiled> {
        let mut a = DMatrix::zeros(self.p, self.p);
        let mut b = DVector::zeros(self.p);
        let mut q = 0.0;
        let mut logdet = 0.0;
        for gs in &self.groups {
            let c = lambda / (1.0 + lambda * gs.m as f64);
            a += &gs.gram;
            a.ger(-c, &gs.sx, &gs.sx, 1.0);
            b += &gs.xty;
            b.axpy(-c * gs.sy, &gs.sx, 1.0);
            q += gs.yty - c * gs.sy * gs.sy;
            logdet += (1.0 + lambda * gs.m as f64).ln();
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or(StatsError::RankDeficient)?;
        let beta = chol.solve(&b);
        let rss = q - beta.dot(&b);
        if !(rss > 0.0) {
            return Err(StatsError::NonConvergence(format!(
                "weighted residual sum of squares degenerated to {rss}"
            )));
        }
        let n = self.n as f64;
        let sigma_e2 = rss / n;
        let ll = -0.5 * n * ((2.0 * std::f64::consts::PI).ln() + sigma_e2.ln() + 1.0)
            - 0.5 * logdet;
        Ok(Profiled { ll, beta, a, sigma_e2 })
    }
}

/// ML fit of a random-intercept model.
///
/// # Errors
/// [`StatsError::EmptySample`] on inconsistent or empty inputs;
/// [`StatsError::TooFew`] when n ≤ p; [`StatsError::TooFewGroups`] below 2
/// groups; [`StatsError::RankDeficient`] when the design loses full column
/// rank; [`StatsError::NonConvergence`] when the weighted residual sum of
/// squares degenerates (response lies in the design span).
pub fn fit_lmm_random_intercept(spec: &LmmSpec) -> Result<LmmFit> {
    let problem = Problem::build(spec)?;
    let (mut lo, mut hi) = LOG_LAMBDA_RANGE;
    let f = |t: f64| problem.profiled(t.exp()).map(|p| p.ll);
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while hi - lo > GOLDEN_TOL {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d)?;
        }
    }
    let t_hat = 0.5 * (lo + hi);
    let interior = problem.profiled(t_hat.exp())?;
    let boundary = problem.profiled(0.0)?;
    // Prefer the exact boundary solution whenever it is at least as likely:
    // the optimizer can only approach λ = 0 asymptotically, and the boundary
    // fit is plain OLS, which downstream consumers treat specially.
    let (lambda, fit, singular) = if boundary.ll >= interior.ll {
        (0.0, boundary, true)
    } else {
        (t_hat.exp(), interior, false)
    };

    let cov = problem_cov(&fit)?;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let coefficients = (0..problem.p)
        .map(|j| {
            let estimate = fit.beta[j];
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = if se > 0.0 { estimate / se } else { f64::INFINITY };
            let p_value = if se > 0.0 { 2.0 * normal.cdf(-z.abs()) } else { 0.0 };
            Coefficient {
                estimate,
                se,
                z,
                p_value,
                ci_low: estimate - Z_975 * se,
                ci_high: estimate + Z_975 * se,
            }
        })
        .collect();
    Ok(LmmFit {
        coefficients,
        sigma_e2: fit.sigma_e2,
        sigma_u2: lambda * fit.sigma_e2,
        lambda,
        log_likelihood: fit.ll,
        singular,
        n_obs: problem.n,
        n_groups: problem.groups.len(),
    })
}

fn problem_cov(fit: &Profiled) -> Result<DMatrix<f64>> {
    let inv = fit
        .a
        .clone()
        .cholesky()
        .ok_or(StatsError::RankDeficient)?
        .inverse();
    Ok(inv * fit.sigma_e2)
}

/// Before/after fit for one paired sample: `y ~ 1 + after` with a random
/// intercept per run. Coefficient 1 is the after-effect Δ.
///
/// Each pair contributes two observations (its before and after ratings); the
/// run label is the grouping factor.
pub fn fit_before_after(s: &PairedSample) -> Result<LmmFit> {
    if s.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let labels = s.run_labels();
    let index_of = |run: &str| labels.iter().position(|l| *l == run).unwrap();
    let n = 2 * s.len();
    let mut y = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, 2);
    let mut groups = Vec::with_capacity(n);
    for (i, obs) in s.obs.iter().enumerate() {
        let g = index_of(&obs.run);
        y.push(obs.before);
        x[(2 * i, 0)] = 1.0;
        groups.push(g);
        y.push(obs.after);
        x[(2 * i + 1, 0)] = 1.0;
        x[(2 * i + 1, 1)] = 1.0;
        groups.push(g);
    }
    fit_lmm_random_intercept(&LmmSpec { y, x, groups })
}

/// After × Tool interaction fit across a relief-framed and a neutral sample.
///
/// Long-format design `[1, after, tool, after·tool]` with tool = 1 for the
/// relief sample, grouped by run. The returned [`FitResult`] describes the
/// interaction coefficient — the additional after-effect of the relief tool
/// beyond the neutral one — with Wald interval and p-value; the full fit
/// rides along for diagnostics.
///
/// # Errors
/// [`StatsError::MissingLevel`] when either sample is empty, plus anything
/// [`fit_lmm_random_intercept`] reports.
pub fn fit_interaction(
    relief: &PairedSample,
    neutral: &PairedSample,
) -> Result<(FitResult, LmmFit)> {
    if relief.is_empty() {
        return Err(StatsError::MissingLevel("relief pairs"));
    }
    if neutral.is_empty() {
        return Err(StatsError::MissingLevel("neutral pairs"));
    }
    let mut labels: Vec<String> = Vec::new();
    let index_of = |run: &str, labels: &mut Vec<String>| match labels
        .iter()
        .position(|l| l == run)
    {
        Some(k) => k,
        None => {
            labels.push(run.to_string());
            labels.len() - 1
        }
    };
    let n = 2 * (relief.len() + neutral.len());
    let mut y = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, 4);
    let mut groups = Vec::with_capacity(n);
    let mut row = 0;
    for (sample, tool) in [(relief, 1.0), (neutral, 0.0)] {
        for obs in &sample.obs {
            let g = index_of(&obs.run, &mut labels);
            for (value, after) in [(obs.before, 0.0), (obs.after, 1.0)] {
                y.push(value);
                x[(row, 0)] = 1.0;
                x[(row, 1)] = after;
                x[(row, 2)] = tool;
                x[(row, 3)] = after * tool;
                groups.push(g);
                row += 1;
            }
        }
    }
    let fit = fit_lmm_random_intercept(&LmmSpec { y, x, groups })?;
    let int = &fit.coefficients[3];
    let result = FitResult {
        estimate: int.estimate,
        ci_low: int.ci_low,
        ci_high: int.ci_high,
        p_value: int.p_value,
        effect_size: None,
        n_obs: relief.len() + neutral.len(),
        n_runs: fit.n_groups,
    };
    Ok((result, fit))
}
