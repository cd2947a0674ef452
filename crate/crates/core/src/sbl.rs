//! Sparse Bayesian learning over the virtual grid.
//!
//! One iteration: posterior `(mu, Sigma)` under the current `(alpha, gamma)`,
//! EM update of `(alpha, gamma)`, selection of the `P_bar` strongest grid
//! points, and an optional Doppler update of those points. The same loop
//! drives the centralized and the distributed estimators; only the posterior
//! step differs.

use faer::prelude::*;
use std::borrow::Cow;

use crate::channel::{equiv_matrix, Tap};
use crate::dictionary::{MeasurementModel, VirtualGrid};
use crate::distributed;
use crate::error::{Error, Result};
use crate::flops;
use crate::frame::PilotObservation;
use crate::grid_update;
use crate::linalg::{self, hermitize, hpd_factor, hpd_inverse, matvec, select_cols};
use crate::modem::AfdmConfig;

/// Prior variances below this are set to exactly zero.
pub const PRUNE_FLOOR: f64 = 1e-12;

/// Hyperparameters and stopping rules.
#[derive(Debug, Clone, PartialEq)]
pub struct SblConfig {
    pub rho: f64,
    pub gamma_prior_c: f64,
    pub gamma_prior_d: f64,
    pub support_threshold: f64,
    pub convergence_tol: f64,
    pub max_iters: usize,
    pub p_bar: usize,
}

impl SblConfig {
    /// Default hyperparameters with `P_bar = floor(M_T / ln M_S)`.
    pub fn new(m_t: usize, m_s: usize) -> Self {
        Self {
            rho: 1e-2,
            gamma_prior_c: 1e-6,
            gamma_prior_d: 1e-6,
            support_threshold: 1e-3,
            convergence_tol: 1e-4,
            max_iters: 100,
            p_bar: Self::p_bar_for(m_t, m_s),
        }
    }

    /// `floor(M_T / ln M_S)`, capped at `M_S`.
    pub fn p_bar_for(m_t: usize, m_s: usize) -> usize {
        if m_s <= 1 {
            return m_s;
        }
        ((m_t as f64 / (m_s as f64).ln()).floor() as usize).min(m_s)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rho,
            self.gamma_prior_c,
            self.gamma_prior_d,
            self.support_threshold,
            self.convergence_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.max_iters == 0 || self.p_bar == 0 {
            return Err(Error::InvalidConfig(
                "SBL parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Posterior moments and hyperparameters of one iteration.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    pub mu: Vec<c64>,
    pub sigma: Mat<c64>,
    pub alpha: Vec<f64>,
    pub gamma: f64,
    pub iter: usize,
}

/// `alpha = 1`, `gamma = 100 M_T / ||y||^2`.
pub fn init_state(obs: &PilotObservation, m_s: usize) -> Result<PosteriorState> {
    let energy: f64 = obs.y_t.iter().map(|v| v.norm_sqr()).sum();
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::ZeroObservation);
    }
    Ok(PosteriorState {
        mu: vec![c64::new(0.0, 0.0); m_s],
        sigma: Mat::zeros(m_s, m_s),
        alpha: vec![1.0; m_s],
        gamma: 100.0 * obs.y_t.len() as f64 / energy,
        iter: 1,
    })
}

/// Posterior of `h` given `y = Phi h + w`, `h ~ CN(0, diag(alpha))`,
/// `w ~ CN(0, I / gamma)`.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mu: Vec<c64>,
    pub sigma: Mat<c64>,
    /// `C^{-1}` with `C = Phi Lambda Phi^H + I / gamma`, when requested.
    pub c_inv: Option<Mat<c64>>,
}

/// Posterior moments in the `M_T x M_T` inversion form. Columns with
/// `alpha = 0` are dropped, so their rows of `mu` and `Sigma` are exactly
/// zero.
///
/// The mean is formed as `Lambda Phi^H C^{-1} y`, algebraically equal to
/// `gamma Sigma Phi^H y` but free of the cancellation in `Sigma`.
pub fn posterior(
    phi: MatRef<'_, c64>,
    alpha: &[f64],
    gamma: f64,
    y: &[c64],
    want_c_inv: bool,
) -> Result<Posterior> {
    let m_t = phi.nrows();
    let m_s = phi.ncols();
    if alpha.len() != m_s {
        return Err(Error::LengthMismatch {
            expected: m_s,
            actual: alpha.len(),
        });
    }
    if y.len() != m_t {
        return Err(Error::LengthMismatch {
            expected: m_t,
            actual: y.len(),
        });
    }
    let act: Vec<usize> = (0..m_s).filter(|&i| alpha[i] > 0.0).collect();
    let a = act.len();
    let g = Mat::from_fn(m_t, a, |r, j| phi[(r, act[j])] * alpha[act[j]]);
    let phi_a = select_cols(phi, &act);
    flops::add((m_t * a) as u64);
    let mut c = linalg::mul_h(g.as_ref(), phi_a.as_ref());
    for i in 0..m_t {
        c[(i, i)] += c64::new(1.0 / gamma, 0.0);
    }
    let f = hpd_factor(c, "posterior covariance system")?;
    flops::add((m_t * m_t * a) as u64);
    let x = f.solve(&g);
    let gx = linalg::mul_adj(g.as_ref(), x.as_ref());
    let mut sig_a = Mat::from_fn(a, a, |i, j| -gx[(i, j)]);
    for j in 0..a {
        sig_a[(j, j)] += c64::new(alpha[act[j]], 0.0);
    }
    hermitize(&mut sig_a);
    let mu_a = {
        flops::add((m_t * a) as u64);
        let yc = Col::from_fn(m_t, |i| y[i]);
        x.adjoint() * &yc
    };
    let mut mu = vec![c64::new(0.0, 0.0); m_s];
    let mut sigma = Mat::zeros(m_s, m_s);
    for (j, &i) in act.iter().enumerate() {
        mu[i] = mu_a[j];
        for (k, &l) in act.iter().enumerate() {
            sigma[(l, i)] = sig_a[(k, j)];
        }
    }
    let c_inv = want_c_inv.then(|| hpd_inverse(&f));
    Ok(Posterior { mu, sigma, c_inv })
}

/// Writes the posterior for the state's `(alpha, gamma)` into the state and
/// returns `C^{-1}` when requested.
pub fn posterior_update(
    state: &mut PosteriorState,
    y: &[c64],
    phi: MatRef<'_, c64>,
    want_c_inv: bool,
) -> Result<Option<Mat<c64>>> {
    let post = posterior(phi, &state.alpha, state.gamma, y, want_c_inv)?;
    state.mu = post.mu;
    state.sigma = post.sigma;
    Ok(post.c_inv)
}

/// Prior-variance update `(sqrt(1 + 4 rho s) - 1) / (2 rho)`, written as
/// `2 s / (1 + sqrt(1 + 4 rho s))` to stay accurate for small `rho s`.
pub fn alpha_update(s: f64, rho: f64) -> f64 {
    let s = s.max(0.0);
    2.0 * s / (1.0 + (1.0 + 4.0 * rho * s).sqrt())
}

/// Expected residual energy `||y - Phi mu||^2 + gamma^{-1} sum (1 - Sigma_ii / alpha_i)`,
/// with pruned components contributing nothing.
pub fn expected_residual(state: &PosteriorState, y: &[c64], phi: MatRef<'_, c64>) -> f64 {
    let fit = matvec(phi, &state.mu);
    let resid: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).norm_sqr()).sum();
    let spread: f64 = state
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| 1.0 - state.sigma[(i, i)].re / a)
        .sum();
    resid + spread / state.gamma
}

/// EM update of `(alpha, gamma)` from the current posterior.
pub fn em_update(
    state: &PosteriorState,
    y: &[c64],
    phi: MatRef<'_, c64>,
    cfg: &SblConfig,
) -> (Vec<f64>, f64) {
    let m_s = state.alpha.len();
    flops::add(3 * m_s as u64 + (y.len() + m_s) as u64);
    let alpha = (0..m_s)
        .map(|i| {
            let s = state.mu[i].norm_sqr() + state.sigma[(i, i)].re;
            let a = alpha_update(s, cfg.rho);
            if a < PRUNE_FLOOR {
                0.0
            } else {
                a
            }
        })
        .collect();
    let e = expected_residual(state, y, phi);
    let gamma = (cfg.gamma_prior_c - 1.0 + y.len() as f64) / (cfg.gamma_prior_d + e);
    (alpha, gamma)
}

/// Indices of the `p_bar` largest entries, ties to the lower index.
pub fn select_active(alpha: &[f64], p_bar: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..alpha.len()).collect();
    idx.sort_by(|&a, &b| alpha[b].total_cmp(&alpha[a]).then(a.cmp(&b)));
    idx.truncate(p_bar.min(alpha.len()));
    idx
}

/// `||new - old|| / ||old||`; zero when both vanish.
pub fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let num: f64 = new
        .iter()
        .zip(old)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = old.iter().map(|v| v * v).sum::<f64>().sqrt();
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Stop when the relative change of `alpha` drops below the tolerance or the
/// iteration budget is spent.
pub fn check_converged(new: &[f64], old: &[f64], iter: usize, cfg: &SblConfig) -> bool {
    relative_change(new, old) < cfg.convergence_tol || iter >= cfg.max_iters
}

/// Estimated paths and their reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub n_paths: usize,
    pub gains: Vec<c64>,
    pub delays: Vec<f64>,
    pub dopplers: Vec<f64>,
    /// Set when no prior variance exceeded the support threshold.
    pub empty_support: bool,
}

impl ChannelEstimate {
    pub fn taps(&self) -> Vec<Tap> {
        (0..self.n_paths)
            .map(|i| Tap {
                gain: self.gains[i],
                delay: self.delays[i],
                doppler: self.dopplers[i],
            })
            .collect()
    }

    /// Reconstructed DAF-domain channel matrix.
    pub fn h_matrix(&self, cfg: &AfdmConfig) -> Mat<c64> {
        equiv_matrix(&self.taps(), cfg)
    }
}

/// Support `{i : alpha_i > eps}` with gains `mu_i` at the grid's current
/// anchors, plus `extra_doppler` when the dictionary used fixed offsets.
pub fn extract_estimate(
    mu: &[c64],
    alpha: &[f64],
    grid: &VirtualGrid,
    extra_doppler: Option<&[f64]>,
    cfg: &SblConfig,
) -> ChannelEstimate {
    let support: Vec<usize> = (0..alpha.len())
        .filter(|&i| alpha[i] > cfg.support_threshold)
        .collect();
    let dopplers = support
        .iter()
        .map(|&i| grid.points[i].1 + extra_doppler.map_or(0.0, |b| b[i]))
        .collect();
    ChannelEstimate {
        n_paths: support.len(),
        gains: support.iter().map(|&i| mu[i]).collect(),
        delays: support.iter().map(|&i| grid.points[i].0).collect(),
        dopplers,
        empty_support: support.is_empty(),
    }
}

/// How the Doppler anchors of the active grid points move between
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Fixed grid, no off-grid handling.
    OnGrid,
    /// Local search over `r_nu / step + 1` offsets maximizing `Q / Z`.
    GridRefine { step: f64 },
    /// First-order offset solve with cumulative re-anchoring.
    GridEvolve,
    /// First-order offsets on a frozen grid: the dictionary is
    /// `Phi + Psi diag(beta)` and `beta` is re-solved every iteration.
    FixedGridOffGrid,
    /// Grid at the true path parameters, no update. The caller supplies the
    /// genie model.
    Genie,
}

/// Per-iteration record.
#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub iter: usize,
    pub alpha_change: f64,
    pub gamma: f64,
    pub alpha: Vec<f64>,
    pub mu: Vec<c64>,
    pub dopplers: Vec<f64>,
    pub estimate: ChannelEstimate,
    pub flops: u64,
}

/// Outcome of an estimator run.
#[derive(Debug, Clone)]
pub struct SblRun {
    pub estimate: ChannelEstimate,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    /// True when the tolerance, not the budget, stopped the loop.
    pub converged: bool,
    pub model: MeasurementModel,
}

impl SblRun {
    /// Mean operation count per iteration.
    pub fn flops_per_iter(&self) -> u64 {
        if self.trace.is_empty() {
            return 0;
        }
        self.trace.iter().map(|t| t.flops).sum::<u64>() / self.trace.len() as u64
    }
}

/// Posterior computation used by the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Scheme {
    Centralized,
    Distributed { groups: usize },
}

/// Runs the centralized estimator.
pub fn run_sbl(
    obs: &PilotObservation,
    model: MeasurementModel,
    cfg: &SblConfig,
    strategy: Strategy,
) -> Result<SblRun> {
    run_loop(obs, model, cfg, strategy, Scheme::Centralized)
}

pub(crate) fn run_loop(
    obs: &PilotObservation,
    mut model: MeasurementModel,
    cfg: &SblConfig,
    strategy: Strategy,
    scheme: Scheme,
) -> Result<SblRun> {
    cfg.validate()?;
    if obs.y_t.len() != model.m_t() {
        return Err(Error::LengthMismatch {
            expected: model.m_t(),
            actual: obs.y_t.len(),
        });
    }
    if let Strategy::GridRefine { step } = strategy {
        grid_update::candidate_offsets(model.grid.r_nu, step)?;
    }
    let y = obs.y_t.as_slice();
    let m_s = model.m_s();
    let mut state = init_state(obs, m_s)?;
    let fixed_grid = strategy == Strategy::FixedGridOffGrid;
    let mut og_beta = vec![0.0; m_s];
    let mut trace = Vec::new();
    let want_c_inv = matches!(strategy, Strategy::GridRefine { .. });

    loop {
        let start = flops::read();
        let phi_eff: Cow<'_, Mat<c64>> = if fixed_grid {
            let mut m = model.phi.clone();
            for (j, &b) in og_beta.iter().enumerate() {
                if b != 0.0 {
                    for r in 0..m.nrows() {
                        m[(r, j)] += model.psi[(r, j)] * b;
                    }
                }
            }
            Cow::Owned(m)
        } else {
            Cow::Borrowed(&model.phi)
        };

        let c_inv = match scheme {
            Scheme::Centralized => {
                posterior_update(&mut state, y, phi_eff.as_ref().as_ref(), want_c_inv)?
            }
            Scheme::Distributed { groups } => distributed::fused_update(
                &mut state,
                y,
                phi_eff.as_ref().as_ref(),
                groups,
                want_c_inv,
            )?,
        };
        let (alpha_new, gamma_new) = em_update(&state, y, phi_eff.as_ref().as_ref(), cfg);
        let active = select_active(&alpha_new, cfg.p_bar);

        match strategy {
            Strategy::OnGrid | Strategy::Genie => {}
            Strategy::GridRefine { step } => {
                let c_inv = c_inv.as_ref().expect("C^{-1} requested for refinement");
                let betas = grid_update::refine_active(
                    &active,
                    &state.alpha,
                    c_inv.as_ref(),
                    y,
                    &model,
                    step,
                )?;
                reanchor(&mut model, &active, &betas);
            }
            Strategy::GridEvolve => {
                let betas =
                    grid_update::evolve_offsets(&state.mu, &state.sigma, y, &model, &active);
                reanchor(&mut model, &active, &betas);
            }
            Strategy::FixedGridOffGrid => {
                let betas =
                    grid_update::evolve_offsets(&state.mu, &state.sigma, y, &model, &active);
                og_beta.fill(0.0);
                for (&p, &b) in active.iter().zip(&betas) {
                    og_beta[p] = b;
                }
            }
        }

        let change = relative_change(&alpha_new, &state.alpha);
        let tol_hit = change < cfg.convergence_tol;
        state.alpha = alpha_new;
        state.gamma = gamma_new;
        let estimate = extract_estimate(
            &state.mu,
            &state.alpha,
            &model.grid,
            fixed_grid.then_some(og_beta.as_slice()),
            cfg,
        );
        trace.push(TraceEntry {
            iter: state.iter,
            alpha_change: change,
            gamma: state.gamma,
            alpha: state.alpha.clone(),
            mu: state.mu.clone(),
            dopplers: model.grid.points.iter().map(|p| p.1).collect(),
            estimate,
            flops: flops::read().wrapping_sub(start),
        });
        if tol_hit || state.iter >= cfg.max_iters {
            let last = trace.last().expect("one iteration ran");
            return Ok(SblRun {
                estimate: last.estimate.clone(),
                iterations: state.iter,
                converged: tol_hit,
                trace,
                model,
            });
        }
        state.iter += 1;
    }
}

/// Moves the anchors of `active` by `betas` and rebuilds the changed columns.
fn reanchor(model: &mut MeasurementModel, active: &[usize], betas: &[f64]) {
    grid_update::apply_grid_update(&mut model.grid, active, betas);
    let changed: Vec<usize> = active
        .iter()
        .zip(betas)
        .filter(|(_, &b)| b != 0.0)
        .map(|(&p, _)| p)
        .collect();
    model.rebuild_columns(&changed);
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use crate::channel::equiv_matrix;
    use crate::dictionary::Dictionary;
    use crate::frame::{extract_window, FrameLayout};
    use crate::linalg::entries;
    use crate::modem::DEFAULT_C2;
    use faer::linalg::solvers::DenseSolveCore;
    use faer::Side;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rc(rng: &mut ChaCha8Rng) -> c64 {
        c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn max_abs(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
        entries(a)
            .zip(entries(b))
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn woodbury_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (m, s) = (8, 12);
        let phi = Mat::from_fn(m, s, |_, _| rc(&mut rng));
        let y: Vec<c64> = (0..m).map(|_| rc(&mut rng)).collect();
        let alpha: Vec<f64> = (0..s).map(|_| rng.random_range(0.1..2.0)).collect();
        let gamma = 3.0;
        let post = posterior(phi.as_ref(), &alpha, gamma, &y, true).unwrap();
        let gram = phi.adjoint() * &phi;
        let mut prec = Mat::from_fn(s, s, |i, j| gram[(i, j)] * gamma);
        for i in 0..s {
            prec[(i, i)] += c64::new(1.0 / alpha[i], 0.0);
        }
        let sigma = prec.partial_piv_lu().inverse();
        let yc = Col::from_fn(m, |i| y[i]);
        let mu = &sigma * phi.adjoint() * &yc;
        assert!(max_abs(post.sigma.as_ref(), sigma.as_ref()) < 1e-9);
        for i in 0..s {
            assert!((post.mu[i] - mu[i] * gamma).norm() < 1e-9);
        }
        let mut c =
            &phi * Mat::from_fn(s, s, |i, j| {
                c64::new(if i == j { alpha[i] } else { 0.0 }, 0.0)
            }) * phi.adjoint();
        for i in 0..m {
            c[(i, i)] += c64::new(1.0 / gamma, 0.0);
        }
        let prod = &c * post.c_inv.unwrap();
        assert!(max_abs(prod.as_ref(), Mat::<c64>::identity(m, m).as_ref()) < 1e-9);
    }

    #[test]
    fn identity_limit() {
        let n = 4;
        let phi = Mat::<c64>::identity(n, n);
        let y = vec![
            c64::new(1.0, -2.0),
            c64::new(0.5, 0.0),
            c64::new(0.0, 3.0),
            c64::new(-1.0, 1.0),
        ];
        let post = posterior(phi.as_ref(), &[1.0; 4], 1e12, &y, false).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert!((post.mu[i] - yi).norm() < 1e-9);
            assert!(post.sigma[(i, i)].re < 1e-9);
        }
    }

    #[test]
    fn pruned_components_are_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = Mat::from_fn(6, 5, |_, _| rc(&mut rng));
        let y: Vec<c64> = (0..6).map(|_| rc(&mut rng)).collect();
        let alpha = [1.0, 0.0, 0.5, 0.0, 2.0];
        let post = posterior(phi.as_ref(), &alpha, 10.0, &y, false).unwrap();
        for &i in &[1usize, 3] {
            assert_eq!(post.mu[i], c64::new(0.0, 0.0));
            for j in 0..5 {
                assert_eq!(post.sigma[(i, j)], c64::new(0.0, 0.0));
                assert_eq!(post.sigma[(j, i)], c64::new(0.0, 0.0));
            }
        }
        // The pruned component stays pruned through the EM step.
        let state = PosteriorState {
            mu: post.mu,
            sigma: post.sigma,
            alpha: alpha.to_vec(),
            gamma: 10.0,
            iter: 1,
        };
        let (a, _) = em_update(&state, &y, phi.as_ref(), &SblConfig::new(6, 5));
        assert_eq!((a[1], a[3]), (0.0, 0.0));
    }

    #[test]
    fn init_state_gamma() {
        let obs = |e: f64, m: usize| PilotObservation {
            y_t: vec![c64::new((e / m as f64).sqrt(), 0.0); m],
            window_start: 0,
            m_t: m,
        };
        let s = init_state(&obs(7600.0, 76), 3).unwrap();
        assert!((s.gamma - 1.0).abs() < 1e-12);
        let s = init_state(&obs(76.0, 76), 3).unwrap();
        assert!((s.gamma - 100.0).abs() < 1e-9);
        assert_eq!(s.alpha, vec![1.0; 3]);
        assert!(matches!(
            init_state(&obs(0.0, 76), 3),
            Err(Error::ZeroObservation)
        ));
    }

    #[test]
    fn alpha_rule() {
        assert_eq!(alpha_update(0.0, 1e-2), 0.0);
        let rho: f64 = 1e-2;
        let s: f64 = 3.7;
        let direct = ((1.0 + 4.0 * rho * s).sqrt() - 1.0) / (2.0 * rho);
        assert!((alpha_update(s, rho) - direct).abs() < 1e-12);
        for &s in &[1e-6, 0.3, 5.0, 1e4] {
            let a = alpha_update(s, 1e-8);
            assert!(((a - s) / s).abs() < 1e-4);
        }
    }

    #[test]
    fn perfect_reconstruction_gamma() {
        let phi = Mat::<c64>::identity(3, 3);
        let y = vec![c64::new(1.0, 0.0); 3];
        let state = PosteriorState {
            mu: y.clone(),
            sigma: Mat::from_fn(3, 3, |i, j| c64::new(if i == j { 0.5 } else { 0.0 }, 0.0)),
            alpha: vec![0.5; 3],
            gamma: 1.0,
            iter: 1,
        };
        assert_eq!(expected_residual(&state, &y, phi.as_ref()), 0.0);
        let cfg = SblConfig::new(3, 3);
        let (_, g) = em_update(&state, &y, phi.as_ref(), &cfg);
        assert!((g - (cfg.gamma_prior_c - 1.0 + 3.0) / cfg.gamma_prior_d).abs() < 1e-3);
    }

    #[test]
    fn active_set_and_convergence_rules() {
        assert_eq!(select_active(&[3.0, 1.0, 2.0], 2), vec![0, 2]);
        assert_eq!(select_active(&[1.0; 4], 2), vec![0, 1]);
        assert_eq!(select_active(&[1.0, 5.0, 3.0], 3).len(), 3);
        let cfg = SblConfig::new(76, 72);
        assert_eq!(cfg.p_bar, 17);
        let old = vec![1.0; 72];
        assert!(check_converged(&old, &old, 1, &cfg));
        let new: Vec<f64> = old
            .iter()
            .map(|v| v * (1.0 + cfg.convergence_tol / 2.0))
            .collect();
        assert!(check_converged(&new, &old, 1, &cfg));
        let far = vec![9.0; 72];
        assert!(!check_converged(&far, &old, 1, &cfg));
        assert!(check_converged(&far, &old, cfg.max_iters, &cfg));
        assert_eq!(SblConfig::p_bar_for(76, 1), 1);
    }

    #[test]
    fn empty_support_is_flagged() {
        let grid = VirtualGrid::uniform(1, 0, 1.0, 1.0).unwrap();
        let est = extract_estimate(
            &[c64::new(1.0, 0.0); 6],
            &[1e-6; 6],
            &grid,
            None,
            &SblConfig::new(6, 6),
        );
        assert!(est.empty_support);
        assert_eq!(est.n_paths, 0);
        let cfg = AfdmConfig::new(256, 15e3, 4e9, 3, 7, 1, DEFAULT_C2).unwrap();
        assert!(entries(est.h_matrix(&cfg).as_ref()).all(|v| v == c64::new(0.0, 0.0)));
    }

    pub(crate) fn pilot_only(taps: &[Tap]) -> (AfdmConfig, FrameLayout, PilotObservation) {
        let cfg = AfdmConfig::new(256, 15e3, 4e9, 3, 7, 1, DEFAULT_C2).unwrap();
        let layout = FrameLayout::new(&cfg, vec![c64::new(20.0, 20.0); 5], 30.0).unwrap();
        let x = layout
            .assemble(256, &vec![c64::new(0.0, 0.0); layout.data_indices.len()])
            .unwrap();
        let h = equiv_matrix(taps, &cfg);
        let y = matvec(h.as_ref(), &x);
        let obs = extract_window(&y, &layout, &cfg).unwrap();
        (cfg, layout, obs)
    }

    fn default_model(cfg: &AfdmConfig, layout: &FrameLayout) -> MeasurementModel {
        let grid = VirtualGrid::uniform(cfg.l_max, cfg.k_max, 1.0, 1.0).unwrap();
        MeasurementModel::new(Dictionary::new(cfg, layout).unwrap(), grid)
    }

    #[test]
    fn noiseless_on_grid_recovery() {
        let h = c64::new(0.6, -0.8);
        let (cfg, layout, obs) = pilot_only(&[Tap {
            gain: h,
            delay: 3.0,
            doppler: -2.0,
        }]);
        let model = default_model(&cfg, &layout);
        let mut sc = SblConfig::new(model.m_t(), model.m_s());
        // Residual shrinkage of the gain scales with the stopping tolerance.
        sc.convergence_tol = 1e-10;
        sc.max_iters = 1000;
        let run = run_sbl(&obs, model, &sc, Strategy::OnGrid).unwrap();
        let est = &run.estimate;
        assert_eq!(est.n_paths, 1);
        assert_eq!((est.delays[0], est.dopplers[0]), (3.0, -2.0));
        assert!((est.gains[0] - h).norm() < 1e-6, "{:?}", est.gains[0]);
    }

    #[test]
    fn on_grid_channel_needs_no_offsets() {
        let taps = [
            Tap {
                gain: c64::new(0.7, 0.1),
                delay: 1.0,
                doppler: 2.0,
            },
            Tap {
                gain: c64::new(-0.2, 0.5),
                delay: 5.0,
                doppler: -1.0,
            },
        ];
        let (cfg, layout, obs) = pilot_only(&taps);
        let model = default_model(&cfg, &layout);
        let sc = SblConfig::new(model.m_t(), model.m_s());
        let plain = run_sbl(&obs, model.clone(), &sc, Strategy::OnGrid).unwrap();
        let evolved = run_sbl(&obs, model, &sc, Strategy::GridEvolve).unwrap();
        let d =
            crate::channel::tap_distance_sq(&plain.estimate.taps(), &evolved.estimate.taps(), &cfg);
        let e = crate::channel::tap_distance_sq(&taps, &[], &cfg);
        assert!(d / e < 1e-6, "{}", d / e);
    }

    #[test]
    fn grid_updates_beat_fixed_grid_on_fractional_doppler() {
        let taps = [Tap {
            gain: c64::new(0.8, 0.6),
            delay: 2.0,
            doppler: 1.37,
        }];
        let (cfg, layout, obs) = pilot_only(&taps);
        let model = default_model(&cfg, &layout);
        let sc = SblConfig::new(model.m_t(), model.m_s());
        let energy = crate::channel::tap_distance_sq(&taps, &[], &cfg);
        let err = |s: Strategy| {
            let run = run_sbl(&obs, model.clone(), &sc, s).unwrap();
            (
                crate::channel::tap_distance_sq(&taps, &run.estimate.taps(), &cfg) / energy,
                run,
            )
        };
        let (on, _) = err(Strategy::OnGrid);
        let (ge, _) = err(Strategy::GridEvolve);
        let (gr, run) = err(Strategy::GridRefine { step: 0.01 });
        assert!(ge < on, "{ge} vs {on}");
        assert!(gr < 1e-2 * on, "{gr} vs {on}");
        let est = &run.estimate;
        let strongest = (0..est.n_paths)
            .max_by(|&a, &b| est.gains[a].norm().total_cmp(&est.gains[b].norm()))
            .unwrap();
        assert_eq!(est.delays[strongest], 2.0);
        assert!(
            (est.dopplers[strongest] - 1.37).abs() < 0.006,
            "{}",
            est.dopplers[strongest]
        );
    }

    proptest! {
        #[test]
        fn sigma_is_hermitian_psd(seed in 0u64..100, gamma in 0.01f64..1e4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m, s) = (6, 9);
            let phi = Mat::from_fn(m, s, |_, _| rc(&mut rng));
            let y: Vec<c64> = (0..m).map(|_| rc(&mut rng)).collect();
            let alpha: Vec<f64> = (0..s).map(|i| if i % 4 == 0 { 0.0 } else { rng.random_range(0.0..3.0) }).collect();
            let post = posterior(phi.as_ref(), &alpha, gamma, &y, false).unwrap();
            prop_assert!(max_abs(post.sigma.as_ref(), post.sigma.adjoint().to_owned().as_ref()) == 0.0);
            let trace: f64 = (0..s).map(|i| post.sigma[(i, i)].re).sum();
            let eig = post.sigma.self_adjoint_eigenvalues(Side::Lower).unwrap();
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(min > -1e-10 * trace.max(1e-300));
        }

        #[test]
        fn alpha_is_monotone(s1 in 0.0f64..1e3, ds in 1e-6f64..1e2, rho in 1e-6f64..1.0) {
            prop_assert!(alpha_update(s1 + ds, rho) > alpha_update(s1, rho));
        }
    }
}
