//! Doppler updates of the active grid points.
//!
//! Grid refinement scores a discrete set of candidate offsets by the
//! single-point marginal likelihood with that point's own contribution
//! removed from `C`. Grid evolution solves the first-order expansion
//! `Phi(nu + beta) ~ Phi(nu) + Psi(nu) beta` for the offsets that minimize the
//! expected residual, then folds them into the anchors.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::prelude::*;

use crate::dictionary::{MeasurementModel, VirtualGrid};
use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{dot, entries, matvec, mul, mul_adj, select_cols, sym_condition};

/// Sherman-Morrison denominators below this trigger a direct inversion.
const DOWNDATE_FLOOR: f64 = 1e-10;
/// Condition number above which the offset system is not solved directly.
const COND_LIMIT: f64 = 1e12;
/// Relative tolerance under which two candidate scores tie.
const TIE_TOL: f64 = 1e-12;

/// `(C - alpha phi phi^H)^{-1}` from `C^{-1}`.
///
/// Falls back to inverting `C - alpha phi phi^H` directly when the
/// Sherman-Morrison denominator `1 - alpha phi^H C^{-1} phi` is tiny.
pub fn rank_one_downdate(c_inv: MatRef<'_, c64>, alpha: f64, phi: &[c64]) -> Result<Mat<c64>> {
    rank_one_update(c_inv, -alpha, phi)
}

/// `(C + alpha phi phi^H)^{-1}` from `C^{-1}` for any real `alpha`.
pub fn rank_one_update(c_inv: MatRef<'_, c64>, alpha: f64, phi: &[c64]) -> Result<Mat<c64>> {
    let n = c_inv.nrows();
    if phi.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: phi.len(),
        });
    }
    if alpha == 0.0 {
        return Ok(c_inv.to_owned());
    }
    let u = matvec(c_inv, phi);
    let denom = 1.0 + alpha * dot(phi, &u).re;
    flops::add((n * n) as u64);
    if denom.abs() >= DOWNDATE_FLOOR {
        let s = alpha / denom;
        return Ok(Mat::from_fn(n, n, |i, j| {
            c_inv[(i, j)] - u[i] * u[j].conj() * s
        }));
    }
    let c = c_inv.partial_piv_lu().inverse();
    flops::add((2 * n * n * n) as u64);
    let shifted = Mat::from_fn(n, n, |i, j| c[(i, j)] + phi[i] * phi[j].conj() * alpha);
    let lu = shifted.partial_piv_lu();
    let inv = lu.inverse();
    if entries(inv.as_ref()).all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular("rank-one downdate"))
    }
}

/// `Z = Re(phi^H C^{-1} phi)` and `Q = |phi^H C^{-1} y|^2`.
pub fn zq_stats(phi: &[c64], c_minus_inv: MatRef<'_, c64>, y: &[c64]) -> (f64, f64) {
    let w = matvec(c_minus_inv, phi);
    let z = dot(phi, &w).re;
    let q = dot(&w, y).norm_sqr();
    (z, q)
}

/// Maximizer of the single-point marginal likelihood in `alpha`,
/// `max(0, (Q - Z) / Z^2)`.
pub fn optimal_alpha(z: f64, q: f64) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::Singular("non-positive Z in point likelihood"));
    }
    Ok(((q - z) / (z * z)).max(0.0))
}

/// Candidate offsets `-r_nu / 2 + j step`, `j = 0..=r_nu / step`.
pub fn candidate_offsets(r_nu: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(r_nu > 0.0) {
        return Err(Error::InvalidConfig(
            "refinement step must be positive".into(),
        ));
    }
    let ratio = r_nu / step;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "refinement step {step} does not divide the Doppler resolution {r_nu}"
        )));
    }
    let count = ratio.round() as usize + 1;
    Ok((0..count).map(|j| -r_nu / 2.0 + j as f64 * step).collect())
}

/// Offset of grid point `p` maximizing `Q / Z` over the candidates, given
/// `C^{-1}` built with prior variance `alpha_p` on `p`. Scores within
/// `TIE_TOL` (relative) resolve to the smallest `|beta|`. Every candidate with
/// `Q <= Z` has the same pruned objective, so such candidates tie at 1.
pub fn refine_grid_point(
    p: usize,
    alpha_p: f64,
    c_inv: MatRef<'_, c64>,
    y: &[c64],
    model: &MeasurementModel,
    step: f64,
) -> Result<f64> {
    let cands = candidate_offsets(model.grid.r_nu, step)?;
    let m_t = model.m_t();
    let phi_p: Vec<c64> = model.phi.col(p).iter().copied().collect();
    let c_minus = rank_one_downdate(c_inv, alpha_p, &phi_p)?;
    let (delay, anchor) = model.grid.points[p];
    let (lo, hi) = model.grid.cell(p);
    let cands: Vec<f64> = cands
        .into_iter()
        .filter(|b| anchor + b >= lo - 1e-12 && anchor + b <= hi + 1e-12)
        .collect();
    let mut cand = Mat::<c64>::zeros(m_t, cands.len());
    let mut col = vec![c64::new(0.0, 0.0); m_t];
    for (j, &b) in cands.iter().enumerate() {
        model.dict.column_into(delay, anchor + b, &mut col, None);
        for r in 0..m_t {
            cand[(r, j)] = col[r];
        }
    }
    let w = mul(c_minus.as_ref(), cand.as_ref());
    let mut best: Option<(f64, f64)> = None;
    for (j, &b) in cands.iter().enumerate() {
        let cj: Vec<c64> = cand.col(j).iter().copied().collect();
        let wj: Vec<c64> = w.col(j).iter().copied().collect();
        let z = dot(&cj, &wj).re;
        let q = dot(&wj, y).norm_sqr();
        if !(z > 0.0) {
            continue;
        }
        // Candidates with Q <= Z all give the same objective value.
        let score = if q > z { q / z } else { 1.0 };
        best = match best {
            None => Some((score, b)),
            Some((s, bb)) => {
                let tie = (score - s).abs() <= TIE_TOL * s.abs().max(score.abs());
                if (tie && b.abs() < bb.abs()) || (!tie && score > s) {
                    Some((score, b))
                } else {
                    Some((s, bb))
                }
            }
        };
    }
    Ok(best.map_or(0.0, |(_, b)| b))
}

/// Refinement offsets for every active point. All points are scored against
/// the same `C^{-1}`, so the updates are simultaneous.
pub fn refine_active(
    active: &[usize],
    alpha: &[f64],
    c_inv: MatRef<'_, c64>,
    y: &[c64],
    model: &MeasurementModel,
    step: f64,
) -> Result<Vec<f64>> {
    active
        .iter()
        .map(|&p| refine_grid_point(p, alpha[p], c_inv, y, model, step))
        .collect()
}

/// Quadratic model of the expected residual in the active offsets:
/// `E||y - (Phi + Psi_P diag(beta)) h||^2 = const + beta^T A beta - 2 b^T beta`.
///
/// `A = Re{conj(Psi_P^H Psi_P) .* (mu_P mu_P^H + Sigma_PP)}`,
/// `b = Re{conj(mu_P) .* Psi_P^H (y - Phi mu) - diag(Psi_P^H Phi Sigma_{:,P})}`.
pub fn offset_system(
    mu: &[c64],
    sigma: &Mat<c64>,
    y: &[c64],
    phi: MatRef<'_, c64>,
    psi: MatRef<'_, c64>,
    active: &[usize],
) -> (Mat<f64>, Vec<f64>) {
    let np = active.len();
    let psi_p = select_cols(psi, active);
    let gram = mul_adj(psi_p.as_ref(), psi_p.as_ref());
    flops::add((3 * np * np) as u64);
    let a = Mat::from_fn(np, np, |j, k| {
        let (pj, pk) = (active[j], active[k]);
        let r = mu[pj] * mu[pk].conj() + sigma[(pj, pk)];
        (gram[(j, k)].conj() * r).re
    });
    let fit = matvec(phi, mu);
    let resid: Vec<c64> = y.iter().zip(&fit).map(|(a, b)| a - b).collect();
    let proj = {
        flops::add((psi_p.nrows() * np) as u64);
        let r = Col::from_fn(resid.len(), |i| resid[i]);
        psi_p.adjoint() * &r
    };
    let sig_cols = Mat::from_fn(sigma.nrows(), np, |i, j| sigma[(i, active[j])]);
    let phi_sig = mul(phi, sig_cols.as_ref());
    let b = (0..np)
        .map(|j| {
            let d: c64 = psi_p
                .col(j)
                .iter()
                .zip(phi_sig.col(j).iter())
                .map(|(p, s)| p.conj() * s)
                .sum();
            (mu[active[j]].conj() * proj[j] - d).re
        })
        .collect();
    flops::add((psi_p.nrows() * np + 2 * np) as u64);
    (a, b)
}

/// One Jacobi sweep `beta_j = (b_j - sum_{k != j} A_jk s_k) / A_jj`
/// from `start`. Coordinates with a vanishing diagonal keep their start value.
pub fn coordinate_sweep(a: MatRef<'_, f64>, b: &[f64], start: &[f64]) -> Vec<f64> {
    let n = b.len();
    flops::add((n * n) as u64);
    (0..n)
        .map(|j| {
            let ajj = a[(j, j)];
            if !(ajj.abs() > f64::MIN_POSITIVE * 1e10) {
                return start[j];
            }
            let off: f64 = (0..n)
                .filter(|&k| k != j)
                .map(|k| a[(j, k)] * start[k])
                .sum();
            (b[j] - off) / ajj
        })
        .collect()
}

/// Minimizer of `beta^T A beta - 2 b^T beta` clipped to `[-r_nu/2, r_nu/2]`.
/// Ill-conditioned systems take one coordinate sweep from zero instead.
pub fn solve_offsets(a: MatRef<'_, f64>, b: &[f64], r_nu: f64) -> Vec<f64> {
    let n = b.len();
    if n == 0 {
        return Vec::new();
    }
    flops::add((n * n * n + n * n) as u64);
    let direct = if sym_condition(a) < COND_LIMIT {
        let rhs = Col::from_fn(n, |i| b[i]);
        let x = a.partial_piv_lu().solve(&rhs);
        let v: Vec<f64> = x.iter().copied().collect();
        v.iter().all(|x| x.is_finite()).then_some(v)
    } else {
        None
    };
    let beta = direct.unwrap_or_else(|| coordinate_sweep(a, b, &vec![0.0; n]));
    let half = r_nu / 2.0;
    beta.into_iter().map(|x| x.clamp(-half, half)).collect()
}

/// Evolution offsets for the active points of `model`.
pub fn evolve_offsets(
    mu: &[c64],
    sigma: &Mat<c64>,
    y: &[c64],
    model: &MeasurementModel,
    active: &[usize],
) -> Vec<f64> {
    let (a, b) = offset_system(mu, sigma, y, model.phi.as_ref(), model.psi.as_ref(), active);
    let beta = solve_offsets(a.as_ref(), &b, model.grid.r_nu);
    active
        .iter()
        .zip(beta)
        .map(|(&p, x)| {
            let (lo, hi) = model.grid.cell(p);
            let k = model.grid.points[p].1;
            x.clamp(lo - k, hi - k)
        })
        .collect()
}

/// Moves each active anchor by its offset and clears the stored offsets.
pub fn apply_grid_update(grid: &mut VirtualGrid, active: &[usize], offsets: &[f64]) {
    for (&p, &b) in active.iter().zip(offsets) {
        grid.points[p].1 += b + grid.offsets[p];
        grid.offsets[p] = 0.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitize;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut ChaCha8Rng) -> c64 {
        c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_hpd(n: usize, rng: &mut ChaCha8Rng) -> Mat<c64> {
        let g = Mat::from_fn(n, n, |_, _| rand_c(rng));
        let mut c = &g * g.adjoint();
        for i in 0..n {
            c[(i, i)] += c64::new(n as f64, 0.0);
        }
        hermitize(&mut c);
        c
    }

    fn max_abs(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                m = m.max((a[(i, j)] - b[(i, j)]).norm());
            }
        }
        m
    }

    #[test]
    fn downdate_matches_direct_inverse_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let c = random_hpd(n, &mut rng);
        let phi: Vec<c64> = (0..n).map(|_| rand_c(&mut rng)).collect();
        let alpha = 0.7;
        let c_inv = c.partial_piv_lu().inverse();
        let down = rank_one_downdate(c_inv.as_ref(), alpha, &phi).unwrap();
        let c_minus = Mat::from_fn(n, n, |i, j| c[(i, j)] - phi[i] * phi[j].conj() * alpha);
        let direct = c_minus.partial_piv_lu().inverse();
        assert!(max_abs(down.as_ref(), direct.as_ref()) < 1e-10);
        let back = rank_one_update(down.as_ref(), alpha, &phi).unwrap();
        assert!(max_abs(back.as_ref(), c_inv.as_ref()) < 1e-10);
    }

    #[test]
    fn near_singular_denominator_uses_direct_inverse() {
        // C = I + phi phi^H with alpha = 1 removes the whole rank-one part.
        let n = 4;
        let phi: Vec<c64> = (0..n).map(|i| c64::new(i as f64 + 1.0, 0.5)).collect();
        let c = Mat::from_fn(n, n, |i, j| {
            phi[i] * phi[j].conj()
                + if i == j {
                    c64::new(1.0, 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
        });
        let c_inv = c.partial_piv_lu().inverse();
        let down = rank_one_downdate(c_inv.as_ref(), 1.0, &phi).unwrap();
        let eye = Mat::<c64>::identity(n, n);
        assert!(max_abs(down.as_ref(), eye.as_ref()) < 1e-9);
    }

    #[test]
    fn point_likelihood_identity() {
        // With C_{-p} fixed, L(alpha) = -ln(1 + alpha Z) + Q / (Z^{-1} + alpha) - const
        // equals -ln det C - y^H C^{-1} y up to a constant; its argmax matches.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let c_minus = random_hpd(n, &mut rng);
        let phi: Vec<c64> = (0..n).map(|_| rand_c(&mut rng) * 3.0).collect();
        let y: Vec<c64> = (0..n).map(|_| rand_c(&mut rng) * 4.0).collect();
        let cm_inv = c_minus.partial_piv_lu().inverse();
        let (z, q) = zq_stats(&phi, cm_inv.as_ref(), &y);
        let full = |a: f64| {
            let c = Mat::from_fn(n, n, |i, j| c_minus[(i, j)] + phi[i] * phi[j].conj() * a);
            let lu = c.partial_piv_lu();
            let llt = c.llt(faer::Side::Lower).unwrap();
            let det: f64 = (0..n).map(|i| 2.0 * llt.L()[(i, i)].re.ln()).sum();
            let yc = Col::from_fn(n, |i| y[i]);
            let x = lu.solve(&yc);
            let quad: f64 = (0..n).map(|i| (y[i].conj() * x[i]).re).sum();
            -det - quad
        };
        // Differences between alphas agree for the two forms.
        let base = full(0.0);
        for &a in &[0.1, 0.5, 2.0, 7.0] {
            let lhs = full(a) - base;
            let rhs = -(1.0 + a * z).ln() + q * a / (1.0 + a * z);
            assert!(
                (lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
        let a_star = optimal_alpha(z, q).unwrap();
        if a_star > 0.0 {
            let f = |a: f64| -(1.0 + a * z).ln() + q * a / (1.0 + a * z);
            assert!(f(a_star) >= f(a_star * 1.01) && f(a_star) >= f(a_star * 0.99));
        }
    }

    #[test]
    fn candidate_grid() {
        assert_eq!(
            candidate_offsets(1.0, 0.25).unwrap(),
            vec![-0.5, -0.25, 0.0, 0.25, 0.5]
        );
        assert_eq!(candidate_offsets(1.0, 0.1).unwrap().len(), 11);
        assert!(candidate_offsets(1.0, 0.3).is_err());
        assert!(candidate_offsets(1.0, 0.0).is_err());
    }

    /// Expected residual `E||y - (Phi + Psi diag(beta)) h||^2` evaluated by
    /// brute force.
    fn expected_residual(
        beta: &[f64],
        mu: &[c64],
        sigma: &Mat<c64>,
        y: &[c64],
        phi: &Mat<c64>,
        psi: &Mat<c64>,
    ) -> f64 {
        let (m, s) = (phi.nrows(), phi.ncols());
        let d = Mat::from_fn(m, s, |i, j| phi[(i, j)] + psi[(i, j)] * beta[j]);
        let mut r = 0.0;
        for i in 0..m {
            let mut f = c64::new(0.0, 0.0);
            for j in 0..s {
                f += d[(i, j)] * mu[j];
            }
            r += (y[i] - f).norm_sqr();
        }
        let ds = &d * sigma;
        for i in 0..m {
            for j in 0..s {
                r += (ds[(i, j)] * d[(i, j)].conj()).re;
            }
        }
        r
    }

    #[test]
    fn quadratic_model_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (m, s) = (7, 5);
        let phi = Mat::from_fn(m, s, |_, _| rand_c(&mut rng));
        let psi = Mat::from_fn(m, s, |_, _| rand_c(&mut rng));
        let mu: Vec<c64> = (0..s).map(|_| rand_c(&mut rng)).collect();
        let g = Mat::from_fn(s, s, |_, _| rand_c(&mut rng) * 0.3);
        let mut sigma = &g * g.adjoint();
        hermitize(&mut sigma);
        let y: Vec<c64> = (0..m).map(|_| rand_c(&mut rng)).collect();
        let active = vec![0, 2, 4];
        let (a, b) = offset_system(&mu, &sigma, &y, phi.as_ref(), psi.as_ref(), &active);
        let embed = |x: &[f64]| {
            let mut full = vec![0.0; s];
            for (&p, &v) in active.iter().zip(x) {
                full[p] = v;
            }
            full
        };
        let f = |x: &[f64]| expected_residual(&embed(x), &mu, &sigma, &y, &phi, &psi);
        let x0 = [0.13, -0.21, 0.07];
        let h = 1e-5;
        for j in 0..3 {
            let mut xp = x0;
            let mut xm = x0;
            xp[j] += h;
            xm[j] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            let model: f64 = 2.0 * (0..3).map(|k| a[(j, k)] * x0[k]).sum::<f64>() - 2.0 * b[j];
            assert!(
                (fd - model).abs() < 1e-6 * (1.0 + fd.abs()),
                "{fd} vs {model}"
            );
        }
        // Exact quadratic: prediction of the change from 0 to x0.
        let quad: f64 = (0..3)
            .map(|j| x0[j] * (0..3).map(|k| a[(j, k)] * x0[k]).sum::<f64>() - 2.0 * b[j] * x0[j])
            .sum();
        assert!((f(&x0) - f(&[0.0; 3]) - quad).abs() < 1e-9);
    }

    #[test]
    fn direct_solution_is_a_sweep_fixed_point() {
        let a = Mat::from_fn(3, 3, |i, j| {
            [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]][i][j]
        });
        let b = [0.3, -0.2, 0.1];
        let beta = solve_offsets(a.as_ref(), &b, 10.0);
        let again = coordinate_sweep(a.as_ref(), &b, &beta);
        for (x, y) in beta.iter().zip(&again) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_falls_back_to_sweep() {
        // Zero row and column: direct solve refused, sweep leaves it at zero.
        let a = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { 2.0 } else { 0.0 });
        let beta = solve_offsets(a.as_ref(), &[0.4, 5.0], 1.0);
        assert_eq!(beta, vec![0.2, 0.0]);
        let clipped = solve_offsets(a.as_ref(), &[4.0, 0.0], 1.0);
        assert_eq!(clipped[0], 0.5);
    }

    #[test]
    fn apply_moves_anchors() {
        let mut g = VirtualGrid::uniform(1, 1, 1.0, 1.0).unwrap();
        g.offsets[2] = 0.1;
        let before = g.points.clone();
        apply_grid_update(&mut g, &[2, 5], &[0.25, -0.5]);
        assert!((g.points[2].1 - before[2].1 - 0.35).abs() < 1e-15);
        assert!((g.points[5].1 - before[5].1 + 0.5).abs() < 1e-15);
        assert_eq!(g.offsets[2], 0.0);
        assert_eq!(g.points[0], before[0]);
    }

    proptest! {
        #[test]
        fn update_inverts_downdate(seed in 0u64..200, alpha in 0.01f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random_hpd(5, &mut rng);
            let phi: Vec<c64> = (0..5).map(|_| rand_c(&mut rng)).collect();
            let c_inv = c.partial_piv_lu().inverse();
            let up = rank_one_update(c_inv.as_ref(), alpha, &phi).unwrap();
            let back = rank_one_downdate(up.as_ref(), alpha, &phi).unwrap();
            prop_assert!(max_abs(back.as_ref(), c_inv.as_ref()) < 1e-9);
            let (z, _) = zq_stats(&phi, c_inv.as_ref(), &phi);
            prop_assert!(z > 0.0);
        }
    }
}
