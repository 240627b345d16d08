//! The correction operator: mean-value projections onto H(π^(k)), the
//! pullback estimator of 𝔥, corrected-growth profiles, and coboundary
//! transfer-function estimation.

use crate::accel::AccelPath;
use crate::cocycle::{log_form_at_level, F64Cocycle, LogCocycle};
use crate::error::{Error, Result};
use crate::linalg::{dot, lu_solve, norm1, Frame};
use crate::num::{decimal_string, Ctx, Real};
use crate::singularity::{project_h, singularity_data};
use rug::ops::CompleteRound;
use serde::Serialize;

/// True when the cocycle is piecewise constant on its own family, so that
/// special sums and means reduce to exact integer-matrix arithmetic.
fn piecewise_constant_values(phi: &LogCocycle) -> Option<Vec<Real>> {
    if phi.cplus.iter().any(|c| !c.is_zero()) || phi.cminus.iter().any(|c| !c.is_zero()) {
        return None;
    }
    if phi.linear.slopes.iter().any(|s| !s.is_zero()) {
        return None;
    }
    let d = phi.d();
    if phi.linear.cuts.len() != d + 1 {
        return None;
    }
    let mut values = vec![phi.ctx.zero(); d];
    for p in 1..=d {
        let a = phi.domain.perm.letter_at(0, p);
        if phi.linear.cuts[p - 1] != phi.domain.left[a] {
            return None;
        }
        values[a] = phi.linear.intercepts[p - 1].clone();
    }
    Some(values)
}

/// Per-interval means of S(k)φ: M^(k)(S(k)φ) as a vector over letters.
/// Exact integer path for piecewise-constant cocycles; closed-form floor
/// integrals otherwise.
pub fn mean_projection(
    path: &AccelPath,
    k: usize,
    phi: &LogCocycle,
    budget: u64,
) -> Result<Vec<Real>> {
    let ctx = path.ctx;
    if let Some(values) = piecewise_constant_values(phi) {
        let q = &path.levels[k].q;
        return Ok(q.mul_real_vec(ctx, &values));
    }
    if path.levels[k].q.norm_f64() > budget as f64 {
        return Err(Error::BudgetExceeded(format!(
            "mean projection at level {k} exceeds the floor budget"
        )));
    }
    let d = path.d();
    let base = path.base();
    let iet_k = &path.levels[k].iet;
    let mut means = Vec::with_capacity(d);
    for a in 0..d {
        let q_a = path.height_u64(k, a)?;
        let mut acc = ctx.zero();
        // drive the tower walk by the floor midpoint: the endpoints of a
        // floor can sit exactly on division points, the midpoint cannot
        let half = (&iet_k.lengths[a] / &ctx.real_from_f64(2.0)).complete(ctx.prec);
        let mut mid = (&iet_k.left[a] + &half).complete(ctx.prec);
        for j in 0..q_a {
            let lo = (&mid - &half).complete(ctx.prec);
            let hi = (&mid + &half).complete(ctx.prec);
            acc += phi.integral(&lo, &hi)?;
            if j + 1 < q_a {
                mid = base.apply(&mid)?;
            }
        }
        means.push(acc / &iet_k.lengths[a]);
    }
    Ok(means)
}

/// M_H^(k): the mean projection followed by the exact orthogonal
/// projection onto H(π^(k)).
pub fn mh_projection(
    path: &AccelPath,
    k: usize,
    phi: &LogCocycle,
    budget: u64,
) -> Result<Vec<Real>> {
    let ctx = path.ctx;
    let means = mean_projection(path, k, phi, budget)?;
    let sing = singularity_data(&path.levels[k].iet.perm);
    Ok(project_h(ctx, &sing, &means))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub level: usize,
    pub norm_q: f64,
    pub l1_over_len: f64,
    pub balanced: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionReport {
    /// The estimated correction 𝔥(φ) as a vector over letters.
    pub h_correction: Vec<String>,
    /// Coordinates of 𝔥(φ) in the h_i basis.
    pub d_coeffs: Vec<f64>,
    /// ℓ¹ differences of successive pullback estimates.
    pub convergence: Vec<f64>,
    /// Levels used.
    pub levels: Vec<usize>,
    /// Corrected-growth profile rows (filled by `growth_profile`).
    pub growth_profile: Vec<ProfileRow>,
}

impl CorrectionReport {
    pub fn correction_reals(&self, ctx: Ctx) -> Vec<Real> {
        self.h_correction
            .iter()
            .map(|s| ctx.real_from_decimal(s).expect("stored decimal"))
            .collect()
    }
}

/// Estimate 𝔥(φ) by the finite pullback Q(k)⁻¹·M_H^(k)(S(k)φ) projected
/// onto F along the stable estimate, tracked over `k_range` for the
/// Cauchy convergence diagnostic.
pub fn estimate_correction(
    path: &AccelPath,
    phi: &LogCocycle,
    k_range: &[usize],
    f_frame: &Frame,
    stable: &Frame,
    budget: u64,
) -> Result<CorrectionReport> {
    let ctx = path.ctx;
    let d = path.d();
    let g = f_frame.width();
    if k_range.is_empty() {
        return Err(Error::ConfigInvalid("empty level range".into()));
    }
    // combined basis [F | Γ_s] of H(π^(0)); solve by normal equations
    let mut basis = f_frame.cols.clone();
    basis.extend(stable.cols.iter().cloned());
    let width = basis.len();
    let gram: Vec<Vec<Real>> = (0..width)
        .map(|i| (0..width).map(|j| dot(ctx, &basis[i], &basis[j])).collect())
        .collect();
    let mut estimates: Vec<(Vec<Real>, Vec<Real>)> = Vec::new(); // (f_part, coeffs)
    for &k in k_range {
        let m = mh_projection(path, k, phi, budget)?;
        let q = path.levels[k].q.to_real(ctx);
        let y = lu_solve(ctx, &q, &m).ok_or(Error::NoConvergence)?;
        let rhs: Vec<Real> = (0..width).map(|i| dot(ctx, &basis[i], &y)).collect();
        let coeffs = lu_solve(ctx, &gram, &rhs).ok_or(Error::NoConvergence)?;
        let mut f_part = vec![ctx.zero(); d];
        for i in 0..g {
            for t in 0..d {
                f_part[t] += (&coeffs[i] * &f_frame.cols[i][t]).complete(ctx.prec);
            }
        }
        estimates.push((f_part, coeffs[..g].to_vec()));
    }
    let convergence: Vec<f64> = estimates
        .windows(2)
        .map(|w| {
            let diff: Vec<Real> = w[1]
                .0
                .iter()
                .zip(&w[0].0)
                .map(|(a, b)| (a - b).complete(ctx.prec))
                .collect();
            norm1(ctx, &diff).to_f64()
        })
        .collect();
    let settled = convergence.last().is_some_and(|d| *d < 1e-9);
    if convergence.len() >= 4 && !settled {
        // the diffs must trend down (geometric decay up to ‖Z‖ noise); a
        // fitted doubling over the window means the estimates are drifting
        let xs: Vec<f64> = (0..convergence.len()).map(|i| i as f64).collect();
        let ys: Vec<f64> = convergence
            .iter()
            .map(|d| d.max(1e-300).ln())
            .collect();
        if let Some((slope, _)) = crate::num::linfit(&xs, &ys) {
            if slope * (convergence.len() - 1) as f64 > std::f64::consts::LN_2 {
                return Err(Error::NoConvergence);
            }
        }
    }
    let (h_correction, d_coeffs) = estimates.pop().expect("nonempty");
    Ok(CorrectionReport {
        h_correction: h_correction.iter().map(decimal_string).collect(),
        d_coeffs: d_coeffs.iter().map(|c| c.to_f64()).collect(),
        convergence,
        levels: k_range.to_vec(),
        growth_profile: Vec::new(),
    })
}

/// ‖S(k)φ‖_{L¹(I^(k))}/|I^(k)| per level k ≤ max_level with ‖Q(k)‖ under
/// budget: closed-form strips at the singular edges plus adaptive Simpson
/// on the interior of each level interval (f64 fast path).
pub fn growth_profile(
    path: &AccelPath,
    phi: &LogCocycle,
    max_level: usize,
    budget: u64,
) -> Result<Vec<ProfileRow>> {
    let ctx = path.ctx;
    let fast = F64Cocycle::from_cocycle(phi);
    let pc_values = piecewise_constant_values(phi);
    let mut rows = Vec::new();
    for k in 0..=max_level.min(path.depth()) {
        let norm_q = path.levels[k].q.norm_f64();
        if norm_q > budget as f64 {
            break;
        }
        let iet_k = &path.levels[k].iet;
        let total_k = iet_k.total.to_f64();
        let mut l1 = 0.0f64;
        if let Some(values) = &pc_values {
            // S(k)h is constant per level interval: exact sum
            let image = path.levels[k].q.mul_real_vec(ctx, values);
            for a in 0..path.d() {
                l1 += image[a].to_f64().abs() * iet_k.lengths[a].to_f64();
            }
        } else {
            for a in 0..path.d() {
                let q_a = path.height_u64(k, a)? as u64;
                let lo = iet_k.left[a].to_f64();
                let hi = iet_k.right[a].to_f64();
                let len = hi - lo;
                let strip = len * 2f64.powi(-40);
                // interior: adaptive Simpson on |S(k)φ|
                let f = |x: f64| fast.birkhoff(x, q_a).abs();
                let tol = 1e-8 * (1.0 + phi.norms().lv);
                l1 += adaptive_simpson(&f, lo + strip, hi - strip, tol, 24);
                // singular strips: closed form of the level-k skeleton
                let skeleton = log_form_at_level(path, k, phi)?;
                let a_lo = iet_k.left[a].clone() + ctx.real_from_f64(strip);
                let b_hi = iet_k.right[a].clone() - ctx.real_from_f64(strip);
                let left_strip = skeleton
                    .integral(&iet_k.left[a], &a_lo)?
                    .abs()
                    .to_f64();
                let right_strip = skeleton.integral(&b_hi, &iet_k.right[a])?.abs().to_f64();
                l1 += left_strip + right_strip;
            }
        }
        rows.push(ProfileRow {
            level: k,
            norm_q,
            l1_over_len: l1 / total_k,
            balanced: path.levels[k].balanced,
        });
    }
    Ok(rows)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = (a + m) / 2.0;
        let rm = (m + b) / 2.0;
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let m = (a + b) / 2.0;
    let fa = f(a);
    let fb = f(b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

/// Grid estimate of ℒ𝒱(S(k)φ): the exact invariant ℒ plus the sampled
/// variation of the BV remainder S(k)φ − (level-k skeleton).
pub fn special_lv_estimate(
    path: &AccelPath,
    k: usize,
    phi: &LogCocycle,
    grid_per_interval: usize,
) -> Result<f64> {
    let skeleton = log_form_at_level(path, k, phi)?;
    let fast = F64Cocycle::from_cocycle(phi);
    let fast_skel = F64Cocycle::from_cocycle(&skeleton);
    let iet_k = &path.levels[k].iet;
    let mut var = 0.0f64;
    for a in 0..path.d() {
        let q_a = path.height_u64(k, a)?;
        let lo = iet_k.left[a].to_f64();
        let hi = iet_k.right[a].to_f64();
        let len = hi - lo;
        let mut prev: Option<f64> = None;
        for i in 0..grid_per_interval {
            let t = (i as f64 + 0.5) / grid_per_interval as f64;
            let x = lo + t * len;
            let v = fast.birkhoff(x, q_a) - fast_skel.eval(x);
            if let Some(p) = prev {
                var += (v - p).abs();
            }
            prev = Some(v);
        }
    }
    Ok(phi.norms().l + var)
}

#[derive(Debug, Clone, Serialize)]
pub struct TransferEstimate {
    /// Sampled (n, g(Tⁿx₀)) pairs.
    pub samples: Vec<(u64, f64)>,
    pub sup_abs: f64,
    /// Sup of |φ^{(n)}(x₀)| over the scanned range.
    pub birkhoff_sup: f64,
}

/// Transfer-function sampling for coboundary diagnostics: g(Tⁿx₀) :=
/// g(x₀) − φ^{(n)}(x₀) with g(x₀) = 0. The cocycle must have zero log
/// constants (piecewise AC input). UnboundedDiagnostic when the sup passes
/// the threshold.
pub fn transfer_estimate(
    path: &AccelPath,
    phi: &LogCocycle,
    x0: &Real,
    n_max: u64,
    threshold: f64,
) -> Result<TransferEstimate> {
    if phi.cplus.iter().any(|c| !c.is_zero()) || phi.cminus.iter().any(|c| !c.is_zero()) {
        return Err(Error::ConfigInvalid(
            "transfer estimation needs zero log constants".into(),
        ));
    }
    let base = path.base();
    let mut y = x0.clone();
    let mut running = path.ctx.zero();
    let mut sup_abs = 0.0f64;
    let mut birkhoff_sup = 0.0f64;
    let stride = (n_max / 512).max(1);
    let mut samples = Vec::new();
    for n in 0..=n_max {
        if n % stride == 0 {
            samples.push((n, (-running.clone()).to_f64()));
        }
        let val = running.to_f64().abs();
        birkhoff_sup = birkhoff_sup.max(val);
        sup_abs = sup_abs.max(val);
        if sup_abs > threshold {
            return Err(Error::UnboundedDiagnostic(sup_abs));
        }
        if n < n_max {
            running += phi.eval(&y)?;
            y = base.apply(&y)?;
        }
    }
    Ok(TransferEstimate {
        samples,
        sup_abs,
        birkhoff_sup,
    })
}
