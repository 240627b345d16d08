//! Accelerated Rauzy-Veech induction: returns to a balanced set Y(R, δ),
//! the cocycle blocks Z(k) and products Q(k,l), Rokhlin tower bookkeeping,
//! point location in towers, the Diophantine series of the renormalization
//! record, and the UDC diagnostic fits.

use crate::error::{Error, Result};
use crate::iet::IetState;
use crate::linalg::IntMat;
use crate::num::{decimal_string, linfit, Ctx, Real};
use crate::rauzy::{nat_ext_step, StepRecord, ZipperedState};
use rug::ops::CompleteRound;
use rug::Integer;
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct BalanceParams {
    /// Hilbert-metric radius of the λ ball around the simplex center.
    pub radius: f64,
    /// Rectangle-height balance constant δ ∈ (0,1).
    pub delta: f64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        BalanceParams {
            radius: 2.0,
            delta: 0.1,
        }
    }
}

impl BalanceParams {
    /// The nested deeper set defining the secondary subsequence r_n:
    /// a strictly smaller radius and strictly stronger height balance.
    pub fn deep(&self) -> BalanceParams {
        BalanceParams {
            radius: 0.75 * self.radius,
            delta: (1.5 * self.delta).min((1.0 + self.delta) / 2.0),
        }
    }

    /// Membership in Y(R, δ).
    pub fn contains(&self, z: &ZipperedState) -> bool {
        let ctx = z.ctx;
        let mut lmax = z.lambda[0].clone();
        let mut lmin = z.lambda[0].clone();
        for l in &z.lambda[1..] {
            if l > &lmax {
                lmax = l.clone();
            }
            if l < &lmin {
                lmin = l.clone();
            }
        }
        if lmin.is_zero() {
            return false;
        }
        let hilbert = ctx.ln(&(lmax / lmin));
        if hilbert > self.radius {
            return false;
        }
        let thresh = z.max_height() * ctx.real_from_f64(self.delta);
        z.min_rect_height() > thresh
    }

    /// κ of condition (B1) implied by the Hilbert radius: |I| ≤ κ·|I_α|
    /// whenever max λ / min λ ≤ e^R.
    pub fn kappa(&self, d: usize) -> f64 {
        d as f64 * self.radius.exp()
    }
}

/// One recorded level of the acceleration.
#[derive(Debug, Clone)]
pub struct Level {
    /// RV steps from the base, the accelerating time n_k.
    pub time: usize,
    /// Normalized natural-extension point at this level.
    pub state: ZipperedState,
    /// Induced IET on [0, |I^(k)|) at the original scale.
    pub iet: IetState,
    /// Z(k): transition block from level k−1 (identity at the base).
    pub z: IntMat,
    /// Q(0,k) = Z(k)···Z(1).
    pub q: IntMat,
    /// Return times Q_α(k) (row sums of Q(0,k)).
    pub heights: Vec<Integer>,
    /// Level lies in Y(R, δ).
    pub balanced: bool,
    /// Level lies in the nested deeper set (the r_n subsequence).
    pub deep_return: bool,
    /// Common tower travel p_k = max(1, ⌊t^(k)/max_α h_α⌋), clamped to
    /// min_α Q_α(k).
    pub p_travel: Integer,
}

/// The full renormalization record along an acceleration.
#[derive(Debug, Clone)]
pub struct AccelPath {
    pub ctx: Ctx,
    pub levels: Vec<Level>,
    /// Every elementary step in order.
    pub records: Vec<StepRecord>,
    /// records[a..b] produced level k from level k−1 (empty range at k=0).
    pub record_ranges: Vec<(usize, usize)>,
}

impl AccelPath {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn d(&self) -> usize {
        self.levels[0].iet.d()
    }

    pub fn base(&self) -> &IetState {
        &self.levels[0].iet
    }

    pub fn level(&self, k: usize) -> &Level {
        &self.levels[k]
    }

    /// Indices of levels marked as balanced returns (excluding the base).
    pub fn balanced_levels(&self) -> Vec<usize> {
        (1..self.levels.len())
            .filter(|&k| self.levels[k].balanced)
            .collect()
    }

    /// The r_n subsequence: levels returning to the nested deeper set,
    /// with the r_0 = 0 convention.
    pub fn deep_levels(&self) -> Vec<usize> {
        let mut out = vec![0usize];
        out.extend((1..self.levels.len()).filter(|&k| self.levels[k].deep_return));
        out
    }

    /// Q(k,l) = Z(l)···Z(k+1); exact big-integer product, Q(k,k) = Id.
    pub fn q_product(&self, k: usize, l: usize) -> IntMat {
        assert!(k <= l && l <= self.depth());
        let mut q = IntMat::identity(self.d());
        for j in k + 1..=l {
            q = self.levels[j].z.mul(&q);
        }
        q
    }

    /// Height Q_α(k) as u64; DepthExceeded when it no longer fits.
    pub fn height_u64(&self, k: usize, letter: usize) -> Result<u64> {
        self.levels[k].heights[letter]
            .to_u64()
            .ok_or(Error::DepthExceeded)
    }

    /// Locate x in the level-k Rokhlin towers: the unique (α, j) with
    /// x ∈ T^j I^(k)_α and 0 ≤ j < Q_α(k). Walks levels downward, cost
    /// O(Σ_l ‖Z(l+1)‖) inverse steps rather than O(‖Q(k)‖).
    pub fn locate(&self, k: usize, x: &Real) -> Result<(usize, Integer)> {
        let base = self.base();
        if self.on_division_point(0, x) {
            return Err(Error::OnBoundary);
        }
        let mut y = x.clone();
        let mut floor = Integer::new();
        base.letter_of(&y)?;
        for l in 0..k {
            let level_iet = &self.levels[l].iet;
            let next_total = &self.levels[l + 1].iet.total;
            let mut hops = 0usize;
            let hop_cap = 4 * self.levels[l + 1].z.norm().to_usize().unwrap_or(usize::MAX) + 8;
            while &y >= next_total {
                let prev = level_iet.apply_inv(&y)?;
                let letter = level_iet.letter_of(&prev)?;
                floor += &self.levels[l].heights[letter];
                y = prev;
                hops += 1;
                if hops > hop_cap {
                    return Err(Error::InternalInconsistency(
                        "tower walk exceeded the Z-block bound".into(),
                    ));
                }
            }
            if self.on_division_point(l + 1, &y) {
                return Err(Error::OnBoundary);
            }
        }
        let letter = self.levels[k].iet.letter_of(&y)?;
        Ok((letter, floor))
    }

    fn on_division_point(&self, level: usize, y: &Real) -> bool {
        let iet = &self.levels[level].iet;
        (0..iet.d()).any(|a| iet.perm.top(a) != 1 && y == &iet.left[a])
    }

    /// Re-base the record at level `w`: the experiment origin moves to the
    /// induced IET rescaled to unit total length, levels re-index, and
    /// Q-products restart from identity. Levels before `w` (the warm-up)
    /// are dropped.
    pub fn rebase(&self, w: usize, params: &BalanceParams) -> AccelPath {
        assert!(w <= self.depth());
        let ctx = self.ctx;
        let d = self.d();
        let mut levels = Vec::with_capacity(self.levels.len() - w);
        let mut q = IntMat::identity(d);
        let base_time = self.levels[w].time;
        let scale = self.levels[w].iet.total.clone();
        let base_hmax = self.levels[w].state.max_height();
        let one = ctx.one();
        for (i, old) in self.levels[w..].iter().enumerate() {
            let z = if i == 0 {
                IntMat::identity(d)
            } else {
                old.z.clone()
            };
            q = z.mul(&q);
            let lengths: Vec<Real> = old
                .iet
                .lengths
                .iter()
                .map(|l| (l / &scale).complete(ctx.prec))
                .collect();
            let iet = IetState::new(ctx, old.iet.perm.clone(), lengths)
                .expect("rescaled lengths stay positive");
            levels.push(make_level(
                ctx,
                old.time - base_time,
                old.state.clone(),
                iet,
                z,
                q.clone(),
                params,
                &one,
                &base_hmax,
            ));
        }
        let rec_base = self.record_ranges[w].1;
        let records = self.records[rec_base..].to_vec();
        let mut record_ranges = vec![(0, 0)];
        record_ranges.extend(
            self.record_ranges[w + 1..]
                .iter()
                .map(|&(a, b)| (a - rec_base, b - rec_base)),
        );
        AccelPath {
            ctx: self.ctx,
            levels,
            records,
            record_ranges,
        }
    }

    /// Serialize to the on-disk schema.
    pub fn to_json(&self) -> PathJson {
        PathJson {
            precision_bits: self.ctx.prec,
            depth: self.depth(),
            times: self.levels.iter().map(|l| l.time).collect(),
            z_matrices: self
                .levels
                .iter()
                .skip(1)
                .map(|l| int_mat_strings(&l.z))
                .collect(),
            lambdas: self
                .levels
                .iter()
                .map(|l| l.state.lambda.iter().map(decimal_string).collect())
                .collect(),
            balanced: self.levels.iter().map(|l| l.balanced).collect(),
            r_levels: self.deep_levels(),
        }
    }
}

fn int_mat_strings(m: &IntMat) -> Vec<Vec<String>> {
    (0..m.n)
        .map(|i| (0..m.n).map(|j| m[(i, j)].to_string()).collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PathJson {
    pub precision_bits: u32,
    pub depth: usize,
    pub times: Vec<usize>,
    pub z_matrices: Vec<Vec<Vec<String>>>,
    pub lambdas: Vec<Vec<String>>,
    pub balanced: Vec<bool>,
    pub r_levels: Vec<usize>,
}

fn make_level(
    ctx: Ctx,
    time: usize,
    state: ZipperedState,
    iet: IetState,
    z: IntMat,
    q: IntMat,
    params: &BalanceParams,
    base_total: &Real,
    base_hmax: &Real,
) -> Level {
    let heights = q.row_sums();
    let balanced = params.contains(&state);
    let deep_return = params.deep().contains(&state);
    // common travel in T-iterates: the rectangle of height t^(k) (in the
    // level normalization) spans t·|I⁰|/(|I^(k)|·max h⁰) crossings of the
    // base section
    let t = state.min_rect_height();
    let crossings = t * base_total / ((&iet.total / base_total).complete(ctx.prec) * base_hmax)
        / base_total;
    let mut p_travel = crossings.floor().to_integer().unwrap_or_default();
    if p_travel < 1 {
        p_travel = Integer::from(1);
    }
    let min_q = heights.iter().min().cloned().unwrap_or_default();
    if p_travel > min_q {
        p_travel = min_q;
    }
    Level {
        time,
        state,
        iet,
        z,
        q,
        heights,
        balanced,
        deep_return,
        p_travel,
    }
}

/// Run the balanced acceleration: record a level each time the natural
/// extension returns to Y(R, δ), until `levels` returns are recorded.
pub fn run_acceleration(
    z0: &ZipperedState,
    params: &BalanceParams,
    levels: usize,
    step_budget: usize,
) -> Result<AccelPath> {
    run_path(z0, params, levels, step_budget, true)
}

/// Record every elementary step as a level (an unbalanced acceleration;
/// balance flags are still evaluated for diagnostics).
pub fn run_every_step(
    z0: &ZipperedState,
    params: &BalanceParams,
    levels: usize,
) -> Result<AccelPath> {
    run_path(z0, params, levels, levels + 1, false)
}

fn run_path(
    z0: &ZipperedState,
    params: &BalanceParams,
    levels: usize,
    step_budget: usize,
    only_balanced: bool,
) -> Result<AccelPath> {
    if levels < 1 {
        return Err(Error::ConfigInvalid("need at least one level".into()));
    }
    let ctx = z0.ctx;
    let d = z0.d();
    let base_iet = z0.iet()?;
    let base_total = base_iet.total.clone();
    let base_hmax = z0.max_height();
    let mut path = AccelPath {
        ctx,
        levels: vec![make_level(
            ctx,
            0,
            z0.clone(),
            base_iet.clone(),
            IntMat::identity(d),
            IntMat::identity(d),
            params,
            &base_total,
            &base_hmax,
        )],
        records: Vec::new(),
        record_ranges: vec![(0, 0)],
    };
    let mut zipper = z0.clone();
    // |I^(k)| as a running product of the per-step shrink factors; the
    // actual-scale IET is reconstructed from the normalized λ at levels,
    // so there is a single subtractive induction path
    let mut running_scale = base_iet.total.clone();
    let mut z_block = IntMat::identity(d);
    let mut block_start = 0usize;
    let mut steps = 0usize;
    while path.depth() < levels {
        if steps >= step_budget {
            return Err(Error::BudgetExceeded(format!(
                "no {levels} returns within {step_budget} elementary steps"
            )));
        }
        let (next_zipper, rec) = nat_ext_step(&zipper)?;
        let shrink = path.ctx.one() - &zipper.lambda[rec.loser];
        running_scale *= shrink;
        if running_scale < ctx.eps(16) {
            return Err(Error::PrecisionExhausted(
                "induced interval below the precision floor".into(),
            ));
        }
        z_block = rec.a.transpose().mul(&z_block);
        path.records.push(rec);
        zipper = next_zipper;
        steps += 1;
        let take = !only_balanced || params.contains(&zipper);
        if take {
            let actual_lengths: Vec<Real> = zipper
                .lambda
                .iter()
                .map(|l| (l * &running_scale).complete(ctx.prec))
                .collect();
            let actual = IetState::new(ctx, zipper.perm.clone(), actual_lengths)?;
            let q = z_block.mul(&path.levels.last().unwrap().q);
            path.levels.push(make_level(
                ctx,
                steps,
                zipper.clone(),
                actual,
                z_block.clone(),
                q,
                params,
                &base_total,
                &base_hmax,
            ));
            path.record_ranges.push((block_start, path.records.len()));
            z_block = IntMat::identity(d);
            block_start = path.records.len();
        }
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Diophantine series (the four truncated sums) and the UDC diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DiophantineSeriesReport {
    /// K_l for l = 0..=l_max (K_{-1} = 0 by convention, not stored).
    pub k_series: Vec<f64>,
    /// K'_l for the same range.
    pub k_log_series: Vec<f64>,
    /// C_k and C'_k for k = 0..=l_max.
    pub c_series: Vec<f64>,
    pub c_log_series: Vec<f64>,
    pub horizon: usize,
    /// Geometric-tail estimate added beyond the truncation horizon.
    pub tail_estimate: f64,
}

/// Truncated Diophantine series. `stable_norms(k, l)` must return the
/// operator norm of Q restricted to the stable estimate, ‖Q_s(k,l)‖.
pub fn diophantine_series(
    path: &AccelPath,
    stable_norms: &dyn Fn(usize, usize) -> f64,
    horizon: usize,
) -> Result<DiophantineSeriesReport> {
    let depth = path.depth();
    if horizon + 1 > depth {
        return Err(Error::ConfigInvalid(
            "series horizon exceeds the recorded depth".into(),
        ));
    }
    let l_max = depth - horizon - 1;
    let z_norm = |j: usize| -> f64 {
        if j == 0 {
            1.0
        } else {
            path.levels[j].z.norm_f64()
        }
    };
    let q_log = |j: usize| -> f64 { path.levels[j].q.norm_f64().max(1.0).ln() };

    let mut k_series = Vec::with_capacity(l_max + 1);
    let mut k_log_series = Vec::with_capacity(l_max + 1);
    let mut tail_estimate: f64 = 0.0;
    for l in 0..=l_max {
        let mut terms = Vec::new();
        for j in l..=(l + horizon).min(depth - 1) {
            terms.push(z_norm(j + 1) * stable_norms(l, j + 1));
        }
        let all_zero = terms.iter().all(|t| *t == 0.0);
        if !all_zero && terms.len() >= 3 {
            // the step norms ‖Z‖ fluctuate, so the decay test is on the
            // fitted trend of the log terms, not on adjacent samples
            let xs: Vec<f64> = (0..terms.len()).map(|i| i as f64).collect();
            let ys: Vec<f64> = terms.iter().map(|t| t.max(f64::MIN_POSITIVE).ln()).collect();
            let (slope, _) = linfit(&xs, &ys).unwrap_or((0.0, 0.0));
            // demand at least a halving over the window, beyond ‖Z‖ noise
            if slope * (terms.len() - 1) as f64 > -std::f64::consts::LN_2 {
                return Err(Error::NonDecayingTail);
            }
            let ratio = slope.exp();
            let last = *terms.last().unwrap();
            tail_estimate = tail_estimate.max(last * ratio / (1.0 - ratio));
        }
        let sum: f64 = terms.iter().sum();
        let sum_log: f64 = terms
            .iter()
            .enumerate()
            .map(|(i, t)| t * q_log(l + i))
            .sum();
        k_series.push(sum);
        k_log_series.push(sum_log);
    }
    let k_at = |l: i64| -> f64 {
        if l < 0 {
            0.0
        } else {
            k_series.get(l as usize).copied().unwrap_or(0.0)
        }
    };
    let k_log_at = |l: i64| -> f64 {
        if l < 0 {
            0.0
        } else {
            k_log_series.get(l as usize).copied().unwrap_or(0.0)
        }
    };
    let mut c_series = Vec::with_capacity(l_max + 1);
    let mut c_log_series = Vec::with_capacity(l_max + 1);
    for k in 0..=l_max {
        let mut c = 0.0;
        let mut c_log = 0.0;
        for l in 0..=k {
            let qs = stable_norms(l, k);
            c += qs * (z_norm(l) * k_at(l as i64 - 1) + k_at(l as i64));
            c_log += qs * (z_norm(l) * k_log_at(l as i64 - 1) + k_log_at(l as i64));
        }
        c_series.push(c);
        c_log_series.push(c_log);
    }
    Ok(DiophantineSeriesReport {
        k_series,
        k_log_series,
        c_series,
        c_log_series,
        horizon,
        tail_estimate,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct UdcReport {
    /// Fitted decay rate of ‖Q_s(k,l)‖ in l−k and its intercept constant.
    pub lambda_hat: f64,
    pub c_stable: f64,
    /// Fitted UDC2 rate of log‖Z(k+1)‖ against distance to the nearest r_n.
    pub tau_hat: f64,
    pub c_step: f64,
    /// Fitted top growth rate of log‖Q(k)‖ per level and the bracketing
    /// constants c e^{λ₁k} ≤ ‖Q(k)‖ ≤ C e^{λ₁(1+τ)k}.
    pub lambda1_hat: f64,
    pub c_lower: f64,
    pub c_upper: f64,
    /// Levels violating (B1) at the path's balance parameters.
    pub b1_violations: Vec<usize>,
    /// Levels violating (B2): tower mass p_k·|I^(k)| ≤ δ|I|.
    pub b2_violations: Vec<usize>,
}

/// Least-squares fits of the three UDC inequalities plus the Rokhlin
/// balance flags. A diagnostic, not a certificate.
pub fn udc_diagnostic(
    path: &AccelPath,
    params: &BalanceParams,
    stable_norms: &dyn Fn(usize, usize) -> f64,
) -> Result<UdcReport> {
    let depth = path.depth();
    if depth < 10 {
        return Err(Error::ConfigInvalid(
            "UDC diagnostic needs depth >= 10".into(),
        ));
    }
    // UDC1: log‖Q_s(k, k+m)‖ against m over a spread of anchors
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in (0..depth).step_by((depth / 8).max(1)) {
        for m in 1..=(depth - k) {
            let v = stable_norms(k, k + m);
            if v > 0.0 {
                xs.push(m as f64);
                ys.push(v.ln());
            }
        }
    }
    let (slope, intercept) = linfit(&xs, &ys).ok_or(Error::InsufficientRange)?;
    let lambda_hat = -slope;
    let c_stable = intercept.exp();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;

    // UDC2 against the deep-return subsequence
    let deep = path.deep_levels();
    let mut xs2 = Vec::new();
    let mut ys2 = Vec::new();
    for k in 0..depth {
        let z = path.levels[k + 1].z.norm_f64();
        let dist = deep
            .iter()
            .map(|&r| (k as i64 - r as i64).unsigned_abs())
            .min()
            .unwrap_or(0) as f64;
        xs2.push(dist);
        ys2.push(z.ln());
    }
    // a path whose every level is a deep return has no abscissa spread:
    // the step norms are flat and the fitted rate is zero
    let (tau_hat, c2) = linfit(&xs2, &ys2).unwrap_or((0.0, mean(&ys2)));

    // UDC3 bracketing of log‖Q(k)‖
    let mut xs3 = Vec::new();
    let mut ys3 = Vec::new();
    for k in 1..=depth {
        xs3.push(k as f64);
        ys3.push(path.levels[k].q.norm_f64().ln());
    }
    let (lambda1_hat, _) = linfit(&xs3, &ys3).ok_or(Error::InsufficientRange)?;
    let mut c_lower = f64::INFINITY;
    let mut c_upper: f64 = 0.0;
    let tau_pos = tau_hat.max(1e-9);
    for k in 1..=depth {
        let q = path.levels[k].q.norm_f64();
        c_lower = c_lower.min(q / (lambda1_hat * k as f64).exp());
        c_upper = c_upper.max(q / (lambda1_hat * (1.0 + tau_pos) * k as f64).exp());
    }

    // Rokhlin balance flags
    let kappa = path.ctx.real_from_f64(params.kappa(path.d()));
    let delta = path.ctx.real_from_f64(params.delta);
    let total = path.base().total.clone();
    let mut b1_violations = Vec::new();
    let mut b2_violations = Vec::new();
    for k in 1..=depth {
        let iet = &path.levels[k].iet;
        let min_len = iet
            .lengths
            .iter()
            .cloned()
            .reduce(|a, b| a.min(&b))
            .unwrap();
        if iet.total > (min_len * &kappa) {
            b1_violations.push(k);
        }
        let mass = path.ctx.real_from_int(&path.levels[k].p_travel) * &iet.total;
        if mass <= (delta.clone() * &total) {
            b2_violations.push(k);
        }
    }
    Ok(UdcReport {
        lambda_hat,
        c_stable,
        tau_hat,
        c_step: c2.exp(),
        lambda1_hat,
        c_lower,
        c_upper,
        b1_violations,
        b2_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iet::PermPair;
    use crate::num::{Ctx, RealRng};
    use crate::rauzy::sample_zippered;

    fn ctx() -> Ctx {
        Ctx::new(256)
    }

    fn golden_zippered(c: Ctx) -> ZipperedState {
        // λ = (φ⁻¹, φ⁻²); τ sampled until admissible
        let phi = (c.one() + c.real_from_f64(5.0).sqrt()) / 2f64;
        let la = phi.clone().recip();
        let lb = c.one() - &la;
        let mut rng = RealRng::new(c, 17);
        loop {
            let tau = vec![rng.uniform_pos(), -rng.uniform_pos()];
            let h = crate::rauzy::heights_from_tau(c, &PermPair::reversal(2), &tau);
            let area = crate::linalg::dot(c, &[la.clone(), lb.clone()], &h);
            let tau: Vec<Real> = tau.iter().map(|t| (t / &area).complete(c.prec)).collect();
            if let Ok(z) =
                ZipperedState::new(c, PermPair::reversal(2), vec![la.clone(), lb.clone()], tau)
            {
                return z;
            }
        }
    }

    #[test]
    fn golden_rotation_accelerates_every_step() {
        let c = ctx();
        let z = golden_zippered(c);
        let params = BalanceParams::default();
        let path = run_acceleration(&z, &params, 50, 500).unwrap();
        assert_eq!(path.depth(), 50);
        // every RV step of the golden rotation returns to the balanced set
        assert_eq!(path.levels[1].time, 1);
        // log‖Q(k)‖/k → log φ
        let k = path.depth();
        let rate = path.levels[k].q.norm_f64().ln() / (path.levels[k].time as f64);
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((rate - golden).abs() < 0.01, "rate {rate} vs {golden}");
    }

    #[test]
    fn tower_partition_has_unit_mass() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 11).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 12, 4000).unwrap();
        for k in 0..=path.depth() {
            let level = &path.levels[k];
            let mut mass = c.zero();
            for a in 0..4 {
                mass += c.real_from_int(&level.heights[a]) * &level.iet.lengths[a];
            }
            let err = (mass - &path.base().total).abs();
            assert!(err < c.eps(16), "tower mass defect at level {k}: {err}");
        }
    }

    #[test]
    fn q_products_compose_exactly() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 3).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 10, 4000).unwrap();
        assert_eq!(path.q_product(4, 4), IntMat::identity(4));
        let q_0_10 = path.q_product(0, 10);
        assert_eq!(q_0_10, path.levels[10].q);
        let a = path.q_product(0, 6);
        let b = path.q_product(6, 10);
        assert_eq!(b.mul(&a), q_0_10, "Q(k,m) = Q(l,m)Q(k,l)");
    }

    #[test]
    fn lambda_recovery_through_q_transpose() {
        let c = ctx();
        let perm = PermPair::reversal(5);
        let z = sample_zippered(c, &perm, 29).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 8, 4000).unwrap();
        for (k, l) in [(0usize, 5usize), (2, 7), (3, 8)] {
            let q = path.q_product(k, l);
            let recovered = q.transpose().mul_real_vec(c, &path.levels[l].iet.lengths);
            for (a, b) in recovered.iter().zip(&path.levels[k].iet.lengths) {
                assert!((a - b).complete(c.prec).abs() < c.eps(16));
            }
        }
    }

    #[test]
    fn interval_shrinks_no_faster_than_q_norm() {
        // |I^(k)| ≤ |I^(l)|·‖Q(k,l)‖
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 7).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 10, 4000).unwrap();
        for k in 0..10 {
            for l in k + 1..=10 {
                let q = path.q_product(k, l);
                let bound = path.levels[l].iet.total.clone() * c.real_from_int(&q.norm());
                assert!(path.levels[k].iet.total <= bound);
            }
        }
    }

    #[test]
    fn q_transports_h_spaces() {
        // Q(k,l)·H(π^(k)) = H(π^(l)): transported spanning set stays in ker ∂
        let c = ctx();
        let perm = PermPair::reversal(5);
        let z = sample_zippered(c, &perm, 53).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 6, 4000).unwrap();
        use rug::Rational;
        for k in 0..6 {
            let q = path.q_product(k, k + 1);
            let sing_k = crate::singularity::singularity_data(&path.levels[k].iet.perm);
            let sing_l = crate::singularity::singularity_data(&path.levels[k + 1].iet.perm);
            // spanning set of H(π^(k)): projections of the standard basis
            for e in 0..5 {
                let mut v = vec![Rational::new(); 5];
                v[e] = Rational::from(1);
                let h = crate::singularity::project_h_rat(&sing_k, &v);
                let hi: Vec<Rational> = {
                    let mut out = vec![Rational::new(); 5];
                    for i in 0..5 {
                        for j in 0..5 {
                            out[i] += Rational::from(&q[(i, j)]) * h[j].clone();
                        }
                    }
                    out
                };
                let bd = crate::singularity::boundary_pc_exact(&sing_l, &hi);
                assert!(bd.iter().all(|x| *x == 0), "transported vector left H");
            }
        }
    }

    #[test]
    fn locate_agrees_with_brute_force() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 19).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 6, 4000).unwrap();
        let mut rng = RealRng::new(c, 100);
        let base = path.base();
        for k in [2usize, 4, 6] {
            if path.levels[k].q.norm_f64() > 1e5 {
                continue;
            }
            for _ in 0..20 {
                let x = rng.uniform() * &base.total;
                let (letter, floor) = match path.locate(k, &x) {
                    Ok(v) => v,
                    Err(Error::OnBoundary) => continue,
                    Err(e) => panic!("{e}"),
                };
                // brute force: walk x backwards until inside I^(k)
                let mut y = x.clone();
                let mut j = Integer::new();
                let total_k = &path.levels[k].iet.total;
                while &y >= total_k {
                    y = base.apply_inv(&y).unwrap();
                    j += 1;
                }
                assert_eq!(floor, j);
                assert_eq!(letter, path.levels[k].iet.letter_of(&y).unwrap());
                let q_a = &path.levels[k].heights[letter];
                assert!(&floor < q_a);
            }
        }
    }

    #[test]
    fn locate_consistency_under_one_step() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 23).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 5, 4000).unwrap();
        let base = path.base();
        let mut rng = RealRng::new(c, 4);
        let k = 4;
        for _ in 0..10 {
            let x = rng.uniform() * &base.total;
            let Ok((letter, floor)) = path.locate(k, &x) else {
                continue;
            };
            let q_a = path.levels[k].heights[letter].clone();
            let next_floor = floor.clone() + 1u32;
            if next_floor < q_a {
                let tx = base.apply(&x).unwrap();
                let (l2, f2) = path.locate(k, &tx).unwrap();
                assert_eq!(l2, letter);
                assert_eq!(f2, next_floor);
            }
        }
    }

    #[test]
    fn locate_x_inside_base_interval() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 31).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 5, 4000).unwrap();
        let k = 3;
        let x = path.levels[k].iet.total.clone() / 2f64;
        let (letter, floor) = path.locate(k, &x).unwrap();
        assert_eq!(floor, 0);
        assert_eq!(letter, path.levels[k].iet.letter_of(&x).unwrap());
    }

    #[test]
    fn diophantine_series_zero_when_stable_zero() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 37).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 12, 4000).unwrap();
        let report = diophantine_series(&path, &|_, _| 0.0, 6).unwrap();
        assert!(report.k_series.iter().all(|&v| v == 0.0));
        assert!(report.c_series.iter().all(|&v| v == 0.0));
        assert_eq!(report.tail_estimate, 0.0);
    }

    #[test]
    fn diophantine_series_structure_and_decay() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 41).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 20, 8000).unwrap();
        // synthetic stable norms with clean exponential decay
        let decay = |k: usize, l: usize| (-(0.8) * (l as f64 - k as f64)).exp();
        let report = diophantine_series(&path, &decay, 10).unwrap();
        // C_0 = ‖Q_s(0,0)‖·(‖Z(0)‖·K_{-1} + K_0) = K_0
        assert!((report.c_series[0] - report.k_series[0]).abs() < 1e-12);
        assert!(report.k_series.iter().all(|&v| v > 0.0));
        assert!(report.tail_estimate > 0.0);
    }

    #[test]
    fn non_decaying_tail_detected() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 43).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 12, 4000).unwrap();
        let res = diophantine_series(&path, &|_, _| 1.0, 8);
        assert!(matches!(res, Err(Error::NonDecayingTail)));
    }

    #[test]
    fn unbalanced_path_flags_b1() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 47).unwrap();
        // accept every step; use a tight radius so imbalances get flagged
        let tight = BalanceParams {
            radius: 0.5,
            delta: 0.1,
        };
        let path = run_every_step(&z, &tight, 40).unwrap();
        let decay = |k: usize, l: usize| (-(0.5) * (l as f64 - k as f64)).exp();
        let report = udc_diagnostic(&path, &tight, &decay).unwrap();
        assert!(
            !report.b1_violations.is_empty(),
            "step-by-step induction should violate tight balance"
        );
    }

    #[test]
    fn golden_udc_has_flat_step_norms() {
        let c = ctx();
        let z = golden_zippered(c);
        let path = run_acceleration(&z, &BalanceParams::default(), 40, 400).unwrap();
        let decay = |k: usize, l: usize| (-(0.4812) * (l as f64 - k as f64)).exp();
        let report = udc_diagnostic(&path, &BalanceParams::default(), &decay).unwrap();
        // all partial quotients are 1: ‖Z‖ constant ⇒ τ̂ ≈ 0
        assert!(report.tau_hat.abs() < 0.05, "tau_hat = {}", report.tau_hat);
        let golden = ((1.0 + 5f64.sqrt()) / 2.0).ln();
        assert!((report.lambda1_hat - golden).abs() < 0.05);
    }

    #[test]
    fn min_heights_diverge() {
        let c = ctx();
        let perm = PermPair::reversal(4);
        let z = sample_zippered(c, &perm, 59).unwrap();
        let path = run_acceleration(&z, &BalanceParams::default(), 14, 6000).unwrap();
        let mins: Vec<Integer> = (0..=14)
            .map(|k| path.levels[k].heights.iter().min().cloned().unwrap())
            .collect();
        assert!(mins[14] > mins[7]);
        assert!(mins[14] > Integer::from(50));
    }
}
