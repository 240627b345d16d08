//! Cocycles with logarithmic singularities of geometric type: evaluation,
//! closed-form integrals, the ℒ/𝒜𝒮/ℒ𝒱 norms, the log-compensated boundary
//! operator, special Birkhoff sums with exact constant bookkeeping, closest
//! visits, and the cancellation statistics.

use crate::accel::AccelPath;
use crate::error::{Error, Result};
use crate::iet::{F64Iet, IetState};
use crate::num::{decimal_string, Ctx, Real};
use crate::singularity::{singularity_data, BoundaryImage, SingularityData};
use rug::ops::CompleteRound;
use serde::{Deserialize, Serialize};

/// Piecewise-linear function on a refinement of an interval family.
/// Piece i covers [cuts[i], cuts[i+1]) with value slope·x + intercept.
#[derive(Debug, Clone)]
pub struct PwLinear {
    pub cuts: Vec<Real>,
    pub slopes: Vec<Real>,
    pub intercepts: Vec<Real>,
}

impl PwLinear {
    pub fn zero(ctx: Ctx, total: &Real) -> Self {
        PwLinear {
            cuts: vec![ctx.zero(), total.clone()],
            slopes: vec![ctx.zero()],
            intercepts: vec![ctx.zero()],
        }
    }

    /// Constant value per interval of the family.
    pub fn piecewise_constant(ctx: Ctx, domain: &IetState, values: &[Real]) -> Self {
        let mut cuts: Vec<Real> = Vec::with_capacity(domain.d() + 1);
        let mut slopes = Vec::with_capacity(domain.d());
        let mut intercepts = Vec::with_capacity(domain.d());
        for p in 1..=domain.d() {
            let a = domain.perm.letter_at(0, p);
            cuts.push(domain.left[a].clone());
            slopes.push(ctx.zero());
            intercepts.push(values[a].clone());
        }
        cuts.push(domain.total.clone());
        PwLinear {
            cuts,
            slopes,
            intercepts,
        }
    }

    fn piece_of(&self, x: &Real) -> usize {
        debug_assert!(x >= &self.cuts[0] && x < self.cuts.last().unwrap());
        match self
            .cuts
            .binary_search_by(|c| c.partial_cmp(x).unwrap())
        {
            Ok(i) => i.min(self.slopes.len() - 1),
            Err(i) => i - 1,
        }
    }

    pub fn eval(&self, x: &Real) -> Real {
        let i = self.piece_of(x);
        self.intercepts[i].clone() + (&self.slopes[i] * x).complete(x.prec())
    }

    /// Left limit at x (value of the piece ending at x when x is a cut).
    pub fn eval_left(&self, x: &Real) -> Real {
        let i = match self.cuts.binary_search_by(|c| c.partial_cmp(x).unwrap()) {
            Ok(0) => 0,
            Ok(i) => i - 1,
            Err(i) => i - 1,
        };
        let i = i.min(self.slopes.len() - 1);
        self.intercepts[i].clone() + (&self.slopes[i] * x).complete(x.prec())
    }

    /// Right limit at x.
    pub fn eval_right(&self, x: &Real) -> Real {
        if x >= self.cuts.last().unwrap() {
            return self.eval_left(x);
        }
        let i = match self.cuts.binary_search_by(|c| c.partial_cmp(x).unwrap()) {
            Ok(i) => i.min(self.slopes.len() - 1),
            Err(i) => i - 1,
        };
        self.intercepts[i].clone() + (&self.slopes[i] * x).complete(x.prec())
    }

    pub fn integral(&self, ctx: Ctx, a: &Real, b: &Real) -> Real {
        // sum piecewise: ∫ slope·x + c = slope(x²)/2 + c·x
        let mut acc = ctx.zero();
        for i in 0..self.slopes.len() {
            let lo = self.cuts[i].clone().max(a);
            let hi = self.cuts[i + 1].clone().min(b);
            if lo >= hi {
                continue;
            }
            let sq = ((hi.clone() * &hi) - (lo.clone() * &lo)) / 2u32;
            acc += (&self.slopes[i] * &sq).complete(ctx.prec)
                + (&self.intercepts[i] * &(hi - lo)).complete(ctx.prec);
        }
        acc
    }

    /// Total variation over the interiors of the family intervals: slope
    /// mass plus interior jumps (cuts that are not family endpoints).
    pub fn variation(&self, ctx: Ctx, domain: &IetState) -> Real {
        let mut acc = ctx.zero();
        for i in 0..self.slopes.len() {
            let len = (&self.cuts[i + 1] - &self.cuts[i]).complete(ctx.prec);
            acc += self.slopes[i].clone().abs() * len;
        }
        for i in 1..self.slopes.len() {
            let c = &self.cuts[i];
            let is_family_endpoint = (0..domain.d()).any(|a| &domain.left[a] == c);
            if is_family_endpoint {
                continue;
            }
            let jump = self.eval_right(c) - self.eval_left(c);
            acc += jump.abs();
        }
        acc
    }

    pub fn sup_abs_on_grid(&self, ctx: Ctx) -> Real {
        // piecewise linear: extrema at cut endpoints
        let mut best = ctx.zero();
        for i in 0..self.slopes.len() {
            for x in [&self.cuts[i], &self.cuts[i + 1]] {
                let v = (self.intercepts[i].clone() + (&self.slopes[i] * x).complete(ctx.prec))
                    .abs();
                if v > best {
                    best = v;
                }
            }
        }
        best
    }

    /// ψ − ψ∘T for this ψ: an exact piecewise-linear coboundary. The
    /// composition refines the cuts by the T-preimages of ψ's cuts.
    pub fn coboundary(&self, ctx: Ctx, iet: &IetState) -> PwLinear {
        let mut cuts: Vec<Real> = self.cuts.clone();
        for a in 0..iet.d() {
            cuts.push(iet.left[a].clone());
            for c in &self.cuts {
                let pre = (c - &iet.trans[a]).complete(ctx.prec);
                if pre > iet.left[a] && pre < iet.right[a] {
                    cuts.push(pre);
                }
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup();
        let mut slopes = Vec::new();
        let mut intercepts = Vec::new();
        for i in 0..cuts.len() - 1 {
            let mid = (cuts[i].clone() + &cuts[i + 1]) / 2u32;
            let letter = iet.letter_of(&mid).expect("midpoint in domain");
            let w = &iet.trans[letter];
            let j = self.piece_of(&mid);
            let tj = self.piece_of(&((&mid + w).complete(ctx.prec)));
            // ψ(x) − ψ(x + w): slope_j·x + c_j − slope_tj·(x+w) − c_tj
            slopes.push((&self.slopes[j] - &self.slopes[tj]).complete(ctx.prec));
            intercepts.push(
                (&self.intercepts[j] - &self.intercepts[tj]).complete(ctx.prec)
                    - (&self.slopes[tj] * w).complete(ctx.prec),
            );
        }
        PwLinear {
            cuts,
            slopes,
            intercepts,
        }
    }
}

/// A cocycle with logarithmic singularities of geometric type over the
/// intervals of `domain`.
#[derive(Debug, Clone)]
pub struct LogCocycle {
    pub ctx: Ctx,
    pub domain: IetState,
    pub cplus: Vec<Real>,
    pub cminus: Vec<Real>,
    pub linear: PwLinear,
}

#[derive(Debug, Clone, Serialize)]
pub struct CocycleNorms {
    pub l: f64,
    pub asym: f64,
    pub var: f64,
    pub lv: f64,
}

impl LogCocycle {
    pub fn new(
        domain: IetState,
        cplus: Vec<Real>,
        cminus: Vec<Real>,
        linear: PwLinear,
    ) -> Result<Self> {
        let ctx = domain.ctx;
        let d = domain.d();
        if cplus.len() != d || cminus.len() != d {
            return Err(Error::ConfigInvalid("constant arity mismatch".into()));
        }
        let out = LogCocycle {
            ctx,
            domain,
            cplus,
            cminus,
            linear,
        };
        if !out.is_geometric_type() {
            return Err(Error::ConfigInvalid(
                "constants violate geometric type".into(),
            ));
        }
        Ok(out)
    }

    pub fn pure_log(domain: IetState, cplus: Vec<Real>, cminus: Vec<Real>) -> Result<Self> {
        let ctx = domain.ctx;
        let z = PwLinear::zero(ctx, &domain.total);
        LogCocycle::new(domain, cplus, cminus, z)
    }

    pub fn piecewise_constant(domain: IetState, values: &[Real]) -> Self {
        let ctx = domain.ctx;
        let d = domain.d();
        let linear = PwLinear::piecewise_constant(ctx, &domain, values);
        LogCocycle {
            ctx,
            domain,
            cplus: vec![ctx.zero(); d],
            cminus: vec![ctx.zero(); d],
            linear,
        }
    }

    pub fn d(&self) -> usize {
        self.domain.d()
    }

    /// Geometric type: a zero C⁻ at the end of one of the two rows and a
    /// zero C⁺ at the start of one of the two rows.
    pub fn is_geometric_type(&self) -> bool {
        let d = self.d();
        let top_last = self.domain.perm.letter_at(0, d);
        let bot_last = self.domain.perm.letter_at(1, d);
        let top_first = self.domain.perm.letter_at(0, 1);
        let bot_first = self.domain.perm.letter_at(1, 1);
        (self.cminus[top_last].is_zero() || self.cminus[bot_last].is_zero())
            && (self.cplus[top_first].is_zero() || self.cplus[bot_first].is_zero())
    }

    /// Symmetry defect Σ C⁻ − Σ C⁺ (zero iff the cocycle is in LSG).
    pub fn symmetry_defect(&self) -> Real {
        let mut acc = self.ctx.zero();
        for c in &self.cminus {
            acc += c;
        }
        for c in &self.cplus {
            acc -= c;
        }
        acc
    }

    pub fn is_lsg(&self) -> bool {
        self.symmetry_defect().abs() < self.ctx.eps(24)
    }

    /// ℒ, 𝒜𝒮, Var and ℒ𝒱.
    pub fn norms(&self) -> CocycleNorms {
        let ctx = self.ctx;
        let mut l = ctx.zero();
        for c in self.cplus.iter().chain(&self.cminus) {
            l += c.clone().abs();
        }
        let sing = singularity_data(&self.domain.perm);
        let mut asym = ctx.zero();
        for orbit_idx in 0..sing.kappa() {
            asym += self.saddle_asymmetry(&sing, orbit_idx).abs();
        }
        let var = self.linear.variation(ctx, &self.domain);
        let lv = l.clone() + &var;
        CocycleNorms {
            l: l.to_f64(),
            asym: asym.to_f64(),
            var: var.to_f64(),
            lv: lv.to_f64(),
        }
    }

    /// Δ_𝒪(φ) = Σ_{α∈𝒜⁻_𝒪} C⁻_α − Σ_{α∈𝒜⁺_𝒪} C⁺_α.
    pub fn saddle_asymmetry(&self, sing: &SingularityData, orbit_idx: usize) -> Real {
        let mut acc = self.ctx.zero();
        for &a in &sing.a_minus[orbit_idx] {
            acc += &self.cminus[a];
        }
        for &a in &sing.a_plus[orbit_idx] {
            acc -= &self.cplus[a];
        }
        acc
    }

    /// Wrapped distance |I|{t/|I|} with the one-sided conventions used in
    /// boundary limits: side > 0 reads the limit from above (0 ↦ 0),
    /// side < 0 from below (0 ↦ |I|). Inputs lie in (−|I|, |I|), so one
    /// conditional shift suffices.
    fn wrap(&self, t: Real, side: i8) -> Real {
        let total = &self.domain.total;
        let mut t = t;
        if t.is_sign_negative() && !t.is_zero() {
            t += total;
        }
        if t.is_zero() || &t == total {
            if side < 0 {
                return total.clone();
            }
            return self.ctx.zero();
        }
        t
    }

    /// Pointwise value; errors at a singular endpoint with nonzero constant.
    pub fn eval(&self, x: &Real) -> Result<Real> {
        let ctx = self.ctx;
        if x < &ctx.zero() || x >= &self.domain.total {
            return Err(Error::OutOfDomain);
        }
        let mut acc = self.linear.eval(x);
        for a in 0..self.d() {
            if !self.cplus[a].is_zero() {
                let mut u = self.wrap((x - &self.domain.left[a]).complete(ctx.prec), 1);
                if u.is_zero() {
                    return Err(Error::AtSingularity);
                }
                u.ln_mut();
                u *= &self.cplus[a];
                acc -= u;
            }
            if !self.cminus[a].is_zero() {
                let mut u = self.wrap((&self.domain.right[a] - x).complete(ctx.prec), 1);
                if u.is_zero() {
                    return Err(Error::AtSingularity);
                }
                u.ln_mut();
                u *= &self.cminus[a];
                acc -= u;
            }
        }
        Ok(acc)
    }

    /// Derivative value (the 1/x-type sums plus the linear slope).
    pub fn eval_derivative(&self, x: &Real) -> Result<Real> {
        let ctx = self.ctx;
        if x < &ctx.zero() || x >= &self.domain.total {
            return Err(Error::OutOfDomain);
        }
        let piece = self.linear.piece_of(x);
        let mut acc = self.linear.slopes[piece].clone();
        for a in 0..self.d() {
            if !self.cplus[a].is_zero() {
                let u = self.wrap((x - &self.domain.left[a]).complete(ctx.prec), 1);
                if u.is_zero() {
                    return Err(Error::AtSingularity);
                }
                acc -= (&self.cplus[a] / &u).complete(ctx.prec);
            }
            if !self.cminus[a].is_zero() {
                let u = self.wrap((&self.domain.right[a] - x).complete(ctx.prec), 1);
                if u.is_zero() {
                    return Err(Error::AtSingularity);
                }
                acc += (&self.cminus[a] / &u).complete(ctx.prec);
            }
        }
        Ok(acc)
    }

    /// Exact integral over (a, b) ⊆ one interval of the family, via the
    /// antiderivative u log u − u of each log term.
    pub fn integral(&self, a: &Real, b: &Real) -> Result<Real> {
        let ctx = self.ctx;
        if a > b {
            return Err(Error::OutOfDomain);
        }
        // identify the family interval from the midpoint and absorb
        // endpoint round-off within a tolerance of the interval bounds
        let mid = ((a + b).complete(ctx.prec)) / 2u32;
        let letter = (0..self.d())
            .find(|&al| mid >= self.domain.left[al] && mid < self.domain.right[al])
            .ok_or(Error::OutOfDomain)?;
        // generous clamp: orbit-translated floors accumulate rounding
        // drift linearly in the floor count (up to ~2^23 floors)
        let tol = ctx.eps(64) * &self.domain.total;
        let mut a = a.clone();
        let mut b = b.clone();
        if a < self.domain.left[letter] {
            if (&self.domain.left[letter] - &a).complete(ctx.prec) > tol {
                return Err(Error::OutOfDomain);
            }
            a = self.domain.left[letter].clone();
        }
        if b > self.domain.right[letter] {
            if (&b - &self.domain.right[letter]).complete(ctx.prec) > tol {
                return Err(Error::OutOfDomain);
            }
            b = self.domain.right[letter].clone();
        }
        let (a, b) = (&a, &b);
        let mut acc = self.linear.integral(ctx, a, b);
        let anti = |u: &Real| -> Real {
            if u.is_zero() {
                return ctx.zero(); // lim u log u − u = 0
            }
            (u * &ctx.ln(u)).complete(ctx.prec) - u
        };
        for al in 0..self.d() {
            if !self.cplus[al].is_zero() {
                // u(x) = wrap(x − l_α), du = dx; within one family interval
                // the wrap offset is constant
                let ua = self.wrap((a - &self.domain.left[al]).complete(ctx.prec), 1);
                let ub = self.wrap((b - &self.domain.left[al]).complete(ctx.prec), -1);
                acc -= (&self.cplus[al] * &(anti(&ub) - anti(&ua))).complete(ctx.prec);
            }
            if !self.cminus[al].is_zero() {
                // u(x) = wrap(r_α − x), du = −dx
                let ua = self.wrap((&self.domain.right[al] - a).complete(ctx.prec), -1);
                let ub = self.wrap((&self.domain.right[al] - b).complete(ctx.prec), 1);
                acc -= (&self.cminus[al] * &(anti(&ua) - anti(&ub))).complete(ctx.prec);
            }
        }
        Ok(acc)
    }

    /// Integral over the whole domain (splitting at the family endpoints).
    pub fn integral_full(&self) -> Result<Real> {
        let mut acc = self.ctx.zero();
        for a in 0..self.d() {
            acc += self.integral(&self.domain.left[a], &self.domain.right[a])?;
        }
        Ok(acc)
    }

    pub fn mean(&self, a: &Real, b: &Real) -> Result<Real> {
        let len = (b - a).complete(self.ctx.prec);
        Ok(self.integral(a, b)? / len)
    }

    /// Scale all data by a real factor (cocycles form a vector space).
    pub fn scale(&self, factor: &Real) -> LogCocycle {
        let ctx = self.ctx;
        LogCocycle {
            ctx,
            domain: self.domain.clone(),
            cplus: self.cplus.iter().map(|c| (c * factor).complete(ctx.prec)).collect(),
            cminus: self.cminus.iter().map(|c| (c * factor).complete(ctx.prec)).collect(),
            linear: PwLinear {
                cuts: self.linear.cuts.clone(),
                slopes: self
                    .linear
                    .slopes
                    .iter()
                    .map(|s| (s * factor).complete(ctx.prec))
                    .collect(),
                intercepts: self
                    .linear
                    .intercepts
                    .iter()
                    .map(|s| (s * factor).complete(ctx.prec))
                    .collect(),
            },
        }
    }

    /// Subtract a piecewise-constant vector (the correction move).
    pub fn minus_constant_vector(&self, h: &[Real]) -> LogCocycle {
        let ctx = self.ctx;
        let pc = PwLinear::piecewise_constant(ctx, &self.domain, h);
        let mut out = self.clone();
        out.linear = merge_linear(ctx, &self.linear, &pc, -1);
        out
    }

    /// Add another piecewise-linear part.
    pub fn plus_linear(&self, other: &PwLinear) -> LogCocycle {
        let mut out = self.clone();
        out.linear = merge_linear(self.ctx, &self.linear, other, 1);
        out
    }
}

/// a + sign·b on the merged cut refinement.
fn merge_linear(ctx: Ctx, a: &PwLinear, b: &PwLinear, sign: i32) -> PwLinear {
    let mut cuts: Vec<Real> = a.cuts.iter().chain(b.cuts.iter()).cloned().collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut slopes = Vec::new();
    let mut intercepts = Vec::new();
    for i in 0..cuts.len() - 1 {
        let mid = (cuts[i].clone() + &cuts[i + 1]) / 2u32;
        let pa = a.piece_of(&mid);
        let pb = b.piece_of(&mid);
        let factor = ctx.real_from_f64(sign as f64);
        slopes.push(a.slopes[pa].clone() + b.slopes[pb].clone() * &factor);
        intercepts.push(a.intercepts[pa].clone() + b.intercepts[pb].clone() * &factor);
    }
    PwLinear {
        cuts,
        slopes,
        intercepts,
    }
}

// ---------------------------------------------------------------------------
// Boundary operator with log compensation
// ---------------------------------------------------------------------------

/// The log-compensated boundary operator on LG^BV: the limit of the
/// compensated endpoint sums, evaluated in closed form.
pub fn boundary_log(phi: &LogCocycle) -> BoundaryImage {
    let ctx = phi.ctx;
    let sing = singularity_data(&phi.domain.perm);
    let d = phi.d();
    // V⁻_α = lim_{x→0⁺} φ(r_α−x) + C⁻_α log x
    let v_minus: Vec<Real> = (0..d)
        .map(|al| {
            let mut acc = phi.linear.eval_left(&phi.domain.right[al]);
            for b in 0..d {
                if !phi.cplus[b].is_zero() {
                    let t = (&phi.domain.right[al] - &phi.domain.left[b]).complete(ctx.prec);
                    let u = phi.wrap(t, -1); // from below
                    acc -= (&phi.cplus[b] * &ctx.ln(&u)).complete(ctx.prec);
                }
                if b != al && !phi.cminus[b].is_zero() {
                    let t = (&phi.domain.right[b] - &phi.domain.right[al]).complete(ctx.prec);
                    let u = phi.wrap(t, 1); // from above; b≠α keeps it positive
                    acc -= (&phi.cminus[b] * &ctx.ln(&u)).complete(ctx.prec);
                }
            }
            acc
        })
        .collect();
    // V⁺_α = lim_{x→0⁺} φ(l_α+x) + C⁺_α log x
    let v_plus: Vec<Real> = (0..d)
        .map(|al| {
            let mut acc = phi.linear.eval_right(&phi.domain.left[al]);
            for b in 0..d {
                if b != al && !phi.cplus[b].is_zero() {
                    let t = (&phi.domain.left[al] - &phi.domain.left[b]).complete(ctx.prec);
                    let u = phi.wrap(t, 1);
                    acc -= (&phi.cplus[b] * &ctx.ln(&u)).complete(ctx.prec);
                }
                if !phi.cminus[b].is_zero() {
                    let t = (&phi.domain.right[b] - &phi.domain.left[al]).complete(ctx.prec);
                    let u = phi.wrap(t, -1);
                    acc -= (&phi.cminus[b] * &ctx.ln(&u)).complete(ctx.prec);
                }
            }
            acc
        })
        .collect();
    let values = (0..sing.kappa())
        .map(|o| {
            let mut acc = ctx.zero();
            for &a in &sing.a_minus[o] {
                acc += &v_minus[a];
            }
            for &a in &sing.a_plus[o] {
                acc -= &v_plus[a];
            }
            acc
        })
        .collect();
    BoundaryImage { values }
}

// ---------------------------------------------------------------------------
// Special Birkhoff sums and the constants bookkeeping
// ---------------------------------------------------------------------------

/// Evolution of the C⁻ assignment along the elementary steps: at each step,
/// with winner w and loser β, the loser's slot absorbs C⁻_w + C⁻_β and the
/// winner's slot zeroes; geometric type keeps at most one nonzero, so this
/// is a permutation χ of the multiset. C⁺ constants never move.
pub fn chi_permutation(path: &AccelPath, level: usize, cminus0: &[Real]) -> Result<Vec<usize>> {
    let ctx = path.ctx;
    let mut chi: Vec<usize> = (0..path.d()).collect();
    let mut current: Vec<Real> = cminus0.to_vec();
    let upto = path.record_ranges[level].1;
    for rec in &path.records[..upto] {
        let w = rec.winner;
        let b = rec.loser;
        if !current[w].is_zero() && !current[b].is_zero() {
            return Err(Error::InternalInconsistency(
                "geometric type lost along induction".into(),
            ));
        }
        if !current[w].is_zero() {
            chi.swap(w, b);
        }
        let moved = (&current[w] + &current[b]).complete(ctx.prec);
        current[b] = moved;
        current[w] = ctx.zero();
    }
    Ok(chi)
}

/// Constants of S(k)φ on the level-k letters: C⁺ unchanged, C⁻ permuted.
pub fn special_sum_constants(
    path: &AccelPath,
    level: usize,
    phi: &LogCocycle,
) -> Result<(Vec<Real>, Vec<Real>)> {
    let chi = chi_permutation(path, level, &phi.cminus)?;
    let cminus = (0..path.d()).map(|a| phi.cminus[chi[a]].clone()).collect();
    Ok((phi.cplus.clone(), cminus))
}

/// The pure-log comparison form of S(k)φ at level k: same C⁺, χ-permuted
/// C⁻, no regular part — the singular skeleton the BV remainder is
/// measured against.
pub fn log_form_at_level(path: &AccelPath, level: usize, phi: &LogCocycle) -> Result<LogCocycle> {
    let (cplus, cminus) = special_sum_constants(path, level, phi)?;
    let domain = path.levels[level].iet.clone();
    let z = PwLinear::zero(path.ctx, &domain.total);
    Ok(LogCocycle {
        ctx: path.ctx,
        domain,
        cplus,
        cminus,
        linear: z,
    })
}

/// S(k)φ(x) = Σ_{j<Q_α(k)} φ(T^j x) by direct orbit summation (p-bit).
pub fn special_sum_eval(
    path: &AccelPath,
    level: usize,
    phi: &LogCocycle,
    x: &Real,
    budget: u64,
) -> Result<Real> {
    let ctx = path.ctx;
    let iet = &path.levels[level].iet;
    let letter = iet.letter_of(x)?;
    let q = path.height_u64(level, letter)?;
    if q > budget {
        return Err(Error::BudgetExceeded(format!(
            "special sum needs {q} terms, budget {budget}"
        )));
    }
    let base = path.base();
    let mut acc = ctx.zero();
    let mut y = x.clone();
    for j in 0..q {
        acc += phi.eval(&y)?;
        if j + 1 < q {
            y = base.apply(&y)?;
        }
    }
    Ok(acc)
}

/// Same sum for the derivative cocycle φ'.
pub fn special_sum_derivative(
    path: &AccelPath,
    level: usize,
    phi: &LogCocycle,
    x: &Real,
    budget: u64,
) -> Result<Real> {
    let ctx = path.ctx;
    let iet = &path.levels[level].iet;
    let letter = iet.letter_of(x)?;
    let q = path.height_u64(level, letter)?;
    if q > budget {
        return Err(Error::BudgetExceeded(format!(
            "special sum needs {q} terms, budget {budget}"
        )));
    }
    let base = path.base();
    let mut acc = ctx.zero();
    let mut y = x.clone();
    for j in 0..q {
        acc += phi.eval_derivative(&y)?;
        if j + 1 < q {
            y = base.apply(&y)?;
        }
    }
    Ok(acc)
}

/// Closest visits (x_α^l, x_α^r) of the level-k return orbit of x to the
/// singularities; +∞ when a side is never approached from within.
pub fn closest_visits(
    path: &AccelPath,
    level: usize,
    x: &Real,
    budget: u64,
) -> Result<(Vec<Real>, Vec<Real>)> {
    let ctx = path.ctx;
    let iet = &path.levels[level].iet;
    let letter = iet.letter_of(x)?;
    let q = path.height_u64(level, letter)?;
    if q > budget {
        return Err(Error::BudgetExceeded(format!(
            "closest-visit scan needs {q} terms, budget {budget}"
        )));
    }
    let base = path.base();
    let d = path.d();
    let inf = || {
        let mut v = ctx.zero();
        v.recip_mut(); // 1/0 = +inf in MPFR
        v
    };
    let mut xl: Vec<Real> = (0..d).map(|_| inf()).collect();
    let mut xr: Vec<Real> = (0..d).map(|_| inf()).collect();
    let mut y = x.clone();
    for j in 0..q {
        for a in 0..d {
            let dl = (&y - &base.left[a]).complete(ctx.prec);
            if dl.is_sign_positive() && !dl.is_zero() && dl < xl[a] {
                xl[a] = dl;
            }
            let dr = (&base.right[a] - &y).complete(ctx.prec);
            if dr.is_sign_positive() && !dr.is_zero() && dr < xr[a] {
                xr[a] = dr;
            }
        }
        if j + 1 < q {
            y = base.apply(&y)?;
        }
    }
    Ok((xl, xr))
}

#[derive(Debug, Clone, Serialize)]
pub struct CancellationStat {
    /// Smallest M making the symmetric cancellation bound hold at the
    /// sampled points.
    pub m_hat: f64,
    /// For asymmetric cocycles: the statistic normalized by the
    /// ℒ(φ)(1+log‖Q(k)‖)/min|I^(k)_α| bound (≤ 1 + slack expected).
    pub normalized: f64,
    pub samples: usize,
    pub level: usize,
}

/// Empirical cancellation statistic of the special sums of φ'.
pub fn cancellation_stat(
    path: &AccelPath,
    level: usize,
    phi: &LogCocycle,
    sample_points: &[Real],
    budget: u64,
) -> Result<CancellationStat> {
    let ctx = path.ctx;
    let norms = phi.norms();
    if norms.l == 0.0 {
        return Err(Error::ConfigInvalid("cancellation needs ℒ(φ) > 0".into()));
    }
    let total = path.base().total.clone();
    let mut m_hat: f64 = 0.0;
    let mut normalized: f64 = 0.0;
    let min_len = path.levels[level]
        .iet
        .lengths
        .iter()
        .cloned()
        .reduce(|a, b| a.min(&b))
        .unwrap();
    let log_q = path.levels[level].q.norm_f64().ln();
    let mut used = 0usize;
    for x in sample_points {
        let iet = &path.levels[level].iet;
        let Ok(letter) = iet.letter_of(x) else {
            continue;
        };
        let q_beta = path.height_u64(level, letter)? as f64;
        let s = match special_sum_derivative(path, level, phi, x, budget) {
            Ok(v) => v,
            Err(Error::AtSingularity) => continue,
            Err(e) => return Err(e),
        };
        let (xl, xr) = closest_visits(path, level, x, budget)?;
        let mut expected = ctx.zero();
        for a in 0..path.d() {
            if xl[a].is_finite() && !phi.cplus[a].is_zero() {
                expected += (&phi.cplus[a] / &xl[a]).complete(ctx.prec);
            }
            if xr[a].is_finite() && !phi.cminus[a].is_zero() {
                expected -= (&phi.cminus[a] / &xr[a]).complete(ctx.prec);
            }
        }
        let defect = (s - expected).abs().to_f64();
        let m_here = defect * total.to_f64() / (norms.l * q_beta);
        m_hat = m_hat.max(m_here);
        let bound = norms.l * (1.0 + log_q) / min_len.to_f64();
        normalized = normalized.max(defect / bound);
        used += 1;
    }
    if used == 0 {
        return Err(Error::AtSingularity);
    }
    Ok(CancellationStat {
        m_hat,
        normalized,
        samples: used,
        level,
    })
}

// ---------------------------------------------------------------------------
// Authoring helpers
// ---------------------------------------------------------------------------

/// Symmetric cocycle with per-saddle constants: C⁺_α = c_𝒪 for the orbit
/// owning π₀(α)−1 and C⁻_α = c_𝒪 for the orbit owning π₀(α), with the two
/// boundary positions (π₀ = 1 left, π₀ = d right) forced to zero. Every
/// saddle asymmetry Δ_𝒪 then cancels exactly and geometric type holds.
pub fn author_symmetric(domain: &IetState, orbit_constants: &[Real]) -> Result<LogCocycle> {
    let ctx = domain.ctx;
    let d = domain.d();
    let sing = singularity_data(&domain.perm);
    if orbit_constants.len() != sing.kappa() {
        return Err(Error::ConfigInvalid("need one constant per saddle".into()));
    }
    let orbit_of = |j: usize| -> usize {
        sing.orbits
            .iter()
            .position(|o| o.binary_search(&j).is_ok())
            .expect("orbits partition {0..d}")
    };
    let mut cplus = vec![ctx.zero(); d];
    let mut cminus = vec![ctx.zero(); d];
    for a in 0..d {
        let pos = domain.perm.top(a);
        if pos != 1 {
            cplus[a] = orbit_constants[orbit_of(pos - 1)].clone();
        }
        if pos != d {
            cminus[a] = orbit_constants[orbit_of(pos)].clone();
        }
    }
    LogCocycle::pure_log(domain.clone(), cplus, cminus)
}

/// Symmetric cocycle with the boundary image removed. Piecewise-constant
/// shifts have zero total boundary mass, so the total is killed first by a
/// global slope (a slope t contributes t·|I| to Σ_𝒪 ∂(φ)_𝒪), then the
/// zero-sum remainder is solved over the kernel basis. Leaves 𝒜𝒮 = 0,
/// ∂ = 0 and geometric type intact.
pub fn author_symmetric_boundary_free(
    domain: &IetState,
    orbit_constants: &[Real],
) -> Result<LogCocycle> {
    let ctx = domain.ctx;
    let phi = author_symmetric(domain, orbit_constants)?;
    let sing = singularity_data(&domain.perm);
    let bd = boundary_log(&phi);
    let total: Real = ctx.sum(bd.values.iter().cloned());
    let slope = -(total / &domain.total);
    let tilt = PwLinear {
        cuts: vec![ctx.zero(), domain.total.clone()],
        slopes: vec![slope],
        intercepts: vec![ctx.zero()],
    };
    let tilted = phi.plus_linear(&tilt);
    let bd2 = boundary_log(&tilted);
    let h = crate::singularity::solve_boundary(ctx, &sing, &bd2.values)
        .ok_or_else(|| Error::InternalInconsistency("boundary image not solvable".into()))?;
    Ok(tilted.minus_constant_vector(&h))
}

// ---------------------------------------------------------------------------
// f64 fast path for quadratures
// ---------------------------------------------------------------------------

/// f64 shadow of a log cocycle for absolute-value quadratures.
#[derive(Debug, Clone)]
pub struct F64Cocycle {
    pub iet: F64Iet,
    pub cplus: Vec<f64>,
    pub cminus: Vec<f64>,
    pub cuts: Vec<f64>,
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl F64Cocycle {
    pub fn from_cocycle(phi: &LogCocycle) -> Self {
        F64Cocycle {
            iet: F64Iet::from_state(&phi.domain),
            cplus: phi.cplus.iter().map(|c| c.to_f64()).collect(),
            cminus: phi.cminus.iter().map(|c| c.to_f64()).collect(),
            cuts: phi.linear.cuts.iter().map(|c| c.to_f64()).collect(),
            slopes: phi.linear.slopes.iter().map(|c| c.to_f64()).collect(),
            intercepts: phi.linear.intercepts.iter().map(|c| c.to_f64()).collect(),
        }
    }

    #[inline]
    fn wrap(&self, t: f64) -> f64 {
        let total = self.iet.total;
        let mut t = t;
        if t < 0.0 {
            t += total;
        }
        if t <= 0.0 {
            return f64::MIN_POSITIVE;
        }
        t
    }

    pub fn eval(&self, x: f64) -> f64 {
        let piece = match self
            .cuts
            .binary_search_by(|c| c.partial_cmp(&x).unwrap())
        {
            Ok(i) => i.min(self.slopes.len() - 1),
            Err(i) => (i - 1).min(self.slopes.len() - 1),
        };
        let mut acc = self.slopes[piece] * x + self.intercepts[piece];
        for a in 0..self.cplus.len() {
            if self.cplus[a] != 0.0 {
                acc -= self.cplus[a] * self.wrap(x - self.iet.left[a]).ln();
            }
            if self.cminus[a] != 0.0 {
                acc -= self.cminus[a] * self.wrap(self.iet.right[a] - x).ln();
            }
        }
        acc
    }

    /// Birkhoff sum along n f64 steps.
    pub fn birkhoff(&self, x: f64, n: u64) -> f64 {
        let mut acc = 0.0;
        let mut y = x;
        for _ in 0..n {
            acc += self.eval(y);
            y = self.iet.apply(y);
        }
        acc
    }
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------

/// External cocycle file schema: per-interval constants and linear data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CocycleFile {
    #[serde(rename = "Cplus")]
    pub cplus: Vec<String>,
    #[serde(rename = "Cminus")]
    pub cminus: Vec<String>,
    pub slopes: Vec<String>,
    pub intercepts: Vec<String>,
}

impl CocycleFile {
    pub fn to_cocycle(&self, domain: &IetState) -> Result<LogCocycle> {
        let ctx = domain.ctx;
        let parse = |v: &[String]| -> Result<Vec<Real>> {
            v.iter()
                .map(|s| {
                    ctx.real_from_decimal(s)
                        .ok_or_else(|| Error::ConfigInvalid(format!("bad decimal: {s}")))
                })
                .collect()
        };
        let cplus = parse(&self.cplus)?;
        let cminus = parse(&self.cminus)?;
        let slopes = parse(&self.slopes)?;
        let intercepts = parse(&self.intercepts)?;
        if slopes.len() != domain.d() || intercepts.len() != domain.d() {
            return Err(Error::ConfigInvalid("linear arity mismatch".into()));
        }
        // per-interval slopes/intercepts in domain order
        let mut cuts = Vec::with_capacity(domain.d() + 1);
        let mut ordered_slopes = Vec::with_capacity(domain.d());
        let mut ordered_intercepts = Vec::with_capacity(domain.d());
        for p in 1..=domain.d() {
            let a = domain.perm.letter_at(0, p);
            cuts.push(domain.left[a].clone());
            ordered_slopes.push(slopes[a].clone());
            ordered_intercepts.push(intercepts[a].clone());
        }
        cuts.push(domain.total.clone());
        LogCocycle::new(
            domain.clone(),
            cplus,
            cminus,
            PwLinear {
                cuts,
                slopes: ordered_slopes,
                intercepts: ordered_intercepts,
            },
        )
    }

    pub fn from_cocycle(phi: &LogCocycle) -> Result<Self> {
        let d = phi.d();
        // every interior cut must be a family endpoint, otherwise the
        // refinement has no per-interval file form
        for c in &phi.linear.cuts[1..phi.linear.cuts.len() - 1] {
            let on_family = (0..d).any(|a| &phi.domain.left[a] == c);
            if !on_family {
                return Err(Error::ConfigInvalid(
                    "refined linear parts have no per-interval file form".into(),
                ));
            }
        }
        let ctx = phi.ctx;
        let mut slopes = vec![String::new(); d];
        let mut intercepts = vec![String::new(); d];
        for a in 0..d {
            let mid = ((&phi.domain.left[a] + &phi.domain.right[a]).complete(ctx.prec)) / 2u32;
            let piece = phi.linear.piece_of(&mid);
            slopes[a] = decimal_string(&phi.linear.slopes[piece]);
            intercepts[a] = decimal_string(&phi.linear.intercepts[piece]);
        }
        Ok(CocycleFile {
            cplus: phi.cplus.iter().map(decimal_string).collect(),
            cminus: phi.cminus.iter().map(decimal_string).collect(),
            slopes,
            intercepts,
        })
    }
}
