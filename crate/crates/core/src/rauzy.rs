//! The elementary Rauzy-Veech step, the invertible natural extension on
//! zippered-rectangle data, seeded sampling of (π, λ, τ), and Rauzy class
//! enumeration.

use crate::error::{Error, Result};
use crate::iet::{IetState, PermPair};
use crate::linalg::IntMat;
use crate::num::{Ctx, Real, RealRng};
use rug::ops::CompleteRound;
use serde::Serialize;
use std::collections::{HashSet, VecDeque};

/// One elementary step: type bit, winner/loser letters, and the elementary
/// matrix A = Id + E_{winner,loser} (det 1).
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub eps: u8,
    pub winner: usize,
    pub loser: usize,
    #[serde(skip)]
    pub a: IntMat,
}

/// Permutation update of the elementary step; independent of λ.
pub fn perm_move(perm: &PermPair, eps: u8) -> PermPair {
    let d = perm.d();
    let winner = perm.letter_at(eps, d);
    let cut = perm.pos(1 - eps, winner); // π_{1-ε}∘π_ε⁻¹(d)
    let mut top = Vec::with_capacity(d);
    let mut bottom = Vec::with_capacity(d);
    for a in 0..d {
        let kept = perm.pos(eps, a);
        let moved = {
            let p = perm.pos(1 - eps, a);
            if p <= cut {
                p
            } else if p < d {
                p + 1
            } else {
                cut + 1
            }
        };
        if eps == 0 {
            top.push(kept);
            bottom.push(moved);
        } else {
            top.push(moved);
            bottom.push(kept);
        }
    }
    PermPair::new(perm.alphabet.clone(), top, bottom).expect("RV step preserves irreducibility")
}

/// Elementary Rauzy-Veech step. Returns the induced IET (on the shortened
/// interval, same scale) and the step record.
pub fn rv_step(iet: &IetState) -> Result<(IetState, StepRecord)> {
    let ctx = iet.ctx;
    let d = iet.d();
    let top_last = iet.perm.letter_at(0, d);
    let bot_last = iet.perm.letter_at(1, d);
    let lt = &iet.lengths[top_last];
    let lb = &iet.lengths[bot_last];
    if lt == lb {
        return Err(Error::TieAtStep);
    }
    let diff = (lt - lb).complete(ctx.prec).abs();
    let guard = ctx.eps(16) * &iet.total;
    if diff < guard {
        return Err(Error::PrecisionExhausted(
            "last-length difference below the precision guard".into(),
        ));
    }
    let eps: u8 = if lt > lb { 0 } else { 1 };
    let (winner, loser) = if eps == 0 {
        (top_last, bot_last)
    } else {
        (bot_last, top_last)
    };
    let a = IntMat::elementary(d, winner, loser);
    let new_perm = perm_move(&iet.perm, eps);
    let mut new_lengths = iet.lengths.clone();
    new_lengths[winner] = (&iet.lengths[winner] - &iet.lengths[loser]).complete(ctx.prec);
    let new_iet = IetState::new(ctx, new_perm, new_lengths)?;
    Ok((
        new_iet,
        StepRecord {
            eps,
            winner,
            loser,
            a,
        },
    ))
}

/// A point of the natural extension: (π, λ, τ) with |λ| = 1, τ in the cone
/// Θ_π, heights h = Ω_π τ > 0, and unit area ⟨λ, h⟩ = 1.
#[derive(Debug, Clone)]
pub struct ZipperedState {
    pub ctx: Ctx,
    pub perm: PermPair,
    pub lambda: Vec<Real>,
    pub tau: Vec<Real>,
    pub heights: Vec<Real>,
}

impl ZipperedState {
    pub fn new(ctx: Ctx, perm: PermPair, lambda: Vec<Real>, tau: Vec<Real>) -> Result<Self> {
        let heights = heights_from_tau(ctx, &perm, &tau);
        let state = ZipperedState {
            ctx,
            perm,
            lambda,
            tau,
            heights,
        };
        state.check()?;
        Ok(state)
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    fn check(&self) -> Result<()> {
        let d = self.d();
        // tolerance scales with the ambient τ magnitude: the cone minima are
        // differences of large entries and carry that absolute rounding
        let tol = self.ctx.eps(8) * (self.ctx.one() + crate::linalg::norm1(self.ctx, &self.tau));
        // cone conditions: top partial sums positive, bottom negative
        for k in 1..d {
            let mut top = self.ctx.zero();
            let mut bot = self.ctx.zero();
            for a in 0..d {
                if self.perm.top(a) <= k {
                    top += &self.tau[a];
                }
                if self.perm.bottom(a) <= k {
                    bot += &self.tau[a];
                }
            }
            if top <= -tol.clone() || bot >= tol.clone() {
                return Err(Error::InvalidTau);
            }
        }
        for h in &self.heights {
            if h <= &-tol.clone() {
                return Err(Error::InvalidTau);
            }
        }
        let area = crate::linalg::dot(self.ctx, &self.lambda, &self.heights);
        if (area - 1u32).abs() > tol {
            return Err(Error::InvalidTau);
        }
        Ok(())
    }

    /// Smallest of the top partial τ-sums and the heights: the rectangle
    /// height t^{(k)} in the balance criterion.
    pub fn min_rect_height(&self) -> Real {
        let d = self.d();
        let mut best: Option<Real> = None;
        for k in 1..d {
            let mut top = self.ctx.zero();
            for a in 0..d {
                if self.perm.top(a) <= k {
                    top += &self.tau[a];
                }
            }
            best = Some(match best {
                None => top,
                Some(b) => b.min(&top),
            });
        }
        for h in &self.heights {
            best = Some(match best {
                None => h.clone(),
                Some(b) => b.min(h),
            });
        }
        best.expect("d >= 2")
    }

    pub fn max_height(&self) -> Real {
        let mut best = self.heights[0].clone();
        for h in &self.heights[1..] {
            if h > &best {
                best = h.clone();
            }
        }
        best
    }

    /// IET with these (normalized) lengths.
    pub fn iet(&self) -> Result<IetState> {
        IetState::new(self.ctx, self.perm.clone(), self.lambda.clone())
    }
}

/// One step of the natural extension 𝓡̂(π,λ,τ) =
/// (π̃, A⁻¹λ/|A⁻¹λ|, |A⁻¹λ| A⁻¹τ); area is re-pinned multiplicatively.
pub fn nat_ext_step(z: &ZipperedState) -> Result<(ZipperedState, StepRecord)> {
    let ctx = z.ctx;
    let iet = z.iet()?;
    let (new_iet, rec) = rv_step(&iet)?;
    let scale = new_iet.total.clone(); // |A⁻¹λ| before renormalization
    let new_lambda: Vec<Real> = new_iet
        .lengths
        .iter()
        .map(|l| (l / &scale).complete(ctx.prec))
        .collect();
    // A⁻¹τ: subtract loser component from winner, then multiply by |A⁻¹λ|
    let mut new_tau = z.tau.clone();
    new_tau[rec.winner] = (&z.tau[rec.winner] - &z.tau[rec.loser]).complete(ctx.prec);
    for t in new_tau.iter_mut() {
        *t *= &scale;
    }
    // re-pin the area to 1 (multiplicative correction within tolerance)
    let heights = heights_from_tau(ctx, &new_iet.perm, &new_tau);
    let area = crate::linalg::dot(ctx, &new_lambda, &heights);
    let tol = ctx.eps(8) * (ctx.one() + crate::linalg::norm1(ctx, &new_tau));
    if (area.clone() - 1u32).abs() > tol {
        return Err(Error::InvalidTau);
    }
    for t in new_tau.iter_mut() {
        *t /= &area;
    }
    let out = ZipperedState::new(ctx, new_iet.perm.clone(), new_lambda, new_tau)?;
    Ok((out, rec))
}

/// Rejection-sample a zippered state: λ uniform on the simplex, τ from a
/// box until the cone conditions hold, scaled to unit area. Deterministic
/// given the seed.
pub fn sample_zippered(ctx: Ctx, perm: &PermPair, seed: u64) -> Result<ZipperedState> {
    sample_zippered_budget(ctx, perm, seed, 100_000)
}

pub fn sample_zippered_budget(
    ctx: Ctx,
    perm: &PermPair,
    seed: u64,
    budget: usize,
) -> Result<ZipperedState> {
    let d = perm.d();
    let mut rng = RealRng::new(ctx, seed);
    let lambda = rng.simplex(d);
    for attempt in 0..budget {
        let tau: Vec<Real> = (0..d).map(|_| rng.symmetric()).collect();
        if !cone_ok(ctx, perm, &tau) {
            continue;
        }
        let heights = heights_from_tau(ctx, perm, &tau);
        if heights.iter().any(|h| !h.is_sign_positive() || h.is_zero()) {
            continue;
        }
        let area = crate::linalg::dot(ctx, &lambda, &heights);
        if !area.is_sign_positive() || area.is_zero() {
            continue;
        }
        let tau_scaled: Vec<Real> = tau.iter().map(|t| (t / &area).complete(ctx.prec)).collect();
        let z = ZipperedState::new(ctx, perm.clone(), lambda, tau_scaled)?;
        let _ = attempt;
        return Ok(z);
    }
    Err(Error::RejectionBudgetExceeded(budget))
}

/// Rectangle heights of the suspension: h_α = Σ_{π₀(β)<π₀(α)} τ_β −
/// Σ_{π₁(β)<π₁(α)} τ_β, which is −Ω_π τ in the sign convention of Ω used
/// for translations (positive on the cone Θ_π).
pub fn heights_from_tau(ctx: Ctx, perm: &PermPair, tau: &[Real]) -> Vec<Real> {
    let omega = perm.omega();
    omega
        .mul_real_vec(ctx, tau)
        .into_iter()
        .map(|h| -h)
        .collect()
}

fn cone_ok(ctx: Ctx, perm: &PermPair, tau: &[Real]) -> bool {
    let d = perm.d();
    for k in 1..d {
        let mut top = ctx.zero();
        let mut bot = ctx.zero();
        for a in 0..d {
            if perm.top(a) <= k {
                top += &tau[a];
            }
            if perm.bottom(a) <= k {
                bot += &tau[a];
            }
        }
        if !(top.is_sign_positive() && !top.is_zero()) {
            return false;
        }
        if !(bot.is_sign_negative() && !bot.is_zero()) {
            return false;
        }
    }
    true
}

/// Closure of the canonical form of `perm` under both elementary moves.
/// Members are canonical representatives (top row in alphabet order).
pub fn rauzy_class(perm: &PermPair) -> Result<Vec<PermPair>> {
    if perm.d() > 8 {
        return Err(Error::BudgetExceeded(
            "Rauzy class enumeration capped at d <= 8".into(),
        ));
    }
    let start = perm.canonical();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    seen.insert(start.monodromy());
    queue.push_back(start.clone());
    out.push(start);
    while let Some(p) = queue.pop_front() {
        for eps in [0u8, 1u8] {
            let q = perm_move(&p, eps).canonical();
            if seen.insert(q.monodromy()) {
                queue.push_back(q.clone());
                out.push(q);
            }
        }
    }
    out.sort_by_key(|p| p.monodromy());
    Ok(out)
}
