//! Interval exchange transformations: permutation pairs, the translation
//! structure Ω_π, evaluation, orbits with an endpoint-proximity guard, and
//! the genus/singularity count.

use crate::error::{Error, Result};
use crate::linalg::IntMat;
use crate::num::{decimal_string, Ctx, Real};
use rug::ops::CompleteRound;
use serde::{Deserialize, Serialize};

/// Pair of bijections letter → position (1-based), the paper's (π₀, π₁).
/// Letters are indices 0..d into `alphabet`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PermPair {
    pub alphabet: Vec<String>,
    top: Vec<usize>,
    bottom: Vec<usize>,
}

impl PermPair {
    /// Build from position maps (1-based positions per letter).
    pub fn new(alphabet: Vec<String>, top: Vec<usize>, bottom: Vec<usize>) -> Result<Self> {
        let d = alphabet.len();
        if d < 2 || top.len() != d || bottom.len() != d {
            return Err(Error::ConfigInvalid("permutation arity mismatch".into()));
        }
        for row in [&top, &bottom] {
            let mut seen = vec![false; d];
            for &p in row {
                if p < 1 || p > d || seen[p - 1] {
                    return Err(Error::ConfigInvalid("positions are not a bijection".into()));
                }
                seen[p - 1] = true;
            }
        }
        let pair = PermPair {
            alphabet,
            top,
            bottom,
        };
        if !pair.is_irreducible() {
            return Err(Error::ReduciblePermutation);
        }
        Ok(pair)
    }

    /// Pair with top row in alphabet order and given bottom row, e.g.
    /// `from_bottom_order(&["A","B","C"], &[2,1,0])` is the d=3 reversal.
    pub fn from_bottom_order(names: &[&str], bottom_order: &[usize]) -> Result<Self> {
        let d = names.len();
        let top = (1..=d).collect();
        let mut bottom = vec![0usize; d];
        for (pos, &letter) in bottom_order.iter().enumerate() {
            bottom[letter] = pos + 1;
        }
        PermPair::new(names.iter().map(|s| s.to_string()).collect(), top, bottom)
    }

    /// Reversal permutation on d letters: monodromy d, d-1, …, 1.
    pub fn reversal(d: usize) -> Self {
        let names: Vec<String> = (0..d).map(letter_name).collect();
        let top = (1..=d).collect();
        let bottom = (1..=d).rev().collect();
        PermPair {
            alphabet: names,
            top,
            bottom,
        }
    }

    pub fn d(&self) -> usize {
        self.alphabet.len()
    }

    pub fn top(&self, letter: usize) -> usize {
        self.top[letter]
    }

    pub fn bottom(&self, letter: usize) -> usize {
        self.bottom[letter]
    }

    pub fn pos(&self, eps: u8, letter: usize) -> usize {
        if eps == 0 {
            self.top[letter]
        } else {
            self.bottom[letter]
        }
    }

    /// Letter at 1-based position `p` of row ε.
    pub fn letter_at(&self, eps: u8, p: usize) -> usize {
        let row = if eps == 0 { &self.top } else { &self.bottom };
        row.iter().position(|&q| q == p).expect("valid position")
    }

    /// π₁ ∘ π₀⁻¹ as a 0-based vector: monodromy[i] = π₁(π₀⁻¹(i+1)) − 1.
    pub fn monodromy(&self) -> Vec<usize> {
        (1..=self.d())
            .map(|p| self.bottom[self.letter_at(0, p)] - 1)
            .collect()
    }

    pub fn is_irreducible(&self) -> bool {
        let mono = self.monodromy();
        let d = self.d();
        let mut max_seen = 0usize;
        for k in 0..d - 1 {
            max_seen = max_seen.max(mono[k]);
            if max_seen == k {
                return false;
            }
        }
        true
    }

    /// Relabel letters by top position; two pairs describe the same IET
    /// combinatorics iff their canonical forms agree.
    pub fn canonical(&self) -> PermPair {
        let d = self.d();
        let names: Vec<String> = (0..d).map(letter_name).collect();
        let mut bottom = vec![0usize; d];
        for p in 1..=d {
            let letter = self.letter_at(0, p);
            bottom[p - 1] = self.bottom[letter];
        }
        PermPair {
            alphabet: names,
            top: (1..=d).collect(),
            bottom,
        }
    }

    /// The antisymmetric translation structure matrix of §2.2.1.
    pub fn omega(&self) -> IntMat {
        let d = self.d();
        let mut m = IntMat::zeros(d);
        for a in 0..d {
            for b in 0..d {
                if self.bottom[a] > self.bottom[b] && self.top[a] < self.top[b] {
                    m[(a, b)] = 1.into();
                } else if self.bottom[a] < self.bottom[b] && self.top[a] > self.top[b] {
                    m[(a, b)] = (-1).into();
                }
            }
        }
        m
    }
}

pub fn letter_name(i: usize) -> String {
    let c = (b'A' + (i % 26) as u8) as char;
    if i < 26 {
        c.to_string()
    } else {
        format!("{}{}", c, i / 26)
    }
}

/// Genus and singularity count of the suspended surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GenusKappa {
    pub g: usize,
    pub kappa: usize,
}

/// An IET: permutation pair, positive p-bit lengths, and the derived data.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct IetState {
    pub perm: PermPair,
    pub ctx: Ctx,
    pub lengths: Vec<Real>,
    /// Left endpoints in domain order of each letter.
    pub left: Vec<Real>,
    /// Right endpoints.
    pub right: Vec<Real>,
    /// Translations w = Ω_π λ.
    pub trans: Vec<Real>,
    pub omega: IntMat,
    pub total: Real,
}

impl IetState {
    pub fn new(ctx: Ctx, perm: PermPair, lengths: Vec<Real>) -> Result<Self> {
        let d = perm.d();
        if lengths.len() != d {
            return Err(Error::ConfigInvalid("length arity mismatch".into()));
        }
        for (i, l) in lengths.iter().enumerate() {
            if !(l.is_sign_positive() && !l.is_zero() && l.is_finite()) {
                return Err(Error::NonPositiveLength(i));
            }
        }
        if !perm.is_irreducible() {
            return Err(Error::ReduciblePermutation);
        }
        let omega = perm.omega();
        let trans = omega.mul_real_vec(ctx, &lengths);
        let mut left = vec![ctx.zero(); d];
        let mut acc = ctx.zero();
        for p in 1..=d {
            let letter = perm.letter_at(0, p);
            left[letter] = acc.clone();
            acc += &lengths[letter];
        }
        let total = acc;
        let right: Vec<Real> = (0..d)
            .map(|a| (&left[a] + &lengths[a]).complete(ctx.prec))
            .collect();
        Ok(IetState {
            perm,
            ctx,
            lengths,
            left,
            right,
            trans,
            omega,
            total,
        })
    }

    pub fn d(&self) -> usize {
        self.perm.d()
    }

    /// Letter whose interval [l_α, r_α) contains x.
    pub fn letter_of(&self, x: &Real) -> Result<usize> {
        if x < &self.ctx.zero() || x >= &self.total {
            return Err(Error::OutOfDomain);
        }
        for a in 0..self.d() {
            if x >= &self.left[a] && x < &self.right[a] {
                return Ok(a);
            }
        }
        Err(Error::OutOfDomain)
    }

    /// Letter whose interval (l_α, r_α] contains x (the hat convention).
    pub fn letter_of_hat(&self, x: &Real) -> Result<usize> {
        if x <= &self.ctx.zero() || x > &self.total {
            return Err(Error::OutOfDomain);
        }
        for a in 0..self.d() {
            if x > &self.left[a] && x <= &self.right[a] {
                return Ok(a);
            }
        }
        Err(Error::OutOfDomain)
    }

    /// T x = x + w_α on [l_α, r_α).
    pub fn apply(&self, x: &Real) -> Result<Real> {
        let a = self.letter_of(x)?;
        Ok((x + &self.trans[a]).complete(self.ctx.prec))
    }

    /// T̂ x = x + w_α on (l_α, r_α] (Remark 2.2 convention).
    pub fn apply_hat(&self, x: &Real) -> Result<Real> {
        let a = self.letter_of_hat(x)?;
        Ok((x + &self.trans[a]).complete(self.ctx.prec))
    }

    /// Inverse of T: the image intervals [l_α+w_α, r_α+w_α) tile [0,|λ|).
    pub fn apply_inv(&self, y: &Real) -> Result<Real> {
        if y < &self.ctx.zero() || y >= &self.total {
            return Err(Error::OutOfDomain);
        }
        for a in 0..self.d() {
            let lo = (&self.left[a] + &self.trans[a]).complete(self.ctx.prec);
            let hi = (&self.right[a] + &self.trans[a]).complete(self.ctx.prec);
            if y >= &lo && y < &hi {
                return Ok((y - &self.trans[a]).complete(self.ctx.prec));
            }
        }
        Err(Error::OutOfDomain)
    }

    /// Distance from x to the nearest division point l_α (α with π₀(α)≠1)
    /// or to the domain ends.
    pub fn endpoint_distance(&self, x: &Real) -> Real {
        let mut best = x.clone().min(&(&self.total - x).complete(self.ctx.prec));
        for a in 0..self.d() {
            if self.perm.top(a) == 1 {
                continue;
            }
            let dist = (x - &self.left[a]).complete(self.ctx.prec).abs();
            if dist < best {
                best = dist;
            }
        }
        best
    }

    /// Forward orbit x, Tx, …, T^{n-1}x. Flags proximity to division points
    /// below `guard_eps`; errors out when the margin drops below 2^{-p+16}.
    pub fn orbit(&self, x: &Real, n: usize, guard_eps: &Real) -> Result<Orbit> {
        let mut points = Vec::with_capacity(n);
        let mut proximity_flag = false;
        let hard = self.ctx.eps(16) * &self.total;
        let mut y = x.clone();
        for _ in 0..n {
            let dist = self.endpoint_distance(&y);
            if !y.is_zero() {
                if dist < hard {
                    return Err(Error::PrecisionExhausted(format!(
                        "orbit point within 2^-{} of an endpoint",
                        self.ctx.prec - 16
                    )));
                }
                if &dist < guard_eps {
                    proximity_flag = true;
                }
            }
            points.push(y.clone());
            y = self.apply(&y)?;
        }
        Ok(Orbit {
            points,
            proximity_flag,
        })
    }

    /// (g, κ) from rank Ω, cross-checked against the σ-orbit count.
    pub fn genus_kappa(&self) -> Result<GenusKappa> {
        genus_kappa(&self.perm)
    }
}

#[derive(Debug, Clone)]
pub struct Orbit {
    pub points: Vec<Real>,
    pub proximity_flag: bool,
}

pub fn genus_kappa(perm: &PermPair) -> Result<GenusKappa> {
    let d = perm.d();
    let rank = perm.omega().rank();
    if rank % 2 != 0 {
        return Err(Error::InternalInconsistency(
            "antisymmetric matrix with odd rank".into(),
        ));
    }
    let g = rank / 2;
    let kappa = d + 1 - rank;
    let orbits = crate::singularity::singularity_data(perm).orbits.len();
    if orbits != kappa {
        return Err(Error::InternalInconsistency(format!(
            "kappa from rank is {kappa} but sigma has {orbits} orbits"
        )));
    }
    Ok(GenusKappa { g, kappa })
}

/// f64 shadow of an IET for quadrature sweeps. Branch decisions near the
/// division points can land on the wrong side at the 1e-16 scale, which is
/// measure-negligible for integration; orbits that feed dynamics stay p-bit.
#[derive(Debug, Clone)]
pub struct F64Iet {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub trans: Vec<f64>,
    pub total: f64,
}

impl F64Iet {
    pub fn from_state(state: &IetState) -> Self {
        F64Iet {
            left: state.left.iter().map(|x| x.to_f64()).collect(),
            right: state.right.iter().map(|x| x.to_f64()).collect(),
            trans: state.trans.iter().map(|x| x.to_f64()).collect(),
            total: state.total.to_f64(),
        }
    }

    pub fn letter_of(&self, x: f64) -> usize {
        for a in 0..self.left.len() {
            if x >= self.left[a] && x < self.right[a] {
                return a;
            }
        }
        // clamp boundary round-off to the nearest interval
        if x >= self.total {
            self.right
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        } else {
            self.left
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap()
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        x + self.trans[self.letter_of(x)]
    }
}

/// On-disk description of an IET (External Interfaces schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IetDescription {
    pub alphabet: Vec<String>,
    pub pi_top: Vec<usize>,
    pub pi_bottom: Vec<usize>,
    pub lengths: Vec<String>,
    pub precision_bits: u32,
}

impl IetDescription {
    pub fn to_state(&self) -> Result<IetState> {
        let ctx = Ctx::new(self.precision_bits);
        let perm = PermPair::new(
            self.alphabet.clone(),
            self.pi_top.clone(),
            self.pi_bottom.clone(),
        )?;
        let lengths = self
            .lengths
            .iter()
            .map(|s| {
                ctx.real_from_decimal(s)
                    .ok_or_else(|| Error::ConfigInvalid(format!("bad decimal: {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        IetState::new(ctx, perm, lengths)
    }

    pub fn from_state(state: &IetState) -> Self {
        IetDescription {
            alphabet: state.perm.alphabet.clone(),
            pi_top: (0..state.d()).map(|a| state.perm.top(a)).collect(),
            pi_bottom: (0..state.d()).map(|a| state.perm.bottom(a)).collect(),
            lengths: state.lengths.iter().map(decimal_string).collect(),
            precision_bits: state.ctx.prec,
        }
    }
}

pub fn rotation_pair() -> PermPair {
    PermPair::reversal(2)
}
