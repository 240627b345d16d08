//! Veech's σ-permutation, its orbits (the saddles of the suspension), the
//! kernel basis vectors b(𝒪), and the boundary operator ∂_π on piecewise
//! constant data with its exact H(π)-projection.

use crate::iet::PermPair;
use crate::linalg::project_off_span;
use crate::num::{Ctx, Real};
use rug::{Integer, Rational};

#[derive(Debug, Clone)]
pub struct SingularityData {
    /// σ on {0,…,d}.
    pub sigma: Vec<usize>,
    /// Orbit partition Σ(π) of {0,…,d}; each orbit sorted ascending.
    pub orbits: Vec<Vec<usize>>,
    /// Indices into `orbits` of the orbits not containing 0 (Σ₀).
    pub orbits0: Vec<usize>,
    /// b(𝒪) per orbit, same order as `orbits`.
    pub b_vectors: Vec<Vec<Integer>>,
    /// 𝒜⁻_𝒪: letters whose right endpoint belongs to the saddle.
    pub a_minus: Vec<Vec<usize>>,
    /// 𝒜⁺_𝒪: letters whose left endpoint belongs to the saddle.
    pub a_plus: Vec<Vec<usize>>,
}

impl SingularityData {
    pub fn kappa(&self) -> usize {
        self.orbits.len()
    }

    /// Basis of ker Ω_π: the b-vectors of the orbits avoiding 0.
    pub fn kernel_basis(&self) -> Vec<Vec<Integer>> {
        self.orbits0
            .iter()
            .map(|&i| self.b_vectors[i].clone())
            .collect()
    }
}

/// σ(j) = p⁻¹(p(j)+1) − 1 where p extends the monodromy by fixing 0 and d+1.
pub fn singularity_data(perm: &PermPair) -> SingularityData {
    let d = perm.d();
    // p on {0,…,d+1}
    let mut p = vec![0usize; d + 2];
    p[0] = 0;
    p[d + 1] = d + 1;
    let mono = perm.monodromy();
    for j in 1..=d {
        p[j] = mono[j - 1] + 1;
    }
    let mut p_inv = vec![0usize; d + 2];
    for (j, &pj) in p.iter().enumerate() {
        p_inv[pj] = j;
    }
    let sigma: Vec<usize> = (0..=d).map(|j| p_inv[p[j] + 1] - 1).collect();

    let mut seen = vec![false; d + 1];
    let mut orbits: Vec<Vec<usize>> = Vec::new();
    for start in 0..=d {
        if seen[start] {
            continue;
        }
        let mut orbit = Vec::new();
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            orbit.push(j);
            j = sigma[j];
        }
        orbit.sort_unstable();
        orbits.push(orbit);
    }
    orbits.sort();

    let orbits0: Vec<usize> = orbits
        .iter()
        .enumerate()
        .filter(|(_, o)| !o.contains(&0))
        .map(|(i, _)| i)
        .collect();

    let contains = |orbit: &[usize], j: usize| orbit.binary_search(&j).is_ok();
    let b_vectors: Vec<Vec<Integer>> = orbits
        .iter()
        .map(|orbit| {
            (0..d)
                .map(|alpha| {
                    let pos = perm.top(alpha);
                    let hi = contains(orbit, pos) as i64;
                    let lo = contains(orbit, pos - 1) as i64;
                    Integer::from(hi - lo)
                })
                .collect()
        })
        .collect();
    let a_minus: Vec<Vec<usize>> = orbits
        .iter()
        .map(|orbit| (0..d).filter(|&a| contains(orbit, perm.top(a))).collect())
        .collect();
    let a_plus: Vec<Vec<usize>> = orbits
        .iter()
        .map(|orbit| (0..d).filter(|&a| contains(orbit, perm.top(a) - 1)).collect())
        .collect();

    SingularityData {
        sigma,
        orbits,
        orbits0,
        b_vectors,
        a_minus,
        a_plus,
    }
}

/// Image of a vector under ∂_π, one value per σ-orbit.
#[derive(Debug, Clone)]
pub struct BoundaryImage {
    pub values: Vec<Real>,
}

impl BoundaryImage {
    /// The paper's norm on ℝ^Σ: sum of absolute values.
    pub fn norm(&self, ctx: Ctx) -> Real {
        let mut acc = ctx.zero();
        for v in &self.values {
            acc += v.clone().abs();
        }
        acc
    }
}

/// (∂_π h)_𝒪 = Σ_{α∈𝒜⁻} h_α − Σ_{α∈𝒜⁺} h_α for piecewise constant h.
pub fn boundary_pc(ctx: Ctx, sing: &SingularityData, h: &[Real]) -> BoundaryImage {
    let values = sing
        .orbits
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mut acc = ctx.zero();
            for &a in &sing.a_minus[i] {
                acc += &h[a];
            }
            for &a in &sing.a_plus[i] {
                acc -= &h[a];
            }
            acc
        })
        .collect();
    BoundaryImage { values }
}

/// Exact rational ∂ for integer vectors; used by kernel-membership tests.
pub fn boundary_pc_exact(sing: &SingularityData, h: &[Rational]) -> Vec<Rational> {
    sing.orbits
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let mut acc = Rational::new();
            for &a in &sing.a_minus[i] {
                acc += &h[a];
            }
            for &a in &sing.a_plus[i] {
                acc -= &h[a];
            }
            acc
        })
        .collect()
}

/// Orthogonal projection onto H(π) = ker ∂_π, computed exactly over ℚ from
/// the integer kernel basis and rounded once to p bits.
pub fn project_h(ctx: Ctx, sing: &SingularityData, h: &[Real]) -> Vec<Real> {
    project_h_rat(sing, &reals_to_rationals(h))
        .iter()
        .map(|q| {
            let num = ctx.real_from_int(q.numer());
            let den = ctx.real_from_int(q.denom());
            num / den
        })
        .collect()
}

/// Exact-rational version of [`project_h`].
pub fn project_h_rat(sing: &SingularityData, h: &[Rational]) -> Vec<Rational> {
    // H(π)^⊥ = span{b(𝒪)}: project off the full b-span (drop one dependent
    // vector: the Σ₀ basis plus nothing else is already spanning).
    project_off_span(&sing.kernel_basis(), h)
}

fn reals_to_rationals(h: &[Real]) -> Vec<Rational> {
    h.iter()
        .map(|x| x.to_rational().expect("finite float"))
        .collect()
}

/// Solve ∂_π(h) = target for a piecewise-constant h: possible exactly when
/// the target sums to zero (the image characterization). The minimal-norm
/// solution h = Σ c_𝒪 b(𝒪) over the Σ₀ basis is returned.
pub fn solve_boundary(ctx: Ctx, sing: &SingularityData, target: &[Real]) -> Option<Vec<Real>> {
    let d = sing.b_vectors[0].len();
    let basis = sing.kernel_basis();
    if basis.is_empty() {
        // κ = 1: only the zero target is solvable (tolerance covers the
        // rounding of the compensated log sums feeding the target)
        return if target.iter().all(|v| v.clone().abs() < ctx.eps(32)) {
            Some(vec![ctx.zero(); d])
        } else {
            None
        };
    }
    let m = basis.len();
    // Gram over the b-basis; the target restricted to the Σ₀ orbits
    let gram: Vec<Vec<Real>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let mut acc = ctx.zero();
                    for t in 0..d {
                        acc += ctx.real_from_int(&basis[i][t]) * ctx.real_from_int(&basis[j][t]);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let rhs: Vec<Real> = sing
        .orbits0
        .iter()
        .map(|&oi| target[oi].clone())
        .collect();
    let coeffs = crate::linalg::lu_solve(ctx, &gram, &rhs)?;
    let mut h = vec![ctx.zero(); d];
    for (i, c) in coeffs.iter().enumerate() {
        for t in 0..d {
            h[t] += c.clone() * ctx.real_from_int(&basis[i][t]);
        }
    }
    Some(h)
}
