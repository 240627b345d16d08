//! Lyapunov spectrum of the accelerated cocycle on H(π): QR-deflated
//! exponent estimation, stable/unstable splitting estimates, and the
//! restricted norms ‖Q_s(k,l)‖ the Diophantine series consume.

use crate::accel::AccelPath;
use crate::error::{Error, Result};
use crate::linalg::{dot, l1_subspace_op_norm, norm2, qr_mgs, sym_eigen, Frame};
use crate::num::{Ctx, Real, RealRng};
use crate::singularity::singularity_data;
use rug::ops::CompleteRound;
use serde::Serialize;

/// Orthonormal frame spanning H(π) = ker ∂_π at the given level.
pub fn h_frame(ctx: Ctx, path: &AccelPath, level: usize) -> Frame {
    let perm = &path.levels[level].iet.perm;
    let d = perm.d();
    let sing = singularity_data(perm);
    let kernel: Vec<Vec<Real>> = sing
        .kernel_basis()
        .iter()
        .map(|b| b.iter().map(|x| ctx.real_from_int(x)).collect())
        .collect();
    let mut cols: Vec<Vec<Real>> = Vec::new();
    // orthonormalize the kernel first, then extend by coordinate vectors;
    // the trailing columns then span H = kernel^⊥
    for b in kernel {
        cols.push(b);
    }
    let k_count = cols.len();
    for e in 0..d {
        let mut v = vec![ctx.zero(); d];
        v[e] = ctx.one();
        cols.push(v);
    }
    let mut ortho: Vec<Vec<Real>> = Vec::new();
    for col in cols {
        let mut v = col;
        for u in &ortho {
            let proj = dot(ctx, u, &v);
            for (t, c) in v.iter_mut().enumerate() {
                *c -= (&proj * &u[t]).complete(ctx.prec);
            }
        }
        let n = norm2(ctx, &v);
        if n < ctx.eps(ctx.prec / 2) {
            continue;
        }
        for c in v.iter_mut() {
            *c /= &n;
        }
        ortho.push(v);
    }
    Frame {
        cols: ortho.split_off(k_count),
    }
}

/// Project a vector onto H(π^(level)) (float, via the orthonormal frame).
pub fn project_h_frame(ctx: Ctx, frame: &Frame, v: &[Real]) -> Vec<Real> {
    let mut out = vec![ctx.zero(); v.len()];
    for col in &frame.cols {
        let c = dot(ctx, col, v);
        for (t, o) in out.iter_mut().enumerate() {
            *o += (&c * &col[t]).complete(ctx.prec);
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    /// Exponents per accelerated level, descending.
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Levels consumed by the sweep.
    pub steps: usize,
    /// Elementary RV steps underneath (for per-step normalization).
    pub rv_steps: usize,
}

impl LyapunovEstimate {
    /// Exponents per elementary RV step (acceleration-independent for the
    /// top exponent; ratios are invariant either way).
    pub fn per_rv_step(&self) -> Vec<f64> {
        let scale = self.steps as f64 / self.rv_steps.max(1) as f64;
        self.exponents.iter().map(|t| t * scale).collect()
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.exponents[i] / self.exponents[0]
    }
}

/// QR-deflated exponent estimation for a g-frame in H(π) transported by
/// the cocycle blocks. Deterministic given the path and seed.
pub fn lyapunov_exponents(path: &AccelPath, g: usize, seed: u64) -> Result<LyapunovEstimate> {
    let depth = path.depth();
    if depth < 20 {
        return Err(Error::ConfigInvalid("need at least 20 levels".into()));
    }
    let ctx = path.ctx;
    let d = path.d();
    let base_frame = h_frame(ctx, path, 0);
    if g > base_frame.width() {
        return Err(Error::ConfigInvalid("frame wider than dim H".into()));
    }
    let mut rng = RealRng::new(ctx, seed);
    // random frame inside H(π^(0))
    let mut cols = Vec::with_capacity(g);
    for _ in 0..g {
        let raw: Vec<Real> = (0..d).map(|_| rng.symmetric()).collect();
        cols.push(project_h_frame(ctx, &base_frame, &raw));
    }
    let (mut frame, _) = qr_mgs(ctx, &Frame { cols }).ok_or(Error::FrameDegenerate)?;
    let mut logs: Vec<Vec<f64>> = vec![Vec::with_capacity(depth); g];
    for k in 1..=depth {
        let z = &path.levels[k].z;
        let moved = Frame {
            cols: frame
                .cols
                .iter()
                .map(|v| z.mul_real_vec(ctx, v))
                .collect(),
        };
        let (q, diag) = qr_mgs(ctx, &moved).ok_or(Error::FrameDegenerate)?;
        for i in 0..g {
            let l = diag[i].to_f64().ln();
            if !l.is_finite() {
                return Err(Error::FrameDegenerate);
            }
            logs[i].push(l);
        }
        frame = q;
    }
    let mut exponents = Vec::with_capacity(g);
    let mut std_errors = Vec::with_capacity(g);
    for series in &logs {
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        let var = series.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        exponents.push(mean);
        std_errors.push((var / n).sqrt());
    }
    Ok(LyapunovEstimate {
        exponents,
        std_errors,
        steps: depth,
        rv_steps: path.levels[depth].time,
    })
}

/// Estimated stable space Γ_s^(k): the right-singular subspace of
/// Q(k, k+horizon) restricted to H(π^(k)), for the g smallest singular
/// values. Returned as an orthonormal frame of d-vectors.
pub fn stable_basis(path: &AccelPath, k: usize, horizon: usize, g: usize) -> Result<Frame> {
    let ctx = path.ctx;
    if k + horizon > path.depth() {
        return Err(Error::DepthExceeded);
    }
    let u_h = h_frame(ctx, path, k);
    let dim_h = u_h.width();
    if horizon == 0 {
        return Err(Error::GapTooSmall(0));
    }
    let q = path.q_product(k, k + horizon);
    let c_cols: Vec<Vec<Real>> = u_h.cols.iter().map(|v| q.mul_real_vec(ctx, v)).collect();
    // Gram matrix CᵀC on the H-coordinates
    let gram: Vec<Vec<Real>> = (0..dim_h)
        .map(|i| (0..dim_h).map(|j| dot(ctx, &c_cols[i], &c_cols[j])).collect())
        .collect();
    let (vals, vecs) = sym_eigen(ctx, &gram);
    // eigenvalues descending: stable = the g smallest, gap between
    // σ_{dim_h-g-1} and σ_{dim_h-g} (squared singular values)
    if dim_h > g {
        let above = vals[dim_h - g - 1].to_f64();
        let below = vals[dim_h - g].to_f64().max(f64::MIN_POSITIVE);
        if above / below < 100.0 {
            return Err(Error::GapTooSmall(horizon));
        }
    }
    let cols: Vec<Vec<Real>> = (dim_h - g..dim_h)
        .map(|i| {
            let coeffs = &vecs.cols[i];
            let mut v = vec![ctx.zero(); path.d()];
            for (j, u) in u_h.cols.iter().enumerate() {
                for t in 0..v.len() {
                    v[t] += (&coeffs[j] * &u[t]).complete(ctx.prec);
                }
            }
            v
        })
        .collect();
    let (frame, _) = qr_mgs(ctx, &Frame { cols }).ok_or(Error::FrameDegenerate)?;
    Ok(frame)
}

#[derive(Debug, Clone)]
pub struct SplittingEstimate {
    /// Orthonormal stable frame at the origin level.
    pub stable: Frame,
    /// Unstable representatives h_1..h_g (growth-ordered, unit ℓ²).
    pub unstable: Frame,
    /// Largest principal angle (radians) between Q-transported stable
    /// frames and directly re-estimated ones, per probed level.
    pub alignment_residuals: Vec<f64>,
}

/// Unstable flag h_1,…,h_g at level `warmup`, estimated from the left
/// singular directions of Q(0, warmup) intersected with H(π^(warmup)).
pub fn unstable_flag(path: &AccelPath, warmup: usize) -> Result<Frame> {
    let ctx = path.ctx;
    if warmup > path.depth() || warmup < 1 {
        return Err(Error::ConfigInvalid("warm-up outside the path".into()));
    }
    let u_h = h_frame(ctx, path, 0);
    let dim_h = u_h.width();
    let g = dim_h / 2;
    let q = path.q_product(0, warmup);
    let c_cols: Vec<Vec<Real>> = u_h.cols.iter().map(|v| q.mul_real_vec(ctx, v)).collect();
    let gram: Vec<Vec<Real>> = (0..dim_h)
        .map(|i| (0..dim_h).map(|j| dot(ctx, &c_cols[i], &c_cols[j])).collect())
        .collect();
    let (_vals, vecs) = sym_eigen(ctx, &gram);
    // top-g right singular directions map to the dominant image flag;
    // their images under Q align with the unstable directions at `warmup`
    let mut cols = Vec::with_capacity(g);
    for i in 0..g {
        let coeffs = &vecs.cols[i];
        let mut v = vec![ctx.zero(); path.d()];
        for (j, c) in c_cols.iter().enumerate() {
            for t in 0..v.len() {
                v[t] += (&coeffs[j] * &c[t]).complete(ctx.prec);
            }
        }
        cols.push(v);
    }
    let (frame, diag) = qr_mgs(ctx, &Frame { cols }).ok_or(Error::FlagUnresolved)?;
    if diag.iter().any(|x| x.is_zero()) {
        return Err(Error::FlagUnresolved);
    }
    Ok(frame)
}

/// ‖Q(k,l)‖ restricted to the span of `stable` in the paper's ℓ¹-induced
/// operator norm; 1 at k = l.
pub fn qs_norm(path: &AccelPath, stable: &Frame, k: usize, l: usize) -> f64 {
    let ctx = path.ctx;
    if k == l {
        return 1.0;
    }
    let q = path.q_product(k, l);
    l1_subspace_op_norm(ctx, |v| q.mul_real_vec(ctx, v), stable).to_f64()
}

/// Largest principal angle between the spans of two frames (radians).
pub fn principal_angle(ctx: Ctx, a: &Frame, b: &Frame) -> f64 {
    // cos of principal angles = singular values of AᵀB for orthonormal A,B
    let (qa, _) = qr_mgs(ctx, a).expect("frame independent");
    let (qb, _) = qr_mgs(ctx, b).expect("frame independent");
    let m: Vec<Vec<Real>> = qa
        .cols
        .iter()
        .map(|u| qb.cols.iter().map(|v| dot(ctx, u, v)).collect())
        .collect();
    // smallest singular value of the cosine matrix via MᵀM
    let w = m.len();
    let gram: Vec<Vec<Real>> = (0..w)
        .map(|i| {
            (0..w)
                .map(|j| {
                    let mut acc = ctx.zero();
                    for row in &m {
                        acc += (&row[i] * &row[j]).complete(ctx.prec);
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let (vals, _) = sym_eigen(ctx, &gram);
    let min_cos2 = vals.last().map(|v| v.to_f64()).unwrap_or(0.0).clamp(0.0, 1.0);
    min_cos2.sqrt().clamp(0.0, 1.0).acos()
}

/// Full splitting estimate at level `origin`: stable frame from a forward
/// horizon, unstable flag from warm-up, and equivariance residuals.
pub fn splitting_estimate(
    path: &AccelPath,
    origin: usize,
    horizon: usize,
    g: usize,
) -> Result<SplittingEstimate> {
    let ctx = path.ctx;
    if origin < 1 {
        return Err(Error::ConfigInvalid("origin needs warm-up levels".into()));
    }
    let stable = stable_basis(path, origin, horizon, g)?;
    let unstable = unstable_flag(path, origin)?;
    // residuals: transport the stable frame a short distance forward and
    // compare against a fresh estimate with the longest available horizon
    // (unstable contamination in the estimate grows under transport, so
    // the probe distance must stay well below the estimation horizon)
    let mut alignment_residuals = Vec::new();
    for probe in [origin + 10, origin + 15] {
        if probe <= origin || probe >= path.depth() {
            continue;
        }
        let q = path.q_product(origin, probe);
        let moved = Frame {
            cols: stable.cols.iter().map(|v| q.mul_real_vec(ctx, v)).collect(),
        };
        let fresh = stable_basis(path, probe, path.depth() - probe, g)?;
        alignment_residuals.push(principal_angle(ctx, &moved, &fresh));
    }
    Ok(SplittingEstimate {
        stable,
        unstable,
        alignment_residuals,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub exponents: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ratios: Vec<f64>,
    pub pairing_residuals: Vec<f64>,
    pub flag_angles: Vec<f64>,
    pub levels: usize,
    pub rv_steps: usize,
}

/// Exponents on the full 2g-frame with the symplectic pairing residuals
/// |θ_i + θ_{2g+1-i}|.
pub fn spectrum_report(path: &AccelPath, g: usize, seed: u64) -> Result<SpectrumReport> {
    let full = lyapunov_exponents(path, 2 * g, seed)?;
    let half = LyapunovEstimate {
        exponents: full.exponents[..g].to_vec(),
        std_errors: full.std_errors[..g].to_vec(),
        steps: full.steps,
        rv_steps: full.rv_steps,
    };
    let pairing_residuals: Vec<f64> = (0..g)
        .map(|i| (full.exponents[i] + full.exponents[2 * g - 1 - i]).abs())
        .collect();
    let ratios: Vec<f64> = (0..g).map(|i| half.ratio(i)).collect();
    Ok(SpectrumReport {
        exponents: half.exponents,
        std_errors: half.std_errors,
        ratios,
        pairing_residuals,
        flag_angles: Vec::new(),
        levels: full.steps,
        rv_steps: full.rv_steps,
    })
}
