//! Dynamics diagnostics: tower-decomposed Birkhoff sums, special flows
//! under log roofs, ergodic-integral evaluation with good-set accounting,
//! deviation-exponent fitting, rigidity-tower statistics, and occupation
//! ratios for skew products.

use crate::accel::AccelPath;
use crate::cocycle::{F64Cocycle, LogCocycle};
use crate::error::{Error, Result};
use crate::num::{linfit, Real};
use rug::ops::CompleteRound;
use serde::Serialize;

/// Decomposition statistics of one tower-accelerated Birkhoff sum.
#[derive(Debug, Clone, Default)]
pub struct SumStats {
    /// Deepest level whose towers were spent.
    pub deepest_level: usize,
    /// Tower passes consumed per level (ascending + descending blocks).
    pub blocks_per_level: Vec<u64>,
    /// Total pointwise evaluations of φ.
    pub evals: u64,
}

/// φ^{(n)}(x) assembled from special Birkhoff sums along the Rokhlin
/// decomposition. Piecewise-constant cocycles ride the exact integer
/// matrices (O(Σ‖Z‖) work); log cocycles sum their orbits per tower.
pub fn birkhoff_sum(path: &AccelPath, phi: &LogCocycle, x: &Real, n: u64) -> Result<Real> {
    birkhoff_sum_with_stats(path, phi, x, n).map(|(v, _)| v)
}

pub fn birkhoff_sum_with_stats(
    path: &AccelPath,
    phi: &LogCocycle,
    x: &Real,
    n: u64,
) -> Result<(Real, SumStats)> {
    let ctx = path.ctx;
    let depth = path.depth();
    let capacity = path
        .levels
        .last()
        .and_then(|l| l.heights.iter().max().cloned().unwrap_or_default().to_u64());
    if let Some(cap) = capacity {
        if n > cap.saturating_mul(path.d() as u64 * 4) {
            return Err(Error::DepthExceeded);
        }
    }
    // fast path data: piecewise-constant image vectors per level
    let pc_images = pc_level_images(path, phi);
    let mut stats = SumStats {
        blocks_per_level: vec![0; depth + 1],
        ..Default::default()
    };
    let mut total = ctx.zero();
    let mut y = x.clone();
    let mut rem = n;
    let mut k = 0usize;
    // climb while full next-level towers are still affordable
    'climb: while k < depth && rem > 0 {
        let next_total = &path.levels[k + 1].iet.total;
        let mut hops = 0u64;
        while &y >= next_total {
            let letter = path.levels[k].iet.letter_of(&y)?;
            let q = path.height_u64(k, letter)?;
            if q > rem {
                break 'climb;
            }
            total += special_eval(path, phi, &pc_images, k, letter, &y, &mut stats)?;
            rem -= q;
            y = path.levels[k].iet.apply(&y)?;
            stats.blocks_per_level[k] += 1;
            hops += 1;
            let cap = 4 * path.levels[k + 1].z.norm().to_u64().unwrap_or(u64::MAX) + 8;
            if hops > cap {
                return Err(Error::InternalInconsistency(
                    "climb exceeded the Z-block bound".into(),
                ));
            }
        }
        k += 1;
    }
    // descend, spending towers greedily
    loop {
        loop {
            if rem == 0 {
                break;
            }
            let letter = path.levels[k].iet.letter_of(&y)?;
            let q = path.height_u64(k, letter)?;
            if q > rem {
                break;
            }
            total += special_eval(path, phi, &pc_images, k, letter, &y, &mut stats)?;
            rem -= q;
            y = path.levels[k].iet.apply(&y)?;
            stats.blocks_per_level[k] += 1;
        }
        if k == 0 {
            break;
        }
        k -= 1;
    }
    debug_assert_eq!(rem, 0, "level-0 towers have unit height");
    stats.deepest_level = stats
        .blocks_per_level
        .iter()
        .rposition(|&b| b > 0)
        .unwrap_or(0);
    Ok((total, stats))
}

fn pc_level_images(path: &AccelPath, phi: &LogCocycle) -> Option<Vec<Vec<Real>>> {
    let ctx = path.ctx;
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
    let mut values = vec![ctx.zero(); d];
    for p in 1..=d {
        let a = phi.domain.perm.letter_at(0, p);
        if phi.linear.cuts[p - 1] != phi.domain.left[a] {
            return None;
        }
        values[a] = phi.linear.intercepts[p - 1].clone();
    }
    Some(
        (0..=path.depth())
            .map(|k| path.levels[k].q.mul_real_vec(ctx, &values))
            .collect(),
    )
}

fn special_eval(
    path: &AccelPath,
    phi: &LogCocycle,
    pc_images: &Option<Vec<Vec<Real>>>,
    k: usize,
    letter: usize,
    y: &Real,
    stats: &mut SumStats,
) -> Result<Real> {
    if let Some(images) = pc_images {
        stats.evals += 1;
        return Ok(images[k][letter].clone());
    }
    let q = path.height_u64(k, letter)?;
    let base = path.base();
    let ctx = path.ctx;
    let mut acc = ctx.zero();
    let mut z = y.clone();
    for j in 0..q {
        acc += phi.eval(&z)?;
        stats.evals += 1;
        if j + 1 < q {
            z = base.apply(&z)?;
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Special flows
// ---------------------------------------------------------------------------

/// Special flow over the base IET under a positive log roof, carrying a
/// fiber-integrated observable φ_f. The fiber density is the canonical
/// fiber-constant one, f(x, u) = φ_f(x)/roof(x), which makes the partial
/// crossing terms exact.
#[derive(Debug, Clone)]
pub struct SpecialFlowModel {
    pub roof: LogCocycle,
    pub observable: LogCocycle,
    pub inf_roof: f64,
}

impl SpecialFlowModel {
    pub fn new(roof: LogCocycle, observable: LogCocycle) -> Result<Self> {
        if roof
            .cplus
            .iter()
            .chain(&roof.cminus)
            .any(|c| c.is_sign_negative() && !c.is_zero())
        {
            return Err(Error::ConfigInvalid("roof constants must be >= 0".into()));
        }
        // positive log terms need the wrapped distances below 1
        if roof.domain.total.to_f64() > 1.0 + 1e-12 {
            return Err(Error::ConfigInvalid("roof domain must have |I| <= 1".into()));
        }
        let mut inf = f64::INFINITY;
        for i in 0..roof.linear.slopes.len() {
            for x in [&roof.linear.cuts[i], &roof.linear.cuts[i + 1]] {
                let v = roof.linear.intercepts[i].clone()
                    + (&roof.linear.slopes[i] * x).complete(roof.ctx.prec);
                inf = inf.min(v.to_f64());
            }
        }
        if inf <= 0.0 {
            return Err(Error::ConfigInvalid(
                "roof linear part must be bounded below by a positive constant".into(),
            ));
        }
        Ok(SpecialFlowModel {
            roof,
            observable,
            inf_roof: inf,
        })
    }

    /// Crossing count n(x, r, s): the unique n with
    /// roof^{(n)}(x) ≤ r + s < roof^{(n+1)}(x).
    pub fn roof_clock(&self, x: &Real, r: f64, s: f64) -> Result<u64> {
        let fast = F64Cocycle::from_cocycle(&self.roof);
        let mut y = x.clone();
        let base = &self.roof.domain;
        let target = r + s;
        let mut acc = 0.0f64;
        let mut n = 0u64;
        let cap = (s / self.inf_roof).ceil() as u64 + 2;
        loop {
            let v = fast.eval(y.to_f64());
            if acc + v > target {
                return Ok(n);
            }
            acc += v;
            n += 1;
            if n > cap {
                return Err(Error::InternalInconsistency(
                    "roof clock passed the s/inf bound".into(),
                ));
            }
            y = base.apply(&y)?;
        }
    }

    /// Ergodic integral ∫₀ˢ f(T^g_t(x,r)) dt for the fiber-constant f,
    /// with good-set checking at cutoff `c` and the certified bound on the
    /// partial-crossing terms.
    pub fn ergodic_integral(&self, x: &Real, r: f64, s: f64, c: f64) -> Result<(f64, f64)> {
        let roof_fast = F64Cocycle::from_cocycle(&self.roof);
        let obs_fast = F64Cocycle::from_cocycle(&self.observable);
        let base = &self.roof.domain;
        let mut y = x.clone();
        let g0 = roof_fast.eval(y.to_f64());
        if r >= g0 {
            return Err(Error::OutOfDomain);
        }
        if g0 > c {
            return Err(Error::OutsideGoodSet);
        }
        let target = r + s;
        let mut acc_roof = 0.0f64;
        let mut value = 0.0f64;
        let mut sup_density: f64 = 0.0;
        loop {
            let g = roof_fast.eval(y.to_f64());
            if g > c {
                return Err(Error::OutsideGoodSet);
            }
            let phi = obs_fast.eval(y.to_f64());
            sup_density = sup_density.max((phi / g).abs());
            if acc_roof + g > target {
                // final partial crossing
                let t_in = target - acc_roof;
                value += phi * (t_in / g);
                break;
            }
            value += phi;
            acc_roof += g;
            y = base.apply(&y)?;
        }
        // subtract the initial offset [0, r) of the first fiber
        let phi0 = obs_fast.eval(x.to_f64());
        value -= phi0 * (r / g0);
        let bound = 2.0 * c * sup_density;
        Ok((value, bound))
    }
}

/// Fraction of the phase space rejected at cutoff c for horizon s, and the
/// theoretical envelope s·ξ(c) + 2c·ξ(c) + Ξ(c) with ξ(c) = dCe^{-bc}.
pub fn good_set_rejection_rate(
    model: &SpecialFlowModel,
    seeds: u64,
    trials: usize,
    s: f64,
    c: f64,
) -> (f64, f64) {
    let ctx = model.roof.ctx;
    let mut rng = crate::num::RealRng::new(ctx, seeds);
    let mut rejected = 0usize;
    let mut done = 0usize;
    for _ in 0..trials {
        let x = rng.uniform() * &model.roof.domain.total;
        let r = 0.0;
        match model.ergodic_integral(&x, r, s, c) {
            Err(Error::OutsideGoodSet) => {
                rejected += 1;
                done += 1;
            }
            Ok(_) => {
                done += 1;
            }
            Err(_) => {}
        }
    }
    let rate = rejected as f64 / done.max(1) as f64;
    // fit C, b from the roof's singular structure: roof(x) ≤ c when x is
    // at distance ≥ e^{-(c - sup g_lin)/ℒ-ish}; use the leading constant
    let cmax = model
        .roof
        .cplus
        .iter()
        .chain(&model.roof.cminus)
        .map(|v| v.to_f64())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let baseline = model.inf_roof;
    let b = 1.0 / cmax;
    // roof(x) ≤ s once the distance exceeds e^{b·g̲}·e^{-b·s}
    let big_c = (b * baseline).exp();
    let d = model.roof.d() as f64;
    let xi = d * big_c * (-b * c).exp();
    let envelope = s * xi + 2.0 * c * xi + d * big_c / b * (-b * c).exp();
    (rate, envelope)
}

// ---------------------------------------------------------------------------
// Deviation fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DeviationFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

/// Least-squares slope of log magnitude against log scale, with a seeded
/// bootstrap confidence interval.
pub fn deviation_slope(series: &[(f64, f64)], seed: u64) -> Result<DeviationFit> {
    let usable: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(s, m)| *s > 0.0 && *m > 0.0)
        .collect();
    if usable.len() < 8 {
        return Err(Error::InsufficientRange);
    }
    let smin = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let smax = usable.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if smax / smin < 1e3 {
        return Err(Error::InsufficientRange);
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let (slope, _) = linfit(&xs, &ys).ok_or(Error::InsufficientRange)?;
    // bootstrap
    let mut rng_state = seed.max(1);
    let mut next = move || {
        rng_state = crate::num::splitmix(rng_state);
        rng_state
    };
    let mut slopes = Vec::with_capacity(200);
    for _ in 0..200 {
        let mut bx = Vec::with_capacity(xs.len());
        let mut by = Vec::with_capacity(ys.len());
        for _ in 0..xs.len() {
            let i = (next() % xs.len() as u64) as usize;
            bx.push(xs[i]);
            by.push(ys[i]);
        }
        if let Some((s, _)) = linfit(&bx, &by) {
            slopes.push(s);
        }
    }
    slopes.sort_by(f64::total_cmp);
    let lo = slopes[(slopes.len() as f64 * 0.025) as usize];
    let hi = slopes[(slopes.len() as f64 * 0.975) as usize];
    Ok(DeviationFit {
        slope,
        ci_low: lo,
        ci_high: hi,
        points: usable.len(),
    })
}

// ---------------------------------------------------------------------------
// Rigidity towers and the ergodicity-criterion statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TowerCase {
    Left,
    Right,
}

#[derive(Debug, Clone)]
pub struct RigidityTower {
    pub level: usize,
    pub case: TowerCase,
    /// Letter whose level interval hosts the base.
    pub alpha: usize,
    /// Orbit index hitting the chosen singularity.
    pub hit_index: u64,
    /// Base interval J^(k) ⊂ I^(k)_α.
    pub base_lo: Real,
    pub base_hi: Real,
    /// Rigidity time q_k = Q_α(k).
    pub q: u64,
    /// Tower travel p_k.
    pub p: u64,
}

#[derive(Debug, Clone)]
pub struct RigidityTowers {
    pub towers: Vec<RigidityTower>,
    pub c_bar: f64,
    /// The singularity letter α₀ and side the construction latched onto.
    pub alpha0: usize,
    pub case: TowerCase,
}

/// Variation of the derivative of the piecewise-linear part (slope jumps).
fn linear_derivative_variation(phi: &LogCocycle) -> f64 {
    let mut var = 0.0;
    for w in phi.linear.slopes.windows(2) {
        var += (w[1].to_f64() - w[0].to_f64()).abs();
    }
    var
}

/// Build rigidity towers per the (L)/(R) cases: scan each level for a
/// letter whose endpoint orbit hits the chosen singularity within its
/// return time, then cut the base at scale c̄.
pub fn rigidity_towers(
    path: &AccelPath,
    phi: &LogCocycle,
    levels: &[usize],
    c_bar_override: Option<f64>,
    q_budget: u64,
) -> Result<RigidityTowers> {
    let ctx = path.ctx;
    let norms = phi.norms();
    if norms.l == 0.0 {
        return Err(Error::TowerConstructionFailed);
    }
    // candidate singularities by decreasing |C±|; the first that yields an
    // endpoint-orbit hit wins (the construction leaves the choice open)
    let mut candidates: Vec<(usize, TowerCase, f64)> = Vec::new();
    for a in 0..path.d() {
        let cp = phi.cplus[a].to_f64().abs();
        if cp > 0.0 {
            candidates.push((a, TowerCase::Left, cp));
        }
        let cm = phi.cminus[a].to_f64().abs();
        if cm > 0.0 {
            candidates.push((a, TowerCase::Right, cm));
        }
    }
    if candidates.is_empty() {
        return Err(Error::TowerConstructionFailed);
    }
    candidates.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then(x.0.cmp(&y.0)));
    let c_bar_for = |best: f64| match c_bar_override {
        Some(v) => v,
        None => {
            let denom = 2.0 * (6.0 * norms.l + linear_derivative_variation(phi));
            (best / denom).sqrt().min(0.49)
        }
    };
    let base = path.base();
    let tol = ctx.eps(24) * &base.total;
    let mut towers = Vec::new();
    let mut used: Option<(usize, TowerCase, f64)> = None;
    for &k in levels {
        let iet_k = &path.levels[k].iet;
        let p_k = path.levels[k].p_travel.to_u64().ok_or(Error::DepthExceeded)?;
        // the statistics cost O(q_k) per node; levels past the budget are
        // unusable and their endpoint scans would dominate everything
        if path.levels[k]
            .heights
            .iter()
            .max()
            .and_then(|h| h.to_u64())
            .map_or(true, |h| h > q_budget)
        {
            continue;
        }
        // prefer hits inside the common travel window [p_k, q); fall back
        // to any positive hit index and shrink the tower to reach it
        let mut found: Option<(usize, u64, usize, TowerCase, f64)> = None;
        let mut fallback: Option<(usize, u64, usize, TowerCase, f64)> = None;
        'cands: for &(alpha0, case, weight) in &candidates {
            for a in 0..path.d() {
                let q_a = path.height_u64(k, a)?;
                let target = match case {
                    TowerCase::Left => &base.left[alpha0],
                    TowerCase::Right => &base.right[alpha0],
                };
                let mut y = match case {
                    TowerCase::Left => iet_k.left[a].clone(),
                    TowerCase::Right => iet_k.right[a].clone(),
                };
                for j in 0..q_a {
                    if (y.clone() - target).abs() < tol {
                        if j >= p_k {
                            found = Some((a, j, alpha0, case, weight));
                            break 'cands;
                        }
                        if j >= 1 && fallback.is_none() {
                            fallback = Some((a, j, alpha0, case, weight));
                        }
                    }
                    if j + 1 < q_a {
                        let step = match case {
                            TowerCase::Left => base.apply(&y),
                            TowerCase::Right => base.apply_hat(&y),
                        };
                        match step {
                            Ok(next) => y = next,
                            Err(_) => break,
                        }
                    }
                }
            }
        }
        let Some((alpha, hit_index, alpha0, case, weight)) = found.or(fallback) else {
            continue;
        };
        let p_eff = p_k.min(hit_index).max(1);
        let c_bar = c_bar_for(weight);
        if used.is_none() {
            used = Some((alpha0, case, c_bar));
        }
        let lo = iet_k.left[alpha].clone();
        let hi = iet_k.right[alpha].clone();
        let len = iet_k.lengths[alpha].clone();
        let (base_lo, base_hi) = match case {
            TowerCase::Left => (
                lo.clone() + len.clone() * ctx.real_from_f64(c_bar / 2.0),
                lo.clone() + len.clone() * ctx.real_from_f64(c_bar),
            ),
            TowerCase::Right => (
                hi.clone() - len.clone() * ctx.real_from_f64(c_bar),
                hi.clone() - len.clone() * ctx.real_from_f64(c_bar / 2.0),
            ),
        };
        towers.push(RigidityTower {
            level: k,
            case,
            alpha,
            hit_index,
            base_lo,
            base_hi,
            q: path.height_u64(k, alpha)?,
            p: p_eff,
        });
    }
    if towers.is_empty() {
        return Err(Error::TowerConstructionFailed);
    }
    let (alpha0, case, c_bar) = used.expect("towers nonempty");
    Ok(RigidityTowers {
        towers,
        c_bar,
        alpha0,
        case,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerStats {
    pub level: usize,
    pub q: u64,
    pub p: u64,
    pub tower_measure: f64,
    /// ∫_{Ξ_k} |φ^{(q_k)}| dx.
    pub tightness: f64,
    /// min |(φ')^{(q_k)}|/q_k over the best third of each floor.
    pub derivative_rate: f64,
    /// |∫_{Ξ_k} e^{2πi s φ^{(q_k)}}| per requested s.
    pub oscillation: Vec<(f64, f64)>,
}

/// Tightness, derivative growth and oscillation statistics over a tower,
/// via the cocycle identity: values on floor i are the base values plus
/// the difference of two short Birkhoff sums.
pub fn tower_statistics(
    path: &AccelPath,
    phi: &LogCocycle,
    tower: &RigidityTower,
    s_values: &[f64],
    nodes: usize,
) -> Result<TowerStats> {
    let base = path.base();
    let fast = F64Cocycle::from_cocycle(phi);
    let lo = tower.base_lo.to_f64();
    let hi = tower.base_hi.to_f64();
    let width = hi - lo;
    if width <= 0.0 {
        return Err(Error::TowerConstructionFailed);
    }
    let q = tower.q;
    let p = tower.p;
    // per node: base sum φ^{(q)}(x), prefix sums A_i = φ^{(i)}(x) and
    // B_i = φ^{(i)}(T^q x) for i < p, then value(i) = base + B_i − A_i
    let mut node_values: Vec<Vec<f64>> = Vec::with_capacity(nodes);
    let mut node_derivs: Vec<f64> = Vec::with_capacity(nodes);
    for t in 0..nodes {
        let frac = (t as f64 + 0.5) / nodes as f64;
        let x = path.ctx.real_from_f64(lo + frac * width);
        let mut a_pref = Vec::with_capacity(p as usize);
        let mut b_pref = Vec::with_capacity(p as usize);
        let mut acc = 0.0f64;
        let mut dacc = 0.0f64;
        let mut y = x.clone();
        for j in 0..q {
            let yf = y.to_f64();
            if (j as u64) < p {
                a_pref.push(acc);
            }
            acc += fast.eval(yf);
            dacc += derivative_f64(&fast, yf);
            y = base.apply(&y)?;
        }
        let base_sum = acc;
        node_derivs.push(dacc.abs() / q as f64);
        // y now is T^q x
        let mut accb = 0.0f64;
        for _ in 0..p {
            b_pref.push(accb);
            accb += fast.eval(y.to_f64());
            y = base.apply(&y)?;
        }
        let values: Vec<f64> = (0..p as usize)
            .map(|i| base_sum + b_pref[i] - a_pref[i])
            .collect();
        node_values.push(values);
    }
    let w = width / nodes as f64;
    let mut tightness = 0.0f64;
    let mut oscillation = vec![(0.0f64, 0.0f64); s_values.len()];
    for (si, s) in s_values.iter().enumerate() {
        oscillation[si].0 = *s;
    }
    let mut osc_real = vec![0.0f64; s_values.len()];
    let mut osc_imag = vec![0.0f64; s_values.len()];
    for values in &node_values {
        for v in values {
            tightness += v.abs() * w;
            for (si, s) in s_values.iter().enumerate() {
                let phase = 2.0 * std::f64::consts::PI * s * v;
                osc_real[si] += phase.cos() * w;
                osc_imag[si] += phase.sin() * w;
            }
        }
    }
    for si in 0..s_values.len() {
        oscillation[si].1 = (osc_real[si].powi(2) + osc_imag[si].powi(2)).sqrt();
    }
    let derivative_rate = node_derivs.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TowerStats {
        level: tower.level,
        q,
        p,
        tower_measure: width * p as f64,
        tightness,
        derivative_rate,
        oscillation,
    })
}

fn derivative_f64(fast: &F64Cocycle, x: f64) -> f64 {
    let mut acc = 0.0f64;
    // slope of the linear piece
    let piece = match fast
        .cuts
        .binary_search_by(|c| c.partial_cmp(&x).unwrap())
    {
        Ok(i) => i.min(fast.slopes.len() - 1),
        Err(i) => (i - 1).min(fast.slopes.len() - 1),
    };
    acc += fast.slopes[piece];
    let total = fast.iet.total;
    let wrap = |t: f64| {
        let mut t = t;
        if t < 0.0 {
            t += total;
        }
        t.max(f64::MIN_POSITIVE)
    };
    for a in 0..fast.cplus.len() {
        if fast.cplus[a] != 0.0 {
            acc -= fast.cplus[a] / wrap(x - fast.iet.left[a]);
        }
        if fast.cminus[a] != 0.0 {
            acc += fast.cminus[a] / wrap(fast.iet.right[a] - x);
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Occupation ratios
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct OccupationReport {
    pub ratio: f64,
    pub visits_j1: u64,
    pub visits_j2: u64,
    pub samples: u64,
    /// Final displacement over time, a drift diagnostic.
    pub drift: f64,
}

/// Occupation-time ratio of the running ergodic integral on a dt-grid:
/// Leb{t ≤ T : u(t) ∈ J1} / Leb{t ≤ T : u(t) ∈ J2}.
pub fn equidistribution_ratio(
    model: &SpecialFlowModel,
    x: &Real,
    r: f64,
    t_max: f64,
    j1: (f64, f64),
    j2: (f64, f64),
    dt: f64,
) -> Result<OccupationReport> {
    if j2.1 <= j2.0 || dt <= 0.0 {
        return Err(Error::ConfigInvalid("bad windows".into()));
    }
    let roof_fast = F64Cocycle::from_cocycle(&model.roof);
    let obs_fast = F64Cocycle::from_cocycle(&model.observable);
    let base = &model.roof.domain;
    let mut y = x.clone();
    let mut t_edge = -r; // flow time at the start of the current fiber
    // integral value at the fiber start, offset so that u(0) = 0
    let mut u_edge = {
        let g0 = roof_fast.eval(y.to_f64());
        let phi0 = obs_fast.eval(y.to_f64());
        -phi0 * (r / g0)
    };
    let mut grid_t = 0.0f64;
    let mut visits1 = 0u64;
    let mut visits2 = 0u64;
    let mut samples = 0u64;
    let mut final_u = 0.0f64;
    while t_edge < t_max {
        let g = roof_fast.eval(y.to_f64());
        let phi = obs_fast.eval(y.to_f64());
        let slope = phi / g;
        let t_next = t_edge + g;
        while grid_t < t_next && grid_t <= t_max {
            let u = u_edge + slope * (grid_t - t_edge);
            if u >= j1.0 && u < j1.1 {
                visits1 += 1;
            }
            if u >= j2.0 && u < j2.1 {
                visits2 += 1;
            }
            samples += 1;
            final_u = u;
            grid_t += dt;
        }
        u_edge += phi;
        t_edge = t_next;
        y = base.apply(&y)?;
    }
    if visits2 == 0 {
        return Err(Error::EmptyDenominator);
    }
    Ok(OccupationReport {
        ratio: visits1 as f64 / visits2 as f64,
        visits_j1: visits1,
        visits_j2: visits2,
        samples,
        drift: final_u / t_max,
    })
}

// ---------------------------------------------------------------------------
// CSV writers (External Interfaces)
// ---------------------------------------------------------------------------

pub fn deviation_csv(series: &[(f64, f64)]) -> String {
    let mut out = String::from("scale,magnitude\n");
    for (s, m) in series {
        out.push_str(&format!("{s:.12e},{m:.12e}\n"));
    }
    out
}

pub fn tower_stats_csv(stats: &[TowerStats]) -> String {
    let mut out = String::from("k,q,p,measure,tightness,derivative_rate,s,oscillation\n");
    for st in stats {
        for (s, o) in &st.oscillation {
            out.push_str(&format!(
                "{},{},{},{:.9e},{:.9e},{:.9e},{s},{o:.9e}\n",
                st.level, st.q, st.p, st.tower_measure, st.tightness, st.derivative_rate
            ));
        }
    }
    out
}

pub fn occupation_csv(bins: &[(f64, u64)]) -> String {
    let mut out = String::from("bin,count\n");
    for (b, c) in bins {
        out.push_str(&format!("{b:.6},{c}\n"));
    }
    out
}
