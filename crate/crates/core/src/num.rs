//! Precision-carrying scalar helpers on top of MPFR floats.
//!
//! Every quantity that feeds an induction path is a [`Real`] created at an
//! explicit precision `p` (bits). Combinatorial data (cocycle matrices,
//! kernel bases) lives in exact integers/rationals, see [`crate::linalg`].

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rug::ops::CompleteRound;
use rug::{Float, Integer};

pub type Real = Float;

/// Precision context. Cheap to copy; threaded through every constructor so
/// that intermediate results never silently drop to machine precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ctx {
    pub prec: u32,
}

pub const DEFAULT_PREC: u32 = 256;

impl Ctx {
    pub fn new(prec: u32) -> Self {
        assert!(prec >= 53, "precision below f64 is never intended");
        Ctx { prec }
    }

    pub fn zero(&self) -> Real {
        Float::new(self.prec)
    }

    pub fn one(&self) -> Real {
        Float::with_val(self.prec, 1)
    }

    pub fn real_from_f64(&self, v: f64) -> Real {
        Float::with_val(self.prec, v)
    }

    pub fn real_from_int(&self, v: &Integer) -> Real {
        Float::with_val(self.prec, v)
    }

    pub fn real_from_u64(&self, v: u64) -> Real {
        Float::with_val(self.prec, v)
    }

    /// Parse an exact decimal string into a p-bit float (rounds once).
    pub fn real_from_decimal(&self, s: &str) -> Option<Real> {
        Float::parse(s).ok().map(|p| Float::with_val(self.prec, p))
    }

    pub fn ln(&self, x: &Real) -> Real {
        x.ln_ref().complete(self.prec)
    }

    /// 2^(-prec + headroom): the resolution floor used by proximity guards.
    pub fn eps(&self, headroom: u32) -> Real {
        let mut e = Float::with_val(self.prec, 1);
        e >>= self.prec - headroom;
        e
    }

    pub fn sum(&self, xs: impl IntoIterator<Item = Real>) -> Real {
        let mut acc = self.zero();
        for x in xs {
            acc += x;
        }
        acc
    }
}

/// Deterministic stream of p-bit uniforms on [0,1) from a ChaCha20 seed.
pub struct RealRng {
    pub ctx: Ctx,
    rng: ChaCha20Rng,
}

impl RealRng {
    pub fn new(ctx: Ctx, seed: u64) -> Self {
        RealRng {
            ctx,
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream; used for per-trial seeds.
    pub fn substream(seed: u64, index: u64, ctx: Ctx) -> Self {
        RealRng::new(ctx, splitmix(seed ^ splitmix(index)))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on [0,1) with the full p bits of resolution.
    pub fn uniform(&mut self) -> Real {
        let words = usize::try_from(self.ctx.prec.div_ceil(64)).unwrap();
        let mut n = Integer::new();
        for _ in 0..words {
            n <<= 64;
            n += self.rng.next_u64();
        }
        let mut x = Float::with_val(self.ctx.prec, n);
        x >>= words as u32 * 64;
        x
    }

    /// Uniform on (0,1]: rejects exact zero so logs stay finite.
    pub fn uniform_pos(&mut self) -> Real {
        loop {
            let x = self.uniform();
            if x.is_zero() {
                continue;
            }
            return x;
        }
    }

    /// Uniform point of the open standard simplex (positive, sums to 1),
    /// via normalized exponentials.
    pub fn simplex(&mut self, d: usize) -> Vec<Real> {
        loop {
            let draws: Vec<Real> = (0..d).map(|_| -self.uniform_pos().ln()).collect();
            let total = self.ctx.sum(draws.iter().cloned());
            if total.is_zero() {
                continue;
            }
            let out: Vec<Real> = draws.into_iter().map(|e| e / &total).collect();
            if out.iter().all(|x| x.is_sign_positive() && !x.is_zero()) {
                return out;
            }
        }
    }

    /// Uniform on [-1, 1].
    pub fn symmetric(&mut self) -> Real {
        let u = self.uniform();
        u * 2 - 1f64
    }
}

/// Ordinary least squares fit y ≈ slope·x + intercept. None when fewer
/// than two distinct abscissae.
pub fn linfit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// SplitMix64 finalizer; used for deriving per-trial seeds and config hashes.
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; stable across platforms, used for config hashing.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Render with enough decimal digits to round-trip p bits (p/3 digits,
/// the CLI serialization convention).
pub fn decimal_string(x: &Real) -> String {
    let digits = (x.prec() / 3).max(17) as usize;
    let (sign, mantissa, exp) = to_parts(x, digits);
    format_parts(sign, &mantissa, exp)
}

fn to_parts(x: &Real, digits: usize) -> (bool, String, Option<i32>) {
    let (s, exp) = x.to_string_radix(10, Some(digits)).split_once('e').map_or_else(
        || (x.to_string_radix(10, Some(digits)), None),
        |(m, e)| (m.to_string(), e.parse::<i32>().ok()),
    );
    let neg = s.starts_with('-');
    let mantissa = s.trim_start_matches('-').to_string();
    (neg, mantissa, exp)
}

fn format_parts(neg: bool, mantissa: &str, exp: Option<i32>) -> String {
    let sign = if neg { "-" } else { "" };
    match exp {
        None => format!("{sign}{mantissa}"),
        Some(e) => format!("{sign}{mantissa}e{e}"),
    }
}
