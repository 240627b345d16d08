//! Pipeline commands. Each writes its module artifacts plus a manifest;
//! artifacts are byte-deterministic for a fixed config (the manifest
//! carries wall time and is the one non-reproducible file).

use crate::config::ExperimentConfig;
use rayon::prelude::*;
use renorm_core::accel::{run_acceleration, AccelPath, BalanceParams};
use renorm_core::cocycle::{author_symmetric_boundary_free, LogCocycle};
use renorm_core::correction::{estimate_correction, growth_profile};
use renorm_core::dynamics::{
    deviation_csv, deviation_slope, equidistribution_ratio, rigidity_towers, tower_statistics,
    tower_stats_csv, SpecialFlowModel,
};
use renorm_core::error::{Error, Result};
use renorm_core::iet::IetDescription;
use renorm_core::num::{decimal_string, splitmix, Ctx, Real, RealRng};
use renorm_core::rauzy::{sample_zippered, ZipperedState};
use renorm_core::spectrum::{stable_basis, unstable_flag, SpectrumReport};
use renorm_core::{cocycle, dynamics, linalg, spectrum};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct CommandCtx {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    started: Instant,
}

impl CommandCtx {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let out = PathBuf::from(&config.out_dir);
        fs::create_dir_all(&out)?;
        Ok(CommandCtx {
            config,
            out,
            started: Instant::now(),
        })
    }

    pub fn ctx(&self) -> Ctx {
        Ctx::new(self.config.precision_bits)
    }

    pub fn params(&self) -> BalanceParams {
        BalanceParams {
            radius: self.config.balance_radius,
            delta: self.config.balance_delta,
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.out.join(name), text + "\n")?;
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.out.join(name), text)?;
        Ok(())
    }

    pub fn manifest(&self, command: &str) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            config_hash: String,
            version: &'a str,
            wall_time_ms: u128,
        }
        self.write_json(
            "manifest.json",
            &Manifest {
                command,
                config_hash: format!("{:016x}", self.config.hash()),
                version: env!("CARGO_PKG_VERSION"),
                wall_time_ms: self.started.elapsed().as_millis(),
            },
        )
    }

    fn zippered(&self) -> Result<ZipperedState> {
        let perm = self.config.permutation.to_perm()?;
        sample_zippered(self.ctx(), &perm, self.config.seed)
    }

    fn run_default_path(&self) -> Result<AccelPath> {
        let z = self.zippered()?;
        run_acceleration(
            &z,
            &self.params(),
            self.config.depth,
            self.config.step_budget,
        )
    }

    fn cocycle_on(&self, domain: &renorm_core::iet::IetState) -> Result<LogCocycle> {
        match &self.config.cocycle {
            Some(file) => file.to_cocycle(domain),
            None => {
                let sing = renorm_core::singularity::singularity_data(&domain.perm);
                let ctx = self.ctx();
                let mut rng = RealRng::new(ctx, splitmix(self.config.seed ^ 0xc0c1c2));
                let consts: Vec<Real> = (0..sing.kappa())
                    .map(|_| rng.uniform_pos() + ctx.real_from_f64(0.25))
                    .collect();
                author_symmetric_boundary_free(domain, &consts)
            }
        }
    }
}

#[derive(Serialize)]
struct SampleArtifact {
    iet: IetDescription,
    tau: Vec<String>,
    heights: Vec<String>,
}

pub fn cmd_sample(cc: &CommandCtx) -> Result<()> {
    let z = cc.zippered()?;
    let iet = z.iet()?;
    cc.write_json(
        "sample.json",
        &SampleArtifact {
            iet: IetDescription::from_state(&iet),
            tau: z.tau.iter().map(decimal_string).collect(),
            heights: z.heights.iter().map(decimal_string).collect(),
        },
    )?;
    cc.manifest("sample")
}

pub fn cmd_induct(cc: &CommandCtx) -> Result<()> {
    let path = cc.run_default_path()?;
    cc.write_json("path.json", &path.to_json())?;
    let mut lines = String::new();
    for rec in &path.records {
        lines.push_str(&serde_json::to_string(rec)?);
        lines.push('\n');
    }
    cc.write_text("steps.jsonl", &lines)?;
    cc.manifest("induct")
}

#[derive(Serialize)]
struct SpectrumArtifact {
    trials: Vec<SpectrumReport>,
    mean_ratio_21: f64,
    se_ratio_21: f64,
}

pub fn cmd_spectrum(cc: &CommandCtx) -> Result<()> {
    let perm = cc.config.permutation.to_perm()?;
    let gk = renorm_core::iet::genus_kappa(&perm)?;
    let trials: Vec<u64> = (0..cc.config.trials as u64)
        .map(|i| splitmix(cc.config.seed ^ splitmix(i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cc.config.jobs.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let reports: Vec<SpectrumReport> = pool.install(|| {
        trials
            .par_iter()
            .map(|&seed| -> Result<SpectrumReport> {
                let ctx = cc.ctx();
                let z = sample_zippered(ctx, &perm, seed)?;
                let path =
                    run_acceleration(&z, &cc.params(), cc.config.depth, cc.config.step_budget)?;
                spectrum::spectrum_report(&path, gk.g, seed)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let ratios: Vec<f64> = reports
        .iter()
        .filter(|r| r.ratios.len() > 1)
        .map(|r| r.ratios[1])
        .collect();
    let (mean, se) = mean_se(&ratios);
    cc.write_json(
        "spectrum.json",
        &SpectrumArtifact {
            trials: reports,
            mean_ratio_21: mean,
            se_ratio_21: se,
        },
    )?;
    cc.manifest("spectrum")
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

pub fn cmd_correct(cc: &CommandCtx) -> Result<()> {
    let z = cc.zippered()?;
    let total_depth = cc.config.warmup + cc.config.depth;
    let path = run_acceleration(&z, &cc.params(), total_depth, cc.config.step_budget)?;
    let rebased = path.rebase(cc.config.warmup, &cc.params());
    let perm = cc.config.permutation.to_perm()?;
    let gk = renorm_core::iet::genus_kappa(&perm)?;
    let f_frame = unstable_flag(&path, cc.config.warmup)?;
    let stable = stable_basis(&rebased, 0, rebased.depth().min(30), gk.g)?;
    let phi = cc.cocycle_on(rebased.base())?;
    let ks: Vec<usize> = (1..=rebased.depth())
        .filter(|&k| {
            let n = rebased.levels[k].q.norm_f64();
            (10.0..=cc.config.mass_budget as f64).contains(&n)
        })
        .collect();
    if ks.len() < 3 {
        return Err(Error::NoConvergence);
    }
    let mut report = estimate_correction(
        &rebased,
        &phi,
        &ks,
        &f_frame,
        &stable,
        cc.config.mass_budget,
    )?;
    let corrected = phi.minus_constant_vector(&report.correction_reals(cc.ctx()));
    report.growth_profile = growth_profile(
        &rebased,
        &corrected,
        rebased.depth(),
        cc.config.mass_budget,
    )?;
    let mut csv = String::from("k,norm_q,l1_over_len,balanced\n");
    for row in &report.growth_profile {
        csv.push_str(&format!(
            "{},{:.9e},{:.9e},{}\n",
            row.level, row.norm_q, row.l1_over_len, row.balanced
        ));
    }
    cc.write_json("correction.json", &report)?;
    cc.write_text("growth.csv", &csv)?;
    cc.manifest("correct")
}

#[derive(Serialize)]
struct DeviationArtifact {
    slope: f64,
    ci_low: f64,
    ci_high: f64,
    points: usize,
}

pub fn cmd_deviation(cc: &CommandCtx) -> Result<()> {
    let ctx = cc.ctx();
    let z = cc.zippered()?;
    let path = run_acceleration(&z, &cc.params(), cc.config.depth, cc.config.step_budget)?;
    // mean-zero piecewise-constant cocycle inside H(π): kill the λ-pairing
    let u_h = spectrum::h_frame(ctx, &path, 0);
    let mut rng = RealRng::new(ctx, splitmix(cc.config.seed ^ 0xdead));
    let raw: Vec<Real> = (0..path.d()).map(|_| rng.symmetric()).collect();
    let mut h = spectrum::project_h_frame(ctx, &u_h, &raw);
    let lambda = &path.base().lengths;
    let pairing = linalg::dot(ctx, &h, lambda);
    let lambda_h = spectrum::project_h_frame(ctx, &u_h, lambda);
    let denom = linalg::dot(ctx, &lambda_h, lambda);
    let t = pairing / denom;
    for (hv, lv) in h.iter_mut().zip(&lambda_h) {
        *hv -= t.clone() * lv;
    }
    let phi = LogCocycle::piecewise_constant(path.base().clone(), &h);
    let points: Vec<Real> = (0..8).map(|_| rng.uniform() * &path.base().total).collect();
    let mut series = Vec::new();
    for k in 1..=path.depth() {
        let scale = path.levels[k].q.norm_f64();
        if scale > cc.config.mass_budget as f64 {
            break;
        }
        let n = scale as u64;
        // averaging |h^{(n)}| over points damps the oscillation noise of a
        // single orbit without touching the growth exponent
        let mut mag = 0.0f64;
        for x in &points {
            mag += dynamics::birkhoff_sum(&path, &phi, x, n)?.to_f64().abs();
        }
        series.push((scale, (mag / points.len() as f64).max(1e-300)));
    }
    let fit = deviation_slope(&series, cc.config.seed)?;
    cc.write_text("deviation.csv", &deviation_csv(&series))?;
    cc.write_json(
        "deviation.json",
        &DeviationArtifact {
            slope: fit.slope,
            ci_low: fit.ci_low,
            ci_high: fit.ci_high,
            points: fit.points,
        },
    )?;
    cc.manifest("deviation")
}

#[derive(Serialize)]
struct FlowArtifact {
    crossings: u64,
    integral: f64,
    partial_bound: f64,
    rejection_rate: f64,
    rejection_envelope: f64,
}

pub fn cmd_flow(cc: &CommandCtx) -> Result<()> {
    let ctx = cc.ctx();
    let z = cc.zippered()?;
    let path = run_acceleration(&z, &cc.params(), cc.config.depth, cc.config.step_budget)?;
    let base = path.base().clone();
    let phi = cc.cocycle_on(&base)?;
    let roof = {
        // positive log roof: 1 + symmetric singular part with |C| halved
        let mut r = phi.clone();
        for c in r.cplus.iter_mut().chain(r.cminus.iter_mut()) {
            *c = c.clone().abs() / 2u32;
        }
        r.linear = cocycle::PwLinear::zero(ctx, &base.total);
        r.linear.intercepts[0] += 1u32;
        r
    };
    let model = SpecialFlowModel::new(roof, phi)?;
    let s = cc.config.flow_time.min(1e4);
    let cutoff = 4.0 * (1.0 + s.ln());
    let mut rng = RealRng::new(ctx, splitmix(cc.config.seed ^ 0xf10f));
    let mut picked = None;
    for _ in 0..100 {
        let x = rng.uniform() * &base.total;
        match model.ergodic_integral(&x, 0.0, s, cutoff) {
            Ok((v, b)) => {
                let n = model.roof_clock(&x, 0.0, s)?;
                picked = Some((n, v, b));
                break;
            }
            Err(Error::OutsideGoodSet) => continue,
            Err(e) => return Err(e),
        }
    }
    let Some((crossings, integral, partial_bound)) = picked else {
        return Err(Error::OutsideGoodSet);
    };
    let (rate, envelope) =
        dynamics::good_set_rejection_rate(&model, splitmix(cc.config.seed), 200, s, cutoff);
    cc.write_json(
        "flow.json",
        &FlowArtifact {
            crossings,
            integral,
            partial_bound,
            rejection_rate: rate,
            rejection_envelope: envelope,
        },
    )?;
    cc.manifest("flow")
}

#[derive(Serialize)]
struct SkewArtifact {
    occupation_ratio: f64,
    drift: f64,
    samples: u64,
    tightness: Vec<(usize, f64)>,
}

pub fn cmd_skew(cc: &CommandCtx) -> Result<()> {
    let ctx = cc.ctx();
    let z = cc.zippered()?;
    let total_depth = cc.config.warmup + cc.config.depth;
    let full_path = run_acceleration(&z, &cc.params(), total_depth, cc.config.step_budget)?;
    let path = full_path.rebase(cc.config.warmup, &cc.params());
    let base = path.base().clone();
    let raw = cc.cocycle_on(&base)?;
    let phi = zero_mean_in_h(&corrected_cocycle(cc, &full_path, &path, &raw)?, &path)?;
    let roof = {
        let vals: Vec<Real> = (0..base.d()).map(|_| ctx.one()).collect();
        LogCocycle::piecewise_constant(base.clone(), &vals)
    };
    let model = SpecialFlowModel::new(roof, phi.clone())?;
    let mut rng = RealRng::new(ctx, splitmix(cc.config.seed ^ 0x5e1f));
    let x = rng.uniform() * &base.total;
    let rep = equidistribution_ratio(
        &model,
        &x,
        0.0,
        cc.config.flow_time,
        cc.config.window_a,
        cc.config.window_b,
        cc.config.grid_dt,
    )?;
    let levels: Vec<usize> = (2..=path.depth()).collect();
    let towers = rigidity_towers(&path, &phi, &levels, None, cc.config.mass_budget.min(100_000))?;
    let mut stats = Vec::new();
    for t in &towers.towers {
        stats.push(tower_statistics(&path, &phi, t, &cc.config.s_values, 16)?);
    }
    cc.write_text("towers.csv", &tower_stats_csv(&stats))?;
    cc.write_json(
        "skew.json",
        &SkewArtifact {
            occupation_ratio: rep.ratio,
            drift: rep.drift,
            samples: rep.samples,
            tightness: stats.iter().map(|s| (s.level, s.tightness)).collect(),
        },
    )?;
    cc.manifest("skew")
}

/// Estimate 𝔥(φ) on the rebased path and subtract it.
fn corrected_cocycle(
    cc: &CommandCtx,
    full_path: &AccelPath,
    rebased: &AccelPath,
    phi: &LogCocycle,
) -> Result<LogCocycle> {
    let perm = cc.config.permutation.to_perm()?;
    let gk = renorm_core::iet::genus_kappa(&perm)?;
    let f_frame = unstable_flag(full_path, cc.config.warmup)?;
    let stable = stable_basis(rebased, 0, rebased.depth().min(30), gk.g)?;
    // the pullback accuracy saturates around ‖Q‖^{-θ_g/θ₁}; past 1e6 the
    // extra floor work buys almost nothing
    let cap = cc.config.mass_budget.min(1_000_000);
    let ks: Vec<usize> = (1..=rebased.depth())
        .filter(|&k| {
            let n = rebased.levels[k].q.norm_f64();
            (10.0..=cap as f64).contains(&n)
        })
        .collect();
    if ks.len() < 3 {
        return Err(Error::NoConvergence);
    }
    let report = estimate_correction(rebased, phi, &ks, &f_frame, &stable, cap)?;
    Ok(phi.minus_constant_vector(&report.correction_reals(cc.ctx())))
}

/// Shift a cocycle by an H(π)-vector so its integral vanishes exactly;
/// the boundary image and the saddle asymmetries are untouched.
fn zero_mean_in_h(phi: &LogCocycle, path: &AccelPath) -> Result<LogCocycle> {
    let ctx = phi.ctx;
    let u_h = spectrum::h_frame(ctx, path, 0);
    let lambda = &path.base().lengths;
    let lambda_h = spectrum::project_h_frame(ctx, &u_h, lambda);
    let denom = linalg::dot(ctx, &lambda_h, lambda);
    if denom.is_zero() {
        return Err(Error::InternalInconsistency("H ⊥ λ".into()));
    }
    let mean = phi.integral_full()?;
    let t = mean / denom;
    let shift: Vec<Real> = lambda_h.iter().map(|v| t.clone() * v).collect();
    Ok(phi.minus_constant_vector(&shift))
}

#[derive(Serialize)]
struct ReportArtifact {
    manifests: Vec<serde_json::Value>,
}

/// Aggregate every manifest under the output directory into one summary.
pub fn cmd_report(cc: &CommandCtx) -> Result<()> {
    let mut manifests = Vec::new();
    collect_manifests(&cc.out, &mut manifests)?;
    manifests.sort_by_key(|v| v.to_string());
    cc.write_json("report.json", &ReportArtifact { manifests })?;
    cc.manifest("report")
}

fn collect_manifests(dir: &Path, acc: &mut Vec<serde_json::Value>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            collect_manifests(&path, acc)?;
        } else if path.file_name().is_some_and(|n| n == "manifest.json") {
            let text = fs::read_to_string(&path)?;
            if let Ok(v) = serde_json::from_str(&text) {
                acc.push(v);
            }
        }
    }
    Ok(())
}
