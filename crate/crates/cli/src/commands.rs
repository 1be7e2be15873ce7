use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, ensure, Context, Result};

use fastslow::asymptotics::{CfContext, Kernel, Regime, Remainder};
use fastslow::experiment::{
    build_system, cf_sweep, check_noise, compare as compare_runs, default_config, log_log_slope, run_model, sample_increments,
    CfSweepRow, CompareOptions, ModelKind, Thresholds,
};
use fastslow::model::critical_gamma;
use fastslow::output::write_columns;
use fastslow::reduction::Anchor;
use fastslow::stats::{autocodifference, empirical_cf, grid, histogram_pdf, mode_count, plan_sample_size, write_cf_csv};
use fastslow::{Error, Execution, FastSlowSystem, SampleSeries, SimConfig, StableParams};

use crate::config::{parse_anchor, parse_model, parse_scheme, Analysis, ExperimentConfig};
use crate::{CfCheckArgs, CompareArgs, NoiseArgs, PlanArgs, RunArgs, SimulateArgs, SystemArgs};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_FAIL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

const DESK_SAMPLES: usize = 1_000_000;
const FULL_SCALE_SAMPLES: usize = 100_000_000;
const DEFAULT_CHUNKS: usize = 8;
const DEFAULT_BINS: usize = 80;
const DEFAULT_AF_LAG: f64 = 4.0;
const DEFAULT_OUT: &str = "fastslow-out";

/// Numerical aborts map to 3; every other error is a usage or configuration problem.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::NonFinite { .. } | Error::Quadrature { .. } => EXIT_NUMERIC,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

fn fresh_seed() -> u64 {
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    (nanos as u64) ^ ((nanos >> 64) as u64) ^ u64::from(std::process::id()).rotate_left(32)
}

/// `Some(watermark)` for an allowed exploratory alpha below 1.
fn alpha_gate(alpha: f64, allow: bool) -> Result<Option<String>> {
    if alpha > 0.0 && alpha < 1.0 {
        if !allow {
            bail!("alpha = {alpha} < 1 is outside the supported range; pass --allow-unsupported-alpha to run it anyway");
        }
        return Ok(Some(format!(
            "# exploratory run: alpha = {alpha} < 1 is outside the supported range"
        )));
    }
    Ok(None)
}

fn create(out: &Path, name: &str, watermark: Option<&str>) -> Result<(PathBuf, BufWriter<File>)> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    if let Some(mark) = watermark {
        writeln!(w, "{mark}")?;
    }
    Ok((path, w))
}

fn overlay(cfg: &mut ExperimentConfig, sys: &SystemArgs, run: &RunArgs) {
    let s = &mut cfg.system;
    if let Some(name) = &sys.system {
        s.name = name.clone();
    }
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src.clone() {
                $dst = Some(v);
            }
        };
    }
    set!(s.a, sys.a);
    set!(s.b, sys.b);
    set!(s.c, sys.c);
    set!(s.epsilon, sys.epsilon);
    set!(s.alpha, sys.alpha);
    set!(s.beta, sys.beta);
    set!(s.x0, sys.x0);
    set!(s.y0, sys.y0);
    set!(s.gamma, sys.gamma);
    set!(s.f1, sys.f1);
    set!(s.f2, sys.f2);
    set!(s.g1, sys.g1);
    set!(s.g2, sys.g2);
    let r = &mut cfg.run;
    set!(r.n_samples, run.n);
    set!(r.seed, run.seed);
    set!(r.delta_t, run.dt);
    set!(r.sample_dt, run.sample_dt);
    set!(r.burn_in, run.burn_in);
    set!(r.scheme, run.scheme);
    set!(r.chunks, run.chunks);
    set!(r.marcus_substeps, run.substeps);
    set!(r.anchor, run.anchor);
    if run.paper_scale && run.n.is_none() {
        r.n_samples = Some(FULL_SCALE_SAMPLES);
    }
}

struct Experiment {
    cfg: ExperimentConfig,
    system: FastSlowSystem,
    anchor: Anchor,
    seed: u64,
    watermark: Option<String>,
    out: PathBuf,
}

fn prepare(sys: &SystemArgs, run: &RunArgs, out: Option<&Path>, tweak: impl FnOnce(&mut ExperimentConfig)) -> Result<Experiment> {
    let mut cfg = match &sys.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    overlay(&mut cfg, sys, run);
    tweak(&mut cfg);
    let seed = *cfg.run.seed.get_or_insert_with(fresh_seed);
    let system = build_system(cfg.system.system_name()?, &cfg.system.params()?)?;
    let watermark = alpha_gate(system.alpha(), sys.allow_unsupported_alpha)?;
    let anchor = parse_anchor(cfg.run.anchor.as_deref().unwrap_or("stationary"))?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(Experiment {
        cfg,
        system,
        anchor,
        seed,
        watermark,
        out,
    })
}

impl Experiment {
    fn sim_config(&self, model: ModelKind, seed: u64) -> Result<SimConfig> {
        let r = &self.cfg.run;
        let n = r.n_samples.unwrap_or(DESK_SAMPLES);
        let mut sim = default_config(&self.system, model, n, seed).with_chunks(r.chunks.unwrap_or(DEFAULT_CHUNKS).min(n.max(1)));
        if let Some(dt) = r.delta_t {
            sim.delta_t = dt;
        }
        if let Some(dt) = r.sample_dt {
            sim.sample_dt = dt;
        }
        if let Some(b) = r.burn_in {
            sim.burn_in = b;
        }
        if let Some(s) = &r.scheme {
            sim.scheme = parse_scheme(s)?;
        }
        if let Some(m) = r.marcus_substeps {
            sim.marcus_substeps = m;
        }
        sim.validate()?;
        // Reduced models deliberately step at delta_t = sample_dt.
        if model == ModelKind::Full {
            for note in sim.advisories(None) {
                eprintln!("warning: {note}");
            }
        }
        Ok(sim)
    }

    fn run(&self, model: ModelKind, seed: u64) -> Result<SampleSeries> {
        let sim = self.sim_config(model, seed)?;
        eprintln!(
            "running {} {model}: {} samples, delta_t = {}, sample_dt = {}, scheme = {}",
            self.system.name,
            sim.n_samples,
            sim.delta_t,
            sim.sample_dt,
            sim.scheme.name()
        );
        let series =
            run_model(&self.system, model, self.anchor, &sim).with_context(|| format!("{} {model}", self.system.name))?;
        Ok(series)
    }

    fn write_series(&self, model: ModelKind, series: &SampleSeries) -> Result<PathBuf> {
        let (path, mut w) = create(
            &self.out,
            &format!("{}_{model}_series.csv", self.system.name),
            self.watermark.as_deref(),
        )?;
        series.write_csv(&mut w)?;
        Ok(path)
    }
}

fn quantile_range(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let at = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
    let (lo, hi) = (at(0.005), at(0.995));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn range_arg(v: &Option<Vec<f64>>) -> Result<Option<[f64; 2]>> {
    match v.as_deref() {
        None => Ok(None),
        Some([lo, hi]) if hi > lo => Ok(Some([*lo, *hi])),
        Some(other) => bail!("range needs lo,hi with lo < hi, got {other:?}"),
    }
}

pub fn noise_validate(args: &NoiseArgs, out: Option<&Path>) -> Result<u8> {
    let watermark = alpha_gate(args.alpha, args.allow_unsupported_alpha)?;
    ensure!(args.n > 0 && args.k_points > 0, "--n and --k-points must be positive");
    StableParams::increment(args.alpha, args.beta, args.dt)?;
    let seed = args.seed.unwrap_or_else(fresh_seed);
    println!("seed = {seed}");
    let increments = sample_increments(
        args.alpha,
        args.beta,
        args.dt,
        args.n,
        seed,
        args.chunks.clamp(1, args.n),
        Execution::default(),
    )?;
    let k = grid(args.k_min, args.k_max, args.k_points);
    let check = check_noise(&increments, args.alpha, args.beta, args.dt, &k)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let (path, mut w) = create(&out, "noise_cf.csv", watermark.as_deref())?;
    let rows = (0..k.len()).map(|i| {
        let (e, a) = (check.empirical[i], check.analytic[i]);
        vec![k[i], e.re, e.im, a.re, a.im, (e - a).norm()]
    });
    write_columns(
        &mut w,
        &["k", "empirical_re", "empirical_im", "exact_re", "exact_im", "abs_error"],
        rows,
    )?;
    let mut pass = check.max_error < args.tolerance;
    println!("max |CF error| = {:.5} (tolerance {})", check.max_error, args.tolerance);
    if let Some(ratio) = check.variance_ratio {
        let ok = (ratio - 1.0).abs() < args.variance_tolerance;
        pass &= ok;
        println!("variance / (2 dt) = {ratio:.5} (tolerance {})", args.variance_tolerance);
    }
    println!("wrote {}", path.display());
    println!("result = {}", if pass { "pass" } else { "fail" });
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

pub fn simulate(args: &SimulateArgs, out: Option<&Path>) -> Result<u8> {
    let mut parsed = None;
    if let Some(list) = &args.analyses {
        let mut v = Vec::new();
        for a in list {
            v.push(
                Analysis::parse(a)
                    .with_context(|| format!("unknown analysis `{a}` (expected density, af, cf_check or compare)"))?,
            );
        }
        parsed = Some(v);
    }
    let range = range_arg(&args.range)?;
    let exp = prepare(&args.system, &args.run, out, |cfg| {
        if let Some(m) = &args.model {
            cfg.run.model = Some(m.clone());
        }
        if let Some(v) = parsed {
            cfg.analyses.enabled = v;
        }
        if let Some(m) = &args.compare_with {
            cfg.analyses.compare_with = Some(m.clone());
        }
        if let Some(b) = args.bins {
            cfg.analyses.bins = Some(b);
        }
        if range.is_some() {
            cfg.analyses.range = range;
        }
    })?;
    let model = parse_model(exp.cfg.run.model.as_deref().unwrap_or("full"))?;
    let an = &exp.cfg.analyses;
    let other = match (an.enabled.contains(&Analysis::Compare), &an.compare_with) {
        (true, Some(m)) => Some(parse_model(m)?),
        (true, None) => bail!("the compare analysis needs compare_with (e.g. --compare-with full)"),
        (false, _) => None,
    };
    println!("seed = {}", exp.seed);
    let series = exp.run(model, exp.seed)?;
    println!("wrote {}", exp.write_series(model, &series)?.display());
    let prefix = format!("{}_{model}", exp.system.name);
    let mark = exp.watermark.as_deref();
    let mut code = EXIT_PASS;

    for analysis in &an.enabled {
        match analysis {
            Analysis::Density => {
                let r = an
                    .range
                    .map(|[lo, hi]| (lo, hi))
                    .unwrap_or_else(|| quantile_range(&series.values));
                let d = histogram_pdf(&series.values, an.bins.unwrap_or(DEFAULT_BINS), r)?;
                let (path, mut w) = create(&exp.out, &format!("{prefix}_density.csv"), mark)?;
                d.write_csv(&mut w)?;
                println!("modes = {} (5-bin smoothing)", mode_count(&d.densities, 5, 0.05));
                println!("wrote {}", path.display());
            }
            Analysis::Af => {
                let wanted = (an.af_max_lag.unwrap_or(DEFAULT_AF_LAG) / series.sample_dt).round() as usize;
                let lag = wanted.min(series.len() / 100);
                if lag == 0 {
                    eprintln!("warning: series too short for an AF estimate");
                    continue;
                }
                let af = autocodifference(&series.values, series.sample_dt, lag)?;
                let (path, mut w) = create(&exp.out, &format!("{prefix}_af.csv"), mark)?;
                af.write_csv(&mut w)?;
                let unreliable = af.unreliable.len();
                if unreliable > 0 {
                    eprintln!("note: {unreliable} AF lags are below the noise floor");
                }
                println!("wrote {}", path.display());
            }
            Analysis::CfCheck => {
                let k = grid(-5.0, 5.0, 41);
                let cf = empirical_cf(&series.values, &k)?;
                let (path, mut w) = create(&exp.out, &format!("{prefix}_cf.csv"), mark)?;
                write_cf_csv(&mut w, &k, &cf)?;
                println!("wrote {}", path.display());
            }
            Analysis::Compare => {
                let other = other.expect("checked above");
                let b = exp.run(other, exp.seed.wrapping_add(1))?;
                println!("wrote {}", exp.write_series(other, &b)?.display());
                let opts = CompareOptions {
                    n_bins: an.bins.unwrap_or(DEFAULT_BINS),
                    range: an.range.map(|[lo, hi]| (lo, hi)),
                    af_max_lag: an.af_max_lag.unwrap_or(DEFAULT_AF_LAG),
                    thresholds: Thresholds {
                        ks: an.ks_threshold.unwrap_or(Thresholds::default().ks),
                        af: an.af_threshold,
                    },
                    ..CompareOptions::default()
                };
                let cmp = compare_runs(&series, &b, &opts)?;
                println!("{model} vs {other}\n{cmp}");
                if !cmp.pass {
                    code = EXIT_FAIL;
                }
            }
        }
    }
    let (path, mut w) = create(&exp.out, &format!("{prefix}_run.toml"), mark)?;
    w.write_all(exp.cfg.to_text()?.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(code)
}

/// Read a `t,value` series, skipping `#` lines and the header.
pub fn read_series(path: &Path) -> Result<SampleSeries> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .with_context(|| format!("{}:{}: expected `t,value`", path.display(), i + 1))?;
        times.push(
            t.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
        values.push(
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    ensure!(values.len() >= 2, "{}: need at least two samples", path.display());
    let dt = times[1] - times[0];
    ensure!(dt > 0.0, "{}: times must increase", path.display());
    for w in times.windows(2) {
        ensure!(
            ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt,
            "{}: sampling grid is not uniform",
            path.display()
        );
    }
    Ok(SampleSeries {
        values,
        sample_dt: dt,
        t0: times[0],
        seed: 0,
        provenance: path.display().to_string(),
    })
}

pub fn compare(args: &CompareArgs, out: Option<&Path>) -> Result<u8> {
    let range = range_arg(&args.range)?;
    let (a, b, label, out_dir) = match &args.series {
        Some(paths) => {
            let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            let label = format!("{} vs {}", paths[0].display(), paths[1].display());
            (read_series(&paths[0])?, read_series(&paths[1])?, label, out_dir)
        }
        None => {
            let names = args.models.clone().unwrap_or_else(|| vec!["full".into(), "l".into()]);
            ensure!(names.len() == 2, "--models needs exactly two models, got {}", names.len());
            let (ma, mb) = (parse_model(&names[0])?, parse_model(&names[1])?);
            let exp = prepare(&args.system, &args.run, out, |_| {})?;
            println!("seed = {}", exp.seed);
            let a = exp.run(ma, exp.seed)?;
            let b = exp.run(mb, exp.seed.wrapping_add(1))?;
            println!("wrote {}", exp.write_series(ma, &a)?.display());
            println!("wrote {}", exp.write_series(mb, &b)?.display());
            (a, b, format!("{} {ma} vs {mb}", exp.system.name), exp.out)
        }
    };
    let opts = CompareOptions {
        stride: args.stride.max(1),
        n_bins: args.bins.unwrap_or(DEFAULT_BINS),
        range: range.map(|[lo, hi]| (lo, hi)),
        af_max_lag: args.af_max_lag.unwrap_or(DEFAULT_AF_LAG),
        thresholds: Thresholds {
            ks: args.ks_threshold.unwrap_or(Thresholds::default().ks),
            af: args.af_threshold,
        },
        ..CompareOptions::default()
    };
    let cmp = compare_runs(&a, &b, &opts)?;
    let report = format!("{label}\n{cmp}\n");
    print!("{report}");
    let (path, mut w) = create(&out_dir, "compare_report.txt", None)?;
    w.write_all(report.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(if cmp.pass { EXIT_PASS } else { EXIT_FAIL })
}

pub fn cf_check(args: &CfCheckArgs, out: Option<&Path>) -> Result<u8> {
    let regime = match args.regime.as_str() {
        "one" => Regime::TOrderOne,
        "eps" => Regime::TOrderEps,
        other => bail!("unknown regime `{other}` (expected one or eps)"),
    };
    let kernel = match args.kernel.as_str() {
        "lambda" => Kernel::Lambda,
        "gamma" => Kernel::Gamma,
        other => bail!("unknown kernel `{other}` (expected lambda or gamma)"),
    };
    let remainder = match args.remainder.as_str() {
        "leading" => Remainder::LeadingOnly,
        "first" => Remainder::FirstCorrection,
        "published" => Remainder::PublishedThreeTerm,
        other => bail!("unknown remainder `{other}` (expected leading, first or published)"),
    };
    ensure!(!args.epsilons.is_empty(), "--epsilons is empty");
    let base = CfContext {
        l: args.l,
        m: args.m,
        f2v: args.f2,
        g2v: args.g2,
        g1v: args.g1,
        epsilon: args.epsilons[0],
        gamma: args.gamma.unwrap_or_else(|| critical_gamma(args.alpha)),
        b: args.b,
        alpha: args.alpha,
        beta: args.beta,
        y0: args.y0,
    };
    base.validate()?;
    let mut rows: Vec<(f64, CfSweepRow)> = Vec::new();
    for &eps in &args.epsilons {
        let t = match regime {
            Regime::TOrderEps => args.t * eps,
            Regime::TOrderOne => args.t,
        };
        let sweep = cf_sweep(&base, t, regime, kernel, remainder, &[eps])?;
        rows.push((t, sweep.rows[0]));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|(_, r)| r.rel_error > 0.0 && r.rel_error.is_finite())
        .map(|(_, r)| (r.epsilon.ln(), r.rel_error.ln()))
        .collect();
    let order = log_log_slope(&pts);
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let (path, mut w) = create(&out, "cf_check.csv", None)?;
    let header = [
        "epsilon",
        "t",
        "asymptotic_re",
        "asymptotic_im",
        "quadrature_re",
        "quadrature_im",
        "abs_error",
        "rel_error",
    ];
    write_columns(
        &mut w,
        &header,
        rows.iter().map(|(t, r)| {
            vec![
                r.epsilon,
                *t,
                r.asymptotic.re,
                r.asymptotic.im,
                r.quadrature.re,
                r.quadrature.im,
                r.abs_error,
                r.rel_error,
            ]
        }),
    )?;
    println!("{:>10} {:>12} {:>12}", "epsilon", "abs_error", "rel_error");
    for (_, r) in &rows {
        println!("{:>10.1e} {:>12.3e} {:>12.3e}", r.epsilon, r.abs_error, r.rel_error);
    }
    match order {
        Some(o) => println!("observed order = {o:.3} (1/alpha = {:.3})", 1.0 / args.alpha),
        None => println!("observed order = n/a (errors at rounding level)"),
    }
    println!("wrote {}", path.display());
    let mut pass = true;
    if let Some(expect) = args.expect_order {
        pass &= order.is_some_and(|o| (o - expect).abs() <= args.order_tolerance);
    }
    if let Some(max) = args.max_error {
        pass &= rows.iter().all(|(_, r)| r.abs_error <= max);
    }
    if args.expect_order.is_some() || args.max_error.is_some() {
        println!("result = {}", if pass { "pass" } else { "fail" });
    }
    Ok(if pass { EXIT_PASS } else { EXIT_FAIL })
}

pub fn plan(args: &PlanArgs) -> Result<u8> {
    let plan = plan_sample_size(args.pi, args.omega, args.bins, args.sample_dt, args.decorrelation)?;
    println!("M_Z = {:.4}", plan.m_z);
    println!("N_Z = {:.4e} independent samples", plan.n_z);
    println!("N   = {:.4e} samples at sample_dt = {}", plan.n, args.sample_dt);
    if args.probe_samples == 0 {
        return Ok(EXIT_PASS);
    }
    let name =
        fastslow::experiment::SystemName::parse(&args.system).with_context(|| format!("unknown system `{}`", args.system))?;
    let model = parse_model(&args.model)?;
    let system = build_system(name, &Default::default())?;
    let mut sim = default_config(&system, model, args.probe_samples, 1)
        .with_burn_in(0.0)
        .with_execution(Execution::Sequential);
    sim.sample_dt = args.sample_dt;
    let stride = sim.stride()?;
    let started = Instant::now();
    run_model(&system, model, Anchor::Stationary, &sim)?;
    let rate = (args.probe_samples * stride) as f64 / started.elapsed().as_secs_f64().max(1e-9);
    let hours = plan.n * stride as f64 / rate / 3600.0;
    println!(
        "probe: {} {model}, delta_t = {}, {rate:.3e} steps/s on one thread",
        system.name, sim.delta_t
    );
    println!("estimated wall-clock for N samples: {hours:.2} h on one thread");
    Ok(EXIT_PASS)
}
