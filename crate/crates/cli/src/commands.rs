use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use hom3::correctors::{compute_phi, estimate_ah, massive_time, CorrectorSet, StageRadii};
use hom3::experiments::{
    self, convergence_csv, fmt_float, growth_csv, make_source, slopes_csv, GrowthRow, StudyConfig,
    StudyEvent,
};
use hom3::io::{self, Manifest};
use hom3::lattice::{div, BoxSpec, EdgeVectorField};
use hom3::media::sample;
use hom3::pipeline::{gradient_at, run_with, AlgorithmKind};

use crate::config::{CommonArgs, FileDefaults, RunConfig};
use crate::plot::{self, PowerLaw, Series};
use crate::selftest;

#[derive(Args, Clone, Debug, Default)]
pub struct AhArgs {
    #[arg(long = "L")]
    pub l: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SolveArgs {
    #[arg(long = "L")]
    pub l: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// dirichlet_zero, no_multipole, dipole_only or full.
    #[arg(long)]
    pub alg: Option<String>,
    /// normal (seeded charge) or zero.
    #[arg(long)]
    pub source: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, Default)]
pub struct ConvergenceArgs {
    #[arg(long = "Ls", value_delimiter = ',')]
    pub ls: Vec<i32>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    pub algs: Vec<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, Default)]
pub struct GrowthArgs {
    #[arg(long = "L")]
    pub l: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Defaults to 1..=L.
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<i32>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Clone, Debug, Default)]
pub struct SelftestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Wall time between successive laps.
struct Clock {
    start: Instant,
    last: Instant,
    laps: Vec<(String, f64)>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            laps: Vec::new(),
        }
    }

    fn lap(&mut self, stage: impl Into<String>) {
        let now = Instant::now();
        let stage = stage.into();
        let dt = (now - self.last).as_secs_f64();
        log::info!("{stage} done in {dt:.3}s");
        self.laps.push((stage, dt));
        self.last = now;
    }

    fn record(&self, m: &mut Manifest) {
        for (stage, dt) in &self.laps {
            m.set(format!("time.{stage}"), format!("{dt:.6}"));
        }
        m.set("time.total", format!("{:.6}", self.start.elapsed().as_secs_f64()));
    }
}

fn manifest_for(command: &str, cfg: &RunConfig) -> Manifest {
    let mut m = Manifest::new();
    m.set("tool", "hom3")
        .set("version", env!("CARGO_PKG_VERSION"))
        .set("command", command);
    cfg.echo(&mut m);
    m
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(",")
}

pub fn cmd_ah(args: &AhArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = FileDefaults::load(args.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.common, &file)?;
    let l = file.pick(args.l, "L")?.unwrap_or(16);
    let seed = file.pick(args.seed, "seed")?.unwrap_or(1);
    let radii = StageRadii::for_scale(l)?;
    let mut clock = Clock::new();

    let a = sample(&cfg.ensemble.with_seed(seed), BoxSpec::new(radii.phi)?)?;
    clock.lap("medium");
    let t = massive_time(l, cfg.eps);
    let first = compute_phi(&a, t, &cfg.solver())?;
    clock.lap("phi");
    let ah = estimate_ah(&first.q, l)?;
    clock.lap("a_h");

    for row in ah.entries() {
        writeln!(stdout, "{}", floats(&row).replace(',', " "))?;
    }

    prepare_out(&cfg.out)?;
    let mut m = manifest_for("ah", &cfg);
    m.set("L", l).set("seed", seed).set("T", fmt_float(t));
    m.set("a_h", floats(&ah.entries().concat()));
    for (i, r) in first.reports.iter().enumerate() {
        m.set(format!("iterations.phi_{}", i + 1), r.iterations);
    }
    clock.record(&mut m);
    m.write(&cfg.out.join("manifest.txt"))?;
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = FileDefaults::load(args.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.common, &file)?;
    let l = file.pick(args.l, "L")?.unwrap_or(16);
    let seed = file.pick(args.seed, "seed")?.unwrap_or(1);
    let kind: AlgorithmKind = file
        .pick(args.alg.clone(), "alg")?
        .unwrap_or_else(|| "full".into())
        .parse()?;
    let source = file.pick(args.source.clone(), "source")?.unwrap_or_else(|| "normal".into());
    let radii = StageRadii::for_scale(l)?;
    let mut clock = Clock::new();

    let g = match source.as_str() {
        "normal" => make_source(seed).g,
        "zero" => EdgeVectorField::zeros(BoxSpec::new(2)?),
        other => bail!("unknown source {other}; expected normal or zero"),
    };
    let a = sample(&cfg.ensemble.with_seed(seed), BoxSpec::new(radii.phi)?)?;
    clock.lap("medium");
    let solver = cfg.solver();
    let set = if kind.needs_correctors() {
        Some(CorrectorSet::compute_observed(&a, l, cfg.eps, &solver, &mut |s| clock.lap(s))?)
    } else {
        None
    };
    let res = run_with(set.as_ref(), &a, &g, l, kind, &solver)?;
    clock.lap("final");

    prepare_out(&cfg.out)?;
    io::write_vertex(&cfg.out.join("u.bin"), &res.u)?;
    io::write_edge(&cfg.out.join("g.bin"), &g)?;
    io::write_vertex(&cfg.out.join("f.bin"), &div(&g))?;
    if let Some(set) = &set {
        for (i, p) in set.phi().iter().enumerate() {
            io::write_vertex(&cfg.out.join(format!("phi_{}.bin", i + 1)), p)?;
        }
    }

    let h = l / 2;
    let grad = gradient_at(&res.u, [h, h, h])?;
    let mut m = manifest_for("solve", &cfg);
    m.set("L", l)
        .set("seed", seed)
        .set("alg", kind)
        .set("source", &source)
        .set("T", res.t.map_or("absent".into(), fmt_float))
        .set("a_h", res.a_h.map_or("absent".into(), |a| floats(&a.entries().concat())))
        .set("xi", res.xi.map_or("absent".into(), |x| floats(&x)))
        .set("c", res.c.map_or("absent".into(), |c| floats(&c)))
        .set("grad_at_half", floats(&grad));
    for (stage, r) in &res.reports {
        m.set(format!("iterations.{stage}"), r.iterations);
    }
    clock.record(&mut m);
    m.write(&cfg.out.join("manifest.txt"))?;
    writeln!(stdout, "grad u({h},{h},{h}) = {}", floats(&grad).replace(',', " "))?;
    Ok(())
}

/// Study grid from flags and config file.
pub fn study_config(args: &ConvergenceArgs, file: &FileDefaults, cfg: &RunConfig) -> Result<StudyConfig> {
    let algs: Vec<String> = file.pick_list(&args.algs, "algs", &[])?;
    let kinds = if algs.is_empty() {
        AlgorithmKind::ALL.to_vec()
    } else {
        algs.iter().map(|s| s.parse()).collect::<hom3::Result<Vec<_>>>()?
    };
    Ok(StudyConfig {
        ls: file.pick_list(&args.ls, "Ls", &[8, 12, 16])?,
        seeds: file.pick_list(&args.seeds, "seeds", &[1, 2, 3])?,
        kinds,
        eps: cfg.eps,
        ensemble: cfg.ensemble,
        solver: cfg.solver(),
    })
}

pub fn cmd_convergence(args: &ConvergenceArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = FileDefaults::load(args.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.common, &file)?;
    let study = study_config(args, &file, &cfg)?;
    prepare_out(&cfg.out)?;
    let mut clock = Clock::new();
    let rows = experiments::convergence_study_observed(&study, &mut |e| match e {
        StudyEvent::Medium { seed, .. } => clock.lap(format!("seed{seed}.medium")),
        StudyEvent::Stage { seed, scale, stage } => clock.lap(format!("seed{seed}.L{scale}.{stage}")),
        StudyEvent::Final { seed, scale, kind } => clock.lap(format!("seed{seed}.L{scale}.final.{kind}")),
    })?;
    let slopes = experiments::slopes(&rows);
    fs::write(cfg.out.join("convergence.csv"), convergence_csv(&rows))?;
    fs::write(cfg.out.join("slopes.csv"), slopes_csv(&slopes))?;

    let series: Vec<Series> = study
        .kinds
        .iter()
        .map(|&k| {
            let points: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.kind == k && r.is_valid())
                .map(|r| (r.l as f64, r.value))
                .collect();
            let slope = experiments::mean_slope(&slopes, k);
            Series {
                name: k.to_string(),
                fit: PowerLaw::through(&points, slope),
                points,
                connect: false,
            }
        })
        .collect();
    fs::write(
        cfg.out.join("convergence.svg"),
        plot::loglog(
            "|grad(u(2L) - u(L))(L/2, L/2, L/2)|",
            "L",
            "gradient difference",
            &series,
        ),
    )?;

    let invalid: Vec<_> = rows.iter().filter(|r| !r.is_valid()).collect();
    let mut m = manifest_for("convergence", &cfg);
    m.set("Ls", join(&study.ls))
        .set("seeds", join(&study.seeds))
        .set("algs", join(&study.kinds))
        .set("rows", rows.len())
        .set("invalid_rows", invalid.len());
    for &k in &study.kinds {
        m.set(format!("mean_slope.{k}"), fmt_float(experiments::mean_slope(&slopes, k)));
    }
    for r in &invalid {
        m.set(
            format!("error.seed{}.L{}.{}", r.seed, r.l, r.kind),
            r.error.as_deref().unwrap_or("non-finite value"),
        );
    }
    clock.record(&mut m);
    m.write(&cfg.out.join("manifest.txt"))?;

    for &k in &study.kinds {
        writeln!(stdout, "{k}: mean slope {:.3}", experiments::mean_slope(&slopes, k))?;
    }
    if !invalid.is_empty() {
        bail!("{} of {} rows are invalid; see manifest.txt", invalid.len(), rows.len());
    }
    Ok(())
}

pub fn cmd_growth(args: &GrowthArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = FileDefaults::load(args.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.common, &file)?;
    let l = file.pick(args.l, "L")?.unwrap_or(16);
    let seed = file.pick(args.seed, "seed")?.unwrap_or(1);
    let default_radii: Vec<i32> = (1..=l).collect();
    let radii = file.pick_list(&args.radii, "radii", &default_radii)?;
    let stage = StageRadii::for_scale(l)?;
    prepare_out(&cfg.out)?;
    let mut clock = Clock::new();

    let a = sample(&cfg.ensemble.with_seed(seed), BoxSpec::new(stage.phi)?)?;
    clock.lap("medium");
    let set = CorrectorSet::compute_observed(&a, l, cfg.eps, &cfg.solver(), &mut |s| clock.lap(s))?;
    let rows = experiments::growth_from_correctors(&set, &radii)?;
    clock.lap("statistics");
    fs::write(cfg.out.join("growth.csv"), growth_csv(&rows))?;
    fs::write(cfg.out.join("growth.svg"), growth_svg(&rows, l))?;

    let mut m = manifest_for("growth", &cfg);
    m.set("L", l).set("seed", seed).set("radii", join(&radii));
    clock.record(&mut m);
    m.write(&cfg.out.join("manifest.txt"))?;
    for r in &rows {
        writeln!(stdout, "r={} phi_l2={:.4e} psi_fluct={:.4e}", r.r, r.phi_l2, r.psi_fluct)?;
    }
    Ok(())
}

fn growth_svg(rows: &[GrowthRow], l: i32) -> String {
    let pick = |f: fn(&GrowthRow) -> f64| rows.iter().map(|r| (r.r as f64, f(r))).collect();
    let series = vec![
        Series {
            name: "phi_l2".into(),
            points: pick(|r| r.phi_l2),
            connect: true,
            fit: None,
        },
        Series {
            name: "psi_fluct".into(),
            points: pick(|r| r.psi_fluct),
            connect: true,
            fit: None,
        },
        Series {
            name: "psi_fluct / sqrt(r)".into(),
            points: pick(|r| r.psi_fluct / (r.r as f64).sqrt()),
            connect: true,
            fit: None,
        },
    ];
    plot::loglog(&format!("Corrector growth, L = {l}"), "r", "average over Q_r", &series)
}

pub fn cmd_selftest(args: &SelftestArgs, stdout: &mut dyn Write) -> Result<()> {
    let file = FileDefaults::load(args.common.config.as_deref())?;
    let cfg = RunConfig::resolve(&args.common, &file)?;
    let mut failed = 0;
    for check in selftest::run(&cfg.solver()) {
        match &check.outcome {
            Ok(()) => writeln!(stdout, "PASS {}", check.name)?,
            Err(e) => {
                failed += 1;
                writeln!(stdout, "FAIL {}: {e}", check.name)?;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} self-test checks failed");
    }
    Ok(())
}
