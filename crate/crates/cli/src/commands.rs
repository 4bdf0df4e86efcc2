use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context as _, Result};
use log::info;
use rayon::prelude::*;
use serde::Serialize;
use ssm_core::benchmark::{
    compare_to_reference, default_trends, run_trend_benchmark, write_trend_csv, ReplicationReport,
};
use ssm_core::density::{BandwidthMatrix, FutureModel};
use ssm_core::pipeline::{
    cover_design, derive_table, fit_future_model, load_future_model, save_future_model, trend_axes,
    trend_grid, ws_grid, DEFAULT_COVER_WEIGHTS,
};
use ssm_core::probability::EstimatorConfig;
use ssm_core::reference::ws_probability;
use ssm_core::registry::{self, ModelContext};
use ssm_core::regression::{select_design_points_grid, DesignPointSet, SsmTable};
use ssm_core::rng::RunSeeds;
use ssm_core::scenario::{evaluate_scenario, write_scenario_csv, Scenario};
use ssm_core::trajectory::{
    build_situation_pairs, extract_interactions, load_trajectories, read_pairs_csv,
    synthesize_fleet, write_episodes_csv, write_pairs_csv, write_trajectories_csv, LoadReport,
    SituationPair, SyntheticFleetConfig,
};

use crate::config::{DesignConfig, RunConfig};
use crate::output::Sink;
use crate::InputError;

pub struct Context {
    pub config: RunConfig,
    pub sink: Sink,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_pairs(path: &Path) -> Result<Vec<SituationPair>> {
    let pairs =
        read_pairs_csv(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    if pairs.is_empty() {
        return Err(InputError::new(format!("{} holds no situation pairs", path.display())).into());
    }
    Ok(pairs)
}

/// Rounds away accumulated grid-step noise for display.
fn tidy(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

fn load_table(path: &Path) -> Result<SsmTable> {
    SsmTable::load(path).with_context(|| format!("loading table {}", path.display()))
}

#[derive(Serialize)]
struct IngestSummary {
    vehicles: usize,
    episodes: usize,
    pairs: usize,
    load: Option<LoadReport>,
}

pub fn ingest(ctx: &Context, trajectories: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let (series, load) = match trajectories {
        Some(path) => {
            let (series, report) = load_trajectories(open(path)?, &cfg.data.columns)
                .with_context(|| format!("reading {}", path.display()))?;
            if report.rows_kept == 0 {
                return Err(InputError::new(format!(
                    "{} has no usable trajectory rows",
                    path.display()
                ))
                .into());
            }
            (series, Some(report))
        }
        None => {
            let fleet = SyntheticFleetConfig {
                seed: cfg.root_seed,
                ..cfg.synthetic.clone()
            };
            let series = synthesize_fleet(&fleet)?;
            ctx.sink.csv("trajectories.csv", |w| {
                Ok(write_trajectories_csv(w, &series)?)
            })?;
            (series, None)
        }
    };
    let episodes = extract_interactions(&series, &cfg.data.thresholds);
    let mut pairs = Vec::new();
    for e in &episodes {
        pairs.extend(build_situation_pairs(e, &cfg.data.pairs)?);
    }
    if pairs.is_empty() {
        log::warn!("no episode is long enough for a situation pair");
    }
    ctx.sink
        .csv("pairs.csv", |w| Ok(write_pairs_csv(w, &pairs)?))?;
    ctx.sink.csv("episodes.csv", |w| {
        Ok(write_episodes_csv(w, &episodes, &cfg.data.pairs)?)
    })?;
    let summary = IngestSummary {
        vehicles: series.len(),
        episodes: episodes.len(),
        pairs: pairs.len(),
        load,
    };
    ctx.sink.table("ingest_summary", &summary, |w| {
        writeln!(w, "key,value")?;
        writeln!(w, "vehicles,{}", summary.vehicles)?;
        writeln!(w, "episodes,{}", summary.episodes)?;
        writeln!(w, "pairs,{}", summary.pairs)?;
        if let Some(r) = &summary.load {
            writeln!(w, "rows_read,{}", r.rows_read)?;
            writeln!(w, "rows_kept,{}", r.rows_kept)?;
            writeln!(w, "rejected_negative_speed,{}", r.rejected_negative_speed)?;
            writeln!(
                w,
                "rejected_non_monotone_time,{}",
                r.rejected_non_monotone_time
            )?;
            writeln!(w, "rejected_malformed,{}", r.rejected_malformed)?;
        }
        Ok(())
    })?;
    println!(
        "{} vehicles, {} episodes, {} pairs -> {}",
        summary.vehicles,
        summary.episodes,
        summary.pairs,
        ctx.sink.dir.display()
    );
    Ok(())
}

fn model_context(cfg: &RunConfig, future: Option<Arc<FutureModel>>) -> ModelContext {
    ModelContext {
        ws: cfg.ws,
        idm: cfg.idm,
        settings: cfg.simulation,
        future,
    }
}

fn needs_pairs(what: &str) -> anyhow::Error {
    InputError::new(format!("{what} needs a situation pairs file")).into()
}

fn design_for(cfg: &RunConfig, pairs: Option<&[SituationPair]>) -> Result<DesignPointSet> {
    Ok(match &cfg.design {
        DesignConfig::Grid { axes } => select_design_points_grid(axes)?,
        DesignConfig::Cover { weights } => {
            cover_design(pairs.ok_or_else(|| needs_pairs("a cover design"))?, weights)?
        }
        DesignConfig::Auto => match cfg.model.as_str() {
            "ws" => ws_grid()?,
            "trend" => trend_grid()?,
            _ => cover_design(
                pairs.ok_or_else(|| needs_pairs("a cover design"))?,
                &DEFAULT_COVER_WEIGHTS,
            )?,
        },
    })
}

fn nw_bandwidth(cfg: &RunConfig) -> Result<Option<BandwidthMatrix>> {
    Ok(match &cfg.bandwidth.nw_diagonal {
        Some(d) => Some(BandwidthMatrix::diagonal(d)?),
        None => None,
    })
}

#[derive(Serialize)]
struct PointRow<'a> {
    x: &'a [f64],
    p: f64,
    n_sim: Option<usize>,
}

fn write_points(sink: &Sink, stem: &str, table: &SsmTable) -> Result<()> {
    let design = table.design();
    let rows: Vec<PointRow> = (0..table.len())
        .map(|k| PointRow {
            x: design.point(k),
            p: table.probabilities()[k],
            n_sim: table.n_sim().get(k).copied(),
        })
        .collect();
    sink.table(stem, &rows, |w| {
        writeln!(w, "{},p,n_sim", table.metadata.input_names.join(","))?;
        for r in &rows {
            for v in r.x {
                write!(w, "{v},")?;
            }
            writeln!(
                w,
                "{},{}",
                r.p,
                r.n_sim.map(|n| n.to_string()).unwrap_or_default()
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn derive(ctx: &Context, pairs_path: Option<&Path>) -> Result<()> {
    let cfg = &ctx.config;
    let seed = cfg.root_seed;
    let hash = ctx.sink.provenance.config_hash.clone();
    let pairs = pairs_path.map(read_pairs).transpose()?;
    let future = if registry::conflict_model_needs_future(&cfg.model)? {
        let pairs = pairs
            .as_deref()
            .ok_or_else(|| needs_pairs(&format!("conflict model `{}`", cfg.model)))?;
        let model = fit_future_model(pairs, cfg.data.reduced_dim, cfg.data.pairs.dt)?;
        let path = ctx.sink.path("future_model.json");
        save_future_model(&model, Some(seed), Some(&hash), &path)?;
        info!(
            "fitted future model on {} pairs -> {}",
            pairs.len(),
            path.display()
        );
        Some(Arc::new(model))
    } else {
        None
    };
    let model = registry::conflict_model(&cfg.model, &model_context(cfg, future))?;
    let estimator = registry::estimator_for(cfg.estimator)?;
    let design = design_for(cfg, pairs.as_deref())?;
    info!(
        "deriving `{}` with the {} estimator at {} design points",
        model.name(),
        estimator.name(),
        design.len()
    );
    let start = Instant::now();
    let mut table = derive_table(
        model.as_ref(),
        estimator.as_ref(),
        design,
        seed,
        nw_bandwidth(cfg)?,
    )?;
    table.metadata.config_hash = Some(hash);
    let n = table.n_sim();
    info!(
        "estimated {} points in {:.1} s; runs per point min {} mean {:.1} max {}",
        table.len(),
        start.elapsed().as_secs_f64(),
        n.iter().min().unwrap_or(&0),
        n.iter().sum::<usize>() as f64 / n.len().max(1) as f64,
        n.iter().max().unwrap_or(&0)
    );
    let path = ctx.sink.path("table.json");
    table.save(&path)?;
    write_points(&ctx.sink, "table_points", &table)?;
    println!("{} design points -> {}", table.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    line: u64,
    x: Vec<f64>,
    p: f64,
}

#[derive(Serialize)]
struct RowError {
    line: u64,
    error: String,
}

pub fn evaluate(ctx: &Context, table_path: &Path, queries: &Path) -> Result<()> {
    let table = load_table(table_path)?;
    let names = &table.metadata.input_names;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(open(queries)?);
    let headers = reader.headers().context("reading query header")?.clone();
    let columns = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h.trim() == n).ok_or_else(|| {
                InputError::new(format!(
                    "query file lacks column `{n}` (table inputs: {names:?})"
                ))
            })
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for rec in reader.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                errors.push(RowError {
                    line,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let parsed: std::result::Result<Vec<f64>, String> = columns
            .iter()
            .zip(names)
            .map(|(&i, name)| {
                let s = rec
                    .get(i)
                    .map(str::trim)
                    .ok_or(format!("missing `{name}`"))?;
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(format!("`{name}`: invalid value {s:?}")),
                }
            })
            .collect();
        match parsed {
            Ok(x) => rows.push((line, x)),
            Err(error) => errors.push(RowError { line, error }),
        }
    }

    let start = Instant::now();
    let values: Vec<ssm_core::Result<f64>> =
        rows.par_iter().map(|(_, x)| table.evaluate(x)).collect();
    let secs = start.elapsed().as_secs_f64();
    info!(
        "evaluated {} rows in {secs:.3} s ({:.0} rows/s)",
        rows.len(),
        rows.len() as f64 / secs.max(1e-9)
    );
    let mut results = Vec::with_capacity(rows.len());
    for ((line, x), v) in rows.into_iter().zip(values) {
        match v {
            Ok(p) => results.push(Evaluation { line, x, p }),
            Err(e) => errors.push(RowError {
                line,
                error: e.to_string(),
            }),
        }
    }

    let path = ctx.sink.table("evaluate", &results, |w| {
        writeln!(w, "line,{},p", names.join(","))?;
        for r in &results {
            write!(w, "{}", r.line)?;
            for v in &r.x {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", r.p)?;
        }
        Ok(())
    })?;
    println!("{} rows -> {}", results.len(), path.display());
    if errors.is_empty() {
        return Ok(());
    }
    errors.sort_by_key(|e| e.line);
    let err_path = ctx.sink.table("evaluate_errors", &errors, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["line", "error"])?;
        for e in &errors {
            csv.write_record([e.line.to_string(), e.error.clone()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Err(InputError::new(format!(
        "{} malformed query rows, see {}",
        errors.len(),
        err_path.display()
    ))
    .into())
}

#[derive(Serialize)]
struct ToleranceResult {
    delta: f64,
    table: String,
    mean_runs: f64,
    report: ReplicationReport,
}

#[derive(Serialize)]
struct CurvePoint {
    dv: f64,
    ttc: f64,
    p_ws: f64,
    p_table: Vec<f64>,
}

pub fn replicate_ws(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let design = match &cfg.design {
        DesignConfig::Auto => ws_grid()?,
        DesignConfig::Grid { axes } => select_design_points_grid(axes)?,
        DesignConfig::Cover { .. } => {
            return Err(InputError::new("replicate-ws needs a grid design").into())
        }
    };
    let model = registry::conflict_model("ws", &model_context(cfg, None))?;
    let mut tables = Vec::new();
    let mut results = Vec::new();
    for &delta in &cfg.replicate.deltas {
        let estimator = registry::estimator_for(EstimatorConfig {
            delta,
            ..cfg.estimator
        })?;
        let mut table = derive_table(
            model.as_ref(),
            estimator.as_ref(),
            design.clone(),
            cfg.root_seed,
            nw_bandwidth(cfg)?,
        )?;
        table.metadata.config_hash = Some(ctx.sink.provenance.config_hash.clone());
        let name = format!("ws_table_delta_{delta}.json");
        table.save(&ctx.sink.path(&name))?;
        let report =
            compare_to_reference(&table, |x| ws_probability(x[0], x[1], &cfg.ws), &design)?;
        let mean_runs = table.n_sim().iter().sum::<usize>() as f64 / table.len() as f64;
        info!(
            "delta {delta}: mean |error| {:.4}, max |error| {:.4}, {mean_runs:.1} runs per point",
            report.mean_abs, report.max_abs
        );
        tables.push(table);
        results.push(ToleranceResult {
            delta,
            table: name,
            mean_runs,
            report,
        });
    }

    let mut curves = Vec::new();
    for &dv in &cfg.replicate.curve_dv {
        for ttc in cfg.replicate.curve_ttc.values().into_iter().map(tidy) {
            curves.push(CurvePoint {
                dv,
                ttc,
                p_ws: ws_probability(dv, ttc, &cfg.ws)?,
                p_table: tables
                    .iter()
                    .map(|t| t.evaluate(&[dv, ttc]))
                    .collect::<ssm_core::Result<_>>()?,
            });
        }
    }
    ctx.sink.table("replicate_ws_curves", &curves, |w| {
        write!(w, "dv,ttc,p_ws")?;
        for d in &cfg.replicate.deltas {
            write!(w, ",p_table_delta_{d}")?;
        }
        writeln!(w)?;
        for c in &curves {
            write!(w, "{},{},{}", c.dv, c.ttc, c.p_ws)?;
            for p in &c.p_table {
                write!(w, ",{p}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    ctx.sink.table("replicate_ws_report", &results, |w| {
        writeln!(w, "delta,points,mean_runs,mean_abs_error,max_abs_error")?;
        for r in &results {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.delta,
                r.report.residuals.len(),
                r.mean_runs,
                r.report.mean_abs,
                r.report.max_abs
            )?;
        }
        Ok(())
    })?;
    for r in &results {
        println!(
            "delta {}: mean |error| {:.4}, max |error| {:.4}",
            r.delta, r.report.mean_abs, r.report.max_abs
        );
    }
    Ok(())
}

pub fn benchmark(ctx: &Context, table_path: &Path) -> Result<()> {
    let table = load_table(table_path)?;
    let axes = match &ctx.config.benchmark.axes {
        Some(a) => a.clone(),
        None => trend_axes()?,
    };
    let grid = select_design_points_grid(&axes)?;
    let start = Instant::now();
    let report = run_trend_benchmark(&table, &grid, &default_trends())?;
    info!(
        "{} gradients in {:.2} s",
        report.n_points,
        start.elapsed().as_secs_f64()
    );
    ctx.sink
        .table("trend", &report, |w| Ok(write_trend_csv(w, &report)?))?;
    for v in &report.variables {
        println!(
            "{}: {:.3} of derivatives have the expected sign",
            v.name, v.correct_sign_fraction
        );
    }
    Ok(())
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn simulate_scenario(ctx: &Context, scenario_path: &Path, table_path: &Path) -> Result<()> {
    let scenario = Scenario::load(scenario_path)
        .with_context(|| format!("loading scenario {}", scenario_path.display()))?;
    let table = load_table(table_path)?;
    let trace = evaluate_scenario(&scenario, &table, &ctx.config.ws)?;
    let path = ctx.sink.table(
        &format!("scenario_{}", file_stem(&trace.name)),
        &trace,
        |w| Ok(write_scenario_csv(w, &trace)?),
    )?;
    println!(
        "{}: max table probability {:.3}, max closed-form {:.3}{} -> {}",
        trace.name,
        trace.max_p_table(),
        trace.max_p_ws(),
        trace
            .impact_time
            .map(|t| format!(", impact at {t:.2} s"))
            .unwrap_or_default(),
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct FutureEnsemble {
    v_lead: f64,
    a_lead: f64,
    dt: f64,
    profiles: Vec<Vec<f64>>,
}

pub fn sample_futures(ctx: &Context, source: &Path) -> Result<()> {
    let cfg = &ctx.config;
    let model = if source.extension().is_some_and(|e| e == "json") {
        load_future_model(source).with_context(|| format!("loading {}", source.display()))?
    } else {
        fit_future_model(
            &read_pairs(source)?,
            cfg.data.reduced_dim,
            cfg.data.pairs.dt,
        )?
    };
    let f = &cfg.futures;
    let sampler = model.sampler(&[f.v_lead, f.a_lead])?;
    let seeds = RunSeeds::new(cfg.root_seed, 0);
    let profiles: Vec<Vec<f64>> = (0..f.count as u64)
        .into_par_iter()
        .map(|k| sampler.sample(&model, &mut seeds.rng(k)))
        .collect();
    let ensemble = FutureEnsemble {
        v_lead: f.v_lead,
        a_lead: f.a_lead,
        dt: model.dt,
        profiles,
    };
    let path = ctx.sink.table("futures", &ensemble, |w| {
        writeln!(w, "draw,t,v_lead")?;
        for (k, p) in ensemble.profiles.iter().enumerate() {
            writeln!(w, "{k},0,{}", ensemble.v_lead)?;
            for (j, v) in p.iter().enumerate() {
                writeln!(w, "{k},{},{v}", tidy((j + 1) as f64 * ensemble.dt))?;
            }
        }
        Ok(())
    })?;
    println!("{} profiles -> {}", ensemble.profiles.len(), path.display());
    Ok(())
}
