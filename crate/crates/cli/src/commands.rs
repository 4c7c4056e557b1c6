use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use spdt_core::analysis;
use spdt_core::diffusion::{self, BadnExposure, ContactSource, DiseaseParams, GraphExposure};
use spdt_core::estimator::{self, CipSamples};
use spdt_core::generator::{self, BadnModel};
use spdt_core::ingestion::{self, IngestConfig};
use spdt_core::{SpdtParams, TemporalGraph, TimeGrid};

use crate::{
    AnalyzeArgs, BadnArgs, BadnModelArgs, ClipArgs, CompareArgs, DensifyArgs, FitArgs,
    GenerateArgs, IngestArgs, SimulateArgs,
};

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_graph(path: &Path) -> Result<TemporalGraph> {
    let g = TemporalGraph::read_from(open(path)?)
        .with_context(|| format!("reading graph {}", path.display()))?;
    Ok(g)
}

fn write_graph(g: &TemporalGraph, path: &Path) -> Result<()> {
    g.write_to(create(path)?)
        .with_context(|| format!("writing graph {}", path.display()))?;
    Ok(())
}

fn steps_per_day(step: u32) -> Result<u32> {
    TimeGrid::new(step)?
        .steps_per_day()
        .with_context(|| format!("step of {step} s does not divide a day"))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let log = ingestion::parse_updates(open(&a.input)?)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let visits = ingestion::extract_visits(&log.updates, log.coords, a.radius, a.max_gap);
    let cfg = IngestConfig {
        coords: log.coords,
        radius_m: a.radius,
        delta_sec: a.delta,
        step_seconds: a.step,
    };
    let rg = ingestion::build_real_graph(&visits, cfg)?;
    write_graph(&rg.graph, &a.out_graph)?;
    rg.cip.write_to(create(&a.out_cip)?)?;
    eprintln!(
        "users {} visits {} copies {} links {} skipped_records {}",
        rg.users.len(),
        visits.len(),
        rg.graph.copies.len(),
        rg.graph.links.len(),
        log.skipped
    );
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    let cip = CipSamples::read_from(open(&a.cip)?)
        .with_context(|| format!("reading CIP {}", a.cip.display()))?;
    let report = estimator::fit_report(&cip, a.step)?;
    let p = &report.params;
    let mut w = create(&a.out)?;
    w.write_all(p.to_file_string().as_bytes())?;
    w.flush()?;
    eprintln!("rho_per_sec {:.6e} (n = {})", p.rho_per_sec, report.n_active);
    eprintln!("q_per_sec {:.6e} (n = {})", p.q_per_sec, report.n_users);
    eprintln!(
        "alpha {:.4} xi {:.4} psi {} (n = {}{})",
        p.alpha,
        p.xi,
        p.psi,
        report.n_degrees,
        if report.power_law.at_boundary { ", at search boundary" } else { "" }
    );
    eprintln!(
        "p_c_per_sec {:.6e} (n = {}{})",
        p.p_c_per_sec,
        report.n_delays,
        if report.pc.at_upper_bracket { ", at upper bracket" } else { "" }
    );
    eprintln!("p_b_per_sec {:.6e} (= rho)", p.p_b_per_sec);
    Ok(())
}

fn load_params(path: Option<&Path>) -> Result<SpdtParams> {
    match path {
        None => Ok(SpdtParams::paper_fitted()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read {}", p.display()))?;
            Ok(SpdtParams::parse(&text).with_context(|| format!("parsing {}", p.display()))?)
        }
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let params = load_params(a.params.as_deref())?;
    let horizon = a.days * steps_per_day(params.step_seconds)?;
    let g = generator::synthesize_graph(&params, a.nodes, horizon, a.seed)?;
    write_graph(&g, &a.out)?;
    eprintln!("copies {} links {}", g.copies.len(), g.links.len());
    if a.rse {
        for m in analysis::cip_marginal_rse(&g, &params.per_step()?)? {
            eprintln!("rse {} {:.5} (n = {})", m.name, m.rse, m.samples);
        }
    }
    Ok(())
}

fn badn_model(m: &BadnModelArgs, nodes: u32, days: u32, seed: u64) -> Result<BadnModel> {
    let p = generator::activation_potential(m.f, m.stay_min);
    let horizon = days * steps_per_day(m.step)?;
    Ok(BadnModel::new(nodes, p, m.m, horizon, m.step, seed)?)
}

pub fn badn(a: BadnArgs) -> Result<()> {
    let g = badn_model(&a.model, a.nodes, a.days, a.seed)?.materialize();
    write_graph(&g, &a.out)?;
    eprintln!("copies {} links {}", g.copies.len(), g.links.len());
    Ok(())
}

pub fn clip_spst(a: ClipArgs) -> Result<()> {
    let g = generator::clip_to_spst(&read_graph(&a.input)?);
    write_graph(&g, &a.out)?;
    eprintln!("links {}", g.links.len());
    Ok(())
}

pub fn densify(a: DensifyArgs) -> Result<()> {
    let g = read_graph(&a.input)?;
    let d = ingestion::densify(&g, a.days, a.seed)?;
    write_graph(&d, &a.out)?;
    eprintln!(
        "copies {} -> {} links {} -> {}",
        g.copies.len(),
        d.copies.len(),
        g.links.len(),
        d.links.len()
    );
    Ok(())
}

/// `series.csv` becomes `series.r1.5.csv` when several rates are swept.
fn rate_path(path: &Path, r: f64, many: bool) -> PathBuf {
    if !many {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.r{r}.{}", ext.to_string_lossy()),
        None => format!("{stem}.r{r}"),
    };
    path.with_file_name(name)
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    ensure!(!a.r.is_empty(), "--r needs at least one value");
    let graph = a.graph.as_deref().map(read_graph).transpose()?;
    let badn = match a.badn_nodes {
        Some(n) => Some(badn_model(&a.badn, n, a.days, a.badn_seed.unwrap_or(a.seed))?),
        None => None,
    };
    let many = a.r.len() > 1;
    for &r in &a.r {
        ensure!(r > 0.0, "particle removal rate must be positive, got {r}");
        let dp = DiseaseParams {
            sigma: a.sigma,
            g: a.g,
            p_pulmonary: a.p / 1000.0 / 60.0,
            volume: a.volume,
            r: r / 3600.0,
            infectious_days_min: a.min_infectious_days,
            infectious_days_max: a.max_infectious_days,
            n_seeds: a.seeds,
            horizon_days: a.days,
            split_at_midnight: a.split_midnight,
        }
        .validate()?;
        let source: Box<dyn ContactSource> = match (&graph, &badn) {
            (Some(g), _) => Box::new(GraphExposure::build(g, &dp)?),
            (None, Some(m)) => Box::new(BadnExposure::new(m.clone(), &dp)?),
            (None, None) => bail!("either --graph or --badn-nodes is required"),
        };
        ensure!(
            a.seeds <= source.n_nodes(),
            "{} seeds requested but the graph has {} nodes",
            a.seeds,
            source.n_nodes()
        );
        let runs = diffusion::run_sir(source.as_ref(), &dp, a.seed, a.runs)?;
        diffusion::write_series(create(&rate_path(&a.out, r, many))?, &runs)?;
        if let Some(s) = &a.summary {
            diffusion::write_summary(create(&rate_path(s, r, many))?, &runs)?;
        }
        let totals: Vec<f64> = runs.iter().map(|t| t.total_infected() as f64).collect();
        let (mean, std) = diffusion::mean_std(&totals);
        eprintln!("r {r} runs {} total_I mean {mean:.2} std {std:.2}", a.runs);
    }
    Ok(())
}

/// Mean daily new infections and prevalence over the runs of a series file.
struct SeriesMeans {
    new_infections: Vec<f64>,
    prevalence: Vec<f64>,
}

fn read_series(path: &Path) -> Result<SeriesMeans> {
    let mut new_i: Vec<f64> = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    let mut runs = std::collections::BTreeSet::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if i == 0 {
            ensure!(
                line.trim() == "run,day,S,I,R,new_I",
                "{}: not a series file",
                path.display()
            );
            continue;
        }
        let f: Vec<u64> = line
            .split(',')
            .map(|x| x.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{}:{}: bad record", path.display(), i + 1))?;
        ensure!(f.len() == 6, "{}:{}: expected 6 fields", path.display(), i + 1);
        runs.insert(f[0]);
        let day = f[1] as usize;
        if day >= new_i.len() {
            new_i.resize(day + 1, 0.0);
            prev.resize(day + 1, 0.0);
        }
        prev[day] += f[3] as f64;
        new_i[day] += f[5] as f64;
    }
    ensure!(!runs.is_empty(), "{}: no runs", path.display());
    let n = runs.len() as f64;
    Ok(SeriesMeans {
        new_infections: new_i.into_iter().map(|x| x / n).collect(),
        prevalence: prev.into_iter().map(|x| x / n).collect(),
    })
}

fn proportions(xs: &[f64]) -> Vec<f64> {
    let total: f64 = xs.iter().sum();
    if total > 0.0 {
        xs.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let real = read_series(&a.real)?;
    let obs = read_series(&a.observed)?;
    ensure!(
        real.new_infections.len() == obs.new_infections.len(),
        "series cover {} and {} days",
        real.new_infections.len(),
        obs.new_infections.len()
    );
    let ape = analysis::ape_mape(&real.new_infections, &obs.new_infections)?;
    let prevalence_rse = analysis::rse(&proportions(&real.prevalence), &proportions(&obs.prevalence))?;
    let mut w = create(&a.out)?;
    writeln!(w, "Total Er(%),Mean Er(%),STD Er(%),skipped_days,prevalence_rse")?;
    writeln!(
        w,
        "{:.4},{:.4},{:.4},{},{:.6}",
        ape.cumulative, ape.mape, ape.std, ape.skipped_days, prevalence_rse
    )?;
    writeln!(w)?;
    writeln!(w, "day,real_new_I,observed_new_I,APE(%)")?;
    for (d, day_ape) in ape.per_day.iter().enumerate() {
        let cell = day_ape.map(|x| format!("{x:.4}")).unwrap_or_default();
        writeln!(
            w,
            "{d},{:.4},{:.4},{cell}",
            real.new_infections[d], obs.new_infections[d]
        )?;
    }
    w.flush()?;
    eprintln!("Total Er {:.2}% Mean Er {:.2}% STD Er {:.2}%", ape.cumulative, ape.mape, ape.std);
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let g = read_graph(&a.graph)?;
    let sg = analysis::project_static(&g);
    let ds = analysis::degree_stats(&sg)?;
    let cl = analysis::clustering_coefficients(&sg);
    let n = f64::from(sg.n_nodes);
    let mut w = create(&a.out)?;
    writeln!(w, "metric,value")?;
    writeln!(w, "nodes,{}", sg.n_nodes)?;
    writeln!(w, "edges,{}", sg.n_edges())?;
    writeln!(w, "mean_degree,{:.6}", sg.n_edges() as f64 / n)?;
    writeln!(w, "pearson_in_out,{:.6}", ds.pearson)?;
    writeln!(w, "mean_clustering,{:.6}", cl.mean)?;
    w.flush()?;
    if let Some(path) = &a.degree_hist {
        let mut w = create(path)?;
        writeln!(w, "degree,in_count,out_count")?;
        let len = ds.in_histogram.len().max(ds.out_histogram.len());
        for d in 0..len {
            let i = ds.in_histogram.get(d).copied().unwrap_or(0);
            let o = ds.out_histogram.get(d).copied().unwrap_or(0);
            if i > 0 || o > 0 {
                writeln!(w, "{d},{i},{o}")?;
            }
        }
        w.flush()?;
    }
    eprintln!(
        "nodes {} edges {} pearson {:.4} clustering {:.4}",
        sg.n_nodes,
        sg.n_edges(),
        ds.pearson,
        cl.mean
    );
    Ok(())
}
