//! Dispatch from a parsed experiment to the library.

use std::io::Write;

use branchlab::cb::{
    cb_functionals, sample_cbi, sample_feller_cb, sample_jumpdiff_cb, scale_ratio_report, sigma_tail_checks, verify_lccb,
    CbRunOptions, JumpMeasure, TimeGrid,
};
use branchlab::continuum::{
    condensation_heights, delta_band_study, immortal_heights, local_time_profile, sample_height_excursions,
    standard_bismut_cases, summarize, sup_tail_ratio, verify_bismut, verify_conditioned_limit, verify_max_identity,
    write_path_f32, write_summaries, SurveyOptions,
};
use branchlab::discrete_lab::{
    probe_conjectures, run_point_convergence, run_ratio_limits, run_tail_convergence, ConvergenceReport, LabContext,
};
use branchlab::exact::{tail_table, EngineOptions};
use branchlab::rng::RngState;
use branchlab::samplers::{
    conditioned_batch, sample_capped_spine_prefix, sample_forest, sample_gw, sample_immortal_prefix, GwDraw,
    RejectionOptions,
};
use branchlab::par::draw_batch;
use branchlab::tree::PlaneTree;

use crate::config::{model, offspring, CbCheck, ContinuumTask, Convergence, Experiment, SamplerKind};
use crate::output::Artifacts;

/// What a run reports back besides its files.
pub struct Outcome {
    pub summary: String,
    pub exploratory: bool,
}

impl Outcome {
    fn plain(summary: impl Into<String>) -> Self {
        Outcome { summary: summary.into(), exploratory: false }
    }
}

pub fn run(exp: &Experiment, seed: u64, workers: usize, art: &mut Artifacts) -> anyhow::Result<Outcome> {
    let rng = RngState::new(seed);
    match exp {
        Experiment::Exact { offspring: spec, functional, n_max, forest_sizes } => {
            let p = offspring(spec)?;
            let table = tail_table(&p, functional, *n_max, forest_sizes, EngineOptions::default())?;
            art.write("tail_table.csv", |w| Ok(table.write_csv(w)?))?;
            let last = table.column(1).and_then(|c| c.tail.last()).copied().unwrap_or(f64::NAN);
            Ok(Outcome::plain(format!("{} of {}: P[A > {n_max}] = {last:e}", functional.name(), p.label())))
        }
        Experiment::Sample { offspring: spec, sampler, count, node_cap, max_attempts } => {
            let p = offspring(spec)?;
            sample(&p, sampler, *count, *node_cap, *max_attempts, &rng, workers, art)
        }
        Experiment::ConvergeTail(c) => convergence(c, false, seed, workers, art),
        Experiment::ConvergePoint(c) => convergence(c, true, seed, workers, art),
        Experiment::Ratio { offspring: spec, functional, forest_sizes, shifts, n_grid, mode } => {
            let p = offspring(spec)?;
            let ctx = LabContext::new(seed, workers);
            let report = run_ratio_limits(&p, functional, forest_sizes, shifts, n_grid, *mode, &ctx)?;
            write_report(&report, art)?;
            Ok(Outcome::plain(format!("{} rows", report.rows.len())))
        }
        Experiment::ProbeConjecture { offspring: spec, functional, b, n_grid, reps } => {
            let p = offspring(spec)?;
            let ctx = LabContext::new(seed, workers);
            let report = probe_conjectures(&p, functional, *b, n_grid, *reps, &ctx)?;
            write_report(&report, art)?;
            Ok(Outcome { summary: format!("exploratory probe, {} rows", report.rows.len()), exploratory: true })
        }
        Experiment::CbVerify { mechanism, check } => {
            mechanism.validate()?;
            cb(mechanism, check, &rng, workers, art)
        }
        Experiment::Continuum { model: m, task } => continuum(&model(m)?, task, seed, &rng, workers, art),
    }
}

fn write_report(report: &ConvergenceReport, art: &mut Artifacts) -> anyhow::Result<()> {
    art.write("report.csv", |w| Ok(report.write_csv(w)?))?;
    art.json("report.json", report)
}

fn convergence(c: &Convergence, point: bool, seed: u64, workers: usize, art: &mut Artifacts) -> anyhow::Result<Outcome> {
    let p = offspring(&c.offspring)?;
    let ctx = LabContext::new(seed, workers);
    let run = if point { run_point_convergence } else { run_tail_convergence };
    let report = run(&p, &c.functional, c.b, &c.n_grid, c.mode, &ctx)?;
    write_report(&report, art)?;
    let tv: Vec<String> = report.series("tv").iter().map(|(n, v)| format!("{n}:{v:.3e}")).collect();
    Ok(Outcome::plain(format!("tv {}", tv.join(" "))))
}

#[allow(clippy::too_many_arguments)]
fn sample(
    p: &branchlab::offspring::OffspringDist,
    kind: &SamplerKind,
    count: u64,
    node_cap: usize,
    max_attempts: u64,
    rng: &RngState,
    workers: usize,
    art: &mut Artifacts,
) -> anyhow::Result<Outcome> {
    let trees: Vec<Option<Vec<PlaneTree>>> = match kind {
        SamplerKind::Gw => draw_batch(count, workers, rng, |r| match sample_gw(p, r, node_cap) {
            GwDraw::Tree(t) => Some(vec![t]),
            GwDraw::Overflow => None,
        }),
        SamplerKind::Forest { k } => draw_batch(count, workers, rng, |r| sample_forest(p, *k, r, node_cap)),
        SamplerKind::ImmortalPrefix { b } => draw_batch(count, workers, rng, |r| Some(vec![sample_immortal_prefix(p, r, *b)])),
        SamplerKind::CappedSpinePrefix { b } => {
            draw_batch(count, workers, rng, |r| Some(vec![sample_capped_spine_prefix(p, r, *b)]))
        }
        SamplerKind::Conditioned { functional, condition } => {
            let opts = RejectionOptions { node_cap, max_attempts };
            let batch = conditioned_batch(p, functional, *condition, count, rng, &opts, workers, |t| Some(vec![t]))?;
            let rate = batch.acceptance_rate();
            art.json("rejection.json", &serde_json::json!({
                "attempts": batch.attempts,
                "overflows": batch.overflows,
                "acceptance_rate": rate,
            }))?;
            batch.items
        }
    };
    let overflow = trees.iter().filter(|t| t.is_none()).count();
    art.write("samples.csv", |w| {
        writeln!(w, "index,tree,vertices,height,width")?;
        for (i, forest) in trees.iter().enumerate() {
            match forest {
                Some(f) => {
                    for t in f {
                        writeln!(w, "{i},{t},{},{},{}", t.len(), t.height(), t.width())?;
                    }
                }
                None => writeln!(w, "{i},overflow,,,")?,
            }
        }
        Ok(())
    })?;
    Ok(Outcome::plain(format!("{} draws, {overflow} over the vertex cap", trees.len())))
}

fn cb(
    m: &branchlab::cb::Mechanism,
    check: &CbCheck,
    rng: &RngState,
    workers: usize,
    art: &mut Artifacts,
) -> anyhow::Result<Outcome> {
    match check {
        CbCheck::Lccb { x, b, r_grid, functional, lambdas, reps, run } => {
            let opts = CbRunOptions { workers, ..run.unwrap_or_default() };
            let report = verify_lccb(m, *x, *b, r_grid, *functional, lambdas, *reps, &opts, rng)?;
            art.write("lccb.csv", |w| Ok(report.write_csv(w)?))?;
            art.json("lccb.json", &report)?;
            Ok(Outcome::plain(format!("route {}, {} rows", report.route, report.rows.len())))
        }
        CbCheck::ScaleRatio { x_grid, r_grid } => {
            let rows = scale_ratio_report(m, x_grid, r_grid)?;
            let worst = rows.iter().map(|r| (r.ratio - r.expected).abs()).fold(0.0, f64::max);
            art.write("scale_ratio.csv", |w| {
                writeln!(w, "x,r,ratio,expected")?;
                for r in &rows {
                    writeln!(w, "{},{},{:e},{:e}", r.x, r.r, r.ratio, r.expected)?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("largest deviation {worst:e}")))
        }
        CbCheck::MassTail { x_grid, r_grid, shift, lambdas, reps } => {
            let report = sigma_tail_checks(m, r_grid, x_grid, *shift, lambdas, *reps, workers, rng)?;
            art.json("mass_tail.json", &report)?;
            art.write("mass_tail.csv", |w| {
                writeln!(w, "x,r,tail,tail_se,tail_exact,ratio,ratio_se,shift,shift_ratio,shift_ratio_se")?;
                for r in &report.rows {
                    writeln!(
                        w,
                        "{},{},{:e},{:e},{:e},{:e},{:e},{},{:e},{:e}",
                        r.x, r.r, r.tail.value, r.tail.se, r.tail_exact, r.ratio.value, r.ratio.se, r.shift,
                        r.shift_ratio.value, r.shift_ratio.se
                    )?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("{} rows", report.rows.len())))
        }
        CbCheck::Paths { x, dt, steps, count, immigration } => {
            let grid = TimeGrid::new(*dt, *steps)?;
            let paths = draw_batch(*count, workers, rng, |r| match (immigration, m.pi) {
                (Some(scheme), _) => sample_cbi(m, *x, grid, *scheme, r),
                (None, JumpMeasure::Zero) => sample_feller_cb(m.alpha, m.beta, *x, grid, r),
                (None, _) => sample_jumpdiff_cb(m, *x, grid, r),
            })
            .into_iter()
            .collect::<branchlab::Result<Vec<_>>>()?;
            art.write("paths.csv", |w| {
                writeln!(w, "index,end,sup,mass,max_jump,extinction_time,truncated")?;
                for (i, path) in paths.iter().enumerate() {
                    let f = cb_functionals(path);
                    let ext = f.extinction_time.map(|t| format!("{t:e}")).unwrap_or_default();
                    let end = path.values.last().copied().unwrap_or(0.0);
                    writeln!(w, "{i},{end:e},{:e},{:e},{:e},{ext},{}", f.sup, f.mass, f.max_jump, f.truncated)?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("{} paths", paths.len())))
        }
    }
}

fn continuum(
    m: &branchlab::continuum::BrownianModel,
    task: &ContinuumTask,
    seed: u64,
    rng: &RngState,
    workers: usize,
    art: &mut Artifacts,
) -> anyhow::Result<Outcome> {
    let with_workers = |s: &SurveyOptions| SurveyOptions { workers, ..*s };
    match task {
        ContinuumTask::Excursions { total_time, levels, bandwidth, dump_paths } => {
            let all = sample_height_excursions(*m, *total_time, rng.clone());
            let rows = all.iter().map(|e| summarize(e, levels, *bandwidth)).collect::<branchlab::Result<Vec<_>>>()?;
            art.write("excursions.csv", |w| Ok(write_summaries(&rows, levels, w)?))?;
            if *dump_paths {
                art.write("paths.f32", |w| {
                    for e in &all {
                        write_path_f32(e, &mut *w)?;
                    }
                    Ok(())
                })?;
                art.write("paths_index.csv", |w| {
                    writeln!(w, "index,first_sample,samples")?;
                    let mut offset = 0;
                    for (i, e) in all.iter().enumerate() {
                        writeln!(w, "{i},{offset},{}", e.heights.len())?;
                        offset += e.heights.len();
                    }
                    Ok(())
                })?;
            }
            Ok(Outcome::plain(format!("{} excursions", all.len())))
        }
        ContinuumTask::Spinal { horizon, condensation } => {
            let s = if *condensation { condensation_heights(m, *horizon, rng) } else { immortal_heights(m, *horizon, rng) };
            art.write("spinal.csv", |w| {
                writeln!(w, "t,left,right,left_spine,right_spine")?;
                for i in 0..s.left.heights.len() {
                    writeln!(
                        w,
                        "{:e},{:e},{:e},{:e},{:e}",
                        i as f64 * s.dt,
                        s.left.heights[i],
                        s.right.heights[i],
                        s.left.spine[i],
                        s.right.spine[i]
                    )?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("cap {}", s.cap)))
        }
        ContinuumTask::Bismut { level, reference, cases, reps, spinal_reps, survey } => {
            let cases = cases.clone().unwrap_or_else(standard_bismut_cases);
            let report = verify_bismut(m, *level, *reference, &cases, *reps, *spinal_reps, &with_workers(survey), rng)?;
            art.json("bismut.json", &report)?;
            let worst = report.rows.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
            Ok(Outcome::plain(format!("largest relative gap {worst:.4}, {} truncated", report.truncated)))
        }
        ContinuumTask::LocalTimeProfile { levels, reference, reps, survey } => {
            let rows = local_time_profile(m, levels, *reference, *reps, &with_workers(survey), rng)?;
            art.write("local_time_profile.csv", |w| {
                writeln!(w, "level,ratio,se,expected")?;
                for (b, e, x) in &rows {
                    writeln!(w, "{b},{:e},{:e},{:e}", e.value, e.se, x)?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("{} levels", rows.len())))
        }
        ContinuumTask::ConditionedLimit { functional, level, r_grid, reps, reference_reps, survey } => {
            let report =
                verify_conditioned_limit(m, *functional, *level, r_grid, *reps, *reference_reps, &with_workers(survey), rng)?;
            art.write("conditioned.csv", |w| Ok(report.write_csv(w)?))?;
            art.json("conditioned.json", &report)?;
            Ok(Outcome::plain(format!("final distance {:.4}", report.final_distance())))
        }
        ContinuumTask::MaxIdentity { x, r_grid, reps, local_time } => {
            let report = verify_max_identity(m, *x, r_grid, *reps, *local_time, workers, rng)?;
            art.json("max_identity.json", &report)?;
            let inside = report.rows.iter().filter(|r| r.within).count();
            Ok(Outcome::plain(format!("{inside} of {} levels within tolerance", report.rows.len())))
        }
        ContinuumTask::SupRatio { levels, factor, reps } => {
            let rows = levels
                .iter()
                .enumerate()
                .map(|(i, &b)| sup_tail_ratio(m, b, *factor, *reps, workers, &rng.split(i as u64)).map(|e| (b, e)))
                .collect::<branchlab::Result<Vec<_>>>()?;
            art.write("sup_ratio.csv", |w| {
                writeln!(w, "level,factor,ratio,se")?;
                for (b, e) in &rows {
                    writeln!(w, "{b},{factor},{:e},{:e}", e.value, e.se)?;
                }
                Ok(())
            })?;
            Ok(Outcome::plain(format!("{} levels", rows.len())))
        }
        ContinuumTask::DeltaBand { bismut_dt, max_dt, reps } => {
            let band = delta_band_study(*bismut_dt, *max_dt, *reps, workers, seed)?;
            art.json("delta_band.json", &band)?;
            Ok(Outcome::plain(format!("{} entries", band.entries.len())))
        }
    }
}
