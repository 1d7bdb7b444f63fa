//! Command-line front end: computes normal-bundle geometry for catalog
//! surfaces, runs the gauge descent to a critical frame, solves the
//! Grassmann system, and emits verification reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 bound-check failure.

use clap::{Args, Parser, Subcommand};
use normal_torsion::bounds::{
    self, is_constant, linfty_bound_alternative, linfty_bound_primary, lower_bound_constant,
    lower_bound_nonconstant, small_solution_upper_bound, smallness_condition, wente_test, z_field,
    BoundReport,
};
use normal_torsion::functional::{gauge_descent, GaugeField, RotationField, apply_gauge};
use normal_torsion::functional::{total_torsion, DescentOptions};
use normal_torsion::geometry::{
    check_conformal, initial_frame, metric, normal_curvature_from_torsion, normal_curvature_ricci,
    second_fundamental, torsion, NormalCurvatureField, NormalFrame,
};
use normal_torsion::grassmann::{
    build_potentials, delta_g, solve_system, GrassmannVector, PicardOptions,
};
use normal_torsion::grid::{laplacian, write_csv, DiscGrid, GridRef, ScalarField};
use normal_torsion::zoo::{list_surfaces, make_surface, SurfaceSpec};
use normal_torsion::{Error, Result};
use rand::{Rng, SeedableRng};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "normal-torsion", version, about = "Normal-bundle torsion of immersed discs: critical frames, Grassmann systems, bound verification")]
struct Cli {
    /// Print the surface catalog and exit.
    #[arg(long = "list-surfaces")]
    list_surfaces: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    /// Catalog surface name.
    #[arg(long, default_value = "clifford_torus")]
    surface: String,
    /// Surface parameter as key=value; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    param: Vec<(String, f64)>,
    /// Codimension.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Grid resolution (odd, >= 9).
    #[arg(long = "M", default_value_t = 65)]
    m: usize,
    /// Output directory for reports and field CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Metric, conformality, torsion and normal curvature of a surface.
    Compute {
        #[command(flatten)]
        common: Common,
    },
    /// Gauge descent to a critical orthonormal normal frame.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Residual tolerance for termination.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 2000)]
        max_iters: usize,
        /// Perturb the initial frame by a seeded random gauge.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full pipeline with an aggregated bound report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Run the randomized Wente-inequality suite instead of the
        /// surface pipeline.
        #[arg(long)]
        wente: bool,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 2000)]
        max_iters: usize,
    },
    /// Solve the Grassmann system Delta G = -delta G + S.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Use the built-in manufactured source with known solution.
        #[arg(long)]
        manufactured: bool,
        /// Use S identically zero.
        #[arg(long = "s-zero")]
        s_zero: bool,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 500)]
        max_iters: usize,
    },
}

fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value in '{s}': {e}"))?;
    Ok((k.to_string(), v))
}

fn main() {
    if let Ok(threads) = std::env::var("NORMAL_TORSION_THREADS") {
        match threads.parse::<usize>() {
            Ok(k) if k >= 1 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build_global()
                    .ok();
            }
            _ => {
                eprintln!("invalid NORMAL_TORSION_THREADS: {threads}");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    if cli.list_surfaces {
        for (name, desc) in list_surfaces() {
            println!("{name}: {desc}");
        }
        return;
    }
    let Some(cmd) = cli.command else {
        eprintln!("no command given; see --help");
        std::process::exit(2);
    };
    let code = match run(cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::UnknownSurface(_) | Error::BadParameter(_) | Error::Config(_) => 2,
                _ => 3,
            }
        }
    };
    std::process::exit(code);
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Compute { common } => cmd_compute(&common),
        Command::Optimize {
            common,
            tol,
            max_iters,
            seed,
        } => cmd_optimize(&common, tol, max_iters, seed),
        Command::Verify {
            common,
            wente,
            trials,
            seed,
            tol,
            max_iters,
        } => {
            if wente {
                cmd_verify_wente(&common, trials, seed)
            } else {
                cmd_verify(&common, tol, max_iters)
            }
        }
        Command::Solve {
            common,
            manufactured,
            s_zero,
            tol,
            max_iters,
        } => cmd_solve(&common, manufactured, s_zero, tol, max_iters),
    }
}

struct Pipeline {
    grid: GridRef,
    surface: Box<dyn normal_torsion::geometry::Immersion>,
    spec: SurfaceSpec,
}

fn setup(common: &Common) -> Result<Pipeline> {
    let mut spec = SurfaceSpec::named(&common.surface, common.n);
    for (k, v) in &common.param {
        spec = spec.with_param(k, *v);
    }
    let surface = make_surface(&spec)?;
    let grid = DiscGrid::build(common.m)?;
    std::fs::create_dir_all(&common.out)?;
    Ok(Pipeline {
        grid,
        surface,
        spec,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn curvature_as_grassmann(s: &NormalCurvatureField, grid: &GridRef) -> GrassmannVector {
    GrassmannVector::from_fields(grid, s.n, s.s.clone())
}

fn cmd_compute(common: &Common) -> Result<i32> {
    let p = setup(common)?;
    let m = metric(p.surface.as_ref(), &p.grid)?;
    let conf = check_conformal(&m, 1e-8);
    let frame = initial_frame(p.surface.as_ref(), &p.grid)?;
    let t = torsion(&frame, &p.grid);
    let t_x = total_torsion(&m, &t);
    let l = second_fundamental(p.surface.as_ref(), &frame);
    let s = normal_curvature_from_torsion(&t, &p.grid);
    let s_ricci = normal_curvature_ricci(&l, &m);

    write_csv(&m.w, &common.out.join("metric_area_element.csv"))?;
    for (pidx, &(sg, th)) in t.pairs.iter().enumerate() {
        write_csv(&t.t[pidx].u, &common.out.join(format!("torsion_{sg}{th}_1.csv")))?;
        write_csv(&t.t[pidx].v, &common.out.join(format!("torsion_{sg}{th}_2.csv")))?;
        write_csv(&s.s[pidx], &common.out.join(format!("curvature_{sg}{th}.csv")))?;
    }

    let mut route_gap = 0.0f64;
    for pidx in 0..s.s.len() {
        route_gap = route_gap.max(s.s[pidx].sub(&s_ricci.s[pidx]).sup_norm());
    }
    let summary = json!({
        "surface": p.spec.name,
        "n": common.n,
        "grid": common.m,
        "T_X": t_x,
        "s_sup": s.sup_norm(),
        "s_l2": s.l2_norm(),
        "curvature_route_gap": route_gap,
        "conformal": conf.conformal,
        "conformal_deviation": conf.max_diag_ratio.max(conf.max_offdiag_ratio),
        "frame_orthonormality_deviation": frame.orthonormality_deviation(p.surface.as_ref()),
    });
    write_json(&common.out.join("compute_summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(0)
}

fn perturbed_frame(frame: &NormalFrame, n: usize, grid: &GridRef, seed: u64) -> Result<NormalFrame> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let npairs = n * (n - 1) / 2;
    let fns: Vec<Box<dyn Fn(f64, f64) -> f64>> = (0..npairs)
        .map(|_| {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            let c: f64 = rng.gen_range(0.5..3.0);
            Box::new(move |u: f64, v: f64| {
                (a * (c * u).sin() + b * (c * v).cos() + a * b * u * v)
                    * (1.0 - u * u - v * v)
            }) as Box<dyn Fn(f64, f64) -> f64>
        })
        .collect();
    let refs: Vec<&dyn Fn(f64, f64) -> f64> = fns.iter().map(|f| f.as_ref()).collect();
    let gauge = GaugeField::from_fns(grid, n, &refs);
    let rot = RotationField::from_gauge(&gauge, 1.0);
    apply_gauge(frame, &rot)
}

fn cmd_optimize(common: &Common, tol: f64, max_iters: usize, seed: Option<u64>) -> Result<i32> {
    let p = setup(common)?;
    let frame0 = initial_frame(p.surface.as_ref(), &p.grid)?;
    let frame0 = match seed {
        Some(s) => perturbed_frame(&frame0, common.n, &p.grid, s)?,
        None => frame0,
    };
    let opts = DescentOptions { max_iters, tol };
    let (critical, report) = gauge_descent(&frame0, &p.grid, &opts);

    let mut log = String::new();
    for it in &report.iterates {
        log.push_str(&serde_json::to_string(it)?);
        log.push('\n');
    }
    std::fs::write(common.out.join("descent_log.jsonl"), log)?;
    for (sg, comps) in critical.vecs.iter().enumerate() {
        for (c, field) in comps.iter().enumerate() {
            write_csv(field, &common.out.join(format!("frame_n{sg}_x{c}.csv")))?;
        }
    }
    let summary = json!({
        "surface": p.spec.name,
        "n": common.n,
        "grid": common.m,
        "termination": report.termination,
        "iterations": report.iterates.len() - 1,
        "final_T_X": report.final_t_x,
        "final_residual": report.final_residual,
    });
    write_json(&common.out.join("optimize_summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    let ok = report.termination == "converged" || report.termination == "already_critical";
    Ok(if ok { 0 } else { 3 })
}

fn report_entry(r: &BoundReport) -> serde_json::Value {
    json!({
        "name": r.name,
        "bound": r.bound,
        "measured": r.measured,
        "slack": r.slack,
        "pass": r.pass,
        "applicable": r.applicable,
    })
}

fn cmd_verify(common: &Common, tol: f64, max_iters: usize) -> Result<i32> {
    let p = setup(common)?;
    let frame0 = initial_frame(p.surface.as_ref(), &p.grid)?;
    let opts = DescentOptions { max_iters, tol };
    let (critical, descent) = gauge_descent(&frame0, &p.grid, &opts);
    let m = metric(p.surface.as_ref(), &p.grid)?;
    let t = torsion(&critical, &p.grid);
    let t_x = total_torsion(&m, &t);
    // pointwise Ricci route on the smooth initial frame: the norms entering
    // the bounds are gauge invariant, and this avoids differentiating the
    // optimized (possibly grid-rough) gauge
    let l = second_fundamental(p.surface.as_ref(), &frame0);
    let s_curv = normal_curvature_ricci(&l, &m);
    let s = curvature_as_grassmann(&s_curv, &p.grid);
    let s_sup = s.sup_norm();
    let tol_check = bounds::check_tolerance(&p.grid);

    let mut reports: Vec<serde_json::Value> = Vec::new();
    let mut all_pass = true;
    fn push(
        r: &BoundReport,
        reports: &mut Vec<serde_json::Value>,
        all_pass: &mut bool,
    ) {
        if r.applicable && !r.pass {
            *all_pass = false;
        }
        reports.push(report_entry(r));
    }

    // lower bound: route by the constancy of the source
    if is_constant(&s) {
        if s_sup > 1e-10 {
            let avg: Vec<f64> = s.g.iter().map(|f| f.interior[0]).collect();
            let b = lower_bound_constant(&avg, common.n)?;
            let r = BoundReport {
                name: "lower_bound_constant".into(),
                bound: t_x,
                measured: b,
                slack: t_x - b,
                pass: t_x - b >= -tol_check,
                applicable: true,
                inputs: Default::default(),
            };
            push(&r, &mut reports, &mut all_pass);
        } else {
            reports.push(json!({
                "name": "lower_bound",
                "bound": serde_json::Value::Null,
                "measured": serde_json::Value::Null,
                "slack": serde_json::Value::Null,
                "pass": true,
                "applicable": false,
            }));
        }
    } else {
        let r = lower_bound_nonconstant(&s, &p.grid, t_x)?;
        push(&r, &mut reports, &mut all_pass);
    }

    let built = build_potentials(&t, &p.grid, descent.final_residual)?;
    let g = built.g;
    let r = small_solution_upper_bound(&g, &s, &p.grid);
    push(&r, &mut reports, &mut all_pass);
    let r = linfty_bound_primary(&g, &s, &p.grid);
    push(&r, &mut reports, &mut all_pass);
    let alt = linfty_bound_alternative(&g, &s, &p.grid)?;
    push(&alt.report, &mut reports, &mut all_pass);
    let (_, zrep) = z_field(&s, &p.grid)?;
    push(&zrep, &mut reports, &mut all_pass);

    let small = smallness_condition(common.n, t_x, s_sup);
    let doc = json!({
        "surface": p.spec.name,
        "n": common.n,
        "grid": common.m,
        "T_X": t_x,
        "descent_termination": descent.termination,
        "s_sup": s_sup,
        "smallness_lhs": small.lhs,
        "smallness_satisfied": small.satisfied,
        "torsion_sup_bounded": small.satisfied,
        "bounds": reports,
    });
    write_json(&common.out.join("verify_report.json"), &doc)?;
    println!("{}", serde_json::to_string(&doc)?);
    Ok(if all_pass { 0 } else { 4 })
}

fn cmd_verify_wente(common: &Common, trials: usize, seed: u64) -> Result<i32> {
    let grid = DiscGrid::build(common.m)?;
    std::fs::create_dir_all(&common.out)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst_slack = f64::INFINITY;
    for _ in 0..trials {
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let (c0, c1, c2, c3) = (c[0], c[1], c[2], c[3]);
        let (c4, c5, c6, c7) = (c[4], c[5], c[6], c[7]);
        let a = ScalarField::from_fn(&grid, move |u, v| {
            c0 * (2.0 * u).sin() + c1 * (u + 2.0 * v).cos() + c2 * (3.0 * v).sin() + c3 * u * v
        });
        let b = ScalarField::from_fn(&grid, move |u, v| {
            c4 * (2.0 * v).cos() + c5 * (2.0 * u - v).sin() + c6 * (3.0 * u).cos() + c7 * (u - v)
        });
        let rep = wente_test(&a, &b, &grid)?;
        if !rep.pass {
            violations += 1;
        }
        worst_slack = worst_slack.min(rep.slack);
    }
    let doc = json!({
        "suite": "wente",
        "grid": common.m,
        "trials": trials,
        "seed": seed,
        "violations": violations,
        "worst_slack": worst_slack,
    });
    write_json(&common.out.join("wente_report.json"), &doc)?;
    println!("{}", serde_json::to_string(&doc)?);
    Ok(if violations == 0 { 0 } else { 4 })
}

/// Known-solution source: G* = 0.1 (sin pi u, sin pi v, uv) (1 - |w|^2)
/// with the boundary trace forced to zero, S = Delta G* + delta G*.
fn manufactured_problem(grid: &GridRef) -> (GrassmannVector, GrassmannVector) {
    let pi = std::f64::consts::PI;
    let mut gstar = GrassmannVector::zeros(grid, 3);
    gstar.g[0] = ScalarField::from_fn(grid, move |u, v| {
        0.1 * (pi * u).sin() * (1.0 - u * u - v * v)
    });
    gstar.g[1] = ScalarField::from_fn(grid, move |u, v| {
        0.1 * (pi * v).sin() * (1.0 - u * u - v * v)
    });
    gstar.g[2] = ScalarField::from_fn(grid, |u, v| 0.1 * u * v * (1.0 - u * u - v * v));
    for f in gstar.g.iter_mut() {
        for b in f.boundary.iter_mut() {
            *b = 0.0;
        }
    }
    let dg = delta_g(&gstar, grid);
    let s_fields: Vec<ScalarField> = (0..3)
        .map(|p| laplacian(&gstar.g[p]).add(&dg.g[p]))
        .collect();
    let s = GrassmannVector::from_fields(grid, 3, s_fields);
    (gstar, s)
}

fn cmd_solve(
    common: &Common,
    manufactured: bool,
    s_zero: bool,
    tol: f64,
    max_iters: usize,
) -> Result<i32> {
    let grid = DiscGrid::build(common.m)?;
    std::fs::create_dir_all(&common.out)?;
    let opts = PicardOptions {
        max_picard: max_iters,
        tol,
    };

    let (s, reference, surface_name) = if manufactured {
        if common.n != 3 {
            return Err(Error::Config(
                "the manufactured problem is defined for n = 3".into(),
            ));
        }
        let (gstar, s) = manufactured_problem(&grid);
        (s, Some(gstar), "manufactured".to_string())
    } else if s_zero {
        (
            GrassmannVector::zeros(&grid, common.n),
            None,
            "s_zero".to_string(),
        )
    } else {
        let p = setup(common)?;
        let frame = initial_frame(p.surface.as_ref(), &grid)?;
        let m = metric(p.surface.as_ref(), &grid)?;
        let l = second_fundamental(p.surface.as_ref(), &frame);
        let s_curv = normal_curvature_ricci(&l, &m);
        (curvature_as_grassmann(&s_curv, &grid), None, p.spec.name)
    };

    let (g, report) = match solve_system(&s, &grid, &opts) {
        Ok(ok) => ok,
        Err(Error::SmallnessViolated { k, sup, history }) => {
            let doc = json!({
                "surface": surface_name,
                "n": common.n,
                "grid": common.m,
                "converged": false,
                "diverged_at": k,
                "sup": sup,
                "sup_history": history,
            });
            write_json(&common.out.join("solve_report.json"), &doc)?;
            eprintln!("Picard iteration left the smallness regime at step {k} (sup {sup:.3e})");
            return Ok(3);
        }
        Err(e) => return Err(e),
    };

    for (pidx, &(sg, th)) in g.pairs.iter().enumerate() {
        write_csv(&g.g[pidx], &common.out.join(format!("g_{sg}_{th}.csv")))?;
    }
    let recovery = reference.map(|gstar| {
        let mut err = 0.0f64;
        for p in 0..g.g.len() {
            err = err.max(g.g[p].sub(&gstar.g[p]).sup_norm());
        }
        err
    });
    let doc = json!({
        "surface": surface_name,
        "n": common.n,
        "grid": common.m,
        "converged": report.converged,
        "iterations": report.iterations,
        "sup_history": report.sup_history,
        "diff_history": report.diff_history,
        "contraction": report.contraction,
        "apriori_bound": report.apriori_bound,
        "g_sup": g.sup_norm(),
        "recovery_error": recovery,
    });
    write_json(&common.out.join("solve_report.json"), &doc)?;
    println!("{}", serde_json::to_string(&doc)?);
    Ok(if report.converged { 0 } else { 3 })
}
