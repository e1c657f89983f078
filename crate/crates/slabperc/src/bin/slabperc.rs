//! Command-line front end: experiments, invasion/forest exports, lemma
//! verifiers, and SVG plots.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use slabperc::connectivity::{crossing, CrossingQuery};
use slabperc::geometry::{GeometryParams, Region, SlabGeometry, Vertex};
use slabperc::gluing::{self, EventPredicate, GlueContext, Monotonicity};
use slabperc::harness::{self, EstimateRecord};
use slabperc::invasion::{self, ForestFlavor, StopRule};
use slabperc::labels::LabelField;
use slabperc::plan::ExperimentPlan;
use slabperc::plot;
use slabperc::{Result, SlabError};

#[derive(Parser)]
#[command(name = "slabperc", version, about = "Percolation laboratory on slab graphs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SLABPERC_WORKERS")]
    workers: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true, env = "SLABPERC_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "jsonl", env = "SLABPERC_FORMAT")]
    format: Format,
    /// Record wall-clock time in the output records.
    #[arg(long, global = true)]
    timing: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Jsonl,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long, default_value_t = 1, env = "SLABPERC_K")]
    k: i32,
    #[arg(long, default_value_t = 1000, env = "SLABPERC_TRIALS")]
    trials: u64,
    #[arg(long, default_value_t = 0, env = "SLABPERC_SEED")]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a label field and write the binary dump.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Window radius: the window is [-n,n]^2.
        #[arg(long, default_value_t = 8)]
        n: i32,
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Estimate the horizontal crossing probability f_p(m, n).
    Crossing {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "SLABPERC_P")]
        p: f64,
        #[arg(long)]
        m: i32,
        #[arg(long)]
        n: i32,
    },
    /// Bisection estimate of the critical point.
    PcEstimate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 64)]
        n: i32,
        #[arg(long, default_value_t = 0.005)]
        tol: f64,
    },
    /// f(n, floor(rho n)) over grids of rho and n.
    BoxCrossing {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "SLABPERC_P")]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        rho: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        n: Vec<i32>,
    },
    /// One-arm probabilities and decay fit.
    OneArm {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "SLABPERC_P")]
        p: f64,
        #[arg(long, default_value_t = 2)]
        m: i32,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        radii: Vec<i32>,
    },
    /// Surrounding-circuit probabilities in A_{n,2n}.
    Circuit {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "SLABPERC_P")]
        p: f64,
        #[arg(long, value_delimiter = ',', default_value = "4,8,16")]
        n: Vec<i32>,
    },
    /// Intersection probability of the stopped invasions from 0 and x.
    SingleTree {
        #[command(flatten)]
        common: Common,
        /// Second source, as x,y,z.
        #[arg(long, value_delimiter = ',', default_value = "4,0,0")]
        x: Vec<i32>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        radii: Vec<i32>,
    },
    /// Run one invasion and export its step log as CSV.
    Invade {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        n: i32,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Start vertex, as x,y,z.
        #[arg(long, value_delimiter = ',', default_value = "0,0,0")]
        start: Vec<i32>,
        /// Stop at this plane radius (0 = exhaust the window).
        #[arg(long, default_value_t = 0)]
        stop: i32,
    },
    /// Minimal spanning tree / window forests as JSON edge lists.
    Msf {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        n: i32,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long, value_enum, default_value = "mst")]
        flavor: FlavorArg,
        /// Window radius for the free/wired flavors.
        #[arg(long, default_value_t = 4)]
        window: i32,
    },
    /// Run the lemma verifiers and gluing contract checks.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.45, env = "SLABPERC_P")]
        p: f64,
        /// Domain samples to put through the surgery.
        #[arg(long, default_value_t = 25)]
        surgeries: u64,
    },
    /// Execute a JSON experiment plan.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render records from a JSON-lines file as an SVG chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FlavorArg {
    Mst,
    Free,
    Wired,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    OneArm,
    BoxCrossing,
    SingleTree,
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn write_records(
    records: &[EstimateRecord],
    format: Format,
    out: &Option<PathBuf>,
) -> Result<()> {
    let mut w = sink(out)?;
    match format {
        Format::Jsonl => {
            for r in records {
                writeln!(w, "{}", serde_json::to_string(r)?)?;
            }
        }
        Format::Csv => {
            writeln!(w, "experiment,params,estimate,ci95,trials,successes,seed,version")?;
            for r in records {
                let params = serde_json::to_string(&r.params)?.replace('"', "\"\"");
                writeln!(
                    w,
                    "{},\"{}\",{},{},{},{},{},{}",
                    r.experiment, params, r.estimate, r.ci95, r.trials, r.successes, r.seed,
                    r.version
                )?;
            }
        }
    }
    Ok(())
}

fn vertex_arg(v: &[i32], name: &str) -> Result<Vertex> {
    if v.len() != 3 {
        return Err(SlabError::InvalidParameter(format!("{name} needs x,y,z")));
    }
    Ok(Vertex::new(v[0], v[1], v[2]))
}

fn stamp(records: &mut [EstimateRecord], timing: bool, started: Instant) {
    if timing {
        let ms = started.elapsed().as_millis() as u64;
        for r in records {
            r.wall_ms = Some(ms);
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| SlabError::InvalidParameter(e.to_string()))?;
    }
    let started = Instant::now();
    match cli.cmd {
        Cmd::Sample { common, n, stream } => {
            let g = SlabGeometry::centered(common.k, n)?;
            let f = LabelField::sample(&g, common.seed, stream);
            let mut w = sink(&cli.out)?;
            f.write_dump(&g, &mut w)?;
        }
        Cmd::Crossing { common, p, m, n } => {
            let mut recs =
                vec![harness::estimate_crossing(common.k, p, m, n, common.trials, common.seed)?];
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::PcEstimate { common, n, tol } => {
            let mut recs =
                vec![harness::estimate_pc(common.k, n, tol, common.trials, common.seed)?];
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::BoxCrossing { common, p, rho, n } => {
            let mut recs =
                harness::box_crossing_suite(common.k, p, &rho, &n, common.trials, common.seed)?;
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::OneArm { common, p, m, radii } => {
            let rep = harness::one_arm_suite(common.k, p, m, &radii, common.trials, common.seed)?;
            eprintln!(
                "delta = {:.4} +- {:.4}; rss poly {:.4} vs exp {:.4} ({})",
                rep.delta_hat,
                rep.delta_ci95,
                rep.poly_rss,
                rep.exp_rss,
                if rep.prefers_polynomial { "polynomial" } else { "exponential" }
            );
            let mut recs = rep.records;
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::Circuit { common, p, n } => {
            let mut recs = harness::circuit_suite(common.k, p, &n, common.trials, common.seed)?;
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::SingleTree { common, x, radii } => {
            let x = vertex_arg(&x, "--x")?;
            let mut recs =
                harness::single_tree_suite(common.k, x, &radii, common.trials, common.seed)?;
            stamp(&mut recs, cli.timing, started);
            write_records(&recs, cli.format, &cli.out)?;
        }
        Cmd::Invade { common, n, stream, start, stop } => {
            let g = SlabGeometry::centered(common.k, n)?;
            let f = LabelField::sample(&g, common.seed, stream);
            let start = vertex_arg(&start, "--start")?;
            let rule = if stop > 0 {
                StopRule::HitBoundary { cx: 0, cy: 0, n: stop }
            } else {
                StopRule::Exhaust
            };
            let state = invasion::invade(&g, &f, &start, rule)?;
            let mut w = sink(&cli.out)?;
            state.write_csv(&g, &mut w)?;
        }
        Cmd::Msf { common, n, stream, flavor, window } => {
            let g = SlabGeometry::centered(common.k, n)?;
            let f = LabelField::sample(&g, common.seed, stream);
            let forest = match flavor {
                FlavorArg::Mst => invasion::kruskal_mst(&g, &f),
                FlavorArg::Free => invasion::msf_window(
                    &g,
                    &f,
                    &Region::ball(0, 0, window),
                    ForestFlavor::FreeWindow,
                )?,
                FlavorArg::Wired => invasion::msf_window(
                    &g,
                    &f,
                    &Region::ball(0, 0, window),
                    ForestFlavor::WiredWindow,
                )?,
            };
            let mut w = sink(&cli.out)?;
            forest.write_json(&g, &mut w)?;
            writeln!(w)?;
        }
        Cmd::Verify { common, p, surgeries } => {
            run_verify(common, p, surgeries, &cli.out)?;
        }
        Cmd::Run { config } => {
            let plan = ExperimentPlan::from_file(&config)?;
            let recs = slabperc::plan::run_plan(&plan)?;
            if plan.out.is_none() {
                write_records(&recs, cli.format, &cli.out)?;
            } else {
                eprintln!("wrote {} records to {:?}", recs.len(), plan.out);
            }
        }
        Cmd::Plot { input, kind } => {
            let file = File::open(&input)?;
            let mut records = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    records.push(serde_json::from_str::<EstimateRecord>(&line)?);
                }
            }
            let svg = match kind {
                PlotKind::BoxCrossing => plot::box_crossing_plot(&records),
                PlotKind::SingleTree => plot::single_tree_plot(&records),
                PlotKind::OneArm => {
                    // Rebuild the fit from the stored records.
                    let pts: Vec<(f64, f64)> = records
                        .iter()
                        .filter(|r| r.successes > 0)
                        .map(|r| {
                            (
                                r.params["n"].as_f64().unwrap_or(1.0),
                                (r.successes as f64 / r.trials as f64).ln(),
                            )
                        })
                        .collect();
                    let logn: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
                    let logp: Vec<f64> = pts.iter().map(|p| p.1).collect();
                    let fit = slabperc::stats::linear_fit(&logn, &logp).ok_or_else(|| {
                        SlabError::NonConvergent("too few points for the one-arm fit".into())
                    })?;
                    let n_fit = slabperc::stats::linear_fit(
                        &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
                        &logp,
                    )
                    .ok_or_else(|| {
                        SlabError::NonConvergent("too few points for the one-arm fit".into())
                    })?;
                    let rep = harness::OneArmReport {
                        records,
                        delta_hat: -fit.slope,
                        delta_ci95: fit.slope_ci95(),
                        poly_rss: fit.rss,
                        exp_rss: n_fit.rss,
                        prefers_polynomial: fit.rss <= n_fit.rss,
                    };
                    plot::one_arm_plot(&rep)
                }
            };
            let mut w = sink(&cli.out)?;
            w.write_all(svg.as_bytes())?;
        }
    }
    Ok(())
}

/// The `verify` suite: exact discrete lemma instances, a continuous
/// instance, the FKG/square-root probes, and sampled surgery contracts.
fn run_verify(common: Common, p: f64, surgeries: u64, out: &Option<PathBuf>) -> Result<()> {
    use num_bigint::BigInt;
    use num_rational::BigRational;

    let mut w = sink(out)?;

    // Exact discrete instance: force one edge open.
    let a = EventPredicate::bond("edge-closed", vec![0], Monotonicity::Decreasing, |c| {
        !c.is_open(0)
    });
    let b = EventPredicate::bond("edge-open", vec![0], Monotonicity::Increasing, |c| c.is_open(0));
    let phi = |c: &slabperc::labels::BondConfig| {
        let mut m = c.clone();
        m.set_open(0, true);
        vec![m]
    };
    let half = BigRational::new(BigInt::from(1), BigInt::from(2));
    let rep = gluing::verify_combi0(&a, &b, &phi, 1, 1.0, &half, &[0], 2)?;
    writeln!(w, "{}", serde_json::to_string(&rep)?)?;

    // Continuous instance on a single label.
    let (aa, bb) = (0.6, 0.7);
    let a_ev =
        EventPredicate::label("label-above", vec![0], Monotonicity::Neither, move |f| {
            f.get(0) > aa
        });
    let b_ev =
        EventPredicate::label("label-below", vec![0], Monotonicity::Neither, move |f| {
            f.get(0) < aa
        });
    let phi = move |f: &LabelField| f.affine_open(&[0], aa);
    let rep = gluing::verify_combi(
        &a_ev, &b_ev, &phi, 1, aa, bb, &[0], 1, common.trials.max(1000), common.seed,
    )?;
    writeln!(w, "{}", serde_json::to_string(&rep)?)?;

    // FKG probe: horizontal and vertical crossings of a small box.
    let g = SlabGeometry::new(GeometryParams { k: common.k, window: [0, 4, 0, 4] })?;
    let qh = CrossingQuery::horizontal(&g, 4, 4)?;
    let qv = CrossingQuery::vertical(&g, 4, 4)?;
    let support: Vec<u32> = (0..g.edge_count() as u32).collect();
    let gh = g.clone();
    let gv = g.clone();
    let events = vec![
        EventPredicate::bond("horizontal", support.clone(), Monotonicity::Increasing, move |c| {
            crossing(&gh, c, &qh)
        }),
        EventPredicate::bond("vertical", support, Monotonicity::Increasing, move |c| {
            crossing(&gv, c, &qv)
        }),
    ];
    let rep =
        gluing::fkg_and_sqrt_check(&events, g.edge_count(), 0.5, common.trials.max(1000), common.seed)?;
    writeln!(w, "{}", serde_json::to_string(&rep)?)?;

    // Surgery contracts on sampled domain configurations.
    let g = SlabGeometry::centered(1, 8)?;
    let ctx = GlueContext::standard(Vertex::new(7, 0, 0), p);
    let mut stream = 0u64;
    let mut ok = 0u64;
    for _ in 0..surgeries {
        let (found, f) = gluing::find_domain_sample(&g, &ctx, common.seed, stream, 100_000)?;
        stream = found + 1;
        let rep = gluing::glue_invasion(&g, &f, &ctx)?;
        if rep.contract_ok() {
            ok += 1;
        } else {
            writeln!(w, "{{\"surgery_violation_stream\": {found}}}")?;
        }
    }
    writeln!(
        w,
        "{{\"lemma\": \"glue-contract\", \"checked\": {surgeries}, \"ok\": {ok}}}"
    )?;
    Ok(())
}
