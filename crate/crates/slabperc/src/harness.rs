//! Monte Carlo experiment engine: crossing estimates, critical-point
//! bisection, box-crossing / one-arm / circuit / single-tree suites, and
//! the five-rectangle inequality check.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{crossing, has_surrounding_circuit, CrossingQuery};
use crate::error::{Result, SlabError};
use crate::geometry::{Region, SlabGeometry, Vertex};
use crate::gluing::{Hypothesis, LemmaReport};
use crate::invasion::{invade, StopRule};
use crate::labels::{tag_bytes, trial_stream, LabelField};
use crate::stats::{binom_se, linear_fit, wilson_ci95, LineFit};

/// One stored estimate. `wall_ms` is omitted from suite output so that
/// rerunning with a different worker count reproduces files byte for
/// byte; interactive commands may fill it in.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub experiment: String,
    pub params: serde_json::Value,
    pub estimate: f64,
    pub ci95: f64,
    pub trials: u64,
    pub successes: u64,
    pub seed: u64,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl EstimateRecord {
    fn new(
        experiment: &str,
        params: serde_json::Value,
        successes: u64,
        trials: u64,
        seed: u64,
    ) -> EstimateRecord {
        let (est, ci) = wilson_ci95(successes, trials);
        EstimateRecord {
            experiment: experiment.to_string(),
            params,
            estimate: est,
            ci95: ci,
            trials,
            successes,
            seed,
            version: crate::VERSION.to_string(),
            wall_ms: None,
        }
    }
}

/// Runs a per-trial Bernoulli experiment in parallel. Each trial draws
/// its own label stream from (cell tag, trial index), so the success
/// count is independent of scheduling and worker count.
pub fn mc_successes<F>(cell_tag: u64, trials: u64, f: F) -> u64
where
    F: Fn(u64) -> bool + Sync,
{
    (0..trials)
        .into_par_iter()
        .filter(|&trial| f(trial_stream(cell_tag, trial)))
        .count() as u64
}

fn cell_tag_for(experiment: &str, params: &serde_json::Value, seed: u64) -> u64 {
    let text = format!("{experiment}|{params}|{seed}");
    tag_bytes(text.as_bytes())
}

/// Monte Carlo estimate of the horizontal-crossing probability
/// f_p(m, n) of the slab rectangle [0,m] x [0,n] x [k].
pub fn estimate_crossing(
    k: i32,
    p: f64,
    m: i32,
    n: i32,
    trials: u64,
    seed: u64,
) -> Result<EstimateRecord> {
    if trials == 0 {
        return Err(SlabError::InvalidParameter("zero trials".into()));
    }
    if m < 1 || n < 1 {
        return Err(SlabError::InvalidParameter("need m, n >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(SlabError::InvalidParameter("p outside [0,1]".into()));
    }
    let g = SlabGeometry::new(crate::geometry::GeometryParams { k, window: [0, m, 0, n] })?;
    let q = CrossingQuery::horizontal(&g, m, n)?;
    let params = serde_json::json!({"k": k, "p": p, "m": m, "n": n});
    let tag = cell_tag_for("crossing", &params, seed);
    let successes = mc_successes(tag, trials, |stream| {
        let f = LabelField::sample(&g, seed, stream);
        let c = f.threshold(p).expect("p validated");
        crossing(&g, &c, &q)
    });
    Ok(EstimateRecord::new("crossing", params, successes, trials, seed))
}

/// Stochastic bisection for the critical point: shrink a bracket for the
/// p where f_p(n, n) crosses 1/2. When the estimate at the midpoint is
/// not decisively off 1/2 the bracket shrinks symmetrically around the
/// midpoint, otherwise it moves to the indicated half.
pub fn estimate_pc(
    k: i32,
    n: i32,
    tol: f64,
    trials_per_step: u64,
    seed: u64,
) -> Result<EstimateRecord> {
    if tol <= 0.0 {
        return Err(SlabError::InvalidParameter("tol must be positive".into()));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut step = 0u64;
    let mut last = None;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let rec = estimate_crossing(k, mid, n, n, trials_per_step, seed ^ step)?;
        let w = 0.5 * (hi - lo);
        if rec.estimate - 0.5 > 3.0 * rec.ci95 {
            // Decisively supercritical at mid: the crossing point is
            // below.
            hi = mid;
            lo = mid - w;
        } else if 0.5 - rec.estimate > 3.0 * rec.ci95 {
            lo = mid;
            hi = mid + w;
        } else {
            lo = mid - 0.5 * w;
            hi = mid + 0.5 * w;
        }
        lo = lo.max(0.0);
        hi = hi.min(1.0);
        last = Some(rec);
        step += 1;
        if step > 64 {
            break;
        }
    }
    let p_hat = 0.5 * (lo + hi);
    // Flat-response diagnostic: the final center must actually sit near
    // the crossing value 1/2.
    let check = estimate_crossing(k, p_hat, n, n, trials_per_step, seed ^ 0xffff)?;
    if (check.estimate - 0.5).abs() > 0.25 {
        return Err(SlabError::NonConvergent(format!(
            "f at bracket center {p_hat:.4} is {:.3}, far from 1/2 (bracket [{lo:.4}, {hi:.4}])",
            check.estimate
        )));
    }
    let params = serde_json::json!({
        "k": k, "n": n, "tol": tol, "lo": lo, "hi": hi,
        "trials_per_step": trials_per_step,
    });
    let (successes, trials) = last.map(|r| (r.successes, r.trials)).unwrap_or((0, 0));
    Ok(EstimateRecord {
        experiment: "pc-estimate".into(),
        params,
        estimate: p_hat,
        ci95: 0.5 * (hi - lo),
        trials,
        successes,
        seed,
        version: crate::VERSION.to_string(),
        wall_ms: None,
    })
}

/// Crossing probabilities f(n, floor(rho * n)) over a grid of aspect
/// ratios and sizes, flagged when they stay inside [0.05, 0.95] (the
/// artifact's bounded-away policy).
pub fn box_crossing_suite(
    k: i32,
    p: f64,
    rhos: &[f64],
    ns: &[i32],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateRecord>> {
    let mut out = Vec::new();
    for &rho in rhos {
        for &n in ns {
            let m = ((rho * n as f64).floor() as i32).max(1);
            let mut rec = estimate_crossing(k, p, n, m, trials, seed)?;
            rec.experiment = "box-crossing".into();
            let bounded = rec.estimate >= 0.05 && rec.estimate <= 0.95;
            rec.params = serde_json::json!({
                "k": k, "p": p, "rho": rho, "n": n, "m": m, "bounded": bounded,
            });
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct OneArmReport {
    pub records: Vec<EstimateRecord>,
    /// Fitted polynomial-decay exponent (negated log-log slope).
    pub delta_hat: f64,
    pub delta_ci95: f64,
    /// Residual sums of squares of log p against log n and against n.
    pub poly_rss: f64,
    pub exp_rss: f64,
    pub prefers_polynomial: bool,
}

/// One-arm probabilities P[inner m-ball connected to the n-ball
/// boundary] across radii, with a log-log decay fit and a
/// polynomial-versus-exponential model comparison.
pub fn one_arm_suite(
    k: i32,
    p: f64,
    m: i32,
    radii: &[i32],
    trials: u64,
    seed: u64,
) -> Result<OneArmReport> {
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SlabError::InvalidParameter("radii must be increasing".into()));
    }
    let mut records = Vec::new();
    for &n in radii {
        if n < m {
            return Err(SlabError::InvalidParameter("radius below inner ball".into()));
        }
        let g = SlabGeometry::centered(k, n)?;
        let q = CrossingQuery::one_arm(&g, m, n);
        let params = serde_json::json!({"k": k, "p": p, "m": m, "n": n});
        let tag = cell_tag_for("one-arm", &params, seed);
        let successes = mc_successes(tag, trials, |stream| {
            let f = LabelField::sample(&g, seed, stream);
            let c = f.threshold(p).expect("p validated");
            crossing(&g, &c, &q)
        });
        records.push(EstimateRecord::new("one-arm", params, successes, trials, seed));
    }
    // Radii with zero successes carry no log information; drop them from
    // the fits.
    let fit_pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.successes > 0)
        .map(|r| (r.params["n"].as_f64().unwrap(), (r.successes as f64 / r.trials as f64).ln()))
        .collect();
    let (poly, exp) = fit_models(&fit_pts);
    let poly = poly.ok_or_else(|| SlabError::NonConvergent("too few usable radii".into()))?;
    let exp = exp.ok_or_else(|| SlabError::NonConvergent("too few usable radii".into()))?;
    Ok(OneArmReport {
        records,
        delta_hat: -poly.slope,
        delta_ci95: poly.slope_ci95(),
        poly_rss: poly.rss,
        exp_rss: exp.rss,
        prefers_polynomial: poly.rss <= exp.rss,
    })
}

fn fit_models(pts: &[(f64, f64)]) -> (Option<LineFit>, Option<LineFit>) {
    let logn: Vec<f64> = pts.iter().map(|(n, _)| n.ln()).collect();
    let n: Vec<f64> = pts.iter().map(|(n, _)| *n).collect();
    let logp: Vec<f64> = pts.iter().map(|(_, lp)| *lp).collect();
    (linear_fit(&logn, &logp), linear_fit(&n, &logp))
}

/// Surrounding-circuit probabilities in the annuli A_{n,2n}, paired with
/// the complementary inner-to-outer crossing probabilities.
pub fn circuit_suite(
    k: i32,
    p: f64,
    ns: &[i32],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateRecord>> {
    let mut out = Vec::new();
    for &n in ns {
        let g = SlabGeometry::centered(k, 2 * n)?;
        let annulus = Region::annulus(0, 0, n, 2 * n)?;
        let params = serde_json::json!({"k": k, "p": p, "n": n});
        let tag = cell_tag_for("circuit", &params, seed);
        let successes = mc_successes(tag, trials, |stream| {
            let f = LabelField::sample(&g, seed, stream);
            let c = f.threshold(p).expect("p validated");
            has_surrounding_circuit(&g, &c, &annulus).expect("annulus region")
        });
        out.push(EstimateRecord::new("circuit", params.clone(), successes, trials, seed));

        let q = CrossingQuery::one_arm(&g, n, 2 * n);
        let tag = cell_tag_for("annulus-crossing", &params, seed);
        let successes = mc_successes(tag, trials, |stream| {
            let f = LabelField::sample(&g, seed, stream);
            let c = f.threshold(p).expect("p validated");
            crossing(&g, &c, &q)
        });
        out.push(EstimateRecord::new("annulus-crossing", params, successes, trials, seed));
    }
    Ok(out)
}

/// Per-trial intersection data for the stopped invasions from the origin
/// and from x, evaluated at every N of a list from a single invasion log
/// pair (common random numbers), so the estimates are exactly monotone
/// in N.
pub fn single_tree_suite(
    k: i32,
    x: Vertex,
    ns: &[i32],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateRecord>> {
    let max_n = *ns.iter().max().ok_or_else(|| SlabError::EmptySet("N list".into()))?;
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SlabError::InvalidParameter("N list must be increasing".into()));
    }
    let min_n = ns[0];
    if x.x.abs().max(x.y.abs()) > min_n {
        return Err(SlabError::InvalidParameter("x outside the smallest ball".into()));
    }
    let g = SlabGeometry::centered(k, max_n)?;
    let origin = Vertex::new(0, 0, 0);
    let params_tag = serde_json::json!({"k": k, "x": [x.x, x.y, x.z], "ns": ns});
    let tag = cell_tag_for("single-tree", &params_tag, seed);
    let per_trial: Vec<Vec<bool>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let stream = trial_stream(tag, trial);
            let f = LabelField::sample(&g, seed, stream);
            let stop = StopRule::HitBoundary { cx: 0, cy: 0, n: max_n };
            let i0 = invade(&g, &f, &origin, stop).expect("origin in window");
            let ix = invade(&g, &f, &x, stop).expect("x in window");
            // Cutoff step for each N: the full-run prefix up to the first
            // vertex at plane distance >= N is exactly the N-stopped run.
            let cutoff = |inv: &crate::invasion::InvasionState, n: i32| -> usize {
                (0..g.vertex_count())
                    .filter(|&v| {
                        let vv = g.vertex(v as u32);
                        vv.x.abs().max(vv.y.abs()) >= n && inv.added_at[v] != usize::MAX
                    })
                    .map(|v| inv.added_at[v])
                    .min()
                    .unwrap_or(usize::MAX)
            };
            ns.iter()
                .map(|&n| {
                    let (s0, sx) = (cutoff(&i0, n), cutoff(&ix, n));
                    (0..g.vertex_count()).any(|v| {
                        i0.added_at[v] != usize::MAX
                            && ix.added_at[v] != usize::MAX
                            && i0.added_at[v] <= s0
                            && ix.added_at[v] <= sx
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let successes = per_trial.iter().filter(|t| t[i]).count() as u64;
        let params = serde_json::json!({"k": k, "x": [x.x, x.y, x.z], "n": n});
        out.push(EstimateRecord::new("single-tree", params, successes, trials, seed));
    }
    Ok(out)
}

/// The five-rectangle union bound f_p(2n,4n) <= 25 f_p(n,2n)^2, valid at
/// every p, asserted at the 3-sigma level.
pub fn kesten_inequality_check(
    k: i32,
    p: f64,
    n: i32,
    trials: u64,
    seed: u64,
) -> Result<LemmaReport> {
    let big = estimate_crossing(k, p, 2 * n, 4 * n, trials, seed)?;
    let small = estimate_crossing(k, p, n, 2 * n, trials, seed)?;
    let lhs = big.successes as f64 / big.trials as f64;
    let f2 = small.successes as f64 / small.trials as f64;
    let rhs = 25.0 * f2 * f2;
    let se_lhs = binom_se(big.successes, big.trials);
    let se_rhs = 50.0 * f2 * binom_se(small.successes, small.trials);
    let se = (se_lhs * se_lhs + se_rhs * se_rhs).sqrt().max(1e-12);
    Ok(LemmaReport {
        lemma: "five-rectangles".into(),
        hypotheses: vec![Hypothesis { name: "independent-estimates".into(), holds: true, counterexample: None }],
        lhs,
        rhs,
        margin_sigma: Some((rhs - lhs) / se),
    })
}
