//! Full acceptance suite: one test per release criterion, each printing
//! a single pass/fail line (run with `--nocapture` to see them live).

use std::collections::HashSet;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;

use slabperc::connectivity::{
    crossing, disjoint_paths_check, has_surrounding_circuit, min_open_path, quadrant_ball,
    CrossingQuery,
};
use slabperc::geometry::{GeometryParams, Region, SlabGeometry, Vertex};
use slabperc::gluing::{
    find_domain_sample, glue_invasion, verify_combi0, EventPredicate, GlueContext, Monotonicity,
};
use slabperc::harness::{
    estimate_crossing, estimate_pc, kesten_inequality_check, one_arm_suite, single_tree_suite,
};
use slabperc::invasion::{invade, kruskal_mst, StopRule};
use slabperc::labels::{BondConfig, LabelField};
use slabperc::oracle;
use slabperc::plan::{run_plan, CellParams, ExperimentPlan};
use slabperc::stats::binom_se;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!("acceptance {id:02} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn geom(k: i32, window: [i32; 4]) -> SlabGeometry {
    SlabGeometry::new(GeometryParams { k, window }).unwrap()
}

struct XorShift(u64);

impl XorShift {
    fn next(&mut self) -> u64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        self.0
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

/// The finite-size critical point estimate shared by the near-critical
/// criteria; computed once per process.
fn p_hat_c() -> f64 {
    static P: OnceLock<f64> = OnceLock::new();
    *P.get_or_init(|| estimate_pc(1, 64, 0.005, 5_000, 0xACCE5508).unwrap().estimate)
}

#[test]
fn criterion_01_crossing_oracle_vs_mc() {
    // Small geometries (<= 22 edges) where the crossing probability can
    // be enumerated exactly; the MC estimate must agree within 3 sigma.
    let cases: [(i32, i32, i32); 10] = [
        (0, 2, 2),
        (0, 3, 2),
        (0, 4, 1),
        (0, 2, 1),
        (0, 3, 1),
        (1, 1, 1),
        (1, 2, 1),
        (1, 1, 2),
        (0, 2, 2),
        (1, 2, 1),
    ];
    let ps = [0.3, 0.5, 0.7];
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (i, &(k, m, n)) in cases.iter().enumerate() {
        let p = ps[i % ps.len()];
        let g = geom(k, [0, m, 0, n]);
        assert!(g.edge_count() <= 22, "instance too large for enumeration");
        let q = CrossingQuery::horizontal(&g, m, n).unwrap();
        let support: Vec<u32> = (0..g.edge_count() as u32).collect();
        let exact =
            oracle::exact_probability(&support, p, g.edge_count(), &|c| crossing(&g, c, &q));
        let rec = estimate_crossing(k, p, m, n, 100_000, 0xACCE5501 + i as u64).unwrap();
        let sigma = binom_se(rec.successes, rec.trials).max(1e-12);
        let dev = (rec.estimate - exact).abs() / sigma;
        worst = worst.max(dev);
        pass &= dev <= 3.0;
    }
    report(1, "crossing-oracle-vs-mc", pass, &format!("10 instances, worst {worst:.2} sigma"));
}

#[test]
fn criterion_02_min_path_vs_brute_force() {
    let g = geom(1, [0, 3, 0, 3]);
    let region = Region::rect(0, 3, 0, 3);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for y in 0..=3 {
        for z in 0..=1 {
            a.push(Vertex::new(0, y, z));
            b.push(Vertex::new(3, y, z));
        }
    }
    let mut mismatches = 0;
    for stream in 0..100 {
        let f = LabelField::sample(&g, 0xACCE5502, stream);
        let c = f.threshold(0.5).unwrap();
        let fast = min_open_path(&g, &c, &region, &a, &b).unwrap();
        let brute = oracle::min_path_brute(&g, &c, &region, &a, &b);
        if fast != brute {
            mismatches += 1;
        }
    }
    report(2, "min-path-vs-brute", mismatches == 0, &format!("100 configs, {mismatches} mismatches"));
}

#[test]
fn criterion_03_circuit_vs_winding_oracle() {
    let mut mismatches = 0;
    let ps = [0.3, 0.5, 0.7];
    for k in 0..=1 {
        let g = SlabGeometry::centered(k, 3).unwrap();
        let region = Region::annulus(0, 0, 1, 3).unwrap();
        for stream in 0..500u64 {
            let f = LabelField::sample(&g, 0xACCE5503 + k as u64, stream);
            let c = f.threshold(ps[stream as usize % ps.len()]).unwrap();
            let fast = has_surrounding_circuit(&g, &c, &region).unwrap();
            let brute = oracle::has_winding_cycle_oracle(&g, &c, &region);
            if fast != brute {
                mismatches += 1;
            }
        }
    }
    report(3, "circuit-vs-winding-oracle", mismatches == 0, &format!("1000 configs, {mismatches} mismatches"));
}

#[test]
fn criterion_04_invasion_kruskal_criterion_triangle() {
    let g = geom(1, [0, 2, 0, 2]);
    let mut bad = 0;
    for stream in 0..100 {
        let f = LabelField::sample(&g, 0xACCE5504, stream);
        let mst = kruskal_mst(&g, &f).edges;
        let mut crit = oracle::criterion_msf(&g, &f);
        crit.sort_unstable();
        if crit != mst {
            bad += 1;
            continue;
        }
        for v in 0..g.vertex_count() as u32 {
            let inv = invade(&g, &f, &g.vertex(v), StopRule::Exhaust).unwrap();
            let mut tree = inv.tree_edges.clone();
            tree.sort_unstable();
            if tree != mst {
                bad += 1;
                break;
            }
        }
    }
    report(4, "invasion-kruskal-criterion", bad == 0, &format!("100 fields x all starts, {bad} disagreements"));
}

#[test]
fn criterion_05_pinned_disjoint_paths_sweep() {
    // Orbit representatives of the pinned vertex z at k=1 under the
    // quadrant symmetries (coordinate swap, layer flip); positions at
    // plane coordinates >= 4 all behave like (4,4) because the radius-3
    // ball no longer meets the quadrant walls.
    let g = geom(1, [0, 1, 0, 1]);
    let (s, k) = (3, 1);
    let reps = [
        (0, 1), (0, 2), (0, 3), (0, 4), (1, 1), (1, 2), (1, 3), (1, 4),
        (2, 2), (2, 3), (2, 4), (3, 3), (3, 4), (4, 4),
    ];
    let perms = [[0usize, 1, 2], [0, 2, 1], [1, 0, 2], [2, 1, 0], [1, 2, 0], [2, 0, 1]];
    let key = |v: &Vertex| (v.x, v.y, v.z);
    let (mut checks, mut falses, mut errors) = (0u64, 0u64, 0u64);
    for &(zx, zy) in &reps {
        let z = Vertex::new(zx, zy, 0);
        let (ball, boundary) = quadrant_ball(k, &z, s);
        let domain: Vec<Vertex> = ball.into_iter().filter(|v| *v != z).collect();
        let ends: Vec<Vertex> = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)]
            .iter()
            .map(|d| Vertex::new(z.x + d.0, z.y + d.1, z.z + d.2))
            .filter(|v| domain.contains(v))
            .collect();

        // Goal families: tightly clustered triples (the adversarial
        // shape: three targets crowding one corner of the ball), evenly
        // spread triples, and seeded random triples.
        let mut goal_triples: HashSet<[(i32, i32, i32); 3]> = HashSet::new();
        let mut add = |a: &Vertex, b: &Vertex, c: &Vertex| {
            let mut t = [key(a), key(b), key(c)];
            t.sort_unstable();
            if t[0] != t[1] && t[1] != t[2] {
                goal_triples.insert(t);
            }
        };
        for b0 in &boundary {
            let near: Vec<&Vertex> = boundary
                .iter()
                .filter(|v| (v.x - b0.x).abs() <= 1 && (v.y - b0.y).abs() <= 1)
                .collect();
            for i in 0..near.len() {
                for j in i + 1..near.len() {
                    for l in j + 1..near.len() {
                        add(near[i], near[j], near[l]);
                    }
                }
            }
        }
        let mut ring = boundary.clone();
        ring.sort_by(|a, b| {
            let ang = |v: &Vertex| {
                ((v.y - z.y) as f64).atan2((v.x - z.x) as f64)
            };
            ang(a).partial_cmp(&ang(b)).unwrap().then(key(a).cmp(&key(b)))
        });
        let third = ring.len() / 3;
        for i in 0..ring.len() {
            add(&ring[i], &ring[(i + third) % ring.len()], &ring[(i + 2 * third) % ring.len()]);
        }
        let mut rng = XorShift(0xACCE5505 ^ ((zx as u64) << 8) ^ zy as u64);
        for _ in 0..40 {
            let (i, j, l) = (
                rng.below(boundary.len()),
                rng.below(boundary.len()),
                rng.below(boundary.len()),
            );
            add(&boundary[i], &boundary[j], &boundary[l]);
        }

        for triple in &goal_triples {
            let goals: Vec<Vertex> = triple.iter().map(|&(x, y, zz)| Vertex::new(x, y, zz)).collect();
            for i in 0..ends.len() {
                for j in i + 1..ends.len() {
                    for l in j + 1..ends.len() {
                        let eset = [ends[i], ends[j], ends[l]];
                        if goals.iter().any(|t| eset.contains(t)) {
                            continue;
                        }
                        for p in &perms {
                            checks += 1;
                            match disjoint_paths_check(
                                &g,
                                s,
                                &z,
                                eset,
                                [goals[p[0]], goals[p[1]], goals[p[2]]],
                            ) {
                                Ok(true) => {}
                                Ok(false) => falses += 1,
                                Err(_) => errors += 1,
                            }
                        }
                    }
                }
            }
        }
    }
    report(
        5,
        "pinned-disjoint-paths-sweep",
        falses == 0 && errors == 0 && checks > 0,
        &format!("{checks} admissible tuples, {falses} unroutable, {errors} search failures"),
    );
}

#[test]
fn criterion_06_comparison_lemma_instances() {
    // Exact rational verification of the event-mapping comparison bound
    // on constructed instances, plus a negative control whose broken
    // fiber hypothesis must be flagged.
    let rat = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));

    // A = {0,1 open} included in B = {0 open}; identity map, s=0, t=1.
    let a = EventPredicate::bond("both-open", vec![0, 1], Monotonicity::Increasing, |c| {
        c.is_open(0) && c.is_open(1)
    });
    let b = EventPredicate::bond("first-open", vec![0, 1], Monotonicity::Increasing, |c| {
        c.is_open(0)
    });
    let r1 = verify_combi0(&a, &b, &|c| vec![c.clone()], 0, 1.0, &rat(1, 3), &[0, 1], 4).unwrap();

    // Phi opens edge 0: A = {0 closed}, B = {0 open}, s=1.
    let a = EventPredicate::bond("closed", vec![0], Monotonicity::Decreasing, |c| !c.is_open(0));
    let b = EventPredicate::bond("open", vec![0], Monotonicity::Increasing, |c| c.is_open(0));
    let phi = |c: &BondConfig| {
        let mut m = c.clone();
        m.set_open(0, true);
        vec![m]
    };
    let r2 = verify_combi0(&a, &b, &phi, 1, 1.0, &rat(1, 2), &[0], 4).unwrap();

    // Six-edge support: Phi opens the two closed edges of A, s=2.
    let a = EventPredicate::bond("gap", vec![0, 1, 2], Monotonicity::Neither, |c| {
        !c.is_open(0) && !c.is_open(1) && c.is_open(2)
    });
    let b = EventPredicate::bond("filled", vec![0, 1, 2], Monotonicity::Increasing, |c| {
        c.is_open(0) && c.is_open(1) && c.is_open(2)
    });
    let phi = |c: &BondConfig| {
        let mut m = c.clone();
        m.set_open(0, true);
        m.set_open(1, true);
        vec![m]
    };
    let r3 =
        verify_combi0(&a, &b, &phi, 2, 1.0, &rat(2, 5), &[0, 1, 2, 3, 4, 5], 8).unwrap();

    // Negative control: collapsing map whose fibers differ on 2 edges
    // while s=1 is claimed.
    let a = EventPredicate::bond("any", vec![0, 1], Monotonicity::Neither, |_| true);
    let b = EventPredicate::bond("open01", vec![0, 1], Monotonicity::Increasing, |c| {
        c.is_open(0) && c.is_open(1)
    });
    let phi = |c: &BondConfig| {
        let mut m = c.clone();
        m.set_open(0, true);
        m.set_open(1, true);
        vec![m]
    };
    let r4 = verify_combi0(&a, &b, &phi, 1, 1.0, &rat(1, 2), &[0, 1], 4).unwrap();
    let flagged = r4.hypotheses.iter().any(|h| h.name.contains("fiber") && !h.holds);

    let pass = r1.ok() && r2.ok() && r3.ok() && !r4.ok() && flagged;
    report(6, "comparison-lemma-exact", pass, "3 verified instances + flagged negative control");
}

#[test]
fn criterion_07_glue_surgery_contract() {
    let g = SlabGeometry::centered(1, 8).unwrap();
    let xs = [
        Vertex::new(2, 0, 0),
        Vertex::new(1, 1, 0),
        Vertex::new(0, 2, 1),
        Vertex::new(-1, 0, 1),
        Vertex::new(0, -2, 0),
    ];
    let ps = [0.25, 0.3, 0.35, 0.4];
    let mut violations = 0;
    let mut samples = 0;
    'outer: for round in 0..200u64 {
        for (i, &x) in xs.iter().enumerate() {
            let ctx = GlueContext::standard(x, ps[(round as usize + i) % ps.len()]);
            let seed = 0xACCE5507 ^ round << 8 ^ i as u64;
            let (_, field) = find_domain_sample(&g, &ctx, seed, 0, 512).unwrap();
            let rep = glue_invasion(&g, &field, &ctx).unwrap();
            if !rep.contract_ok() || rep.declared_s.len() > 13 {
                violations += 1;
            }
            samples += 1;
            if samples >= 1000 {
                break 'outer;
            }
        }
    }
    report(
        7,
        "glue-surgery-contract",
        samples >= 1000 && violations == 0,
        &format!("{samples} sampled domain configurations, {violations} contract violations"),
    );
}

#[test]
fn criterion_08_box_crossing_at_criticality() {
    let p = p_hat_c();
    let mut pass = true;
    let mut lines = Vec::new();
    for &n in &[8, 16, 32] {
        for &(m, h) in &[(n, n), (2 * n, n), (n, 2 * n)] {
            let rec = estimate_crossing(1, p, m, h, 10_000, 0xACCE5508).unwrap();
            let ok = rec.estimate >= 0.05 && rec.estimate <= 0.95;
            pass &= ok;
            lines.push(format!("f({m},{h})={:.3}", rec.estimate));
        }
    }
    report(8, "box-crossing-at-pc", pass, &format!("p_hat={p:.4}; {}", lines.join(" ")));
}

#[test]
fn criterion_09_one_arm_polynomial_decay() {
    let p = p_hat_c();
    let radii = [4, 8, 16, 32, 64];
    let crit = one_arm_suite(1, p, 2, &radii, 6_000, 0xACCE5509).unwrap();
    let sub = one_arm_suite(1, p - 0.1, 2, &radii, 6_000, 0xACCE5509).unwrap();
    let ci_excludes_zero = crit.delta_hat - crit.delta_ci95 > 0.0;
    let pass = crit.delta_hat > 0.0 && ci_excludes_zero && !sub.prefers_polynomial;
    report(
        9,
        "one-arm-decay",
        pass,
        &format!(
            "delta_hat={:.3}+-{:.3} at p_hat={p:.4}; subcritical prefers_polynomial={}",
            crit.delta_hat, crit.delta_ci95, sub.prefers_polynomial
        ),
    );
}

#[test]
fn criterion_10_five_rectangle_inequality() {
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for k in 0..=1 {
        for &p in &[0.4, 0.5] {
            let rep = kesten_inequality_check(k, p, 8, 10_000, 0xACCE550A).unwrap();
            pass &= rep.ok();
            worst = worst.min(rep.margin_sigma.unwrap_or(f64::INFINITY));
        }
    }
    report(10, "five-rectangle-inequality", pass, &format!("4 cells, worst margin {worst:.1} sigma"));
}

#[test]
fn criterion_11_single_tree_trend() {
    let recs =
        single_tree_suite(1, Vertex::new(4, 0, 0), &[4, 8, 16, 32, 64], 1_000, 0xACCE550B)
            .unwrap();
    let monotone = recs.windows(2).all(|w| w[0].successes <= w[1].successes);
    let last = recs.last().unwrap().estimate;
    // High-precision reruns (3 x 5000 trials, seeds 1..3) put the true rate
    // at N=64 near 0.893 +- 0.005, just under the 0.9 policy threshold, so
    // this criterion can fail honestly at the pinned parameters.
    report(
        11,
        "single-tree-trend",
        monotone && last >= 0.9,
        &format!(
            "monotone={monotone}, intersection rate {:.3} -> {last:.3} over N=4..64 (policy threshold 0.9)",
            recs.first().unwrap().estimate
        ),
    );
}

#[test]
fn criterion_12_worker_count_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1usize, 4] {
        let out = dir.path().join(format!("records-{workers}.jsonl"));
        let plan = ExperimentPlan {
            experiment: "crossing".into(),
            grid: vec![
                CellParams { k: 0, p: Some(0.45), m: Some(8), n: Some(8), ..Default::default() },
                CellParams { k: 1, p: Some(0.5), m: Some(8), n: Some(6), ..Default::default() },
                CellParams { k: 1, p: Some(0.55), m: Some(6), n: Some(8), ..Default::default() },
            ],
            trials: 2_000,
            seed: 0xACCE550C,
            out: Some(out.clone()),
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().unwrap();
        pool.install(|| run_plan(&plan).unwrap());
        outputs.push(std::fs::read(&out).unwrap());
    }
    let identical = outputs[0] == outputs[1];
    report(
        12,
        "worker-count-determinism",
        identical && !outputs[0].is_empty(),
        &format!("{} bytes, 1 vs 4 workers", outputs[0].len()),
    );
}
