//! Local-modification machinery: the plus-cylinder invasion surgery,
//! event predicates with declared supports, and verifiers for the exact
//! and continuous combinatorial comparison lemmas plus the FKG /
//! square-root-trick checks.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::connectivity::{
    clusters, crossing, min_surrounding_circuit, winding_components, CrossingQuery,
};
use crate::error::{Result, SlabError};
use crate::geometry::{EdgeId, PathOrCircuit, Region, SlabGeometry, Vertex, VertexId};
use crate::invasion::{invade, InvasionState, StopRule};
use crate::labels::{label_f64, BondConfig, LabelField};
use crate::stats::binom_se;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Neither,
}

#[derive(Clone)]
pub enum Evaluator {
    Bond(Arc<dyn Fn(&BondConfig) -> bool + Send + Sync>),
    Label(Arc<dyn Fn(&LabelField) -> bool + Send + Sync>),
}

/// An event with a declared edge support and monotonicity tag. The
/// evaluator must depend only on the support; `validate_support` probes
/// this by mutating edges outside it.
#[derive(Clone)]
pub struct EventPredicate {
    pub name: String,
    pub support: Vec<EdgeId>,
    pub monotonicity: Monotonicity,
    pub eval: Evaluator,
}

impl EventPredicate {
    pub fn bond<F>(name: &str, support: Vec<EdgeId>, mono: Monotonicity, f: F) -> EventPredicate
    where
        F: Fn(&BondConfig) -> bool + Send + Sync + 'static,
    {
        EventPredicate {
            name: name.to_string(),
            support,
            monotonicity: mono,
            eval: Evaluator::Bond(Arc::new(f)),
        }
    }

    pub fn label<F>(name: &str, support: Vec<EdgeId>, mono: Monotonicity, f: F) -> EventPredicate
    where
        F: Fn(&LabelField) -> bool + Send + Sync + 'static,
    {
        EventPredicate {
            name: name.to_string(),
            support,
            monotonicity: mono,
            eval: Evaluator::Label(Arc::new(f)),
        }
    }

    pub fn eval_bond(&self, c: &BondConfig) -> Result<bool> {
        match &self.eval {
            Evaluator::Bond(f) => Ok(f(c)),
            Evaluator::Label(_) => Err(SlabError::InvalidParameter(format!(
                "event {} evaluates label fields, not bond configs",
                self.name
            ))),
        }
    }

    pub fn eval_label(&self, f: &LabelField) -> Result<bool> {
        match &self.eval {
            Evaluator::Label(g) => Ok(g(f)),
            Evaluator::Bond(_) => Err(SlabError::InvalidParameter(format!(
                "event {} evaluates bond configs, not label fields",
                self.name
            ))),
        }
    }

    /// Mutation probe: flipping or resampling any edge outside the
    /// declared support must never change the evaluation.
    pub fn validate_support(&self, total_edges: usize, rounds: u64, seed: u64) -> Result<()> {
        let in_support: HashSet<EdgeId> = self.support.iter().copied().collect();
        let outside: Vec<EdgeId> = (0..total_edges as EdgeId)
            .filter(|e| !in_support.contains(e))
            .collect();
        for round in 0..rounds {
            match &self.eval {
                Evaluator::Bond(f) => {
                    let mut c = BondConfig::all_closed(total_edges);
                    for e in 0..total_edges as EdgeId {
                        c.set_open(e, label_f64(seed, round, e as u64) < 0.5);
                    }
                    let base = f(&c);
                    for &e in &outside {
                        let mut m = c.clone();
                        m.set_open(e, !m.is_open(e));
                        if f(&m) != base {
                            return Err(SlabError::InvalidParameter(format!(
                                "event {} depends on edge {} outside its support",
                                self.name, e
                            )));
                        }
                    }
                }
                Evaluator::Label(f) => {
                    let labels: Vec<f64> = (0..total_edges)
                        .map(|e| label_f64(seed, round, e as u64))
                        .collect();
                    let field = LabelField::from_labels(labels);
                    let base = f(&field);
                    for &e in &outside {
                        let mut m = field.clone();
                        m.set(e, label_f64(seed ^ 0x9e37, round, e as u64));
                        if f(&m) != base {
                            return Err(SlabError::InvalidParameter(format!(
                                "event {} depends on edge {} outside its support",
                                self.name, e
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Mutation probe of the monotonicity tag for bond events: for an
    /// increasing event, opening any support edge must never turn the
    /// event off (dually for decreasing).
    pub fn validate_monotonicity(&self, total_edges: usize, rounds: u64, seed: u64) -> Result<()> {
        let f = match &self.eval {
            Evaluator::Bond(f) => f,
            Evaluator::Label(_) => {
                return Err(SlabError::InvalidParameter(
                    "monotonicity probe needs a bond evaluator".into(),
                ))
            }
        };
        if self.monotonicity == Monotonicity::Neither {
            return Ok(());
        }
        for round in 0..rounds {
            let mut c = BondConfig::all_closed(total_edges);
            for e in 0..total_edges as EdgeId {
                c.set_open(e, label_f64(seed, round, e as u64) < 0.5);
            }
            for &e in &self.support {
                let mut lo = c.clone();
                lo.set_open(e, false);
                let mut hi = lo.clone();
                hi.set_open(e, true);
                let (vlo, vhi) = (f(&lo), f(&hi));
                let ok = match self.monotonicity {
                    Monotonicity::Increasing => !vlo || vhi,
                    Monotonicity::Decreasing => !vhi || vlo,
                    Monotonicity::Neither => true,
                };
                if !ok {
                    return Err(SlabError::InvalidParameter(format!(
                        "event {} tagged {:?} but flipping edge {} falsifies the tag",
                        self.name, self.monotonicity, e
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Hypothesis {
    pub name: String,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<String>,
}

impl Hypothesis {
    fn ok(name: &str) -> Hypothesis {
        Hypothesis { name: name.to_string(), holds: true, counterexample: None }
    }

    fn bad(name: &str, why: String) -> Hypothesis {
        Hypothesis { name: name.to_string(), holds: false, counterexample: Some(why) }
    }
}

/// Verifier outcome for one lemma instance. `margin_sigma` is None for
/// exact (rational) verifications and the inequality margin in combined
/// standard deviations for Monte Carlo ones.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub hypotheses: Vec<Hypothesis>,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_sigma: Option<f64>,
}

impl LemmaReport {
    /// Hypotheses all hold and the conclusion holds (exactly, or at the
    /// 3-sigma level for Monte Carlo reports).
    pub fn ok(&self) -> bool {
        self.hypotheses.iter().all(|h| h.holds)
            && match self.margin_sigma {
                None => self.lhs <= self.rhs,
                Some(m) => m >= -3.0,
            }
    }
}

fn rational_prob(mask: u64, support_len: usize, p: &BigRational) -> BigRational {
    let mut out = BigRational::one();
    let q = BigRational::one() - p;
    for i in 0..support_len {
        if mask >> i & 1 == 1 {
            out *= p;
        } else {
            out *= &q;
        }
    }
    out
}

/// Exact verification of the discrete comparison lemma: a map Φ from
/// event A into subevents of B such that images have size >= t and each
/// fiber is pinned outside a set of at most s edges implies
/// P[A] <= (1/t) (2/min(p,1-p))^s P[B]. Everything is enumerated over
/// the declared support and computed in exact rational arithmetic.
#[allow(clippy::too_many_arguments)]
pub fn verify_combi0(
    a: &EventPredicate,
    b: &EventPredicate,
    phi: &dyn Fn(&BondConfig) -> Vec<BondConfig>,
    s: usize,
    t: f64,
    p: &BigRational,
    support: &[EdgeId],
    total_edges: usize,
) -> Result<LemmaReport> {
    let n = support.len();
    if n > 22 {
        return Err(SlabError::InvalidParameter(format!(
            "support of {n} edges exceeds the exhaustive-enumeration cap of 22"
        )));
    }
    if !(p > &BigRational::zero() && p < &BigRational::one()) {
        return Err(SlabError::InvalidParameter("p must lie in (0,1)".into()));
    }
    if t <= 0.0 {
        return Err(SlabError::InvalidParameter("t must be positive".into()));
    }
    let t_rat = BigRational::from_float(t)
        .ok_or_else(|| SlabError::InvalidParameter("t not finite".into()))?;

    let make = |mask: u64| {
        let mut c = BondConfig::all_closed(total_edges);
        for (i, &e) in support.iter().enumerate() {
            c.set_open(e, mask >> i & 1 == 1);
        }
        c
    };
    let mask_of = |c: &BondConfig| -> Option<u64> {
        // Reject configurations that stray outside the support.
        let mut mask = 0u64;
        let mut open_in_support = 0usize;
        for (i, &e) in support.iter().enumerate() {
            if c.is_open(e) {
                mask |= 1 << i;
                open_in_support += 1;
            }
        }
        (c.open_count() == open_in_support).then_some(mask)
    };

    let mut hyp1 = Hypothesis::ok("images-are-subevents-of-B-with-size-t");
    let mut hyp2 = Hypothesis::ok("fibers-pinned-outside-s-edges");
    let mut pa = BigRational::zero();
    let mut pb = BigRational::zero();
    let mut in_a = vec![false; 1usize << n];
    let mut in_b = vec![false; 1usize << n];
    let mut fibers: HashMap<u64, u64> = HashMap::new(); // image mask -> xor union

    for mask in 0..(1u64 << n) {
        let c = make(mask);
        let wa = a.eval_bond(&c)?;
        let wb = b.eval_bond(&c)?;
        in_a[mask as usize] = wa;
        in_b[mask as usize] = wb;
        if wa {
            pa += rational_prob(mask, n, p);
        }
        if wb {
            pb += rational_prob(mask, n, p);
        }
        if wa {
            let images = phi(&c);
            let mut seen = HashSet::new();
            for img in &images {
                match mask_of(img) {
                    Some(im) => {
                        seen.insert(im);
                        // The fiber of im picks up every support edge on
                        // which this preimage differs from it.
                        *fibers.entry(im).or_insert(0) |= mask ^ im;
                    }
                    None => {
                        if hyp1.holds {
                            hyp1 = Hypothesis::bad(
                                &hyp1.name,
                                format!("image of mask {mask:#b} opens an edge outside the support"),
                            );
                        }
                    }
                }
            }
            if (seen.len() as f64) < t && hyp1.holds {
                hyp1 = Hypothesis::bad(
                    &hyp1.name,
                    format!("|Phi(omega)| = {} < t = {t} at mask {mask:#b}", seen.len()),
                );
            }
            for im in seen {
                if !in_b_mask(b, &make(im))? && hyp1.holds {
                    hyp1 = Hypothesis::bad(
                        &hyp1.name,
                        format!("image mask {im:#b} of preimage {mask:#b} lies outside B"),
                    );
                }
            }
        }
    }
    for (&im, &diff) in &fibers {
        if !in_b[im as usize] && hyp1.holds {
            hyp1 = Hypothesis::bad(&hyp1.name, format!("image mask {im:#b} lies outside B"));
        }
        let size = diff.count_ones() as usize;
        if size > s && hyp2.holds {
            hyp2 = Hypothesis::bad(
                &hyp2.name,
                format!("fiber of image mask {im:#b} needs {size} pinned edges > s = {s}"),
            );
        }
    }

    // Exactness invariant: the probabilities are rationals over
    // denom(p)^n.
    let denom_pow = p.denom().pow(n as u32);
    let exact = (&denom_pow % pa.denom()).is_zero() && (&denom_pow % pb.denom()).is_zero();
    let hyp3 = if exact {
        Hypothesis::ok("denominator-exactness")
    } else {
        Hypothesis::bad(
            "denominator-exactness",
            format!("P[A] denom {} or P[B] denom {}", pa.denom(), pb.denom()),
        )
    };

    let two = BigRational::from_integer(BigInt::from(2));
    let q = BigRational::one() - p;
    let minp = if p < &q { p.clone() } else { q };
    let factor = (two / minp).pow(s as i32) / &t_rat;
    let rhs = factor * &pb;
    Ok(LemmaReport {
        lemma: "combi0".into(),
        hypotheses: vec![hyp1, hyp2, hyp3],
        lhs: pa.to_f64().unwrap_or(f64::NAN),
        rhs: rhs.to_f64().unwrap_or(f64::NAN),
        margin_sigma: None,
    })
}

fn in_b_mask(b: &EventPredicate, c: &BondConfig) -> Result<bool> {
    b.eval_bond(c)
}

/// Monte Carlo verification of the continuous comparison lemma for an
/// affine surgery Φ built from open(a)/close(b) primitives on at most s
/// edges: P[A] <= (2/(a ∧ (1-b)))^s P[B], checked at 3 sigma, together
/// with the per-fiber Jacobian volume bound.
#[allow(clippy::too_many_arguments)]
pub fn verify_combi(
    a_ev: &EventPredicate,
    b_ev: &EventPredicate,
    phi: &dyn Fn(&LabelField) -> Result<LabelField>,
    s: usize,
    a: f64,
    b: f64,
    support: &[EdgeId],
    total_edges: usize,
    trials: u64,
    seed: u64,
) -> Result<LemmaReport> {
    if !(0.0 < a && a < 1.0 && 0.0 < b && b < 1.0) {
        return Err(SlabError::InvalidParameter("need a, b in (0,1)".into()));
    }
    if trials == 0 {
        return Err(SlabError::InvalidParameter("zero trials".into()));
    }
    let in_support: HashSet<EdgeId> = support.iter().copied().collect();
    let tol = 1e-9;
    let mut na = 0u64;
    let mut nb = 0u64;
    let mut hyp_img = Hypothesis::ok("images-lie-in-B");
    let mut hyp_jac = Hypothesis::ok("jacobian-lower-bound");
    let mut max_pattern = (0usize, 0usize);
    for trial in 0..trials {
        let labels: Vec<f64> =
            (0..total_edges).map(|e| label_f64(seed, trial, e as u64)).collect();
        let field = LabelField::from_labels(labels);
        let wa = a_ev.eval_label(&field)?;
        let wb = b_ev.eval_label(&field)?;
        na += wa as u64;
        nb += wb as u64;
        if !wa {
            continue;
        }
        let out = phi(&field)?;
        let mut opens = 0usize;
        let mut closes = 0usize;
        for e in 0..total_edges as EdgeId {
            let (x, y) = (field.get(e), out.get(e));
            if x.to_bits() == y.to_bits() {
                continue;
            }
            if !in_support.contains(&e) {
                return Err(SlabError::InvalidParameter(format!(
                    "surgery changed edge {e} outside the declared support"
                )));
            }
            if (y - a * x).abs() <= tol {
                opens += 1;
            } else if (y - (b + (1.0 - b) * x)).abs() <= tol {
                closes += 1;
            } else {
                return Err(SlabError::InvalidParameter(format!(
                    "surgery on edge {e} is not an open({a}) or close({b}) primitive: {x} -> {y}"
                )));
            }
        }
        if opens + closes > s {
            return Err(SlabError::InvalidParameter(format!(
                "surgery changed {} edges, declared bound s = {s}",
                opens + closes
            )));
        }
        if opens + closes > max_pattern.0 + max_pattern.1 {
            max_pattern = (opens, closes);
        }
        let jac = a.powi(opens as i32) * (1.0 - b).powi(closes as i32);
        if jac < a.min(1.0 - b).powi(s as i32) - tol && hyp_jac.holds {
            hyp_jac = Hypothesis::bad(
                &hyp_jac.name,
                format!("fiber volume {jac:.6} below (a ∧ (1-b))^s at trial {trial}"),
            );
        }
        if !b_ev.eval_label(&out)? && hyp_img.holds {
            hyp_img =
                Hypothesis::bad(&hyp_img.name, format!("image at trial {trial} lies outside B"));
        }
    }

    // Volume cross-check for the worst observed primitive pattern: the
    // fraction of a uniform cube mapped into the image box must match
    // a^m1 (1-b)^m2 at 3 sigma.
    let (m1, m2) = max_pattern;
    let hyp_vol = if m1 + m2 == 0 {
        Hypothesis::ok("jacobian-volume-mc")
    } else {
        let mut hits = 0u64;
        for trial in 0..trials {
            let inside = (0..m1)
                .all(|i| label_f64(seed ^ 0x5bd1, trial, i as u64) < a)
                && (m1..m1 + m2).all(|i| label_f64(seed ^ 0x5bd1, trial, i as u64) >= b);
            hits += inside as u64;
        }
        let expect = a.powi(m1 as i32) * (1.0 - b).powi(m2 as i32);
        let got = hits as f64 / trials as f64;
        let se = (expect * (1.0 - expect) / trials as f64).sqrt().max(1e-12);
        if (got - expect).abs() <= 3.0 * se {
            Hypothesis::ok("jacobian-volume-mc")
        } else {
            Hypothesis::bad(
                "jacobian-volume-mc",
                format!("volume {got:.5} vs expected {expect:.5} (se {se:.5})"),
            )
        }
    };

    let factor = (2.0 / a.min(1.0 - b)).powi(s as i32);
    let pa = na as f64 / trials as f64;
    let pb = nb as f64 / trials as f64;
    let se = (binom_se(na, trials).powi(2) + (factor * binom_se(nb, trials)).powi(2))
        .sqrt()
        .max(1e-12);
    Ok(LemmaReport {
        lemma: "combi".into(),
        hypotheses: vec![hyp_img, hyp_jac, hyp_vol],
        lhs: pa,
        rhs: factor * pb,
        margin_sigma: Some((factor * pb - pa) / se),
    })
}

/// Positive-association and square-root-trick probes for a family of
/// increasing events: every pair must show empirical covariance >= -3
/// sigma, and the maximum must dominate 1 - (1 - P[union])^(1/j) at the
/// same level. Monotonicity tags are falsification-tested first.
pub fn fkg_and_sqrt_check(
    events: &[EventPredicate],
    total_edges: usize,
    p: f64,
    trials: u64,
    seed: u64,
) -> Result<LemmaReport> {
    if events.is_empty() || trials == 0 {
        return Err(SlabError::EmptySet("events or trials".into()));
    }
    for ev in events {
        if ev.monotonicity != Monotonicity::Increasing {
            return Err(SlabError::InvalidParameter(format!(
                "event {} is not tagged increasing",
                ev.name
            )));
        }
        ev.validate_monotonicity(total_edges, 32, seed ^ 0xabcd)?;
    }
    let j = events.len();
    let mut counts = vec![0u64; j];
    let mut pair_counts = vec![0u64; j * j];
    let mut union_count = 0u64;
    let mut vals = vec![false; j];
    for trial in 0..trials {
        let mut c = BondConfig::all_closed(total_edges);
        for e in 0..total_edges as EdgeId {
            c.set_open(e, label_f64(seed, trial, e as u64) < p);
        }
        let mut any = false;
        for (i, ev) in events.iter().enumerate() {
            vals[i] = ev.eval_bond(&c)?;
            counts[i] += vals[i] as u64;
            any |= vals[i];
        }
        union_count += any as u64;
        for i in 0..j {
            for l in (i + 1)..j {
                pair_counts[i * j + l] += (vals[i] && vals[l]) as u64;
            }
        }
    }
    let n = trials as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let mut hypotheses = Vec::new();
    for i in 0..j {
        for l in (i + 1)..j {
            let p11 = pair_counts[i * j + l] as f64 / n;
            let (pi, pl) = (probs[i], probs[l]);
            let cov = p11 - pi * pl;
            // Variance of the per-trial product deviations, from the
            // 2x2 joint counts.
            let p10 = pi - p11;
            let p01 = pl - p11;
            let p00 = 1.0 - p11 - p10 - p01;
            let g11 = (1.0 - pi) * (1.0 - pl);
            let g10 = -(1.0 - pi) * pl;
            let g01 = -pi * (1.0 - pl);
            let g00 = pi * pl;
            let eg2 = p11 * g11 * g11 + p10 * g10 * g10 + p01 * g01 * g01 + p00 * g00 * g00;
            let se = ((eg2 - cov * cov).max(0.0) / n).sqrt().max(1e-12);
            let name = format!("fkg-cov({},{})", events[i].name, events[l].name);
            if cov >= -3.0 * se {
                hypotheses.push(Hypothesis::ok(&name));
            } else {
                hypotheses.push(Hypothesis::bad(
                    &name,
                    format!("covariance {cov:.5} below -3 sigma ({se:.5})"),
                ));
            }
        }
    }
    let pu = union_count as f64 / n;
    let pmax = probs.iter().cloned().fold(0.0, f64::max);
    let imax = probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let bound = 1.0 - (1.0 - pu).powf(1.0 / j as f64);
    let d_bound = (1.0 / j as f64) * (1.0 - pu).max(1e-12).powf(1.0 / j as f64 - 1.0);
    let se = ((binom_se(counts[imax], trials)).powi(2)
        + (d_bound * binom_se(union_count, trials)).powi(2))
    .sqrt()
    .max(1e-12);
    Ok(LemmaReport {
        lemma: "fkg-sqrt".into(),
        hypotheses,
        lhs: bound,
        rhs: pmax,
        margin_sigma: Some((pmax - bound) / se),
    })
}

/// Parameters of the invasion gluing surgery: annulus A_{n,2n} around
/// the origin, window radius m, second invasion source x, percolation
/// level p, and closing parameter b in (p,1).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GlueContext {
    pub n: i32,
    pub m: i32,
    pub x: Vertex,
    pub p: f64,
    pub b: f64,
}

impl GlueContext {
    /// Standard lab instance: annulus A_{2,4} in the window of radius 8,
    /// b at the midpoint of (p,1).
    pub fn standard(x: Vertex, p: f64) -> GlueContext {
        GlueContext { n: 2, m: 8, x, p, b: (1.0 + p) / 2.0 }
    }

    fn validate(&self, g: &SlabGeometry) -> Result<()> {
        if !(0.0 < self.p && self.p < 1.0 && self.p < self.b && self.b < 1.0) {
            return Err(SlabError::InvalidParameter("need 0 < p < b < 1".into()));
        }
        if self.n < 2 || self.m < 2 * self.n + 2 {
            return Err(SlabError::InvalidParameter("need n >= 2 and m >= 2n+2".into()));
        }
        if g.x0 > -self.m || g.x1 < self.m || g.y0 > -self.m || g.y1 < self.m {
            return Err(SlabError::InvalidParameter("window does not contain the m-ball".into()));
        }
        let cheb = self.x.x.abs().max(self.x.y.abs());
        if self.x == Vertex::new(0, 0, 0) || cheb > self.n {
            return Err(SlabError::InvalidParameter(
                "x must be a non-origin vertex of the inner ball".into(),
            ));
        }
        Ok(())
    }

    pub fn annulus(&self) -> Region {
        Region::annulus(0, 0, self.n, 2 * self.n).expect("n >= 2")
    }
}

/// Membership flags of the surgery's domain and target events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DomainFlags {
    /// Open circuit surrounding the inner ball exists in the annulus.
    pub circuit: bool,
    /// All edges of the minimal circuit are invaded from the origin.
    pub b0: bool,
    /// All edges of the minimal circuit are invaded from x.
    pub bx: bool,
    /// No open path from the (2n+1)-ball to the window boundary.
    pub detector: bool,
}

impl DomainFlags {
    pub fn in_domain(&self) -> bool {
        self.circuit && !self.b0 && self.bx && self.detector
    }

    pub fn in_target(&self) -> bool {
        self.circuit && self.b0 && self.bx && self.detector
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeChange {
    OpenedAffine,
    ClosedAffine,
}

#[derive(Clone, Debug)]
pub struct SurgeryReport {
    pub input: LabelField,
    pub output: LabelField,
    pub z: Vertex,
    pub z_prime: Vertex,
    pub w: Vertex,
    /// True when w was already joined to the circuit by open edges, so
    /// no second witness path was needed.
    pub w_skipped: bool,
    pub gamma_min: PathOrCircuit,
    pub gamma_z: Vec<Vertex>,
    pub gamma_w: Vec<Vertex>,
    /// Edges actually modified, with the primitive applied.
    pub changed: Vec<(EdgeId, EdgeChange)>,
    /// Declared modification set: cylinder edges minus circuit edges.
    pub declared_s: Vec<EdgeId>,
    pub flags_before: DomainFlags,
    pub flags_after: DomainFlags,
    pub gamma_min_preserved: bool,
    pub winding_clusters_before: usize,
    pub winding_clusters_after: usize,
    pub reconstructed_z_prime: Vertex,
    pub reconstructed_s: Vec<EdgeId>,
}

impl SurgeryReport {
    /// The full surgery contract: target membership, circuit
    /// preservation, changed set confined to and bounded by the declared
    /// set, no new winding clusters, untouched edges bit-identical, and
    /// output-only reconstruction agreeing with the construction.
    pub fn contract_ok(&self) -> bool {
        let declared: HashSet<EdgeId> = self.declared_s.iter().copied().collect();
        let confined = self.changed.iter().all(|(e, _)| declared.contains(e));
        let untouched_identical = (0..self.input.len() as EdgeId).all(|e| {
            self.changed.iter().any(|(c, _)| *c == e)
                || self.input.get(e).to_bits() == self.output.get(e).to_bits()
        });
        self.flags_after.in_target()
            && self.gamma_min_preserved
            && confined
            && self.changed.len() <= self.declared_s.len()
            && self.winding_clusters_after <= self.winding_clusters_before
            && untouched_identical
            && self.reconstructed_z_prime == self.z_prime
            && self.reconstructed_s == self.declared_s
    }
}

fn invasion_contains_edges(inv: &InvasionState, edges: &[EdgeId]) -> bool {
    let set: HashSet<EdgeId> = inv.cluster_edges.iter().copied().collect();
    edges.iter().all(|e| set.contains(e))
}

/// Domain/target membership flags of a labeling, together with the
/// minimal circuit when one exists.
pub fn glue_flags(
    g: &SlabGeometry,
    f: &LabelField,
    ctx: &GlueContext,
) -> Result<(DomainFlags, Option<PathOrCircuit>)> {
    let c = f.threshold(ctx.p)?;
    let annulus = ctx.annulus();
    let gm = min_surrounding_circuit(g, &c, &annulus)?;
    let detector_q = CrossingQuery::one_arm(g, 2 * ctx.n + 1, ctx.m);
    let detector = !crossing(g, &c, &detector_q);
    let (b0, bx) = match &gm {
        None => (false, false),
        Some(circ) => {
            let eids = circ.edge_ids(g)?;
            let stop = StopRule::HitBoundary { cx: 0, cy: 0, n: ctx.m };
            let i0 = invade(g, f, &Vertex::new(0, 0, 0), stop)?;
            let ix = invade(g, f, &ctx.x, stop)?;
            (invasion_contains_edges(&i0, &eids), invasion_contains_edges(&ix, &eids))
        }
    };
    Ok((DomainFlags { circuit: gm.is_some(), b0, bx, detector }, gm))
}

fn winding_cluster_count(g: &SlabGeometry, c: &BondConfig, region: &Region) -> usize {
    let (cx, cy) = match region {
        Region::Annulus { cx, cy, .. } => (*cx, *cy),
        _ => unreachable!("annulus region"),
    };
    let parts = clusters(g, c, region);
    winding_components(g, c, region, &parts, cx, cy)
        .iter()
        .filter(|w| **w)
        .count()
}

/// The plus-shaped cylinder over a column and its four plane neighbors:
/// vertex ids and the edge ids induced inside it (13 edges at k = 1).
pub fn plus_cylinder(g: &SlabGeometry, center: &Vertex) -> Result<(Vec<VertexId>, Vec<EdgeId>)> {
    let mut vids = Vec::new();
    for (dx, dy) in [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)] {
        for z in 0..=g.k {
            vids.push(g.vertex_id(&Vertex::new(center.x + dx, center.y + dy, z))?);
        }
    }
    let set: HashSet<VertexId> = vids.iter().copied().collect();
    let mut eids: Vec<EdgeId> = (0..g.edge_count() as EdgeId)
        .filter(|&e| {
            let [a, b] = g.endpoint_ids(e);
            set.contains(&a) && set.contains(&b)
        })
        .collect();
    vids.sort_unstable();
    eids.sort_unstable();
    Ok((vids, eids))
}

/// Component of the origin among vertices whose column avoids every
/// circuit column, and its inner vertex boundary.
fn origin_pocket(
    g: &SlabGeometry,
    gm: &PathOrCircuit,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let gm_cols: HashSet<(i32, i32)> = gm.key().iter().map(|v| (v.x, v.y)).collect();
    let n = g.vertex_count();
    let allowed: Vec<bool> = (0..n as u32)
        .map(|id| {
            let v = g.vertex(id);
            !gm_cols.contains(&(v.x, v.y))
        })
        .collect();
    let start = g.vertex_id(&Vertex::new(0, 0, 0))?;
    let mut in_r = vec![false; n];
    if allowed[start as usize] {
        in_r[start as usize] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            for &(nb, _) in g.adjacent(id) {
                if allowed[nb as usize] && !in_r[nb as usize] {
                    in_r[nb as usize] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    let boundary: Vec<bool> = (0..n as u32)
        .map(|id| {
            in_r[id as usize]
                && g.adjacent(id).iter().any(|&(nb, _)| !in_r[nb as usize])
        })
        .collect();
    Ok((in_r, boundary))
}

/// Locates the contact vertex z (first origin-invaded vertex on the
/// pocket boundary) and the circuit vertex z' it attaches to.
fn locate_contact(
    g: &SlabGeometry,
    f: &LabelField,
    ctx: &GlueContext,
    gm: &PathOrCircuit,
) -> Result<(Vertex, Vertex, InvasionState)> {
    let (_, boundary) = origin_pocket(g, gm)?;
    let stop = StopRule::HitBoundary { cx: 0, cy: 0, n: ctx.m };
    let i0 = invade(g, f, &Vertex::new(0, 0, 0), stop)?;
    let mut z_id: Option<VertexId> = None;
    for id in 0..g.vertex_count() as u32 {
        if boundary[id as usize] && i0.added_at[id as usize] != usize::MAX {
            let better = match z_id {
                None => true,
                Some(prev) => i0.added_at[id as usize] < i0.added_at[prev as usize],
            };
            if better {
                z_id = Some(id);
            }
        }
    }
    let z_id = z_id.ok_or_else(|| {
        SlabError::Precondition("origin invasion never touches the pocket boundary".into())
    })?;
    let z = g.vertex(z_id);
    let gm_cols: HashSet<(i32, i32)> = gm.key().iter().map(|v| (v.x, v.y)).collect();
    let mut z_prime: Option<Vertex> = None;
    for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        let col = (z.x + dx, z.y + dy);
        if !gm_cols.contains(&col) {
            continue;
        }
        for v in gm.key() {
            if (v.x, v.y) == col
                && z_prime.is_none_or(|best| crate::geometry::vertex_less(v, &best))
            {
                z_prime = Some(*v);
            }
        }
    }
    let z_prime = z_prime.ok_or_else(|| {
        SlabError::Precondition("pocket boundary vertex has no adjacent circuit column".into())
    })?;
    Ok((z, z_prime, i0))
}

/// Witness path from `from` into the center column, descending to the
/// first vertex of `targets`.
fn column_witness(
    from: &Vertex,
    center: &Vertex,
    targets: &HashSet<Vertex>,
) -> Result<Vec<Vertex>> {
    let mut path = vec![*from];
    let mut cur = Vertex::new(center.x, center.y, from.z);
    path.push(cur);
    while !targets.contains(&cur) {
        let dz = (center.z - cur.z).signum();
        if dz == 0 {
            return Err(SlabError::Precondition(
                "witness column contains no target vertex".into(),
            ));
        }
        cur = Vertex::new(cur.x, cur.y, cur.z + dz);
        path.push(cur);
    }
    Ok(path)
}

fn path_edge_ids(g: &SlabGeometry, path: &[Vertex]) -> Result<Vec<EdgeId>> {
    let mut out = Vec::new();
    for pair in path.windows(2) {
        let a = g.vertex_id(&pair[0])?;
        let b = g.vertex_id(&pair[1])?;
        out.push(g.edge_between(a, b).ok_or_else(|| {
            SlabError::InvalidParameter("witness path steps between non-neighbors".into())
        })?);
    }
    Ok(out)
}

/// Recovers (z', declared S) from a post-surgery labeling alone, by
/// rerunning the construction's deterministic reads: minimal circuit,
/// origin pocket, origin invasion, contact vertex.
pub fn reconstruct(
    g: &SlabGeometry,
    f_out: &LabelField,
    ctx: &GlueContext,
) -> Result<(Vertex, Vec<EdgeId>)> {
    let c = f_out.threshold(ctx.p)?;
    let gm = min_surrounding_circuit(g, &c, &ctx.annulus())?
        .ok_or_else(|| SlabError::Precondition("no circuit in output".into()))?;
    let (_, z_prime, _) = locate_contact(g, f_out, ctx, &gm)?;
    let (_, cyl_edges) = plus_cylinder(g, &z_prime)?;
    let gm_eids: HashSet<EdgeId> = gm.edge_ids(g)?.into_iter().collect();
    let s: Vec<EdgeId> = cyl_edges.into_iter().filter(|e| !gm_eids.contains(e)).collect();
    Ok((z_prime, s))
}

/// The invasion gluing surgery. Given a labeling in the domain event
/// (circuit present, origin invasion misses it, x-invasion contains it,
/// detector clear), opens a witness path from the origin invasion's
/// pocket exit to the circuit, optionally a second witness from the
/// x-invasion's entry into the plus-cylinder, and closes the remaining
/// cylinder edges, producing a labeling whose origin invasion contains
/// the (unchanged) minimal circuit.
pub fn glue_invasion(g: &SlabGeometry, f: &LabelField, ctx: &GlueContext) -> Result<SurgeryReport> {
    ctx.validate(g)?;
    let (flags_before, gm) = glue_flags(g, f, ctx)?;
    if !flags_before.in_domain() {
        let name = if !flags_before.circuit {
            "no surrounding circuit in the annulus"
        } else if flags_before.b0 {
            "origin invasion already contains the circuit"
        } else if !flags_before.bx {
            "x-invasion does not contain the circuit"
        } else {
            "open path from the inner ball to the window boundary"
        };
        return Err(SlabError::Precondition(format!("not in surgery domain: {name}")));
    }
    let gm = gm.expect("circuit flag set");
    let gm_vertices: HashSet<Vertex> = gm.key().iter().copied().collect();
    let gm_eids: Vec<EdgeId> = gm.edge_ids(g)?;
    let gm_eid_set: HashSet<EdgeId> = gm_eids.iter().copied().collect();
    let annulus = ctx.annulus();
    let c_before = f.threshold(ctx.p)?;
    let winding_before = winding_cluster_count(g, &c_before, &annulus);

    // Step 1: witness path from the contact vertex to the circuit.
    let (z, z_prime, _i0) = locate_contact(g, f, ctx, &gm)?;
    let gamma_z = column_witness(&z, &z_prime, &gm_vertices)?;
    let gz_eids = path_edge_ids(g, &gamma_z)?;

    // Step 2: entry vertex of the x-invasion into the plus-cylinder.
    let (cyl_vids, cyl_edges) = plus_cylinder(g, &z_prime)?;
    let cyl_set: HashSet<VertexId> = cyl_vids.iter().copied().collect();
    let rim: Vec<VertexId> = cyl_vids
        .iter()
        .copied()
        .filter(|&id| g.adjacent(id).iter().any(|&(nb, _)| !cyl_set.contains(&nb)))
        .collect();
    let stop = StopRule::HitBoundary { cx: 0, cy: 0, n: ctx.m };
    let ix = invade(g, f, &ctx.x, stop)?;
    let w_id = rim
        .iter()
        .copied()
        .filter(|&id| ix.added_at[id as usize] != usize::MAX)
        .min_by_key(|&id| ix.added_at[id as usize])
        .ok_or_else(|| {
            SlabError::Precondition("x-invasion never enters the cylinder rim".into())
        })?;
    let w = g.vertex(w_id);
    // If w is already joined to z by open edges (after opening the first
    // witness), the x-invasion glues for free; otherwise route a second
    // witness through the center column.
    let with_gz = f.affine_open(&gz_eids, ctx.p)?;
    let c_gz = with_gz.threshold(ctx.p)?;
    let whole = Region::rect(g.x0, g.x1, g.y0, g.y1);
    let parts = clusters(g, &c_gz, &whole);
    let w_skipped = parts.same_cluster(w_id, g.vertex_id(&z)?);
    let (gamma_w, gw_eids) = if w_skipped {
        (Vec::new(), Vec::new())
    } else {
        let mut targets = gm_vertices.clone();
        targets.extend(gamma_z.iter().copied());
        let path = column_witness(&w, &z_prime, &targets)?;
        let eids = path_edge_ids(g, &path)?;
        (path, eids)
    };

    // Step 3: open both witnesses (as a set), close the rest of the
    // cylinder away from the circuit.
    let mut opened: Vec<EdgeId> = gz_eids.iter().chain(gw_eids.iter()).copied().collect();
    opened.sort_unstable();
    opened.dedup();
    let opened_set: HashSet<EdgeId> = opened.iter().copied().collect();
    let to_close: Vec<EdgeId> = cyl_edges
        .iter()
        .copied()
        .filter(|e| !gm_eid_set.contains(e) && !opened_set.contains(e))
        .collect();
    let f_out = f.affine_open(&opened, ctx.p)?.affine_close(&to_close, ctx.b)?;

    let mut changed = Vec::new();
    for e in 0..f.len() as EdgeId {
        if f.get(e).to_bits() != f_out.get(e).to_bits() {
            let kind = if opened_set.contains(&e) {
                EdgeChange::OpenedAffine
            } else {
                EdgeChange::ClosedAffine
            };
            changed.push((e, kind));
        }
    }
    let declared_s: Vec<EdgeId> = cyl_edges
        .iter()
        .copied()
        .filter(|e| !gm_eid_set.contains(e))
        .collect();

    let (flags_after, gm_after) = glue_flags(g, &f_out, ctx)?;
    let gamma_min_preserved = gm_after.as_ref().map(|c| c.key()) == Some(gm.key());
    let c_after = f_out.threshold(ctx.p)?;
    let winding_after = winding_cluster_count(g, &c_after, &annulus);
    let (reconstructed_z_prime, reconstructed_s) = reconstruct(g, &f_out, ctx)?;

    Ok(SurgeryReport {
        input: f.clone(),
        output: f_out,
        z,
        z_prime,
        w,
        w_skipped,
        gamma_min: gm,
        gamma_z,
        gamma_w,
        changed,
        declared_s,
        flags_before,
        flags_after,
        gamma_min_preserved,
        winding_clusters_before: winding_before,
        winding_clusters_after: winding_after,
        reconstructed_z_prime,
        reconstructed_s,
    })
}

/// Perimeter columns of the plane square ring at sup-norm radius r,
/// in cyclic order.
fn ring_columns(r: i32) -> Vec<(i32, i32)> {
    let mut cols = Vec::new();
    for x in -r..r {
        cols.push((x, -r));
    }
    for y in -r..r {
        cols.push((r, y));
    }
    for x in -r..r {
        cols.push((-x, r));
    }
    for y in -r..r {
        cols.push((-r, -y));
    }
    cols
}

/// Edge ids of the square circuit at plane radius r in one layer.
fn ring_edges(g: &SlabGeometry, r: i32, layer: i32) -> Result<Vec<EdgeId>> {
    let cols = ring_columns(r);
    let mut out = Vec::new();
    for i in 0..cols.len() {
        let (ax, ay) = cols[i];
        let (bx, by) = cols[(i + 1) % cols.len()];
        let a = g.vertex_id(&Vertex::new(ax, ay, layer))?;
        let b = g.vertex_id(&Vertex::new(bx, by, layer))?;
        out.push(g.edge_between(a, b).ok_or_else(|| {
            SlabError::InvalidParameter("ring columns not adjacent".into())
        })?);
    }
    Ok(out)
}

/// Plane-radial edges crossing from sup-norm radius r to r+1: closing
/// all of them separates the r-ball bar from the window boundary.
fn shell_edges(g: &SlabGeometry, r: i32) -> Vec<EdgeId> {
    (0..g.edge_count() as EdgeId)
        .filter(|&e| {
            let [a, b] = g.endpoints(e);
            let (ca, cb) = (a.x.abs().max(a.y.abs()), b.x.abs().max(b.y.abs()));
            ca.min(cb) == r && ca.max(cb) == r + 1
        })
        .collect()
}

/// Straight plane path at x's layer from x out to the ring at plane
/// radius r, stepping along the coordinate axis of largest magnitude.
fn gate_path(x: &Vertex, r: i32) -> Vec<Vertex> {
    let along_x = x.x.abs() >= x.y.abs();
    let step = if along_x {
        (if x.x >= 0 { 1 } else { -1 }, 0)
    } else {
        (0, if x.y >= 0 { 1 } else { -1 })
    };
    let mut path = vec![*x];
    let mut cur = *x;
    while cur.x.abs().max(cur.y.abs()) < r {
        cur = Vertex::new(cur.x + step.0, cur.y + step.1, cur.z);
        path.push(cur);
    }
    path
}

/// Draws label fields realizing the surgery domain event; returns the
/// stream index with the field.
///
/// At desk scale the domain event is far too rare under the plain
/// product measure — an all-open circuit confined to the thin annulus,
/// a blocked detector annulus, and the asymmetric pair of invasion
/// events have no reason to co-occur. The sampler therefore biases each
/// draw: it opens a square ring circuit at x's layer, closes a
/// separating shell just above p (which blocks the detector annulus),
/// opens a short gate path from x to the ring, and closes a high moat
/// around the ring, the gate and x so that only the invasion from x can
/// reach the circuit cheaply. Draws are then accepted only if the exact
/// membership flags all hold. The surgery contract being verified is a
/// per-configuration statement, so the sampling distribution is free.
pub fn find_domain_sample(
    g: &SlabGeometry,
    ctx: &GlueContext,
    seed: u64,
    stream_start: u64,
    max_streams: u64,
) -> Result<(u64, LabelField)> {
    ctx.validate(g)?;
    let shell = shell_edges(g, ctx.m - 2);
    let b_shell = (ctx.p + 0.02).min(0.5 * (ctx.p + 1.0));
    let layer = ctx.x.z;
    let ring = ring_edges(g, ctx.n + 1, layer)?;
    let gate_vertices = gate_path(&ctx.x, ctx.n + 1);
    let mut gate = Vec::new();
    for pair in gate_vertices.windows(2) {
        let a = g.vertex_id(&pair[0])?;
        let b = g.vertex_id(&pair[1])?;
        gate.push(g.edge_between(a, b).ok_or_else(|| {
            SlabError::InvalidParameter("gate path not adjacent".into())
        })?);
    }
    // Every edge touching the ring, the gate or x that is not itself a
    // ring or gate edge; closing these high makes the gate the only
    // cheap entrance to the circuit.
    let mut sealed: HashSet<EdgeId> = ring.iter().chain(gate.iter()).copied().collect();
    let mut moat = Vec::new();
    let mut moat_vertices: Vec<Vertex> = gate_vertices.clone();
    for &(cx, cy) in &ring_columns(ctx.n + 1) {
        moat_vertices.push(Vertex::new(cx, cy, layer));
    }
    for v in &moat_vertices {
        let vid = g.vertex_id(v)?;
        for nb in g.neighbors(v)? {
            let e = g.edge_between(vid, g.vertex_id(&nb)?).unwrap();
            if sealed.insert(e) {
                moat.push(e);
            }
        }
    }
    let b_moat = 0.9f64.max(b_shell);
    for stream in stream_start..stream_start + max_streams {
        let f = LabelField::sample(g, seed, stream)
            .affine_open(&ring, ctx.p)?
            .affine_open(&gate, ctx.p)?
            .affine_close(&shell, b_shell)?
            .affine_close(&moat, b_moat)?;
        let (flags, _) = glue_flags(g, &f, ctx)?;
        if flags.in_domain() {
            return Ok((stream, f));
        }
    }
    Err(SlabError::NonConvergent(format!(
        "no domain sample in {max_streams} streams from {stream_start}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryParams;

    fn line_graph(edges: usize) -> SlabGeometry {
        SlabGeometry::new(GeometryParams { k: 0, window: [0, edges as i32, 0, 0] }).unwrap()
    }

    #[test]
    fn plus_cylinder_edge_count_k1() {
        let g = SlabGeometry::centered(1, 8).unwrap();
        let (vids, eids) = plus_cylinder(&g, &Vertex::new(3, 0, 0)).unwrap();
        assert_eq!(vids.len(), 10);
        // 5 vertical edges (one per column) + 4 center-arm edges per layer.
        assert_eq!(eids.len(), 13);
    }

    #[test]
    fn support_validation_flags_hidden_dependence() {
        let g = line_graph(4);
        let honest = EventPredicate::bond("edge0", vec![0], Monotonicity::Increasing, |c| {
            c.is_open(0)
        });
        honest.validate_support(g.edge_count(), 16, 1).unwrap();
        let liar = EventPredicate::bond("edge0?", vec![0], Monotonicity::Increasing, |c| {
            c.is_open(1)
        });
        assert!(liar.validate_support(g.edge_count(), 16, 1).is_err());
    }

    #[test]
    fn monotonicity_validation() {
        let inc = EventPredicate::bond("any", vec![0, 1], Monotonicity::Increasing, |c| {
            c.is_open(0) || c.is_open(1)
        });
        inc.validate_monotonicity(4, 16, 2).unwrap();
        let mislabeled = EventPredicate::bond("odd", vec![0, 1], Monotonicity::Increasing, |c| {
            (c.is_open(0) as u8 + c.is_open(1) as u8) % 2 == 1
        });
        assert!(mislabeled.validate_monotonicity(4, 16, 2).is_err());
    }

    #[test]
    fn combi0_identity_subset() {
        // A = {edges 0 and 1 open} ⊆ B = {edge 0 open}; identity map,
        // s = 0, t = 1: reduces to P[A] <= P[B].
        let a = EventPredicate::bond("both", vec![0, 1], Monotonicity::Increasing, |c| {
            c.is_open(0) && c.is_open(1)
        });
        let b = EventPredicate::bond("first", vec![0, 1], Monotonicity::Increasing, |c| {
            c.is_open(0)
        });
        let p = BigRational::new(BigInt::from(1), BigInt::from(3));
        let rep = verify_combi0(&a, &b, &|c| vec![c.clone()], 0, 1.0, &p, &[0, 1], 4).unwrap();
        assert!(rep.ok(), "{rep:?}");
        assert!((rep.lhs - 1.0 / 9.0).abs() < 1e-12);
        assert!((rep.rhs - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn combi0_open_one_edge() {
        // Φ opens edge 0; A = {edge 0 closed}, B = {edge 0 open},
        // s = 1, t = 1, p = 1/2: P[A] = 1/2 <= 4 P[B] = 2.
        let a = EventPredicate::bond("closed", vec![0], Monotonicity::Decreasing, |c| {
            !c.is_open(0)
        });
        let b =
            EventPredicate::bond("open", vec![0], Monotonicity::Increasing, |c| c.is_open(0));
        let phi = |c: &BondConfig| {
            let mut m = c.clone();
            m.set_open(0, true);
            vec![m]
        };
        let p = BigRational::new(BigInt::from(1), BigInt::from(2));
        let rep = verify_combi0(&a, &b, &phi, 1, 1.0, &p, &[0], 4).unwrap();
        assert!(rep.ok(), "{rep:?}");
        assert!((rep.lhs - 0.5).abs() < 1e-12);
        assert!((rep.rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn combi0_negative_control() {
        // Deliberately broken Φ: maps every configuration of A to a fixed
        // element of B, but A has preimages differing on 2 edges while
        // s = 1 — the fiber hypothesis must be flagged.
        let a = EventPredicate::bond("anyA", vec![0, 1], Monotonicity::Neither, |_| true);
        let b = EventPredicate::bond("open01", vec![0, 1], Monotonicity::Increasing, |c| {
            c.is_open(0) && c.is_open(1)
        });
        let phi = |c: &BondConfig| {
            let mut m = c.clone();
            m.set_open(0, true);
            m.set_open(1, true);
            vec![m]
        };
        let p = BigRational::new(BigInt::from(1), BigInt::from(2));
        let rep = verify_combi0(&a, &b, &phi, 1, 1.0, &p, &[0, 1], 4).unwrap();
        let hyp2 = rep.hypotheses.iter().find(|h| h.name.contains("fiber")).unwrap();
        assert!(!hyp2.holds);
        assert!(hyp2.counterexample.is_some());
    }

    #[test]
    fn combi_single_edge_affine() {
        // Φ = affine open on edge 0 with a = 0.6; A = {label > a},
        // B = {label < a}; closed-form: 0.4 <= (2/0.3) * 0.6.
        let (aa, bb) = (0.6, 0.7);
        let a_ev =
            EventPredicate::label("above", vec![0], Monotonicity::Neither, move |f| {
                f.get(0) > aa
            });
        let b_ev =
            EventPredicate::label("below", vec![0], Monotonicity::Neither, move |f| {
                f.get(0) < aa
            });
        let phi = move |f: &LabelField| f.affine_open(&[0], aa);
        let rep =
            verify_combi(&a_ev, &b_ev, &phi, 1, aa, bb, &[0], 3, 20_000, 17).unwrap();
        assert!(rep.ok(), "{rep:?}");
        assert!((rep.lhs - 0.4).abs() < 0.02);
        assert!((rep.rhs - 4.0).abs() < 0.2);
    }

    #[test]
    fn combi_rejects_non_affine_map() {
        let a_ev = EventPredicate::label("all", vec![0], Monotonicity::Neither, |_| true);
        let b_ev = EventPredicate::label("all2", vec![0], Monotonicity::Neither, |_| true);
        let phi = |f: &LabelField| {
            let mut m = f.clone();
            m.set(0, 0.123456);
            Ok(m)
        };
        assert!(verify_combi(&a_ev, &b_ev, &phi, 1, 0.5, 0.7, &[0], 2, 100, 1).is_err());
    }

    #[test]
    fn fkg_same_event_and_crossings() {
        // A = B: covariance is a variance, nonnegative exactly.
        let ev = EventPredicate::bond("e0", vec![0], Monotonicity::Increasing, |c| {
            c.is_open(0)
        });
        let rep =
            fkg_and_sqrt_check(&[ev.clone(), ev], 3, 0.5, 20_000, 5).unwrap();
        assert!(rep.ok(), "{rep:?}");
    }

    #[test]
    fn fkg_rejects_bad_tag() {
        let bad = EventPredicate::bond("closed0", vec![0], Monotonicity::Increasing, |c| {
            !c.is_open(0)
        });
        assert!(fkg_and_sqrt_check(&[bad], 2, 0.5, 100, 5).is_err());
    }

    #[test]
    fn glue_on_sampled_domain_instance() {
        let g = SlabGeometry::centered(1, 8).unwrap();
        let ctx = GlueContext::standard(Vertex::new(2, 0, 0), 0.3);
        let (stream, f) = find_domain_sample(&g, &ctx, 97, 0, 4000).unwrap();
        let rep = glue_invasion(&g, &f, &ctx).unwrap();
        assert!(rep.flags_before.in_domain());
        assert!(rep.flags_after.b0, "origin invasion must contain the circuit after");
        assert!(rep.contract_ok(), "stream {stream}: {:?}", rep.flags_after);
        assert!(rep.changed.len() <= 13);
    }

    #[test]
    fn glue_rejects_out_of_domain() {
        let g = SlabGeometry::centered(1, 8).unwrap();
        let ctx = GlueContext::standard(Vertex::new(2, 0, 0), 0.3);
        // All labels above p: no open edges at all, hence no circuit.
        let f = LabelField::from_labels(vec![0.99; g.edge_count()]);
        let err = glue_invasion(&g, &f, &ctx).unwrap_err();
        assert!(matches!(err, SlabError::Precondition(_)));
    }
}
