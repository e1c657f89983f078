//! Edge label fields: deterministic counter-based generation of i.i.d.
//! uniform labels, thresholding to open/closed configurations, and the
//! affine label surgeries.

use std::io::{Read, Write};

use crate::error::{Result, SlabError};
use crate::geometry::{EdgeId, SlabGeometry};

/// SplitMix64-style avalanche; full 64-bit mixing of a counter.
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Counter-based generator: a pure function of (seed, stream, counter).
/// No state is carried, so any edge's label can be produced independently
/// and in parallel.
pub fn label_u64(seed: u64, stream: u64, counter: u64) -> u64 {
    let a = mix64(seed ^ 0x9e3779b97f4a7c15);
    let b = mix64(stream.wrapping_add(0xd1b54a32d192ed03));
    mix64(a ^ b.wrapping_mul(0x2545f4914f6cdd1d) ^ counter.wrapping_mul(0x9e3779b97f4a7c15))
}

/// Uniform in [0,1) with 53 random bits.
pub fn label_f64(seed: u64, stream: u64, counter: u64) -> f64 {
    (label_u64(seed, stream, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives a per-trial stream id from a cell tag and trial index, so that
/// parallel trials use independent, coordination-free streams.
pub fn trial_stream(cell_tag: u64, trial: u64) -> u64 {
    mix64(mix64(cell_tag ^ 0x6a09e667f3bcc909).wrapping_add(trial))
}

/// Hashes an arbitrary byte string (e.g. serialized cell parameters) to a
/// stream tag. FNV-1a, enough for stream separation.
pub fn tag_bytes(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    mix64(h)
}

/// An edge labeling ω: one f64 in [0,1) per edge id, together with the
/// provenance needed to regenerate it bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelField {
    pub seed: u64,
    pub stream: u64,
    labels: Vec<f64>,
}

impl LabelField {
    pub fn sample(g: &SlabGeometry, seed: u64, stream: u64) -> LabelField {
        let labels = (0..g.edge_count() as u64)
            .map(|e| label_f64(seed, stream, e))
            .collect();
        LabelField { seed, stream, labels }
    }

    pub fn from_labels(labels: Vec<f64>) -> LabelField {
        LabelField { seed: 0, stream: 0, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, e: EdgeId) -> f64 {
        self.labels[e as usize]
    }

    pub fn set(&mut self, e: EdgeId, v: f64) {
        self.labels[e as usize] = v;
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Tie rule used everywhere an edge order is needed: label first,
    /// edge id second. Labels are never NaN, so the comparison is total.
    pub fn edge_key(&self, e: EdgeId) -> (f64, EdgeId) {
        (self.labels[e as usize], e)
    }

    pub fn edge_less(&self, a: EdgeId, b: EdgeId) -> bool {
        self.edge_key(a) < self.edge_key(b)
    }

    /// Open set at density p: ω(e) < p strictly.
    pub fn threshold(&self, p: f64) -> Result<BondConfig> {
        if !(0.0..=1.0).contains(&p) {
            return Err(SlabError::InvalidParameter(format!("p={p} outside [0,1]")));
        }
        let mut c = BondConfig::all_closed(self.labels.len());
        for (e, &w) in self.labels.iter().enumerate() {
            if w < p {
                c.set_open(e as EdgeId, true);
            }
        }
        c.p = Some(p);
        Ok(c)
    }

    /// Maps ω(e) ↦ a·ω(e) on the listed edges, making each a-open.
    pub fn affine_open(&self, edges: &[EdgeId], a: f64) -> Result<LabelField> {
        if !(a > 0.0 && a < 1.0) {
            return Err(SlabError::InvalidParameter(format!("a={a} outside (0,1)")));
        }
        let mut out = self.clone();
        for &e in edges {
            let w = self.get(e);
            out.set(e, a * w);
        }
        Ok(out)
    }

    /// Maps ω(e) ↦ b + (1−b)·ω(e) on the listed edges, making each b-closed.
    pub fn affine_close(&self, edges: &[EdgeId], b: f64) -> Result<LabelField> {
        if !(b > 0.0 && b < 1.0) {
            return Err(SlabError::InvalidParameter(format!("b={b} outside (0,1)")));
        }
        let mut out = self.clone();
        for &e in edges {
            let w = self.get(e);
            out.set(e, b + (1.0 - b) * w);
        }
        Ok(out)
    }

    /// Binary dump: header (k, window, seed, stream, edge count) followed by
    /// raw little-endian f64 labels.
    pub fn write_dump<W: Write>(&self, g: &SlabGeometry, w: &mut W) -> Result<()> {
        w.write_all(b"SLBL")?;
        let p = g.params();
        for v in [p.k, p.window[0], p.window[1], p.window[2], p.window[3]] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.stream.to_le_bytes())?;
        w.write_all(&(self.labels.len() as u64).to_le_bytes())?;
        for &l in &self.labels {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump back; returns the geometry parameters and the field.
    pub fn read_dump<R: Read>(r: &mut R) -> Result<(crate::geometry::GeometryParams, LabelField)> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"SLBL" {
            return Err(SlabError::InvalidParameter("bad label dump magic".into()));
        }
        let mut i32buf = [0u8; 4];
        let mut read_i32 = |r: &mut R| -> Result<i32> {
            r.read_exact(&mut i32buf)?;
            Ok(i32::from_le_bytes(i32buf))
        };
        let k = read_i32(r)?;
        let window = [read_i32(r)?, read_i32(r)?, read_i32(r)?, read_i32(r)?];
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let seed = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let stream = u64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut u64buf)?;
            labels.push(f64::from_le_bytes(u64buf));
        }
        Ok((
            crate::geometry::GeometryParams { k, window },
            LabelField { seed, stream, labels },
        ))
    }
}

/// Boolean open/closed assignment per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct BondConfig {
    bits: Vec<u64>,
    len: usize,
    pub p: Option<f64>,
}

impl BondConfig {
    pub fn all_closed(len: usize) -> BondConfig {
        BondConfig { bits: vec![0; len.div_ceil(64)], len, p: None }
    }

    pub fn all_open(len: usize) -> BondConfig {
        let mut c = BondConfig::all_closed(len);
        for e in 0..len {
            c.set_open(e as EdgeId, true);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_open(&self, e: EdgeId) -> bool {
        let e = e as usize;
        self.bits[e / 64] >> (e % 64) & 1 == 1
    }

    pub fn set_open(&mut self, e: EdgeId, open: bool) {
        let e = e as usize;
        if open {
            self.bits[e / 64] |= 1 << (e % 64);
        } else {
            self.bits[e / 64] &= !(1 << (e % 64));
        }
    }

    pub fn open_count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn open_edges(&self) -> Vec<EdgeId> {
        (0..self.len as EdgeId).filter(|&e| self.is_open(e)).collect()
    }

    /// True iff every open edge here is open in `other`.
    pub fn subset_of(&self, other: &BondConfig) -> bool {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .all(|(a, b)| a & !b == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GeometryParams;

    fn geom(k: i32, n: i32) -> SlabGeometry {
        SlabGeometry::new(GeometryParams { k, window: [-n, n, -n, n] }).unwrap()
    }

    #[test]
    fn sampling_deterministic() {
        let g = geom(1, 8);
        let a = LabelField::sample(&g, 12345, 7);
        let b = LabelField::sample(&g, 12345, 7);
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn streams_decorrelated() {
        let g = geom(1, 30); // > 10^4 edges
        let a = LabelField::sample(&g, 99, 0);
        let b = LabelField::sample(&g, 99, 1);
        assert!(a.len() > 10_000);
        let differing = a
            .labels()
            .iter()
            .zip(b.labels())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing as f64 > 0.99 * a.len() as f64);
    }

    #[test]
    fn ks_uniformity() {
        // One-sample KS test against U[0,1] on >= 1e5 labels; critical
        // value at the 1% level is 1.63/sqrt(n).
        let g = geom(2, 64);
        let f = LabelField::sample(&g, 2024, 0);
        let n = f.len();
        assert!(n >= 100_000);
        let mut xs: Vec<f64> = f.labels().to_vec();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, &x) in xs.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((x - lo).abs()).max((hi - x).abs());
        }
        assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn threshold_examples() {
        let g = geom(1, 4);
        let f = LabelField::sample(&g, 5, 5);
        assert_eq!(f.threshold(0.0).unwrap().open_count(), 0);
        assert_eq!(f.threshold(1.0).unwrap().open_count(), f.len());
        let lo = f.threshold(0.3).unwrap();
        let hi = f.threshold(0.7).unwrap();
        assert!(lo.subset_of(&hi));
        assert!(f.threshold(1.5).is_err());
        // Complement duality: closed at p == {w >= p}.
        let p = 0.42;
        let c = f.threshold(p).unwrap();
        for e in 0..f.len() as EdgeId {
            assert_eq!(c.is_open(e), f.get(e) < p);
        }
        // Boundary convention: a label exactly equal to p is closed.
        let mut f2 = f.clone();
        f2.set(0, 0.5);
        assert!(!f2.threshold(0.5).unwrap().is_open(0));
    }

    #[test]
    fn injectivity_as_order() {
        let g = geom(1, 10);
        let f = LabelField::sample(&g, 77, 3);
        let mut keys: Vec<(f64, EdgeId)> = (0..f.len() as EdgeId).map(|e| f.edge_key(e)).collect();
        keys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in keys.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn affine_examples() {
        let g = geom(1, 3);
        let mut f = LabelField::sample(&g, 1, 1);
        f.set(3, 0.8);
        f.set(4, 0.2);
        let opened = f.affine_open(&[3], 0.5).unwrap();
        assert!((opened.get(3) - 0.4).abs() < 1e-15);
        assert!(opened.get(3) < 0.5);
        let closed = f.affine_close(&[4], 0.6).unwrap();
        assert!((closed.get(4) - 0.68).abs() < 1e-15);
        assert!(closed.get(4) > 0.6);
        // Untouched edges bit-identical.
        for e in 0..f.len() as EdgeId {
            if e != 3 {
                assert_eq!(opened.get(e).to_bits(), f.get(e).to_bits());
            }
        }
        // Inverse map restores the field to machine precision.
        let mut restored = opened.clone();
        restored.set(3, opened.get(3) / 0.5);
        assert!((restored.get(3) - 0.8).abs() < 1e-15);
        assert!(f.affine_open(&[0], 1.5).is_err());
        assert!(f.affine_close(&[0], 0.0).is_err());
    }

    #[test]
    fn affine_jacobian_volume() {
        // Volume contraction of the unit hypercube of label vectors on m
        // edges: |image of affine_open| = a^m of the cube, measured by
        // sampling points and checking membership of preimages.
        let m = 3;
        let a = 0.6f64;
        let b = 0.7f64;
        let trials = 200_000u64;
        let mut hit_open = 0u64;
        let mut hit_close = 0u64;
        for t in 0..trials {
            // A random point in [0,1)^m; lies in the affine_open image iff
            // every coordinate < a, in the affine_close image iff every > b.
            let mut in_open = true;
            let mut in_close = true;
            for j in 0..m {
                let x = label_f64(4242, t, j);
                in_open &= x < a;
                in_close &= x > b;
            }
            hit_open += in_open as u64;
            hit_close += in_close as u64;
        }
        let n = trials as f64;
        let po = hit_open as f64 / n;
        let pc = hit_close as f64 / n;
        let eo = a.powi(m as i32);
        let ec = (1.0 - b).powi(m as i32);
        let so = (eo * (1.0 - eo) / n).sqrt();
        let sc = (ec * (1.0 - ec) / n).sqrt();
        assert!((po - eo).abs() < 3.0 * so, "open volume {po} vs {eo}");
        assert!((pc - ec).abs() < 3.0 * sc, "close volume {pc} vs {ec}");
    }

    #[test]
    fn dump_roundtrip() {
        let g = geom(1, 4);
        let f = LabelField::sample(&g, 31, 9);
        let mut buf = Vec::new();
        f.write_dump(&g, &mut buf).unwrap();
        let (params, f2) = LabelField::read_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(params, g.params());
        assert_eq!(f, f2);
    }
}
