//! Monte Carlo spanning probability for the random graphs left by domain measurement.
//!
//! Plaquettes carry i.i.d. uniform outcomes in ℤ_d; an edge between two
//! plaquettes is occupied iff their outcomes differ. Only edges flanked by two
//! plaquettes exist; perimeter edges have a single flank and are dropped.
//!
//! Geometry: an L×L array of plaquettes with open boundaries. The honeycomb is a
//! brick wall (bricks 2 wide, odd rows shifted by 1); the square lattice is the
//! Union-Jack residual lattice. The left boundary set is every vertex of the
//! leftmost plaquette of each row, and likewise for right, bottom and top.
//!
//! Each trial draws from its own ChaCha8 stream (seed, stream = trial index), so
//! results are bit-identical regardless of thread count.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zd::PrimeDim;

pub const RNG_IDENTITY: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64(seed), one stream per trial";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercKind {
    Honeycomb,
    Square,
}

impl PercKind {
    pub fn name(self) -> &'static str {
        match self {
            PercKind::Honeycomb => "honeycomb",
            PercKind::Square => "square",
        }
    }
}

impl std::str::FromStr for PercKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "honeycomb" => Ok(PercKind::Honeycomb),
            "square" => Ok(PercKind::Square),
            _ => Err(Error::Invalid(format!("lattice {s:?}, expected honeycomb or square"))),
        }
    }
}

const LEFT: u8 = 1;
const RIGHT: u8 = 2;
const BOTTOM: u8 = 4;
const TOP: u8 = 8;

/// Vertices, interior edges and their flanking plaquettes for one (kind, L).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlaquetteGeometry {
    pub kind: PercKind,
    pub l: usize,
    /// Integer embedding of each vertex.
    pub pos: Vec<(i32, i32)>,
    /// Plaquette (column, row) of each plaquette index.
    pub plaquettes: Vec<(usize, usize)>,
    /// Corner vertices of each plaquette, counter-clockwise.
    pub faces: Vec<Vec<u32>>,
    pub edges: Vec<(u32, u32)>,
    /// Flanking plaquettes; weight is k·(m_first − m_second).
    pub flanks: Vec<(u32, u32)>,
    /// Bitmask of boundary sets per vertex.
    pub boundary: Vec<u8>,
}

impl PlaquetteGeometry {
    pub fn new(kind: PercKind, l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::LatticeTooSmall(format!("L = {l}")));
        }
        let mut index: HashMap<(i32, i32), u32> = HashMap::new();
        let mut pos = Vec::new();
        let mut boundary = Vec::new();
        let mut edge_flanks: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut plaquettes = Vec::new();
        let mut faces = Vec::new();
        let mut vid = |p: (i32, i32), pos: &mut Vec<(i32, i32)>, boundary: &mut Vec<u8>| -> u32 {
            *index.entry(p).or_insert_with(|| {
                pos.push(p);
                boundary.push(0);
                (pos.len() - 1) as u32
            })
        };
        for row in 0..l {
            for col in 0..l {
                let corners: Vec<(i32, i32)> = match kind {
                    PercKind::Honeycomb => {
                        let x0 = (2 * col + row % 2) as i32;
                        let y = row as i32;
                        vec![(x0, y), (x0 + 1, y), (x0 + 2, y), (x0 + 2, y + 1), (x0 + 1, y + 1), (x0, y + 1)]
                    }
                    PercKind::Square => {
                        let (x, y) = (col as i32, row as i32);
                        vec![(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)]
                    }
                };
                let pid = plaquettes.len() as u32;
                plaquettes.push((col, row));
                let mut mask = 0u8;
                if col == 0 {
                    mask |= LEFT;
                }
                if col == l - 1 {
                    mask |= RIGHT;
                }
                if row == 0 {
                    mask |= BOTTOM;
                }
                if row == l - 1 {
                    mask |= TOP;
                }
                let ids: Vec<u32> = corners.iter().map(|&p| vid(p, &mut pos, &mut boundary)).collect();
                for &v in &ids {
                    boundary[v as usize] |= mask;
                }
                for i in 0..ids.len() {
                    let (a, b) = (ids[i], ids[(i + 1) % ids.len()]);
                    edge_flanks.entry((a.min(b), a.max(b))).or_default().push(pid);
                }
                faces.push(ids);
            }
        }
        let mut interior: Vec<((u32, u32), (u32, u32))> = edge_flanks
            .into_iter()
            .filter(|(_, f)| f.len() == 2)
            .map(|(e, f)| (e, (f[0], f[1])))
            .collect();
        interior.sort_unstable();
        let (edges, flanks) = interior.into_iter().unzip();
        Ok(PlaquetteGeometry { kind, l, pos, plaquettes, faces, edges, flanks, boundary })
    }

    pub fn vertex_count(&self) -> usize {
        self.pos.len()
    }

    pub fn plaquette_count(&self) -> usize {
        self.plaquettes.len()
    }
}

/// Occupied edges generated by one outcome pattern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EdgeConfig {
    pub outcomes: Vec<u32>,
    pub occupied: Vec<bool>,
}

impl EdgeConfig {
    pub fn from_outcomes(geom: &PlaquetteGeometry, outcomes: Vec<u32>) -> Result<Self> {
        if outcomes.len() != geom.plaquette_count() {
            return Err(Error::ShapeMismatch(format!("{} outcomes for {} plaquettes", outcomes.len(), geom.plaquette_count())));
        }
        let occupied = geom.flanks.iter().map(|&(a, b)| outcomes[a as usize] != outcomes[b as usize]).collect();
        Ok(EdgeConfig { outcomes, occupied })
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }
}

pub fn sample_config<R: Rng + ?Sized>(d: PrimeDim, geom: &PlaquetteGeometry, rng: &mut R) -> EdgeConfig {
    let outcomes = (0..geom.plaquette_count()).map(|_| rng.gen_range(0..d.get())).collect();
    EdgeConfig::from_outcomes(geom, outcomes).expect("sized from geometry")
}

/// Disjoint sets with union by rank and path halving.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
    merges: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), rank: vec![0; n], merges: 0 }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    /// True if `a` and `b` were in different sets.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] { (ra, rb) } else { (rb, ra) };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
        self.merges += 1;
        true
    }

    pub fn connected(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    pub fn cluster_count(&mut self) -> usize {
        (0..self.parent.len() as u32).filter(|&x| self.find(x) == x).count()
    }
}

/// Union-find over the occupied edges of `occupied` (indexed like `geom.edges`).
pub fn clusters(geom: &PlaquetteGeometry, occupied: &[bool]) -> UnionFind {
    let mut uf = UnionFind::new(geom.vertex_count());
    for (&(a, b), &o) in geom.edges.iter().zip(occupied) {
        if o {
            uf.union(a, b);
        }
    }
    uf
}

/// A left-right cluster and a top-bottom cluster both exist.
pub fn spans_edges(geom: &PlaquetteGeometry, occupied: &[bool]) -> bool {
    let mut uf = clusters(geom, occupied);
    let mut flags = vec![0u8; geom.vertex_count()];
    for v in 0..geom.vertex_count() {
        let b = geom.boundary[v];
        if b != 0 {
            let r = uf.find(v as u32) as usize;
            flags[r] |= b;
        }
    }
    let lr = flags.iter().any(|&f| f & (LEFT | RIGHT) == (LEFT | RIGHT));
    let tb = flags.iter().any(|&f| f & (TOP | BOTTOM) == (TOP | BOTTOM));
    lr && tb
}

pub fn spans(geom: &PlaquetteGeometry, config: &EdgeConfig) -> bool {
    spans_edges(geom, &config.occupied)
}

/// Breadth-first reachability; independent of the union-find path.
pub fn spans_bfs(geom: &PlaquetteGeometry, occupied: &[bool]) -> bool {
    let n = geom.vertex_count();
    let mut adj = vec![Vec::new(); n];
    for (&(a, b), &o) in geom.edges.iter().zip(occupied) {
        if o {
            adj[a as usize].push(b as usize);
            adj[b as usize].push(a as usize);
        }
    }
    let reach = |from: u8, to: u8| -> bool {
        let mut seen = vec![false; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| geom.boundary[v] & from != 0).collect();
        for &v in &queue {
            seen[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            if geom.boundary[v] & to != 0 {
                return true;
            }
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        false
    };
    reach(LEFT, RIGHT) && reach(BOTTOM, TOP)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub d: PrimeDim,
    pub l: usize,
    pub kind: PercKind,
    pub trials: u64,
    pub seed: u64,
    /// Independent deletion probability applied to occupied edges.
    pub delete_p: Option<f64>,
}

impl TrialPlan {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be >= 1".into()));
        }
        if self.l < 2 {
            return Err(Error::LatticeTooSmall(format!("L = {}", self.l)));
        }
        if let Some(p) = self.delete_p {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("delete probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub prob: f64,
    pub stderr: f64,
    pub successes: u64,
    pub samples: u64,
}

impl Estimate {
    pub fn from_counts(successes: u64, samples: u64) -> Self {
        let p = successes as f64 / samples as f64;
        Estimate { prob: p, stderr: (p * (1.0 - p) / samples as f64).sqrt(), successes, samples }
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Spanning fraction over `plan.trials` independent outcome patterns.
pub fn percolation_probability(plan: &TrialPlan) -> Result<Estimate> {
    plan.validate()?;
    let geom = PlaquetteGeometry::new(plan.kind, plan.l)?;
    Ok(percolation_probability_on(&geom, plan))
}

pub fn percolation_probability_on(geom: &PlaquetteGeometry, plan: &TrialPlan) -> Estimate {
    let successes: u64 = (0..plan.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(plan.seed, t);
            let mut cfg = sample_config(plan.d, geom, &mut rng);
            if let Some(p) = plan.delete_p {
                for o in cfg.occupied.iter_mut() {
                    if *o && rng.gen::<f64>() < p {
                        *o = false;
                    }
                }
            }
            spans(geom, &cfg) as u64
        })
        .sum();
    Estimate::from_counts(successes, plan.trials)
}

/// Spanning fraction versus deletion probability over `patterns` outcome
/// patterns × `deletions` deletion draws. Each draw assigns one uniform u_e per
/// edge and deletes it when u_e < p, so every draw is monotone in p.
pub fn stability_curve(
    d: PrimeDim,
    kind: PercKind,
    l: usize,
    patterns: u64,
    deletions: u64,
    seed: u64,
    p_grid: &[f64],
) -> Result<Vec<(f64, Estimate)>> {
    if patterns == 0 || deletions == 0 {
        return Err(Error::Invalid("patterns and deletions must be >= 1".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Invalid(format!("delete probability {p} outside [0, 1]")));
    }
    let geom = PlaquetteGeometry::new(kind, l)?;
    let counts = (0..patterns * deletions)
        .into_par_iter()
        .map(|t| {
            let (pat, del) = (t / deletions, t % deletions);
            let cfg = sample_config(d, &geom, &mut trial_rng(seed, pat));
            let mut rng = trial_rng(seed, (1u64 << 32) + pat * deletions + del);
            let u: Vec<f64> = cfg.occupied.iter().map(|_| rng.gen::<f64>()).collect();
            let mut occ = vec![false; cfg.occupied.len()];
            p_grid
                .iter()
                .map(|&p| {
                    for (i, o) in occ.iter_mut().enumerate() {
                        *o = cfg.occupied[i] && u[i] >= p;
                    }
                    spans_edges(&geom, &occ) as u64
                })
                .collect::<Vec<u64>>()
        })
        .reduce(|| vec![0u64; p_grid.len()], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    let n = patterns * deletions;
    Ok(p_grid.iter().zip(counts).map(|(&p, c)| (p, Estimate::from_counts(c, n))).collect())
}

/// One CSV row: `kind,d,L,trials,seed,delete_p,prob,stderr`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub kind: PercKind,
    pub d: u32,
    #[serde(rename = "L")]
    pub l: usize,
    pub trials: u64,
    pub seed: u64,
    pub delete_p: f64,
    pub prob: f64,
    pub stderr: f64,
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[CurveRow]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(d: u32) -> PrimeDim {
        PrimeDim::new(d).unwrap()
    }

    #[test]
    fn honeycomb_is_trivalent_inside() {
        let g = PlaquetteGeometry::new(PercKind::Honeycomb, 6).unwrap();
        let mut deg = vec![0; g.vertex_count()];
        for &(a, b) in &g.edges {
            deg[a as usize] += 1;
            deg[b as usize] += 1;
        }
        assert!(deg.iter().all(|&x| x <= 3));
        assert!(deg.iter().filter(|&&x| x == 3).count() > g.vertex_count() / 2);
        // each plaquette has up to 6 interior edges; an inner one has exactly 6
        let mut per = vec![0; g.plaquette_count()];
        for &(a, b) in &g.flanks {
            per[a as usize] += 1;
            per[b as usize] += 1;
        }
        assert_eq!(per.iter().max(), Some(&6));
    }

    #[test]
    fn square_interior_degree_four() {
        let g = PlaquetteGeometry::new(PercKind::Square, 5).unwrap();
        assert_eq!(g.vertex_count(), 36);
        // interior edges: (L−1) per line, L lines each way, times 2 orientations
        assert_eq!(g.edges.len(), 2 * 5 * 4);
    }

    #[test]
    fn full_and_empty() {
        for kind in [PercKind::Honeycomb, PercKind::Square] {
            let g = PlaquetteGeometry::new(kind, 8).unwrap();
            assert!(spans_edges(&g, &vec![true; g.edges.len()]));
            assert!(!spans_edges(&g, &vec![false; g.edges.len()]));
            let cfg = EdgeConfig::from_outcomes(&g, vec![2; g.plaquette_count()]).unwrap();
            assert_eq!(cfg.occupied_count(), 0);
        }
    }

    #[test]
    fn single_trial_on_forced_full_config() {
        // a checkerboard on the square lattice occupies every interior edge
        let g = PlaquetteGeometry::new(PercKind::Square, 6).unwrap();
        let out = g.plaquettes.iter().map(|&(c, r)| ((c + r) % 2) as u32).collect();
        let cfg = EdgeConfig::from_outcomes(&g, out).unwrap();
        assert_eq!(cfg.occupied_count(), g.edges.len());
        assert!(spans(&g, &cfg));
    }

    #[test]
    fn occupation_rate_matches_one_minus_inverse_d() {
        for d in [2u32, 3, 5] {
            let g = PlaquetteGeometry::new(PercKind::Honeycomb, 10).unwrap();
            let trials = 4000u64;
            let occupied: usize = (0..trials)
                .map(|t| sample_config(p(d), &g, &mut trial_rng(11, t)).occupied_count())
                .sum();
            let n = (trials as usize * g.edges.len()) as f64;
            let rate = occupied as f64 / n;
            let q = 1.0 - 1.0 / d as f64;
            // outcomes are shared between edges, so allow a wider band than binomial
            assert!((rate - q).abs() < 10.0 * (q * (1.0 - q) / n).sqrt(), "d={d} rate={rate}");
        }
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.union(3, 4));
        assert!(uf.connected(0, 1));
        assert!(!uf.connected(1, 3));
        assert_eq!(uf.cluster_count() + uf.merges(), 5);
    }

    #[test]
    fn deterministic_under_seed() {
        let plan = TrialPlan { d: p(3), l: 8, kind: PercKind::Honeycomb, trials: 300, seed: 42, delete_p: Some(0.1) };
        assert_eq!(percolation_probability(&plan).unwrap(), percolation_probability(&plan).unwrap());
        let grid = [0.0, 0.2, 1.0];
        let a = stability_curve(p(3), PercKind::Square, 6, 5, 4, 9, &grid).unwrap();
        let b = stability_curve(p(3), PercKind::Square, 6, 5, 4, 9, &grid).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[2].1.prob, 0.0);
    }

    #[test]
    fn zero_deletion_equals_plain_estimate() {
        let curve = stability_curve(p(5), PercKind::Honeycomb, 6, 40, 1, 3, &[0.0]).unwrap();
        let plain = percolation_probability(&TrialPlan {
            d: p(5),
            l: 6,
            kind: PercKind::Honeycomb,
            trials: 40,
            seed: 3,
            delete_p: None,
        })
        .unwrap();
        assert_eq!(curve[0].1.successes, plain.successes);
    }

    #[test]
    fn plan_validation() {
        let mut plan = TrialPlan { d: p(3), l: 8, kind: PercKind::Square, trials: 0, seed: 1, delete_p: None };
        assert!(plan.validate().is_err());
        plan.trials = 1;
        plan.delete_p = Some(1.5);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn csv_header() {
        let row = CurveRow { kind: PercKind::Square, d: 3, l: 10, trials: 5, seed: 7, delete_p: 0.0, prob: 0.4, stderr: 0.2 };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("kind,d,L,trials,seed,delete_p,prob,stderr"));
        assert!(text.lines().nth(1).unwrap().starts_with("square,3,10,5,7,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn union_find_agrees_with_bfs(seed in any::<u64>(), d in prop::sample::select(vec![2u32, 3, 5]), l in 2usize..=10, sq in any::<bool>()) {
            let kind = if sq { PercKind::Square } else { PercKind::Honeycomb };
            let g = PlaquetteGeometry::new(kind, l).unwrap();
            let cfg = sample_config(p(d), &g, &mut trial_rng(seed, 0));
            prop_assert_eq!(spans(&g, &cfg), spans_bfs(&g, &cfg.occupied));
            let mut uf = clusters(&g, &cfg.occupied);
            prop_assert_eq!(uf.cluster_count() + uf.merges(), g.vertex_count());
        }

        #[test]
        fn adding_edges_never_breaks_spanning(seed in any::<u64>(), l in 2usize..=8, extra in prop::collection::vec(any::<prop::sample::Index>(), 1..20)) {
            let g = PlaquetteGeometry::new(PercKind::Honeycomb, l).unwrap();
            let cfg = sample_config(p(3), &g, &mut trial_rng(seed, 1));
            let mut occ = cfg.occupied.clone();
            let mut before = spans_edges(&g, &occ);
            for i in extra {
                let j = i.index(occ.len());
                occ[j] = true;
                let after = spans_edges(&g, &occ);
                prop_assert!(!before || after);
                before = after;
            }
        }
    }
}
