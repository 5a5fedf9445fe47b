//! Coarse-graining a percolated graph-like state into a w×w square cluster-like state.
//!
//! The schedule has three stages, each a list of rule applications:
//! 1. clean: every qudit outside the selected network is measured in Z;
//! 2. merge: the two T-junctions of each crossing are fused into one four-leg
//!    vertex (ZX^k singles down to one qudit between them, then an X pair);
//! 3. shorten: each wire between neighbouring grid vertices becomes a direct edge
//!    via X pairs, with one ZX^k single when the wire has odd length.
//!
//! The network is a frame cycle (the outer boundary of a union of bounded faces
//! of the occupied graph) carrying w−2 horizontal and w−2 vertical chords inside
//! it. A network is accepted only if it is an induced subgraph, so stage 1 leaves
//! no excessive edge behind. [`clean_junction`] resolves the junction patterns a
//! hand-picked, non-induced network can have.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::hash::Hash;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GraphLikeState;
use crate::error::{Error, Result};
use crate::percolation::{sample_config, PercKind, PlaquetteGeometry, UnionFind};
use crate::statevector::{fidelity_up_to_phase, MeasBasis};
use crate::zd::PrimeDim;

/// Planar embedding of the host lattice: vertex positions and face cycles.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Embedding {
    pub pos: Vec<(f64, f64)>,
    pub faces: Vec<Vec<usize>>,
    /// Width and height of one face in position units.
    pub cell: (f64, f64),
    /// Linear size in faces; sets the default block size.
    pub l: usize,
}

impl Embedding {
    pub fn new(pos: Vec<(f64, f64)>, faces: Vec<Vec<usize>>, cell: (f64, f64), l: usize) -> Result<Self> {
        if let Some(&v) = faces.iter().flatten().find(|&&v| v >= pos.len()) {
            return Err(Error::SiteOutOfRange { site: v, n: pos.len() });
        }
        if !(cell.0 > 0.0 && cell.1 > 0.0) {
            return Err(Error::Invalid("cell size must be positive".into()));
        }
        Ok(Embedding { pos, faces, cell, l })
    }

    pub fn from_geometry(geom: &PlaquetteGeometry) -> Self {
        let cell = match geom.kind {
            PercKind::Honeycomb => (2.0, 1.0),
            PercKind::Square => (1.0, 1.0),
        };
        Embedding {
            pos: geom.pos.iter().map(|&(x, y)| (x as f64, y as f64)).collect(),
            faces: geom.faces.iter().map(|f| f.iter().map(|&v| v as usize).collect()).collect(),
            cell,
            l: geom.l,
        }
    }

    fn rank(&self, v: usize) -> (i64, i64) {
        let (x, y) = self.pos[v];
        ((x * 1024.0).round() as i64, (y * 1024.0).round() as i64)
    }
}

/// Graph-like state left after domain measurement: every occupied edge carries
/// CZ^{k(m_a − m_b)} for its flanking plaquettes (a, b). Isolated vertices stay.
pub fn residual_graph(geom: &PlaquetteGeometry, d: PrimeDim, k: u32, outcomes: &[u32]) -> Result<GraphLikeState> {
    if outcomes.len() != geom.plaquette_count() {
        return Err(Error::ShapeMismatch(format!("{} outcomes for {} plaquettes", outcomes.len(), geom.plaquette_count())));
    }
    let mut g = GraphLikeState::new(d, geom.vertex_count());
    for (&(a, b), &(pa, pb)) in geom.edges.iter().zip(&geom.flanks) {
        let w = k as i64 * (outcomes[pa as usize] as i64 - outcomes[pb as usize] as i64);
        if d.reduce(w) != 0 {
            g.set_edge(a as usize, b as usize, w)?;
        }
    }
    Ok(g)
}

/// A sampled residual graph together with its embedding.
#[derive(Clone, Debug, Serialize)]
pub struct Instance {
    pub geometry: PlaquetteGeometry,
    pub outcomes: Vec<u32>,
    pub graph: GraphLikeState,
    pub embedding: Embedding,
}

impl Instance {
    pub fn from_outcomes(geometry: PlaquetteGeometry, d: PrimeDim, k: u32, outcomes: Vec<u32>) -> Result<Self> {
        let graph = residual_graph(&geometry, d, k, &outcomes)?;
        let embedding = Embedding::from_geometry(&geometry);
        Ok(Instance { geometry, outcomes, graph, embedding })
    }

    /// Plaquette outcomes drawn from ChaCha8 seeded with `seed`.
    pub fn sample(d: PrimeDim, kind: PercKind, l: usize, k: u32, seed: u64) -> Result<Self> {
        let geometry = PlaquetteGeometry::new(kind, l)?;
        let cfg = sample_config(d, &geometry, &mut ChaCha8Rng::seed_from_u64(seed));
        Self::from_outcomes(geometry, d, k, cfg.outcomes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clean,
    Merge,
    Shorten,
}

/// Basis of the frame-free state; the physical basis is the frame-adapted one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StepBasis {
    Z,
    X,
    ZXk(u32),
}

impl StepBasis {
    pub fn underlying(self) -> MeasBasis {
        match self {
            StepBasis::Z => MeasBasis::Computational,
            StepBasis::X => MeasBasis::Fourier,
            StepBasis::ZXk(k) => MeasBasis::ZXk(k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub stage: Stage,
    pub vertex: usize,
    pub basis: StepBasis,
    pub outcome: u32,
    /// For an X pair: the degree-2 neighbour measured together with `vertex`, and its outcome.
    pub partner: Option<(usize, u32)>,
}

impl ScheduleStep {
    pub fn apply(&self, g: &mut GraphLikeState) -> Result<()> {
        match (self.basis, self.partner) {
            (StepBasis::Z, None) => g.measure_z(self.vertex, self.outcome),
            (StepBasis::X, Some((b, n))) => g.measure_x_pair(self.vertex, b, self.outcome, n).map(|_| ()),
            (StepBasis::ZXk(k), None) => g.measure_zxk(self.vertex, k, self.outcome),
            _ => Err(Error::Invalid(format!("malformed schedule step {self:?}"))),
        }
    }

    pub fn measured(&self) -> Vec<usize> {
        let mut v = vec![self.vertex];
        v.extend(self.partner.map(|p| p.0));
        v
    }

    /// Closed neighbourhoods of the measured qudits: everything the rule reads or writes.
    pub fn support(&self, g: &GraphLikeState) -> Result<BTreeSet<usize>> {
        let mut s = BTreeSet::new();
        for v in self.measured() {
            if !g.contains(v) {
                return Err(Error::MissingVertex(v));
            }
            s.insert(v);
            s.extend(g.neighbors(v).map(|(u, _)| u));
        }
        Ok(s)
    }
}

/// Fidelity between the rule's prediction and forced-outcome measurement of
/// `g.to_statevector()` in the frame-adapted bases.
pub fn oracle_fidelity(g: &GraphLikeState, step: &ScheduleStep) -> Result<f64> {
    let map = g.site_map();
    let mut s = g.to_statevector()?;
    let mut ops = vec![(step.vertex, step.outcome)];
    ops.extend(step.partner);
    ops.sort_by_key(|&(v, _)| Reverse(map.get(&v).copied()));
    for (v, m) in ops {
        let basis = g.physical_basis(v, &step.basis.underlying())?;
        s = s.measure_forced(map[&v], &basis, m)?.state;
    }
    let mut h = g.clone();
    step.apply(&mut h)?;
    fidelity_up_to_phase(&h.to_statevector()?, &s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExcerptReport {
    pub checked: usize,
    /// Steps whose support exceeded the qudit limit.
    pub skipped: usize,
    pub worst_infidelity: f64,
    /// Indices of steps that failed the oracle or disagreed with the global update.
    pub failures: Vec<usize>,
}

impl ExcerptReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Replays `schedule` from `start`. Each step whose support has at most
/// `max_qudits` qudits is checked on that excerpt against forced-outcome
/// measurement, and the excerpt's symbolic result must agree with the global one.
pub fn verify_excerpts(start: &GraphLikeState, schedule: &[ScheduleStep], max_qudits: usize) -> Result<ExcerptReport> {
    let mut g = start.clone();
    let mut report = ExcerptReport::default();
    for (i, step) in schedule.iter().enumerate() {
        let support = step.support(&g)?;
        if support.len() > max_qudits {
            report.skipped += 1;
            step.apply(&mut g)?;
            continue;
        }
        let excerpt = g.restrict(&support);
        let infidelity = 1.0 - oracle_fidelity(&excerpt, step)?;
        let mut local = excerpt;
        step.apply(&mut local)?;
        step.apply(&mut g)?;
        let after: BTreeSet<usize> = local.vertices().collect();
        report.checked += 1;
        report.worst_infidelity = report.worst_infidelity.max(infidelity);
        if infidelity > 1e-9 || g.restrict(&after) != local {
            report.failures.push(i);
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReduceOptions {
    /// Side of the target square grid.
    pub w: usize,
    /// Minimum grid cell size in faces; defaults to L/5.
    pub block: Option<usize>,
    /// Seeds the measurement outcomes.
    pub seed: u64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { w: 2, block: None, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Reduction {
    pub schedule: Vec<ScheduleStep>,
    /// Final state: exactly the w² grid vertices, frames included.
    pub graph: GraphLikeState,
    /// Vertex id of grid site (column, row) at `grid[row][col]`.
    pub grid: Vec<Vec<usize>>,
    pub network_size: usize,
    pub frame_length: usize,
}

impl Reduction {
    pub fn count(&self, stage: Stage) -> usize {
        self.schedule.iter().filter(|s| s.stage == stage).count()
    }
}

/// Measures away everything except a w×w square cluster-like state.
pub fn reduce_to_cluster(g: &GraphLikeState, emb: &Embedding, opts: &ReduceOptions) -> Result<Reduction> {
    if opts.w < 2 {
        return Err(Error::Invalid("target grid side must be >= 2".into()));
    }
    if emb.pos.len() < g.capacity() {
        return Err(Error::ShapeMismatch(format!("{} positions for {} vertices", emb.pos.len(), g.capacity())));
    }
    let block = opts.block.unwrap_or(emb.l / 5).max(1);
    let net = find_network(g, emb, opts.w, block)?;
    let d = g.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut h = g.clone();
    let mut schedule = Vec::new();
    let mut run = |h: &mut GraphLikeState, step: ScheduleStep| -> Result<()> {
        step.apply(h)?;
        schedule.push(step);
        Ok(())
    };

    let outside: Vec<usize> = h.vertices().filter(|v| !net.vertices.contains(v)).collect();
    for v in outside {
        let m = rng.gen_range(0..d.get());
        run(&mut h, ScheduleStep { stage: Stage::Clean, vertex: v, basis: StepBasis::Z, outcome: m, partner: None })?;
    }

    let mut rep = vec![vec![0usize; opts.w]; opts.w];
    for (row, nodes) in net.nodes.iter().enumerate() {
        for (col, seg) in nodes.iter().enumerate() {
            let t = seg.len();
            if t == 2 {
                return Err(Error::Invalid(format!("crossing ({col}, {row}) has adjacent junctions")));
            }
            if t >= 3 {
                for &v in &seg[1..t - 2] {
                    let k = pick_k(&h, v)?;
                    let m = rng.gen_range(0..d.get());
                    run(&mut h, ScheduleStep { stage: Stage::Merge, vertex: v, basis: StepBasis::ZXk(k), outcome: m, partner: None })?;
                }
                let (m, n) = (rng.gen_range(0..d.get()), rng.gen_range(0..d.get()));
                let step = ScheduleStep { stage: Stage::Merge, vertex: seg[0], basis: StepBasis::X, outcome: m, partner: Some((seg[t - 2], n)) };
                run(&mut h, step)?;
            }
            rep[row][col] = seg[t - 1];
        }
    }

    for wire in &net.wires {
        let mut rest: &[usize] = wire;
        while rest.len() >= 2 {
            let (m, n) = (rng.gen_range(0..d.get()), rng.gen_range(0..d.get()));
            let step = ScheduleStep { stage: Stage::Shorten, vertex: rest[0], basis: StepBasis::X, outcome: m, partner: Some((rest[1], n)) };
            run(&mut h, step)?;
            rest = &rest[2..];
        }
        if let [v] = rest {
            let k = pick_k(&h, *v)?;
            let m = rng.gen_range(0..d.get());
            run(&mut h, ScheduleStep { stage: Stage::Shorten, vertex: *v, basis: StepBasis::ZXk(k), outcome: m, partner: None })?;
        }
    }

    check_grid(&h, &rep)?;
    Ok(Reduction { schedule, graph: h, grid: rep, network_size: net.vertices.len(), frame_length: net.frame_length })
}

/// Smallest k for a ZX^k measurement of the degree-2 vertex `v` that leaves its
/// two neighbours joined.
fn pick_k(g: &GraphLikeState, v: usize) -> Result<u32> {
    let nb: Vec<(usize, u32)> = g.neighbors(v).collect();
    if nb.len() != 2 {
        return Err(Error::BadDegree { vertex: v, expected: 2, actual: nb.len() });
    }
    let d = g.dim();
    let r = g.weight(nb[0].0, nb[1].0) as i64;
    let ww = nb[0].1 as i64 * nb[1].1 as i64;
    Ok((1..d.get()).find(|&k| d.reduce(r - k as i64 * ww) != 0).expect("at most one k cancels"))
}

fn check_grid(g: &GraphLikeState, rep: &[Vec<usize>]) -> Result<()> {
    let w = rep.len();
    let want: BTreeSet<usize> = rep.iter().flatten().copied().collect();
    let have: BTreeSet<usize> = g.vertices().collect();
    if want != have || want.len() != w * w {
        return Err(Error::Invalid("reduction left vertices outside the grid".into()));
    }
    let mut edges = BTreeSet::new();
    for r in 0..w {
        for c in 0..w {
            if c + 1 < w {
                edges.insert(key(rep[r][c], rep[r][c + 1]));
            }
            if r + 1 < w {
                edges.insert(key(rep[r][c], rep[r + 1][c]));
            }
        }
    }
    let got: BTreeSet<(usize, usize)> = g.edges().into_iter().map(|(a, b, _)| (a, b)).collect();
    if got != edges {
        return Err(Error::Invalid("reduced graph is not a square grid".into()));
    }
    Ok(())
}

/// Resolves a junction whose centre wire touches `line` (the joined left and
/// right wires, in order) more than once. `center[0]` is the centre qudit nearest
/// the line. Centre qudits closer than the furthest one touching the line are
/// measured in Z; then two adjacent contacts take one ZX^k measurement, and
/// separated contacts have the line qudits between them measured in Z.
pub fn clean_junction<R: Rng + ?Sized>(
    g: &mut GraphLikeState,
    line: &[usize],
    center: &[usize],
    rng: &mut R,
) -> Result<Vec<ScheduleStep>> {
    let d = g.dim();
    let index: HashMap<usize, usize> = line.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let contacts = |g: &GraphLikeState, v: usize| -> Vec<usize> {
        let mut c: Vec<usize> = g.neighbors(v).filter_map(|(u, _)| index.get(&u).copied()).collect();
        c.sort_unstable();
        c
    };
    let far = (0..center.len())
        .rev()
        .find(|&i| g.contains(center[i]) && !contacts(g, center[i]).is_empty())
        .ok_or_else(|| Error::Invalid("centre wire does not touch the line".into()))?;
    let mut steps = Vec::new();
    let z = |g: &mut GraphLikeState, v: usize, steps: &mut Vec<ScheduleStep>, rng: &mut R| -> Result<()> {
        let step = ScheduleStep { stage: Stage::Clean, vertex: v, basis: StepBasis::Z, outcome: rng.gen_range(0..d.get()), partner: None };
        step.apply(g)?;
        steps.push(step);
        Ok(())
    };
    for &v in &center[..far] {
        z(g, v, &mut steps, rng)?;
    }
    let v = center[far];
    let hits = contacts(g, v);
    if hits.len() == 2 && hits[1] == hits[0] + 1 {
        // triangle v, x, y: measuring x with k = r_yv/(r_xy r_xv) removes y–v
        let (xi, yi, prev) = if hits[0] > 0 {
            (hits[0], hits[1], hits[0] - 1)
        } else {
            (hits[1], hits[0], hits[1] + 1)
        };
        if prev >= line.len() {
            return Err(Error::Invalid("line too short to relocate the junction".into()));
        }
        let (x, y) = (line[xi], line[yi]);
        if g.degree(x) != 3 || g.weight(x, line[prev]) == 0 {
            return Err(Error::BadDegree { vertex: x, expected: 3, actual: g.degree(x) });
        }
        let k = d.mul(g.weight(y, v), d.inv(d.mul(g.weight(x, y), g.weight(x, v)))?);
        let step = ScheduleStep { stage: Stage::Clean, vertex: x, basis: StepBasis::ZXk(k), outcome: rng.gen_range(0..d.get()), partner: None };
        step.apply(g)?;
        steps.push(step);
    } else if hits.len() >= 2 {
        for &u in &line[hits[0] + 1..hits[hits.len() - 1]] {
            if g.contains(u) {
                z(g, u, &mut steps, rng)?;
            }
        }
    }
    Ok(steps)
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

struct Network {
    vertices: BTreeSet<usize>,
    /// Branch set of grid site (col, row) at `nodes[row][col]`; crossings list
    /// their shared segment in order, everything else is a single vertex.
    nodes: Vec<Vec<Vec<usize>>>,
    /// Interior qudits of each wire between grid neighbours, in order.
    wires: Vec<Vec<usize>>,
    frame_length: usize,
}

/// Bounded-face regions of the occupied graph, hole-filled, largest first.
fn candidate_regions(g: &GraphLikeState, emb: &Embedding) -> (Vec<Vec<bool>>, HashMap<(usize, usize), Vec<usize>>) {
    let nf = emb.faces.len();
    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, cyc) in emb.faces.iter().enumerate() {
        for i in 0..cyc.len() {
            edge_faces.entry(key(cyc[i], cyc[(i + 1) % cyc.len()])).or_default().push(f);
        }
    }
    let present = |a: usize, b: usize| g.contains(a) && g.contains(b) && g.weight(a, b) != 0;
    let mut perimeter = vec![false; nf];
    let mut uf = UnionFind::new(nf);
    let mut adj = vec![Vec::new(); nf];
    for (&(a, b), fs) in &edge_faces {
        match fs[..] {
            [f] => perimeter[f] = true,
            [f1, f2] => {
                adj[f1].push(f2);
                adj[f2].push(f1);
                if !present(a, b) {
                    uf.union(f1 as u32, f2 as u32);
                }
            }
            _ => {}
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let outer: HashSet<u32> = (0..nf).filter(|&f| perimeter[f]).map(|f| uf.find(f as u32)).collect();
    let bounded: Vec<bool> = (0..nf).map(|f| !outer.contains(&uf.find(f as u32))).collect();

    let mut seen = vec![false; nf];
    let mut regions = Vec::new();
    for s in 0..nf {
        if !bounded[s] || seen[s] {
            continue;
        }
        let mut inr = vec![false; nf];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(f) = stack.pop() {
            inr[f] = true;
            for &u in &adj[f] {
                if bounded[u] && !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        // fill holes: faces not reachable from the perimeter around the region
        let mut reach = vec![false; nf];
        let mut stack: Vec<usize> = (0..nf).filter(|&f| perimeter[f] && !inr[f]).collect();
        for &f in &stack {
            reach[f] = true;
        }
        while let Some(f) = stack.pop() {
            for &u in &adj[f] {
                if !inr[u] && !reach[u] {
                    reach[u] = true;
                    stack.push(u);
                }
            }
        }
        for f in 0..nf {
            if !reach[f] {
                inr[f] = true;
            }
        }
        regions.push(inr);
    }
    regions.sort_by_key(|r| Reverse(r.iter().filter(|&&x| x).count()));
    (regions, edge_faces)
}

/// Boundary of `region` as a counter-clockwise cycle, if it is one.
fn boundary_cycle(g: &GraphLikeState, emb: &Embedding, region: &[bool], edge_faces: &HashMap<(usize, usize), Vec<usize>>) -> Option<Vec<usize>> {
    let mut nbr: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (&(a, b), fs) in edge_faces {
        let inside = fs.iter().filter(|&&f| region[f]).count();
        if inside == 1 && fs.len() == 2 {
            if g.weight(a, b) == 0 {
                return None;
            }
            nbr.entry(a).or_default().push(b);
            nbr.entry(b).or_default().push(a);
        } else if inside == 1 {
            return None;
        }
    }
    if nbr.values().any(|n| n.len() != 2) {
        return None;
    }
    let start = *nbr.keys().next()?;
    let mut cycle = vec![start];
    let mut prev = start;
    let mut cur = nbr[&start][0];
    while cur != start {
        cycle.push(cur);
        let next = if nbr[&cur][0] == prev { nbr[&cur][1] } else { nbr[&cur][0] };
        prev = cur;
        cur = next;
    }
    if cycle.len() != nbr.len() {
        return None;
    }
    orient(emb, &mut cycle);
    Some(cycle)
}

fn orient(emb: &Embedding, cycle: &mut [usize]) {
    let n = cycle.len();
    let area: f64 = (0..n)
        .map(|i| {
            let (a, b) = (emb.pos[cycle[i]], emb.pos[cycle[(i + 1) % n]]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    if area < 0.0 {
        cycle.reverse();
    }
}

/// Shortcuts chords until the cycle is induced; keeps the longer side each time.
fn remove_chords(g: &GraphLikeState, emb: &Embedding, mut cycle: Vec<usize>) -> Vec<usize> {
    loop {
        let n = cycle.len();
        let index: HashMap<usize, usize> = cycle.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let chord = (0..n).find_map(|i| {
            g.neighbors(cycle[i]).find_map(|(u, _)| {
                let j = *index.get(&u)?;
                let gap = (j + n - i) % n;
                (gap > 1 && gap < n - 1 && i < j).then_some((i, j))
            })
        });
        let Some((i, j)) = chord else { return cycle };
        let a: Vec<usize> = cycle[i..=j].to_vec();
        let b: Vec<usize> = cycle[j..].iter().chain(&cycle[..=i]).copied().collect();
        cycle = if a.len() >= b.len() { a } else { b };
        orient(emb, &mut cycle);
    }
}

/// Cycle indices of the bottom-left, bottom-right, top-right and top-left corners.
fn corners(emb: &Embedding, cycle: &[usize]) -> [usize; 4] {
    let n = cycle.len();
    let score = |i: usize, sx: f64, sy: f64| {
        let (x, y) = emb.pos[cycle[i]];
        sx * x / emb.cell.0 + sy * y / emb.cell.1
    };
    let pick = |sx: f64, sy: f64| -> usize {
        (0..n)
            .min_by(|&a, &b| score(a, sx, sy).total_cmp(&score(b, sx, sy)).then(emb.rank(cycle[a]).cmp(&emb.rank(cycle[b]))))
            .expect("non-empty cycle")
    };
    let c = [pick(1.0, 1.0), pick(-1.0, 1.0), pick(-1.0, -1.0), pick(1.0, -1.0)];
    let off: Vec<usize> = c.iter().map(|&i| (i + n - c[0]) % n).collect();
    if off[1] > 0 && off[1] < off[2] && off[2] < off[3] {
        c
    } else {
        [c[0], (c[0] + n / 4) % n, (c[0] + n / 2) % n, (c[0] + 3 * n / 4) % n]
    }
}

fn walk(cycle: &[usize], from: usize, to: usize) -> Vec<usize> {
    let n = cycle.len();
    let len = (to + n - from) % n;
    (0..=len).map(|s| cycle[(from + s) % n]).collect()
}

fn inside(poly: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut c = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let ((xi, yi), (xj, yj)) = (poly[i], poly[j]);
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            c = !c;
        }
        j = i;
    }
    c
}

/// Dijkstra over arbitrary states with a positional tie-break; returns the state path.
fn search<S: Copy + Eq + Hash + Ord>(
    starts: Vec<(u64, S)>,
    mut expand: impl FnMut(S) -> Vec<(u64, S)>,
    is_goal: impl Fn(S) -> bool,
    rank: impl Fn(S) -> (i64, i64),
) -> Option<Vec<S>> {
    let mut best: HashMap<S, u64> = HashMap::new();
    let mut parent: HashMap<S, Option<S>> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for (c, s) in starts {
        if best.get(&s).is_none_or(|&b| c < b) {
            best.insert(s, c);
            parent.insert(s, None);
            heap.push(Reverse((c, rank(s), s)));
        }
    }
    while let Some(Reverse((c, _, s))) = heap.pop() {
        if best[&s] < c {
            continue;
        }
        if is_goal(s) {
            let mut path = vec![s];
            let mut cur = s;
            while let Some(&Some(p)) = parent.get(&cur) {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for (dc, t) in expand(s) {
            let nc = c + dc;
            if best.get(&t).is_none_or(|&b| nc < b) {
                best.insert(t, nc);
                parent.insert(t, Some(s));
                heap.push(Reverse((nc, rank(t), t)));
            }
        }
    }
    None
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum St {
    /// Off the horizontal wires; `exit` is the wire qudit just left, if any.
    Free { v: usize, crossed: usize, exit: usize },
    /// Walking along horizontal wire `crossed`.
    On { v: usize, crossed: usize, dir: i8, len: u8 },
}

impl St {
    fn vertex(self) -> usize {
        match self {
            St::Free { v, .. } | St::On { v, .. } => v,
        }
    }
}

fn find_network(g: &GraphLikeState, emb: &Embedding, w: usize, block: usize) -> Result<Network> {
    let (regions, edge_faces) = candidate_regions(g, emb);
    if regions.is_empty() {
        return Err(Error::Subcritical("the occupied graph encloses no face".into()));
    }
    let need = ((w - 1) * block) as f64;
    let mut widest = 0.0f64;
    for region in &regions {
        let Some(cycle) = boundary_cycle(g, emb, region, &edge_faces) else { continue };
        let cycle = remove_chords(g, emb, cycle);
        let xs = cycle.iter().map(|&v| emb.pos[v].0 / emb.cell.0);
        let ys = cycle.iter().map(|&v| emb.pos[v].1 / emb.cell.1);
        let span_x = xs.clone().fold(f64::MIN, f64::max) - xs.fold(f64::MAX, f64::min);
        let span_y = ys.clone().fold(f64::MIN, f64::max) - ys.fold(f64::MAX, f64::min);
        widest = widest.max(span_x.min(span_y));
        if span_x + 1e-9 < need || span_y + 1e-9 < need {
            continue;
        }
        if let Some(net) = network_in_frame(g, emb, &cycle, w) {
            return Ok(net);
        }
    }
    Err(Error::Subcritical(format!(
        "no induced {w}x{w} network: widest enclosed frame spans {widest:.1} cells, need {need:.0}"
    )))
}

fn network_in_frame(g: &GraphLikeState, emb: &Embedding, cycle: &[usize], w: usize) -> Option<Network> {
    let n = cycle.len();
    let [bl, br, tr, tl] = corners(emb, cycle);
    let mut bottom = walk(cycle, bl, br);
    let right = walk(cycle, br, tr);
    let mut top = walk(cycle, tr, tl);
    let mut left = walk(cycle, tl, bl);
    top.reverse();
    left.reverse();
    let _ = &mut bottom;
    let on_cycle: HashSet<usize> = cycle.iter().copied().collect();
    let mut side: HashMap<usize, Side> = HashMap::new();
    for (chain, s) in [(&bottom, Side::Bottom), (&right, Side::Right), (&top, Side::Top), (&left, Side::Left)] {
        for &v in &chain[1..chain.len() - 1] {
            side.insert(v, s);
        }
    }
    let poly: Vec<(f64, f64)> = cycle.iter().map(|&v| emb.pos[v]).collect();
    let xs = poly.iter().map(|p| p.0);
    let ys = poly.iter().map(|p| p.1);
    let (xmin, xmax) = (xs.clone().fold(f64::MAX, f64::min), xs.fold(f64::MIN, f64::max));
    let (ymin, ymax) = (ys.clone().fold(f64::MAX, f64::min), ys.fold(f64::MIN, f64::max));

    let nh = w - 2;
    let mut hwires: Vec<Vec<usize>> = Vec::new();
    let mut vwires: Vec<(Vec<usize>, Vec<(usize, Vec<usize>)>)> = Vec::new();
    if nh > 0 {
        let interior: HashSet<usize> = g.vertices().filter(|v| !on_cycle.contains(v) && inside(&poly, emb.pos[*v])).collect();
        let cnb = |v: usize| -> Vec<usize> { g.neighbors(v).map(|(u, _)| u).filter(|u| on_cycle.contains(u)).collect() };
        let attach_on = |v: usize, s: Side, used: &HashSet<usize>| -> Option<usize> {
            match cnb(v)[..] {
                [a] if side.get(&a) == Some(&s) && !used.contains(&a) => Some(a),
                _ => None,
            }
        };
        let mut used_attach: HashSet<usize> = HashSet::new();
        let mut taken: HashSet<usize> = HashSet::new();
        for r in 1..=nh {
            let yt = ymin + r as f64 * (ymax - ymin) / (w - 1) as f64;
            let cost = |v: usize| 100 + (100.0 * (emb.pos[v].1 - yt).abs() / emb.cell.1) as u64;
            let ok = |v: usize| interior.contains(&v) && !taken.contains(&v) && g.neighbors(v).all(|(u, _)| !taken.contains(&u));
            let starts: Vec<(u64, usize)> =
                interior.iter().copied().filter(|&v| ok(v) && attach_on(v, Side::Left, &used_attach).is_some()).map(|v| (cost(v), v)).collect();
            let path = search(
                starts,
                |v| {
                    if attach_on(v, Side::Right, &used_attach).is_some() {
                        return Vec::new();
                    }
                    g.neighbors(v)
                        .map(|(u, _)| u)
                        .filter(|&u| ok(u) && (cnb(u).is_empty() || attach_on(u, Side::Right, &used_attach).is_some()))
                        .map(|u| (cost(u), u))
                        .collect()
                },
                |v| attach_on(v, Side::Right, &used_attach).is_some(),
                |v| emb.rank(v),
            )?;
            used_attach.insert(attach_on(path[0], Side::Left, &used_attach)?);
            used_attach.insert(attach_on(*path.last()?, Side::Right, &used_attach)?);
            taken.extend(path.iter().copied());
            hwires.push(path);
        }
        let lpos: HashMap<usize, usize> = left.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        hwires.sort_by_key(|p| lpos[&cnb(p[0])[0]]);
        let mut hof: HashMap<usize, (usize, usize)> = HashMap::new();
        for (i, p) in hwires.iter().enumerate() {
            for (j, &v) in p.iter().enumerate() {
                hof.insert(v, (i, j));
            }
        }
        let hn = |v: usize| -> Vec<usize> { g.neighbors(v).map(|(u, _)| u).filter(|u| hof.contains_key(u)).collect() };
        let subset = |xs: &[usize], allowed: &[usize]| xs.iter().all(|x| allowed.contains(x));

        let mut used_v: HashSet<usize> = HashSet::new();
        let mut used_free: HashSet<usize> = HashSet::new();
        for c in 1..=nh {
            let xt = xmin + c as f64 * (xmax - xmin) / (w - 1) as f64;
            let cost = |v: usize| 100 + (100.0 * (emb.pos[v].0 - xt).abs() / emb.cell.0) as u64;
            let free_ok = |u: usize| {
                interior.contains(&u)
                    && !hof.contains_key(&u)
                    && !used_v.contains(&u)
                    && g.neighbors(u).all(|(x, _)| !used_free.contains(&x))
            };
            let terminal = |u: usize, crossed: usize| crossed == nh && attach_on(u, Side::Top, &used_attach).is_some();
            let starts: Vec<(u64, St)> = interior
                .iter()
                .copied()
                .filter(|&u| free_ok(u) && attach_on(u, Side::Bottom, &used_attach).is_some())
                .map(|u| (cost(u), St::Free { v: u, crossed: 0, exit: NONE }))
                .collect();
            let expand = |s: St| -> Vec<(u64, St)> {
                let mut out = Vec::new();
                match s {
                    St::Free { v, crossed, exit } => {
                        if terminal(v, crossed) {
                            return out;
                        }
                        let hv = hn(v);
                        for (u, _) in g.neighbors(v) {
                            if on_cycle.contains(&u) {
                                continue;
                            }
                            if let Some(&(wi, _)) = hof.get(&u) {
                                if wi == crossed && crossed < nh && !used_v.contains(&u) && subset(&hv, &[exit, u]) {
                                    out.push((100, St::On { v: u, crossed, dir: 0, len: 1 }));
                                }
                                continue;
                            }
                            if !free_ok(u) || !subset(&hv, &[exit]) {
                                continue;
                            }
                            if cnb(u).is_empty() || (terminal(u, crossed) && hn(u).is_empty()) {
                                out.push((cost(u), St::Free { v: u, crossed, exit: NONE }));
                            }
                        }
                    }
                    St::On { v, crossed, dir, len } => {
                        let (wi, j) = hof[&v];
                        let path = &hwires[wi];
                        for step in [-1i8, 1] {
                            if dir != 0 && dir != step {
                                continue;
                            }
                            let jj = j as i64 + step as i64;
                            if jj < 0 || jj as usize >= path.len() {
                                continue;
                            }
                            let u = path[jj as usize];
                            if !used_v.contains(&u) {
                                out.push((100, St::On { v: u, crossed, dir: step, len: (len + 1).min(3) }));
                            }
                        }
                        if len == 1 || len >= 3 {
                            for (u, _) in g.neighbors(v) {
                                if on_cycle.contains(&u) || hof.contains_key(&u) || !free_ok(u) {
                                    continue;
                                }
                                let next = crossed + 1;
                                if cnb(u).is_empty() || (terminal(u, next) && subset(&hn(u), &[v])) {
                                    out.push((cost(u), St::Free { v: u, crossed: next, exit: v }));
                                }
                            }
                        }
                    }
                }
                out
            };
            let states = search(
                starts,
                expand,
                |s| matches!(s, St::Free { v, crossed, .. } if terminal(v, crossed)),
                |s| emb.rank(s.vertex()),
            )?;
            let verts: Vec<usize> = states.iter().map(|s| s.vertex()).collect();
            if verts.iter().collect::<HashSet<_>>().len() != verts.len() {
                return None;
            }
            let mut segs: Vec<(usize, Vec<usize>)> = Vec::new();
            for s in &states {
                if let St::On { v, crossed, .. } = *s {
                    match segs.last_mut() {
                        Some((c, seg)) if *c == crossed => seg.push(v),
                        _ => segs.push((crossed, vec![v])),
                    }
                }
            }
            used_attach.insert(attach_on(verts[0], Side::Bottom, &used_attach)?);
            used_attach.insert(attach_on(*verts.last()?, Side::Top, &used_attach)?);
            for s in &states {
                used_v.insert(s.vertex());
                if let St::Free { v, .. } = *s {
                    used_free.insert(v);
                }
            }
            vwires.push((verts, segs));
        }
        let bpos: HashMap<usize, usize> = bottom.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        vwires.sort_by_key(|(p, _)| bpos[&cnb(p[0])[0]]);
    }

    // assemble chains: each is a vertex list with grid nodes at index ranges
    let mut nodes: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); w]; w];
    let mut chains: Vec<(Vec<usize>, Vec<(usize, usize)>)> = Vec::new();
    let set_node = |nodes: &mut Vec<Vec<Vec<usize>>>, col: usize, row: usize, seg: Vec<usize>| {
        if nodes[row][col].is_empty() {
            nodes[row][col] = seg;
        }
    };
    let attach_index = |chain: &[usize], v: usize| chain.iter().position(|&x| x == v);
    let cyc_nb = |v: usize| g.neighbors(v).map(|(u, _)| u).find(|u| on_cycle.contains(u));
    // frame sides
    let mut side_chain = |chain: &Vec<usize>, ends: [(usize, usize); 2], attaches: Vec<usize>, horizontal: bool, nodes: &mut Vec<Vec<Vec<usize>>>| -> Option<()> {
        let mut ranges = vec![(0, 0)];
        set_node(nodes, ends[0].0, ends[0].1, vec![chain[0]]);
        for (i, a) in attaches.into_iter().enumerate() {
            let p = attach_index(chain, a)?;
            ranges.push((p, p));
            let (col, row) = if horizontal { (i + 1, ends[0].1) } else { (ends[0].0, i + 1) };
            set_node(nodes, col, row, vec![a]);
        }
        let last = chain.len() - 1;
        ranges.push((last, last));
        set_node(nodes, ends[1].0, ends[1].1, vec![chain[last]]);
        if ranges.windows(2).any(|p| p[0].1 >= p[1].0) {
            return None;
        }
        chains.push((chain.clone(), ranges));
        Some(())
    };
    let vb: Vec<usize> = vwires.iter().map(|(p, _)| cyc_nb(p[0])).collect::<Option<_>>()?;
    let vt: Vec<usize> = vwires.iter().map(|(p, _)| cyc_nb(*p.last().unwrap())).collect::<Option<_>>()?;
    let hl: Vec<usize> = hwires.iter().map(|p| cyc_nb(p[0])).collect::<Option<_>>()?;
    let hr: Vec<usize> = hwires.iter().map(|p| cyc_nb(*p.last().unwrap())).collect::<Option<_>>()?;
    side_chain(&bottom, [(0, 0), (w - 1, 0)], vb.clone(), true, &mut nodes)?;
    side_chain(&top, [(0, w - 1), (w - 1, w - 1)], vt.clone(), true, &mut nodes)?;
    side_chain(&left, [(0, 0), (0, w - 1)], hl.clone(), false, &mut nodes)?;
    side_chain(&right, [(w - 1, 0), (w - 1, w - 1)], hr.clone(), false, &mut nodes)?;
    // horizontal chords
    for (r, p) in hwires.iter().enumerate() {
        let chain: Vec<usize> = std::iter::once(hl[r]).chain(p.iter().copied()).chain(std::iter::once(hr[r])).collect();
        let mut ranges = vec![(0, 0)];
        for (c, (_, segs)) in vwires.iter().enumerate() {
            let seg = &segs.iter().find(|(h, _)| *h == r)?.1;
            let idx: Vec<usize> = seg.iter().map(|&v| attach_index(&chain, v)).collect::<Option<_>>()?;
            let (lo, hi) = (*idx.iter().min()?, *idx.iter().max()?);
            ranges.push((lo, hi));
            set_node(&mut nodes, c + 1, r + 1, chain[lo..=hi].to_vec());
        }
        let last = chain.len() - 1;
        ranges.push((last, last));
        if ranges.windows(2).any(|p| p[0].1 >= p[1].0) {
            return None;
        }
        chains.push((chain, ranges));
    }
    // vertical chords
    for (c, (p, segs)) in vwires.iter().enumerate() {
        let chain: Vec<usize> = std::iter::once(vb[c]).chain(p.iter().copied()).chain(std::iter::once(vt[c])).collect();
        let mut ranges = vec![(0, 0)];
        for (_, seg) in segs {
            let idx: Vec<usize> = seg.iter().map(|&v| attach_index(&chain, v)).collect::<Option<_>>()?;
            ranges.push((*idx.iter().min()?, *idx.iter().max()?));
        }
        let last = chain.len() - 1;
        ranges.push((last, last));
        if segs.len() != nh || ranges.windows(2).any(|p| p[0].1 >= p[1].0) {
            return None;
        }
        chains.push((chain, ranges));
    }

    let mut vertices: BTreeSet<usize> = cycle.iter().copied().collect();
    let mut expected: BTreeSet<(usize, usize)> = (0..n).map(|i| key(cycle[i], cycle[(i + 1) % n])).collect();
    let mut wires = Vec::new();
    for (chain, ranges) in &chains {
        vertices.extend(chain.iter().copied());
        expected.extend(chain.windows(2).map(|e| key(e[0], e[1])));
        if !chain.iter().any(|v| on_cycle.contains(v)) || chain.len() >= 2 {
            for p in ranges.windows(2) {
                wires.push(chain[p[0].1 + 1..p[1].0].to_vec());
            }
        }
    }
    if nodes.iter().flatten().any(|s| s.is_empty()) {
        return None;
    }
    // the network must be an induced subgraph
    for &v in &vertices {
        for (u, _) in g.neighbors(v) {
            if vertices.contains(&u) && !expected.contains(&key(u, v)) {
                return None;
            }
        }
    }
    if expected.iter().any(|&(a, b)| g.weight(a, b) == 0) {
        return None;
    }
    Some(Network { vertices, nodes, wires, frame_length: n })
}
