//! Three-colored triangulated lattices and the CCZ resource state built on them.
//!
//! Colors are 0, 1, 2; color 2 is always the domain sublattice (one class of the
//! triangular lattice, the square centers of Union-Jack). A triangle's sign is +1
//! when its colors 0 → 1 → 2 run counterclockwise, so triangles sharing an edge
//! have opposite signs. The resource state is ∏_{+} CCZ^k ∏_{−} CCZ^{−k} |+⟩^{⊗n}.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphlike::GraphLikeState;
use crate::statevector::{fidelity_up_to_phase, LocalUnitary, MeasBasis, StateVector, DEFAULT_CAP};
use crate::zd::PrimeDim;

pub const DOMAIN_COLOR: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LatticeKind {
    Triangular,
    UnionJack,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub x: f64,
    pub y: f64,
    pub color: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangle {
    pub sites: [usize; 3],
    pub sign: i8,
    /// Unwrapped planar positions of `sites`, used for orientation.
    pub pos: [(f64, f64); 3],
}

/// A residual-lattice edge and the (domain site, triangle sign) pairs flanking it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEdge {
    pub a: usize,
    pub b: usize,
    pub flanks: Vec<(usize, i8)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub kind: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    pub boundary: Boundary,
    pub sites: Vec<Site>,
    pub triangles: Vec<Triangle>,
    pub domain: Vec<usize>,
    pub residual_sites: Vec<usize>,
    pub residual_edges: Vec<ResidualEdge>,
}

fn orientation(p: &[(f64, f64); 3]) -> f64 {
    (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0)
}

/// Sign from the counterclockwise-ness of colors 0, 1, 2.
fn color_sign(sites: &[Site], tri: [usize; 3], pos: [(f64, f64); 3]) -> Result<i8> {
    let mut by_color = [None; 3];
    for (i, &s) in tri.iter().enumerate() {
        let c = sites[s].color as usize;
        if by_color[c].replace(pos[i]).is_some() {
            return Err(Error::Invalid(format!("triangle {tri:?} repeats color {c}")));
        }
    }
    let p = [by_color[0].unwrap(), by_color[1].unwrap(), by_color[2].unwrap()];
    Ok(if orientation(&p) > 0.0 { 1 } else { -1 })
}

impl Lattice {
    fn assemble(
        kind: LatticeKind,
        lx: usize,
        ly: usize,
        boundary: Boundary,
        sites: Vec<Site>,
        raw: Vec<([usize; 3], [(f64, f64); 3])>,
    ) -> Result<Self> {
        let mut triangles = Vec::with_capacity(raw.len());
        for (tri, pos) in raw {
            let sign = color_sign(&sites, tri, pos)?;
            triangles.push(Triangle { sites: tri, sign, pos });
        }
        let domain: Vec<usize> = (0..sites.len()).filter(|&s| sites[s].color == DOMAIN_COLOR).collect();
        let residual_sites: Vec<usize> = (0..sites.len()).filter(|&s| sites[s].color != DOMAIN_COLOR).collect();
        let mut edges: BTreeMap<(usize, usize), Vec<(usize, i8)>> = BTreeMap::new();
        for t in &triangles {
            let dom = *t.sites.iter().find(|&&s| sites[s].color == DOMAIN_COLOR).expect("three colors");
            let mut rest = t.sites.iter().copied().filter(|&s| s != dom);
            let (a, b) = (rest.next().unwrap(), rest.next().unwrap());
            edges.entry((a.min(b), a.max(b))).or_default().push((dom, t.sign));
        }
        let residual_edges = edges.into_iter().map(|((a, b), flanks)| ResidualEdge { a, b, flanks }).collect();
        Ok(Lattice { kind, lx, ly, boundary, sites, triangles, domain, residual_sites, residual_edges })
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn sites_of_color(&self, color: u8) -> Vec<usize> {
        (0..self.sites.len()).filter(|&s| self.sites[s].color == color).collect()
    }

    /// Sub-lattice made of the triangles that contain `v`, with sites renumbered
    /// in increasing original order.
    pub fn star(&self, v: usize) -> Result<Lattice> {
        if v >= self.sites.len() {
            return Err(Error::SiteOutOfRange { site: v, n: self.sites.len() });
        }
        let keep: Vec<&Triangle> = self.triangles.iter().filter(|t| t.sites.contains(&v)).collect();
        let mut ids: Vec<usize> = keep.iter().flat_map(|t| t.sites).collect();
        ids.sort_unstable();
        ids.dedup();
        let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let sites = ids.iter().map(|&s| self.sites[s].clone()).collect();
        let raw = keep.iter().map(|t| (t.sites.map(|s| index[&s]), t.pos)).collect();
        Lattice::assemble(self.kind, self.lx, self.ly, Boundary::Open, sites, raw)
    }

    /// The smallest patch around one residual vertex: three plaquettes meeting at a
    /// honeycomb junction (triangular) or four around a square-lattice vertex (Union-Jack).
    pub fn junction_patch(kind: LatticeKind) -> Result<Lattice> {
        match kind {
            LatticeKind::Triangular => {
                let lat = build_lattice(kind, 4, 4, Boundary::Open)?;
                lat.star(2 * 4 + 1)
            }
            LatticeKind::UnionJack => {
                let lat = build_lattice(kind, 2, 2, Boundary::Open)?;
                lat.star(4)
            }
        }
    }

    /// Residual vertex adjacent to every residual edge of a junction patch, if any.
    pub fn junction_center(&self) -> Option<usize> {
        self.residual_sites.iter().copied().find(|&v| self.residual_edges.iter().all(|e| e.a == v || e.b == v))
    }
}

/// Builds a triangular (colors by (x+y) mod 3) or Union-Jack lattice.
///
/// Triangular sizes count sites per row and column; periodic tori need both
/// divisible by 3 for the coloring to close. Union-Jack sizes count squares;
/// periodic tori need both even.
pub fn build_lattice(kind: LatticeKind, lx: usize, ly: usize, boundary: Boundary) -> Result<Lattice> {
    if lx < 2 || ly < 2 {
        return Err(Error::LatticeTooSmall(format!("{lx}x{ly}")));
    }
    match kind {
        LatticeKind::Triangular => triangular(lx, ly, boundary),
        LatticeKind::UnionJack => union_jack(lx, ly, boundary),
    }
}

fn triangular(lx: usize, ly: usize, boundary: Boundary) -> Result<Lattice> {
    let periodic = boundary == Boundary::Periodic;
    if periodic && (lx % 3 != 0 || ly % 3 != 0) {
        return Err(Error::LatticeTooSmall(format!("periodic triangular {lx}x{ly} needs multiples of 3")));
    }
    let h = 3f64.sqrt() / 2.0;
    let pos = |x: usize, y: usize| (x as f64 - y as f64 / 2.0, y as f64 * h);
    let id = |x: usize, y: usize| (y % ly) * lx + (x % lx);
    let mut sites = Vec::with_capacity(lx * ly);
    for y in 0..ly {
        for x in 0..lx {
            let (px, py) = pos(x, y);
            sites.push(Site { x: px, y: py, color: ((x + y) % 3) as u8 });
        }
    }
    let (nx, ny) = if periodic { (lx, ly) } else { (lx - 1, ly - 1) };
    let mut raw = Vec::new();
    for y in 0..ny {
        for x in 0..nx {
            raw.push(([id(x, y), id(x + 1, y), id(x + 1, y + 1)], [pos(x, y), pos(x + 1, y), pos(x + 1, y + 1)]));
            raw.push(([id(x, y), id(x, y + 1), id(x + 1, y + 1)], [pos(x, y), pos(x, y + 1), pos(x + 1, y + 1)]));
        }
    }
    Lattice::assemble(LatticeKind::Triangular, lx, ly, boundary, sites, raw)
}

fn union_jack(lx: usize, ly: usize, boundary: Boundary) -> Result<Lattice> {
    let periodic = boundary == Boundary::Periodic;
    if periodic && (lx % 2 != 0 || ly % 2 != 0) {
        return Err(Error::LatticeTooSmall(format!("periodic Union-Jack {lx}x{ly} needs even sizes")));
    }
    let (cx, cy) = if periodic { (lx, ly) } else { (lx + 1, ly + 1) };
    let corner = |x: usize, y: usize| (y % cy) * cx + (x % cx);
    let center = |i: usize, j: usize| cx * cy + j * lx + i;
    let mut sites = Vec::new();
    for y in 0..cy {
        for x in 0..cx {
            sites.push(Site { x: x as f64, y: y as f64, color: ((x + y) % 2) as u8 });
        }
    }
    for j in 0..ly {
        for i in 0..lx {
            sites.push(Site { x: i as f64 + 0.5, y: j as f64 + 0.5, color: DOMAIN_COLOR });
        }
    }
    let mut raw = Vec::new();
    for j in 0..ly {
        for i in 0..lx {
            let ring = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let c = center(i, j);
            let pc = (i as f64 + 0.5, j as f64 + 0.5);
            for t in 0..4 {
                let (a, b) = (ring[t], ring[(t + 1) % 4]);
                raw.push((
                    [c, corner(a.0, a.1), corner(b.0, b.1)],
                    [pc, (a.0 as f64, a.1 as f64), (b.0 as f64, b.1 as f64)],
                ));
            }
        }
    }
    Lattice::assemble(LatticeKind::UnionJack, lx, ly, boundary, sites, raw)
}

/// |φ_k⟩ on `lat`.
pub fn build_spt_state(lat: &Lattice, d: PrimeDim, k: u32) -> Result<StateVector> {
    build_spt_state_capped(lat, d, k, DEFAULT_CAP)
}

pub fn build_spt_state_capped(lat: &Lattice, d: PrimeDim, k: u32, cap: usize) -> Result<StateVector> {
    if k % d.get() == 0 {
        return Err(Error::TrivialClass);
    }
    let mut s = StateVector::new_plus_capped(d, lat.site_count(), cap)?;
    for t in &lat.triangles {
        let e = d.reduce(t.sign as i64 * k as i64);
        s.apply_ccz_pow(e, t.sites[0], t.sites[1], t.sites[2])?;
    }
    Ok(s)
}

/// X^m on each of `sites`.
pub fn apply_x_on(state: &mut StateVector, sites: &[usize], m: u32) -> Result<()> {
    let x = LocalUnitary::x_pow(state.dim(), m as i64);
    for &s in sites {
        state.apply_local(s, &x)?;
    }
    Ok(())
}

/// Fidelity between `state` and X^m applied to every site of `color`.
pub fn verify_symmetry(state: &StateVector, lat: &Lattice, color: u8, m: u32) -> Result<f64> {
    if lat.boundary != Boundary::Periodic {
        return Err(Error::OpenBoundary);
    }
    if color > 2 {
        return Err(Error::Invalid(format!("color {color}")));
    }
    let mut t = state.clone();
    apply_x_on(&mut t, &lat.sites_of_color(color), m)?;
    fidelity_up_to_phase(state, &t)
}

/// One outcome per domain site, aligned with `Lattice::domain`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainOutcomes(pub Vec<u32>);

impl DomainOutcomes {
    pub fn new(lat: &Lattice, d: PrimeDim, values: Vec<u32>) -> Result<Self> {
        if values.len() != lat.domain.len() {
            return Err(Error::IncompleteOutcomes { given: values.len(), needed: lat.domain.len() });
        }
        if let Some(&bad) = values.iter().find(|&&v| v >= d.get()) {
            return Err(Error::OutcomeOutOfRange { outcome: bad, d: d.get() });
        }
        Ok(DomainOutcomes(values))
    }

    pub fn sample<R: Rng + ?Sized>(lat: &Lattice, d: PrimeDim, rng: &mut R) -> Self {
        DomainOutcomes((0..lat.domain.len()).map(|_| rng.gen_range(0..d.get())).collect())
    }

    /// Every assignment, in lexicographic order.
    pub fn all(lat: &Lattice, d: PrimeDim) -> impl Iterator<Item = DomainOutcomes> {
        let n = lat.domain.len() as u32;
        let dv = d.get() as u64;
        (0..dv.pow(n)).map(move |mut idx| {
            let mut v = vec![0u32; n as usize];
            for slot in v.iter_mut().rev() {
                *slot = (idx % dv) as u32;
                idx /= dv;
            }
            DomainOutcomes(v)
        })
    }
}

/// Graph-like state left on the residual sites: r = k·Σ_flanks sign·m_domain.
/// Vertex i is `lat.residual_sites[i]`.
pub fn predicted_graph(lat: &Lattice, d: PrimeDim, k: u32, outcomes: &DomainOutcomes) -> Result<GraphLikeState> {
    if outcomes.0.len() != lat.domain.len() {
        return Err(Error::IncompleteOutcomes { given: outcomes.0.len(), needed: lat.domain.len() });
    }
    let m: BTreeMap<usize, u32> = lat.domain.iter().copied().zip(outcomes.0.iter().copied()).collect();
    let vertex: BTreeMap<usize, usize> = lat.residual_sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut g = GraphLikeState::new(d, lat.residual_sites.len());
    for e in &lat.residual_edges {
        let w: i64 = e.flanks.iter().map(|&(dom, sign)| sign as i64 * m[&dom] as i64).sum();
        g.add_to_edge(vertex[&e.a], vertex[&e.b], w * k as i64)?;
    }
    Ok(g)
}

#[derive(Clone, Debug)]
pub struct DomainMeasurement {
    pub outcomes: DomainOutcomes,
    pub graph: GraphLikeState,
    /// State on the residual sites, in `Lattice::residual_sites` order.
    pub residual: StateVector,
    /// Born probability of each domain outcome given the previous ones.
    pub probabilities: Vec<f64>,
}

/// Measures every domain site of `state` in the computational basis with the
/// given outcomes.
pub fn measure_domain_sublattice(
    state: &StateVector,
    lat: &Lattice,
    k: u32,
    outcomes: &DomainOutcomes,
) -> Result<DomainMeasurement> {
    let d = state.dim();
    let outcomes = DomainOutcomes::new(lat, d, outcomes.0.clone())?;
    if state.sites() != lat.site_count() {
        return Err(Error::ShapeMismatch("state was not built from this lattice".into()));
    }
    let mut s = state.clone();
    let mut probabilities = vec![0.0; lat.domain.len()];
    // descending order keeps lower site indices stable
    for (i, &site) in lat.domain.iter().enumerate().rev() {
        let m = s.measure_forced(site, &MeasBasis::Computational, outcomes.0[i])?;
        probabilities[i] = m.probability;
        s = m.state;
    }
    let graph = predicted_graph(lat, d, k, &outcomes)?;
    Ok(DomainMeasurement { outcomes, graph, residual: s, probabilities })
}

/// As [`measure_domain_sublattice`] with Born-sampled outcomes.
pub fn measure_domain_sublattice_sampled<R: Rng + ?Sized>(
    state: &StateVector,
    lat: &Lattice,
    k: u32,
    rng: &mut R,
) -> Result<DomainMeasurement> {
    let mut s = state.clone();
    let mut values = vec![0u32; lat.domain.len()];
    for (i, &site) in lat.domain.iter().enumerate().rev() {
        let m = s.measure_with(site, &MeasBasis::Computational, rng)?;
        values[i] = m.outcome;
        s = m.state;
    }
    measure_domain_sublattice(state, lat, k, &DomainOutcomes(values))
}

/// Counts of junction edge numbers 0..=3 over all d³ outcome triples around a
/// honeycomb junction.
pub fn junction_edge_histogram(d: PrimeDim, k: u32) -> Result<[u64; 4]> {
    let lat = Lattice::junction_patch(LatticeKind::Triangular)?;
    let center = lat.junction_center().expect("junction patch has a center");
    let v = lat.residual_sites.iter().position(|&s| s == center).unwrap();
    let mut hist = [0u64; 4];
    for o in DomainOutcomes::all(&lat, d) {
        let g = predicted_graph(&lat, d, k, &o)?;
        hist[g.degree(v)] += 1;
    }
    Ok(hist)
}

/// How θ = ±1 is assigned to each (domain, wall) pair on a face boundary.
#[derive(Clone, Debug, PartialEq)]
pub enum Orientation {
    /// Each face boundary circulates counterclockwise; a wall takes θ = +1 when
    /// it follows its domain along the circulation.
    Circulating,
    /// θ per (face, domain vertex, wall vertex), in patch-local indices.
    Explicit(BTreeMap<(usize, usize, usize), i8>),
}

/// Hexagonal faces of the honeycomb carved from a triangular lattice: face
/// centers are domain sites, ring vertices alternate color 0 ("domain" of the
/// boundary chain) and color 1 ("wall").
#[derive(Clone, Debug, PartialEq)]
pub struct HoneycombPatch {
    pub sites: Vec<usize>,
    pub colors: Vec<u8>,
    pub faces: Vec<usize>,
    /// Counterclockwise ring of each face, patch-local indices.
    pub rings: Vec<Vec<usize>>,
    /// Triangles (patch-local sites, sign) touching a face.
    pub triangles: Vec<([usize; 3], i8)>,
}

impl HoneycombPatch {
    pub fn from_faces(lat: &Lattice, faces: &[usize]) -> Result<Self> {
        if lat.kind != LatticeKind::Triangular {
            return Err(Error::Invalid("honeycomb patches come from triangular lattices".into()));
        }
        let mut tris = Vec::new();
        let mut succ: Vec<BTreeMap<usize, usize>> = Vec::new();
        for &f in faces {
            if lat.sites.get(f).map(|s| s.color) != Some(DOMAIN_COLOR) {
                return Err(Error::Invalid(format!("site {f} is not a face center")));
            }
            let mut next = BTreeMap::new();
            for t in lat.triangles.iter().filter(|t| t.sites.contains(&f)) {
                let i = t.sites.iter().position(|&s| s == f).unwrap();
                let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                let ccw = orientation(&[t.pos[i], t.pos[j], t.pos[l]]) > 0.0;
                let (u, w) = if ccw { (t.sites[j], t.sites[l]) } else { (t.sites[l], t.sites[j]) };
                next.insert(u, w);
                tris.push(t.clone());
            }
            if next.len() != 6 {
                return Err(Error::LatticeTooSmall(format!("face {f} has {} of 6 triangles", next.len())));
            }
            succ.push(next);
        }
        let mut ids: Vec<usize> = tris.iter().flat_map(|t| t.sites).collect();
        ids.sort_unstable();
        ids.dedup();
        let local: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut rings = Vec::new();
        for next in &succ {
            let start = *next.keys().find(|&&u| lat.sites[u].color == 0).expect("ring has color 0");
            let mut ring = vec![local[&start]];
            let mut cur = next[&start];
            while cur != start {
                ring.push(local[&cur]);
                cur = *next.get(&cur).ok_or_else(|| Error::Invalid("open face ring".into()))?;
                if ring.len() > 6 {
                    return Err(Error::Invalid("face ring does not close".into()));
                }
            }
            rings.push(ring);
        }
        let mut triangles: Vec<([usize; 3], i8)> = tris.iter().map(|t| (t.sites.map(|s| local[&s]), t.sign)).collect();
        triangles.sort();
        triangles.dedup();
        Ok(HoneycombPatch {
            colors: ids.iter().map(|&s| lat.sites[s].color).collect(),
            faces: faces.iter().map(|f| local[f]).collect(),
            sites: ids,
            rings,
            triangles,
        })
    }

    pub fn qudits(&self) -> usize {
        self.sites.len()
    }

    /// θ for every (face, domain, wall) triple.
    pub fn thetas(&self, orientation: &Orientation) -> Result<BTreeMap<(usize, usize, usize), i8>> {
        let theta = match orientation {
            Orientation::Explicit(map) => map.clone(),
            Orientation::Circulating => {
                let mut map = BTreeMap::new();
                for (fi, ring) in self.rings.iter().enumerate() {
                    let n = ring.len();
                    for i in 0..n {
                        if self.colors[ring[i]] != 0 {
                            continue;
                        }
                        map.insert((self.faces[fi], ring[i], ring[(i + 1) % n]), 1);
                        map.insert((self.faces[fi], ring[i], ring[(i + n - 1) % n]), -1);
                    }
                }
                map
            }
        };
        self.check_orientation(&theta)?;
        Ok(theta)
    }

    /// Walls of one domain point opposite ways; a shared edge is seen with
    /// opposite θ from its two faces.
    fn check_orientation(&self, theta: &BTreeMap<(usize, usize, usize), i8>) -> Result<()> {
        let mut per_edge: BTreeMap<(usize, usize), i32> = BTreeMap::new();
        for (fi, ring) in self.rings.iter().enumerate() {
            let f = self.faces[fi];
            let n = ring.len();
            for i in 0..n {
                let e = ring[i];
                if self.colors[e] != 0 {
                    continue;
                }
                let (l, r) = (ring[(i + n - 1) % n], ring[(i + 1) % n]);
                let tl = *theta.get(&(f, e, l)).ok_or_else(|| Error::InconsistentOrientation(format!("missing θ({f},{e},{l})")))?;
                let tr = *theta.get(&(f, e, r)).ok_or_else(|| Error::InconsistentOrientation(format!("missing θ({f},{e},{r})")))?;
                if tl.abs() != 1 || tr.abs() != 1 || tl == tr {
                    return Err(Error::InconsistentOrientation(format!("domain {e} of face {f}: θ = ({tl}, {tr})")));
                }
                *per_edge.entry((e, l)).or_default() += tl as i32;
                *per_edge.entry((e, r)).or_default() += tr as i32;
            }
        }
        let shared: BTreeMap<(usize, usize), usize> = self.rings.iter().flat_map(|ring| {
            let n = ring.len();
            (0..n).map(move |i| (ring[i].min(ring[(i + 1) % n]), ring[i].max(ring[(i + 1) % n])))
        }).fold(BTreeMap::new(), |mut acc, e| {
            *acc.entry(e).or_default() += 1;
            acc
        });
        for ((e, w), sum) in per_edge {
            if shared[&(e.min(w), e.max(w))] == 2 && sum != 0 {
                return Err(Error::InconsistentOrientation(format!("edge ({e},{w}) has the same θ from both faces")));
            }
        }
        Ok(())
    }
}

/// Diagonal operator Σ_x ϖ^{exps[x]} |x⟩⟨x|.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOp {
    pub d: PrimeDim,
    pub n: usize,
    pub exps: Vec<u32>,
}

impl DiagonalOp {
    pub fn apply(&self, s: &mut StateVector) -> Result<()> {
        if s.dim() != self.d || s.sites() != self.n {
            return Err(Error::ShapeMismatch("diagonal operator".into()));
        }
        let mut i = 0usize;
        let exps = &self.exps;
        s.apply_diagonal(|_| {
            let e = exps[i] as i64;
            i += 1;
            e
        });
        Ok(())
    }
}

/// 𝒰^k = ∏_f [Σ_α |α⟩⟨α|_f 𝒲^α_{∂f}]^k with
/// 𝒲^s_{∂f} = ∏_{domain e} [CZ^{θ(l)}_{el} CZ^{θ(r)}_{er}]^s.
pub fn build_ddw_operator(patch: &HoneycombPatch, d: PrimeDim, k: u32, orientation: &Orientation) -> Result<DiagonalOp> {
    let theta = patch.thetas(orientation)?;
    let n = patch.qudits();
    let size = d.as_usize().checked_pow(n as u32).ok_or(Error::CapExceeded { d: d.get(), n, cap: usize::MAX })?;
    let mut terms: Vec<(usize, usize, usize, i64)> = Vec::new();
    for (fi, ring) in patch.rings.iter().enumerate() {
        let f = patch.faces[fi];
        for &e in ring.iter().filter(|&&e| patch.colors[e] == 0) {
            for (&(tf, te, w), &t) in theta.range((f, e, 0)..=(f, e, usize::MAX)) {
                debug_assert_eq!((tf, te), (f, e));
                terms.push((f, e, w, t as i64));
            }
        }
    }
    let dv = d.as_usize();
    let mut exps = Vec::with_capacity(size);
    let mut digits = vec![0usize; n];
    for _ in 0..size {
        let mut acc = 0i64;
        for &(f, e, w, t) in &terms {
            acc += t * (digits[f] * digits[e] * digits[w]) as i64;
        }
        exps.push(d.reduce(acc * k as i64));
        for s in (0..n).rev() {
            digits[s] += 1;
            if digits[s] < dv {
                break;
            }
            digits[s] = 0;
        }
    }
    Ok(DiagonalOp { d, n, exps })
}

/// Fidelity between 𝒰^k|+…+⟩ and ∏_{+} CCZ^k ∏_{−} CCZ^{−k}|+…+⟩ on the patch.
pub fn ddw_equivalence(patch: &HoneycombPatch, d: PrimeDim, k: u32, orientation: &Orientation) -> Result<f64> {
    let cap = d.as_usize().pow(patch.qudits() as u32);
    let mut via_w = StateVector::new_plus_capped(d, patch.qudits(), cap)?;
    build_ddw_operator(patch, d, k, orientation)?.apply(&mut via_w)?;
    let mut via_ccz = StateVector::new_plus_capped(d, patch.qudits(), cap)?;
    for (t, sign) in &patch.triangles {
        via_ccz.apply_ccz_pow(d.reduce(*sign as i64 * k as i64), t[0], t[1], t[2])?;
    }
    fidelity_up_to_phase(&via_w, &via_ccz)
}

/// One face, or two faces sharing an edge, from a small open triangular lattice.
pub fn ddw_patch(faces: usize) -> Result<HoneycombPatch> {
    let lat = build_lattice(LatticeKind::Triangular, 5, 5, Boundary::Open)?;
    // (1,1) and (2,3) are color-2 sites whose hexagons share the edge (1,2)–(2,2)
    let ids = match faces {
        1 => vec![5 + 1],
        2 => vec![5 + 1, 3 * 5 + 2],
        _ => return Err(Error::Invalid(format!("{faces}-face patch"))),
    };
    HoneycombPatch::from_faces(&lat, &ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(d: u32) -> PrimeDim {
        PrimeDim::new(d).unwrap()
    }

    fn check_invariants(lat: &Lattice) {
        for t in &lat.triangles {
            let mut c: Vec<u8> = t.sites.iter().map(|&s| lat.sites[s].color).collect();
            c.sort_unstable();
            assert_eq!(c, vec![0, 1, 2]);
        }
        // triangles sharing an edge have opposite signs
        let mut by_edge: BTreeMap<(usize, usize), Vec<i8>> = BTreeMap::new();
        for t in &lat.triangles {
            for i in 0..3 {
                let (a, b) = (t.sites[i], t.sites[(i + 1) % 3]);
                by_edge.entry((a.min(b), a.max(b))).or_default().push(t.sign);
            }
        }
        for signs in by_edge.values() {
            let plus = signs.iter().filter(|&&s| s == 1).count();
            let minus = signs.len() - plus;
            if lat.boundary == Boundary::Periodic {
                assert_eq!(plus, minus);
                assert!(plus >= 1);
            } else {
                assert!(plus <= 1 && minus <= 1);
            }
        }
    }

    #[test]
    fn lattices_satisfy_invariants() {
        for (kind, lx, ly, b) in [
            (LatticeKind::Triangular, 3, 3, Boundary::Periodic),
            (LatticeKind::Triangular, 6, 3, Boundary::Periodic),
            (LatticeKind::Triangular, 4, 5, Boundary::Open),
            (LatticeKind::UnionJack, 2, 2, Boundary::Periodic),
            (LatticeKind::UnionJack, 4, 2, Boundary::Periodic),
            (LatticeKind::UnionJack, 3, 2, Boundary::Open),
        ] {
            let lat = build_lattice(kind, lx, ly, b).unwrap();
            check_invariants(&lat);
        }
    }

    #[test]
    fn periodic_triangular_edges_pair_up() {
        let lat = build_lattice(LatticeKind::Triangular, 3, 3, Boundary::Periodic).unwrap();
        assert_eq!(lat.site_count(), 9);
        assert_eq!(lat.triangles.len(), 18);
        // every residual edge: one up and one down triangle
        for e in &lat.residual_edges {
            let mut s: Vec<i8> = e.flanks.iter().map(|f| f.1).collect();
            s.sort_unstable();
            assert_eq!(s, vec![-1, 1]);
        }
    }

    #[test]
    fn size_errors() {
        assert!(matches!(build_lattice(LatticeKind::Triangular, 1, 4, Boundary::Open), Err(Error::LatticeTooSmall(_))));
        assert!(build_lattice(LatticeKind::Triangular, 2, 2, Boundary::Periodic).is_err());
        assert!(build_lattice(LatticeKind::UnionJack, 3, 2, Boundary::Periodic).is_err());
    }

    #[test]
    fn junction_patches() {
        let tri = Lattice::junction_patch(LatticeKind::Triangular).unwrap();
        assert_eq!(tri.domain.len(), 3);
        assert_eq!(tri.residual_edges.len(), 3);
        assert!(tri.junction_center().is_some());
        let uj = Lattice::junction_patch(LatticeKind::UnionJack).unwrap();
        assert_eq!(uj.domain.len(), 4);
        assert_eq!(uj.residual_edges.len(), 4);
        assert!(uj.residual_edges.iter().all(|e| e.flanks.len() == 2));
        // full open 2x2 Union-Jack: the interior corner has 4 residual edges
        let full = build_lattice(LatticeKind::UnionJack, 2, 2, Boundary::Open).unwrap();
        assert_eq!(full.residual_edges.iter().filter(|e| e.a == 4 || e.b == 4).count(), 4);
    }

    #[test]
    fn spt_state_has_flat_moduli() {
        let lat = build_lattice(LatticeKind::UnionJack, 2, 2, Boundary::Open).unwrap();
        let s = build_spt_state_capped(&lat, p(2), 1, 1 << 13).unwrap();
        let want = (1.0 / 2f64.powi(13)).sqrt();
        assert!(s.amplitudes().iter().all(|a| (a.norm() - want).abs() < 1e-12));
        assert_eq!(build_spt_state(&lat, p(3), 3), Err(Error::TrivialClass));
    }

    #[test]
    fn qubit_union_jack_matches_direct_ccz() {
        // d = 2: CCZ^{-1} = CCZ, so the state is the plain product of CCZ over triangles
        let lat = build_lattice(LatticeKind::UnionJack, 2, 2, Boundary::Periodic).unwrap();
        let s = build_spt_state(&lat, p(2), 1).unwrap();
        let mut direct = StateVector::new_plus(p(2), lat.site_count()).unwrap();
        direct.apply_diagonal(|x| {
            lat.triangles.iter().map(|t| (x[t.sites[0]] * x[t.sites[1]] * x[t.sites[2]]) as i64).sum()
        });
        assert!((fidelity_up_to_phase(&s, &direct).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_small() {
        let lat = build_lattice(LatticeKind::Triangular, 3, 3, Boundary::Periodic).unwrap();
        let s = build_spt_state(&lat, p(3), 1).unwrap();
        assert!((verify_symmetry(&s, &lat, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        assert!((verify_symmetry(&s, &lat, 0, 1).unwrap() - 1.0).abs() < 1e-10);
        // half a color class is not a symmetry
        let half: Vec<usize> = lat.sites_of_color(0).into_iter().take(2).collect();
        let mut t = s.clone();
        apply_x_on(&mut t, &half, 1).unwrap();
        assert!(fidelity_up_to_phase(&s, &t).unwrap() < 0.99);
        let open = build_lattice(LatticeKind::Triangular, 3, 3, Boundary::Open).unwrap();
        let so = build_spt_state(&open, p(3), 1).unwrap();
        assert_eq!(verify_symmetry(&so, &open, 0, 1), Err(Error::OpenBoundary));
    }

    #[test]
    fn equal_outcomes_disentangle() {
        let lat = Lattice::junction_patch(LatticeKind::Triangular).unwrap();
        let d = p(3);
        let s = build_spt_state(&lat, d, 1).unwrap();
        let r = measure_domain_sublattice(&s, &lat, 1, &DomainOutcomes(vec![1, 1, 1])).unwrap();
        assert_eq!(r.graph.edge_count(), 0);
        let plus = StateVector::new_plus(d, r.residual.sites()).unwrap();
        assert!((fidelity_up_to_phase(&r.residual, &plus).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(
            measure_domain_sublattice(&s, &lat, 1, &DomainOutcomes(vec![1, 1])),
            Err(Error::IncompleteOutcomes { .. })
        ));
    }

    #[test]
    fn single_edge_weight() {
        // two plaquettes flanking one residual edge: up-triangle outcome 2, down 0
        let lat = build_lattice(LatticeKind::Triangular, 3, 2, Boundary::Open).unwrap();
        let d = p(3);
        let edge = lat.residual_edges.iter().find(|e| e.flanks.len() == 2).unwrap().clone();
        let up = edge.flanks.iter().find(|f| f.1 == 1).unwrap().0;
        let values: Vec<u32> = lat.domain.iter().map(|&s| if s == up { 2 } else { 0 }).collect();
        let s = build_spt_state(&lat, d, 1).unwrap();
        let r = measure_domain_sublattice(&s, &lat, 1, &DomainOutcomes(values)).unwrap();
        let va = lat.residual_sites.iter().position(|&x| x == edge.a).unwrap();
        let vb = lat.residual_sites.iter().position(|&x| x == edge.b).unwrap();
        assert_eq!(r.graph.weight(va, vb), 2);
        let want = r.graph.to_statevector().unwrap();
        assert!((fidelity_up_to_phase(&r.residual, &want).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn three_distinct_outcomes_fill_the_junction() {
        let lat = Lattice::junction_patch(LatticeKind::Triangular).unwrap();
        let d = p(3);
        let g = predicted_graph(&lat, d, 1, &DomainOutcomes(vec![0, 1, 2])).unwrap();
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn sampled_measurement_matches_prediction() {
        let lat = Lattice::junction_patch(LatticeKind::UnionJack).unwrap();
        let d = p(3);
        let s = build_spt_state(&lat, d, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let r = measure_domain_sublattice_sampled(&s, &lat, 2, &mut rng).unwrap();
            let want = r.graph.to_statevector().unwrap();
            assert!((fidelity_up_to_phase(&r.residual, &want).unwrap() - 1.0).abs() < 1e-10);
            assert!(r.probabilities.iter().all(|&q| (q - 1.0 / 3.0).abs() < 1e-10));
        }
    }

    #[test]
    fn ddw_small() {
        let one = ddw_patch(1).unwrap();
        assert_eq!(one.qudits(), 7);
        assert_eq!(one.triangles.len(), 6);
        let two = ddw_patch(2).unwrap();
        assert_eq!(two.qudits(), 12);
        assert_eq!(two.triangles.len(), 12);
        assert!((ddw_equivalence(&one, p(2), 1, &Orientation::Circulating).unwrap() - 1.0).abs() < 1e-10);
        assert!((ddw_equivalence(&one, p(3), 0, &Orientation::Circulating).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ddw_rejects_inconsistent_orientation() {
        let two = ddw_patch(2).unwrap();
        let mut theta = two.thetas(&Orientation::Circulating).unwrap();
        let key = *theta.keys().next().unwrap();
        theta.insert(key, -theta[&key]);
        assert!(matches!(
            build_ddw_operator(&two, p(3), 1, &Orientation::Explicit(theta)),
            Err(Error::InconsistentOrientation(_))
        ));
    }

    #[test]
    fn lattice_json_roundtrip() {
        let lat = build_lattice(LatticeKind::UnionJack, 2, 2, Boundary::Open).unwrap();
        let back: Lattice = serde_json::from_str(&serde_json::to_string(&lat).unwrap()).unwrap();
        assert_eq!(back, lat);
    }
}
