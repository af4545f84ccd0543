//! Penalty-energy layout solver.
//!
//! Node translations are optimized so that relation penalties (one per edge)
//! and pairwise non-overlap penalties (for unrelated pairs) vanish. Rotations
//! and scales are left untouched. The first node is pinned at the origin.

use std::collections::HashSet;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Edge, MeshAsset, SceneAssembly, SceneGraph};
use crate::dsl::RelationKind;
use crate::geom::Aabb;

pub const LAYOUT_RESTARTS: usize = 8;
pub const MAX_SWEEPS: usize = 200;
/// Sweep-level improvement below which descent stops.
pub const CONVERGENCE_EPS: f64 = 1e-9;
/// Energy above which a layout is considered infeasible.
pub const LAYOUT_TOLERANCE: f64 = 1e-6;

const NEXT_TO_BAND: (f64, f64) = (0.8, 1.5);
const PLACEMENT_MARGIN: f64 = 0.05;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn hinge_sq(x: f64) -> f64 {
    let v = x.max(0.0);
    v * v
}

fn horizontal_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    (a.x - b.x).hypot(a.z - b.z)
}

/// Penalty for `a <relation> b` given world-space boxes.
pub fn relation_penalty(relation: RelationKind, a: &Aabb, b: &Aabb) -> f64 {
    let (ca, cb) = (a.center(), b.center());
    let (ha, hb) = (a.half_extents(), b.half_extents());
    let directional = |axis: usize, sign: f64| {
        let gap = sign * (cb[axis] - ca[axis]) - (ha[axis] + hb[axis]);
        hinge_sq(-gap)
    };
    match relation {
        RelationKind::LeftOf => directional(0, 1.0),
        RelationKind::RightOf => directional(0, -1.0),
        // the default camera sits on +z looking down -z
        RelationKind::InFrontOf => directional(2, -1.0),
        RelationKind::Behind => directional(2, 1.0),
        RelationKind::OnTopOf => {
            let contact = a.min.y - b.max.y;
            let d = horizontal_distance(&ca, &cb);
            contact * contact + hinge_sq(d - hb.x.min(hb.z))
        }
        RelationKind::NextTo => {
            let reach = ha.x.max(ha.z) + hb.x.max(hb.z);
            let d = horizontal_distance(&ca, &cb);
            hinge_sq(NEXT_TO_BAND.0 * reach - d) + hinge_sq(d - NEXT_TO_BAND.1 * reach)
        }
    }
}

/// Squared penetration depth of two boxes (zero unless they overlap on all
/// three axes).
pub fn overlap_penalty(a: &Aabb, b: &Aabb) -> f64 {
    let mut depth = f64::INFINITY;
    for i in 0..3 {
        let d = a.max[i].min(b.max[i]) - a.min[i].max(b.min[i]);
        if d <= 0.0 {
            return 0.0;
        }
        depth = depth.min(d);
    }
    depth * depth
}

fn unrelated_pairs(n: usize, edges: &[Edge]) -> Vec<(usize, usize)> {
    let related: HashSet<(usize, usize)> = edges.iter().map(|e| (e.from.min(e.to), e.from.max(e.to))).collect();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !related.contains(&(i, j)) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Total penalty energy of world-space boxes under `edges`.
pub fn layout_energy(boxes: &[Aabb], edges: &[Edge]) -> f64 {
    let rel: f64 = edges
        .iter()
        .map(|e| relation_penalty(e.relation, &boxes[e.from], &boxes[e.to]))
        .sum();
    let overlap: f64 = unrelated_pairs(boxes.len(), edges)
        .into_iter()
        .map(|(i, j)| overlap_penalty(&boxes[i], &boxes[j]))
        .sum();
    rel + overlap
}

struct Problem<'a> {
    local: Vec<Aabb>,
    edges: &'a [Edge],
    pairs: Vec<(usize, usize)>,
}

impl Problem<'_> {
    fn energy(&self, t: &[Vector3<f64>]) -> f64 {
        let boxes: Vec<Aabb> = self.local.iter().zip(t).map(|(b, t)| b.translated(t)).collect();
        let rel: f64 = self
            .edges
            .iter()
            .map(|e| relation_penalty(e.relation, &boxes[e.from], &boxes[e.to]))
            .sum();
        let overlap: f64 = self
            .pairs
            .iter()
            .map(|&(i, j)| overlap_penalty(&boxes[i], &boxes[j]))
            .sum();
        rel + overlap
    }

    /// Translation putting node `i`'s box center at `center`.
    fn translation_for(&self, i: usize, center: Point3<f64>) -> Vector3<f64> {
        center - self.local[i].center()
    }

    /// Place nodes one by one next to an already placed neighbour according
    /// to the first edge linking them; isolated nodes go in a row along +x.
    fn constructive_start(&self) -> Vec<Vector3<f64>> {
        let n = self.local.len();
        let mut t = vec![Vector3::zeros(); n];
        let mut placed = vec![false; n];
        placed[0] = true;
        let mut placed_count = 1;
        while placed_count < n {
            let mut progressed = false;
            for e in self.edges {
                let (new, anchor, sign) = match (placed[e.from], placed[e.to]) {
                    (false, true) => (e.from, e.to, 1.0),
                    (true, false) => (e.to, e.from, -1.0),
                    _ => continue,
                };
                let ca = self.local[anchor].center() + t[anchor];
                let (hn, ha) = (self.local[new].half_extents(), self.local[anchor].half_extents());
                let mut c = ca;
                match e.relation {
                    RelationKind::LeftOf => c.x -= sign * (hn.x + ha.x + PLACEMENT_MARGIN),
                    RelationKind::RightOf => c.x += sign * (hn.x + ha.x + PLACEMENT_MARGIN),
                    RelationKind::InFrontOf => c.z += sign * (hn.z + ha.z + PLACEMENT_MARGIN),
                    RelationKind::Behind => c.z -= sign * (hn.z + ha.z + PLACEMENT_MARGIN),
                    RelationKind::OnTopOf => c.y += sign * (hn.y + ha.y),
                    RelationKind::NextTo => {
                        let reach = hn.x.max(hn.z) + ha.x.max(ha.z);
                        c.x += sign * reach * 0.5 * (NEXT_TO_BAND.0 + NEXT_TO_BAND.1);
                    }
                }
                t[new] = self.translation_for(new, c);
                placed[new] = true;
                placed_count += 1;
                progressed = true;
            }
            if !progressed {
                let max_x = (0..n)
                    .filter(|&i| placed[i])
                    .map(|i| self.local[i].max.x + t[i].x)
                    .fold(f64::NEG_INFINITY, f64::max);
                let next = (0..n).find(|&i| !placed[i]).expect("unplaced node");
                let h = self.local[next].half_extents();
                let c = Point3::new(max_x + h.x + PLACEMENT_MARGIN, self.local[next].center().y, 0.0);
                t[next] = self.translation_for(next, c);
                placed[next] = true;
                placed_count += 1;
            }
        }
        t
    }
}

/// Minimize `f` on `[lo, hi]` by golden-section search.
fn golden_section(mut lo: f64, mut hi: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Accepted energies of the winning restart, in acceptance order.
#[derive(Debug, Clone, Default)]
pub struct LayoutTrace {
    pub energies: Vec<f64>,
    pub restart: usize,
    pub sweeps: usize,
}

fn descend(problem: &Problem<'_>, mut t: Vec<Vector3<f64>>, radius: f64) -> (Vec<Vector3<f64>>, f64, Vec<f64>, usize) {
    let n = t.len();
    let mut energy = problem.energy(&t);
    let mut trace = vec![energy];
    let mut sweeps = 0;
    for _ in 0..MAX_SWEEPS {
        sweeps += 1;
        let start = energy;
        for node in 1..n {
            for axis in 0..3 {
                for width in [radius, radius * 1e-2] {
                    let v0 = t[node][axis];
                    let mut probe = t.clone();
                    let (v, e) = golden_section(v0 - width, v0 + width, |x| {
                        probe[node][axis] = x;
                        problem.energy(&probe)
                    });
                    if e < energy {
                        t[node][axis] = v;
                        energy = e;
                        trace.push(e);
                        break;
                    }
                }
            }
        }
        if start - energy < CONVERGENCE_EPS {
            break;
        }
    }
    (t, energy, trace, sweeps)
}

/// Solve for node translations. Deterministic for a given `seed`.
pub fn solve_layout(graph: &SceneGraph, meshes: &[MeshAsset], seed: u64) -> SceneAssembly {
    solve_layout_traced(graph, meshes, seed).0
}

pub fn solve_layout_traced(graph: &SceneGraph, meshes: &[MeshAsset], seed: u64) -> (SceneAssembly, LayoutTrace) {
    assert_eq!(graph.nodes.len(), meshes.len(), "one mesh per node");
    let mut out = graph.clone();
    if graph.nodes.is_empty() {
        let asm = SceneAssembly {
            graph: out,
            meshes: meshes.to_vec(),
            residual_energy: 0.0,
        };
        return (asm, LayoutTrace::default());
    }
    let problem = Problem {
        local: graph.nodes.iter().zip(meshes).map(|(n, m)| n.local_aabb(m)).collect(),
        edges: &graph.edges,
        pairs: unrelated_pairs(graph.nodes.len(), &graph.edges),
    };
    let radius = problem
        .local
        .iter()
        .map(|b| {
            let e = b.extent();
            e.x.max(e.y).max(e.z)
        })
        .sum::<f64>()
        .max(1e-3);

    let start = problem.constructive_start();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<Vector3<f64>>, f64, LayoutTrace)> = None;
    for restart in 0..LAYOUT_RESTARTS {
        let mut init = start.clone();
        if restart > 0 {
            for t in init.iter_mut().skip(1) {
                for k in 0..3 {
                    t[k] += rng.random_range(-0.5..0.5) * radius;
                }
            }
        }
        let (t, e, energies, sweeps) = descend(&problem, init, radius);
        if best.as_ref().is_none_or(|(_, be, _)| e < *be) {
            best = Some((
                t,
                e,
                LayoutTrace {
                    energies,
                    restart,
                    sweeps,
                },
            ));
        }
    }
    let (t, energy, trace) = best.expect("at least one restart");
    for (node, t) in out.nodes.iter_mut().zip(t) {
        node.pose.translation = t;
    }
    let asm = SceneAssembly {
        graph: out,
        meshes: meshes.to_vec(),
        residual_energy: energy.max(0.0),
    };
    (asm, trace)
}
