//! Planar Delaunay triangulation with exact predicates.
//!
//! Sites are inserted in lexicographic `(x, y, input index)` order, so every
//! new site lies outside the current hull and only needs to be joined to the
//! visible hull edges before Lawson flips restore the empty-circle property.
//!
//! Cocircular configurations are resolved by symbolically raising each lifted
//! site `x² + y²` by `ε^(rank+1)`, where `rank` is its position in the
//! lexicographic order. The perturbed in-circle sign is then never zero, the
//! triangulation is unique, and it does not depend on input order beyond the
//! index used to break exact coordinate ties.

use std::collections::{BTreeSet, HashMap};

use robust::Coord;

use crate::error::{Error, Result};

/// Unordered, duplicate-free neighbor pairs `(a, b)` with `a < b`, in input-index space.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeSet {
    pub edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize)> {
        self.edges.iter()
    }
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Input indices of the sites that were triangulated (duplicates removed), in rank order.
    pub sites: Vec<usize>,
    /// Counter-clockwise triangles as input indices.
    pub triangles: Vec<[usize; 3]>,
    /// Input indices dropped because an earlier index had identical coordinates.
    pub collapsed: Vec<usize>,
}

impl Triangulation {
    pub fn edges(&self) -> EdgeSet {
        let mut set = BTreeSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        EdgeSet {
            edges: set.into_iter().collect(),
        }
    }
}

#[inline]
fn coord(p: [f64; 2]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(coord(a), coord(b), coord(c))
}

#[inline]
fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Perturbed in-circle test on site ranks: `true` iff `d` lies inside the
/// circumcircle of the counter-clockwise triangle `(a, b, c)`.
fn in_circle(pts: &[[f64; 2]], a: usize, b: usize, c: usize, d: usize) -> bool {
    let (pa, pb, pc, pd) = (pts[a], pts[b], pts[c], pts[d]);
    let exact = sign(robust::incircle(coord(pa), coord(pb), coord(pc), coord(pd)));
    if exact != 0 {
        return exact > 0;
    }
    // Coefficient of ε_i in the lifted 4×4 determinant is the cofactor of that row's z entry.
    let mut terms = [
        (a, sign(orient(pb, pc, pd))),
        (b, -sign(orient(pa, pc, pd))),
        (c, sign(orient(pa, pb, pd))),
        (d, -sign(orient(pa, pb, pc))),
    ];
    terms.sort_by_key(|&(rank, _)| rank);
    terms
        .iter()
        .map(|&(_, s)| s)
        .find(|&s| s != 0)
        .map(|s| s > 0)
        .unwrap_or(false)
}

struct Mesh {
    triangles: Vec<[usize; 3]>,
    /// Directed edge → triangle holding it in counter-clockwise order.
    edge_owner: HashMap<(usize, usize), usize>,
}

impl Mesh {
    fn with_capacity(n: usize) -> Self {
        Mesh {
            triangles: Vec::with_capacity(2 * n),
            edge_owner: HashMap::with_capacity(6 * n),
        }
    }

    fn set(&mut self, slot: usize, tri: [usize; 3]) {
        self.triangles[slot] = tri;
        for k in 0..3 {
            self.edge_owner.insert((tri[k], tri[(k + 1) % 3]), slot);
        }
    }

    fn push(&mut self, tri: [usize; 3]) -> usize {
        self.triangles.push(tri);
        let slot = self.triangles.len() - 1;
        self.set(slot, tri);
        slot
    }

    fn opposite(tri: [usize; 3], a: usize, b: usize) -> usize {
        tri.into_iter().find(|&v| v != a && v != b).unwrap()
    }

    /// Restores the empty-circle property around edges opposite the newly inserted site `p`.
    fn legalize(&mut self, pts: &[[f64; 2]], p: usize, mut stack: Vec<(usize, usize)>) {
        while let Some((a, b)) = stack.pop() {
            let Some(&outer) = self.edge_owner.get(&(b, a)) else {
                continue;
            };
            let Some(&inner) = self.edge_owner.get(&(a, b)) else {
                continue;
            };
            let d = Self::opposite(self.triangles[outer], a, b);
            if !in_circle(pts, a, b, p, d) {
                continue;
            }
            self.edge_owner.remove(&(a, b));
            self.edge_owner.remove(&(b, a));
            self.set(inner, [a, d, p]);
            self.set(outer, [d, b, p]);
            stack.push((a, d));
            stack.push((d, b));
        }
    }
}

/// Triangulates a point set. Exact duplicate coordinates are collapsed onto the lowest input index.
pub fn triangulate(points: &[[f64; 2]]) -> Result<Triangulation> {
    if let Some(p) = points
        .iter()
        .find(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        return Err(Error::DegenerateGeometry(format!(
            "non-finite point ({}, {})",
            p[0], p[1]
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i][0]
            .total_cmp(&points[j][0])
            .then(points[i][1].total_cmp(&points[j][1]))
            .then(i.cmp(&j))
    });
    let mut sites: Vec<usize> = Vec::with_capacity(order.len());
    let mut collapsed = Vec::new();
    for &i in &order {
        match sites.last() {
            Some(&last) if points[last] == points[i] => collapsed.push(i),
            _ => sites.push(i),
        }
    }
    if !collapsed.is_empty() {
        log::warn!(
            "collapsed {} duplicate point(s) before triangulation",
            collapsed.len()
        );
        collapsed.sort_unstable();
    }
    if sites.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 3 distinct points, got {}",
            sites.len()
        )));
    }

    // Work in rank space: site k is the k-th point in lexicographic order.
    let pts: Vec<[f64; 2]> = sites.iter().map(|&i| points[i]).collect();
    let n = pts.len();
    let Some(apex) = (2..n).find(|&k| orient(pts[0], pts[1], pts[k]) != 0.0) else {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    };

    let mut mesh = Mesh::with_capacity(n);
    // Sites 0..apex are collinear and sorted along their line; fan them to the apex.
    let left = orient(pts[0], pts[apex - 1], pts[apex]) > 0.0;
    for j in 0..apex - 1 {
        if left {
            mesh.push([j, j + 1, apex]);
        } else {
            mesh.push([j + 1, j, apex]);
        }
    }
    let mut hull: Vec<usize> = if left {
        (0..=apex).collect()
    } else {
        std::iter::once(0).chain((1..=apex).rev()).collect()
    };

    for p in apex + 1..n {
        let h = hull.len();
        let visible: Vec<bool> = (0..h)
            .map(|i| orient(pts[hull[i]], pts[hull[(i + 1) % h]], pts[p]) < 0.0)
            .collect();
        let start = (0..h)
            .find(|&i| visible[i] && !visible[(i + h - 1) % h])
            .expect("a site beyond the hull sees at least one hull edge");
        let run = (0..h).take_while(|&k| visible[(start + k) % h]).count();

        let mut stack = Vec::with_capacity(run);
        for k in 0..run {
            let u = hull[(start + k) % h];
            let v = hull[(start + k + 1) % h];
            mesh.push([v, u, p]);
            stack.push((v, u));
        }
        let mut next = Vec::with_capacity(h - run + 2);
        for k in 0..=(h - run) {
            next.push(hull[(start + run + k) % h]);
        }
        next.push(p);
        hull = next;

        mesh.legalize(&pts, p, stack);
    }

    let triangles = mesh
        .triangles
        .iter()
        .map(|t| [sites[t[0]], sites[t[1]], sites[t[2]]])
        .collect();
    Ok(Triangulation {
        sites,
        triangles,
        collapsed,
    })
}

/// Delaunay neighbor pairs of a point set, in input-index space.
pub fn delaunay(points: &[[f64; 2]]) -> Result<EdgeSet> {
    Ok(triangulate(points)?.edges())
}
