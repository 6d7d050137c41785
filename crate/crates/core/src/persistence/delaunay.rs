//! Incremental (Bowyer-Watson) 3-D Delaunay tetrahedralization on exact
//! orientation/insphere predicates. Input points must be distinct and in
//! general position; callers jitter their clouds to ensure this.

use std::collections::{HashMap, HashSet};

use robust::{insphere, orient3d, Coord3D};

pub type Point3 = [f64; 3];

const NONE: u32 = u32::MAX;
const SUPER_SCALE: f64 = 1.0e5;

#[derive(Clone, Copy, Debug)]
struct Tet {
    v: [u32; 4],
    /// `n[k]` is the neighbour across the face opposite `v[k]`.
    n: [u32; 4],
    alive: bool,
}

fn c3(p: &Point3) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

struct Mesh<'a> {
    pts: &'a [Point3],
    tets: Vec<Tet>,
    free: Vec<u32>,
    last: u32,
}

impl Mesh<'_> {
    fn orient(&self, a: u32, b: u32, c: u32, d: u32) -> f64 {
        let p = self.pts;
        orient3d(c3(&p[a as usize]), c3(&p[b as usize]), c3(&p[c as usize]), c3(&p[d as usize]))
    }

    /// Positive when `q` is strictly inside the circumsphere of `t`.
    fn in_sphere(&self, t: u32, q: u32) -> f64 {
        let v = self.tets[t as usize].v;
        let p = self.pts;
        insphere(
            c3(&p[v[0] as usize]),
            c3(&p[v[1] as usize]),
            c3(&p[v[2] as usize]),
            c3(&p[v[3] as usize]),
            c3(&p[q as usize]),
        )
    }

    fn add(&mut self, v: [u32; 4]) -> u32 {
        let tet = Tet {
            v,
            n: [NONE; 4],
            alive: true,
        };
        if let Some(slot) = self.free.pop() {
            self.tets[slot as usize] = tet;
            slot
        } else {
            self.tets.push(tet);
            (self.tets.len() - 1) as u32
        }
    }

    /// Visibility walk toward `q`; brute force if the walk stalls.
    fn locate(&self, q: u32) -> u32 {
        let mut t = self.last;
        if !self.tets[t as usize].alive {
            t = self.tets.iter().position(|t| t.alive).unwrap() as u32;
        }
        let limit = 4 * self.tets.len() + 64;
        'walk: for step in 0..limit {
            let tet = &self.tets[t as usize];
            for j in 0..4 {
                let k = (j + step) % 4;
                let mut f = tet.v;
                f[k] = q;
                if self.orient(f[0], f[1], f[2], f[3]) < 0.0 {
                    let nb = tet.n[k];
                    if nb == NONE {
                        break 'walk;
                    }
                    t = nb;
                    continue 'walk;
                }
            }
            return t;
        }
        (0..self.tets.len() as u32)
            .find(|&t| self.tets[t as usize].alive && self.in_sphere(t, q) > 0.0)
            .expect("point outside the bounding tetrahedron")
    }

    fn insert(&mut self, q: u32) {
        let start = self.locate(q);
        let mut in_cavity: HashSet<u32> = HashSet::new();
        let mut cavity = vec![start];
        in_cavity.insert(start);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for k in 0..4 {
                let nb = self.tets[t as usize].n[k];
                if nb != NONE && !in_cavity.contains(&nb) && self.in_sphere(nb, q) > 0.0 {
                    in_cavity.insert(nb);
                    cavity.push(nb);
                    stack.push(nb);
                }
            }
        }
        // Grow the cavity until every boundary face sees q strictly positively.
        loop {
            let mut grown = false;
            for idx in 0..cavity.len() {
                let t = cavity[idx];
                let tet = self.tets[t as usize];
                for k in 0..4 {
                    let nb = tet.n[k];
                    if nb != NONE && in_cavity.contains(&nb) {
                        continue;
                    }
                    let mut f = tet.v;
                    f[k] = q;
                    if self.orient(f[0], f[1], f[2], f[3]) <= 0.0 && nb != NONE {
                        in_cavity.insert(nb);
                        cavity.push(nb);
                        grown = true;
                    }
                }
            }
            if !grown {
                break;
            }
        }

        let mut boundary: Vec<([u32; 4], u32)> = Vec::new();
        for &t in &cavity {
            let tet = self.tets[t as usize];
            for k in 0..4 {
                let nb = tet.n[k];
                if nb == NONE || !in_cavity.contains(&nb) {
                    let mut v = tet.v;
                    v[k] = q;
                    boundary.push((v, nb));
                }
            }
        }
        for &t in &cavity {
            self.tets[t as usize].alive = false;
            self.free.push(t);
        }
        // Faces through q are shared by exactly two new tets; key by the
        // opposite edge's other two vertices.
        let mut pending: HashMap<(u32, u32), (u32, usize)> = HashMap::new();
        let mut created = Vec::with_capacity(boundary.len());
        for (v, outside) in boundary {
            let t = self.add(v);
            created.push(t);
            let qk = v.iter().position(|&x| x == q).unwrap();
            self.tets[t as usize].n[qk] = outside;
            if outside != NONE {
                let on = &mut self.tets[outside as usize];
                let face: Vec<u32> = v.iter().copied().filter(|&x| x != q).collect();
                for j in 0..4 {
                    if !face.contains(&on.v[j]) {
                        on.n[j] = t;
                    }
                }
            }
            for k in 0..4 {
                if k == qk {
                    continue;
                }
                // Face opposite v[k] contains q and the two remaining vertices.
                let mut e: Vec<u32> = (0..4).filter(|&j| j != k && j != qk).map(|j| v[j]).collect();
                e.sort_unstable();
                let key = (e[0], e[1]);
                if let Some((other, ok)) = pending.remove(&key) {
                    self.tets[t as usize].n[k] = other;
                    self.tets[other as usize].n[ok] = t;
                } else {
                    pending.insert(key, (t, k));
                }
            }
        }
        debug_assert!(pending.is_empty(), "cavity boundary is not a closed surface");
        self.last = *created.last().unwrap();
    }
}

/// Delaunay tetrahedra of `points` (at least 4, affinely spanning 3-D), each
/// positively oriented, as sorted vertex-index quadruples.
pub fn delaunay_tetrahedra(points: &[Point3]) -> Vec<[u32; 4]> {
    let n = points.len();
    assert!(n >= 4, "need at least four points");
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let centre = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, (lo[2] + hi[2]) / 2.0];
    let extent = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(1e-12);
    let s = SUPER_SCALE * extent;
    let mut all: Vec<Point3> = points.to_vec();
    for d in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
        all.push([centre[0] + s * d[0], centre[1] + s * d[1], centre[2] + s * d[2]]);
    }
    let sv = [n as u32, n as u32 + 1, n as u32 + 2, n as u32 + 3];
    let mut mesh = Mesh {
        pts: &all,
        tets: Vec::new(),
        free: Vec::new(),
        last: 0,
    };
    let root = if mesh.orient(sv[0], sv[1], sv[2], sv[3]) > 0.0 {
        sv
    } else {
        [sv[1], sv[0], sv[2], sv[3]]
    };
    mesh.add(root);
    for q in 0..n as u32 {
        mesh.insert(q);
    }
    mesh.tets
        .iter()
        .filter(|t| t.alive && t.v.iter().all(|&v| (v as usize) < n))
        .map(|t| {
            let mut v = t.v;
            v.sort_unstable();
            v
        })
        .collect()
}
