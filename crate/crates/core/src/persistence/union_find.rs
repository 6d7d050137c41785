/// Disjoint sets with path halving. Each root carries a payload chosen by the
/// caller (the elder element of its set).
pub(crate) struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    /// Makes `child` point at `root`. Both must be roots.
    pub fn attach(&mut self, child: u32, root: u32) {
        self.parent[child as usize] = root;
    }
}
