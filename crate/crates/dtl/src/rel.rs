//! Dense binary relations over `0..n`, used for frame accessibility
//! orders and quasimodel successor relations.

/// A binary relation on `{0, .., n-1}` stored as a dense boolean matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    n: usize,
    m: Vec<bool>,
}

impl Relation {
    pub fn new(n: usize) -> Self {
        Relation {
            n,
            m: vec![false; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut r = Relation::new(n);
        for i in 0..n {
            r.set(i, i, true);
        }
        r
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut r = Relation::new(n);
        for &(i, j) in pairs {
            r.set(i, j, true);
        }
        r
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.m[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.m[i * self.n + j] = value;
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Successors of `i`, ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i))
    }

    /// Pairs `(i, j)` with `i R j`, `j R k` but not `i R k` for some `k`.
    pub fn transitivity_gaps(&self) -> Vec<(usize, usize, usize)> {
        let mut gaps = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if !self.get(i, j) {
                    continue;
                }
                for k in 0..self.n {
                    if self.get(j, k) && !self.get(i, k) {
                        gaps.push((i, j, k));
                    }
                }
            }
        }
        gaps
    }

    pub fn is_transitive(&self) -> bool {
        self.transitivity_gaps().is_empty()
    }

    pub fn is_preorder(&self) -> bool {
        self.is_reflexive() && self.is_transitive()
    }

    /// Reflexive-transitive closure (Warshall).
    pub fn reflexive_transitive_closure(&self) -> Relation {
        let mut c = self.clone();
        for i in 0..self.n {
            c.set(i, i, true);
        }
        for k in 0..self.n {
            for i in 0..self.n {
                if c.get(i, k) {
                    for j in 0..self.n {
                        if c.get(k, j) {
                            c.set(i, j, true);
                        }
                    }
                }
            }
        }
        c
    }

    /// Restriction to the sub-universe `keep` (ascending world indices),
    /// reindexed to `0..keep.len()`.
    pub fn restrict(&self, keep: &[usize]) -> Relation {
        let mut r = Relation::new(keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                if self.get(i, j) {
                    r.set(a, b, true);
                }
            }
        }
        r
    }
}

impl std::fmt::Debug for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Relation{:?}", self.pairs())
    }
}
