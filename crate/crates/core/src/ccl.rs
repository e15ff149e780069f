//! Two-pass connected-component labeling with union-find.
//!
//! 4-connectivity throughout. The first pass assigns provisional labels and
//! records equivalences between the left and upper neighbors; the second
//! pass resolves every pixel to its representative and renumbers components
//! `1..=n` in first-encounter raster order.

/// Binary foreground mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width);
        BinaryMask {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.width + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[i * self.width + j] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// Disjoint-set forest with union by rank and path compression.
struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind {
            parent: Vec::new(),
            rank: Vec::new(),
        }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        let (hi, lo) = if self.rank[ra as usize] >= self.rank[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
    }
}

/// Labeled partition of a mask's foreground into 4-connected components.
///
/// Labels are `1..=component_count` with 0 for background.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLabeling {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    component_count: u32,
}

impl ComponentLabeling {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.labels[i * self.width + j]
    }

    pub fn component_count(&self) -> u32 {
        self.component_count
    }

    /// Pixel sets per component, index 0 holding component label 1.
    pub fn pixel_sets(&self) -> Vec<Vec<(usize, usize)>> {
        let mut sets = vec![Vec::new(); self.component_count as usize];
        for (p, &l) in self.labels.iter().enumerate() {
            if l > 0 {
                sets[(l - 1) as usize].push((p / self.width, p % self.width));
            }
        }
        sets
    }
}

/// Classical two-pass labeling over a binary mask.
pub fn label_components(mask: &BinaryMask) -> ComponentLabeling {
    let (h, w) = (mask.height, mask.width);
    let mut provisional = vec![0u32; h * w]; // 0 = background, else id + 1
    let mut uf = UnionFind::new();

    // pass 1: provisional labels from the left and upper neighbors
    for i in 0..h {
        for j in 0..w {
            if !mask.data[i * w + j] {
                continue;
            }
            let left = if j > 0 { provisional[i * w + j - 1] } else { 0 };
            let up = if i > 0 { provisional[(i - 1) * w + j] } else { 0 };
            let label = match (left, up) {
                (0, 0) => uf.make_set() + 1,
                (l, 0) => l,
                (0, u) => u,
                (l, u) => {
                    uf.union(l - 1, u - 1);
                    l.min(u)
                }
            };
            provisional[i * w + j] = label;
        }
    }

    // pass 2: resolve equivalences, renumber roots in raster order
    let mut root_to_final = vec![0u32; uf.parent.len()];
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    for p in 0..h * w {
        let prov = provisional[p];
        if prov == 0 {
            continue;
        }
        let root = uf.find(prov - 1) as usize;
        if root_to_final[root] == 0 {
            next += 1;
            root_to_final[root] = next;
        }
        labels[p] = root_to_final[root];
    }

    ComponentLabeling {
        height: h,
        width: w,
        labels,
        component_count: next,
    }
}
