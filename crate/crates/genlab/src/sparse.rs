//! Minimal symmetric CSR matrix, enough for Laplacians: matvec, dense
//! conversion, norm estimates and connectivity.

use nalgebra::{DMatrix, DVector};

/// Symmetric sparse matrix in CSR form. Both (i,j) and (j,i) are stored so
/// matvec is a plain row scan.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseSym {
    /// Build from a list of entries given as (row, col, value) with every
    /// symmetric pair present. Entries are sorted into canonical CSR order,
    /// so the result is independent of input ordering.
    pub fn from_entries(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        SparseSym {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        self.matvec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[idx] * x[self.col_idx[idx]];
            }
            y[i] = acc;
        }
    }

    /// y = A * X for a dense multi-column X (column-major nalgebra layout).
    pub fn matmul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.n, "sparse matmul dimension mismatch");
        let mut y = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let xs = x.column(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[idx] * xs[self.col_idx[idx]];
                }
                y[(i, c)] = acc;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[idx])] = self.values[idx];
            }
        }
        m
    }

    /// Gershgorin upper bound on the spectral radius; cheap and always valid
    /// for symmetric matrices.
    pub fn gershgorin_bound(&self) -> f64 {
        let mut bound: f64 = 0.0;
        for i in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                let v = self.values[idx];
                if self.col_idx[idx] == i {
                    diag = v;
                } else {
                    off += v.abs();
                }
            }
            bound = bound.max(diag + off);
        }
        bound
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Row sums, i.e. A * 1.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for i in 0..self.n {
            for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
                sums[i] += self.values[idx];
            }
        }
        sums
    }
}

/// Union-find over node indices; used to report graph connectivity.
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return;
        }
        self.components -= 1;
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }
}
