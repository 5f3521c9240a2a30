//! Sparse propagation operator.
//!
//! [`normalize_adjacency`] turns an undirected edge list into the
//! self-loop-augmented, symmetrically normalized adjacency
//! `Â = D̃^{-1/2} (A + I) D̃^{-1/2}` stored in CSR form. [`spmm`] and
//! [`propagate_orders`] apply it to dense feature matrices; powers of `Â`
//! are never materialized, `Â^k H` is always `Â(Â^{k-1} H)`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::DenseMatrix;

/// Undirected, unweighted edges over 0-based node ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeList {
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn new(edges: Vec<(usize, usize)>) -> Self {
        Self { edges }
    }

    /// Sorted, de-duplicated unordered pairs with `u <= v`.
    pub fn canonical(&self) -> Vec<(usize, usize)> {
        let mut pairs: Vec<_> = self
            .edges
            .iter()
            .map(|&(u, v)| if u <= v { (u, v) } else { (v, u) })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        pairs
    }
}

impl From<Vec<(usize, usize)>> for EdgeList {
    fn from(edges: Vec<(usize, usize)>) -> Self {
        Self { edges }
    }
}

/// CSR matrix over `n` nodes. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGraph {
    /// Validating constructor from raw CSR arrays.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 {
            return Err(Error::dim(
                "SparseGraph::from_csr",
                n + 1,
                row_offsets.len(),
            ));
        }
        let m = col_indices.len();
        if values.len() != m {
            return Err(Error::dim("SparseGraph::from_csr", m, values.len()));
        }
        if row_offsets[0] != 0 || row_offsets[n] != m {
            return Err(Error::Input(format!(
                "row offsets must start at 0 and end at {m}"
            )));
        }
        for i in 0..n {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if start > end {
                return Err(Error::Input(format!("row offsets decrease at row {i}")));
            }
            let row = &col_indices[start..end];
            if let Some(&bad) = row.iter().find(|&&c| c >= n) {
                return Err(Error::Input(format!(
                    "column {bad} out of range in row {i}"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Input(format!(
                    "columns of row {i} are not strictly increasing"
                )));
            }
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored non-zeros, self-loops included.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| self.values[range.start + k])
    }

    /// Largest `|a_ij − a_ji|` over stored entries; a missing mirror entry
    /// counts as zero.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                let mirror = self.get(j, i).unwrap_or(0.0);
                worst = worst.max((v - mirror).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }

    pub fn to_dense<T: Scalar>(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.set(i, j, T::from_f64(v));
            }
        }
        out
    }
}

/// Builds `Â = D̃^{-1/2}(A + I)D̃^{-1/2}` for an undirected binary graph.
///
/// Duplicate edges collapse to one and explicit self-loops merge with the
/// added identity, so every entry of `A + I` is 0 or 1.
pub fn normalize_adjacency(edges: &EdgeList, n: usize) -> Result<SparseGraph> {
    if n == 0 {
        return Err(Error::Input("graph must have at least one node".into()));
    }
    let pairs = edges.canonical();
    if let Some(&(u, v)) = pairs.iter().find(|&&(_, v)| v >= n) {
        return Err(Error::Input(format!(
            "edge ({u}, {v}) references a node outside 0..{n}"
        )));
    }

    let mut degree = vec![1usize; n];
    for &(u, v) in &pairs {
        if u != v {
            degree[u] += 1;
            degree[v] += 1;
        }
    }

    let mut row_offsets = Vec::with_capacity(n + 1);
    row_offsets.push(0);
    for &d in &degree {
        row_offsets.push(row_offsets.last().unwrap() + d);
    }
    let m = row_offsets[n];

    let mut col_indices = vec![0usize; m];
    let mut fill = row_offsets[..n].to_vec();
    for i in 0..n {
        col_indices[fill[i]] = i;
        fill[i] += 1;
    }
    for &(u, v) in &pairs {
        if u != v {
            col_indices[fill[u]] = v;
            fill[u] += 1;
            col_indices[fill[v]] = u;
            fill[v] += 1;
        }
    }

    let mut values = vec![0.0; m];
    for i in 0..n {
        let range = row_offsets[i]..row_offsets[i + 1];
        col_indices[range.clone()].sort_unstable();
        for k in range {
            let j = col_indices[k];
            values[k] = 1.0 / ((degree[i] * degree[j]) as f64).sqrt();
        }
    }

    Ok(SparseGraph {
        n,
        row_offsets,
        col_indices,
        values,
    })
}

/// `Â · h`. Values are cast from the 64-bit storage to `T` per entry.
pub fn spmm<T: Scalar>(g: &SparseGraph, h: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if h.rows() != g.n {
        return Err(Error::dim("spmm", format!("{} rows", g.n), h.rows()));
    }
    let cols = h.cols();
    let mut out = DenseMatrix::zeros(g.n, cols);
    for i in 0..g.n {
        let dst = out.row_mut(i);
        for (j, v) in g.row(i) {
            let v = T::from_f64(v);
            for (o, &x) in dst.iter_mut().zip(h.row(j)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// `[Â h, Â² h, …, Â^p h]`, each obtained from the previous by one more
/// [`spmm`].
pub fn propagate_orders<T: Scalar>(
    g: &SparseGraph,
    h: &DenseMatrix<T>,
    p: usize,
) -> Result<Vec<DenseMatrix<T>>> {
    if p == 0 {
        return Err(Error::Input("propagation order must be at least 1".into()));
    }
    let mut out: Vec<DenseMatrix<T>> = Vec::with_capacity(p);
    out.push(spmm(g, h)?);
    for k in 1..p {
        let next = spmm(g, &out[k - 1])?;
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_rows(g: &SparseGraph) -> Vec<Vec<f64>> {
        let d = g.to_dense::<f64>();
        (0..g.n()).map(|i| d.row(i).to_vec()).collect()
    }

    #[test]
    fn isolated_single_node_is_identity() {
        let g = normalize_adjacency(&EdgeList::default(), 1).unwrap();
        assert_eq!(dense_rows(&g), vec![vec![1.0]]);
    }

    #[test]
    fn single_edge_gives_halves() {
        let g = normalize_adjacency(&vec![(0, 1)].into(), 2).unwrap();
        assert_eq!(dense_rows(&g), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn path_of_three_matches_hand_computation() {
        let g = normalize_adjacency(&vec![(0, 1), (1, 2)].into(), 3).unwrap();
        let d = dense_rows(&g);
        let diag = [0.5, 1.0 / 3.0, 0.5];
        for i in 0..3 {
            assert!((d[i][i] - diag[i]).abs() < 1e-15);
        }
        let off = 1.0 / 6f64.sqrt();
        assert!((d[0][1] - off).abs() < 1e-15);
        assert!((d[1][2] - off).abs() < 1e-15);
        assert_eq!(d[0][2], 0.0);
    }

    #[test]
    fn duplicates_and_self_loops_do_not_change_weights() {
        let plain = normalize_adjacency(&vec![(0, 1), (1, 2)].into(), 3).unwrap();
        let noisy = normalize_adjacency(
            &vec![(1, 0), (0, 1), (1, 2), (2, 1), (1, 1), (0, 0)].into(),
            3,
        )
        .unwrap();
        assert_eq!(plain, noisy);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            normalize_adjacency(&EdgeList::default(), 0),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            normalize_adjacency(&vec![(0, 3)].into(), 3),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn csr_invariants_hold() {
        let g = normalize_adjacency(&vec![(0, 4), (2, 1), (4, 3), (3, 0)].into(), 5).unwrap();
        assert_eq!(g.row_offsets()[0], 0);
        assert_eq!(*g.row_offsets().last().unwrap(), g.nnz());
        for i in 0..g.n() {
            let cols: Vec<_> = g.row(i).map(|(c, _)| c).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
            assert!(g.get(i, i).unwrap() > 0.0);
        }
        assert!(g.is_symmetric(1e-12));
        // Rebuilding through the validating constructor accepts it.
        SparseGraph::from_csr(
            g.n(),
            g.row_offsets().to_vec(),
            g.col_indices().to_vec(),
            g.values().to_vec(),
        )
        .unwrap();
    }

    #[test]
    fn from_csr_rejects_unsorted_rows() {
        let err = SparseGraph::from_csr(2, vec![0, 2, 3], vec![1, 0, 1], vec![1.0; 3]);
        assert!(err.is_err());
    }

    #[test]
    fn spmm_identity_returns_adjacency() {
        let g = normalize_adjacency(&vec![(0, 1)].into(), 2).unwrap();
        let out = spmm(&g, &DenseMatrix::<f32>::identity(2)).unwrap();
        assert_eq!(out, DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));
    }

    #[test]
    fn spmm_single_node_is_noop() {
        let g = normalize_adjacency(&EdgeList::default(), 1).unwrap();
        let h = DenseMatrix::<f32>::from_rows(&[[3.0, -1.5, 0.25]]);
        assert_eq!(spmm(&g, &h).unwrap(), h);
    }

    #[test]
    fn spmm_rejects_row_mismatch() {
        let g = normalize_adjacency(&vec![(0, 1)].into(), 2).unwrap();
        let h = DenseMatrix::<f32>::zeros(3, 1);
        assert!(matches!(spmm(&g, &h), Err(Error::Dimension { .. })));
    }

    #[test]
    fn propagate_orders_basic_cases() {
        let g = normalize_adjacency(&vec![(0, 1), (1, 2)].into(), 3).unwrap();
        let h = DenseMatrix::<f32>::from_fn(3, 2, |i, j| (i * 2 + j) as f32);
        let one = propagate_orders(&g, &h, 1).unwrap();
        assert_eq!(one, vec![spmm(&g, &h).unwrap()]);
        assert!(propagate_orders(&g, &h, 0).is_err());

        let single = normalize_adjacency(&EdgeList::default(), 1).unwrap();
        let h1 = DenseMatrix::<f32>::from_rows(&[[2.0, 7.0]]);
        assert_eq!(
            propagate_orders(&single, &h1, 2).unwrap(),
            vec![h1.clone(), h1]
        );
    }

    #[test]
    fn propagate_orders_equals_repeated_spmm_exactly() {
        let g =
            normalize_adjacency(&vec![(0, 1), (1, 2), (2, 3), (3, 0), (1, 3)].into(), 4).unwrap();
        let h = DenseMatrix::<f32>::from_fn(4, 3, |i, j| ((i + 1) * (j + 2)) as f32 * 0.1);
        let orders = propagate_orders(&g, &h, 4).unwrap();
        let mut cur = h;
        for k in 0..4 {
            cur = spmm(&g, &cur).unwrap();
            assert_eq!(orders[k], cur);
        }
    }
}
