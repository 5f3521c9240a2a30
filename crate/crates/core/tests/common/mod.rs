//! Dense 64-bit reference implementations, written without the library's
//! sparse or fused code paths.
#![allow(dead_code)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut out = zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            out[i][j] = (0..k).map(|t| a[i][t] * b[t][j]).sum();
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn hconcat(blocks: &[Mat]) -> Mat {
    (0..blocks[0].len())
        .map(|i| blocks.iter().flat_map(|b| b[i].iter().copied()).collect())
        .collect()
}

pub fn relu(a: &Mat) -> Mat {
    a.iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect()
}

/// Entry-wise maximum over branches, taken one entry at a time.
pub fn brute_max(branches: &[Mat]) -> Mat {
    let (r, c) = (branches[0].len(), branches[0][0].len());
    let mut out = zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[i][j] = branches
                .iter()
                .map(|b| b[i][j])
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    out
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` built densely from an edge list.
pub fn normalized_adjacency(n: usize, edges: &[(usize, usize)]) -> Mat {
    let mut a = zeros(n, n);
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut out = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = a[i][j] / (d[i] * d[j]).sqrt();
        }
    }
    out
}

pub fn power(a: &Mat, k: usize) -> Mat {
    let n = a.len();
    let mut out: Mat = (0..n)
        .map(|i| (0..n).map(|j| f64::from(i == j)).collect())
        .collect();
    for _ in 0..k {
        out = matmul(a, &out);
    }
    out
}

pub fn to_mat(m: &hlhg_core::DenseMatrix<f64>) -> Mat {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn from_mat(m: &Mat) -> hlhg_core::DenseMatrix<f64> {
    hlhg_core::DenseMatrix::from_rows(m)
}

pub fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn frobenius(a: &Mat) -> f64 {
    a.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn relative_error(a: &Mat, reference: &Mat) -> f64 {
    let diff: f64 = a
        .iter()
        .flatten()
        .zip(reference.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    diff / frobenius(reference).max(f64::MIN_POSITIVE)
}

/// HLHG logits: `max_k Â^k · relu(max_k Â^k X W1) · W2`.
pub fn hlhg_forward(a: &Mat, x: &Mat, w1: &Mat, w2: &Mat, p: usize) -> Mat {
    let layer = |h: &Mat, w: &Mat| {
        let branches: Vec<Mat> = (1..=p)
            .map(|k| matmul(&matmul(&power(a, k), h), w))
            .collect();
        brute_max(&branches)
    };
    layer(&relu(&layer(x, w1)), w2)
}

pub fn gcn_forward(a: &Mat, x: &Mat, w1: &Mat, w2: &Mat) -> Mat {
    let h = relu(&matmul(&matmul(a, x), w1));
    matmul(&matmul(a, &h), w2)
}

/// Concat baseline: per-order blocks joined in layer 1, summed in layer 2.
pub fn concat_forward(a: &Mat, x: &Mat, w1: &[Mat], w2: &[Mat]) -> Mat {
    let p = w1.len();
    let blocks: Vec<Mat> = (1..=p)
        .map(|k| matmul(&matmul(&power(a, k), x), &w1[k - 1]))
        .collect();
    let h = relu(&hconcat(&blocks));
    let mut out = matmul(&matmul(&power(a, 1), &h), &w2[0]);
    for k in 2..=p {
        out = add(&out, &matmul(&matmul(&power(a, k), &h), &w2[k - 1]));
    }
    out
}

/// Mean cross-entropy over `mask`.
pub fn cross_entropy(logits: &Mat, labels: &[usize], mask: &[usize]) -> f64 {
    let total: f64 = mask
        .iter()
        .map(|&i| {
            let row = &logits[i];
            let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
            lse - row[labels[i]]
        })
        .sum();
    total / mask.len() as f64
}
