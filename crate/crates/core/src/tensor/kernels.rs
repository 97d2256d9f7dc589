//! Dense matrix kernels. All matrices are row-major.

/// `out[m, n] = a[m, k] * b[k, n]` (out must be zeroed).
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

/// `out[m, k] += g[m, n] * b[k, n]^T`.
pub fn matmul_nt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let bp = &b[p * n..(p + 1) * n];
            out[i * k + p] += gi.iter().zip(bp).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k, n] += a[m, k]^T * g[m, n]`.
pub fn matmul_tn_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gi = &g[i * n..(i + 1) * n];
        for (p, &x) in a[i * k..(i + 1) * k].iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out[p * n..(p + 1) * n].iter_mut().zip(gi) {
                *o += x * y;
            }
        }
    }
}
