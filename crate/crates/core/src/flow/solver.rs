//! Symmetric positive definite solves for the interior-pressure system.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Sparse Cholesky below `direct_limit` unknowns, conjugate gradient above.
    Auto,
    Cholesky,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub method: SolverMethod,
    pub direct_limit: usize,
    /// Relative residual target for conjugate gradient.
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolverMethod::Auto,
            direct_limit: 500_000,
            cg_tolerance: 1e-12,
            cg_max_iterations: 100_000,
        }
    }
}

/// Solves `A x = b` for a symmetric positive definite `A` given as
/// (row, col, value) triplets; duplicates are summed.
pub(crate) fn solve_spd(
    n: usize,
    entries: &[(usize, usize, f64)],
    rhs: &[f64],
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let use_direct = match options.method {
        SolverMethod::Auto => n <= options.direct_limit,
        SolverMethod::Cholesky => true,
        SolverMethod::ConjugateGradient => false,
    };
    if use_direct {
        match cholesky(n, entries, rhs) {
            Ok(x) => return Ok(x),
            Err(e) if options.method == SolverMethod::Cholesky => return Err(e),
            Err(e) => log::warn!("sparse Cholesky failed ({e}); falling back to conjugate gradient"),
        }
    }
    conjugate_gradient(n, entries, rhs, options)
}

/// Elimination order that removes current leaves first. On a forest this
/// produces no fill-in; whatever remains (cycles) is appended in index order.
fn leaf_first_order(n: usize, entries: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, _) in entries {
        if i != j {
            adj[i].push(j);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue: std::collections::VecDeque<usize> = (0..n).filter(|&i| degree[i] <= 1).collect();
    while let Some(v) = queue.pop_front() {
        if done[v] {
            continue;
        }
        done[v] = true;
        order.push(v);
        for &u in &adj[v] {
            if !done[u] {
                degree[u] -= 1;
                if degree[u] == 1 {
                    queue.push_back(u);
                }
            }
        }
    }
    order.extend((0..n).filter(|&i| !done[i]));
    order
}

/// Symmetric matrix in compressed-column form with duplicates summed.
struct Csc {
    n: usize,
    col_start: Vec<usize>,
    row: Vec<usize>,
    val: Vec<f64>,
}

impl Csc {
    fn from_triplets(n: usize, entries: impl Iterator<Item = (usize, usize, f64)>) -> Csc {
        let mut t: Vec<(usize, usize, f64)> = entries.map(|(i, j, v)| (j, i, v)).collect();
        t.sort_by_key(|a| (a.0, a.1));
        let mut col_start = vec![0usize; n + 1];
        let mut row = Vec::with_capacity(t.len());
        let mut val: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (j, i, v) in t {
            if last == Some((j, i)) {
                *val.last_mut().expect("non-empty") += v;
            } else {
                row.push(i);
                val.push(v);
                col_start[j + 1] += 1;
                last = Some((j, i));
            }
        }
        for j in 0..n {
            col_start[j + 1] += col_start[j];
        }
        Csc {
            n,
            col_start,
            row,
            val,
        }
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_start[j]..self.col_start[j + 1];
        self.row[r.clone()].iter().copied().zip(self.val[r].iter().copied())
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            for (i, v) in self.col(j) {
                out[i] += v * x[j];
            }
        }
    }
}

/// Sparse `L D Lᵀ` factorization driven by the elimination tree
/// (up-looking, one row of `L` per step).
struct Ldl {
    col_start: Vec<usize>,
    row: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<f64>,
}

impl Ldl {
    fn factor(a: &Csc) -> Result<Ldl> {
        let n = a.n;
        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut count = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (mut i, _) in a.col(k) {
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    count[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_start = vec![0usize; n + 1];
        for k in 0..n {
            col_start[k + 1] = col_start[k] + count[k];
        }
        let nnz = col_start[n];
        let mut row = vec![0usize; nnz];
        let mut val = vec![0.0; nnz];
        let mut diag = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        let mut filled = vec![0usize; n];
        flag.iter_mut().for_each(|f| *f = NONE);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for (mut i, v) in a.col(k) {
                if i > k {
                    continue;
                }
                y[i] += v;
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            diag[k] = y[k];
            y[k] = 0.0;
            for &i in &pattern[top..n] {
                let yi = y[i];
                y[i] = 0.0;
                let end = col_start[i] + filled[i];
                for p in col_start[i]..end {
                    y[row[p]] -= val[p] * yi;
                }
                let l_ki = yi / diag[i];
                diag[k] -= l_ki * yi;
                row[end] = k;
                val[end] = l_ki;
                filled[i] += 1;
            }
            if !(diag[k] > 0.0) || !diag[k].is_finite() {
                return Err(Error::Domain(format!(
                    "matrix is not positive definite (pivot {k} = {})",
                    diag[k]
                )));
            }
        }
        Ok(Ldl {
            col_start,
            row,
            val,
            diag,
        })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.diag.len();
        for j in 0..n {
            for p in self.col_start[j]..self.col_start[j + 1] {
                x[self.row[p]] -= self.val[p] * x[j];
            }
        }
        for j in 0..n {
            x[j] /= self.diag[j];
        }
        for j in (0..n).rev() {
            for p in self.col_start[j]..self.col_start[j + 1] {
                x[j] -= self.val[p] * x[self.row[p]];
            }
        }
    }
}

fn cholesky(n: usize, entries: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    let order = leaf_first_order(n, entries);
    let mut position = vec![0; n];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }
    let a = Csc::from_triplets(
        n,
        entries.iter().map(|&(i, j, v)| (position[i], position[j], v)),
    );
    let ldl = Ldl::factor(&a)?;
    let mut b = vec![0.0; n];
    for (i, &v) in rhs.iter().enumerate() {
        b[position[i]] = v;
    }
    let mut x = b.clone();
    ldl.solve_in_place(&mut x);
    // one step of iterative refinement
    let mut ax = vec![0.0; n];
    a.mul(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    ldl.solve_in_place(&mut r);
    for (xi, ri) in x.iter_mut().zip(&r) {
        *xi += ri;
    }
    Ok(position.iter().map(|&k| x[k]).collect())
}

fn conjugate_gradient(
    n: usize,
    entries: &[(usize, usize, f64)],
    rhs: &[f64],
    options: &SolverOptions,
) -> Result<Vec<f64>> {
    let a = Csc::from_triplets(n, entries.iter().copied());
    let mut diag = vec![0.0; n];
    for &(i, j, v) in entries {
        if i == j {
            diag[i] += v;
        }
    }
    let matvec = |x: &[f64], out: &mut [f64]| a.mul(x, out);
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();

    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..options.cg_max_iterations {
        matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = dot(&r, &r).sqrt() / b_norm;
        if res <= options.cg_tolerance {
            return Ok(x);
        }
        if !res.is_finite() {
            return Err(Error::NoConvergence {
                iterations: it + 1,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let mut res_vec = vec![0.0; n];
    matvec(&x, &mut res_vec);
    let residual = res_vec
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    Err(Error::NoConvergence {
        iterations: options.cg_max_iterations,
        residual,
    })
}
