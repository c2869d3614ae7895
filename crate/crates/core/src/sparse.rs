//! Weighted P1 stiffness matrices in CSR form and a Jacobi-preconditioned
//! conjugate gradient solver. Used as the descent metric of the torsion
//! solver.

use crate::mesh::TriMesh;

#[derive(Debug, Clone)]
pub(crate) struct StiffnessPattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<[usize; 9]>,
    local: Vec<[f64; 9]>,
}

impl StiffnessPattern {
    pub fn new(mesh: &TriMesh) -> Self {
        let n = mesh.n_vertices();
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for cell in mesh.cells() {
            for &a in cell {
                for &b in cell {
                    neighbors[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut neighbors {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let find = |a: usize, b: usize| -> usize {
            let row = &col_idx[row_ptr[a]..row_ptr[a + 1]];
            row_ptr[a] + row.binary_search(&b).expect("pattern contains cell pairs")
        };
        let mut slots = Vec::with_capacity(mesh.n_cells());
        let mut local = Vec::with_capacity(mesh.n_cells());
        for (c, cell) in mesh.cells().iter().enumerate() {
            let g = &mesh.basis_gradients()[c];
            let area = mesh.cell_areas()[c];
            let mut s = [0usize; 9];
            let mut l = [0.0; 9];
            for a in 0..3 {
                for b in 0..3 {
                    s[3 * a + b] = find(cell[a], cell[b]);
                    l[3 * a + b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
            slots.push(s);
            local.push(l);
        }
        Self {
            row_ptr,
            col_idx,
            slots,
            local,
        }
    }

    /// `K_ij = Σ_T weight_T |T| ∇φ_i·∇φ_j`.
    pub fn assemble(&self, weights: &[f64]) -> CsrMatrix<'_> {
        let mut values = vec![0.0; self.col_idx.len()];
        for ((s, l), w) in self.slots.iter().zip(&self.local).zip(weights) {
            for k in 0..9 {
                values[s[k]] += w * l[k];
            }
        }
        CsrMatrix {
            row_ptr: &self.row_ptr,
            col_idx: &self.col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CsrMatrix<'a> {
    row_ptr: &'a [usize],
    col_idx: &'a [usize],
    values: Vec<f64>,
}

impl CsrMatrix<'_> {
    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            *yi = self.col_idx[lo..hi]
                .iter()
                .zip(&self.values[lo..hi])
                .map(|(&j, a)| a * x[j])
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n())
            .map(|i| {
                let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let k = self.col_idx[lo..hi].binary_search(&i).expect("diagonal present");
                self.values[lo + k]
            })
            .collect()
    }
}

pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG for `A x = b`; `x` holds the initial guess.
///
/// `A` may be singular as long as `b` lies in its range.
pub(crate) fn pcg(a: &CsrMatrix<'_>, b: &[f64], x: &mut [f64], rel_tol: f64, max_iter: usize) -> CgOutcome {
    let n = a.n();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut ax = vec![0.0; n];
    a.matvec(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > rel_tol && it < max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    CgOutcome {
        iterations: it,
        relative_residual: res,
    }
}
