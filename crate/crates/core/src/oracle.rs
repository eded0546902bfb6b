//! Dense exact diagonalization (FCI) for tiny active spaces.
//!
//! Supplies the truncation-error evaluator used for rank selection and the
//! largest computational-basis-state overlap of the ground state. Matrix
//! elements are built with the Slater-Condon rules on chemist-notation
//! integrals; the implementation is validated against an exhaustive
//! second-quantized oracle in the tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::factor::Factors;
use crate::hamiltonian::Hamiltonian;
use crate::{Error, Result};

/// Hard guard on the determinant-space dimension.
pub const MAX_DIMENSION: usize = 2_000_000;
/// Dense eigensolver is used up to this dimension, Lanczos beyond it.
pub const DENSE_LIMIT: usize = 2000;

/// Determinant basis for a fixed (n_alpha, n_beta, N) sector:
/// all pairs of occupation bitmasks, lexicographically ordered.
#[derive(Debug, Clone)]
pub struct DeterminantBasis {
    n_orbitals: usize,
    n_alpha: usize,
    n_beta: usize,
    dets: Vec<(u64, u64)>,
}

impl DeterminantBasis {
    pub fn new(n_orbitals: usize, n_alpha: usize, n_beta: usize) -> Result<Self> {
        if n_orbitals > 60 {
            return Err(Error::validation(
                "determinant masks support at most 60 orbitals",
            ));
        }
        if n_alpha > n_orbitals || n_beta > n_orbitals {
            return Err(Error::validation(format!(
                "electron counts ({n_alpha}a, {n_beta}b) exceed {n_orbitals} orbitals"
            )));
        }
        let da = binomial(n_orbitals, n_alpha);
        let db = binomial(n_orbitals, n_beta);
        let dim = da.checked_mul(db).unwrap_or(usize::MAX);
        if dim > MAX_DIMENSION {
            return Err(Error::validation(format!(
                "determinant space dimension {dim} exceeds guard {MAX_DIMENSION}"
            )));
        }
        let alphas = masks_with_popcount(n_orbitals, n_alpha);
        let betas = masks_with_popcount(n_orbitals, n_beta);
        let mut dets = Vec::with_capacity(dim);
        for &a in &alphas {
            for &b in &betas {
                dets.push((a, b));
            }
        }
        Ok(DeterminantBasis {
            n_orbitals,
            n_alpha,
            n_beta,
            dets,
        })
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }
    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }
    pub fn dets(&self) -> &[(u64, u64)] {
        &self.dets
    }
    pub fn n_orbitals(&self) -> usize {
        self.n_orbitals
    }
    pub fn n_alpha(&self) -> usize {
        self.n_alpha
    }
    pub fn n_beta(&self) -> usize {
        self.n_beta
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// All n-bit masks with exactly k bits set, ascending as integers.
fn masks_with_popcount(n: usize, k: usize) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(n, k));
    let limit: u64 = 1u64 << n;
    let mut v: u64 = (1u64 << k) - 1;
    while v < limit {
        out.push(v);
        // Gosper's hack: next integer with the same popcount
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

/// Ground-state solution of the sector Hamiltonian.
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Ground energy including the core energy (Hartree).
    pub e0: f64,
    /// Unit-norm ground-vector coefficients over the determinant basis.
    pub coefficients: Vec<f64>,
    pub basis: DeterminantBasis,
    /// Set when the gap to the next state is below 1e-10.
    pub degenerate: bool,
}

impl OracleResult {
    pub fn max_overlap(&self) -> f64 {
        self.coefficients.iter().map(|c| c * c).fold(0.0, f64::max)
    }
}

/// Largest squared coefficient and its determinant; ties break toward the
/// lowest basis index.
pub fn max_basis_overlap(result: &OracleResult) -> (f64, (u64, u64)) {
    let mut best = 0.0f64;
    let mut arg = 0usize;
    for (i, c) in result.coefficients.iter().enumerate() {
        let w = c * c;
        if w > best {
            best = w;
            arg = i;
        }
    }
    (best, result.basis.dets()[arg])
}

fn parity_between(mask: u64, a: usize, b: usize) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if hi - lo <= 1 {
        return 1.0;
    }
    let between = (1u64 << hi).wrapping_sub(1) & !((1u64 << (lo + 1)) - 1);
    if (mask & between).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    std::iter::successors((mask != 0).then_some(mask), |&m| {
        let next = m & (m - 1);
        (next != 0).then_some(next)
    })
    .map(|m| m.trailing_zeros() as usize)
}

/// Slater-Condon matrix element between two determinants.
pub fn slater_condon(ham: &Hamiltonian, d1: (u64, u64), d2: (u64, u64)) -> f64 {
    let h = ham.one_body();
    let eri = ham.eri();
    let (ia, ib) = d1;
    let (ja, jb) = d2;
    let exc_a = (ia ^ ja).count_ones() / 2;
    let exc_b = (ib ^ jb).count_ones() / 2;
    match (exc_a, exc_b) {
        (0, 0) => {
            let mut e = ham.e_core();
            let occ_a: Vec<usize> = bits(ia).collect();
            let occ_b: Vec<usize> = bits(ib).collect();
            for &p in &occ_a {
                e += h[[p, p]];
            }
            for &p in &occ_b {
                e += h[[p, p]];
            }
            for (n, &p) in occ_a.iter().enumerate() {
                for &q in &occ_a[n + 1..] {
                    e += eri[[p, p, q, q]] - eri[[p, q, q, p]];
                }
            }
            for (n, &p) in occ_b.iter().enumerate() {
                for &q in &occ_b[n + 1..] {
                    e += eri[[p, p, q, q]] - eri[[p, q, q, p]];
                }
            }
            for &p in &occ_a {
                for &q in &occ_b {
                    e += eri[[p, p, q, q]];
                }
            }
            e
        }
        (1, 0) => single_element(h, eri, ia, ja, ia & ja, ib),
        (0, 1) => single_element(h, eri, ib, jb, ib & jb, ia),
        (2, 0) => double_same_spin(eri, ia, ja),
        (0, 2) => double_same_spin(eri, ib, jb),
        (1, 1) => {
            let (ha, pa) = hole_particle(ia, ja);
            let (hb, pb) = hole_particle(ib, jb);
            let sign = parity_between(ia, ha, pa) * parity_between(ib, hb, pb);
            sign * eri[[ha, pa, hb, pb]]
        }
        _ => 0.0,
    }
}

fn hole_particle(i: u64, j: u64) -> (usize, usize) {
    let hole = (i & !j).trailing_zeros() as usize;
    let part = (j & !i).trailing_zeros() as usize;
    (hole, part)
}

fn single_element(
    h: &ndarray::Array2<f64>,
    eri: &ndarray::Array4<f64>,
    i_same: u64,
    j_same: u64,
    common_same: u64,
    other: u64,
) -> f64 {
    let (a, r) = hole_particle(i_same, j_same);
    let mut f = h[[a, r]];
    for q in bits(common_same) {
        f += eri[[a, r, q, q]] - eri[[a, q, q, r]];
    }
    for q in bits(other) {
        f += eri[[a, r, q, q]];
    }
    parity_between(i_same, a, r) * f
}

fn double_same_spin(eri: &ndarray::Array4<f64>, i: u64, j: u64) -> f64 {
    let holes: Vec<usize> = bits(i & !j).collect();
    let parts: Vec<usize> = bits(j & !i).collect();
    let (h1, h2) = (holes[0], holes[1]);
    let (p1, p2) = (parts[0], parts[1]);
    let s1 = parity_between(i, h1, p1);
    let intermediate = i ^ (1u64 << h1) ^ (1u64 << p1);
    let s2 = parity_between(intermediate, h2, p2);
    s1 * s2 * (eri[[h1, p1, h2, p2]] - eri[[h1, p2, h2, p1]])
}

/// Dense sector Hamiltonian matrix (row-parallel build).
pub fn build_dense_matrix(ham: &Hamiltonian, basis: &DeterminantBasis) -> DMatrix<f64> {
    let d = basis.len();
    let dets = basis.dets();
    let rows: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| {
            (0..d)
                .map(|j| {
                    let (ia, ib) = dets[i];
                    let (ja, jb) = dets[j];
                    let ea = (ia ^ ja).count_ones() / 2;
                    let eb = (ib ^ jb).count_ones() / 2;
                    if ea + eb > 2 {
                        0.0
                    } else {
                        slater_condon(ham, dets[i], dets[j])
                    }
                })
                .collect()
        })
        .collect();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// Sparse upper-triangle entries generated through single/double excitations.
fn build_sparse_entries(ham: &Hamiltonian, basis: &DeterminantBasis) -> Vec<(u32, u32, f64)> {
    use std::collections::HashMap;
    let dets = basis.dets();
    let index: HashMap<(u64, u64), usize> =
        dets.iter().enumerate().map(|(i, &d)| (d, i)).collect();
    let n = basis.n_orbitals();
    let orbmask = (1u64 << n) - 1;

    let entries: Vec<Vec<(u32, u32, f64)>> = (0..dets.len())
        .into_par_iter()
        .map(|i| {
            let (ia, ib) = dets[i];
            let mut row = Vec::new();
            row.push((i as u32, i as u32, slater_condon(ham, (ia, ib), (ia, ib))));
            let occ_a: Vec<usize> = bits(ia).collect();
            let vir_a: Vec<usize> = bits(!ia & orbmask).collect();
            let occ_b: Vec<usize> = bits(ib).collect();
            let vir_b: Vec<usize> = bits(!ib & orbmask).collect();
            let push = |ja: u64, jb: u64, row: &mut Vec<(u32, u32, f64)>| {
                let j = index[&(ja, jb)];
                if j > i {
                    let v = slater_condon(ham, (ia, ib), (ja, jb));
                    if v != 0.0 {
                        row.push((i as u32, j as u32, v));
                    }
                }
            };
            for &a in &occ_a {
                for &r in &vir_a {
                    push(ia ^ (1 << a) ^ (1 << r), ib, &mut row);
                }
            }
            for &a in &occ_b {
                for &r in &vir_b {
                    push(ia, ib ^ (1 << a) ^ (1 << r), &mut row);
                }
            }
            for (x, &a) in occ_a.iter().enumerate() {
                for &b in &occ_a[x + 1..] {
                    for (y, &r) in vir_a.iter().enumerate() {
                        for &s in &vir_a[y + 1..] {
                            push(ia ^ (1 << a) ^ (1 << b) ^ (1 << r) ^ (1 << s), ib, &mut row);
                        }
                    }
                }
            }
            for (x, &a) in occ_b.iter().enumerate() {
                for &b in &occ_b[x + 1..] {
                    for (y, &r) in vir_b.iter().enumerate() {
                        for &s in &vir_b[y + 1..] {
                            push(ia, ib ^ (1 << a) ^ (1 << b) ^ (1 << r) ^ (1 << s), &mut row);
                        }
                    }
                }
            }
            for &a in &occ_a {
                for &r in &vir_a {
                    let ja = ia ^ (1 << a) ^ (1 << r);
                    for &b in &occ_b {
                        for &s in &vir_b {
                            push(ja, ib ^ (1 << b) ^ (1 << s), &mut row);
                        }
                    }
                }
            }
            row
        })
        .collect();
    entries.into_iter().flatten().collect()
}

fn sparse_matvec(entries: &[(u32, u32, f64)], x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for &(i, j, v) in entries {
        let (i, j) = (i as usize, j as usize);
        y[i] += v * x[j];
        if i != j {
            y[j] += v * x[i];
        }
    }
}

/// Lanczos with full reorthogonalization and restarts; returns the two lowest
/// Ritz values and the lowest Ritz vector.
fn lanczos_lowest(
    entries: &[(u32, u32, f64)],
    dim: usize,
    seed: u64,
    tol: f64,
) -> (f64, f64, Vec<f64>) {
    let max_krylov = 200.min(dim);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v0: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v0);

    let mut best_pair = (f64::INFINITY, f64::INFINITY);
    let mut best_vec = v0.clone();
    for _restart in 0..20 {
        let mut vs: Vec<Vec<f64>> = vec![v0.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; dim];
        let mut converged = false;
        for k in 0..max_krylov {
            sparse_matvec(entries, &vs[k], &mut w);
            if k > 0 {
                let b = betas[k - 1];
                for (wi, pi) in w.iter_mut().zip(&vs[k - 1]) {
                    *wi -= b * pi;
                }
            }
            let a = dot(&w, &vs[k]);
            alphas.push(a);
            for (wi, vi) in w.iter_mut().zip(&vs[k]) {
                *wi -= a * vi;
            }
            // full reorthogonalization, applied twice
            for _ in 0..2 {
                for v in &vs {
                    let d = dot(&w, v);
                    for (wi, vi) in w.iter_mut().zip(v) {
                        *wi -= d * vi;
                    }
                }
            }
            let b = norm(&w);
            let (lo, lo2, y) = tridiag_lowest(&alphas, &betas);
            let resid = b * y[y.len() - 1].abs();
            if resid <= tol || b <= 1e-14 || k + 1 == max_krylov {
                let mut vec = vec![0.0; dim];
                for (c, v) in y.iter().zip(&vs) {
                    for (xi, vi) in vec.iter_mut().zip(v) {
                        *xi += c * vi;
                    }
                }
                normalize(&mut vec);
                best_pair = (lo, lo2);
                best_vec = vec;
                converged = resid <= tol || b <= 1e-14;
                break;
            }
            betas.push(b);
            let mut nv = w.clone();
            for x in nv.iter_mut() {
                *x /= b;
            }
            vs.push(nv);
        }
        if converged {
            return (best_pair.0, best_pair.1, best_vec);
        }
        v0 = best_vec.clone();
    }
    (best_pair.0, best_pair.1, best_vec)
}

/// Lowest Ritz pair of the Lanczos tridiagonal matrix.
fn tridiag_lowest(alphas: &[f64], betas: &[f64]) -> (f64, f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i > 0 {
            t[(i, i - 1)] = betas[i - 1];
            t[(i - 1, i)] = betas[i - 1];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let lo = eig.eigenvalues[order[0]];
    let lo2 = if k > 1 {
        eig.eigenvalues[order[1]]
    } else {
        f64::INFINITY
    };
    let y: Vec<f64> = (0..k).map(|r| eig.eigenvectors[(r, order[0])]).collect();
    (lo, lo2, y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for x in a.iter_mut() {
            *x /= n;
        }
    }
}

/// Lowest eigenpair of the sector Hamiltonian. Dense solve for small spaces,
/// Lanczos above [`DENSE_LIMIT`]; the core energy is included in `e0`.
pub fn fci_ground_state(ham: &Hamiltonian, n_alpha: usize, n_beta: usize) -> Result<OracleResult> {
    let basis = DeterminantBasis::new(ham.n_orbitals(), n_alpha, n_beta)?;
    let d = basis.len();
    let (e0, e1, mut coeffs) = if d <= DENSE_LIMIT {
        let m = build_dense_matrix(ham, &basis);
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let gs = order[0];
        let e1 = if d > 1 {
            eig.eigenvalues[order[1]]
        } else {
            f64::INFINITY
        };
        let coeffs: Vec<f64> = (0..d).map(|r| eig.eigenvectors[(r, gs)]).collect();
        (eig.eigenvalues[gs], e1, coeffs)
    } else {
        let entries = build_sparse_entries(ham, &basis);
        let (lo, lo2, vec) = lanczos_lowest(&entries, d, 0x5eed, 1e-11);
        (lo, lo2, vec)
    };
    let nrm = norm(&coeffs);
    if !(nrm.is_finite() && nrm > 0.0) {
        return Err(Error::numerical("eigensolver returned a degenerate vector"));
    }
    for c in coeffs.iter_mut() {
        *c /= nrm;
    }
    // deterministic overall sign: largest-magnitude entry positive
    let mut arg = 0usize;
    for (i, c) in coeffs.iter().enumerate() {
        if c.abs() > coeffs[arg].abs() {
            arg = i;
        }
    }
    if coeffs[arg] < 0.0 {
        for c in coeffs.iter_mut() {
            *c = -*c;
        }
    }
    Ok(OracleResult {
        e0,
        coefficients: coeffs,
        basis,
        degenerate: (e1 - e0).abs() < 1e-10,
    })
}

/// FCI energy shift caused by replacing the two-electron tensor with its
/// factorized reconstruction: `E0(approx) - E0(exact)`, same electron counts.
pub fn truncation_energy_error(ham: &Hamiltonian, factors: &Factors) -> Result<f64> {
    let approx = ham.with_eri(factors.reconstruct_eri())?;
    let exact = fci_ground_state(ham, ham.n_alpha(), ham.n_beta())?;
    let trunc = fci_ground_state(&approx, ham.n_alpha(), ham.n_beta())?;
    Ok(trunc.e0 - exact.e0)
}

/// Ground-state expectation value of a pure two-electron perturbation tensor
/// (the first-order energy response, for perturbation consistency checks).
pub fn two_body_expectation(
    result: &OracleResult,
    ham_template: &Hamiltonian,
    delta_eri: &ndarray::Array4<f64>,
) -> Result<f64> {
    let n = ham_template.n_orbitals();
    let zero_h = ndarray::Array2::<f64>::zeros((n, n));
    let delta_ham = Hamiltonian::new(
        ham_template.n_alpha(),
        ham_template.n_beta(),
        0.0,
        zero_h,
        delta_eri.clone(),
    )?;
    let m = build_dense_matrix(&delta_ham, &result.basis);
    let c = DVector::from_column_slice(&result.coefficients);
    Ok((c.transpose() * &m * &c)[(0, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::rotate_basis;
    use approx::assert_abs_diff_eq;
    use ndarray::{Array2, Array4};

    /// Exhaustive second-quantized matrix elements: the independent oracle
    /// for the Slater-Condon implementation.
    mod second_quantized {
        use crate::hamiltonian::Hamiltonian;
        use std::collections::HashMap;

        fn ann(mask: u64, s: usize) -> Option<(u64, f64)> {
            if mask & (1 << s) == 0 {
                return None;
            }
            let below = (mask & ((1u64 << s) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            Some((mask ^ (1 << s), sign))
        }

        fn cre(mask: u64, s: usize) -> Option<(u64, f64)> {
            if mask & (1 << s) != 0 {
                return None;
            }
            let below = (mask & ((1u64 << s) - 1)).count_ones();
            let sign = if below % 2 == 0 { 1.0 } else { -1.0 };
            Some((mask ^ (1 << s), sign))
        }

        fn combined(d: (u64, u64), n: usize) -> u64 {
            d.0 | (d.1 << n)
        }

        /// `<d1|H|d2>` with H = e_core + sum h_pq a+_ps a_qs
        /// + 1/2 sum (pq|rs) a+_ps a+_rt a_st a_qs, applied literally.
        pub fn element(ham: &Hamiltonian, d1: (u64, u64), d2: (u64, u64)) -> f64 {
            let n = ham.n_orbitals();
            let bra = combined(d1, n);
            let ket = combined(d2, n);
            let mut acc: HashMap<u64, f64> = HashMap::new();
            if bra == ket {
                *acc.entry(ket).or_insert(0.0) += ham.e_core();
            }
            let h = ham.one_body();
            let eri = ham.eri();
            let so = |p: usize, sigma: usize| p + sigma * n;
            for p in 0..n {
                for q in 0..n {
                    if h[[p, q]] == 0.0 {
                        continue;
                    }
                    for sigma in 0..2 {
                        if let Some((m1, s1)) = ann(ket, so(q, sigma)) {
                            if let Some((m2, s2)) = cre(m1, so(p, sigma)) {
                                *acc.entry(m2).or_insert(0.0) += h[[p, q]] * s1 * s2;
                            }
                        }
                    }
                }
            }
            for p in 0..n {
                for q in 0..n {
                    for r in 0..n {
                        for s in 0..n {
                            let v = eri[[p, q, r, s]];
                            if v == 0.0 {
                                continue;
                            }
                            for sig in 0..2 {
                                for tau in 0..2 {
                                    if let Some((m1, g1)) = ann(ket, so(q, sig)) {
                                        if let Some((m2, g2)) = ann(m1, so(s, tau)) {
                                            if let Some((m3, g3)) = cre(m2, so(r, tau)) {
                                                if let Some((m4, g4)) = cre(m3, so(p, sig)) {
                                                    *acc.entry(m4).or_insert(0.0) +=
                                                        0.5 * v * g1 * g2 * g3 * g4;
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            acc.get(&bra).copied().unwrap_or(0.0)
        }
    }

    fn hubbard_dimer(u: f64) -> Hamiltonian {
        let mut h = Array2::<f64>::zeros((2, 2));
        h[[0, 1]] = -1.0;
        h[[1, 0]] = -1.0;
        let mut eri = Array4::<f64>::zeros((2, 2, 2, 2));
        eri[[0, 0, 0, 0]] = u;
        eri[[1, 1, 1, 1]] = u;
        Hamiltonian::new(1, 1, 0.0, h, eri).unwrap()
    }

    #[test]
    fn basis_dimension_and_order() {
        let b = DeterminantBasis::new(4, 2, 1).unwrap();
        assert_eq!(b.len(), 6 * 4);
        let dets = b.dets();
        let mut sorted = dets.to_vec();
        sorted.sort();
        assert_eq!(dets, &sorted[..], "lexicographic order");
        for &(a, bmask) in dets {
            assert_eq!(a.count_ones(), 2);
            assert_eq!(bmask.count_ones(), 1);
        }
    }

    #[test]
    fn one_electron_diagonal_case() {
        let mut h = Array2::<f64>::zeros((3, 3));
        h[[0, 0]] = 0.9;
        h[[1, 1]] = -0.4;
        h[[2, 2]] = 0.3;
        let ham = Hamiltonian::new(1, 0, 0.25, h, Array4::zeros((3, 3, 3, 3))).unwrap();
        let res = fci_ground_state(&ham, 1, 0).unwrap();
        assert_abs_diff_eq!(res.e0, 0.25 - 0.4, epsilon = 1e-12);
    }

    #[test]
    fn hubbard_dimer_ground_energy() {
        let ham = hubbard_dimer(4.0);
        let res = fci_ground_state(&ham, 1, 1).unwrap();
        let analytic = 2.0 - 8.0f64.sqrt(); // U/2 - sqrt(U^2/4 + 4 t^2)
        assert_abs_diff_eq!(res.e0, analytic, epsilon = 1e-10);
    }

    #[test]
    fn hubbard_dimer_free_overlap() {
        let ham = hubbard_dimer(0.0);
        let res = fci_ground_state(&ham, 1, 1).unwrap();
        let (ov, _) = max_basis_overlap(&res);
        assert_abs_diff_eq!(ov, 0.25, epsilon = 1e-10);
    }

    #[test]
    fn diagonal_hamiltonian_overlap_is_one() {
        let mut h = Array2::<f64>::zeros((3, 3));
        h[[0, 0]] = -1.0;
        h[[1, 1]] = 0.5;
        h[[2, 2]] = 1.5;
        let ham = Hamiltonian::new(1, 1, 0.0, h, Array4::zeros((3, 3, 3, 3))).unwrap();
        let res = fci_ground_state(&ham, 1, 1).unwrap();
        let (ov, det) = max_basis_overlap(&res);
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-10);
        assert_eq!(det, (0b001, 0b001));
    }

    #[test]
    fn overlap_at_least_one_over_dimension() {
        let ham = Hamiltonian::synthetic(4, 2, 2, 3);
        let res = fci_ground_state(&ham, 2, 2).unwrap();
        let d = res.basis.len() as f64;
        assert!(res.max_overlap() >= 1.0 / d);
        let norm2: f64 = res.coefficients.iter().map(|c| c * c).sum();
        assert_abs_diff_eq!(norm2, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn slater_condon_matches_second_quantized_exhaustively() {
        for n in 1..=3usize {
            for seed in 0..2u64 {
                let ham = Hamiltonian::synthetic(n, 1.min(n), 1.min(n), 100 + seed);
                for na in 0..=n {
                    for nb in 0..=n {
                        let basis = DeterminantBasis::new(n, na, nb).unwrap();
                        for &d1 in basis.dets() {
                            for &d2 in basis.dets() {
                                let sc = slater_condon(&ham, d1, d2);
                                let sq = second_quantized::element(&ham, d1, d2);
                                assert_abs_diff_eq!(sc, sq, epsilon = 1e-10);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn energy_invariant_under_rotation() {
        let ham = Hamiltonian::synthetic(4, 2, 2, 21);
        let res = fci_ground_state(&ham, 2, 2).unwrap();
        let u = crate::linalg::random_orthogonal(4, 77);
        let rot = rotate_basis(&ham, &u).unwrap();
        let res_rot = fci_ground_state(&rot, 2, 2).unwrap();
        assert_abs_diff_eq!(res.e0, res_rot.e0, epsilon = 1e-9);
    }

    #[test]
    fn lanczos_matches_dense() {
        // D = C(6,3)^2 = 400: run both paths on the same operator
        let ham = Hamiltonian::synthetic(6, 3, 3, 5);
        let dense = fci_ground_state(&ham, 3, 3).unwrap();
        let basis = DeterminantBasis::new(6, 3, 3).unwrap();
        let entries = build_sparse_entries(&ham, &basis);
        let (lo, _, vec) = lanczos_lowest(&entries, basis.len(), 0x5eed, 1e-11);
        assert_abs_diff_eq!(lo, dense.e0, epsilon = 1e-9);
        let ov: f64 = vec
            .iter()
            .zip(&dense.coefficients)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .abs();
        assert_abs_diff_eq!(ov, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn dimension_guard_enforced() {
        assert!(DeterminantBasis::new(30, 15, 15).is_err());
        assert!(DeterminantBasis::new(4, 5, 0).is_err());
    }

    #[test]
    fn truncation_error_zero_for_exact_factorization() {
        let ham = Hamiltonian::synthetic(3, 2, 1, 88);
        let sf = crate::factor::cholesky_sf(&ham, crate::factor::CholeskyStop::Threshold(1e-12))
            .unwrap();
        let err = truncation_energy_error(&ham, &crate::factor::Factors::Sf(sf)).unwrap();
        assert!(err.abs() <= 1e-9, "exact factorization error {err}");
    }

    #[test]
    fn truncation_error_shrinks_with_threshold() {
        // trend over a 5-point threshold sweep; one inversion tolerated
        for seed in [901u64, 902] {
            let ham = Hamiltonian::synthetic(4, 2, 2, seed);
            let thresholds = [3e-1, 1e-1, 1e-2, 1e-4, 1e-8];
            let mut errs = Vec::new();
            for &t in &thresholds {
                let sf =
                    crate::factor::cholesky_sf(&ham, crate::factor::CholeskyStop::Threshold(t))
                        .unwrap();
                let err =
                    truncation_energy_error(&ham, &crate::factor::Factors::Sf(sf)).unwrap();
                errs.push(err.abs());
            }
            let inversions = errs
                .windows(2)
                .filter(|w| w[1] > w[0] + 1e-12)
                .count();
            assert!(
                inversions <= 1,
                "error trend not shrinking: {errs:?} ({inversions} inversions)"
            );
            assert!(errs[errs.len() - 1] <= errs[0] + 1e-12);
        }
    }

    #[test]
    fn truncation_error_matches_first_order_perturbation() {
        let ham = Hamiltonian::synthetic(3, 1, 2, 55);
        let base = fci_ground_state(&ham, 1, 2).unwrap();
        // tiny symmetric two-body perturbation built from a Gram form
        let n = 3;
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let mut v = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let x = rng.gen_range(-1.0..1.0);
                v[[i, j]] = x;
                v[[j, i]] = x;
            }
        }
        let delta = 1e-6;
        let mut d_eri = Array4::<f64>::zeros((n, n, n, n));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        d_eri[[i, j, k, l]] = delta * v[[i, j]] * v[[k, l]];
                    }
                }
            }
        }
        let first_order = two_body_expectation(&base, &ham, &d_eri).unwrap();
        let perturbed = ham.with_eri(ham.eri() + &d_eri).unwrap();
        let e_pert = fci_ground_state(&perturbed, 1, 2).unwrap().e0;
        let actual = e_pert - base.e0;
        assert!(
            (actual - first_order).abs() <= 1e-3 * first_order.abs().max(1e-12),
            "first-order mismatch: actual {actual:.3e} vs <psi|dV|psi> {first_order:.3e}"
        );
        assert_eq!(actual.signum(), first_order.signum());
    }
}
