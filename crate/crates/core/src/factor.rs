//! Factorizations of the two-electron tensor: single factorization via
//! pivoted Cholesky, double factorization via per-leaf eigendecomposition,
//! and tensor hypercontraction initialized from a symmetric CP decomposition
//! of the Cholesky vectors and polished by L1-regularized quasi-Newton
//! minimization.
//!
//! All reconstructions write canonical entries to every 8-fold image, so the
//! rebuilt tensors are symmetric by construction, not merely to tolerance.

use nalgebra::DMatrix;
use ndarray::{Array2, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::Hamiltonian;
use crate::linalg::{solve_gram_mat, symmetric_eigen};
use crate::{Error, Result};

mod lbfgs;
pub use lbfgs::LbfgsOutcome;

/// Factorization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sf,
    Df,
    Thc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Sf => write!(f, "sf"),
            Method::Df => write!(f, "df"),
            Method::Thc => write!(f, "thc"),
        }
    }
}

/// Stopping rule for the pivoted Cholesky sweep.
#[derive(Debug, Clone, Copy)]
pub enum CholeskyStop {
    /// Stop once the max residual diagonal is at or below this value (Hartree).
    Threshold(f64),
    /// Produce exactly this many vectors (fewer if the diagonal is exhausted).
    Rank(usize),
}

/// Single-factorization vectors: `(ij|kl) = sum_chi B^chi_ij B^chi_kl`,
/// each `B^chi` a symmetric N x N matrix.
#[derive(Debug, Clone)]
pub struct SFFactors {
    pub vectors: Vec<Array2<f64>>,
    pub n_orbitals: usize,
    /// Residual diagonal value at each pivot, in pivot order.
    pub pivot_diagonals: Vec<f64>,
    pub pivots: Vec<(usize, usize)>,
}

impl SFFactors {
    pub fn rank(&self) -> usize {
        self.vectors.len()
    }
    /// Information content: N^2 entries per retained vector.
    pub fn gamma(&self) -> usize {
        self.n_orbitals * self.n_orbitals * self.rank()
    }

    pub fn reconstruct_eri(&self) -> Array4<f64> {
        let n = self.n_orbitals;
        let mut out = Array4::<f64>::zeros((n, n, n, n));
        fill_from_pair_products(&mut out, &self.vectors, &self.vectors);
        out
    }
}

/// One double-factorization leaf: eigenpairs of a Cholesky vector.
#[derive(Debug, Clone)]
pub struct DFLeaf {
    /// N x Xi matrix of orthonormal eigenvector columns.
    pub vectors: Array2<f64>,
    /// Retained eigenvalues (Hartree^1/2 scale).
    pub values: Vec<f64>,
}

/// Double factorization: each Cholesky vector eigendecomposed and truncated.
#[derive(Debug, Clone)]
pub struct DFFactors {
    pub leaves: Vec<DFLeaf>,
    pub n_orbitals: usize,
    pub eig_threshold: f64,
}

impl DFFactors {
    pub fn ranks(&self) -> Vec<usize> {
        self.leaves.iter().map(|l| l.values.len()).collect()
    }
    pub fn total_rank(&self) -> usize {
        self.leaves.iter().map(|l| l.values.len()).sum()
    }
    /// Average retained rank over leaves.
    pub fn xi_bar(&self) -> f64 {
        if self.leaves.is_empty() {
            0.0
        } else {
            self.total_rank() as f64 / self.leaves.len() as f64
        }
    }
    /// Information content: N entries per retained eigenvector.
    pub fn gamma(&self) -> usize {
        self.n_orbitals * self.total_rank()
    }

    /// Rebuild each leaf matrix from its retained eigenpairs.
    pub fn leaf_matrices(&self) -> Vec<Array2<f64>> {
        let n = self.n_orbitals;
        self.leaves
            .iter()
            .map(|leaf| {
                let mut b = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        let mut s = 0.0;
                        for (k, &f) in leaf.values.iter().enumerate() {
                            s += f * leaf.vectors[[i, k]] * leaf.vectors[[j, k]];
                        }
                        b[[i, j]] = s;
                    }
                }
                b
            })
            .collect()
    }

    pub fn reconstruct_eri(&self) -> Array4<f64> {
        let n = self.n_orbitals;
        let mats = self.leaf_matrices();
        let mut out = Array4::<f64>::zeros((n, n, n, n));
        fill_from_pair_products(&mut out, &mats, &mats);
        out
    }
}

/// Symmetric CP decomposition of the Cholesky three-tensor:
/// `B_{ij,chi} ~ sum_tau beta_{i,tau} beta_{j,tau} zeta_{chi,tau}`.
#[derive(Debug, Clone)]
pub struct CP3Factors {
    pub beta: Array2<f64>,
    pub zeta: Array2<f64>,
    /// Frobenius norm of the B-fit residual at exit.
    pub residual_norm: f64,
    /// Residual norm after each sweep (monotone non-increasing).
    pub objective_history: Vec<f64>,
    /// Number of Gram solves that needed ridge regularization.
    pub regularized_solves: usize,
}

/// Tensor hypercontraction factors:
/// `(ij|kl) = sum_PQ X_iP X_jP Z_PQ X_kQ X_lQ`.
#[derive(Debug, Clone)]
pub struct THCFactors {
    /// N x M leaf matrix (dimensionless).
    pub x: Array2<f64>,
    /// M x M symmetric core matrix (Hartree).
    pub z: Array2<f64>,
    /// L1 regularizer weight used during optimization (0 = unset).
    pub regularizer_c: f64,
    pub seed: u64,
    /// Total loss after each accepted optimizer iteration.
    pub loss_history: Vec<f64>,
}

impl THCFactors {
    pub fn n_orbitals(&self) -> usize {
        self.x.nrows()
    }
    pub fn rank(&self) -> usize {
        self.x.ncols()
    }
    /// Information content: M^2 core entries dominate.
    pub fn gamma(&self) -> usize {
        self.rank() * self.rank()
    }

    pub fn reconstruct_eri(&self) -> Array4<f64> {
        let n = self.n_orbitals();
        let m = self.rank();
        // S[P,(ij)] = X_iP * X_jP
        let mut s = Array2::<f64>::zeros((m, n * n));
        for p in 0..m {
            for i in 0..n {
                for j in 0..n {
                    s[[p, i * n + j]] = self.x[[i, p]] * self.x[[j, p]];
                }
            }
        }
        let r = s.t().dot(&self.z.dot(&s));
        let mut out = Array4::<f64>::zeros((n, n, n, n));
        mirror_canonical(&mut out, |i, j, k, l| r[[i * n + j, k * n + l]]);
        out
    }
}

/// Any of the three factorized representations.
#[derive(Debug, Clone)]
pub enum Factors {
    Sf(SFFactors),
    Df(DFFactors),
    Thc(THCFactors),
}

impl Factors {
    pub fn method(&self) -> Method {
        match self {
            Factors::Sf(_) => Method::Sf,
            Factors::Df(_) => Method::Df,
            Factors::Thc(_) => Method::Thc,
        }
    }
    pub fn rank(&self) -> usize {
        match self {
            Factors::Sf(f) => f.rank(),
            Factors::Df(f) => f.total_rank(),
            Factors::Thc(f) => f.rank(),
        }
    }
    pub fn gamma(&self) -> usize {
        match self {
            Factors::Sf(f) => f.gamma(),
            Factors::Df(f) => f.gamma(),
            Factors::Thc(f) => f.gamma(),
        }
    }
    pub fn n_orbitals(&self) -> usize {
        match self {
            Factors::Sf(f) => f.n_orbitals,
            Factors::Df(f) => f.n_orbitals,
            Factors::Thc(f) => f.n_orbitals(),
        }
    }
    pub fn reconstruct_eri(&self) -> Array4<f64> {
        match self {
            Factors::Sf(f) => f.reconstruct_eri(),
            Factors::Df(f) => f.reconstruct_eri(),
            Factors::Thc(f) => f.reconstruct_eri(),
        }
    }
}

/// Write the value of each canonical index tuple to all eight images.
fn mirror_canonical(out: &mut Array4<f64>, value: impl Fn(usize, usize, usize, usize) -> f64) {
    let n = out.shape()[0];
    for i in 0..n {
        for j in 0..=i {
            for k in 0..n {
                for l in 0..=k {
                    let ij = i * (i + 1) / 2 + j;
                    let kl = k * (k + 1) / 2 + l;
                    if ij < kl {
                        continue;
                    }
                    let v = value(i, j, k, l);
                    out[[i, j, k, l]] = v;
                    out[[j, i, k, l]] = v;
                    out[[i, j, l, k]] = v;
                    out[[j, i, l, k]] = v;
                    out[[k, l, i, j]] = v;
                    out[[l, k, i, j]] = v;
                    out[[k, l, j, i]] = v;
                    out[[l, k, j, i]] = v;
                }
            }
        }
    }
}

/// `out += sum_chi A_chi[i,j] * B_chi[k,l]`, written via canonical mirroring.
fn fill_from_pair_products(out: &mut Array4<f64>, a: &[Array2<f64>], b: &[Array2<f64>]) {
    mirror_canonical(out, |i, j, k, l| {
        let mut s = 0.0;
        for (ma, mb) in a.iter().zip(b) {
            s += ma[[i, j]] * mb[[k, l]];
        }
        s
    });
}

/// Pivoted Cholesky factorization of the ERI matrix `V_(ij),(kl)`.
///
/// Vectors come out in pivot order; the residual diagonal is monotone
/// non-increasing along the pivot sequence. Ties in the pivot search break
/// toward the lowest flat index. Residual diagonals below -1e-6 mean the
/// tensor is not a valid ERI and are an error; small negatives (to -1e-8)
/// are tolerated as roundoff.
pub fn cholesky_sf(ham: &Hamiltonian, stop: CholeskyStop) -> Result<SFFactors> {
    if let CholeskyStop::Threshold(t) = stop {
        if t <= 0.0 {
            return Err(Error::validation("cholesky threshold must be positive"));
        }
    }
    let n = ham.n_orbitals();
    let eri = ham.eri();
    let n2 = n * n;

    // representative (lower-triangle) diagonal, mirrored for exact symmetry
    let mut d = vec![0.0f64; n2];
    for i in 0..n {
        for j in 0..=i {
            let v = eri[[i, j, i, j]];
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    check_diagonal(&d)?;

    let max_rank = n * (n + 1) / 2;
    let target = match stop {
        CholeskyStop::Rank(r) => r.min(max_rank),
        CholeskyStop::Threshold(_) => max_rank,
    };

    let mut vectors: Vec<Array2<f64>> = Vec::new();
    let mut flat_vecs: Vec<Vec<f64>> = Vec::new();
    let mut pivot_diagonals = Vec::new();
    let mut pivots = Vec::new();

    loop {
        if vectors.len() >= target {
            break;
        }
        let (p, dp) = argmax_lowest_index(&d);
        match stop {
            CholeskyStop::Threshold(t) => {
                if dp <= t {
                    break;
                }
            }
            CholeskyStop::Rank(_) => {
                if dp <= 0.0 {
                    break; // diagonal exhausted before the requested rank
                }
            }
        }
        let (pi, pj) = (p / n, p % n);
        // residual column of V at the pivot, built from lower-triangle
        // representatives so the vector is exactly symmetric
        let mut col = vec![0.0f64; n2];
        for k in 0..n {
            for l in 0..=k {
                let mut v = eri[[k, l, pi, pj]];
                for bv in &flat_vecs {
                    v -= bv[k * n + l] * bv[p];
                }
                col[k * n + l] = v;
                col[l * n + k] = v;
            }
        }
        let scale = dp.sqrt();
        let bvec: Vec<f64> = col.iter().map(|v| v / scale).collect();
        for (dk, bk) in d.iter_mut().zip(&bvec) {
            *dk -= bk * bk;
        }
        check_diagonal(&d)?;
        pivot_diagonals.push(dp);
        pivots.push((pi, pj));
        vectors.push(Array2::from_shape_vec((n, n), bvec.clone()).expect("b shape"));
        flat_vecs.push(bvec);
    }

    Ok(SFFactors {
        vectors,
        n_orbitals: n,
        pivot_diagonals,
        pivots,
    })
}

fn check_diagonal(d: &[f64]) -> Result<()> {
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-6 {
        return Err(Error::numerical(format!(
            "residual diagonal {min:.3e} below -1e-6: tensor is not a valid ERI"
        )));
    }
    Ok(())
}

fn argmax_lowest_index(d: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    for (i, &v) in d.iter().enumerate() {
        if v > d[best] {
            best = i;
        }
    }
    (best, d[best])
}

/// Eigendecompose each Cholesky vector and drop eigenpairs with
/// `|f| < eig_threshold`.
pub fn double_factorize(sf: &SFFactors, eig_threshold: f64) -> Result<DFFactors> {
    if eig_threshold < 0.0 {
        return Err(Error::validation("eigenvalue threshold must be >= 0"));
    }
    let n = sf.n_orbitals;
    let mut leaves = Vec::with_capacity(sf.rank());
    for b in &sf.vectors {
        let (vals, vecs) = symmetric_eigen(b)?;
        // retained pairs ordered by |f| descending, index ascending on ties
        let mut order: Vec<usize> = (0..n).filter(|&k| vals[k].abs() >= eig_threshold).collect();
        order.sort_by(|&a, &b| {
            vals[b]
                .abs()
                .partial_cmp(&vals[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        let xi = order.len();
        let mut u = Array2::<f64>::zeros((n, xi));
        let mut f = Vec::with_capacity(xi);
        for (c, &k) in order.iter().enumerate() {
            f.push(vals[k]);
            for r in 0..n {
                u[[r, c]] = vecs[[r, k]];
            }
        }
        leaves.push(DFLeaf {
            vectors: u,
            values: f,
        });
    }
    Ok(DFFactors {
        leaves,
        n_orbitals: n,
        eig_threshold,
    })
}

/// Mode-1 product `T1K[i,tau] = sum_{j,chi} T[i,j,chi] beta[j,tau] zeta[chi,tau]`.
fn t1_times_k(b: &[Array2<f64>], beta: &Array2<f64>, zeta: &Array2<f64>) -> Array2<f64> {
    let n = beta.nrows();
    let m = beta.ncols();
    let mut out = Array2::<f64>::zeros((n, m));
    for (chi, bmat) in b.iter().enumerate() {
        let bb = bmat.dot(beta); // [i,tau] = sum_j B[i,j] beta[j,tau]
        for i in 0..n {
            for t in 0..m {
                out[[i, t]] += zeta[[chi, t]] * bb[[i, t]];
            }
        }
    }
    out
}

/// Mode-3 product `T3G[chi,tau] = (beta^T B_chi beta)_{tau,tau}`.
fn t3_times_g(b: &[Array2<f64>], beta: &Array2<f64>) -> Array2<f64> {
    let l = b.len();
    let m = beta.ncols();
    let mut out = Array2::<f64>::zeros((l, m));
    for (chi, bmat) in b.iter().enumerate() {
        let bb = bmat.dot(beta);
        for t in 0..m {
            let mut s = 0.0;
            for i in 0..beta.nrows() {
                s += beta[[i, t]] * bb[[i, t]];
            }
            out[[chi, t]] = s;
        }
    }
    out
}

fn gram(a: &Array2<f64>) -> DMatrix<f64> {
    let g = a.t().dot(a);
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| g[[i, j]])
}

fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(i, j)])
}

/// Squared Frobenius residual of the CP3 model against the Cholesky tensor.
fn cp3_objective(b: &[Array2<f64>], beta: &Array2<f64>, zeta: &Array2<f64>) -> f64 {
    let n = beta.nrows();
    let m = beta.ncols();
    let mut obj = 0.0;
    for (chi, bmat) in b.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let mut model = 0.0;
                for t in 0..m {
                    model += beta[[i, t]] * beta[[j, t]] * zeta[[chi, t]];
                }
                let r = bmat[[i, j]] - model;
                obj += r * r;
            }
        }
    }
    obj
}

/// Alternating least-squares CP3 fit of the Cholesky vectors, followed by the
/// algebraic substitution into THC form (`X = beta`, `Z = zeta^T zeta`).
///
/// Each sweep solves the mode-1 least squares with the second leaf mode fixed
/// at the previous `beta`, applies the tied update with a backtracking damping
/// factor so the symmetric objective never increases, then solves the `zeta`
/// least squares exactly. The objective after each sweep is therefore
/// monotone non-increasing.
pub fn cp3_init(
    sf: &SFFactors,
    rank: usize,
    sweeps: usize,
    seed: u64,
) -> Result<(CP3Factors, THCFactors)> {
    if rank < 1 {
        return Err(Error::validation("CP3 rank must be >= 1"));
    }
    let n = sf.n_orbitals;
    let l = sf.rank();
    if l == 0 {
        return Err(Error::validation("CP3 requires at least one Cholesky vector"));
    }
    let b = &sf.vectors;
    let norm_b: f64 = b
        .iter()
        .map(|m| m.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let scale = (norm_b / rank as f64).abs().powf(1.0 / 3.0).max(1e-8);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut beta = Array2::from_shape_fn((n, rank), |_| rng.gen_range(-1.0..1.0) * scale);
    let mut zeta = Array2::from_shape_fn((l, rank), |_| rng.gen_range(-1.0..1.0) * scale);

    let mut regularized = 0usize;
    let mut history = Vec::with_capacity(sweeps);
    let mut obj = cp3_objective(b, &beta, &zeta);

    for _sweep in 0..sweeps {
        // mode-1 least squares with the second mode fixed at the previous beta
        let t1k = t1_times_k(b, &beta, &zeta);
        let g = hadamard(&gram(&beta), &gram(&zeta));
        let rhs = DMatrix::from_fn(rank, n, |t, i| t1k[[i, t]]);
        let (sol, reg) = solve_gram_mat(&g, &rhs);
        if reg {
            regularized += 1;
        }
        let a = Array2::from_shape_fn((n, rank), |(i, t)| sol[(t, i)]);

        // tied update, damped until the symmetric objective does not increase
        // near a stationary point the tied step may be rejected entirely
        let mut t = 1.0f64;
        for _ in 0..13 {
            let cand = &beta * (1.0 - t) + &a * t;
            if cp3_objective(b, &cand, &zeta) <= obj {
                beta = cand;
                break;
            }
            t *= 0.5;
        }

        // exact zeta solve given the tied beta
        let t3g = t3_times_g(b, &beta);
        let gb = gram(&beta);
        let g2 = hadamard(&gb, &gb);
        let rhs2 = DMatrix::from_fn(rank, l, |t, chi| t3g[[chi, t]]);
        let (sol2, reg2) = solve_gram_mat(&g2, &rhs2);
        if reg2 {
            regularized += 1;
        }
        zeta = Array2::from_shape_fn((l, rank), |(chi, t)| sol2[(t, chi)]);
        obj = cp3_objective(b, &beta, &zeta);
        history.push(obj.max(0.0).sqrt());

        if obj < 1e-24 {
            break;
        }
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            let cur = history[history.len() - 1];
            if (prev - cur).abs() <= 1e-15 * prev.max(1.0) {
                break;
            }
        }
    }

    let residual_norm = obj.max(0.0).sqrt();
    // Z = zeta^T zeta, computed on the lower triangle and mirrored
    let mut z = Array2::<f64>::zeros((rank, rank));
    for p in 0..rank {
        for q in 0..=p {
            let mut s = 0.0;
            for chi in 0..l {
                s += zeta[[chi, p]] * zeta[[chi, q]];
            }
            z[[p, q]] = s;
            z[[q, p]] = s;
        }
    }
    let thc = THCFactors {
        x: beta.clone(),
        z,
        regularizer_c: 0.0,
        seed,
        loss_history: Vec::new(),
    };
    Ok((
        CP3Factors {
            beta,
            zeta,
            residual_norm,
            objective_history: history,
            regularized_solves: regularized,
        },
        thc,
    ))
}

/// THC loss pieces at a given (X, Z): squared L2 tensor misfit and the
/// L1 norm of the core.
pub struct ThcLoss {
    pub l2: f64,
    pub z_l1: f64,
}

/// Total-loss evaluation and analytic gradient for the THC objective
/// `L(X,Z) = sum |(ij|kl) - THC|^2 + C sum |Z_PQ|`,
/// with Z re-symmetrized at every evaluation.
struct ThcProblem<'a> {
    v: Array2<f64>, // N^2 x N^2 ERI matrix
    n: usize,
    m: usize,
    c: f64,
    _ham: &'a Hamiltonian,
}

impl<'a> ThcProblem<'a> {
    fn new(ham: &'a Hamiltonian, m: usize, c: f64) -> Self {
        let n = ham.n_orbitals();
        let v = ham
            .eri()
            .view()
            .into_shape_with_order((n * n, n * n))
            .expect("contiguous eri")
            .to_owned();
        ThcProblem {
            v,
            n,
            m,
            c,
            _ham: ham,
        }
    }

    fn unpack(&self, params: &[f64]) -> (Array2<f64>, Array2<f64>) {
        let (n, m) = (self.n, self.m);
        let x = Array2::from_shape_vec((n, m), params[..n * m].to_vec()).unwrap();
        let zraw = Array2::from_shape_vec((m, m), params[n * m..].to_vec()).unwrap();
        let z = (&zraw + &zraw.t()) * 0.5;
        (x, z)
    }

    fn pack(x: &Array2<f64>, z: &Array2<f64>) -> Vec<f64> {
        x.iter().chain(z.iter()).cloned().collect()
    }

    fn loss_parts(&self, x: &Array2<f64>, z: &Array2<f64>) -> ThcLoss {
        let (s, r) = self.model(x, z);
        let _ = s;
        let mut l2 = 0.0;
        for (rv, vv) in r.iter().zip(self.v.iter()) {
            let d = rv - vv;
            l2 += d * d;
        }
        let z_l1: f64 = z.iter().map(|v| v.abs()).sum();
        ThcLoss { l2, z_l1 }
    }

    fn model(&self, x: &Array2<f64>, z: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (n, m) = (self.n, self.m);
        let mut s = Array2::<f64>::zeros((m, n * n));
        for p in 0..m {
            for i in 0..n {
                for j in 0..n {
                    s[[p, i * n + j]] = x[[i, p]] * x[[j, p]];
                }
            }
        }
        let r = s.t().dot(&z.dot(&s));
        (s, r)
    }

    /// Total loss and gradient in packed parameter order.
    fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (x, z) = self.unpack(params);
        let (n, m) = (self.n, self.m);
        let (s, r) = self.model(&x, &z);
        let e = &r - &self.v;
        let mut l2 = 0.0;
        for v in e.iter() {
            l2 += v * v;
        }
        let z_l1: f64 = z.iter().map(|v| v.abs()).sum();
        let loss = l2 + self.c * z_l1;

        // grad_Z = 2 S E S^T + C sign(Z)
        let se = s.dot(&e); // M x N^2
        let gz_l2 = se.dot(&s.t()) * 2.0;
        // grad_X[i,P] = 4 sum_j (G[P,ij] + G[P,ji]) X[j,P], G = Z S E
        let g = z.dot(&se); // M x N^2
        let mut gx = Array2::<f64>::zeros((n, m));
        for p in 0..m {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += (g[[p, i * n + j]] + g[[p, j * n + i]]) * x[[j, p]];
                }
                gx[[i, p]] = 4.0 * acc;
            }
        }
        for (slot, v) in grad[..n * m].iter_mut().zip(gx.iter()) {
            *slot = *v;
        }
        for idx in 0..m * m {
            let (p, q) = (idx / m, idx % m);
            let sym = 0.5 * (gz_l2[[p, q]] + gz_l2[[q, p]]);
            let zs = z[[p, q]];
            let sub = if zs > 0.0 {
                1.0
            } else if zs < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[n * m + idx] = sym + self.c * sub;
        }
        loss
    }
}

/// Result of THC optimization.
#[derive(Debug, Clone)]
pub struct ThcOptimizeResult {
    pub factors: THCFactors,
    pub converged: bool,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Limited-memory quasi-Newton minimization of the L1-regularized THC loss.
///
/// The regularizer weight is set so both loss terms are equal at the starting
/// point: `C = L2(init) / sum|Z_init|`. The L1 subgradient at exactly zero is
/// taken as zero, Z is re-symmetrized at every evaluation, and the returned
/// iterate never has a higher total loss than the initialization.
pub fn thc_optimize(
    ham: &Hamiltonian,
    init: &THCFactors,
    max_iter: usize,
    tol: f64,
) -> Result<ThcOptimizeResult> {
    let n = ham.n_orbitals();
    if init.n_orbitals() != n {
        return Err(Error::validation("THC init orbital count mismatch"));
    }
    let m = init.rank();

    // regularizer: equal strength of both loss terms at the starting point
    let probe = ThcProblem::new(ham, m, 0.0);
    let parts = probe.loss_parts(&init.x, &init.z);
    let c = if parts.z_l1 > 0.0 {
        parts.l2 / parts.z_l1
    } else {
        0.0
    };
    let problem = ThcProblem::new(ham, m, c);

    let x0 = ThcProblem::pack(&init.x, &init.z);
    let outcome = lbfgs::minimize(
        |params, grad| problem.eval(params, grad),
        x0,
        max_iter,
        tol,
        10,
    )?;

    let (x, z) = problem.unpack(&outcome.x);
    // store an exactly symmetric core
    let mut z_sym = Array2::<f64>::zeros((m, m));
    for p in 0..m {
        for q in 0..=p {
            let v = 0.5 * (z[[p, q]] + z[[q, p]]);
            z_sym[[p, q]] = v;
            z_sym[[q, p]] = v;
        }
    }
    Ok(ThcOptimizeResult {
        factors: THCFactors {
            x,
            z: z_sym,
            regularizer_c: c,
            seed: init.seed,
            loss_history: outcome.history.clone(),
        },
        converged: outcome.converged,
        iterations: outcome.iterations,
        initial_loss: outcome.f0,
        final_loss: outcome.f,
    })
}

/// Analytic gradient of the THC loss at (X, Z) for a given regularizer
/// weight. Returns the X and Z gradient blocks; Z is treated as held
/// symmetric, matching the optimizer's evaluation.
pub fn thc_loss_gradient(
    ham: &Hamiltonian,
    x: &Array2<f64>,
    z: &Array2<f64>,
    c: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = ham.n_orbitals();
    if x.nrows() != n || z.nrows() != z.ncols() || x.ncols() != z.nrows() {
        return Err(Error::validation("THC factor shapes inconsistent"));
    }
    let m = x.ncols();
    let problem = ThcProblem::new(ham, m, c);
    let params = ThcProblem::pack(x, z);
    let mut grad = vec![0.0; params.len()];
    problem.eval(&params, &mut grad);
    let gx = Array2::from_shape_vec((n, m), grad[..n * m].to_vec()).unwrap();
    let gz = Array2::from_shape_vec((m, m), grad[n * m..].to_vec()).unwrap();
    Ok((gx, gz))
}

/// Frobenius norm of `eri - reconstruct(factors)` over all N^4 elements.
pub fn factorization_error(ham: &Hamiltonian, factors: &Factors) -> Result<f64> {
    let rec = factors.reconstruct_eri();
    if rec.shape() != ham.eri().shape() {
        return Err(Error::validation("factor shape does not match Hamiltonian"));
    }
    let mut ss = 0.0;
    for (a, b) in ham.eri().iter().zip(rec.iter()) {
        let d = a - b;
        ss += d * d;
    }
    Ok(ss.sqrt())
}

/// Parameters for factorizations performed inside rank selection.
#[derive(Debug, Clone)]
pub struct RankSearchConfig {
    pub cholesky_threshold: f64,
    pub df_eig_threshold: f64,
    pub cp3_sweeps: usize,
    pub thc_max_iter: usize,
    pub thc_tol: f64,
}

impl Default for RankSearchConfig {
    fn default() -> Self {
        RankSearchConfig {
            cholesky_threshold: 1e-8,
            df_eig_threshold: 1e-8,
            cp3_sweeps: 200,
            thc_max_iter: 300,
            thc_tol: 1e-8,
        }
    }
}

/// Factorize at one rank with the given method.
pub fn factorize_at_rank(
    ham: &Hamiltonian,
    method: Method,
    rank: usize,
    seed: u64,
    cfg: &RankSearchConfig,
) -> Result<Factors> {
    match method {
        Method::Sf => Ok(Factors::Sf(cholesky_sf(ham, CholeskyStop::Rank(rank))?)),
        Method::Df => {
            let sf = cholesky_sf(ham, CholeskyStop::Rank(rank))?;
            Ok(Factors::Df(double_factorize(&sf, cfg.df_eig_threshold)?))
        }
        Method::Thc => {
            let sf = cholesky_sf(ham, CholeskyStop::Threshold(cfg.cholesky_threshold))?;
            let (_, init) = cp3_init(&sf, rank, cfg.cp3_sweeps, seed)?;
            let opt = thc_optimize(ham, &init, cfg.thc_max_iter, cfg.thc_tol)?;
            Ok(Factors::Thc(opt.factors))
        }
    }
}

/// Full (rank, signed energy error) table from a rank-selection sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankSelection {
    pub method: Method,
    pub selected: usize,
    pub threshold: f64,
    pub table: Vec<(usize, f64)>,
}

/// Persistence rule on a precomputed (rank, error) table: pick the smallest
/// rank whose error and every larger sampled rank's error are within the
/// threshold in magnitude.
pub fn select_rank_from_table(rows: &[(usize, f64)], threshold: f64) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::validation("empty rank table"));
    }
    if rows.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::validation("rank grid must be strictly ascending"));
    }
    let mut selected: Option<usize> = None;
    for start in 0..rows.len() {
        if rows[start..].iter().all(|&(_, e)| e.abs() <= threshold) {
            selected = Some(rows[start].0);
            break;
        }
    }
    selected.ok_or_else(|| {
        Error::infeasible(format!(
            "no rank on the grid satisfies the persistence rule at threshold {threshold}"
        ))
    })
}

/// Factorize over an ascending rank grid, evaluate the energy error of each
/// truncated Hamiltonian, and apply the persistence rule. Grid points run as
/// independent work items; results merge in rank order.
pub fn select_rank<F>(
    ham: &Hamiltonian,
    method: Method,
    rank_grid: &[usize],
    evaluator: F,
    threshold: f64,
    seed: u64,
    cfg: &RankSearchConfig,
) -> Result<RankSelection>
where
    F: Fn(&Hamiltonian) -> Result<f64> + Sync,
{
    if rank_grid.is_empty() {
        return Err(Error::validation("rank grid is empty"));
    }
    if rank_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::validation("rank grid must be strictly ascending"));
    }
    if threshold <= 0.0 {
        return Err(Error::validation("selection threshold must be positive"));
    }
    let rows: Result<Vec<(usize, f64)>> = rank_grid
        .par_iter()
        .map(|&rank| {
            let factors = factorize_at_rank(ham, method, rank, seed.wrapping_add(rank as u64), cfg)?;
            let truncated = ham.with_eri(factors.reconstruct_eri())?;
            let err = evaluator(&truncated)?;
            Ok((rank, err))
        })
        .collect();
    let mut rows = rows?;
    rows.sort_by_key(|&(r, _)| r);
    let selected = select_rank_from_table(&rows, threshold)?;
    Ok(RankSelection {
        method,
        selected,
        threshold,
        table: rows,
    })
}

// ---------------------------------------------------------------------------
// factor archive: directory with a JSON manifest plus raw f64 blobs
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct FactorManifest {
    format: String,
    method: Method,
    n_orbitals: usize,
    ranks: Vec<usize>,
    gamma: usize,
    regularizer_c: f64,
    seed: u64,
    eig_threshold: Option<f64>,
    loss_history: Vec<f64>,
    tensors: Vec<TensorSpec>,
}

#[derive(Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    file: String,
}

const FACTOR_FORMAT: &str = "factors-v1";

fn write_blob(dir: &std::path::Path, file: &str, data: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(file), bytes)?;
    Ok(())
}

fn read_blob(dir: &std::path::Path, spec: &TensorSpec) -> Result<Vec<f64>> {
    let bytes = std::fs::read(dir.join(&spec.file))?;
    let expect: usize = spec.shape.iter().product::<usize>() * 8;
    if bytes.len() != expect {
        return Err(Error::parse(format!(
            "blob {} has {} bytes, expected {}",
            spec.file,
            bytes.len(),
            expect
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Persist factors into `dir` (created if missing).
pub fn save_factors(dir: &std::path::Path, factors: &Factors, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = match factors {
        Factors::Sf(f) => {
            let n = f.n_orbitals;
            let l = f.rank();
            let mut flat = Vec::with_capacity(l * n * n);
            for v in &f.vectors {
                flat.extend(v.iter().cloned());
            }
            write_blob(dir, "b.bin", &flat)?;
            write_blob(dir, "pivot_diagonals.bin", &f.pivot_diagonals)?;
            FactorManifest {
                format: FACTOR_FORMAT.into(),
                method: Method::Sf,
                n_orbitals: n,
                ranks: vec![l],
                gamma: f.gamma(),
                regularizer_c: 0.0,
                seed,
                eig_threshold: None,
                loss_history: Vec::new(),
                tensors: vec![
                    TensorSpec {
                        name: "b".into(),
                        shape: vec![l, n, n],
                        file: "b.bin".into(),
                    },
                    TensorSpec {
                        name: "pivot_diagonals".into(),
                        shape: vec![l],
                        file: "pivot_diagonals.bin".into(),
                    },
                ],
            }
        }
        Factors::Df(f) => {
            let n = f.n_orbitals;
            let ranks = f.ranks();
            let mut vals = Vec::new();
            let mut vecs = Vec::new();
            for leaf in &f.leaves {
                vals.extend(leaf.values.iter().cloned());
                vecs.extend(leaf.vectors.iter().cloned());
            }
            write_blob(dir, "eigenvalues.bin", &vals)?;
            write_blob(dir, "eigenvectors.bin", &vecs)?;
            let total = f.total_rank();
            FactorManifest {
                format: FACTOR_FORMAT.into(),
                method: Method::Df,
                n_orbitals: n,
                ranks,
                gamma: f.gamma(),
                regularizer_c: 0.0,
                seed,
                eig_threshold: Some(f.eig_threshold),
                loss_history: Vec::new(),
                tensors: vec![
                    TensorSpec {
                        name: "eigenvalues".into(),
                        shape: vec![total],
                        file: "eigenvalues.bin".into(),
                    },
                    TensorSpec {
                        name: "eigenvectors".into(),
                        shape: vec![n, total],
                        file: "eigenvectors.bin".into(),
                    },
                ],
            }
        }
        Factors::Thc(f) => {
            let n = f.n_orbitals();
            let m = f.rank();
            write_blob(dir, "x.bin", f.x.as_slice().expect("contiguous"))?;
            write_blob(dir, "z.bin", f.z.as_slice().expect("contiguous"))?;
            FactorManifest {
                format: FACTOR_FORMAT.into(),
                method: Method::Thc,
                n_orbitals: n,
                ranks: vec![m],
                gamma: f.gamma(),
                regularizer_c: f.regularizer_c,
                seed: f.seed,
                eig_threshold: None,
                loss_history: f.loss_history.clone(),
                tensors: vec![
                    TensorSpec {
                        name: "x".into(),
                        shape: vec![n, m],
                        file: "x.bin".into(),
                    },
                    TensorSpec {
                        name: "z".into(),
                        shape: vec![m, m],
                        file: "z.bin".into(),
                    },
                ],
            }
        }
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Load factors from a directory written by [`save_factors`].
pub fn load_factors(dir: &std::path::Path) -> Result<Factors> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: FactorManifest = serde_json::from_str(&text)?;
    if manifest.format != FACTOR_FORMAT {
        return Err(Error::parse(format!(
            "unsupported factor format {:?}",
            manifest.format
        )));
    }
    let n = manifest.n_orbitals;
    let find = |name: &str| -> Result<&TensorSpec> {
        manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::parse(format!("manifest missing tensor {name:?}")))
    };
    match manifest.method {
        Method::Sf => {
            let spec = find("b")?;
            let flat = read_blob(dir, spec)?;
            let l = manifest.ranks[0];
            let mut vectors = Vec::with_capacity(l);
            for chi in 0..l {
                let slice = &flat[chi * n * n..(chi + 1) * n * n];
                vectors.push(Array2::from_shape_vec((n, n), slice.to_vec()).unwrap());
            }
            let pd = find("pivot_diagonals")
                .and_then(|s| read_blob(dir, s))
                .unwrap_or_default();
            Ok(Factors::Sf(SFFactors {
                vectors,
                n_orbitals: n,
                pivot_diagonals: pd,
                pivots: Vec::new(),
            }))
        }
        Method::Df => {
            let vals = read_blob(dir, find("eigenvalues")?)?;
            let vecs = read_blob(dir, find("eigenvectors")?)?;
            // per-leaf (n x xi) row-major blocks, concatenated in leaf order
            let mut leaves = Vec::new();
            let mut val_off = 0usize;
            let mut vec_off = 0usize;
            for &xi in &manifest.ranks {
                let block = &vecs[vec_off..vec_off + n * xi];
                leaves.push(DFLeaf {
                    vectors: Array2::from_shape_vec((n, xi), block.to_vec())
                        .map_err(|e| Error::parse(format!("eigenvector blob shape: {e}")))?,
                    values: vals[val_off..val_off + xi].to_vec(),
                });
                val_off += xi;
                vec_off += n * xi;
            }
            Ok(Factors::Df(DFFactors {
                leaves,
                n_orbitals: n,
                eig_threshold: manifest.eig_threshold.unwrap_or(0.0),
            }))
        }
        Method::Thc => {
            let m = manifest.ranks[0];
            let x = Array2::from_shape_vec((n, m), read_blob(dir, find("x")?)?)
                .map_err(|e| Error::parse(format!("x blob shape: {e}")))?;
            let z = Array2::from_shape_vec((m, m), read_blob(dir, find("z")?)?)
                .map_err(|e| Error::parse(format!("z blob shape: {e}")))?;
            Ok(Factors::Thc(THCFactors {
                x,
                z,
                regularizer_c: manifest.regularizer_c,
                seed: manifest.seed,
                loss_history: manifest.loss_history,
            }))
        }
    }
}

/// Suggested THC rank for a fresh system: the observed adequate rank grows
/// roughly five-fold with the orbital count.
pub fn suggested_thc_rank(n_orbitals: usize) -> usize {
    5 * n_orbitals
}
