//! Active-space Hamiltonian ingestion, validation, and persistence.
//!
//! Integrals are held densely: a one-body matrix `h` and the two-electron
//! tensor `eri` in chemist notation `(ij|kl)` with full 8-fold permutational
//! symmetry. The target scale is N <= ~70 orbitals, where N^4 storage is
//! a few hundred MB at most.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use ndarray::{Array2, Array4};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used when validating stored integral symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Labels for the documented active-space hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TierLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    X,
    Custom(String),
}

impl TierLabel {
    pub fn parse(s: &str) -> TierLabel {
        match s {
            "A" => TierLabel::A,
            "B" => TierLabel::B,
            "C" => TierLabel::C,
            "D" => TierLabel::D,
            "E" => TierLabel::E,
            "F" => TierLabel::F,
            "G" => TierLabel::G,
            "X" => TierLabel::X,
            other => TierLabel::Custom(other.to_string()),
        }
    }
}

/// Descriptive metadata attached to a persisted Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSpaceTag {
    /// Compound name, e.g. "rest", "empty", "inhibited", "cpd1", or free-form.
    pub compound: String,
    pub tier: TierLabel,
    pub spin_multiplicity: u32,
}

/// Dense active-space Hamiltonian.
///
/// Values are immutable after construction, so shared read-only access from
/// concurrent workers is safe.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    n_orbitals: usize,
    n_alpha: usize,
    n_beta: usize,
    e_core: f64,
    h: Array2<f64>,
    eri: Array4<f64>,
}

/// Outcome of a symmetry check (report-only, never fails construction).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub max_h_deviation: f64,
    pub max_eri_deviation: f64,
    pub max_deviation: f64,
    pub tol: f64,
    pub pass: bool,
}

impl Hamiltonian {
    /// Build a Hamiltonian, checking all stored-value invariants.
    pub fn new(
        n_alpha: usize,
        n_beta: usize,
        e_core: f64,
        h: Array2<f64>,
        eri: Array4<f64>,
    ) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::validation("one-body matrix must be square"));
        }
        if eri.shape() != [n, n, n, n] {
            return Err(Error::validation(format!(
                "eri shape {:?} does not match n_orbitals {}",
                eri.shape(),
                n
            )));
        }
        if n_alpha + n_beta > 2 * n {
            return Err(Error::validation(format!(
                "electron count {} exceeds 2N = {}",
                n_alpha + n_beta,
                2 * n
            )));
        }
        if !e_core.is_finite()
            || h.iter().any(|v| !v.is_finite())
            || eri.iter().any(|v| !v.is_finite())
        {
            return Err(Error::validation("non-finite integral value"));
        }
        let report = symmetry_report(&h, &eri, SYMMETRY_TOL);
        if !report.pass {
            return Err(Error::validation(format!(
                "integral symmetry violated: max deviation {:.3e} > {:.1e}",
                report.max_deviation, SYMMETRY_TOL
            )));
        }
        Ok(Hamiltonian {
            n_orbitals: n,
            n_alpha,
            n_beta,
            e_core,
            h,
            eri,
        })
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
    pub fn e_core(&self) -> f64 {
        self.e_core
    }
    pub fn one_body(&self) -> &Array2<f64> {
        &self.h
    }
    pub fn eri(&self) -> &Array4<f64> {
        &self.eri
    }

    /// Same integrals with the two-electron tensor replaced (used for
    /// truncation-error evaluation against reconstructed tensors).
    pub fn with_eri(&self, eri: Array4<f64>) -> Result<Self> {
        Hamiltonian::new(self.n_alpha, self.n_beta, self.e_core, self.h.clone(), eri)
    }

    /// Symmetry check at a caller-chosen tolerance.
    pub fn validate_symmetry(&self, tol: f64) -> Result<SymmetryReport> {
        if tol <= 0.0 {
            return Err(Error::validation("tolerance must be positive"));
        }
        Ok(symmetry_report(&self.h, &self.eri, tol))
    }

    /// Random symmetric Hamiltonian with a PSD two-electron tensor,
    /// deterministic in the seed. Intended for tests and demos.
    pub fn synthetic(n: usize, n_alpha: usize, n_beta: usize, seed: u64) -> Hamiltonian {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut h = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = rng.gen_range(-1.0..1.0);
                h[[i, j]] = v;
                h[[j, i]] = v;
            }
        }
        // ERI as a Gram form of random symmetric vectors: PSD and 8-fold
        // symmetric by construction.
        let n_vec = (n * (n + 1) / 2).min(3 * n.max(1));
        let mut eri = Array4::<f64>::zeros((n, n, n, n));
        for _ in 0..n_vec {
            let mut b = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..=i {
                    let v = rng.gen_range(-0.5..0.5);
                    b[[i, j]] = v;
                    b[[j, i]] = v;
                }
            }
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            eri[[i, j, k, l]] += b[[i, j]] * b[[k, l]];
                        }
                    }
                }
            }
        }
        let e_core = rng.gen_range(-2.0..2.0);
        Hamiltonian::new(n_alpha, n_beta, e_core, h, eri).expect("synthetic invariants")
    }
}

/// Max deviation over h symmetry and all 8-fold ERI symmetry relations.
/// Pass is inclusive: a deviation exactly equal to `tol` passes.
pub fn symmetry_report(h: &Array2<f64>, eri: &Array4<f64>, tol: f64) -> SymmetryReport {
    let n = h.nrows();
    let mut max_h = 0.0f64;
    for p in 0..n {
        for q in 0..p {
            max_h = max_h.max((h[[p, q]] - h[[q, p]]).abs());
        }
    }
    let mut max_eri = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let v = eri[[i, j, k, l]];
                    for (a, b, c, d) in eri_images(i, j, k, l) {
                        max_eri = max_eri.max((v - eri[[a, b, c, d]]).abs());
                    }
                }
            }
        }
    }
    let max_dev = max_h.max(max_eri);
    SymmetryReport {
        max_h_deviation: max_h,
        max_eri_deviation: max_eri,
        max_deviation: max_dev,
        tol,
        pass: max_dev <= tol,
    }
}

/// The seven non-identity images of `(ij|kl)` under 8-fold symmetry.
fn eri_images(i: usize, j: usize, k: usize, l: usize) -> [(usize, usize, usize, usize); 7] {
    [
        (j, i, k, l),
        (i, j, l, k),
        (j, i, l, k),
        (k, l, i, j),
        (l, k, i, j),
        (k, l, j, i),
        (l, k, j, i),
    ]
}

/// Canonical representative of a two-body index tuple (1-based),
/// used for duplicate detection and deterministic output ordering.
fn canonical_two_body(i: usize, j: usize, k: usize, l: usize) -> (usize, usize, usize, usize) {
    let (a, b) = if i >= j { (i, j) } else { (j, i) };
    let (c, d) = if k >= l { (k, l) } else { (l, k) };
    let ab = a * (a - 1) / 2 + b;
    let cd = c * (c - 1) / 2 + d;
    if ab >= cd {
        (a, b, c, d)
    } else {
        (c, d, a, b)
    }
}

/// Parse a Molpro-convention FCIDUMP stream.
///
/// Records `value i j k l`: all indices zero is the core energy, `k = l = 0`
/// with `i, j >= 1` is a one-body entry, all indices >= 1 is a two-body entry
/// in chemist notation. Records with `j = k = l = 0` (orbital energies, which
/// some emitters append) are skipped. Duplicates that agree within 1e-10 are
/// accepted last-wins; larger conflicts are errors.
pub fn parse_fcidump<R: BufRead>(reader: R) -> Result<Hamiltonian> {
    let mut header = String::new();
    let mut body: Vec<String> = Vec::new();
    let mut in_header = true;
    for line in reader.lines() {
        let line = line?;
        if in_header {
            header.push(' ');
            if let Some(pos) = find_header_end(&line) {
                header.push_str(&line[..pos.0]);
                in_header = false;
                let rest = &line[pos.1..];
                if !rest.trim().is_empty() {
                    body.push(rest.to_string());
                }
            } else {
                header.push_str(&line);
            }
        } else {
            body.push(line);
        }
    }
    if in_header {
        return Err(Error::parse("FCIDUMP header not terminated by &END or /"));
    }
    let (norb, nelec, ms2) = parse_header(&header)?;
    let n = norb;
    if nelec + ms2.unsigned_abs() as i64 > 2 * n as i64 {
        // tolerated below through n_alpha/n_beta bounds
    }
    let na_twice = nelec + ms2;
    let nb_twice = nelec - ms2;
    if na_twice % 2 != 0 || nb_twice % 2 != 0 || na_twice < 0 || nb_twice < 0 {
        return Err(Error::parse(format!(
            "inconsistent NELEC={nelec} MS2={ms2}"
        )));
    }
    let n_alpha = (na_twice / 2) as usize;
    let n_beta = (nb_twice / 2) as usize;
    if n_alpha > n || n_beta > n {
        return Err(Error::parse(format!(
            "electron counts ({n_alpha}a, {n_beta}b) exceed NORB={n}"
        )));
    }

    let mut e_core = 0.0f64;
    let mut core_seen = false;
    let mut h = Array2::<f64>::zeros((n, n));
    let mut eri = Array4::<f64>::zeros((n, n, n, n));
    let mut seen_one: HashMap<(usize, usize), f64> = HashMap::new();
    let mut seen_two: HashMap<(usize, usize, usize, usize), f64> = HashMap::new();

    for line in &body {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let value: f64 = {
            let tok = it
                .next()
                .ok_or_else(|| Error::parse(format!("empty record line: {trimmed:?}")))?;
            tok.replace(['D', 'd'], "E")
                .parse()
                .map_err(|_| Error::parse(format!("bad value token {tok:?}")))?
        };
        let idx: Vec<usize> = it
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(format!("bad index token {t:?}")))
            })
            .collect::<Result<_>>()?;
        if idx.len() != 4 {
            return Err(Error::parse(format!(
                "record must have four indices: {trimmed:?}"
            )));
        }
        let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
        for &ix in &[i, j, k, l] {
            if ix > n {
                return Err(Error::parse(format!(
                    "orbital index {ix} out of range 1..{n}"
                )));
            }
        }
        match (i, j, k, l) {
            (0, 0, 0, 0) => {
                if core_seen && (value - e_core).abs() > 1e-10 {
                    return Err(Error::parse(format!(
                        "conflicting core-energy records: {e_core} vs {value}"
                    )));
                }
                e_core = value;
                core_seen = true;
            }
            (i, j, 0, 0) if i >= 1 && j >= 1 => {
                let key = (i.max(j), i.min(j));
                if let Some(&old) = seen_one.get(&key) {
                    if (old - value).abs() > 1e-10 {
                        return Err(Error::parse(format!(
                            "conflicting one-body records at ({i},{j}): {old} vs {value}"
                        )));
                    }
                }
                seen_one.insert(key, value);
                h[[i - 1, j - 1]] = value;
                h[[j - 1, i - 1]] = value;
            }
            (i, 0, 0, 0) if i >= 1 => {
                // orbital-energy record; not part of the Hamiltonian
            }
            (i, j, k, l) if i >= 1 && j >= 1 && k >= 1 && l >= 1 => {
                let key = canonical_two_body(i, j, k, l);
                if let Some(&old) = seen_two.get(&key) {
                    if (old - value).abs() > 1e-10 {
                        return Err(Error::parse(format!(
                            "conflicting two-body records at ({i},{j}|{k},{l}): {old} vs {value}"
                        )));
                    }
                }
                seen_two.insert(key, value);
                let (i, j, k, l) = (i - 1, j - 1, k - 1, l - 1);
                eri[[i, j, k, l]] = value;
                for (a, b, c, d) in eri_images(i, j, k, l) {
                    eri[[a, b, c, d]] = value;
                }
            }
            _ => {
                return Err(Error::parse(format!(
                    "malformed index pattern ({i},{j},{k},{l})"
                )));
            }
        }
    }
    Hamiltonian::new(n_alpha, n_beta, e_core, h, eri)
}

fn find_header_end(line: &str) -> Option<(usize, usize)> {
    let upper = line.to_uppercase();
    if let Some(p) = upper.find("&END") {
        return Some((p, p + 4));
    }
    if let Some(p) = upper.find("$END") {
        return Some((p, p + 4));
    }
    // a bare "/" terminates the namelist in Fortran convention
    if let Some(p) = line.find('/') {
        return Some((p, p + 1));
    }
    None
}

fn parse_header(header: &str) -> Result<(usize, i64, i64)> {
    let upper = header.to_uppercase();
    let start = upper
        .find("&FCI")
        .ok_or_else(|| Error::parse("missing &FCI namelist"))?;
    let text = &upper[start + 4..];
    // normalize separators so KEY=V1,V2 tokenizes into assignments and values
    let cleaned = text.replace('=', " = ").replace(',', " ");
    let tokens: Vec<&str> = cleaned.split_whitespace().collect();
    let mut norb: Option<usize> = None;
    let mut nelec: Option<i64> = None;
    let mut ms2: i64 = 0;
    let mut i = 0;
    while i < tokens.len() {
        if i + 2 < tokens.len() && tokens[i + 1] == "=" {
            let key = tokens[i];
            let val = tokens[i + 2];
            match key {
                "NORB" => {
                    norb = Some(val.parse().map_err(|_| {
                        Error::parse(format!("bad NORB value {val:?}"))
                    })?)
                }
                "NELEC" => {
                    nelec = Some(val.parse().map_err(|_| {
                        Error::parse(format!("bad NELEC value {val:?}"))
                    })?)
                }
                "MS2" => {
                    ms2 = val
                        .parse()
                        .map_err(|_| Error::parse(format!("bad MS2 value {val:?}")))?
                }
                // ORBSYM, ISYM, IUHF and friends are parsed and ignored
                _ => {}
            }
            i += 3;
        } else {
            i += 1;
        }
    }
    let norb = norb.ok_or_else(|| Error::parse("header missing NORB"))?;
    let nelec = nelec.ok_or_else(|| Error::parse("header missing NELEC"))?;
    if norb == 0 {
        return Err(Error::parse("NORB must be >= 1"));
    }
    Ok((norb, nelec, ms2))
}

/// Write a Molpro-convention FCIDUMP: one record per symmetry-unique nonzero
/// entry, 17 significant digits, lexicographic canonical-tuple order
/// (two-body block, then one-body, then the core energy).
pub fn write_fcidump<W: Write>(ham: &Hamiltonian, mut w: W) -> Result<()> {
    let n = ham.n_orbitals();
    let nelec = ham.n_alpha() + ham.n_beta();
    let ms2 = ham.n_alpha() as i64 - ham.n_beta() as i64;
    writeln!(w, "&FCI NORB={},NELEC={},MS2={},", n, nelec, ms2)?;
    let orbsym: Vec<&str> = std::iter::repeat("1").take(n).collect();
    writeln!(w, " ORBSYM={},", orbsym.join(","))?;
    writeln!(w, " ISYM=1,")?;
    writeln!(w, "&END")?;

    let eri = ham.eri();
    let mut two: Vec<(usize, usize, usize, usize)> = Vec::new();
    for i in 1..=n {
        for j in 1..=i {
            for k in 1..=n {
                for l in 1..=k {
                    let ab = i * (i - 1) / 2 + j;
                    let cd = k * (k - 1) / 2 + l;
                    if ab < cd {
                        continue;
                    }
                    if eri[[i - 1, j - 1, k - 1, l - 1]] != 0.0 {
                        two.push((i, j, k, l));
                    }
                }
            }
        }
    }
    two.sort_unstable();
    for (i, j, k, l) in two {
        writeln!(
            w,
            "{:>24.16E} {:4} {:4} {:4} {:4}",
            eri[[i - 1, j - 1, k - 1, l - 1]],
            i,
            j,
            k,
            l
        )?;
    }
    let h = ham.one_body();
    for i in 1..=n {
        for j in 1..=i {
            if h[[i - 1, j - 1]] != 0.0 {
                writeln!(
                    w,
                    "{:>24.16E} {:4} {:4} {:4} {:4}",
                    h[[i - 1, j - 1]],
                    i,
                    j,
                    0,
                    0
                )?;
            }
        }
    }
    writeln!(w, "{:>24.16E} {:4} {:4} {:4} {:4}", ham.e_core(), 0, 0, 0, 0)?;
    Ok(())
}

/// Apply an orthogonal one-particle basis rotation: `h' = U^T h U`, four-index
/// transform of the two-electron tensor, core energy unchanged.
pub fn rotate_basis(ham: &Hamiltonian, u: &Array2<f64>) -> Result<Hamiltonian> {
    let n = ham.n_orbitals();
    if u.shape() != [n, n] {
        return Err(Error::validation("rotation matrix shape mismatch"));
    }
    let mut max_dev = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for i in 0..n {
                s += u[[i, a]] * u[[i, b]];
            }
            let target = if a == b { 1.0 } else { 0.0 };
            max_dev = max_dev.max((s - target).abs());
        }
    }
    if max_dev > 1e-10 {
        return Err(Error::validation(format!(
            "rotation matrix not orthogonal: max |U^T U - I| = {max_dev:.3e}"
        )));
    }
    let h2 = u.t().dot(ham.one_body()).dot(u);
    let mut t = ham.eri().clone();
    for _ in 0..4 {
        t = one_index_transform(&t, u);
    }
    Hamiltonian::new(ham.n_alpha(), ham.n_beta(), ham.e_core(), h2, t)
}

/// Contract the first tensor index with `U` and rotate it to the back:
/// `out[j,k,l,a] = sum_i U[i,a] T[i,j,k,l]`.
fn one_index_transform(t: &Array4<f64>, u: &Array2<f64>) -> Array4<f64> {
    let n = t.shape()[0];
    let flat = t
        .view()
        .into_shape_with_order((n, n * n * n))
        .expect("contiguous tensor");
    let rotated = u.t().dot(&flat); // [a, (j,k,l)]
    let back = rotated
        .into_shape_with_order((n, n, n, n))
        .expect("shape restored");
    back.permuted_axes([1, 2, 3, 0]).as_standard_layout().to_owned()
}

const HAM_FORMAT: &str = "ham-v1";

#[derive(Serialize, Deserialize)]
struct HamManifest {
    format: String,
    n_orbitals: usize,
    n_alpha: usize,
    n_beta: usize,
    e_core: f64,
    endianness: String,
    dtype: String,
    arrays: Vec<ArraySpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tag: Option<ActiveSpaceTag>,
}

#[derive(Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

/// Persist to the binary form: one JSON manifest line followed by raw
/// little-endian f64 arrays (`h` then `eri`) in row-major order.
pub fn save_binary<W: Write>(ham: &Hamiltonian, tag: Option<&ActiveSpaceTag>, mut w: W) -> Result<()> {
    let n = ham.n_orbitals();
    let manifest = HamManifest {
        format: HAM_FORMAT.to_string(),
        n_orbitals: n,
        n_alpha: ham.n_alpha(),
        n_beta: ham.n_beta(),
        e_core: ham.e_core(),
        endianness: "little".to_string(),
        dtype: "f64".to_string(),
        arrays: vec![
            ArraySpec {
                name: "h".into(),
                shape: vec![n, n],
            },
            ArraySpec {
                name: "eri".into(),
                shape: vec![n, n, n, n],
            },
        ],
        tag: tag.cloned(),
    };
    let line = serde_json::to_string(&manifest)?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    write_f64_slice(&mut w, ham.one_body().as_slice().expect("contiguous"))?;
    write_f64_slice(&mut w, ham.eri().as_slice().expect("contiguous"))?;
    Ok(())
}

/// Load the binary form written by [`save_binary`].
pub fn load_binary<R: BufRead>(mut r: R) -> Result<(Hamiltonian, Option<ActiveSpaceTag>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let manifest: HamManifest = serde_json::from_str(line.trim_end())?;
    if manifest.format != HAM_FORMAT {
        return Err(Error::parse(format!(
            "unsupported binary format {:?}",
            manifest.format
        )));
    }
    if manifest.endianness != "little" || manifest.dtype != "f64" {
        return Err(Error::parse("unsupported array encoding"));
    }
    let n = manifest.n_orbitals;
    let h_len = n * n;
    let eri_len = n * n * n * n;
    let h_vec = read_f64_vec(&mut r, h_len)?;
    let eri_vec = read_f64_vec(&mut r, eri_len)?;
    let h = Array2::from_shape_vec((n, n), h_vec).expect("h shape");
    let eri = Array4::from_shape_vec((n, n, n, n), eri_vec).expect("eri shape");
    let ham = Hamiltonian::new(manifest.n_alpha, manifest.n_beta, manifest.e_core, h, eri)?;
    Ok((ham, manifest.tag))
}

fn write_f64_slice<W: Write>(w: &mut W, data: &[f64]) -> Result<()> {
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Cursor;

    fn parse_str(s: &str) -> Result<Hamiltonian> {
        parse_fcidump(Cursor::new(s))
    }

    #[test]
    fn core_energy_only() {
        let ham = parse_str("&FCI NORB=1,NELEC=2,MS2=0,\n&END\n-1.25 0 0 0 0\n").unwrap();
        assert_eq!(ham.n_orbitals(), 1);
        assert_abs_diff_eq!(ham.e_core(), -1.25);
        assert_eq!(ham.one_body()[[0, 0]], 0.0);
        assert_eq!(ham.eri()[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn symmetry_expansion_of_two_body_record() {
        let ham = parse_str("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.7 1 2 1 1\n").unwrap();
        let e = ham.eri();
        for (i, j, k, l) in [(0, 1, 0, 0), (1, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0)] {
            assert_abs_diff_eq!(e[[i, j, k, l]], 0.7);
        }
        assert_eq!(e[[1, 1, 1, 1]], 0.0);
    }

    #[test]
    fn index_out_of_range_rejected() {
        let err = parse_str("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 3 1 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn conflicting_duplicates_rejected_agreeing_accepted() {
        let ok = parse_str(
            "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1 1 1\n0.5 1 1 1 1\n",
        );
        assert!(ok.is_ok());
        let err = parse_str(
            "&FCI NORB=2,NELEC=2,MS2=0,\n&END\n0.5 1 1 1 1\n0.6 1 1 1 1\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn malformed_header_rejected() {
        assert!(parse_str("&FCI NELEC=2,MS2=0,\n&END\n").is_err());
        assert!(parse_str("&FCI NORB=2,NELEC=2,MS2=1,\n&END\n").is_err());
        assert!(parse_str("no header at all\n").is_err());
    }

    #[test]
    fn orbital_energy_records_skipped() {
        let ham =
            parse_str("&FCI NORB=2,NELEC=2,MS2=0,\n&END\n-0.9 1 0 0 0\n-0.4 2 0 0 0\n").unwrap();
        assert_eq!(ham.one_body()[[0, 0]], 0.0);
    }

    #[test]
    fn write_zero_hamiltonian() {
        let ham = Hamiltonian::new(
            1,
            1,
            0.0,
            Array2::zeros((2, 2)),
            Array4::zeros((2, 2, 2, 2)),
        )
        .unwrap();
        let mut out = Vec::new();
        write_fcidump(&ham, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let records: Vec<&str> = text
            .lines()
            .filter(|l| !l.contains('&') && !l.contains("ORBSYM") && !l.contains("ISYM"))
            .collect();
        assert_eq!(records.len(), 1);
        assert!(records[0].trim().ends_with("0    0    0    0"));
    }

    #[test]
    fn write_single_one_body_record() {
        let mut h = Array2::zeros((2, 2));
        h[[0, 0]] = 0.5;
        let ham = Hamiltonian::new(1, 1, 0.0, h, Array4::zeros((2, 2, 2, 2))).unwrap();
        let mut out = Vec::new();
        write_fcidump(&ham, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let one_body: Vec<&str> = text
            .lines()
            .filter(|l| l.trim().ends_with("1    1    0    0"))
            .collect();
        assert_eq!(one_body.len(), 1);
    }

    #[test]
    fn round_trip_identity_on_random_hamiltonians() {
        for seed in 0..4u64 {
            let ham = Hamiltonian::synthetic(4, 2, 2, seed);
            let mut out = Vec::new();
            write_fcidump(&ham, &mut out).unwrap();
            let re = parse_fcidump(Cursor::new(&out)).unwrap();
            assert_abs_diff_eq!(re.e_core(), ham.e_core(), epsilon = 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    assert_abs_diff_eq!(
                        re.one_body()[[i, j]],
                        ham.one_body()[[i, j]],
                        epsilon = 1e-12
                    );
                    for k in 0..4 {
                        for l in 0..4 {
                            assert_abs_diff_eq!(
                                re.eri()[[i, j, k, l]],
                                ham.eri()[[i, j, k, l]],
                                epsilon = 1e-12
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn validate_symmetry_reports() {
        let ham = Hamiltonian::synthetic(3, 2, 1, 7);
        let rep = ham.validate_symmetry(1e-10).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.max_deviation, 0.0);

        // perturb one element: raw report must fail at 1e-10
        let mut eri = ham.eri().clone();
        eri[[0, 1, 2, 2]] += 1e-6;
        let rep = symmetry_report(ham.one_body(), &eri, 1e-10);
        assert!(!rep.pass);
        assert_abs_diff_eq!(rep.max_eri_deviation, 1e-6, epsilon = 1e-9);
    }

    #[test]
    fn validate_symmetry_boundary_inclusive() {
        let n = 2;
        let mut h = Array2::<f64>::zeros((n, n));
        let tol = 1e-6;
        h[[0, 1]] = 0.0;
        h[[1, 0]] = tol;
        let rep = symmetry_report(&h, &Array4::zeros((n, n, n, n)), tol);
        assert_eq!(rep.max_deviation, tol);
        assert!(rep.pass, "deviation exactly equal to tol must pass");
    }

    #[test]
    fn rotate_identity_and_inverse() {
        let ham = Hamiltonian::synthetic(3, 2, 1, 3);
        let eye = Array2::eye(3);
        let same = rotate_basis(&ham, &eye).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(
                    same.one_body()[[i, j]],
                    ham.one_body()[[i, j]],
                    epsilon = 1e-12
                );
            }
        }
        let u = crate::linalg::random_orthogonal(3, 11);
        let fwd = rotate_basis(&ham, &u).unwrap();
        let back = rotate_basis(&fwd, &u.t().to_owned()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert_abs_diff_eq!(
                            back.eri()[[i, j, k, l]],
                            ham.eri()[[i, j, k, l]],
                            epsilon = 1e-10
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rotate_rejects_non_orthogonal() {
        let ham = Hamiltonian::synthetic(2, 1, 1, 1);
        let mut u = Array2::eye(2);
        u[[0, 0]] = 2.0;
        assert!(rotate_basis(&ham, &u).is_err());
    }

    #[test]
    fn rotation_preserves_symmetry() {
        let ham = Hamiltonian::synthetic(4, 2, 2, 9);
        let u = crate::linalg::random_orthogonal(4, 5);
        let rot = rotate_basis(&ham, &u).unwrap();
        let rep = rot.validate_symmetry(1e-10).unwrap();
        assert!(rep.pass);
    }

    #[test]
    fn binary_round_trip() {
        let ham = Hamiltonian::synthetic(3, 2, 1, 42);
        let tag = ActiveSpaceTag {
            compound: "cpd1".into(),
            tier: TierLabel::X,
            spin_multiplicity: 6,
        };
        let mut buf = Vec::new();
        save_binary(&ham, Some(&tag), &mut buf).unwrap();
        let (re, tag2) = load_binary(Cursor::new(&buf)).unwrap();
        assert_eq!(tag2, Some(tag));
        assert_eq!(re.n_orbitals(), 3);
        assert_abs_diff_eq!(re.e_core(), ham.e_core());
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert_eq!(re.eri()[[i, j, k, l]], ham.eri()[[i, j, k, l]]);
                    }
                }
            }
        }
    }

    #[test]
    fn electron_count_bound_enforced() {
        let res = Hamiltonian::new(
            3,
            3,
            0.0,
            Array2::zeros((2, 2)),
            Array4::zeros((2, 2, 2, 2)),
        );
        assert!(res.is_err());
    }
}
