//! Exact diagonalization inside parity sectors.
//!
//! Every model built in [`crate::model`] has real matrix elements in the
//! computational basis, so sector blocks are real symmetric. Small blocks are
//! diagonalized densely; larger ones use Lanczos with full
//! reorthogonalization, which is exact to working precision for the few
//! lowest states needed here.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{build_ising, HamiltonianSpec};
use crate::operators::{low_mask, Pauli, PauliString, SymmetryCharge};
use crate::scalar::{cr, Real};
use crate::statevector::State;

/// Sector blocks up to this dimension are diagonalized densely.
pub const DENSE_SECTOR_LIMIT: usize = 512;
/// Largest chain accepted by the eigensolver.
pub const MAX_ED_SITES: usize = 16;

/// Relative energy gap below which neighbouring levels count as degenerate.
const DEGENERACY_TOL: f64 = 1e-10;

/// Eigenvalue of `prod_j Z_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn from_charge(q: i64) -> Result<Self> {
        match q {
            1 => Ok(Parity::Even),
            -1 => Ok(Parity::Odd),
            _ => Err(Error::Config(format!("parity sector must be +1 or -1, got {q}"))),
        }
    }

    pub fn charge(self) -> i64 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    fn contains(self, b: usize) -> bool {
        (b.count_ones() % 2 == 0) == (self == Parity::Even)
    }
}

#[derive(Clone, Debug)]
pub struct TargetState<T> {
    pub state: State<T>,
    pub energy: T,
    /// `None` when diagonalizing the full space of a model without parity.
    pub sector: Option<Parity>,
    /// Rank by ascending energy inside the sector.
    pub index: usize,
    /// Set when a neighbouring level lies within the degeneracy tolerance.
    pub degenerate: bool,
}

/// Basis indices of the parity sector, ascending.
pub fn sector_indices(len: usize, q: Parity) -> Vec<usize> {
    (0..1usize << len).filter(|&b| q.contains(b)).collect()
}

/// Real symmetric block of `H` restricted to a set of basis states, in
/// compressed-row form.
struct SectorOperator<T> {
    basis: Vec<usize>,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Real> SectorOperator<T> {
    fn new(spec: &HamiltonianSpec<T>, basis: Vec<usize>) -> Result<Self> {
        if !spec.is_real() {
            return Err(Error::Eigensolver("Hamiltonian has complex matrix elements".into()));
        }
        let full = 1usize << spec.len();
        let mut position = vec![u32::MAX; full];
        for (i, &b) in basis.iter().enumerate() {
            position[b] = i as u32;
        }
        let terms: Vec<_> = spec.terms().collect();
        let mut row_start = Vec::with_capacity(basis.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for (i, &b) in basis.iter().enumerate() {
            let mut diag = T::zero();
            let first = cols.len();
            for t in &terms {
                // <b|P|src> with src = b ^ x: P|src> = phase(src)|b>
                let src = b ^ t.x_mask();
                let (_, phase) = t.act_on_basis(src);
                let v = phase.re * t.coefficient();
                if src == b {
                    diag += v;
                    continue;
                }
                let j = position[src];
                if j == u32::MAX {
                    return Err(Error::NotParitySymmetric);
                }
                match cols[first..].iter().position(|&c| c == j) {
                    Some(k) => vals[first + k] += v,
                    None => {
                        cols.push(j);
                        vals.push(v);
                    }
                }
            }
            cols.push(i as u32);
            vals.push(diag);
            row_start.push(cols.len());
        }
        Ok(Self { basis, row_start, cols, vals })
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, out) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_start[i]..self.row_start[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *out = acc;
        }
    }

    fn dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in self.row_start[i]..self.row_start[i + 1] {
                m[(i, self.cols[k] as usize)] += self.vals[k];
            }
        }
        m
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn sorted_eigen<T: Real>(m: DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Lowest `want` eigenpairs (plus one extra Ritz value when available, used
/// for the degeneracy flag) via Lanczos with full reorthogonalization.
fn lanczos<T: Real>(op: &SectorOperator<T>, want: usize) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = op.dim();
    let max_steps = n.min(1200);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a2c_5eed);
    let mut v: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let nv = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= nv);

    let mut basis: Vec<Vec<T>> = vec![v];
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut w = vec![T::zero(); n];
    let tol = T::lit(1e-12).max(T::lit(100.0) * T::eps());
    let resid_tol = T::lit(1e-10).max(T::lit(1e4) * T::eps());
    let mut check_every = 10;

    loop {
        let j = alpha.len();
        op.apply(&basis[j], &mut w);
        let a = dot(&w, &basis[j]);
        alpha.push(a);
        // two passes of classical Gram-Schmidt against the whole basis
        for _ in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * *y);
            }
        }
        let b = dot(&w, &w).sqrt();
        let steps = alpha.len();
        let exhausted = b <= tol || steps >= max_steps;
        if steps >= want && (steps % check_every == 0 || exhausted) {
            let m = DMatrix::from_fn(steps, steps, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    T::zero()
                }
            });
            let (theta, s) = sorted_eigen(m);
            let converged = (0..want).all(|i| (b * s[(steps - 1, i)]).abs() <= tol * (T::one() + theta[i].abs()));
            if converged || exhausted {
                let keep = (want + 1).min(steps);
                let mut vectors = Vec::with_capacity(keep);
                for i in 0..keep {
                    let mut y = vec![T::zero(); n];
                    for (k, q) in basis.iter().enumerate() {
                        let c = s[(k, i)];
                        y.iter_mut().zip(q).for_each(|(x, v)| *x += c * *v);
                    }
                    let ny = dot(&y, &y).sqrt();
                    y.iter_mut().for_each(|x| *x /= ny);
                    vectors.push(y);
                }
                // verify the wanted pairs directly
                let mut hy = vec![T::zero(); n];
                let mut worst = T::zero();
                for i in 0..want {
                    op.apply(&vectors[i], &mut hy);
                    let r = hy
                        .iter()
                        .zip(&vectors[i])
                        .fold(T::zero(), |acc, (h, y)| acc + (*h - theta[i] * *y).powi(2))
                        .sqrt();
                    worst = worst.max(r / (T::one() + theta[i].abs()));
                }
                if worst <= resid_tol {
                    return Ok((theta[..keep].to_vec(), vectors));
                }
                if exhausted {
                    return Err(Error::Eigensolver(format!(
                        "Lanczos stopped after {steps} steps with residual {worst:e}"
                    )));
                }
                check_every = 5;
            }
        }
        if exhausted {
            return Err(Error::Eigensolver("Krylov space exhausted".into()));
        }
        beta.push(b);
        let next: Vec<T> = w.iter().map(|x| *x / b).collect();
        basis.push(next);
    }
}

fn fix_phase<T: Real>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// The `k` lowest eigenstates of `spec` in a parity sector (or the full
/// space when `sector` is `None`), ascending in energy, embedded in the full
/// `2^L` space with the largest amplitude made real positive.
pub fn eigenstates<T: Real>(spec: &HamiltonianSpec<T>, sector: Option<Parity>, k: usize) -> Result<Vec<TargetState<T>>> {
    let len = spec.len();
    if len > MAX_ED_SITES {
        return Err(Error::TooLarge { len, limit: MAX_ED_SITES });
    }
    let basis = match sector {
        Some(q) => {
            if !spec.conserves(SymmetryCharge::ProductZ) {
                return Err(Error::NotParitySymmetric);
            }
            sector_indices(len, q)
        }
        None => (0..1usize << len).collect(),
    };
    let dim = basis.len();
    if k == 0 || k > dim {
        return Err(Error::TooManyStates { requested: k, dim });
    }
    let op = SectorOperator::new(spec, basis)?;
    let (energies, vectors): (Vec<T>, Vec<Vec<T>>) = if dim <= DENSE_SECTOR_LIMIT {
        let (vals, vecs) = sorted_eigen(op.dense());
        let keep = (k + 1).min(dim);
        let vectors = (0..keep).map(|i| vecs.column(i).iter().copied().collect()).collect();
        (vals[..keep].to_vec(), vectors)
    } else {
        lanczos(&op, k)?
    };

    let gap_tol = T::lit(DEGENERACY_TOL);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let e = energies[i];
        let near = |j: usize| (energies[j] - e).abs() <= gap_tol * (T::one() + e.abs());
        let degenerate = (i > 0 && near(i - 1)) || (i + 1 < energies.len() && near(i + 1));
        let mut v = vectors[i].clone();
        fix_phase(&mut v);
        let mut amps = vec![cr(T::zero()); 1 << len];
        for (x, &b) in v.iter().zip(&op.basis) {
            amps[b] = cr(*x);
        }
        out.push(TargetState {
            state: State::from_amplitudes(len, amps)?,
            energy: e,
            sector,
            index: i,
            degenerate,
        });
    }
    Ok(out)
}

/// Sorted spectrum of one sector (all levels), dense only.
pub fn sector_spectrum<T: Real>(spec: &HamiltonianSpec<T>, sector: Parity) -> Result<Vec<T>> {
    if !spec.conserves(SymmetryCharge::ProductZ) {
        return Err(Error::NotParitySymmetric);
    }
    let basis = sector_indices(spec.len(), sector);
    if basis.len() > 4 * DENSE_SECTOR_LIMIT {
        return Err(Error::TooLarge { len: spec.len(), limit: MAX_ED_SITES });
    }
    let op = SectorOperator::new(spec, basis)?;
    Ok(sorted_eigen(op.dense()).0)
}

/// `sqrt(sum_t |<t|psi>|^2)` over a block of (degenerate) targets.
pub fn block_fidelity<T: Real>(psi: &State<T>, block: &[&TargetState<T>]) -> T {
    block
        .iter()
        .map(|t| crate::scalar::abs2(t.state.inner(psi)))
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct CorrelationFit {
    /// Decay length in lattice units.
    pub xi: f64,
    pub slope: f64,
    /// `(r, C(r))` pairs used in the fit.
    pub points: Vec<(usize, f64)>,
}

/// Sites excluded at each end of the chain when sampling correlators.
const BOUNDARY_MARGIN: usize = 1;
/// Correlators below this are treated as numerical noise.
const CORRELATOR_FLOOR: f64 = 1e-11;

/// Decay length of the connected `X X` correlator in the ground state of the
/// Ising chain with both fields, from a log-linear least squares fit.
///
/// Each distance `r` uses the pair of sites centred on the middle of the
/// chain. The fit window starts at `r = 2` and stops at the first correlator
/// that is non-positive or below the noise floor.
pub fn correlation_length(lambda_x: f64, lambda_z: f64, len: usize) -> Result<CorrelationFit> {
    if !(lambda_x > 0.0) {
        return Err(Error::CorrelationFit(format!("needs a gapped chain with lambda_x > 0, got {lambda_x}")));
    }
    if len > MAX_ED_SITES || len < 6 {
        return Err(Error::CorrelationFit(format!("chain length {len} outside 6..={MAX_ED_SITES}")));
    }
    let spec = build_ising(len, lambda_x, lambda_z)?;
    let gs = eigenstates(&spec, None, 1)?.remove(0).state;
    let x = |j: usize| gs.pauli_expectation(&PauliString::single(j, Pauli::X, 1.0).unwrap()).re;
    let usable = len - 2 * BOUNDARY_MARGIN;
    let mut points = Vec::new();
    for r in 2..usable {
        let j = (len - r) / 2;
        let xx = PauliString::new(vec![(j, Pauli::X), (j + r, Pauli::X)], 1.0)?;
        let c = gs.pauli_expectation(&xx).re - x(j) * x(j + r);
        if !(c > CORRELATOR_FLOOR) {
            break;
        }
        points.push((r, c));
    }
    if points.len() < 3 {
        return Err(Error::CorrelationFit(format!("only {} usable correlator points", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::CorrelationFit(format!("correlator does not decay (slope {slope})")));
    }
    Ok(CorrelationFit { xi: -1.0 / slope, slope, points })
}

/// Parity of a basis index restricted to `len` sites.
pub fn basis_parity(b: usize, len: usize) -> Parity {
    if (b & low_mask(len)).count_ones() % 2 == 0 {
        Parity::Even
    } else {
        Parity::Odd
    }
}
