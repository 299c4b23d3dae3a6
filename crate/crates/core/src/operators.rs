//! Pauli strings, commutation tests and symmetry charges.
//!
//! Qubit ordering used everywhere in the crate: site `j` is bit `j` of the
//! basis index, bit value 0 is spin up, and `Z|up> = +|up>`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cr, cz, Real, C};

/// Largest chain for which [`dense_matrix`] builds a full matrix by default.
pub const DEFAULT_DENSE_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    /// 2x2 matrix in the `{|up>, |down>}` basis.
    pub fn matrix<T: Real>(self) -> [[C<T>; 2]; 2] {
        let o = cz::<T>();
        let one = cr(T::one());
        let i = Complex::new(T::zero(), T::one());
        match self {
            Pauli::X => [[o, one], [one, o]],
            Pauli::Y => [[o, -i], [i, o]],
            Pauli::Z => [[one, o], [o, -one]],
        }
    }
}

/// Real-weighted product of Pauli letters on distinct sites.
///
/// The bit masks are derived from the support: `x_mask` marks X and Y
/// letters (spin flips), `z_mask` marks Z and Y letters (sign factors).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliString<T> {
    support: Vec<(usize, Pauli)>,
    coefficient: T,
    x_mask: usize,
    z_mask: usize,
    y_count: u32,
}

impl<T: Real> PauliString<T> {
    pub fn new(support: Vec<(usize, Pauli)>, coefficient: T) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidPauli("empty support".into()));
        }
        if support.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidPauli("sites must be strictly increasing".into()));
        }
        if support.last().map_or(false, |&(s, _)| s >= usize::BITS as usize) {
            return Err(Error::InvalidPauli("site index too large".into()));
        }
        if coefficient == T::zero() || !coefficient.is_finite() {
            return Err(Error::InvalidPauli("coefficient must be finite and nonzero".into()));
        }
        let mut x_mask = 0;
        let mut z_mask = 0;
        let mut y_count = 0;
        for &(site, p) in &support {
            let bit = 1usize << site;
            match p {
                Pauli::X => x_mask |= bit,
                Pauli::Z => z_mask |= bit,
                Pauli::Y => {
                    x_mask |= bit;
                    z_mask |= bit;
                    y_count += 1;
                }
            }
        }
        Ok(Self { support, coefficient, x_mask, z_mask, y_count })
    }

    /// Contiguous letters starting at `first`, e.g. `("XXZ", 2)` is `X2 X3 Z4`.
    pub fn from_letters(letters: &str, first: usize, coefficient: T) -> Result<Self> {
        let support = letters
            .chars()
            .enumerate()
            .map(|(k, c)| {
                Pauli::from_char(c)
                    .map(|p| (first + k, p))
                    .ok_or_else(|| Error::InvalidPauli(format!("unknown letter {c:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(support, coefficient)
    }

    pub fn single(site: usize, letter: Pauli, coefficient: T) -> Result<Self> {
        Self::new(vec![(site, letter)], coefficient)
    }

    pub fn support(&self) -> &[(usize, Pauli)] {
        &self.support
    }

    pub fn coefficient(&self) -> T {
        self.coefficient
    }

    pub fn with_coefficient(&self, coefficient: T) -> Result<Self> {
        Self::new(self.support.clone(), coefficient)
    }

    pub fn first_site(&self) -> usize {
        self.support[0].0
    }

    pub fn last_site(&self) -> usize {
        self.support[self.support.len() - 1].0
    }

    pub fn width(&self) -> usize {
        self.last_site() - self.first_site() + 1
    }

    pub fn x_mask(&self) -> usize {
        self.x_mask
    }

    pub fn z_mask(&self) -> usize {
        self.z_mask
    }

    pub fn is_diagonal(&self) -> bool {
        self.x_mask == 0
    }

    /// Letter pattern without sites, e.g. `"ZXX"`.
    pub fn pattern(&self) -> String {
        self.support.iter().map(|&(_, p)| p.as_char()).collect()
    }

    /// Action of the bare string (coefficient excluded) on a basis state:
    /// `P|b> = phase * |b ^ x_mask>`.
    #[inline]
    pub fn act_on_basis(&self, b: usize) -> (usize, C<T>) {
        let sign = if (b & self.z_mask).count_ones() % 2 == 0 { T::one() } else { -T::one() };
        (b ^ self.x_mask, i_pow::<T>(self.y_count) * sign)
    }

    /// `i^{#Y}`, the global phase picked up from the Y letters.
    #[inline]
    pub fn y_phase(&self) -> C<T> {
        i_pow(self.y_count)
    }

    /// True when every matrix element in the computational basis is real.
    pub fn is_real(&self) -> bool {
        self.y_count % 2 == 0
    }

    pub fn commutes_with(&self, other: &Self) -> bool {
        terms_commute(self, other)
    }

    /// Shift every site by `offset` (possibly negative) keeping the letters.
    pub(crate) fn shifted(&self, offset: isize) -> Self {
        let support = self
            .support
            .iter()
            .map(|&(s, p)| ((s as isize + offset) as usize, p))
            .collect();
        Self::new(support, self.coefficient).expect("shift keeps a valid string")
    }
}

impl<T: Real> fmt::Display for PauliString<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coefficient)?;
        for &(s, p) in &self.support {
            write!(f, " {}{}", p.as_char(), s)?;
        }
        Ok(())
    }
}

#[inline]
fn i_pow<T: Real>(n: u32) -> C<T> {
    match n % 4 {
        0 => cr(T::one()),
        1 => Complex::new(T::zero(), T::one()),
        2 => cr(-T::one()),
        _ => Complex::new(T::zero(), -T::one()),
    }
}

/// Conserved charge of a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SymmetryCharge {
    /// `prod_j Z_j`, eigenvalues +1 and -1.
    ProductZ,
    /// `sum_j Z_j`, eigenvalues `L, L-2, ..., -L`.
    SumZ,
}

impl SymmetryCharge {
    /// Eigenvalue on a computational basis state.
    pub fn eigenvalue(self, b: usize, len: usize) -> i64 {
        let down = (b & low_mask(len)).count_ones() as i64;
        match self {
            SymmetryCharge::ProductZ => {
                if down % 2 == 0 {
                    1
                } else {
                    -1
                }
            }
            SymmetryCharge::SumZ => len as i64 - 2 * down,
        }
    }
}

#[inline]
pub(crate) fn low_mask(len: usize) -> usize {
    if len >= usize::BITS as usize {
        usize::MAX
    } else {
        (1usize << len) - 1
    }
}

/// Whether two strings commute: the number of shared sites carrying
/// different letters must be even.
pub fn terms_commute<T: Real>(a: &PauliString<T>, b: &PauliString<T>) -> bool {
    let mut anticommuting = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < a.support.len() && j < b.support.len() {
        let (sa, pa) = a.support[i];
        let (sb, pb) = b.support[j];
        match sa.cmp(&sb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if pa != pb {
                    anticommuting += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    anticommuting % 2 == 0
}

/// Whether a single string commutes with the charge.
///
/// A lone string commutes with `prod Z` iff it flips an even number of
/// spins, and with `sum Z` iff it flips none. Sums of strings such as
/// `XX + YY` need [`generator_preserves`].
pub fn charge_preserved<T: Real>(q: SymmetryCharge, k: &PauliString<T>) -> bool {
    match q {
        SymmetryCharge::ProductZ => k.x_mask.count_ones() % 2 == 0,
        SymmetryCharge::SumZ => k.x_mask == 0,
    }
}

/// Whether `[Q, sum_i strings_i] = 0`, checked with a dense commutator on the
/// window spanned by the strings. Only sites inside the window matter since
/// every Z outside it commutes with the strings.
pub fn generator_preserves<T: Real>(q: SymmetryCharge, strings: &[PauliString<T>]) -> bool {
    if strings.is_empty() {
        return true;
    }
    if strings.len() == 1 {
        return charge_preserved(q, &strings[0]);
    }
    let lo = strings.iter().map(|s| s.first_site()).min().unwrap();
    let hi = strings.iter().map(|s| s.last_site()).max().unwrap();
    let width = hi - lo + 1;
    let local: Vec<_> = strings.iter().map(|s| s.shifted(-(lo as isize))).collect();
    let k = dense_matrix_unchecked(&local, width);
    let dim = 1usize << width;
    let tol = T::lit(64.0) * T::eps();
    // Q is diagonal, so [Q, K]_{ab} = (q_a - q_b) K_{ab}.
    for a in 0..dim {
        for b in 0..dim {
            let dq = T::lit((q.eigenvalue(a, width) - q.eigenvalue(b, width)) as f64);
            let e = k[(a, b)] * dq;
            if e.re.abs() > tol || e.im.abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Whether `sum_i a_i` and `sum_j b_j` commute. Falls back to a dense
/// commutator on the joint window when some pair of strings anticommutes.
pub fn sums_commute<T: Real>(a: &[PauliString<T>], b: &[PauliString<T>]) -> bool {
    if a.iter().all(|x| b.iter().all(|y| terms_commute(x, y))) {
        return true;
    }
    let lo = a.iter().chain(b).map(|s| s.first_site()).min().unwrap();
    let hi = a.iter().chain(b).map(|s| s.last_site()).max().unwrap();
    let width = hi - lo + 1;
    let shift = |v: &[PauliString<T>]| -> Vec<_> { v.iter().map(|s| s.shifted(-(lo as isize))).collect() };
    let ma = dense_matrix_unchecked(&shift(a), width);
    let mb = dense_matrix_unchecked(&shift(b), width);
    let comm = &ma * &mb - &mb * &ma;
    let tol = T::lit(256.0) * T::eps();
    comm.iter().all(|z| z.re.abs() <= tol && z.im.abs() <= tol)
}

/// Dense `2^L x 2^L` matrix of `sum_i strings_i` using [`DEFAULT_DENSE_LIMIT`].
pub fn dense_matrix<T: Real>(terms: &[PauliString<T>], len: usize) -> Result<DMatrix<C<T>>> {
    dense_matrix_with_limit(terms, len, DEFAULT_DENSE_LIMIT)
}

pub fn dense_matrix_with_limit<T: Real>(
    terms: &[PauliString<T>],
    len: usize,
    limit: usize,
) -> Result<DMatrix<C<T>>> {
    if len > limit {
        return Err(Error::TooLarge { len, limit });
    }
    if let Some(t) = terms.iter().find(|t| t.last_site() >= len) {
        return Err(Error::SiteOutOfRange { site: t.last_site(), len });
    }
    Ok(dense_matrix_unchecked(terms, len))
}

fn dense_matrix_unchecked<T: Real>(terms: &[PauliString<T>], len: usize) -> DMatrix<C<T>> {
    let dim = 1usize << len;
    let mut m = DMatrix::from_element(dim, dim, cz::<T>());
    for t in terms {
        let c = cr(t.coefficient);
        for b in 0..dim {
            let (row, phase) = t.act_on_basis(b);
            m[(row, b)] += phase * c;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(letters: &str, first: usize, c: f64) -> PauliString<f64> {
        PauliString::from_letters(letters, first, c).unwrap()
    }

    fn kron_embed(p: &PauliString<f64>, len: usize) -> DMatrix<C<f64>> {
        // Independent route: explicit Kronecker products, site 0 = least significant bit.
        let id = DMatrix::<C<f64>>::identity(2, 2);
        let mut out = DMatrix::<C<f64>>::identity(1, 1);
        for site in 0..len {
            let local = match p.support().iter().find(|&&(s, _)| s == site) {
                Some(&(_, l)) => {
                    let m = l.matrix::<f64>();
                    DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]])
                }
                None => id.clone(),
            };
            out = local.kronecker(&out);
        }
        out * cr(p.coefficient())
    }

    fn commutator_norm(a: &DMatrix<C<f64>>, b: &DMatrix<C<f64>>) -> f64 {
        (a * b - b * a).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_bad_strings() {
        assert!(PauliString::<f64>::new(vec![(1, Pauli::X), (0, Pauli::X)], 1.0).is_err());
        assert!(PauliString::<f64>::new(vec![(0, Pauli::X), (0, Pauli::Z)], 1.0).is_err());
        assert!(PauliString::<f64>::new(vec![(0, Pauli::X)], 0.0).is_err());
        assert!(PauliString::<f64>::new(vec![], 1.0).is_err());
        assert!(PauliString::<f64>::from_letters("XQ", 0, 1.0).is_err());
    }

    #[test]
    fn commutation_examples() {
        assert!(terms_commute(&ps("Z", 0, 1.0), &ps("Z", 0, 1.0)));
        assert!(!terms_commute(&ps("XX", 0, 1.0), &ps("Z", 1, 1.0)));
        let a = ps("XXZ", 0, 1.0);
        let b = ps("ZXX", 0, 1.0);
        assert!(terms_commute(&a, &b));
        let (da, db) = (dense_matrix(&[a], 3).unwrap(), dense_matrix(&[b], 3).unwrap());
        assert!(commutator_norm(&da, &db) < 1e-14);
    }

    #[test]
    fn charge_examples() {
        assert!(charge_preserved(SymmetryCharge::ProductZ, &ps("XX", 0, 1.0)));
        assert!(!charge_preserved(SymmetryCharge::SumZ, &ps("XX", 0, 1.0)));
        assert!(charge_preserved(SymmetryCharge::ProductZ, &ps("Z", 0, 1.0)));
        let xy = [ps("XX", 0, -1.0), ps("YY", 0, -1.0)];
        assert!(generator_preserves(SymmetryCharge::SumZ, &xy));
        assert!(generator_preserves(SymmetryCharge::ProductZ, &xy));
        let xz = [ps("XX", 0, -1.0), ps("ZZ", 0, -1.0)];
        assert!(!generator_preserves(SymmetryCharge::SumZ, &xz));
    }

    #[test]
    fn dense_examples() {
        let m = dense_matrix(&[ps("Z", 0, -1.0)], 1).unwrap();
        assert_eq!(m[(0, 0)], cr(-1.0));
        assert_eq!(m[(1, 1)], cr(1.0));
        let m = dense_matrix(&[ps("XX", 0, -1.0)], 2).unwrap();
        for (a, b) in [(0, 3), (3, 0), (1, 2), (2, 1)] {
            assert_eq!(m[(a, b)], cr(-1.0));
        }
        assert_eq!(m.iter().filter(|z| z.norm() > 0.0).count(), 4);
        let ising = [ps("XX", 0, -1.0), ps("Z", 0, -1.0), ps("Z", 1, -1.0)];
        let h = dense_matrix(&ising, 2).unwrap();
        let re = h.map(|z| z.re);
        let mut ev: Vec<f64> = re.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s5 = 5f64.sqrt();
        for (got, want) in ev.iter().zip([-s5, -1.0, 1.0, s5]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn dense_limits() {
        assert!(matches!(
            dense_matrix(&[ps("Z", 0, 1.0)], 13),
            Err(Error::TooLarge { .. })
        ));
        assert!(matches!(
            dense_matrix(&[ps("ZZ", 1, 1.0)], 2),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn y_letters_match_kronecker() {
        for p in [ps("Y", 1, 0.7), ps("XYZ", 0, -1.3), ps("YY", 1, 2.0), ps("YZY", 0, 1.0)] {
            let a = dense_matrix(std::slice::from_ref(&p), 3).unwrap();
            let b = kron_embed(&p, 3);
            assert!((a - b).iter().all(|z| z.norm() < 1e-15), "{p}");
        }
    }

    #[test]
    fn charge_eigenvalues() {
        assert_eq!(SymmetryCharge::ProductZ.eigenvalue(0b101, 3), 1);
        assert_eq!(SymmetryCharge::ProductZ.eigenvalue(0b100, 3), -1);
        assert_eq!(SymmetryCharge::SumZ.eigenvalue(0, 4), 4);
        assert_eq!(SymmetryCharge::SumZ.eigenvalue(0b1111, 4), -4);
    }

    fn arb_string(max_sites: usize) -> impl Strategy<Value = PauliString<f64>> {
        proptest::collection::vec(0u8..4, max_sites)
            .prop_filter("non-identity", |v| v.iter().any(|&l| l != 0))
            .prop_flat_map(|letters| (Just(letters), -2.0f64..2.0))
            .prop_filter("nonzero", |(_, c)| c.abs() > 1e-3)
            .prop_map(|(letters, c)| {
                let support = letters
                    .iter()
                    .enumerate()
                    .filter_map(|(s, &l)| match l {
                        1 => Some((s, Pauli::X)),
                        2 => Some((s, Pauli::Y)),
                        3 => Some((s, Pauli::Z)),
                        _ => None,
                    })
                    .collect();
                PauliString::new(support, c).unwrap()
            })
    }

    #[test]
    fn exhaustive_commutation_on_two_sites() {
        let letters = ["I", "X", "Y", "Z"];
        let mut all = Vec::new();
        for a in letters {
            for b in letters {
                let support: Vec<_> = [a, b]
                    .iter()
                    .enumerate()
                    .filter_map(|(s, l)| Pauli::from_char(l.chars().next().unwrap()).map(|p| (s, p)))
                    .collect();
                if !support.is_empty() {
                    all.push(PauliString::new(support, 1.0).unwrap());
                }
            }
        }
        for a in &all {
            for b in &all {
                let dense = commutator_norm(&kron_embed(a, 2), &kron_embed(b, 2)) < 1e-12;
                assert_eq!(terms_commute(a, b), dense, "{a} / {b}");
            }
        }
    }

    proptest! {
        #[test]
        fn commutation_matches_dense(a in arb_string(4), b in arb_string(4)) {
            let dense = commutator_norm(&kron_embed(&a, 4), &kron_embed(&b, 4)) < 1e-12;
            prop_assert_eq!(terms_commute(&a, &b), dense);
        }

        #[test]
        fn charge_rule_matches_dense(k in arb_string(6)) {
            for q in [SymmetryCharge::ProductZ, SymmetryCharge::SumZ] {
                let dim = 1usize << 6;
                let km = kron_embed(&k, 6);
                let qm = DMatrix::from_fn(dim, dim, |a, b| {
                    if a == b { cr(q.eigenvalue(a, 6) as f64) } else { cz() }
                });
                let dense = commutator_norm(&qm, &km) < 1e-12;
                prop_assert_eq!(charge_preserved(q, &k), dense);
                prop_assert_eq!(generator_preserves(q, std::slice::from_ref(&k)), dense);
            }
        }

        #[test]
        fn dense_is_hermitian(terms in proptest::collection::vec(arb_string(4), 1..5)) {
            let m = dense_matrix(&terms, 4).unwrap();
            let d = &m - m.adjoint();
            prop_assert!(d.iter().all(|z| z.norm() < 1e-13));
        }

        #[test]
        fn dense_matches_kronecker(k in arb_string(4)) {
            let a = dense_matrix(std::slice::from_ref(&k), 4).unwrap();
            let b = kron_embed(&k, 4);
            prop_assert!((a - b).iter().all(|z| z.norm() < 1e-14));
        }
    }
}
