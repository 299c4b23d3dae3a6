//! Dense amplitude vector over `2^L` basis states.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::model::{Generator, HamiltonianSpec};
use crate::operators::{PauliString, SymmetryCharge};
use crate::scalar::{abs2, cr, cz, inner, norm2, Real, C};

/// Largest chain the dense engine accepts.
pub const MAX_SITES: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct State<T> {
    len: usize,
    amps: Vec<C<T>>,
}

impl<T: Real> State<T> {
    /// Product state with the listed sites flipped down, all others up.
    pub fn product_state(len: usize, flips: &[usize]) -> Result<Self> {
        if len == 0 || len > MAX_SITES {
            return Err(Error::TooLarge { len, limit: MAX_SITES });
        }
        let mut index = 0usize;
        for &s in flips {
            if s >= len {
                return Err(Error::SiteOutOfRange { site: s, len });
            }
            if index & (1 << s) != 0 {
                return Err(Error::InvalidModel(format!("site {s} flipped twice")));
            }
            index |= 1 << s;
        }
        let mut amps = vec![cz(); 1 << len];
        amps[index] = cr(T::one());
        Ok(Self { len, amps })
    }

    pub fn all_up(len: usize) -> Result<Self> {
        Self::product_state(len, &[])
    }

    pub fn from_amplitudes(len: usize, amps: Vec<C<T>>) -> Result<Self> {
        if len > MAX_SITES {
            return Err(Error::TooLarge { len, limit: MAX_SITES });
        }
        if amps.len() != 1 << len {
            return Err(Error::DimensionMismatch { expected: 1 << len, got: amps.len() });
        }
        Ok(Self { len, amps })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C<T>] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amps
    }

    pub fn norm(&self) -> T {
        norm2(&self.amps)
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > T::zero() {
            let inv = T::one() / n;
            self.amps.iter_mut().for_each(|z| *z = *z * inv);
        }
    }

    fn check_support(&self, k: &PauliString<T>) {
        assert!(
            k.last_site() < self.len,
            "string {k} does not fit a chain of {} sites",
            self.len
        );
    }

    /// `psi <- exp(-i theta k) psi` for one Pauli string (coefficient included).
    ///
    /// Uses `exp(-i a P) = cos(a) - i sin(a) P` with `a = theta * c`, touching
    /// amplitudes pairwise so the update is in place.
    pub fn apply_generator_exp(&mut self, k: &PauliString<T>, theta: T) {
        self.check_support(k);
        let a = theta * k.coefficient();
        let (s, c) = a.sin_cos();
        let x = k.x_mask();
        let z = k.z_mask();
        if x == 0 {
            // Diagonal string: a phase exp(-i a (+/-1)) per basis state.
            let plus = Complex::new(c, -s);
            let minus = Complex::new(c, s);
            for (b, amp) in self.amps.iter_mut().enumerate() {
                *amp = *amp * if (b & z).count_ones() % 2 == 0 { plus } else { minus };
            }
            return;
        }
        // -i * s * i^{#Y}
        let mis = k.y_phase() * Complex::new(T::zero(), -s);
        // parity(b ^ x & z) differs from parity(b & z) by the number of Y sites
        let flip = !k.is_real();
        let stride = 1usize << x.trailing_zeros();
        let dim = self.amps.len();
        let amps = &mut self.amps;
        for base in (0..dim).step_by(2 * stride) {
            for b in base..base + stride {
                let b2 = b ^ x;
                // P|b2> = ph2 |b>, P|b> = ph1 |b2>
                let odd = (b & z).count_ones() & 1 == 1;
                let ph1 = if odd { -mis } else { mis };
                let ph2 = if odd ^ flip { -mis } else { mis };
                let u = amps[b];
                let v = amps[b2];
                amps[b] = u * c + v * ph2;
                amps[b2] = v * c + u * ph1;
            }
        }
    }

    /// `psi <- exp(-i theta G) psi` for a generator whose strings commute.
    pub fn apply_generator(&mut self, g: &Generator<T>, theta: T) {
        for s in g.strings() {
            self.apply_generator_exp(s, theta);
        }
    }

    /// `psi <- k psi`, including the coefficient. Not norm preserving.
    pub fn apply_pauli(&mut self, k: &PauliString<T>) {
        self.check_support(k);
        let x = k.x_mask();
        let z = k.z_mask();
        let c = cr(k.coefficient());
        let ph = k.y_phase() * c;
        if x == 0 {
            for (b, amp) in self.amps.iter_mut().enumerate() {
                *amp = *amp * if (b & z).count_ones() % 2 == 0 { ph } else { -ph };
            }
            return;
        }
        let flip = !k.is_real();
        let stride = 1usize << x.trailing_zeros();
        let dim = self.amps.len();
        let amps = &mut self.amps;
        for base in (0..dim).step_by(2 * stride) {
            for b in base..base + stride {
                let b2 = b ^ x;
                let odd = (b & z).count_ones() & 1 == 1;
                let ph1 = if odd { -ph } else { ph };
                let ph2 = if odd ^ flip { -ph } else { ph };
                let u = amps[b];
                let v = amps[b2];
                amps[b] = v * ph2;
                amps[b2] = u * ph1;
            }
        }
    }

    /// `psi <- G psi` for a generator (sum of strings).
    pub fn apply_generator_op(&mut self, g: &Generator<T>) {
        if let [only] = g.strings() {
            self.apply_pauli(only);
            return;
        }
        let mut acc = vec![cz(); self.amps.len()];
        for s in g.strings() {
            let mut t = self.clone();
            t.apply_pauli(s);
            acc.iter_mut().zip(&t.amps).for_each(|(a, b)| *a += *b);
        }
        self.amps = acc;
    }

    /// `<self|other>`
    pub fn inner(&self, other: &Self) -> C<T> {
        inner(&self.amps, &other.amps)
    }

    /// `<psi|k|psi>` without allocating.
    pub fn pauli_expectation(&self, k: &PauliString<T>) -> C<T> {
        let x = k.x_mask();
        let z = k.z_mask();
        let mut re = T::zero();
        let mut im = T::zero();
        for (b, amp) in self.amps.iter().enumerate() {
            // (P psi)[b] = phase(b ^ x) psi[b ^ x]
            let src = b ^ x;
            let v = self.amps[src];
            let v = if (src & z).count_ones() % 2 == 0 { v } else { -v };
            re += amp.re * v.re + amp.im * v.im;
            im += amp.re * v.im - amp.im * v.re;
        }
        Complex::new(re, im) * k.y_phase() * k.coefficient()
    }

    /// `H|psi>` as a raw amplitude vector.
    pub fn apply_hamiltonian(&self, spec: &HamiltonianSpec<T>) -> Vec<C<T>> {
        let mut out = vec![cz(); self.amps.len()];
        for t in spec.terms() {
            let x = t.x_mask();
            let z = t.z_mask();
            let ph = t.y_phase() * t.coefficient();
            for (b, o) in out.iter_mut().enumerate() {
                let src = b ^ x;
                let v = self.amps[src] * ph;
                *o += if (src & z).count_ones() % 2 == 0 { v } else { -v };
            }
        }
        out
    }

    /// `<psi|H|psi>`. Panics when the imaginary residue exceeds the tolerance,
    /// which would mean a non-Hermitian term slipped in.
    pub fn expectation(&self, spec: &HamiltonianSpec<T>) -> Result<T> {
        if spec.len() != self.len {
            return Err(Error::DimensionMismatch { expected: self.len, got: spec.len() });
        }
        let mut e = cz::<T>();
        for t in spec.terms() {
            e += self.pauli_expectation(t);
        }
        let tol = T::lit(1e-10).max(T::lit(1e4) * T::eps());
        assert!(e.im.abs() <= tol * (T::one() + e.re.abs()), "non-real energy {e}");
        Ok(e.re)
    }

    /// `<psi|Q|psi>` for a diagonal charge.
    pub fn charge_expectation(&self, q: SymmetryCharge) -> T {
        self.amps
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (b, z)| acc + abs2(*z) * T::lit(q.eigenvalue(b, self.len) as f64))
    }

    /// Squared Schmidt values across the cut after site `L/2 - 1`.
    pub fn schmidt_spectrum(&self) -> Result<Vec<T>> {
        if self.len % 2 != 0 {
            return Err(Error::OddLength(self.len));
        }
        let half = 1usize << (self.len / 2);
        // Left sites are the low bits: index = left + half * right.
        let m = DMatrix::from_fn(half, half, |left, right| self.amps[left + half * right]);
        let sv = m.singular_values();
        let mut p: Vec<T> = sv.iter().map(|s| *s * *s).collect();
        p.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Ok(p)
    }

    /// Von Neumann entropy (natural log) of the left half of the chain.
    pub fn half_chain_entropy(&self) -> Result<T> {
        let p = self.schmidt_spectrum()?;
        let total: T = p.iter().copied().sum();
        let floor = T::eps() * T::eps();
        Ok(p.into_iter()
            .filter(|&x| x > floor)
            .map(|x| {
                let x = x / total;
                -x * x.ln()
            })
            .sum())
    }
}

/// `<phi|psi>`
pub fn overlap<T: Real>(psi: &State<T>, phi: &State<T>) -> Result<C<T>> {
    if psi.len != phi.len {
        return Err(Error::DimensionMismatch { expected: psi.dim(), got: phi.dim() });
    }
    Ok(phi.inner(psi))
}

/// `|<target|psi>|`
pub fn fidelity<T: Real>(psi: &State<T>, target: &State<T>) -> Result<T> {
    overlap(psi, target).map(crate::scalar::modulus)
}
