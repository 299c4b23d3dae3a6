//! Hamiltonian builders and their decomposition into term groups.
//!
//! A model is stored as an ordered list of [`TermGroup`]s. Each group holds
//! one [`Generator`] per angle of a circuit sublayer; almost every generator is
//! a single Pauli string, the exception being the `XX+YY` hopping term of the
//! U(1)-conserving XXZ grouping, which carries two commuting strings that must
//! share one angle.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::{
    dense_matrix, generator_preserves, sums_commute, PauliString, SymmetryCharge,
};
use crate::scalar::{Real, C};

/// Range class of a group: one site, nearest or next-nearest neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Locality {
    #[serde(rename = "nn")]
    NearestNeighbor,
    #[serde(rename = "ons")]
    OnSite,
    #[serde(rename = "nnn")]
    NextNearestNeighbor,
}

impl Locality {
    /// Position of the sublayer inside a circuit layer (nn, then ons, then nnn).
    pub fn sublayer_rank(self) -> usize {
        match self {
            Locality::NearestNeighbor => 0,
            Locality::OnSite => 1,
            Locality::NextNearestNeighbor => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Locality::NearestNeighbor => "nn",
            Locality::OnSite => "ons",
            Locality::NextNearestNeighbor => "nnn",
        }
    }
}

/// Hermitian operator rotated by one circuit angle: a sum of mutually
/// commuting Pauli strings anchored at `site`.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub site: usize,
    strings: Vec<PauliString<T>>,
}

impl<T: Real> Generator<T> {
    pub fn single(string: PauliString<T>) -> Self {
        Self { site: string.first_site(), strings: vec![string] }
    }

    pub fn sum(site: usize, strings: Vec<PauliString<T>>) -> Result<Self> {
        if strings.is_empty() {
            return Err(Error::InvalidModel("generator without strings".into()));
        }
        for (i, a) in strings.iter().enumerate() {
            if strings[i + 1..].iter().any(|b| !a.commutes_with(b)) {
                return Err(Error::InvalidModel(format!(
                    "strings of generator at site {site} do not commute"
                )));
            }
        }
        Ok(Self { site, strings })
    }

    pub fn strings(&self) -> &[PauliString<T>] {
        &self.strings
    }

    pub fn last_site(&self) -> usize {
        self.strings.iter().map(|s| s.last_site()).max().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermGroup<T> {
    pub label: String,
    pub locality: Locality,
    generators: Vec<Generator<T>>,
    intra_commuting: bool,
}

impl<T: Real> TermGroup<T> {
    pub fn new(label: impl Into<String>, locality: Locality, generators: Vec<Generator<T>>) -> Self {
        let intra_commuting = generators.iter().enumerate().all(|(i, a)| {
            generators[i + 1..].iter().all(|b| sums_commute(a.strings(), b.strings()))
        });
        Self { label: label.into(), locality, generators, intra_commuting }
    }

    /// Group with one single-string generator per entry.
    pub fn of_strings(label: impl Into<String>, locality: Locality, strings: Vec<PauliString<T>>) -> Self {
        Self::new(label, locality, strings.into_iter().map(Generator::single).collect())
    }

    pub fn generators(&self) -> &[Generator<T>] {
        &self.generators
    }

    pub fn terms(&self) -> impl Iterator<Item = &PauliString<T>> {
        self.generators.iter().flat_map(|g| g.strings.iter())
    }

    pub fn term_count(&self) -> usize {
        self.generators.iter().map(|g| g.strings.len()).sum()
    }

    pub fn intra_commuting(&self) -> bool {
        self.intra_commuting
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Boundary {
    #[default]
    Open,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec<T> {
    len: usize,
    groups: Vec<TermGroup<T>>,
    symmetries: Vec<SymmetryCharge>,
    pub boundary: Boundary,
}

impl<T: Real> HamiltonianSpec<T> {
    /// Unvalidated construction; see [`validate_spec`].
    pub fn new(len: usize, groups: Vec<TermGroup<T>>, symmetries: Vec<SymmetryCharge>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidModel("chain must have at least one site".into()));
        }
        for g in &groups {
            if let Some(gen) = g.generators.iter().find(|gen| gen.last_site() >= len) {
                return Err(Error::SiteOutOfRange { site: gen.last_site(), len });
            }
        }
        Ok(Self { len, groups, symmetries, boundary: Boundary::Open })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn groups(&self) -> &[TermGroup<T>] {
        &self.groups
    }

    pub fn group(&self, label: &str) -> Option<&TermGroup<T>> {
        self.groups.iter().find(|g| g.label == label)
    }

    pub fn symmetries(&self) -> &[SymmetryCharge] {
        &self.symmetries
    }

    pub fn conserves(&self, q: SymmetryCharge) -> bool {
        self.symmetries.contains(&q)
    }

    pub fn terms(&self) -> impl Iterator<Item = &PauliString<T>> {
        self.groups.iter().flat_map(|g| g.terms())
    }

    pub fn term_count(&self) -> usize {
        self.groups.iter().map(|g| g.term_count()).sum()
    }

    pub fn dense(&self) -> Result<DMatrix<C<T>>> {
        let terms: Vec<_> = self.terms().cloned().collect();
        dense_matrix(&terms, self.len)
    }

    /// Whether every term has real matrix elements in the computational basis.
    pub fn is_real(&self) -> bool {
        self.terms().all(|t| t.is_real())
    }
}

impl<T: Real> fmt::Display for HamiltonianSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L={} groups=[", self.len)?;
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}:{}x{}", g.locality.name(), g.label, g.generators.len())?;
        }
        write!(f, "] symmetries={:?}", self.symmetries)
    }
}

fn chain<T: Real>(len: usize, width: usize, letters: &str, coefficient: T) -> Result<Vec<PauliString<T>>> {
    (0..=len - width).map(|j| PauliString::from_letters(letters, j, coefficient)).collect()
}

/// Ising chain `-lx sum X - lz sum Z - sum XX` with open boundaries.
pub fn build_ising<T: Real>(len: usize, lambda_x: T, lambda_z: T) -> Result<HamiltonianSpec<T>> {
    if len < 2 {
        return Err(Error::InvalidModel(format!("Ising chain needs L >= 2, got {len}")));
    }
    let mut groups = vec![TermGroup::of_strings("XX", Locality::NearestNeighbor, chain(len, 2, "XX", -T::one())?)];
    if lambda_z != T::zero() {
        groups.push(TermGroup::of_strings("Z", Locality::OnSite, chain(len, 1, "Z", -lambda_z)?));
    }
    let symmetries = if lambda_x == T::zero() {
        vec![SymmetryCharge::ProductZ]
    } else {
        groups.push(TermGroup::of_strings("X", Locality::OnSite, chain(len, 1, "X", -lambda_x)?));
        vec![]
    };
    HamiltonianSpec::new(len, groups, symmetries)
}

/// Ising chain with the three-site `XXZ + ZXX` interaction whose
/// tricritical point sits near `lzxx = 0.428`, `lz = 1`.
pub fn build_tci<T: Real>(len: usize, lambda_z: T, lambda_zxx: T) -> Result<HamiltonianSpec<T>> {
    if len < 3 {
        return Err(Error::InvalidModel(format!("three-site model needs L >= 3, got {len}")));
    }
    let mut groups = vec![TermGroup::of_strings("XX", Locality::NearestNeighbor, chain(len, 2, "XX", -T::one())?)];
    if lambda_z != T::zero() {
        groups.push(TermGroup::of_strings("Z", Locality::OnSite, chain(len, 1, "Z", -lambda_z)?));
    }
    if lambda_zxx != T::zero() {
        let mut strings = Vec::with_capacity(2 * (len - 2));
        for j in 0..len - 2 {
            strings.push(PauliString::from_letters("XXZ", j, lambda_zxx)?);
            strings.push(PauliString::from_letters("ZXX", j, lambda_zxx)?);
        }
        groups.push(TermGroup::of_strings("ZXX", Locality::NextNearestNeighbor, strings));
    }
    HamiltonianSpec::new(len, groups, vec![SymmetryCharge::ProductZ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XxzGrouping {
    /// Separate `XX`, `YY`, `ZZ` groups; conserves the parity only.
    ByPauli,
    /// `XX+YY` hopping generators and `ZZ`; also conserves the magnetization.
    U1,
}

/// XXZ chain `-sum (XX + YY + cos(gamma) ZZ)`.
pub fn build_xxz<T: Real>(len: usize, gamma: T, grouping: XxzGrouping) -> Result<HamiltonianSpec<T>> {
    if len < 2 {
        return Err(Error::InvalidModel(format!("XXZ chain needs L >= 2, got {len}")));
    }
    let zz = -gamma.cos();
    let mut groups = Vec::new();
    let symmetries = match grouping {
        XxzGrouping::ByPauli => {
            groups.push(TermGroup::of_strings("XX", Locality::NearestNeighbor, chain(len, 2, "XX", -T::one())?));
            groups.push(TermGroup::of_strings("YY", Locality::NearestNeighbor, chain(len, 2, "YY", -T::one())?));
            vec![SymmetryCharge::ProductZ]
        }
        XxzGrouping::U1 => {
            let gens = (0..len - 1)
                .map(|j| {
                    Generator::sum(
                        j,
                        vec![
                            PauliString::from_letters("XX", j, -T::one())?,
                            PauliString::from_letters("YY", j, -T::one())?,
                        ],
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            groups.push(TermGroup::new("XX+YY", Locality::NearestNeighbor, gens));
            vec![SymmetryCharge::SumZ, SymmetryCharge::ProductZ]
        }
    };
    if zz != T::zero() {
        groups.push(TermGroup::of_strings("ZZ", Locality::NearestNeighbor, chain(len, 2, "ZZ", zz)?));
    }
    HamiltonianSpec::new(len, groups, symmetries)
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct GroupStatus {
    pub label: String,
    pub locality: Locality,
    pub term_count: usize,
    pub intra_commuting: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct ValidationReport {
    pub groups: Vec<GroupStatus>,
    pub symmetries: Vec<(SymmetryCharge, bool)>,
    pub total_terms: usize,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Groups whose sublayer needs a Trotter product.
    pub fn non_commuting(&self) -> impl Iterator<Item = &GroupStatus> {
        self.groups.iter().filter(|g| !g.intra_commuting)
    }
}

/// Report grouping properties and check every declared symmetry against
/// every generator. Violations are collected, not raised.
pub fn validate_spec<T: Real>(spec: &HamiltonianSpec<T>) -> ValidationReport {
    let groups = spec
        .groups
        .iter()
        .map(|g| GroupStatus {
            label: g.label.clone(),
            locality: g.locality,
            term_count: g.term_count(),
            intra_commuting: g.intra_commuting,
        })
        .collect();
    let mut violations = Vec::new();
    let symmetries = spec
        .symmetries
        .iter()
        .map(|&q| {
            let mut ok = true;
            for g in &spec.groups {
                for gen in &g.generators {
                    if !generator_preserves(q, gen.strings()) {
                        ok = false;
                        violations.push(format!(
                            "{q:?} broken by group {} generator at site {}",
                            g.label, gen.site
                        ));
                    }
                }
            }
            (q, ok)
        })
        .collect();
    ValidationReport { groups, symmetries, total_terms: spec.term_count(), violations }
}
