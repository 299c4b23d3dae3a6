//! Layered symmetry-conserving ansatz.
//!
//! Every layer applies one sublayer per term group, nearest-neighbour groups
//! first, then on-site groups, then next-nearest-neighbour groups. Each
//! generator of a group gets its own angle in every layer (unless angles are
//! tied across sites). Groups whose generators do not commute are applied as
//! a symmetric second-order Trotter product by default.
//!
//! Generators keep the sign of their Hamiltonian term but not the coupling
//! strength (`-X_j` for a `-lambda X_j` term) unless coupling weights are
//! requested. The circuit is flattened into a gate list once at construction.
//! A gate rotates one generator by `weight * theta[param]`; a parameter owns
//! one gate, or two half-angle gates inside a second-order Trotter sublayer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_spec, Generator, HamiltonianSpec, TermGroup};
use crate::operators::{generator_preserves, SymmetryCharge};
use crate::scalar::{Real, C};
use crate::statevector::State;

pub const ANGLES_SCHEMA: &str = "scqaoa/angles/v1";

/// Default cap on the forward state cache.
pub const DEFAULT_CACHE_CAP_BYTES: usize = 1 << 30;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrotterOrder {
    First,
    #[default]
    Second,
}

impl TrotterOrder {
    pub fn from_int(n: u8) -> Result<Self> {
        match n {
            1 => Ok(TrotterOrder::First),
            2 => Ok(TrotterOrder::Second),
            _ => Err(Error::Config(format!("Trotter order must be 1 or 2, got {n}"))),
        }
    }

    pub fn as_int(self) -> u8 {
        match self {
            TrotterOrder::First => 1,
            TrotterOrder::Second => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzOptions {
    /// Product formula for groups whose generators do not commute.
    pub trotter_order: TrotterOrder,
    /// One angle per (layer, group) instead of per (layer, group, site).
    pub tie_angles: bool,
    /// Scale generators by their coupling instead of normalizing them.
    pub coupling_weighted: bool,
}

/// One rotation `exp(-i weight theta[param] G)` in a Trotterized sublayer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrotterGate<T> {
    /// Generator index inside the group.
    pub generator: usize,
    /// Angle multiplier.
    pub weight: T,
}

/// `gen` divided by the magnitude of its first coefficient.
fn unit_generator<T: Real>(gen: &Generator<T>) -> Result<Generator<T>> {
    let scale = gen.strings()[0].coefficient().abs();
    let strings = gen
        .strings()
        .iter()
        .map(|s| s.with_coefficient(s.coefficient() / scale))
        .collect::<Result<Vec<_>>>()?;
    if strings.len() == 1 {
        Ok(Generator::single(strings.into_iter().next().unwrap()))
    } else {
        Generator::sum(gen.site, strings)
    }
}

/// Gate sequence for one sublayer of `group`.
///
/// Commuting groups (and first order) give the plain ascending product at
/// full angle. Second order gives the ascending product at half angles
/// followed by the descending product at half angles.
pub fn trotter_sublayer<T: Real>(group: &TermGroup<T>, order: TrotterOrder) -> Vec<TrotterGate<T>> {
    let n = group.generators().len();
    if group.intra_commuting() || order == TrotterOrder::First {
        return (0..n).map(|generator| TrotterGate { generator, weight: T::one() }).collect();
    }
    let half = T::lit(0.5);
    (0..n)
        .chain((0..n).rev())
        .map(|generator| TrotterGate { generator, weight: half })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate<T> {
    pub layer: usize,
    pub group: usize,
    pub generator: usize,
    pub param: usize,
    pub weight: T,
}

/// Position of one angle in the circuit. `term` is `None` for tied angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub layer: usize,
    pub group: usize,
    pub term: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Ansatz<T> {
    spec: HamiltonianSpec<T>,
    /// Rotation generators per group, parallel to the `HamiltonianSpec` generators.
    generators: Vec<Vec<Generator<T>>>,
    layers: usize,
    options: AnsatzOptions,
    /// Group indices in application order within a layer.
    sublayer_order: Vec<usize>,
    gates: Vec<Gate<T>>,
    params: Vec<ParamKey>,
    /// For each parameter, the gate indices it drives (ascending).
    param_gates: Vec<Vec<usize>>,
    /// Gate index one past the end of each (layer, sublayer).
    sublayer_ends: Vec<usize>,
}

impl<T: Real> Ansatz<T> {
    pub fn new(spec: &HamiltonianSpec<T>, layers: usize) -> Result<Self> {
        Self::with_options(spec, layers, AnsatzOptions::default())
    }

    pub fn with_options(spec: &HamiltonianSpec<T>, layers: usize, options: AnsatzOptions) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("circuit needs at least one layer".into()));
        }
        if spec.groups().iter().all(|g| g.generators().is_empty()) {
            return Err(Error::InvalidModel("Hamiltonian has no terms".into()));
        }
        let report = validate_spec(spec);
        if !report.is_valid() {
            return Err(Error::InvalidModel(report.violations.join("; ")));
        }
        let mut sublayer_order: Vec<usize> = (0..spec.groups().len())
            .filter(|&g| !spec.groups()[g].generators().is_empty())
            .collect();
        // stable: declaration order is kept inside a locality class
        sublayer_order.sort_by_key(|&g| spec.groups()[g].locality.sublayer_rank());

        let mut gates = Vec::new();
        let mut params = Vec::new();
        let mut param_gates: Vec<Vec<usize>> = Vec::new();
        let mut sublayer_ends = Vec::new();
        for layer in 0..layers {
            for &group in &sublayer_order {
                let tg = &spec.groups()[group];
                let base = params.len();
                if options.tie_angles {
                    params.push(ParamKey { layer, group, term: None });
                    param_gates.push(Vec::new());
                } else {
                    for term in 0..tg.generators().len() {
                        params.push(ParamKey { layer, group, term: Some(term) });
                        param_gates.push(Vec::new());
                    }
                }
                for tgate in trotter_sublayer(tg, options.trotter_order) {
                    let param = if options.tie_angles { base } else { base + tgate.generator };
                    param_gates[param].push(gates.len());
                    gates.push(Gate { layer, group, generator: tgate.generator, param, weight: tgate.weight });
                }
                sublayer_ends.push(gates.len());
            }
        }
        let generators = spec
            .groups()
            .iter()
            .map(|g| {
                g.generators()
                    .iter()
                    .map(|gen| if options.coupling_weighted { Ok(gen.clone()) } else { unit_generator(gen) })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: spec.clone(), generators, layers, options, sublayer_order, gates, params, param_gates, sublayer_ends })
    }

    pub fn spec(&self) -> &HamiltonianSpec<T> {
        &self.spec
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn options(&self) -> AnsatzOptions {
        self.options
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn gates(&self) -> &[Gate<T>] {
        &self.gates
    }

    /// Generator rotated by gate `g`.
    pub fn generator(&self, g: usize) -> &Generator<T> {
        let gate = &self.gates[g];
        &self.generators[gate.group][gate.generator]
    }

    pub fn sublayer_order(&self) -> &[usize] {
        &self.sublayer_order
    }

    pub fn sublayer_labels(&self) -> Vec<&str> {
        self.sublayer_order.iter().map(|&g| self.spec.groups()[g].label.as_str()).collect()
    }

    pub fn param_key(&self, p: usize) -> ParamKey {
        self.params[p]
    }

    /// Flat index of `(layer, group label, term)`.
    pub fn param_index(&self, layer: usize, group: &str, term: Option<usize>) -> Option<usize> {
        let g = self.spec.groups().iter().position(|tg| tg.label == group)?;
        self.params.iter().position(|k| *k == ParamKey { layer, group: g, term })
    }

    pub fn param_gates(&self, p: usize) -> &[usize] {
        &self.param_gates[p]
    }

    /// Gate index where parameter `p` first acts.
    pub fn first_gate(&self, p: usize) -> usize {
        self.param_gates[p][0]
    }

    /// Gate index one past the last gate of each layer.
    pub fn layer_ends(&self) -> Vec<usize> {
        let per_layer = self.sublayer_order.len();
        (1..=self.layers).map(|l| self.sublayer_ends[l * per_layer - 1]).collect()
    }

    pub fn sublayer_ends(&self) -> &[usize] {
        &self.sublayer_ends
    }

    pub fn constant_params(&self, value: T) -> ParameterVector<T> {
        ParameterVector { values: vec![value; self.num_params()] }
    }

    fn check(&self, theta: &ParameterVector<T>, psi0: &State<T>) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch { expected: self.num_params(), got: theta.len() });
        }
        if psi0.len() != self.spec.len() {
            return Err(Error::DimensionMismatch { expected: self.spec.len(), got: psi0.len() });
        }
        Ok(())
    }

    /// Apply gate `g` to `psi`.
    #[inline]
    pub fn apply_gate(&self, g: usize, theta: &ParameterVector<T>, psi: &mut State<T>) {
        let gate = &self.gates[g];
        psi.apply_generator(self.generator(g), gate.weight * theta.values[gate.param]);
    }

    /// Apply the inverse of gate `g`.
    pub fn unapply_gate(&self, g: usize, theta: &ParameterVector<T>, psi: &mut State<T>) {
        let gate = &self.gates[g];
        psi.apply_generator(self.generator(g), -gate.weight * theta.values[gate.param]);
    }

    /// Apply generator `G` of gate `g` (no exponential) to `psi`.
    pub fn apply_gate_generator(&self, g: usize, psi: &mut State<T>) {
        psi.apply_generator_op(self.generator(g));
    }

    /// Apply gates `range` in order.
    pub fn apply_range(&self, range: std::ops::Range<usize>, theta: &ParameterVector<T>, psi: &mut State<T>) {
        for g in range {
            self.apply_gate(g, theta, psi);
        }
    }
}

/// Flattened angle vector, layer-major, then group in sublayer order, then
/// generator (site) ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector<T> {
    pub values: Vec<T>,
}

impl<T: Real> ParameterVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, x| a + *x * *x).sqrt()
    }
}

/// Deviation of norm and declared charges observed after every sublayer.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InvariantMonitor {
    pub checks: usize,
    pub max_norm_error: f64,
    pub max_charge_drift: f64,
}

impl InvariantMonitor {
    fn observe<T: Real>(&mut self, psi: &State<T>, charges: &[(SymmetryCharge, T)]) {
        self.checks += 1;
        self.max_norm_error = self.max_norm_error.max((psi.norm() - T::one()).abs().as_f64());
        for &(q, q0) in charges {
            self.max_charge_drift = self.max_charge_drift.max((psi.charge_expectation(q) - q0).abs().as_f64());
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.checks += other.checks;
        self.max_norm_error = self.max_norm_error.max(other.max_norm_error);
        self.max_charge_drift = self.max_charge_drift.max(other.max_charge_drift);
    }
}

fn declared_charges<T: Real>(a: &Ansatz<T>, psi0: &State<T>) -> Vec<(SymmetryCharge, T)> {
    a.spec.symmetries().iter().map(|&q| (q, psi0.charge_expectation(q))).collect()
}

/// `U(theta) psi0`.
pub fn apply_circuit<T: Real>(a: &Ansatz<T>, theta: &ParameterVector<T>, psi0: &State<T>) -> Result<State<T>> {
    a.check(theta, psi0)?;
    let mut psi = psi0.clone();
    a.apply_range(0..a.gates.len(), theta, &mut psi);
    Ok(psi)
}

/// Like [`apply_circuit`], checking norm and declared charges after every sublayer.
pub fn apply_circuit_monitored<T: Real>(
    a: &Ansatz<T>,
    theta: &ParameterVector<T>,
    psi0: &State<T>,
    monitor: &mut InvariantMonitor,
) -> Result<State<T>> {
    a.check(theta, psi0)?;
    let charges = declared_charges(a, psi0);
    let mut psi = psi0.clone();
    let mut start = 0;
    for &end in &a.sublayer_ends {
        a.apply_range(start..end, theta, &mut psi);
        monitor.observe(&psi, &charges);
        start = end;
    }
    Ok(psi)
}

/// States before every gate, plus the final state.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    states: Vec<State<T>>,
    first_gate: Vec<usize>,
}

impl<T: Real> ForwardCache<T> {
    /// State immediately before the first gate of parameter `p`; `p = P`
    /// gives the final state.
    pub fn before_param(&self, p: usize) -> &State<T> {
        match self.first_gate.get(p) {
            Some(&g) => &self.states[g],
            None => self.final_state(),
        }
    }

    /// State immediately before gate `g`; `g = G` gives the final state.
    pub fn before_gate(&self, g: usize) -> &State<T> {
        &self.states[g]
    }

    pub fn final_state(&self) -> &State<T> {
        self.states.last().unwrap()
    }

    pub fn into_final(mut self) -> State<T> {
        self.states.pop().unwrap()
    }
}

pub fn cache_bytes<T>(a: &Ansatz<T>, len: usize) -> usize {
    (a.gates.len() + 1) * (std::mem::size_of::<C<T>>() << len)
}

/// Forward evolution keeping every intermediate state. Fails with
/// [`Error::CacheTooLarge`] when the cache would exceed `cap_bytes`; callers
/// then fall back to recomputation.
pub fn forward_states<T: Real>(
    a: &Ansatz<T>,
    theta: &ParameterVector<T>,
    psi0: &State<T>,
    cap_bytes: usize,
    mut monitor: Option<&mut InvariantMonitor>,
) -> Result<ForwardCache<T>> {
    a.check(theta, psi0)?;
    let needed = cache_bytes(a, psi0.len());
    if needed > cap_bytes {
        return Err(Error::CacheTooLarge { needed, cap: cap_bytes });
    }
    let charges = declared_charges(a, psi0);
    let mut states = Vec::with_capacity(a.gates.len() + 1);
    let mut psi = psi0.clone();
    let mut next_end = a.sublayer_ends.iter().peekable();
    for g in 0..a.gates.len() {
        states.push(psi.clone());
        a.apply_gate(g, theta, &mut psi);
        if next_end.peek() == Some(&&(g + 1)) {
            next_end.next();
            if let Some(m) = monitor.as_deref_mut() {
                m.observe(&psi, &charges);
            }
        }
    }
    states.push(psi);
    let first_gate = (0..a.num_params()).map(|p| a.first_gate(p)).collect();
    Ok(ForwardCache { states, first_gate })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub layer: usize,
    pub fidelity: f64,
    pub energy: f64,
    /// `None` for odd chains.
    pub entropy: Option<f64>,
}

/// Fidelity, energy and half-chain entropy after every full layer.
pub fn layer_profile<T: Real>(
    a: &Ansatz<T>,
    theta: &ParameterVector<T>,
    psi0: &State<T>,
    target: &State<T>,
) -> Result<Vec<LayerRow>> {
    a.check(theta, psi0)?;
    let mut psi = psi0.clone();
    let mut start = 0;
    let mut rows = Vec::with_capacity(a.layers);
    for (l, end) in a.layer_ends().into_iter().enumerate() {
        a.apply_range(start..end, theta, &mut psi);
        start = end;
        let entropy = if psi.len() % 2 == 0 { Some(psi.half_chain_entropy()?.as_f64()) } else { None };
        rows.push(LayerRow {
            layer: l + 1,
            fidelity: crate::scalar::modulus(target.inner(&psi)).as_f64(),
            energy: psi.expectation(&a.spec)?.as_f64(),
            entropy,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleEntry {
    pub index: usize,
    pub layer: usize,
    pub group: String,
    /// Generator index inside the group; absent for tied angles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnglesFile {
    pub schema: String,
    pub sites: usize,
    pub layers: usize,
    pub tied: bool,
    pub trotter_order: u8,
    pub sublayers: Vec<String>,
    pub num_params: usize,
    pub angles: Vec<AngleEntry>,
}

impl AnglesFile {
    pub fn from_params<T: Real>(a: &Ansatz<T>, theta: &ParameterVector<T>) -> Self {
        let angles = (0..a.num_params())
            .map(|p| {
                let key = a.params[p];
                let group = &a.spec.groups()[key.group];
                AngleEntry {
                    index: p,
                    layer: key.layer + 1,
                    group: group.label.clone(),
                    term: key.term,
                    site: key.term.map(|t| group.generators()[t].site),
                    value: theta.values[p].as_f64(),
                }
            })
            .collect();
        Self {
            schema: ANGLES_SCHEMA.into(),
            sites: a.spec.len(),
            layers: a.layers,
            tied: a.options.tie_angles,
            trotter_order: a.options.trotter_order.as_int(),
            sublayers: a.sublayer_labels().into_iter().map(String::from).collect(),
            num_params: a.num_params(),
            angles,
        }
    }

    /// Map the entries back onto the layout of `a`, checking that the file
    /// describes the same circuit.
    pub fn to_params<T: Real>(&self, a: &Ansatz<T>) -> Result<ParameterVector<T>> {
        if self.schema != ANGLES_SCHEMA {
            return Err(Error::Config(format!("unknown angles schema {:?}", self.schema)));
        }
        let labels: Vec<String> = a.sublayer_labels().into_iter().map(String::from).collect();
        if self.sites != a.spec.len()
            || self.layers != a.layers
            || self.tied != a.options.tie_angles
            || self.sublayers != labels
            || self.num_params != a.num_params()
        {
            return Err(Error::Config("angles file does not match the circuit layout".into()));
        }
        let mut values = vec![None; a.num_params()];
        for e in &self.angles {
            if e.layer == 0 {
                return Err(Error::Config("layers are numbered from 1".into()));
            }
            let p = a
                .param_index(e.layer - 1, &e.group, e.term)
                .ok_or_else(|| Error::Config(format!("no parameter for layer {} group {} term {:?}", e.layer, e.group, e.term)))?;
            if values[p].replace(T::lit(e.value)).is_some() {
                return Err(Error::Config(format!("duplicate angle for parameter {p}")));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(p, v)| v.ok_or_else(|| Error::Config(format!("missing angle for parameter {p}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParameterVector::new(values))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::harness::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Whether every generator of the ansatz commutes with charge `q`.
pub fn conserves<T: Real>(a: &Ansatz<T>, q: SymmetryCharge) -> bool {
    a.spec.groups().iter().all(|g| g.generators().iter().all(|gen| generator_preserves(q, gen.strings())))
}
