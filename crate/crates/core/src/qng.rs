//! Quantum natural gradient training of an [`Ansatz`].
//!
//! With `dpsi/dtheta_p = -i phi_p`, where `phi_p` collects `w U_{>=g} G_g psi_g`
//! over the gates `g` driven by parameter `p`, the metric is
//! `g_pq = Re(<phi_p|phi_q> - <phi_p|psi><psi|phi_q>)`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{forward_states, Ansatz, ForwardCache, InvariantMonitor, ParameterVector, DEFAULT_CACHE_CAP_BYTES};
use crate::error::{Error, Result};
use crate::model::HamiltonianSpec;
use crate::operators::SymmetryCharge;
use crate::scalar::{inner, modulus, Real, C};
use crate::statevector::State;

/// Tangent vectors `phi_p` at the current parameters, plus the output state.
#[derive(Clone, Debug)]
pub struct Tangents<T> {
    pub phi: Vec<State<T>>,
    pub psi: State<T>,
}

fn tangent_from_cache<T: Real>(a: &Ansatz<T>, theta: &ParameterVector<T>, cache: &ForwardCache<T>, p: usize) -> State<T> {
    let total = a.gates().len();
    let mut acc: Option<State<T>> = None;
    for &g in a.param_gates(p) {
        let mut chi = cache.before_gate(g).clone();
        a.apply_gate_generator(g, &mut chi);
        a.apply_range(g..total, theta, &mut chi);
        let w = a.gates()[g].weight;
        match acc.as_mut() {
            None => {
                if w != T::one() {
                    chi.amplitudes_mut().iter_mut().for_each(|z| *z = *z * w);
                }
                acc = Some(chi);
            }
            Some(sum) => {
                sum.amplitudes_mut().iter_mut().zip(chi.amplitudes()).for_each(|(s, c)| *s += *c * w);
            }
        }
    }
    acc.expect("every parameter drives at least one gate")
}

/// Tangents by walking the circuit backwards from the output state. Uses
/// `O(P)` states and no forward cache.
fn tangents_streamed<T: Real>(a: &Ansatz<T>, theta: &ParameterVector<T>, psi0: &State<T>) -> Result<Tangents<T>> {
    let psi = crate::circuit::apply_circuit(a, theta, psi0)?;
    let total = a.gates().len();
    let mut phi: Vec<Option<State<T>>> = vec![None; a.num_params()];
    let mut before = psi.clone();
    for g in (0..total).rev() {
        a.unapply_gate(g, theta, &mut before);
        let mut chi = before.clone();
        a.apply_gate_generator(g, &mut chi);
        a.apply_range(g..total, theta, &mut chi);
        let gate = a.gates()[g];
        let w = gate.weight;
        match phi[gate.param].as_mut() {
            None => {
                chi.amplitudes_mut().iter_mut().for_each(|z| *z = *z * w);
                phi[gate.param] = Some(chi);
            }
            Some(sum) => sum.amplitudes_mut().iter_mut().zip(chi.amplitudes()).for_each(|(s, c)| *s += *c * w),
        }
    }
    Ok(Tangents { phi: phi.into_iter().map(Option::unwrap).collect(), psi })
}

/// All tangent vectors. Uses the forward cache when it fits in `cache_cap`
/// bytes and otherwise recomputes prefixes by uncomputing gates.
pub fn tangent_states<T: Real>(
    a: &Ansatz<T>,
    theta: &ParameterVector<T>,
    psi0: &State<T>,
    cache_cap: usize,
) -> Result<Tangents<T>> {
    match forward_states(a, theta, psi0, cache_cap, None) {
        Ok(cache) => Ok(tangents_with_cache(a, theta, cache)),
        Err(Error::CacheTooLarge { needed, cap }) => {
            log::debug!("forward cache needs {needed} bytes (cap {cap}); streaming tangents");
            tangents_streamed(a, theta, psi0)
        }
        Err(e) => Err(e),
    }
}

fn tangents_with_cache<T: Real>(a: &Ansatz<T>, theta: &ParameterVector<T>, cache: ForwardCache<T>) -> Tangents<T> {
    let phi = (0..a.num_params())
        .into_par_iter()
        .map(|p| tangent_from_cache(a, theta, &cache, p))
        .collect();
    Tangents { phi, psi: cache.into_final() }
}

/// Column block width for the Gram products.
const GRAM_BLOCK: usize = 64;

/// Real part of the quantum geometric tensor.
///
/// `Re<phi_p|phi_q>` is the real dot product of the interleaved `(re, im)`
/// vectors, so the Gram matrix is assembled block by block over the upper
/// triangle with real matrix products and mirrored.
pub fn metric<T: Real>(t: &Tangents<T>) -> DMatrix<T> {
    let n = t.phi.len();
    let proj: Vec<C<T>> = t.phi.iter().map(|phi| t.psi.inner(phi)).collect();
    let rows = 2 * t.psi.dim();
    let mut data = Vec::with_capacity(rows * n);
    for phi in &t.phi {
        data.extend(phi.amplitudes().iter().flat_map(|z| [z.re, z.im]));
    }
    let m = DMatrix::from_vec(rows, n, data);
    let starts: Vec<usize> = (0..n).step_by(GRAM_BLOCK).collect();
    let width = |s: usize| GRAM_BLOCK.min(n - s);
    let left: Vec<DMatrix<T>> = starts.iter().map(|&s| m.columns(s, width(s)).transpose()).collect();
    let mut g = DMatrix::zeros(n, n);
    for (bi, &si) in starts.iter().enumerate() {
        for &sj in &starts[bi..] {
            let block = &left[bi] * m.columns(sj, width(sj));
            for r in 0..block.nrows() {
                let p = si + r;
                for c in 0..block.ncols() {
                    let q = sj + c;
                    if q >= p {
                        let v = block[(r, c)] - (proj[p].conj() * proj[q]).re;
                        g[(p, q)] = v;
                        g[(q, p)] = v;
                    }
                }
            }
        }
    }
    g
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `-|<target|psi>|^2`
    #[default]
    Overlap,
    /// `<psi|H|psi>`
    Energy,
}

/// What the optimizer minimizes.
#[derive(Clone, Copy, Debug)]
pub enum Objective<'a, T> {
    Overlap(&'a State<T>),
    Energy(&'a HamiltonianSpec<T>),
}

impl<T: Real> Objective<'_, T> {
    pub fn cost(&self, psi: &State<T>) -> Result<T> {
        match self {
            Objective::Overlap(target) => Ok(-crate::scalar::abs2(target.inner(psi))),
            Objective::Energy(spec) => psi.expectation(spec),
        }
    }

    /// Gradient from tangent vectors.
    pub fn gradient(&self, t: &Tangents<T>) -> Vec<T> {
        let two = T::lit(2.0);
        match self {
            Objective::Overlap(target) => {
                // d/dp -|<T|psi>|^2 = -2 Re(<psi|T><T|dpsi>) with dpsi = -i phi
                let back = t.psi.inner(target);
                t.phi.par_iter().map(|phi| -two * (back * target.inner(phi)).im).collect()
            }
            Objective::Energy(spec) => {
                // d/dp <psi|H|psi> = 2 Re<dpsi|H psi> = -2 Im<phi|H psi>
                let h_psi = t.psi.apply_hamiltonian(spec);
                t.phi.par_iter().map(|phi| -two * inner(phi.amplitudes(), &h_psi).im).collect()
            }
        }
    }
}

/// Result of one natural-gradient step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<T> {
    pub theta: ParameterVector<T>,
    pub delta: Vec<T>,
    pub step_norm: T,
    /// Regularizer actually used (raised tenfold once on a failed factorization).
    pub epsilon: T,
}

/// `theta - eta (g + eps I)^{-1} grad`, solved by Cholesky.
pub fn qng_step<T: Real>(
    theta: &ParameterVector<T>,
    g: &DMatrix<T>,
    grad: &[T],
    eta: T,
    epsilon: T,
) -> Result<Step<T>> {
    let n = theta.len();
    if g.nrows() != n || g.ncols() != n || grad.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grad.len() });
    }
    let rhs = DVector::from_column_slice(grad);
    let mut eps = epsilon;
    let mut delta = None;
    for attempt in 0..2 {
        let reg = g + DMatrix::identity(n, n) * eps;
        if let Some(ch) = Cholesky::new(reg) {
            let x = ch.solve(&rhs);
            if x.iter().all(|v| v.is_finite()) {
                delta = Some(x);
                break;
            }
        }
        if attempt == 0 {
            log::warn!("metric factorization failed at epsilon {eps}; retrying with {}", eps * T::lit(10.0));
            eps *= T::lit(10.0);
        }
    }
    let delta = delta.ok_or_else(|| Error::Solve(format!("metric not positive definite at epsilon {eps}")))?;
    let delta: Vec<T> = delta.iter().map(|d| eta * *d).collect();
    let values = theta.values.iter().zip(&delta).map(|(t, d)| *t - *d).collect();
    let step_norm = delta.iter().fold(T::zero(), |a, d| a + *d * *d).sqrt();
    Ok(Step { theta: ParameterVector::new(values), delta, step_norm, epsilon: eps })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Restart {
    /// All angles start at `init_angle`.
    #[default]
    None,
    /// Angles drawn uniformly from `[-amplitude, amplitude]`.
    Random { seed: u64, amplitude: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub eta: f64,
    pub epsilon: f64,
    pub cutoff: f64,
    pub max_iters: usize,
    pub init_angle: f64,
    pub restart: Restart,
    pub cost: CostKind,
    /// Stop after this many consecutive steps shorter than `stall_tol`.
    pub stall_patience: usize,
    pub stall_tol: f64,
    pub check_invariants: bool,
    pub trace_entropy: bool,
    pub cache_cap_bytes: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 0.25,
            epsilon: 0.01,
            cutoff: 0.99,
            max_iters: 500,
            init_angle: 0.01,
            restart: Restart::None,
            cost: CostKind::Overlap,
            stall_patience: 5,
            stall_tol: 1e-10,
            check_invariants: false,
            trace_entropy: true,
            cache_cap_bytes: DEFAULT_CACHE_CAP_BYTES,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad("eta must lie in (0, 1]");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return bad("cutoff must lie in (0, 1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !self.init_angle.is_finite() {
            return bad("init_angle must be finite");
        }
        if let Restart::Random { amplitude, .. } = self.restart {
            if !(amplitude.is_finite() && amplitude > 0.0) {
                return bad("restart amplitude must be positive");
            }
        }
        if self.stall_patience == 0 {
            return bad("stall_patience must be at least 1");
        }
        Ok(())
    }

    pub fn initial_params<T: Real>(&self, a: &Ansatz<T>) -> ParameterVector<T> {
        match self.restart {
            Restart::None => a.constant_params(T::lit(self.init_angle)),
            Restart::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                ParameterVector::new((0..a.num_params()).map(|_| T::lit(rng.gen_range(-amplitude..=amplitude))).collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub cost: f64,
    /// `NaN` without a target state.
    pub fidelity: f64,
    pub energy: f64,
    pub entropy: Option<f64>,
    pub grad_norm: f64,
    pub step_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizationTrace<T> {
    pub rows: Vec<TraceRow>,
    pub status: Status,
    pub theta: ParameterVector<T>,
    pub state: State<T>,
    /// Natural-gradient steps taken.
    pub iterations: usize,
    pub epsilon_escalations: usize,
    pub invariants: Option<InvariantMonitor>,
    /// Smallest metric eigenvalue and largest asymmetry seen, when invariants are checked.
    pub metric_checks: Option<MetricChecks>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricChecks {
    pub min_eigenvalue: f64,
    pub max_asymmetry: f64,
}

impl MetricChecks {
    pub fn merge(&mut self, other: &Self) {
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.max_asymmetry = self.max_asymmetry.max(other.max_asymmetry);
    }
}

impl<T: Real> OptimizationTrace<T> {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("trace has at least one row")
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

fn definite_charge<T: Real>(psi: &State<T>, q: SymmetryCharge) -> Option<f64> {
    let v = psi.charge_expectation(q).as_f64();
    let r = v.round();
    ((v - r).abs() < 1e-8).then_some(r)
}

/// Train `a` from `psi0`. With [`CostKind::Overlap`] the target is required;
/// with [`CostKind::Energy`] the cost is the energy of the ansatz Hamiltonian
/// and the target (if any) is only used for the fidelity column and cutoff.
pub fn optimize<T: Real>(
    a: &Ansatz<T>,
    psi0: &State<T>,
    target: Option<&State<T>>,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace<T>> {
    cfg.validate()?;
    if let Some(t) = target {
        if t.len() != psi0.len() {
            return Err(Error::DimensionMismatch { expected: psi0.len(), got: t.len() });
        }
        for &q in a.spec().symmetries() {
            if let (Some(c0), Some(ct)) = (definite_charge(psi0, q), definite_charge(t, q)) {
                if c0 != ct {
                    return Err(Error::SectorMismatch(format!("initial charge {c0} but target charge {ct} for {q:?}")));
                }
            }
        }
    }
    let objective = match (cfg.cost, target) {
        (CostKind::Overlap, Some(t)) => Objective::Overlap(t),
        (CostKind::Overlap, None) => return Err(Error::Config("overlap cost needs a target state".into())),
        (CostKind::Energy, _) => Objective::Energy(a.spec()),
    };
    let eta = T::lit(cfg.eta);
    let mut eps = T::lit(cfg.epsilon);
    let mut theta = cfg.initial_params(a);
    let mut rows = Vec::new();
    let mut monitor = cfg.check_invariants.then(InvariantMonitor::default);
    let mut metric_checks = cfg.check_invariants.then_some(MetricChecks { min_eigenvalue: f64::INFINITY, max_asymmetry: 0.0 });
    let mut escalations = 0;
    let mut short_steps = 0;
    let mut t = 0;
    loop {
        let mut step_monitor = InvariantMonitor::default();
        let cache = match forward_states(a, &theta, psi0, cfg.cache_cap_bytes, Some(&mut step_monitor)) {
            Ok(c) => Some(c),
            Err(Error::CacheTooLarge { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(m) = monitor.as_mut() {
            if cache.is_none() {
                crate::circuit::apply_circuit_monitored(a, &theta, psi0, &mut step_monitor)?;
            }
            m.merge(&step_monitor);
        }
        let psi = match &cache {
            Some(c) => c.final_state().clone(),
            None => crate::circuit::apply_circuit(a, &theta, psi0)?,
        };
        let cost = objective.cost(&psi)?;
        let fidelity = target.map_or(f64::NAN, |tg| modulus(tg.inner(&psi)).as_f64());
        let energy = psi.expectation(a.spec())?.as_f64();
        let entropy = if cfg.trace_entropy && psi.len() % 2 == 0 {
            Some(psi.half_chain_entropy()?.as_f64())
        } else {
            None
        };
        let mut row = TraceRow { t, cost: cost.as_f64(), fidelity, energy, entropy, grad_norm: 0.0, step_norm: 0.0 };
        if !row.cost.is_finite() || !row.energy.is_finite() {
            return Err(Error::Solve(format!("non-finite cost at iteration {t}")));
        }
        let status = if fidelity >= cfg.cutoff {
            Some(Status::Converged)
        } else if short_steps >= cfg.stall_patience {
            Some(Status::Stalled)
        } else if t >= cfg.max_iters {
            Some(Status::MaxIters)
        } else {
            None
        };
        if let Some(status) = status {
            rows.push(row);
            log::info!("{status:?} after {t} steps, fidelity {fidelity:.6}, energy {energy:.10}");
            return Ok(OptimizationTrace {
                rows,
                status,
                theta,
                state: psi,
                iterations: t,
                epsilon_escalations: escalations,
                invariants: monitor,
                metric_checks,
            });
        }
        let tangents = match cache {
            Some(c) => tangents_with_cache(a, &theta, c),
            None => tangents_streamed(a, &theta, psi0)?,
        };
        let g = metric(&tangents);
        if let Some(mc) = metric_checks.as_mut() {
            let asym = (&g - g.transpose()).amax().as_f64();
            let min = g.clone().symmetric_eigenvalues().min().as_f64();
            mc.max_asymmetry = mc.max_asymmetry.max(asym);
            mc.min_eigenvalue = mc.min_eigenvalue.min(min);
        }
        let grad = objective.gradient(&tangents);
        row.grad_norm = grad.iter().fold(0.0, |s, x| s + x.as_f64().powi(2)).sqrt();
        let step = qng_step(&theta, &g, &grad, eta, eps)?;
        if step.epsilon != eps {
            escalations += 1;
            eps = step.epsilon;
        }
        row.step_norm = step.step_norm.as_f64();
        short_steps = if row.step_norm < cfg.stall_tol { short_steps + 1 } else { 0 };
        log::trace!("t={t} cost={:.12} fidelity={fidelity:.8} |grad|={:.3e}", row.cost, row.grad_norm);
        rows.push(row);
        theta = step.theta;
        t += 1;
    }
}
