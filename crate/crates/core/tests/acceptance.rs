//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scqaoa::circuit::{apply_circuit, trotter_sublayer, Ansatz, ParameterVector, TrotterOrder, DEFAULT_CACHE_CAP_BYTES};
use scqaoa::eigensolver::{sector_spectrum, Parity};
use scqaoa::harness::{self, LayerPoint, LayerSweep, ModelKind, RunConfig};
use scqaoa::model::{build_ising, build_tci, build_xxz, HamiltonianSpec, XxzGrouping};
use scqaoa::operators::dense_matrix;
use scqaoa::qng::{metric, tangent_states, Objective};
use scqaoa::statevector::State;
use scqaoa::C;

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
}

/// Largest invariant deviations seen across every trained circuit.
#[derive(Default)]
struct Invariants {
    runs: usize,
    norm: f64,
    charge: f64,
    metric_min_eig: f64,
    metric_asym: f64,
    missing: usize,
}

impl Invariants {
    fn add(&mut self, norm: Option<f64>, charge: Option<f64>, min_eig: Option<f64>, asym: Option<f64>) {
        self.runs += 1;
        match (norm, charge) {
            (Some(n), Some(c)) => {
                self.norm = self.norm.max(n);
                self.charge = self.charge.max(c);
            }
            _ => self.missing += 1,
        }
        if let Some(e) = min_eig {
            self.metric_min_eig = self.metric_min_eig.min(e);
        }
        self.metric_asym = self.metric_asym.max(asym.unwrap_or(0.0));
    }

    fn add_point(&mut self, p: &LayerPoint) {
        self.add(p.max_norm_error, p.max_charge_drift, p.min_metric_eigenvalue, p.max_metric_asymmetry);
    }

    fn add_sweep(&mut self, s: &LayerSweep) {
        s.points.iter().for_each(|p| self.add_point(p));
    }

    fn add_summary(&mut self, s: &harness::Summary) {
        self.add(s.max_norm_error, s.max_charge_drift, s.min_metric_eigenvalue, s.max_metric_asymmetry);
    }
}

fn base_config(out: &std::path::Path) -> RunConfig {
    RunConfig { out: out.to_path_buf(), ..RunConfig::default() }
}

fn n_c_list(sweeps: &[(usize, &LayerSweep)]) -> String {
    sweeps
        .iter()
        .map(|(l, s)| format!("L={l}:{}", s.n_c.map_or("none".into(), |n| n.to_string())))
        .collect::<Vec<_>>()
        .join(" ")
}

fn critical_depth_law(out: &std::path::Path, inv: &mut Invariants) -> Outcome {
    let mut sweeps = Vec::new();
    for len in [6, 8, 10, 12] {
        let cfg = RunConfig { size: len, ..base_config(&out.join(format!("c1_L{len}"))) };
        let spec = cfg.build_spec(len).unwrap();
        let s = harness::sweep_layers(&cfg, &spec, 0.0, None, true).unwrap();
        inv.add_sweep(&s);
        sweeps.push((len, s));
    }
    let pass = sweeps.iter().all(|(l, s)| s.n_c.is_some_and(|n| n.abs_diff(l / 2) <= 1));
    let refs: Vec<_> = sweeps.iter().map(|(l, s)| (*l, s)).collect();
    Outcome { id: 1, pass, detail: format!("critical Ising N_c = L/2 +- 1: {}", n_c_list(&refs)) }
}

fn gapped_saturation(out: &std::path::Path, l14: &LayerSweep, inv: &mut Invariants) -> Outcome {
    let mut sweeps = Vec::new();
    for len in [10, 12] {
        let cfg = RunConfig { size: len, lambda_x: 0.06, ..base_config(&out.join(format!("c2_L{len}"))) };
        let spec = cfg.build_spec(len).unwrap();
        let s = harness::sweep_layers(&cfg, &spec, 0.06, None, true).unwrap();
        inv.add_sweep(&s);
        sweeps.push((len, s));
    }
    let mut refs: Vec<_> = sweeps.iter().map(|(l, s)| (*l, s)).collect();
    refs.push((14, l14));
    let ns: Option<Vec<usize>> = refs.iter().map(|(_, s)| s.n_c).collect();
    let pass = ns.is_some_and(|ns| ns.iter().max().unwrap() - ns.iter().min().unwrap() <= 1);
    Outcome { id: 2, pass, detail: format!("gapped N_c spread <= 1: {}", n_c_list(&refs)) }
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn tci_depth(out: &std::path::Path, inv: &mut Invariants) -> Outcome {
    let mut sweeps = Vec::new();
    for len in [8, 12] {
        let cfg = RunConfig { model: ModelKind::Tci, size: len, ..base_config(&out.join(format!("c4_L{len}"))) };
        let spec = cfg.build_spec(len).unwrap();
        let s = harness::sweep_layers(&cfg, &spec, 0.0, None, true).unwrap();
        inv.add_sweep(&s);
        sweeps.push((len, s));
    }
    let pass = sweeps.iter().all(|(l, s)| s.n_c.is_some_and(|n| n <= l.div_ceil(4) + 1));
    let refs: Vec<_> = sweeps.iter().map(|(l, s)| (*l, s)).collect();
    Outcome { id: 4, pass, detail: format!("tricritical N_c <= ceil(L/4) + 1: {}", n_c_list(&refs)) }
}

fn excited_states(out: &std::path::Path, inv: &mut Invariants) -> Outcome {
    let (len, layers) = (12, 6);
    let mut pass = true;
    let mut parts = Vec::new();
    for sector in [1i64, -1] {
        for index in [0, 1] {
            let cfg = RunConfig {
                size: len,
                sector,
                state_index: index,
                layers,
                ..base_config(&out.join(format!("c5_q{sector}_i{index}")))
            };
            let o = harness::cmd_prepare(&cfg).unwrap();
            inv.add_summary(&o.summary);
            pass &= o.summary.fidelity >= 0.99 && layers <= len;
            parts.push(format!("q={sector:+} i={index}: {:.4}", o.summary.fidelity));
        }
    }
    Outcome { id: 5, pass, detail: format!("L=12 excited states at N={layers}, fidelity >= 0.99: {}", parts.join(", ")) }
}

fn random_state(len: usize, rng: &mut ChaCha8Rng) -> State<f64> {
    let amps = (0..1 << len).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let mut s = State::from_amplitudes(len, amps).unwrap();
    s.normalize();
    s
}

fn model(index: usize, len: usize) -> HamiltonianSpec<f64> {
    match index % 4 {
        0 => build_ising(len, 0.0, 1.0),
        1 => build_ising(len, 0.3, 0.8),
        2 => build_tci(len, 1.0, 0.428),
        _ => build_xxz(len, 0.7, XxzGrouping::U1),
    }
    .unwrap()
}

struct Instance {
    spec: HamiltonianSpec<f64>,
    ansatz: Ansatz<f64>,
    theta: ParameterVector<f64>,
    psi0: State<f64>,
    target: State<f64>,
}

fn instances() -> Vec<Instance> {
    (0..20)
        .map(|i| {
            let len = 3 + i % 2;
            let spec = model(i / 2, len);
            let ansatz = Ansatz::new(&spec, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0000 + i as u64);
            let theta = ParameterVector::new((0..ansatz.num_params()).map(|_| rng.gen_range(-PI..PI)).collect());
            let psi0 = random_state(len, &mut rng);
            let target = random_state(len, &mut rng);
            Instance { spec, ansatz, theta, psi0, target }
        })
        .collect()
}

fn shifted(theta: &ParameterVector<f64>, moves: &[(usize, f64)]) -> ParameterVector<f64> {
    let mut t = theta.clone();
    for &(p, d) in moves {
        t.values[p] += d;
    }
    t
}

/// Components whose central difference is below this are compared in
/// absolute terms, where a relative error is not meaningful.
const GRADIENT_FLOOR: f64 = 1e-4;

fn gradient_oracle(cases: &[Instance]) -> Outcome {
    let h = 1e-5;
    let (mut worst_rel, mut worst_abs) = (0.0f64, 0.0f64);
    for c in cases {
        let t = tangent_states(&c.ansatz, &c.theta, &c.psi0, DEFAULT_CACHE_CAP_BYTES).unwrap();
        for obj in [Objective::Overlap(&c.target), Objective::Energy(&c.spec)] {
            let grad = obj.gradient(&t);
            for (p, &g) in grad.iter().enumerate() {
                let f = |d: f64| obj.cost(&apply_circuit(&c.ansatz, &shifted(&c.theta, &[(p, d)]), &c.psi0).unwrap()).unwrap();
                let fd = (f(h) - f(-h)) / (2.0 * h);
                if fd.abs() >= GRADIENT_FLOOR {
                    worst_rel = worst_rel.max((g - fd).abs() / fd.abs());
                } else {
                    worst_abs = worst_abs.max((g - fd).abs());
                }
            }
        }
    }
    let pass = worst_rel <= 1e-5 && worst_abs <= 1e-5 * GRADIENT_FLOOR;
    Outcome {
        id: 6,
        pass,
        detail: format!("gradients vs central differences, h=1e-5, 20 instances: max rel err {worst_rel:.2e}, max abs err near zero {worst_abs:.2e}"),
    }
}

fn metric_oracle(cases: &[Instance]) -> Outcome {
    let h = 1e-4;
    let (mut err, mut asym, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for c in cases {
        let a = &c.ansatz;
        let psi = apply_circuit(a, &c.theta, &c.psi0).unwrap();
        let g = metric(&tangent_states(a, &c.theta, &c.psi0, DEFAULT_CACHE_CAP_BYTES).unwrap());
        // 1 - |<psi(theta)|psi(theta + d)>|^2 averaged over +-d equals d^T g d up to fourth order
        let dist = |moves: &[(usize, f64)]| {
            let neg: Vec<_> = moves.iter().map(|&(p, d)| (p, -d)).collect();
            let fp = psi.inner(&apply_circuit(a, &shifted(&c.theta, moves), &c.psi0).unwrap()).norm_sqr();
            let fm = psi.inner(&apply_circuit(a, &shifted(&c.theta, &neg), &c.psi0).unwrap()).norm_sqr();
            1.0 - 0.5 * (fp + fm)
        };
        let n = a.num_params();
        let diag: Vec<f64> = (0..n).map(|p| dist(&[(p, h)]) / (h * h)).collect();
        for p in 0..n {
            err = err.max((g[(p, p)] - diag[p]).abs());
            for q in p + 1..n {
                let fd = (dist(&[(p, h), (q, h)]) / (h * h) - diag[p] - diag[q]) / 2.0;
                err = err.max((g[(p, q)] - fd).abs());
            }
        }
        asym = asym.max((&g - g.transpose()).amax());
        min_eig = min_eig.min(g.symmetric_eigenvalues().min());
    }
    let pass = err <= 1e-6 && asym <= 1e-10 && min_eig >= -1e-9;
    Outcome {
        id: 7,
        pass,
        detail: format!("metric vs finite-difference Fubini-Study: max abs err {err:.2e}, asymmetry {asym:.1e}, min eigenvalue {min_eig:.2e}"),
    }
}

fn invariants(inv: &Invariants) -> Outcome {
    let pass = inv.missing == 0 && inv.runs > 0 && inv.norm <= 1e-12 && inv.charge <= 1e-10 && inv.metric_asym <= 1e-10 && inv.metric_min_eig >= -1e-9;
    Outcome {
        id: 8,
        pass,
        detail: format!(
            "{} trained circuits, after every sublayer: max norm error {:.1e}, max parity drift {:.1e}; metric asymmetry {:.1e}, min eigenvalue {:.1e}",
            inv.runs, inv.norm, inv.charge, inv.metric_asym, inv.metric_min_eig
        ),
    }
}

fn dense_real_spectrum(spec: &HamiltonianSpec<f64>) -> Vec<f64> {
    let h = spec.dense().unwrap();
    assert!(spec.is_real());
    let re = h.map(|z| z.re);
    let mut ev: Vec<f64> = re.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

fn eigensolver_oracle() -> Outcome {
    let spec = build_ising(2, 0.0, 1.0).unwrap();
    let even = sector_spectrum(&spec, Parity::Even).unwrap();
    let odd = sector_spectrum(&spec, Parity::Odd).unwrap();
    let s5 = 5f64.sqrt();
    let close = |v: &[f64], w: &[f64]| v.len() == w.len() && v.iter().zip(w).all(|(a, b)| (a - b).abs() <= 1e-12);
    let l2 = close(&even, &[-s5, s5]) && close(&odd, &[-1.0, 1.0]);

    let mut worst = 0.0f64;
    let mut union_ok = true;
    for len in 2..=4 {
        let mut specs = vec![build_ising(len, 0.0, 1.0).unwrap(), build_xxz(len, 0.7, XxzGrouping::ByPauli).unwrap()];
        if len >= 3 {
            specs.push(build_tci(len, 1.0, 0.428).unwrap());
        }
        for spec in &specs {
            let mut union = sector_spectrum(spec, Parity::Even).unwrap();
            union.extend(sector_spectrum(spec, Parity::Odd).unwrap());
            union.sort_by(f64::total_cmp);
            let dense = dense_real_spectrum(spec);
            union_ok &= union.len() == dense.len();
            for (a, b) in union.iter().zip(&dense) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let pass = l2 && union_ok && worst <= 1e-10;
    Outcome {
        id: 9,
        pass,
        detail: format!("L=2 sectors {even:.15?} / {odd:.15?}; sector union vs dense (L<=4) max diff {worst:.1e}"),
    }
}

fn entropy_vs_cutoff(out: &std::path::Path, inv: &mut Invariants) -> Outcome {
    let mut errs = Vec::new();
    for cutoff in [0.99, 0.999] {
        let mut cfg = RunConfig { size: 10, lambda_x: 0.06, layers: 4, ..base_config(&out.join(format!("c10_{cutoff}"))) };
        cfg.optimizer.cutoff = cutoff;
        let o = harness::cmd_prepare(&cfg).unwrap();
        inv.add_summary(&o.summary);
        errs.push((o.summary.entropy_error.unwrap(), o.summary.fidelity));
    }
    let pass = errs[1].0 < errs[0].0;
    Outcome {
        id: 10,
        pass,
        detail: format!(
            "gapped L=10 N=4 |S - S_ED|: {:.3e} at cutoff 0.99 (fidelity {:.5}), {:.3e} at cutoff 0.999 (fidelity {:.5})",
            errs[0].0, errs[0].1, errs[1].0, errs[1].1
        ),
    }
}

/// `exp(-i theta k)` by its Taylor series.
fn dense_exp(k: &DMatrix<C<f64>>, theta: f64) -> DMatrix<C<f64>> {
    let a = k * C::new(0.0, -theta);
    let mut term = DMatrix::<C<f64>>::identity(k.nrows(), k.ncols());
    let mut sum = term.clone();
    for n in 1..60 {
        term = &term * &a / C::new(n as f64, 0.0);
        sum += &term;
    }
    sum
}

fn trotter_order() -> Outcome {
    let spec = build_tci(4, 1.0f64, 0.428).unwrap();
    let zxx = spec.group("ZXX").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let angles: Vec<f64> = (0..zxx.generators().len()).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let v: Vec<C<f64>> = (0..16).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let terms: Vec<_> = zxx.generators().iter().zip(&angles).flat_map(|(g, a)| {
        let scale = g.strings()[0].coefficient().abs();
        g.strings().iter().map(move |s| s.with_coefficient(s.coefficient() / scale * a).unwrap())
    }).collect();
    let k = dense_matrix(&terms, 4).unwrap();
    let err = |theta: f64| {
        let exact = dense_exp(&k, theta) * DVector::from_column_slice(&v);
        let mut psi = State::from_amplitudes(4, v.clone()).unwrap();
        for g in trotter_sublayer(zxx, TrotterOrder::Second) {
            let gen = &zxx.generators()[g.generator];
            let unit = gen.strings()[0].coefficient().abs();
            psi.apply_generator(gen, g.weight * theta * angles[g.generator] / unit);
        }
        psi.amplitudes().iter().zip(exact.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let thetas: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 2.0 * i as f64 / 8.0)).collect();
    let pts: Vec<(f64, f64)> = thetas.iter().map(|&t| (t.ln(), err(t).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Outcome {
        id: 11,
        pass: (slope - 3.0).abs() <= 0.3,
        detail: format!("second-order ZXX sublayer error vs exact exponential, L=4, theta in [1e-3, 1e-1]: log-log slope {slope:.3}"),
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let mut inv = Invariants { metric_min_eig: f64::INFINITY, ..Default::default() };
    let mut results = Vec::new();
    let timed = |name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        eprintln!("[{name} done in {:.1} s]", start.elapsed().as_secs_f64());
        o
    };

    let cases = instances();
    results.push(timed("gradient oracle", &mut || gradient_oracle(&cases)));
    results.push(timed("metric oracle", &mut || metric_oracle(&cases)));
    results.push(timed("eigensolver oracle", &mut || eigensolver_oracle()));
    results.push(timed("trotter order", &mut || trotter_order()));
    results.push(timed("critical depth law", &mut || critical_depth_law(out, &mut inv)));
    results.push(timed("tricritical depth", &mut || tci_depth(out, &mut inv)));
    results.push(timed("excited states", &mut || excited_states(out, &mut inv)));
    results.push(timed("entropy vs cutoff", &mut || entropy_vs_cutoff(out, &mut inv)));

    let start = Instant::now();
    let cfg = RunConfig { size: 14, lambda_x_values: vec![0.06, 0.1, 0.2], ..base_config(&out.join("c3")) };
    let coupling = harness::cmd_sweep_coupling(&cfg).unwrap();
    coupling.sweeps.iter().for_each(|s| inv.add_sweep(s));
    let xi: Vec<f64> = coupling.points.iter().map(|p| p.xi).collect();
    let ncs: Option<Vec<f64>> = coupling.points.iter().map(|p| p.n_c.map(|n| n as f64)).collect();
    let pass = ncs.as_ref().is_some_and(|n| non_increasing(n)) && non_increasing(&xi) && coupling.spearman >= 0.0;
    let detail = coupling
        .points
        .iter()
        .map(|p| format!("lx={}: xi={:.3} N_c={}", p.lambda_x, p.xi, p.n_c.map_or("none".into(), |n| n.to_string())))
        .collect::<Vec<_>>()
        .join(", ");
    results.push(Outcome { id: 3, pass, detail: format!("L=14 {detail}; spearman {:.3}", coupling.spearman) });
    eprintln!("[coupling sweep done in {:.1} s]", start.elapsed().as_secs_f64());
    results.push(timed("gapped saturation", &mut || gapped_saturation(out, &coupling.sweeps[0], &mut inv)));
    results.push(invariants(&inv));

    results.sort_by_key(|o| o.id);
    let mut failed = 0;
    for o in &results {
        println!("criterion {:>2}: {} {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
