mod common;

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use spinphonon::gates::{circuit_matrix, compress, CompressOptions, GateOp, Measurement};
use spinphonon::linalg::{expm_hermitian, max_abs};
use spinphonon::model::ModelParams;
use spinphonon::operator::{build_hamiltonian, project_to_sector, realize_matrix, OperatorSum, SectorMap};
use spinphonon::state::HybridState;
use spinphonon::trotter::{plan_generic, plan_n2, plan_n4, GroupKey, IdentityKick, PlanOptions, TrotterPlan};

fn reduced(p: &ModelParams) -> OperatorSum {
    project_to_sector(&build_hamiltonian(p).unwrap(), &SectorMap::descending(p).unwrap()).unwrap()
}

/// Product of exact group exponentials, first group acting first.
fn exact_step(plan: &TrotterPlan, cutoffs: &[usize]) -> DMatrix<Complex64> {
    let mut u: Option<DMatrix<Complex64>> = None;
    for g in &plan.groups {
        let h = OperatorSum::from_terms(plan.n_system_qubits, plan.n_modes, g.terms()).unwrap();
        let e = expm_hermitian(&realize_matrix(&h, cutoffs).unwrap().to_dense(), plan.dt);
        u = Some(match u {
            None => e,
            Some(prev) => e * prev,
        });
    }
    u.unwrap()
}

#[test]
fn plans_partition_the_reduced_hamiltonian() {
    let p = ModelParams::n2_reference();
    let plan = plan_n2(&p, PlanOptions::default()).unwrap();
    assert!(plan.hamiltonian().max_coefficient_deviation(&reduced(&p)) < 1e-14);
    assert_eq!(plan.groups.len(), 5);

    for g in [0.0, 2.0] {
        let p = ModelParams::n4_reference(g);
        let (main, mode2) = plan_n4(&p, PlanOptions::default()).unwrap();
        let sum = main.hamiltonian().add(&mode2.hamiltonian());
        let mut h = reduced(&p);
        // Embed both on the same register shape for the comparison.
        h = OperatorSum::from_terms(2, 4, h.terms().to_vec()).unwrap();
        let sum = OperatorSum::from_terms(2, 4, sum.terms().to_vec()).unwrap();
        assert!(sum.max_coefficient_deviation(&h) < 1e-14, "g={g}");
        let n_groups = main.groups.len() + mode2.groups.len();
        assert_eq!(n_groups, if g == 0.0 { 7 } else { 13 });
    }
}

#[test]
fn n4_main_order_is_as_listed() {
    let (main, mode2) = plan_n4(&ModelParams::n4_reference(2.0), PlanOptions::default()).unwrap();
    let labels: Vec<String> = main.groups.iter().map(|g| g.key.to_string()).collect();
    assert_eq!(
        labels,
        [
            "X1", "X0 X1", "Z0 kick m1", "Z0 Z1 kick m1", "Z0 kick m3", "Z0 Z1 kick m3", "Z1", "Z1 kick m0", "n0", "n1",
            "n3"
        ]
    );
    assert_eq!(mode2.groups[0].key, GroupKey::kick(2, &[]));
    assert_eq!(mode2.n_qubits(), 0);
    assert_eq!(main.active_modes().into_iter().collect::<Vec<_>>(), vec![0, 1, 3]);
    assert_eq!(main.register_cutoffs(&[8; 4]).unwrap(), vec![8, 8, 0, 8]);
}

#[test]
fn complex_kicks_fold_into_phases() {
    let p = ModelParams::n4_reference(2.0);
    let (main, _) = plan_n4(&p, PlanOptions::default()).unwrap();
    let e1 = spinphonon::model::mode_energy(&p, 1).unwrap();
    let s1 = (p.coupling * p.coupling * p.lattice_spacing / 32.0).sqrt() / e1.sqrt();
    let c = main.step_circuit(0).unwrap();
    let kicks: Vec<(usize, f64, f64)> = c
        .ops()
        .iter()
        .filter_map(|g| match *g {
            GateOp::ZKick { mode: 1, qubit, theta, phi } => Some((qubit, theta, phi)),
            _ => None,
        })
        .collect();
    // (1 - i) on Z0, (1 + i) on Z0 Z1 (kicked on qubit 1 inside the CNOT pair).
    let amp = 2.0 * 2f64.sqrt() * s1 * p.trotter_dt;
    assert_eq!(kicks.len(), 2);
    assert_eq!(kicks[0].0, 0);
    assert!((kicks[0].1 - amp).abs() < 1e-12 && (kicks[0].2 - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    assert_eq!(kicks[1].0, 1);
    assert!((kicks[1].1 - amp).abs() < 1e-12 && (kicks[1].2 + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
}

#[test]
fn step_circuits_equal_product_of_group_exponentials() {
    let p = ModelParams::n2_reference();
    let plan = plan_n2(&p, PlanOptions::default()).unwrap();
    let cutoffs = [4, 4];
    let u = circuit_matrix(&plan.step_circuit(0).unwrap(), &cutoffs).unwrap();
    assert!(max_abs(&(u - exact_step(&plan, &cutoffs))) < 1e-10);

    let p = ModelParams::n4_reference(2.0);
    let (main, mode2) = plan_n4(&p, PlanOptions::default()).unwrap();
    let cutoffs = [2, 2, 0, 2];
    let u = circuit_matrix(&main.step_circuit(0).unwrap(), &cutoffs).unwrap();
    assert!(max_abs(&(u - exact_step(&main, &cutoffs))) < 1e-10);
    let cutoffs = [0, 0, 5, 0];
    let u = circuit_matrix(&mode2.step_circuit(0).unwrap(), &cutoffs).unwrap();
    assert!(max_abs(&(u - exact_step(&mode2, &cutoffs))) < 1e-10);
}

#[test]
fn native_lowering_preserves_step_unitary_up_to_phase() {
    let p = ModelParams::n4_reference(2.0);
    let opts = PlanOptions { native: true, ..PlanOptions::default() };
    let (main, _) = plan_n4(&p, opts).unwrap();
    let cutoffs = [2, 2, 0, 2];
    let (native, _) = main.executable_circuit(1).unwrap();
    assert_eq!(native.count(|g| matches!(g, GateOp::ZKick { .. } | GateOp::Cnot { .. })), 0);
    let u = circuit_matrix(&native, &cutoffs).unwrap();
    let exact = exact_step(&main, &cutoffs);
    let k = (0..exact.len()).max_by(|&a, &b| exact[a].norm().total_cmp(&exact[b].norm())).unwrap();
    let ph = u[k] / exact[k];
    assert!((ph.norm() - 1.0).abs() < 1e-10);
    assert!(max_abs(&(u - exact * ph)) < 1e-10);
}

#[test]
fn n2_step_structure() {
    let p = ModelParams::n2_reference();
    let opts = PlanOptions { native: true, ..PlanOptions::default() };
    let (c, _) = plan_n2(&p, opts).unwrap().executable_circuit(1).unwrap();
    let kinds: Vec<&str> = c
        .ops()
        .iter()
        .map(|g| match g {
            GateOp::Rz { .. } => "RZ",
            GateOp::Rx { .. } => "RX",
            GateOp::Snp { .. } => "SNP",
            GateOp::Displace { .. } => "D",
            GateOp::ModePhase { .. } => "PH",
            _ => "?",
        })
        .collect();
    assert_eq!(kinds, ["RZ", "RX", "SNP", "RX", "D", "PH", "PH"]);
    let meta = c.meta();
    assert_eq!(meta[1].term, "Z0 kick m0");
    assert_eq!(meta[4].term, "kick m1");
    assert!(c.metadata_jsonl().lines().count() == c.len());

    let plan = plan_n2(&p, PlanOptions::default()).unwrap();
    assert!((plan.total_time() - 6.0).abs() < 1e-15);
    let (main, _) = plan_n4(&ModelParams::n4_reference(2.0), PlanOptions::default()).unwrap();
    assert!((main.total_time() - 5.0).abs() < 1e-15);
}

#[test]
fn ancilla_plan_adds_one_qubit() {
    let p = ModelParams::n2_reference();
    let plan = plan_n2(&p, PlanOptions { identity_kick: IdentityKick::Ancilla, ..PlanOptions::default() }).unwrap();
    assert_eq!(plan.n_qubits(), 2);
    assert_eq!(plan.ancilla(), Some(1));
    let c = plan.step_circuit(0).unwrap();
    assert_eq!(c.count(|g| matches!(g, GateOp::Snp { qubit: 1, mode: 1, .. })), 1);
    let (main, _) = plan_n4(&ModelParams::n4_reference(2.0), plan.options).unwrap();
    assert_eq!(main.ancilla(), None);
}

#[test]
fn zero_step_is_identity() {
    let p = ModelParams::n4_reference(2.0);
    let (main, _) = plan_n4(&p, PlanOptions::default()).unwrap();
    let main = main.with_steps(0.0, 3);
    let u = circuit_matrix(&main.step_circuit(0).unwrap(), &[2, 2, 0, 2]).unwrap();
    assert!(max_abs(&(&u - DMatrix::identity(u.nrows(), u.ncols()))) < 1e-14);
}

#[test]
fn g0_main_step_is_spin_only() {
    let (main, mode2) = plan_n4(&ModelParams::n4_reference(0.0), PlanOptions::default()).unwrap();
    let c = main.step_circuit(0).unwrap();
    let spin: Vec<GateOp> = c.ops().iter().copied().filter(|g| !matches!(g, GateOp::ModePhase { .. })).collect();
    assert_eq!(spin.len(), 5);
    assert!(matches!(spin[0], GateOp::Rx { qubit: 1, .. }));
    assert!(matches!(spin[1], GateOp::Cnot { control: 0, target: 1 }));
    assert!(matches!(spin[2], GateOp::Rx { qubit: 0, .. }));
    assert!(matches!(spin[3], GateOp::Cnot { control: 0, target: 1 }));
    assert!(matches!(spin[4], GateOp::Rz { qubit: 1, .. }));
    assert_eq!(mode2.groups.len(), 1);
}

#[test]
fn two_cnots_per_compressed_step() {
    let p = ModelParams::n4_reference(2.0);
    let (main, _) = plan_n4(&p, PlanOptions::default()).unwrap();
    let one = main.step_circuit(0).unwrap();
    assert_eq!(one.count(|g| matches!(g, GateOp::Cnot { .. })), 6);
    let c = compress(&one, CompressOptions::default());
    assert_eq!(c.count(|g| matches!(g, GateOp::Cnot { .. })), 2);

    let opts = PlanOptions {
        native: true,
        compression: Some(CompressOptions::default()),
        ..PlanOptions::default()
    };
    let (native, _) = main.clone().with_options(opts).executable_circuit(1).unwrap();
    assert_eq!(native.count(|g| g.is_entangling_spin_spin()), 2);

    // Five steps from |00⟩: the leading CNOT of the first step is dropped.
    let five = compress(&main.circuit(5).unwrap(), CompressOptions { initial_zero: true, measurement: Measurement::Full });
    assert_eq!(five.count(|g| matches!(g, GateOp::Cnot { .. })), 9);
}

fn assert_compression_preserves(plan: &TrotterPlan, cutoffs: &[usize], steps: usize, tol: f64) {
    let vac = plan.vacuum(cutoffs).unwrap();
    let active: Vec<usize> = plan.active_modes().into_iter().collect();
    for k in 1..=steps {
        let full = plan.circuit(k).unwrap();
        let mut reference = vac.clone();
        full.apply(&mut reference).unwrap();
        let mut targets = vec![Measurement::Spin];
        targets.extend(active.iter().map(|&m| Measurement::Mode(m)));
        for meas in targets {
            let c = compress(&full, CompressOptions { initial_zero: true, measurement: meas });
            assert!(c.len() < full.len(), "{meas:?} at step {k} removed nothing");
            let mut st = vac.clone();
            c.apply(&mut st).unwrap();
            let (a, b) = match meas {
                Measurement::Spin => (reference.spin_marginal(), st.spin_marginal()),
                Measurement::Mode(m) => (reference.mode_marginal(m).unwrap(), st.mode_marginal(m).unwrap()),
                Measurement::Full => unreachable!(),
            };
            let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(dev < tol, "{meas:?} at step {k}: {dev:e}");
        }
    }
}

#[test]
fn compression_preserves_n4_marginals() {
    let p = ModelParams::n4_reference(2.0);
    let (main, _) = plan_n4(&p, PlanOptions::default()).unwrap();
    assert_compression_preserves(&main, &[6, 6, 6, 6], 5, 1e-10);
}

#[test]
fn generic_plan_handles_other_sectors() {
    let mut p = ModelParams::n4_reference(1.0);
    p.charge_sector = 1;
    let plan = plan_generic(&p, PlanOptions::default()).unwrap();
    assert!(plan.hamiltonian().max_coefficient_deviation(&reduced(&p)) < 1e-14);
    let cutoffs = [1, 1, 1, 1];
    let u = circuit_matrix(&plan.step_circuit(0).unwrap(), &cutoffs).unwrap();
    assert!(max_abs(&(u - exact_step(&plan, &cutoffs))) < 1e-10);

    // Six states padded to three qubits leave spin-dependent number terms.
    p.charge_sector = 0;
    assert!(matches!(plan_generic(&p, PlanOptions::default()), Err(spinphonon::Error::Unsupported(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn compression_preserves_marginals_on_random_draws(
        g in 0.1f64..3.0,
        dt in 0.05f64..1.2,
        mass in 0.2f64..2.0,
    ) {
        let mut p = ModelParams::n4_reference(g);
        p.trotter_dt = dt;
        p.fermion_mass = mass;
        let (main, _) = plan_n4(&p, PlanOptions::default()).unwrap();
        assert_compression_preserves(&main, &[3, 3, 3, 3], 2, 1e-10);
    }

    #[test]
    fn compiled_phases_match_uncompiled(g in 0.1f64..4.0, dt in 0.05f64..0.8) {
        let mut p = ModelParams::n2_reference();
        p.coupling = g;
        p.trotter_dt = dt;
        let plain = plan_n2(&p, PlanOptions::default()).unwrap();
        let compiled = plain.clone().with_options(PlanOptions { compile_phases: true, native: true, ..PlanOptions::default() });
        let cutoffs = [6, 6];
        let mut a = plain.vacuum(&cutoffs).unwrap();
        plain.circuit(3).unwrap().apply(&mut a).unwrap();
        let (c, frame) = compiled.executable_circuit(3).unwrap();
        prop_assert_eq!(c.count(|g| matches!(g, GateOp::ModePhase { .. })), 0);
        let mut b = compiled.vacuum(&cutoffs).unwrap();
        c.apply(&mut b).unwrap();
        for m in 0..2 {
            let (pa, pb) = (a.mode_marginal(m).unwrap(), b.mode_marginal(m).unwrap());
            prop_assert!(pa.iter().zip(&pb).all(|(x, y)| (x - y).abs() < 1e-10));
        }
        frame.apply(&mut b).unwrap();
        prop_assert!(HybridState::fidelity(&a, &b) > 1.0 - 1e-10);
    }
}
