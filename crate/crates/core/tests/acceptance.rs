//! Acceptance checks: one PASS/FAIL line per criterion.
//!
//! cargo test -p supercircuit --test acceptance

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supercircuit::decompose::{
	canonical_signature, enumerate_junction_classes, fundamental_decomposition, junction_only_form, report, to_edge_basis,
	to_node_basis,
};
use supercircuit::dynamics::{compare_observables, integrate, restrict_state, shortest_period, transform_state, InitialState};
use supercircuit::extract::{
	eval_hybrid, fit_pole_residue, fluxonium_drive_model, sample, synthesize, zero_freq_of_model, PoleResidueModel, PoleTerm, Response,
	SynthesizedCircuit,
};
use supercircuit::fixtures;
use supercircuit::graph_core::{apply_basis_change, build_topology, find_tree_cotree, Branch, BranchNetlist, CircuitTopology, External};
use supercircuit::intlin::{check_tu_exhaustive, col_pivot, row_pivot, IntMatrix, UnimodularTransform};
use supercircuit::numeric::{cholesky_pd_check, offdiag_ratio, simultaneous_diagonalize, spd_inverse, Mat};
use supercircuit::quantize::{build_hamiltonian, evaluate_hamiltonian, remove_free_modes, HamiltonianModel};
use supercircuit::units::{COOPER_CHARGE, FLUX_QUANTUM};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Option<Duration>);

const GMON_BUDGET: Duration = Duration::from_secs(1);
const FLUXONIUM_BUDGET: Duration = Duration::from_secs(1);
const CLASSIFY_BUDGET: Duration = Duration::from_secs(10);
const SYNTHESIS_BUDGET: Duration = Duration::from_secs(5);
const ROUND_TRIP_BUDGET: Duration = Duration::from_secs(10);
const DYNAMICS_BUDGET: Duration = Duration::from_secs(30);

const SYNTHESIS_RTOL: f64 = 1e-9;
const ROUND_TRIP_RTOL: f64 = 1e-6;
const ZERO_BLOCK_TOL: f64 = 1e-12;
const TRAJECTORY_RTOL: f64 = 1e-6;
const SIMDIAG_TOL: f64 = 1e-10;
const GAUGE_RTOL: f64 = 1e-12;
const FREE_MODE_RTOL: f64 = 1e-6;

fn im(rows: &[&[i64]]) -> IntMatrix {
	IntMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn topo(net: &BranchNetlist) -> CircuitTopology {
	build_topology(net).unwrap().0
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
	if ok {
		Ok(())
	} else {
		Err(msg())
	}
}

fn criterion_1() -> Check {
	let t = topo(&fixtures::gmon());
	let tc = find_tree_cotree(&t).map_err(|e| e.to_string())?;
	let start = to_edge_basis(&t, &tc).map_err(|e| e.to_string())?;
	let (done, rep) = report(&start).map_err(|e| e.to_string())?;
	let mut seq = vec![start.omega().clone()];
	for s in &rep.steps {
		if seq.last() != Some(&s.omega) {
			seq.push(s.omega.clone());
		}
	}
	let stages = [
		im(&[&[0, 0], &[-1, -1], &[1, 0], &[1, 1]]),
		im(&[&[0, 0], &[-1, 0], &[1, -1], &[1, 0]]),
		im(&[&[0, 0], &[0, 0], &[0, -1], &[1, 0]]),
	];
	ensure(seq.len() >= 3 && seq[..3] == stages, || format!("edge stages {:?}", seq.iter().map(|m| m.to_rows()).collect::<Vec<_>>()))?;
	let node = to_node_basis(&done, &IntMatrix::identity(done.topo.n()), None).map_err(|e| e.to_string())?;
	let last = im(&[&[0, 0], &[0, 0], &[0, 1], &[1, 0]]);
	ensure(node.omega == last, || format!("node-basis matrix {:?}", node.omega.to_rows()))?;
	Ok(format!("{} stages, final {:?}", seq.len(), last.to_rows()))
}

fn criterion_2() -> Check {
	let (c, l, ej, es) = (3.0e-15, 300.0e-9, 1.0e-23, 2.0e-24);
	let m: HamiltonianModel = build_hamiltonian(&topo(&fixtures::fluxonium(c, l, ej, es))).map_err(|e| e.to_string())?;
	let modes = (m.modes.k(), m.modes.j(), m.modes.s(), m.modes.removed_doubly_discrete);
	ensure(modes == (1, 0, 0, 1), || format!("modes (k, j, s, removed) = {modes:?}"))?;
	let qc = 0.5 * m.quadratic_capacitive.inverse[(0, 0)];
	let ql = 0.5 * m.quadratic_inductive.inverse[(0, 0)];
	ensure(qc == 1.0 / (2.0 * c) && ql == 1.0 / (2.0 * l), || format!("quadratic coefficients {qc:e}, {ql:e}"))?;
	let energies: Vec<f64> = m.cosines.iter().map(|x| x.energy).collect();
	ensure(energies == [ej, es], || format!("cosine energies {energies:?}"))?;
	for cos in &m.cosines {
		let unit = cos.continuous.len() == 1 && cos.continuous[0].abs() == 1 && cos.compact.is_empty();
		ensure(unit, || format!("cosine {} row {:?}", cos.element, cos.continuous))?;
	}
	Ok("one extended pair, exact 1/(2C), 1/(2L), unit cosine rows".into())
}

fn criterion_3() -> Check {
	let one = enumerate_junction_classes(1).map_err(|e| e.to_string())?;
	let two = enumerate_junction_classes(2).map_err(|e| e.to_string())?;
	ensure(one.len() == 2 && two.len() == 4, || format!("class counts {} and {}", one.len(), two.len()))?;
	let sig = |m: IntMatrix| canonical_signature(&junction_only_form(m)).map_err(|e| e.to_string());
	let reps1 = [IntMatrix::zeros(1, 0), im(&[&[1]])];
	let reps2 = [IntMatrix::zeros(2, 0), im(&[&[1], &[0]]), im(&[&[1], &[-1]]), im(&[&[1, 0], &[0, 1]])];
	for (reps, classes) in [(&reps1[..], &one), (&reps2[..], &two)] {
		let mut seen = Vec::new();
		for r in reps {
			let s = sig(r.clone())?;
			ensure(classes.contains(&s) && !seen.contains(&s), || format!("representative {:?}", r.to_rows()))?;
			seen.push(s);
		}
	}
	Ok("2 classes for J=1, 4 for J=2, reference representatives cover them".into())
}

fn pd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
	let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
	(&g * g.transpose() + Mat::identity(n, n) * 0.3) * scale
}

/// Random lossless model with a totally unimodular DC block and separated poles.
fn random_model(rng: &mut ChaCha8Rng, c: usize, l: usize, r: usize) -> PoleResidueModel {
	let omega_e = loop {
		let e: Vec<i64> = (0..c * l).map(|_| rng.gen_range(-1..=1)).collect();
		let m = IntMatrix::from_fn(c, l, |i, j| e[i * l + j]);
		if check_tu_exhaustive(&m) {
			break m;
		}
	};
	let mut freqs: Vec<f64> = Vec::new();
	while freqs.len() < r {
		let w = std::f64::consts::TAU * rng.gen_range(2.0e9..15.0e9);
		if freqs.iter().all(|f| (f - w).abs() > 0.08 * w) {
			freqs.push(w);
		}
	}
	freqs.sort_by(f64::total_cmp);
	let poles = freqs
		.into_iter()
		.map(|omega| {
			let r_c = DVector::from_fn(c, |_, _| rng.gen_range(0.1..1.0) * 2e-8);
			let r_l = DVector::from_fn(l, |_, _| rng.gen_range(-1.0..1.0) * 4e-5);
			PoleTerm { omega, r_c, r_l }
		})
		.collect();
	PoleResidueModel { c_ports: vec![], l_ports: vec![], omega_e, k_cc: pd(rng, c, 2e-15), k_ll: pd(rng, l, 3e-9), poles }
}

fn cnorm(m: &DMatrix<Complex64>) -> f64 {
	m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest relative difference over the four port blocks, each against its own norm.
fn block_rel(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>, nc: usize) -> f64 {
	let p = a.nrows();
	let spans = [(0, nc), (nc, p)];
	let mut worst: f64 = 0.0;
	for &(r0, r1) in &spans {
		for &(c0, c1) in &spans {
			if r0 == r1 || c0 == c1 {
				continue;
			}
			let x = a.view((r0, c0), (r1 - r0, c1 - c0)).into_owned();
			let y = b.view((r0, c0), (r1 - r0, c1 - c0)).into_owned();
			let s = cnorm(&x).max(cnorm(&y));
			if s > 0.0 {
				worst = worst.max(cnorm(&(x - y)) / s);
			}
		}
	}
	worst
}

fn synthesis_set() -> Vec<PoleResidueModel> {
	let mut rng = ChaCha8Rng::seed_from_u64(2024);
	(0..20)
		.map(|k| {
			let c = 1 + k % 2;
			let l = 1 + (k / 2) % 2;
			let r = k % 4;
			random_model(&mut rng, c, l, r)
		})
		.collect()
}

fn criterion_4() -> Check {
	let mut rng = ChaCha8Rng::seed_from_u64(7);
	let mut worst: f64 = 0.0;
	for m in synthesis_set() {
		let circ = synthesize(&m).map_err(|e| e.to_string())?;
		let wmax = m.poles.iter().map(|p| p.omega).fold(std::f64::consts::TAU * 10e9, f64::max);
		let mut done = 0;
		while done < 100 {
			let w = rng.gen_range(0.0..2.0 * wmax);
			if m.poles.iter().any(|p| (p.omega - w).abs() <= 1e-9 * p.omega) {
				continue;
			}
			let s = Complex64::new(0.0, w);
			let a = eval_hybrid(Response::Model(&m), s).map_err(|e| e.to_string())?;
			let b = eval_hybrid(Response::Circuit(&circ), s).map_err(|e| e.to_string())?;
			worst = worst.max(block_rel(&a, &b, m.k_cc.nrows()));
			done += 1;
		}
	}
	ensure(worst <= SYNTHESIS_RTOL, || format!("worst relative difference {worst:e}"))?;
	Ok(format!("20 models x 100 points, worst {worst:.2e}"))
}

fn rel(x: &Mat, y: &Mat) -> f64 {
	(x - y).amax() / y.amax()
}

fn criterion_5() -> Check {
	let mut rng = ChaCha8Rng::seed_from_u64(99);
	let mut cases = vec![fluxonium_drive_model()];
	for (c, l, r) in [(1, 1, 1), (2, 1, 2), (2, 2, 3), (1, 2, 2)] {
		cases.push(random_model(&mut rng, c, l, r));
	}
	let mut worst: f64 = 0.0;
	for m in &cases {
		let circ = synthesize(m).map_err(|e| e.to_string())?;
		let wmax = m.poles.iter().map(|p| p.omega).fold(0.0, f64::max);
		let (lo, hi) = (wmax / 97.0, 1.61 * wmax);
		let omegas: Vec<f64> = (0..200).map(|k| lo + (hi - lo) * k as f64 / 199.0).collect();
		let s = sample(Response::Circuit(&circ), &omegas).map_err(|e| e.to_string())?;
		let fit = fit_pole_residue(&s, m.poles.len()).map_err(|e| e.to_string())?;
		ensure(fit.model.omega_e == m.omega_e, || format!("recovered DC block {:?}", fit.model.omega_e.to_rows()))?;
		let back = synthesize(&fit.model).map_err(|e| e.to_string())?;
		worst = worst.max(rel(&back.cap, &circ.cap)).max(rel(&back.ind, &circ.ind));
	}
	ensure(worst <= ROUND_TRIP_RTOL, || format!("recovered C, L differ by {worst:e}"))?;
	let dc = zero_freq_of_model(&fluxonium_drive_model());
	let h0 = eval_hybrid(Response::Model(&fluxonium_drive_model()), Complex64::new(0.0, 0.0)).map_err(|e| e.to_string())?;
	let expected = [[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]];
	let exact = (0..4).all(|i| (0..4).all(|j| h0[(i, j)] == Complex64::new(expected[i][j], 0.0)));
	ensure(exact && dc.omega_e == im(&[&[1, 0], &[0, 0]]), || format!("DC block {h0}"))?;
	Ok(format!("{} circuits, worst C/L difference {worst:.2e}, reference DC block exact", cases.len()))
}

fn zero_freq_residual(circ: &SynthesizedCircuit) -> Result<f64, String> {
	let h = eval_hybrid(Response::Circuit(circ), Complex64::new(0.0, 0.0)).map_err(|e| e.to_string())?;
	let (c, l) = (circ.nc(), circ.nl());
	let om = circ.omega.to_f64();
	let mut worst: f64 = 0.0;
	for i in 0..c + l {
		for j in 0..c + l {
			let want = match (i < c, j < c) {
				(true, false) => -om[(i, j - c)],
				(false, true) => om[(j, i - c)],
				_ => 0.0,
			};
			worst = worst.max((h[(i, j)] - Complex64::new(want, 0.0)).norm());
		}
	}
	Ok(worst)
}

fn criterion_6() -> Check {
	let mut models = synthesis_set();
	models.push(fluxonium_drive_model());
	let mut worst: f64 = 0.0;
	for m in &models {
		let circ = synthesize(m).map_err(|e| e.to_string())?;
		worst = worst.max(zero_freq_residual(&circ)?);
	}
	ensure(worst <= ZERO_BLOCK_TOL, || format!("DC residual {worst:e}"))?;
	Ok(format!("{} circuits, DC residual {worst:.2e}", models.len()))
}

/// Trajectories of the junction fluxes and slip charges before and after
/// decomposition, over ten of the shortest linear periods.
fn trajectory_deviation(net: &BranchNetlist) -> Result<f64, String> {
	let t0 = topo(net);
	let tc = find_tree_cotree(&t0).map_err(|e| e.to_string())?;
	let es = to_edge_basis(&t0, &tc).map_err(|e| e.to_string())?;
	let (done, _) = fundamental_decomposition(&es).map_err(|e| e.to_string())?;
	let tm = shortest_period(&t0).map_err(|e| e.to_string())?;
	let phi: Vec<f64> = (0..t0.n()).map(|i| 0.04 * FLUX_QUANTUM * ((i as f64 * 1.7).cos() + 0.3)).collect();
	let q: Vec<f64> = (0..t0.l()).map(|i| 0.04 * COOPER_CHARGE * ((i as f64 * 0.9).sin() - 0.5)).collect();
	let init = InitialState { phi: Some(phi), q: Some(q), ..Default::default() }.resolve(&t0).map_err(|e| e.to_string())?;
	let mut mapped = transform_state(&init, &done.u, &done.w);
	let (mut u, mut w) = (done.u.clone(), done.w.clone());
	let (mut kn, mut kl): (Vec<usize>, Vec<usize>) = ((0..t0.n()).collect(), (0..t0.l()).collect());
	if let Some(fm) = &done.free_modes {
		mapped = restrict_state(&transform_state(&mapped, &fm.u, &fm.w), &fm.kept_nodes, &fm.kept_loops);
		u = u.then(&fm.u).map_err(|e| e.to_string())?;
		w = w.then(&fm.w).map_err(|e| e.to_string())?;
		kn = fm.kept_nodes.clone();
		kl = fm.kept_loops.clone();
	}
	let a = integrate(&t0, &init, 10.0 * tm, tm / 1000.0, None).map_err(|e| e.to_string())?;
	let b = integrate(&done.topo, &mapped, 10.0 * tm, tm / 1000.0, None).map_err(|e| e.to_string())?;
	let all_j: Vec<usize> = (0..t0.nj()).collect();
	let all_s: Vec<usize> = (0..t0.ns()).collect();
	let a_obs = u.m.mul(&t0.a_j).map_err(|e| e.to_string())?.select(&kn, &all_j);
	let b_obs = w.m.mul(&t0.b_s).map_err(|e| e.to_string())?.select(&kl, &all_s);
	let b = b.observe(&a_obs, &b_obs).map_err(|e| e.to_string())?;
	let d = compare_observables(&a, &b).map_err(|e| e.to_string())?;
	Ok(d.max_rel())
}

/// Two flux qubits coupled through a shared inductor and a capacitor.
fn coupled_rf_squids() -> BranchNetlist {
	let j = |to, ej, cj| Branch::Josephson { from: 0, to, ej, cj };
	let ind = |from, to, value| Branch::Inductor { from, to, value, phi_ext: 0.0, m0: 0.0 };
	BranchNetlist {
		nodes: vec!["gnd".into(), "1".into(), "2".into()],
		branches: vec![
			j(1, 1.2e-23, 4e-15),
			j(2, 0.9e-23, 6e-15),
			Branch::Capacitor { from: 1, to: 2, value: 2e-15 },
			ind(0, 1, 1.1e-9),
			ind(0, 2, 1.4e-9),
			ind(1, 2, 5e-9),
		],
		external: External::default(),
	}
}

fn criterion_7() -> Check {
	let nets = [
		("gmon", fixtures::gmon()),
		("mixed", fixtures::mixed()),
		("fluxonium", fixtures::fluxonium(3e-15, 300e-9, 5e-24, 2e-24)),
		("squid", fixtures::squid(5e-15, 1e-9, 2e-23, 1.5e-23)),
		("coupled rf-squids", coupled_rf_squids()),
	];
	let mut parts = Vec::new();
	for (name, net) in nets {
		let d = trajectory_deviation(&net)?;
		ensure(d <= TRAJECTORY_RTOL, || format!("{name}: deviation {d:e}"))?;
		parts.push(format!("{name} {d:.1e}"));
	}
	Ok(parts.join(", "))
}

fn random_unimodular(rng: &mut ChaCha8Rng, n: usize, ops: usize) -> UnimodularTransform {
	let mut m = IntMatrix::identity(n);
	for _ in 0..ops {
		let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
		match rng.gen_range(0..3) {
			0 if a != b => m.add_row_multiple(a, b, if rng.gen_bool(0.5) { 1 } else { -1 }).unwrap(),
			1 => m.negate_row(a),
			_ => m.swap_rows(a, b),
		}
	}
	UnimodularTransform::new(m).unwrap()
}

fn tu_closure() -> Result<String, String> {
	let mut rng = ChaCha8Rng::seed_from_u64(11);
	let starts = [
		to_edge_basis(&topo(&fixtures::gmon()), &find_tree_cotree(&topo(&fixtures::gmon())).unwrap()).unwrap().omega().clone(),
		im(&[&[1, 1, 0], &[0, 1, 1], &[1, 1, 1]]),
		im(&[&[1, -1, 0, 1], &[0, 1, -1, 0], &[1, 0, -1, 1]]),
	];
	let mut count = 0;
	for (k, s) in starts.iter().enumerate() {
		ensure(check_tu_exhaustive(s), || format!("start matrix {k} is not totally unimodular"))?;
		let mut m = s.clone();
		while count < (k + 1) * 1000 / starts.len() {
			let (i, j) = (rng.gen_range(0..m.nrows()), rng.gen_range(0..m.ncols()));
			if m.get(i, j) == 0 {
				continue;
			}
			m = if rng.gen_bool(0.5) { row_pivot(&m, i, j) } else { col_pivot(&m, i, j) }.map_err(|e| e.to_string())?.0;
			ensure(check_tu_exhaustive(&m), || format!("pivot ({i},{j}) broke total unimodularity: {:?}", m.to_rows()))?;
			count += 1;
		}
	}
	Ok(format!("{count} pivots"))
}

fn pd_preservation() -> Result<String, String> {
	let mut rng = ChaCha8Rng::seed_from_u64(12);
	let nets = [fixtures::gmon(), fixtures::mixed(), fixtures::two_node_three_loop(1e-15, 2e-15, 3e-15, 1e-9, 2e-9, 3e-9, 0.1e-9)];
	for k in 0..200 {
		let t = topo(&nets[k % nets.len()]);
		let u = random_unimodular(&mut rng, t.n(), 8);
		let w = random_unimodular(&mut rng, t.l(), 8);
		let t2 = apply_basis_change(&t, &u, &w).map_err(|e| e.to_string())?;
		ensure(cholesky_pd_check(&t2.cap) && cholesky_pd_check(&t2.ind), || format!("congruence {k} lost definiteness"))?;
	}
	Ok("200 congruences".into())
}

fn simdiag_residual() -> Result<String, String> {
	let mut rng = ChaCha8Rng::seed_from_u64(13);
	let mut worst: f64 = 0.0;
	for k in 0..100 {
		let n = 1 + k % 6;
		let c = pd(&mut rng, n, 1e-15);
		let l = pd(&mut rng, n, 1e-9);
		let sd = simultaneous_diagonalize(&c, &l).map_err(|e| e.to_string())?;
		let linv = spd_inverse(&l).map_err(|e| e.to_string())?;
		let x = &sd.x;
		worst = worst.max(offdiag_ratio(&(x.transpose() * &c * x))).max(offdiag_ratio(&(x.transpose() * linv * x)));
	}
	ensure(worst <= SIMDIAG_TOL, || format!("off-diagonal residual {worst:e}"))?;
	Ok(format!("100 pairs, residual {worst:.1e}"))
}

fn gauge_invariance() -> Result<String, String> {
	let mut rng = ChaCha8Rng::seed_from_u64(14);
	let mut worst: f64 = 0.0;
	for k in 0..50 {
		let mut t = topo(&if k % 2 == 0 { fixtures::mixed() } else { fixtures::fluxonium(3e-15, 300e-9, 5e-24, 2e-24) });
		for i in 0..t.n() {
			t.q_ext[i] = rng.gen_range(-1.0..1.0) * COOPER_CHARGE;
			t.n0[i] = rng.gen_range(-2..=2) as f64;
		}
		for i in 0..t.l() {
			t.phi_ext[i] = rng.gen_range(-1.0..1.0) * FLUX_QUANTUM;
			t.m0[i] = rng.gen_range(-2..=2) as f64;
		}
		let mut shifted = t.clone();
		for i in 0..t.n() {
			shifted.n0[i] += rng.gen_range(-3..=3) as f64;
		}
		for i in 0..t.l() {
			shifted.m0[i] += rng.gen_range(-3..=3) as f64;
		}
		let m1 = build_hamiltonian(&t).map_err(|e| e.to_string())?;
		let m2 = build_hamiltonian(&shifted).map_err(|e| e.to_string())?;
		let mut p = m1.zero_point();
		p.q_k.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0) * COOPER_CHARGE);
		p.p_k.iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0) * FLUX_QUANTUM);
		p.n_j.iter_mut().for_each(|x| *x = rng.gen_range(-3..=3) as f64);
		p.phi_j.iter_mut().for_each(|x| *x = rng.gen_range(-4.0..4.0));
		p.m_s.iter_mut().for_each(|x| *x = rng.gen_range(-3..=3) as f64);
		p.q_s.iter_mut().for_each(|x| *x = rng.gen_range(-4.0..4.0));
		let e1 = evaluate_hamiltonian(&m1, &p).map_err(|e| e.to_string())?;
		let e2 = evaluate_hamiltonian(&m2, &p).map_err(|e| e.to_string())?;
		worst = worst.max((e1 - e2).abs() / e1.abs().max(1e-30));
	}
	ensure(worst <= GAUGE_RTOL, || format!("energy shift {worst:e}"))?;
	Ok(format!("50 points, worst {worst:.1e}"))
}

fn free_mode_fidelity() -> Result<String, String> {
	let t0 = topo(&fixtures::two_node_three_loop(2e-15, 3e-15, 1e-15, 1e-9, 2e-9, 1.5e-9, 0.2e-9));
	let (t1, fm) = remove_free_modes(&t0).map_err(|e| e.to_string())?;
	ensure(!fm.is_trivial(), || "no free mode to remove".into())?;
	let init = InitialState {
		phi: Some(vec![0.03 * FLUX_QUANTUM, -0.02 * FLUX_QUANTUM]),
		q: Some((0..t0.l()).map(|i| (1.0 + i as f64) * 1e-20).collect()),
		..Default::default()
	}
	.resolve(&t0)
	.map_err(|e| e.to_string())?;
	let reduced = restrict_state(&transform_state(&init, &fm.u, &fm.w), &fm.kept_nodes, &fm.kept_loops);
	let tm = shortest_period(&t1).map_err(|e| e.to_string())?;
	let a = integrate(&t0, &init, 10.0 * tm, tm / 1000.0, None).map_err(|e| e.to_string())?;
	let b = integrate(&t1, &reduced, 10.0 * tm, tm / 1000.0, None).map_err(|e| e.to_string())?;
	let (mut dphi, mut sphi, mut dq, mut sq) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
	for (x, y) in a.states.iter().zip(&b.states) {
		let full = restrict_state(&transform_state(x, &fm.u, &fm.w), &fm.kept_nodes, &fm.kept_loops);
		dphi = dphi.max((&full.phi - &y.phi).amax());
		sphi = sphi.max(full.phi.amax());
		dq = dq.max((&full.q - &y.q).amax());
		sq = sq.max(full.q.amax());
	}
	let worst = (dphi / sphi).max(if sq > 0.0 { dq / sq } else { 0.0 });
	ensure(worst <= FREE_MODE_RTOL, || format!("reduced trajectory deviates by {worst:e}"))?;
	Ok(format!("deviation {worst:.1e}"))
}

fn criterion_8() -> Check {
	let parts = [tu_closure()?, pd_preservation()?, simdiag_residual()?, gauge_invariance()?, free_mode_fidelity()?];
	Ok(parts.join("; "))
}

fn main() {
	let criteria: [Criterion; 8] = [
		("GMon decomposition replay", criterion_1, Some(GMON_BUDGET)),
		("fluxonium quantization", criterion_2, Some(FLUXONIUM_BUDGET)),
		("junction classification", criterion_3, Some(CLASSIFY_BUDGET)),
		("synthesis identity", criterion_4, Some(SYNTHESIS_BUDGET)),
		("extraction round trip", criterion_5, Some(ROUND_TRIP_BUDGET)),
		("zero-frequency constraint", criterion_6, None),
		("nonlinear trajectories under decomposition", criterion_7, Some(DYNAMICS_BUDGET)),
		("property suites", criterion_8, None),
	];
	let mut failed = 0;
	for (k, (name, f, budget)) in criteria.iter().enumerate() {
		let t = Instant::now();
		let result = f();
		let dt = t.elapsed();
		let result = match (result, budget) {
			(Ok(_), Some(b)) if dt > *b => Err(format!("took {dt:.2?}, budget {b:.0?}")),
			(r, _) => r,
		};
		match result {
			Ok(msg) => println!("criterion {}: PASS  {name} ({msg}; {dt:.2?})", k + 1),
			Err(msg) => {
				failed += 1;
				println!("criterion {}: FAIL  {name} ({msg}; {dt:.2?})", k + 1);
			}
		}
	}
	if failed > 0 {
		eprintln!("{failed} criterion/criteria failed");
		std::process::exit(1);
	}
}
