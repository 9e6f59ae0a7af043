//! Small reference circuits used by tests, acceptance checks and the CLI.

use crate::graph_core::{Branch, BranchNetlist, External};

fn labels(names: &[&str]) -> Vec<String> {
	names.iter().map(|s| s.to_string()).collect()
}

fn inductor(from: usize, to: usize, value: f64) -> Branch {
	Branch::Inductor { from, to, value, phi_ext: 0.0, m0: 0.0 }
}

/// Junction (with its capacitance) in parallel with a phase-slip wire.
pub fn fluxonium(c: f64, l: f64, ej: f64, es: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1"]),
		branches: vec![
			Branch::Josephson { from: 0, to: 1, ej, cj: c },
			Branch::PhaseSlip { from: 0, to: 1, es, ls: l, phi_ext: 0.0, m0: 0.0 },
		],
		external: External::default(),
	}
}

pub fn lc(c: f64, l: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1"]),
		branches: vec![Branch::Capacitor { from: 0, to: 1, value: c }, inductor(0, 1, l)],
		external: External::default(),
	}
}

pub fn transmon(c: f64, ej: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1"]),
		branches: vec![Branch::Josephson { from: 0, to: 1, ej, cj: c }],
		external: External::default(),
	}
}

/// Two grounded capacitors with a coupling capacitor, and three inductors
/// around the triangle `gnd -> 1 -> 2 -> gnd` with a mutual between the
/// first two.
pub fn two_node_three_loop(c1: f64, c2: f64, c3: f64, l1: f64, l2: f64, l3: f64, m: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1", "2"]),
		branches: vec![
			Branch::Capacitor { from: 0, to: 1, value: c1 },
			Branch::Capacitor { from: 0, to: 2, value: c2 },
			Branch::Capacitor { from: 1, to: 2, value: c3 },
			inductor(0, 1, l1),
			inductor(1, 2, l2),
			inductor(2, 0, l3),
			Branch::Mutual { a: 3, b: 4, value: m },
		],
		external: External::default(),
	}
}

/// Two grounded capacitors joined by a star of inductors whose centre `x`
/// carries no capacitance.
pub fn inductive_star(c1: f64, c2: f64, l1: f64, l2: f64, l3: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1", "2", "x"]),
		branches: vec![
			Branch::Capacitor { from: 0, to: 1, value: c1 },
			Branch::Capacitor { from: 0, to: 2, value: c2 },
			inductor(1, 3, l1),
			inductor(3, 0, l2),
			inductor(3, 2, l3),
		],
		external: External::default(),
	}
}

/// Three junctions in a chain, one grounded capacitor, two grounded
/// inductors (tunable-coupler layout).
pub fn gmon() -> BranchNetlist {
	let j = |from, to, cj| Branch::Josephson { from, to, ej: 2.0e-23, cj };
	BranchNetlist {
		nodes: labels(&["gnd", "1", "2", "3", "4"]),
		branches: vec![
			j(2, 1, 4.0e-15),
			j(3, 4, 5.0e-15),
			j(3, 2, 6.0e-15),
			Branch::Capacitor { from: 0, to: 4, value: 80.0e-15 },
			inductor(0, 2, 1.0e-9),
			inductor(0, 3, 1.5e-9),
		],
		external: External::default(),
	}
}

/// Junction and phase-slip mixture with two capacitive and three inductive
/// tree/cotree edges, exercising every block of the edge matrix.
pub fn mixed() -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1", "2"]),
		branches: vec![
			Branch::Josephson { from: 0, to: 1, ej: 1.5e-23, cj: 3.0e-15 },
			Branch::Capacitor { from: 1, to: 2, value: 20.0e-15 },
			Branch::Capacitor { from: 0, to: 2, value: 50.0e-15 },
			Branch::PhaseSlip { from: 0, to: 1, es: 0.8e-23, ls: 20.0e-9, phi_ext: 0.0, m0: 0.0 },
			inductor(1, 2, 2.0e-9),
			inductor(0, 2, 3.0e-9),
			Branch::Mutual { a: 4, b: 5, value: 0.3e-9 },
		],
		external: External::default(),
	}
}

/// DC SQUID: two junctions closing a loop through an inductor.
pub fn squid(c: f64, l: f64, ej1: f64, ej2: f64) -> BranchNetlist {
	BranchNetlist {
		nodes: labels(&["gnd", "1", "2"]),
		branches: vec![
			Branch::Josephson { from: 0, to: 1, ej: ej1, cj: c },
			Branch::Josephson { from: 0, to: 2, ej: ej2, cj: c },
			inductor(1, 2, l),
		],
		external: External::default(),
	}
}
