//! Regenerate the JSON/CSV fixtures used by the CLI tests.
//!
//! cargo run -p supercircuit --example write_fixtures -- fixtures

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;
use supercircuit::extract::{self, PortDrive, PortElements, PortJunction, PortSlip, Response};
use supercircuit::fixtures;
use supercircuit::graph_core::{Branch, BranchNetlist, External};
use supercircuit::units::{COOPER_CHARGE, FLUX_QUANTUM};

fn write_json<T: Serialize>(dir: &Path, name: &str, v: &T) {
	let text = serde_json::to_string_pretty(v).unwrap() + "\n";
	fs::write(dir.join(name), text).unwrap();
}

fn net(nodes: &[&str], branches: Vec<Branch>) -> BranchNetlist {
	BranchNetlist { nodes: nodes.iter().map(|s| s.to_string()).collect(), branches, external: External::default() }
}

fn jj(from: usize, to: usize) -> Branch {
	Branch::Josephson { from, to, ej: 2.0e-23, cj: 5.0e-15 }
}

fn ind(from: usize, to: usize, value: f64) -> Branch {
	Branch::Inductor { from, to, value, phi_ext: 0.0, m0: 0.0 }
}

fn main() {
	let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
	fs::create_dir_all(&dir).unwrap();

	write_json(&dir, "fluxonium.json", &fixtures::fluxonium(3.0e-15, 300.0e-9, 1.0e-23, 2.0e-24));
	write_json(&dir, "lc.json", &fixtures::lc(1.0e-12, 1.0e-9));
	write_json(&dir, "transmon.json", &fixtures::transmon(80.0e-15, 2.0e-23));
	write_json(&dir, "gmon.json", &fixtures::gmon());
	write_json(&dir, "mixed.json", &fixtures::mixed());
	write_json(&dir, "squid.json", &fixtures::squid(5.0e-15, 1.0e-9, 2.0e-23, 1.5e-23));
	write_json(&dir, "lc_mesh.json", &fixtures::two_node_three_loop(10e-15, 20e-15, 5e-15, 1e-9, 2e-9, 3e-9, 0.2e-9));

	write_json(&dir, "junction_loop.json", &net(&["gnd", "1"], vec![jj(0, 1), jj(0, 1), ind(0, 1, 1e-9)]));
	fs::write(dir.join("malformed.json"), "{ \"nodes\": [\"gnd\", \"1\"], \"branches\": [\n").unwrap();

	// junction-only classes
	write_json(&dir, "rf_squid.json", &net(&["gnd", "1"], vec![jj(0, 1), ind(0, 1, 1e-9)]));
	write_json(
		&dir,
		"transmon_pair.json",
		&net(&["gnd", "1", "2"], vec![jj(0, 1), jj(0, 2), Branch::Capacitor { from: 1, to: 2, value: 1e-15 }]),
	);
	write_json(&dir, "rf_squid_transmon.json", &net(&["gnd", "1", "2"], vec![jj(0, 1), jj(0, 2), ind(0, 1, 1e-9)]));
	write_json(&dir, "rf_squid_pair.json", &net(&["gnd", "1", "2"], vec![jj(0, 1), jj(0, 2), ind(0, 1, 1e-9), ind(0, 2, 2e-9)]));
	write_json(&dir, "four_transmons.json", &net(&["gnd", "1", "2", "3", "4"], vec![jj(0, 1), jj(0, 2), jj(0, 3), jj(0, 4)]));

	let model = extract::fluxonium_drive_model();
	write_json(&dir, "fluxonium_drive_model.json", &model);
	let w = model.poles[0].omega;
	let omegas: Vec<f64> = (0..200).map(|k| w / 100.0 + (2.03 * w - w / 100.0) * k as f64 / 199.0).collect();
	let samples = extract::sample(Response::Model(&model), &omegas).unwrap();
	samples.write_csv(fs::File::create(dir.join("fluxonium_drive.csv")).unwrap()).unwrap();
	let mut lossy = samples.clone();
	for m in &mut lossy.values {
		let d = m[(0, 0)];
		m[(0, 0)] = d + Complex64::new(1e-3 * d.norm(), 0.0);
	}
	lossy.write_csv(fs::File::create(dir.join("lossy.csv")).unwrap()).unwrap();
	let mut core_model = model.clone();
	core_model.poles.clear();
	let core = extract::sample(Response::Model(&core_model), &omegas).unwrap();
	core.write_csv(fs::File::create(dir.join("core_only.csv")).unwrap()).unwrap();

	let elements = PortElements {
		junctions: vec![PortJunction { port: "C1".into(), ej: 2e-24, extra_capacitance: 0.0 }],
		slips: vec![PortSlip { port: "L1".into(), es: 1e-24, extra_inductance: 0.0 }],
		drives: vec![
			PortDrive { port: "C2".into(), value: 0.3 * COOPER_CHARGE },
			PortDrive { port: "L2".into(), value: 0.2 * FLUX_QUANTUM },
		],
	};
	write_json(&dir, "fluxonium_elements.json", &elements);

	write_json(&dir, "lc_initial.json", &json!({ "phi": [1.0e-16] }));
}
