mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use serde_json::{json, Value};
use supercircuit::decompose::{self, DecomposeError};
use supercircuit::dynamics::{self, DynamicsError, InitialState};
use supercircuit::extract::{self, ExtractError, HybridSamples, PoleResidueModel, PortElements, Response};
use supercircuit::graph_core::{find_tree_cotree, validate, CircuitTopology, GraphError};
use supercircuit::intlin::IntMatrix;
use supercircuit::io::{parse_circuit, ExtractionReport, InputError, EXTRACTION_SCHEMA};
use supercircuit::numeric::NumericError;
use supercircuit::quantize::{self, QuantizeError};

use plot::{Series, Style};

#[derive(Parser)]
#[command(name = "supercircuit", version, about = "Superconducting circuit quantization, decomposition and synthesis")]
struct Cli {
	#[command(subcommand)]
	cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
	/// Check a circuit for structural violations.
	Validate { circuit: PathBuf },
	/// Build the Hamiltonian model.
	Quantize {
		circuit: PathBuf,
		/// Node indices whose capacitance goes to zero.
		#[arg(long, value_delimiter = ',')]
		zero_cap: Vec<usize>,
		/// Loop indices whose inductance goes to zero.
		#[arg(long, value_delimiter = ',')]
		zero_ind: Vec<usize>,
		#[arg(long)]
		standard_notation: bool,
	},
	/// Fundamental decomposition in the edge basis.
	Decompose {
		circuit: PathBuf,
		/// Add a step-by-step narrative.
		#[arg(long)]
		replay: bool,
	},
	/// Canonical class signature.
	Classify { circuit: PathBuf },
	/// Fit and synthesize a circuit from response samples (CSV) or a pole-residue model (JSON).
	Extract {
		response: PathBuf,
		#[arg(long, default_value_t = 0)]
		poles: usize,
		/// Known pole frequencies [rad/s]; skips the pole search.
		#[arg(long, value_delimiter = ',')]
		pole_freqs: Vec<f64>,
		/// Junctions, phase slips and drives to place on the ports.
		#[arg(long)]
		elements: Option<PathBuf>,
		/// Also quantize the resulting circuit.
		#[arg(long)]
		quantize: bool,
		/// PNG overlay of |H| data against the fit.
		#[arg(long)]
		plot: Option<PathBuf>,
	},
	/// Integrate the classical equations of motion.
	Simulate {
		circuit: PathBuf,
		#[arg(long)]
		t_end: f64,
		#[arg(long)]
		dt: f64,
		/// JSON with optional `phi`, `q`, `phi_dot`, `q_dot`.
		#[arg(long)]
		initial: Option<PathBuf>,
		/// Trajectory CSV path; stdout when absent.
		#[arg(long)]
		output: Option<PathBuf>,
		/// PNG plot of the junction fluxes and slip charges.
		#[arg(long)]
		plot: Option<PathBuf>,
	},
}

struct Fail {
	code: u8,
	msg: String,
	report: Option<Value>,
}

impl Fail {
	fn new(code: u8, msg: impl ToString) -> Self {
		Self { code, msg: msg.to_string(), report: None }
	}
	fn io(path: &Path, e: impl std::fmt::Display) -> Self {
		Self::new(2, format!("{}: {e}", path.display()))
	}
}

const DOMAIN: u8 = 1;
const PARSE: u8 = 2;
const NUMERIC: u8 = 3;

fn graph_code(e: &GraphError) -> u8 {
	match e {
		GraphError::Numeric(_) => NUMERIC,
		_ => DOMAIN,
	}
}

fn quantize_code(e: &QuantizeError) -> u8 {
	match e {
		QuantizeError::Graph(g) => graph_code(g),
		QuantizeError::Numeric(_) | QuantizeError::SingularFreeBlock { .. } => NUMERIC,
		_ => DOMAIN,
	}
}

impl From<InputError> for Fail {
	fn from(e: InputError) -> Self {
		let code = match &e {
			InputError::Parse(_) => PARSE,
			InputError::Graph(g) => graph_code(g),
		};
		Fail::new(code, e)
	}
}

impl From<GraphError> for Fail {
	fn from(e: GraphError) -> Self {
		Fail::new(graph_code(&e), e)
	}
}

impl From<QuantizeError> for Fail {
	fn from(e: QuantizeError) -> Self {
		Fail::new(quantize_code(&e), e)
	}
}

impl From<DecomposeError> for Fail {
	fn from(e: DecomposeError) -> Self {
		let code = match &e {
			DecomposeError::Graph(g) => graph_code(g),
			DecomposeError::Quantize(q) => quantize_code(q),
			_ => DOMAIN,
		};
		Fail::new(code, e)
	}
}

impl From<ExtractError> for Fail {
	fn from(e: ExtractError) -> Self {
		let code = match &e {
			ExtractError::Csv(_) | ExtractError::Parse(_) => PARSE,
			ExtractError::Numeric(_)
			| ExtractError::FitResidual { .. }
			| ExtractError::PoleScan { .. }
			| ExtractError::NotPsd { .. }
			| ExtractError::SingularValue { .. } => NUMERIC,
			_ => DOMAIN,
		};
		Fail::new(code, e)
	}
}

impl From<DynamicsError> for Fail {
	fn from(e: DynamicsError) -> Self {
		let code = match &e {
			DynamicsError::BlowUp { .. } | DynamicsError::Numeric(_) => NUMERIC,
			DynamicsError::Quantize(q) => quantize_code(q),
			DynamicsError::Io(_) => PARSE,
			_ => DOMAIN,
		};
		Fail::new(code, e)
	}
}

impl From<NumericError> for Fail {
	fn from(e: NumericError) -> Self {
		Fail::new(NUMERIC, e)
	}
}

type Outcome = Result<Value, Fail>;

fn read(path: &Path) -> Result<String, Fail> {
	fs::read_to_string(path).map_err(|e| Fail::io(path, e))
}

fn load_topology(path: &Path) -> Result<CircuitTopology, Fail> {
	Ok(parse_circuit(&read(path)?)?.topology()?.0)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
	serde_json::to_value(v).expect("report types serialize")
}

fn cmd_validate(path: &Path) -> Outcome {
	let input = parse_circuit(&read(path)?)?;
	let topo = match input.topology() {
		Ok((t, _)) => t,
		Err(InputError::Graph(e)) => {
			let mut f = Fail::new(graph_code(&e), &e);
			f.report = Some(json!({ "ok": false, "error": e.to_string(), "violations": [] }));
			return Err(f);
		}
		Err(e) => return Err(e.into()),
	};
	let d = validate(&topo);
	let report = json!({ "ok": d.ok(), "violations": to_value(&d.violations) });
	if d.ok() {
		Ok(report)
	} else {
		Err(Fail { code: DOMAIN, msg: format!("{} violation(s)", d.violations.len()), report: Some(report) })
	}
}

fn cmd_quantize(path: &Path, zero_cap: &[usize], zero_ind: &[usize], standard: bool) -> Outcome {
	let mut topo = load_topology(path)?;
	let mut constraints = None;
	if !zero_cap.is_empty() || !zero_ind.is_empty() {
		let (t, rec) = quantize::apply_zero_limits(&topo, zero_cap, zero_ind)?;
		topo = t;
		constraints = Some(rec);
	}
	let mut model = quantize::build_hamiltonian(&topo)?;
	if standard {
		model = quantize::to_standard_notation(&model);
	}
	let mut out = to_value(&model);
	if let Some(rec) = constraints {
		out["constraints"] = to_value(&rec);
	}
	Ok(out)
}

fn rows_text(m: &IntMatrix) -> String {
	let rows: Vec<String> = m
		.to_rows()
		.iter()
		.map(|r| format!("[{}]", r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
		.collect();
	format!("[{}]", rows.join(","))
}

fn cmd_decompose(path: &Path, replay: bool) -> Outcome {
	let topo = load_topology(path)?;
	let tc = find_tree_cotree(&topo)?;
	let start = decompose::to_edge_basis(&topo, &tc)?;
	let (done, rep) = decompose::report(&start)?;
	let mut out = json!({
		"initial_omega": to_value(start.omega()),
		"row_labels": start.row_names(),
		"col_labels": start.col_names(),
		"steps": to_value(&rep.steps),
		"fundamental_form": to_value(&rep.fundamental_form),
		"signature": to_value(&rep.signature),
		"final_omega": to_value(done.omega()),
		"final_row_labels": done.row_names(),
		"final_col_labels": done.col_names(),
	});
	if done.free_modes.is_none() {
		let n = done.topo.n();
		if let Ok(t) = decompose::to_node_basis(&done, &IntMatrix::identity(n), None) {
			out["node_omega"] = to_value(&t.omega);
		}
	}
	if replay {
		let mut lines = vec![format!("edge basis: {}", rows_text(start.omega()))];
		let mut last = start.omega().clone();
		for s in &rep.steps {
			let changed = if s.omega == last { " (unchanged)" } else { "" };
			lines.push(format!("{}: {}{changed}", serde_json::to_string(&s.step).expect("step"), rows_text(&s.omega)));
			last = s.omega.clone();
		}
		if done.free_modes.is_some() {
			lines.push("free modes eliminated".into());
		}
		out["narrative"] = json!(lines);
	}
	Ok(out)
}

fn cmd_classify(path: &Path) -> Outcome {
	let topo = load_topology(path)?;
	let tc = find_tree_cotree(&topo)?;
	let start = decompose::to_edge_basis(&topo, &tc)?;
	let (_, ff) = decompose::fundamental_decomposition(&start)?;
	let sig = decompose::canonical_signature(&ff)?;
	Ok(to_value(&sig))
}

enum ResponseInput {
	Samples(HybridSamples),
	Model(PoleResidueModel),
}

fn load_response(path: &Path) -> Result<ResponseInput, Fail> {
	let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
	if is_csv {
		let f = fs::File::open(path).map_err(|e| Fail::io(path, e))?;
		return Ok(ResponseInput::Samples(HybridSamples::read_csv(f)?));
	}
	let model: PoleResidueModel = serde_json::from_str(&read(path)?).map_err(|e| Fail::io(path, e))?;
	Ok(ResponseInput::Model(model))
}

fn magnitude_series(h: &[(f64, extract::CMat)], style: Style) -> Vec<Series> {
	let Some((_, first)) = h.first() else {
		return vec![];
	};
	let (r, c) = first.shape();
	let mut out = Vec::new();
	for i in 0..r {
		for j in 0..c {
			let points = h.iter().map(|(w, m)| (*w, m[(i, j)].norm().max(1e-300).log10())).collect();
			out.push(Series { points, color: i * c + j, style });
		}
	}
	out
}

/// Entries of very different units share one plot, so each entry is
/// drawn in its own scale: log10 |H_ij| shifted by the median of the data.
fn plot_fit(samples: &HybridSamples, model: &PoleResidueModel, path: &Path) -> Result<(), Fail> {
	let data: Vec<(f64, extract::CMat)> = samples.omegas.iter().copied().zip(samples.values.iter().cloned()).collect();
	let (lo, hi) = (samples.omegas[0], *samples.omegas.last().expect("samples"));
	let grid = 8 * samples.len();
	let fit: Vec<(f64, extract::CMat)> = (0..grid)
		.filter_map(|k| {
			let w = lo + (hi - lo) * k as f64 / (grid - 1) as f64;
			extract::eval_model(model, Complex64::new(0.0, w)).ok().map(|m| (w, m))
		})
		.collect();
	let mut dots = magnitude_series(&data, Style::Dots);
	let mut lines = magnitude_series(&fit, Style::Line);
	for (d, l) in dots.iter_mut().zip(lines.iter_mut()) {
		let mut ys: Vec<f64> = d.points.iter().map(|p| p.1).filter(|y| y.is_finite()).collect();
		ys.sort_by(f64::total_cmp);
		let mid = ys.get(ys.len() / 2).copied().unwrap_or(0.0);
		for p in d.points.iter_mut().chain(l.points.iter_mut()) {
			p.1 = (p.1 - mid).clamp(-6.0, 6.0);
		}
	}
	dots.extend(lines);
	plot::save(&dots, path).map_err(|e| Fail::io(path, e))
}

fn cmd_extract(
	path: &Path,
	poles: usize,
	pole_freqs: &[f64],
	elements: Option<&Path>,
	with_hamiltonian: bool,
	plot_path: Option<&Path>,
) -> Outcome {
	let (model, fit_residual, samples) = match load_response(path)? {
		ResponseInput::Model(m) => {
			m.validate()?;
			(m, None, None)
		}
		ResponseInput::Samples(s) => {
			let lpr = extract::check_lpr(&s);
			if !lpr.passed {
				let (lossless, symmetry) = lpr.worst();
				let report = json!({ "lpr": to_value(&lpr) });
				return Err(Fail {
					code: DOMAIN,
					msg: format!("response is not lossless/reciprocal (loss {lossless:e}, asymmetry {symmetry:e})"),
					report: Some(report),
				});
			}
			let fit = if pole_freqs.is_empty() { extract::fit_pole_residue(&s, poles)? } else { extract::fit_with_poles(&s, pole_freqs)? };
			(fit.model, Some(fit.residual), Some(s))
		}
	};
	if let (Some(p), Some(s)) = (plot_path, samples.as_ref()) {
		plot_fit(s, &model, p)?;
	} else if let Some(p) = plot_path {
		let w: Vec<f64> = model.poles.iter().map(|t| t.omega).collect();
		let top = w.iter().copied().fold(1.0, f64::max) * 2.0;
		let omegas: Vec<f64> = (1..=400).map(|k| top * k as f64 / 400.0).filter(|x| w.iter().all(|p| (x - p).abs() > 1e-6 * p)).collect();
		let s = extract::sample(Response::Model(&model), &omegas)?;
		plot_fit(&s, &model, p)?;
	}
	let elements: PortElements = match elements {
		Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Fail::io(p, e))?,
		None => PortElements::default(),
	};
	let circuit = extract::synthesize(&model)?;
	let re = extract::reinsert_elements(&circuit, &elements)?;
	let hamiltonian = if with_hamiltonian { Some(quantize::build_hamiltonian(&re.topology)?) } else { None };
	let report = ExtractionReport {
		schema: EXTRACTION_SCHEMA.into(),
		topology: re.topology,
		node_labels: re.node_labels,
		loop_labels: re.loop_labels,
		circuit,
		model,
		fit_residual,
		hamiltonian,
	};
	Ok(to_value(&report))
}

fn plot_trajectory(traj: &dynamics::StateTrajectory, path: &Path) -> Result<(), Fail> {
	let mut series = Vec::new();
	let mut add = |values: Vec<f64>, color: usize| {
		let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
		let scale = if scale > 0.0 { scale } else { 1.0 };
		let points = traj.times.iter().zip(values).map(|(t, v)| (*t, v / scale)).collect();
		series.push(Series { points, color, style: Style::Line });
	};
	let nj = traj.phi_j[0].len();
	let ns = traj.q_s[0].len();
	if nj + ns == 0 {
		for i in 0..traj.states[0].phi.len() {
			add(traj.states.iter().map(|s| s.phi[i]).collect(), i);
		}
	}
	for i in 0..nj {
		add(traj.phi_j.iter().map(|v| v[i]).collect(), i);
	}
	for i in 0..ns {
		add(traj.q_s.iter().map(|v| v[i]).collect(), nj + i);
	}
	plot::save(&series, path).map_err(|e| Fail::io(path, e))
}

fn cmd_simulate(
	path: &Path,
	t_end: f64,
	dt: f64,
	initial: Option<&Path>,
	output: Option<&Path>,
	plot_path: Option<&Path>,
) -> Result<(), Fail> {
	let topo = load_topology(path)?;
	let init: InitialState = match initial {
		Some(p) => serde_json::from_str(&read(p)?).map_err(|e| Fail::io(p, e))?,
		None => InitialState::default(),
	};
	let state = init.resolve(&topo)?;
	let traj = dynamics::integrate(&topo, &state, t_end, dt, None)?;
	if let Some(p) = plot_path {
		plot_trajectory(&traj, p)?;
	}
	match output {
		Some(p) => {
			let f = fs::File::create(p).map_err(|e| Fail::io(p, e))?;
			traj.write_csv(std::io::BufWriter::new(f))?;
		}
		None => traj.write_csv(std::io::stdout().lock())?,
	}
	Ok(())
}

fn emit(v: &Value) {
	let mut out = std::io::stdout().lock();
	let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json"));
}

fn main() -> ExitCode {
	let cli = Cli::parse();
	let result = match &cli.cmd {
		Cmd::Validate { circuit } => cmd_validate(circuit).map(Some),
		Cmd::Quantize { circuit, zero_cap, zero_ind, standard_notation } => {
			cmd_quantize(circuit, zero_cap, zero_ind, *standard_notation).map(Some)
		}
		Cmd::Decompose { circuit, replay } => cmd_decompose(circuit, *replay).map(Some),
		Cmd::Classify { circuit } => cmd_classify(circuit).map(Some),
		Cmd::Extract { response, poles, pole_freqs, elements, quantize, plot } => {
			cmd_extract(response, *poles, pole_freqs, elements.as_deref(), *quantize, plot.as_deref()).map(Some)
		}
		Cmd::Simulate { circuit, t_end, dt, initial, output, plot } => {
			cmd_simulate(circuit, *t_end, *dt, initial.as_deref(), output.as_deref(), plot.as_deref()).map(|_| None)
		}
	};
	match result {
		Ok(v) => {
			if let Some(v) = v {
				emit(&v);
			}
			ExitCode::SUCCESS
		}
		Err(f) => {
			if let Some(r) = &f.report {
				emit(r);
			}
			eprintln!("error: {}", f.msg);
			ExitCode::from(f.code)
		}
	}
}
