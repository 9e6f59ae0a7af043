//! Hybrid-matrix model extraction: lossless/reciprocal checks, the DC
//! network-matrix constraint, pole-residue fitting, outer-product residue
//! factorization and synthesis of a transformerless lumped circuit with
//! auxiliary resonators.
//!
//! Port ordering everywhere is capacitive ports first, then inductive ports.
//! The response maps `[V_C; I_L]` to `[I_C; V_L]`.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_core::CircuitTopology;
use crate::intlin::IntMatrix;
use crate::numeric::{cholesky_pd_check, jacobi_eigen, Mat, NumericError, Vector};

pub type CMat = DMatrix<Complex64>;

/// Losslessness and hybrid-symmetry tolerance, relative to `‖H‖`.
pub const LPR_TOL: f64 = 1e-9;
/// Allowed distance of the DC coupling block from an integer.
pub const ROUNDING_TOL: f64 = 1e-6;
/// Residue eigenvalues may dip to `-PSD_RTOL * trace`.
pub const PSD_RTOL: f64 = 1e-10;
/// Relative fit residual above which fitting fails.
pub const FIT_TOL: f64 = 1e-6;
/// Components of a residue factorization below this fraction of its trace
/// are dropped as numerical noise.
pub const RESIDUE_RANK_RTOL: f64 = 1e-8;
/// Samples closer than this (relative) to a pole are rejected.
pub const POLE_GUARD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ExtractError {
	#[error("dimension mismatch: {0}")]
	Dimension(String),
	#[error("sample frequencies must be non-negative and strictly increasing")]
	Frequencies,
	#[error("non-finite sample at omega = {0}")]
	NonFinite(f64),
	#[error("response is not lossless/reciprocal: {0}")]
	NotLpr(String),
	#[error("DC coupling block is not integral (residual {residual:e}); ports do not sit on a tree/cotree")]
	NonTreeCotreePorts { residual: f64 },
	#[error("response has a pole at zero frequency")]
	ZeroFrequencyPole,
	#[error("need at least {needed} samples, got {got}")]
	TooFewSamples { needed: usize, got: usize },
	#[error("sample at omega = {omega} sits on a pole")]
	PoleAdjacent { omega: f64 },
	#[error("found {found} pole candidates, expected {expected}")]
	PoleScan { found: usize, expected: usize },
	#[error("fit residual {residual:e} exceeds tolerance")]
	FitResidual { residual: f64 },
	#[error("residue matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
	NotPsd { eigenvalue: f64 },
	#[error("coupling singular value squared {d2} exceeds one")]
	SingularValue { d2: f64 },
	#[error("model is invalid: {0}")]
	InvalidModel(String),
	#[error("evaluation at a pole")]
	AtPole,
	#[error("port `{0}` does not exist")]
	UnknownPort(String),
	#[error("element on port `{0}` needs a {1} port")]
	WrongPortKind(String, &'static str),
	#[error(transparent)]
	Numeric(#[from] NumericError),
	#[error("csv: {0}")]
	Csv(#[from] csv::Error),
	#[error("parse: {0}")]
	Parse(String),
}

pub type Result<T> = std::result::Result<T, ExtractError>;

fn default_labels(prefix: &str, n: usize) -> Vec<String> {
	(1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Sampled hybrid response on the imaginary axis.
#[derive(Debug, Clone)]
pub struct HybridSamples {
	pub c_ports: Vec<String>,
	pub l_ports: Vec<String>,
	pub omegas: Vec<f64>,
	pub values: Vec<CMat>,
}

impl HybridSamples {
	pub fn new(c_ports: Vec<String>, l_ports: Vec<String>, omegas: Vec<f64>, values: Vec<CMat>) -> Result<Self> {
		let s = Self { c_ports, l_ports, omegas, values };
		s.validate()?;
		Ok(s)
	}

	pub fn nc(&self) -> usize {
		self.c_ports.len()
	}

	pub fn nl(&self) -> usize {
		self.l_ports.len()
	}

	pub fn len(&self) -> usize {
		self.omegas.len()
	}

	pub fn is_empty(&self) -> bool {
		self.omegas.is_empty()
	}

	pub fn validate(&self) -> Result<()> {
		let p = self.nc() + self.nl();
		if self.omegas.len() != self.values.len() {
			return Err(ExtractError::Dimension("one matrix per frequency".into()));
		}
		if self.values.iter().any(|h| h.shape() != (p, p)) {
			return Err(ExtractError::Dimension(format!("matrices must be {p}x{p}")));
		}
		if self.omegas.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || self.omegas.windows(2).any(|w| w[1] <= w[0]) {
			return Err(ExtractError::Frequencies);
		}
		for (w, h) in self.omegas.iter().zip(&self.values) {
			if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
				return Err(ExtractError::NonFinite(*w));
			}
		}
		Ok(())
	}

	/// CSV with an `omega` column followed by `re`/`im` columns of each
	/// entry in row-major order. Entry headers read `c:NAME|l:NAME.re`.
	pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
		let mut wr = csv::Writer::from_writer(w);
		let ports: Vec<String> = self.c_ports.iter().map(|n| format!("c:{n}")).chain(self.l_ports.iter().map(|n| format!("l:{n}"))).collect();
		let mut header = vec!["omega".to_string()];
		for a in &ports {
			for b in &ports {
				header.push(format!("{a}|{b}.re"));
				header.push(format!("{a}|{b}.im"));
			}
		}
		wr.write_record(&header)?;
		for (w, h) in self.omegas.iter().zip(&self.values) {
			let mut rec = vec![format!("{w:e}")];
			for i in 0..h.nrows() {
				for j in 0..h.ncols() {
					rec.push(format!("{:e}", h[(i, j)].re));
					rec.push(format!("{:e}", h[(i, j)].im));
				}
			}
			wr.write_record(&rec)?;
		}
		wr.flush().map_err(|e| ExtractError::Parse(e.to_string()))?;
		Ok(())
	}

	pub fn read_csv<R: Read>(r: R) -> Result<Self> {
		let mut rd = csv::Reader::from_reader(r);
		let header = rd.headers()?.clone();
		if header.get(0).map(str::trim) != Some("omega") || header.len() < 3 || (header.len() - 1) % 2 != 0 {
			return Err(ExtractError::Parse("header must start with `omega` followed by re/im pairs".into()));
		}
		let entries = (header.len() - 1) / 2;
		let p = (entries as f64).sqrt().round() as usize;
		if p * p != entries {
			return Err(ExtractError::Parse("entry count is not a square".into()));
		}
		let mut c_ports = vec![];
		let mut l_ports = vec![];
		for j in 0..p {
			let h = header.get(1 + 2 * j).unwrap_or_default();
			let col = h.split('|').nth(1).and_then(|s| s.strip_suffix(".re")).ok_or_else(|| ExtractError::Parse(format!("bad column `{h}`")))?;
			if let Some(n) = col.strip_prefix("c:") {
				if !l_ports.is_empty() {
					return Err(ExtractError::Parse("capacitive ports must precede inductive ports".into()));
				}
				c_ports.push(n.to_string());
			} else if let Some(n) = col.strip_prefix("l:") {
				l_ports.push(n.to_string());
			} else {
				return Err(ExtractError::Parse(format!("port `{col}` lacks a c:/l: prefix")));
			}
		}
		let mut omegas = vec![];
		let mut values = vec![];
		for rec in rd.records() {
			let rec = rec?;
			let num = |k: usize| -> Result<f64> {
				rec.get(k).ok_or_else(|| ExtractError::Parse("short record".into()))?.trim().parse::<f64>().map_err(|e| ExtractError::Parse(e.to_string()))
			};
			omegas.push(num(0)?);
			let mut h = CMat::zeros(p, p);
			for i in 0..p {
				for j in 0..p {
					let k = 1 + 2 * (i * p + j);
					h[(i, j)] = Complex64::new(num(k)?, num(k + 1)?);
				}
			}
			values.push(h);
		}
		Self::new(c_ports, l_ports, omegas, values)
	}
}

/// Per-sample losslessness and hybrid-symmetry residuals.
#[derive(Debug, Clone, Serialize)]
pub struct SampleCheck {
	pub omega: f64,
	pub lossless: f64,
	pub symmetry: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LprReport {
	pub tolerance: f64,
	pub samples: Vec<SampleCheck>,
	pub passed: bool,
}

impl LprReport {
	pub fn worst(&self) -> (f64, f64) {
		self.samples.iter().fold((0.0, 0.0), |(a, b), s| (f64::max(a, s.lossless), f64::max(b, s.symmetry)))
	}
}

fn cnorm(m: &CMat) -> f64 {
	m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Each block is judged against its own scale, since admittance and
/// impedance blocks carry different units.
pub fn check_lpr(samples: &HybridSamples) -> LprReport {
	let c = samples.nc();
	let p = c + samples.nl();
	let mut out = vec![];
	for (w, h) in samples.omegas.iter().zip(&samples.values) {
		let mut lossless: f64 = 0.0;
		let mut symmetry: f64 = 0.0;
		let blocks = [(0, c, 0, c), (c, p, c, p), (0, c, c, p)];
		for &(r0, r1, c0, c1) in &blocks {
			let b = h.view((r0, c0), (r1 - r0, c1 - c0)).into_owned();
			let bt = h.view((c0, r0), (c1 - c0, r1 - r0)).into_owned();
			let scale = cnorm(&b).max(cnorm(&bt));
			if scale == 0.0 {
				continue;
			}
			let (l, s) = if r0 == c0 {
				(cnorm(&(&b + b.adjoint())), cnorm(&(&b - b.transpose())))
			} else {
				// off-diagonal pair: H_CL + H_LC^dagger = 0 and H_CL = -H_LC^T
				(cnorm(&(&b + bt.adjoint())), cnorm(&(&b + bt.transpose())))
			};
			lossless = lossless.max(l / scale);
			symmetry = symmetry.max(s / scale);
		}
		out.push(SampleCheck { omega: *w, lossless, symmetry });
	}
	let passed = out.iter().all(|s| s.lossless <= LPR_TOL && s.symmetry <= LPR_TOL);
	LprReport { tolerance: LPR_TOL, samples: out, passed }
}

/// One pole term: resonance frequency and the real coupling vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleTerm {
	pub omega: f64,
	#[serde(with = "crate::matser::vector")]
	pub r_c: Vector,
	#[serde(with = "crate::matser::vector")]
	pub r_l: Vector,
}

pub const MODEL_SCHEMA: &str = "supercircuit.pole-residue/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleResidueModel {
	#[serde(default)]
	pub c_ports: Vec<String>,
	#[serde(default)]
	pub l_ports: Vec<String>,
	pub omega_e: IntMatrix,
	#[serde(with = "crate::matser::mat")]
	pub k_cc: Mat,
	#[serde(with = "crate::matser::mat")]
	pub k_ll: Mat,
	pub poles: Vec<PoleTerm>,
}

impl PoleResidueModel {
	pub fn nc(&self) -> usize {
		self.k_cc.nrows()
	}

	pub fn nl(&self) -> usize {
		self.k_ll.nrows()
	}

	pub fn c_labels(&self) -> Vec<String> {
		if self.c_ports.len() == self.nc() { self.c_ports.clone() } else { default_labels("C", self.nc()) }
	}

	pub fn l_labels(&self) -> Vec<String> {
		if self.l_ports.len() == self.nl() { self.l_ports.clone() } else { default_labels("L", self.nl()) }
	}

	pub fn validate(&self) -> Result<()> {
		let (c, l) = (self.nc(), self.nl());
		if self.k_cc.ncols() != c || self.k_ll.ncols() != l || self.omega_e.shape() != (c, l) {
			return Err(ExtractError::Dimension(format!("expected {c} capacitive and {l} inductive ports")));
		}
		if !self.omega_e.unit_entries() {
			return Err(ExtractError::InvalidModel("DC coupling entries must lie in {-1,0,1}".into()));
		}
		for (name, k) in [("capacitive", &self.k_cc), ("inductive", &self.k_ll)] {
			if (k - k.transpose()).amax() > 1e-12 * k.amax() {
				return Err(ExtractError::InvalidModel(format!("{name} high-frequency block is not symmetric")));
			}
			if !cholesky_pd_check(k) {
				return Err(ExtractError::InvalidModel(format!("{name} high-frequency block is not positive definite")));
			}
		}
		for p in &self.poles {
			if !(p.omega > 0.0) || !p.omega.is_finite() {
				return Err(ExtractError::InvalidModel("pole frequencies must be positive".into()));
			}
			if p.r_c.len() != c || p.r_l.len() != l {
				return Err(ExtractError::Dimension("pole vector length".into()));
			}
		}
		Ok(())
	}
}

fn real(m: &Mat) -> CMat {
	m.map(|x| Complex64::new(x, 0.0))
}

fn near_pole(s: Complex64, w: f64) -> bool {
	(s * s + w * w).norm() <= POLE_GUARD * w * w
}

/// Constant DC block `[[0, -Ω], [Ωᵀ, 0]]`.
fn dc_block(omega: &IntMatrix) -> Mat {
	let (c, l) = omega.shape();
	let o = omega.to_f64();
	let mut h = Mat::zeros(c + l, c + l);
	h.view_mut((0, c), (c, l)).copy_from(&(-&o));
	h.view_mut((c, 0), (l, c)).copy_from(&o.transpose());
	h
}

/// Pole-residue form of the response.
pub fn eval_model(model: &PoleResidueModel, s: Complex64) -> Result<CMat> {
	let (c, l) = (model.nc(), model.nl());
	let mut h = real(&dc_block(&model.omega_e));
	let mut k_cc = model.k_cc.clone();
	let mut k_ll = model.k_ll.clone();
	for p in &model.poles {
		k_cc += &p.r_c * p.r_c.transpose();
		k_ll += &p.r_l * p.r_l.transpose();
	}
	h.view_mut((0, 0), (c, c)).copy_from(&(real(&k_cc) * s));
	h.view_mut((c, c), (l, l)).copy_from(&(real(&k_ll) * s));
	for p in &model.poles {
		if near_pole(s, p.omega) {
			return Err(ExtractError::AtPole);
		}
		let g = s * s / (s * s + p.omega * p.omega);
		let w = Complex64::new(p.omega, 0.0);
		let rc = real(&Mat::from_column_slice(c, 1, p.r_c.as_slice()));
		let rl = real(&Mat::from_column_slice(l, 1, p.r_l.as_slice()));
		let mut add = |r0: usize, c0: usize, m: CMat| {
			let mut v = h.view_mut((r0, c0), m.shape());
			v += m * g;
		};
		add(0, 0, &rc * rc.transpose() * (-s));
		add(0, c, &rc * rl.transpose() * (-w));
		add(c, 0, &rl * rc.transpose() * w);
		add(c, c, &rl * rl.transpose() * (-s));
	}
	Ok(h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
	pub omega: f64,
	pub c_rr: f64,
	pub l_rr: f64,
}

pub const CIRCUIT_SCHEMA: &str = "supercircuit.synthesized/1";

/// Lumped circuit: port tree edges, port cotree edges, then one auxiliary
/// node and loop per resonator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedCircuit {
	pub schema: String,
	pub c_ports: Vec<String>,
	pub l_ports: Vec<String>,
	pub omega: IntMatrix,
	#[serde(with = "crate::matser::mat")]
	pub cap: Mat,
	#[serde(with = "crate::matser::mat")]
	pub ind: Mat,
	pub resonators: Vec<Resonator>,
}

impl SynthesizedCircuit {
	pub fn nc(&self) -> usize {
		self.c_ports.len()
	}

	pub fn nl(&self) -> usize {
		self.l_ports.len()
	}

	/// Linear topology with no tunneling elements.
	pub fn to_topology(&self) -> CircuitTopology {
		let (n, l) = (self.cap.nrows(), self.ind.nrows());
		CircuitTopology::new(self.cap.clone(), self.ind.clone(), IntMatrix::zeros(n, 0), IntMatrix::zeros(l, 0), self.omega.clone(), vec![], vec![])
	}
}

/// Lumped circuit from a pole-residue model. Each resonator uses
/// `C_rr = |R_C|²` when it couples capacitively, else `C_rr = 1/(ω²|R_L|²)`.
pub fn synthesize(model: &PoleResidueModel) -> Result<SynthesizedCircuit> {
	model.validate()?;
	let (c, l) = (model.nc(), model.nl());
	let poles: Vec<&PoleTerm> = model.poles.iter().filter(|p| p.r_c.norm() > 0.0 || p.r_l.norm() > 0.0).collect();
	let r = poles.len();
	let mut cap = Mat::zeros(c + r, c + r);
	let mut ind = Mat::zeros(l + r, l + r);
	cap.view_mut((0, 0), (c, c)).copy_from(&model.k_cc);
	ind.view_mut((0, 0), (l, l)).copy_from(&model.k_ll);
	let mut resonators = vec![];
	for (k, p) in poles.iter().enumerate() {
		let w2 = p.omega * p.omega;
		let rc2 = p.r_c.norm_squared();
		let c_rr = if rc2 > 0.0 { rc2 } else { 1.0 / (w2 * p.r_l.norm_squared()) };
		let l_rr = 1.0 / (w2 * c_rr);
		{
			let mut cc = cap.view_mut((0, 0), (c, c));
			cc += &p.r_c * p.r_c.transpose();
		}
		{
			let mut ll = ind.view_mut((0, 0), (l, l));
			ll += &p.r_l * p.r_l.transpose();
		}
		let cr = &p.r_c * c_rr.sqrt();
		let lr = &p.r_l * l_rr.sqrt();
		for i in 0..c {
			cap[(i, c + k)] = cr[i];
			cap[(c + k, i)] = cr[i];
		}
		for i in 0..l {
			ind[(i, l + k)] = lr[i];
			ind[(l + k, i)] = lr[i];
		}
		cap[(c + k, c + k)] = c_rr;
		ind[(l + k, l + k)] = l_rr;
		resonators.push(Resonator { omega: p.omega, c_rr, l_rr });
	}
	if !cholesky_pd_check(&cap) || !cholesky_pd_check(&ind) {
		return Err(ExtractError::InvalidModel("synthesized capacitance or inductance is not positive definite".into()));
	}
	let omega = IntMatrix::from_fn(c + r, l + r, |i, j| {
		if i < c && j < l {
			model.omega_e.get(i, j)
		} else {
			(i >= c && j >= l && i - c == j - l) as i64
		}
	});
	Ok(SynthesizedCircuit { schema: CIRCUIT_SCHEMA.into(), c_ports: model.c_labels(), l_ports: model.l_labels(), omega, cap, ind, resonators })
}

/// Port response of a lumped circuit by eliminating the internal node
/// voltages and loop currents from the full Laplace-domain equations
/// `I = sC V - Ω J`, `U = sL J + Ωᵀ V`.
pub fn eval_circuit(circuit: &SynthesizedCircuit, s: Complex64) -> Result<CMat> {
	let (c, l) = (circuit.nc(), circuit.nl());
	let (n, m) = (circuit.cap.nrows(), circuit.ind.nrows());
	let (ri, rj) = (n - c, m - l);
	for res in &circuit.resonators {
		if near_pole(s, res.omega) {
			return Err(ExtractError::AtPole);
		}
	}
	let y = real(&circuit.cap) * s;
	let z = real(&circuit.ind) * s;
	let o = real(&circuit.omega.to_f64());
	let p = c + l;
	// internal unknowns u = [V_int; J_int]; inputs x = [V_C; J_L]
	let k = ri + rj;
	let mut a = CMat::zeros(k, k);
	let mut b = CMat::zeros(k, p);
	for i in 0..ri {
		for j in 0..ri {
			a[(i, j)] = y[(c + i, c + j)];
		}
		for j in 0..rj {
			a[(i, ri + j)] = -o[(c + i, l + j)];
		}
		for j in 0..c {
			b[(i, j)] = -y[(c + i, j)];
		}
		for j in 0..l {
			b[(i, c + j)] = o[(c + i, j)];
		}
	}
	for i in 0..rj {
		for j in 0..rj {
			a[(ri + i, ri + j)] = z[(l + i, l + j)];
		}
		for j in 0..ri {
			a[(ri + i, j)] = o[(c + j, l + i)];
		}
		for j in 0..l {
			b[(ri + i, c + j)] = -z[(l + i, j)];
		}
		for j in 0..c {
			b[(ri + i, j)] = -o[(j, l + i)];
		}
	}
	let u = if k == 0 {
		CMat::zeros(0, p)
	} else {
		a.lu().solve(&b).ok_or(ExtractError::AtPole)?
	};
	let mut h = CMat::zeros(p, p);
	for col in 0..p {
		let x = |idx: usize| if idx == col { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
		for i in 0..c {
			let mut acc = Complex64::new(0.0, 0.0);
			for j in 0..c {
				acc += y[(i, j)] * x(j);
			}
			for j in 0..ri {
				acc += y[(i, c + j)] * u[(j, col)];
			}
			for j in 0..l {
				acc -= o[(i, j)] * x(c + j);
			}
			for j in 0..rj {
				acc -= o[(i, l + j)] * u[(ri + j, col)];
			}
			h[(i, col)] = acc;
		}
		for i in 0..l {
			let mut acc = Complex64::new(0.0, 0.0);
			for j in 0..l {
				acc += z[(i, j)] * x(c + j);
			}
			for j in 0..rj {
				acc += z[(i, l + j)] * u[(ri + j, col)];
			}
			for j in 0..c {
				acc += o[(j, i)] * x(j);
			}
			for j in 0..ri {
				acc += o[(c + j, i)] * u[(j, col)];
			}
			h[(c + i, col)] = acc;
		}
	}
	Ok(h)
}

pub enum Response<'a> {
	Model(&'a PoleResidueModel),
	Circuit(&'a SynthesizedCircuit),
}

pub fn eval_hybrid(r: Response<'_>, s: Complex64) -> Result<CMat> {
	match r {
		Response::Model(m) => eval_model(m, s),
		Response::Circuit(c) => eval_circuit(c, s),
	}
}

/// Sample any response on `s = iω`.
pub fn sample(r: Response<'_>, omegas: &[f64]) -> Result<HybridSamples> {
	let (c_ports, l_ports) = match &r {
		Response::Model(m) => (m.c_labels(), m.l_labels()),
		Response::Circuit(c) => (c.c_ports.clone(), c.l_ports.clone()),
	};
	let values = omegas
		.iter()
		.map(|&w| match &r {
			Response::Model(m) => eval_model(m, Complex64::new(0.0, w)),
			Response::Circuit(c) => eval_circuit(c, Complex64::new(0.0, w)),
		})
		.collect::<Result<Vec<_>>>()?;
	HybridSamples::new(c_ports, l_ports, omegas.to_vec(), values)
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroFrequency {
	pub omega_e: IntMatrix,
	/// Largest distance of the extrapolated block from its rounded value.
	pub residual: f64,
}

fn round_unit(x: &Mat) -> Result<ZeroFrequency> {
	let mut residual: f64 = 0.0;
	let mut out = IntMatrix::zeros(x.nrows(), x.ncols());
	for i in 0..x.nrows() {
		for j in 0..x.ncols() {
			let r = x[(i, j)].round();
			residual = residual.max((x[(i, j)] - r).abs());
			out.set(i, j, r as i64);
		}
	}
	if residual > ROUNDING_TOL || !out.unit_entries() {
		return Err(ExtractError::NonTreeCotreePorts { residual });
	}
	Ok(ZeroFrequency { omega_e: out, residual })
}

/// DC coupling block from the lowest samples. Below the first pole the
/// real off-diagonal response is a series in `ω²`, extrapolated to zero.
pub fn extract_zero_freq(samples: &HybridSamples) -> Result<ZeroFrequency> {
	samples.validate()?;
	let (c, l) = (samples.nc(), samples.nl());
	if samples.is_empty() {
		return Err(ExtractError::TooFewSamples { needed: 1, got: 0 });
	}
	let h0 = &samples.values[0];
	let w0 = samples.omegas[0];
	for i in 0..c + l {
		let d = h0[(i, i)];
		let bad = if w0 == 0.0 { d.norm() > 1e-12 * cnorm(h0).max(1.0) } else { !(d.im > 0.0) };
		if bad {
			return Err(ExtractError::ZeroFrequencyPole);
		}
	}
	let off = |h: &CMat| Mat::from_fn(c, l, |i, j| 0.5 * (-h[(i, c + j)].re + h[(c + j, i)].re));
	// polynomial in ω² through the lowest samples, evaluated at zero
	let m = if w0 == 0.0 { 1 } else { samples.len().min(3) };
	let mut x = Mat::zeros(c, l);
	for a in 0..m {
		let mut weight = 1.0;
		for b in 0..m {
			if a != b {
				let (ya, yb) = (samples.omegas[a].powi(2), samples.omegas[b].powi(2));
				weight *= yb / (yb - ya);
			}
		}
		x += off(&samples.values[a]) * weight;
	}
	round_unit(&x)
}

pub fn zero_freq_of_model(model: &PoleResidueModel) -> ZeroFrequency {
	ZeroFrequency { omega_e: model.omega_e.clone(), residual: 0.0 }
}

/// Real outer-product factors `(R_C, R_L)` of a pole residue matrix
/// `K = ω²/2 [[A, -iB], [iBᵀ, D]]` with `A = ΣR_C R_Cᵀ`, `B = ΣR_C R_Lᵀ`,
/// `D = ΣR_L R_Lᵀ`.
pub fn decompose_residues(k: &CMat, omega: f64, nc: usize) -> Result<Vec<(Vector, Vector)>> {
	let p = k.nrows();
	if k.ncols() != p || nc > p {
		return Err(ExtractError::Dimension("residue matrix shape".into()));
	}
	let nl = p - nc;
	let pm = k * Complex64::new(2.0 / (omega * omega), 0.0);
	let a = Mat::from_fn(nc, nc, |i, j| 0.5 * (pm[(i, j)].re + pm[(j, i)].re));
	let d = Mat::from_fn(nl, nl, |i, j| 0.5 * (pm[(nc + i, nc + j)].re + pm[(nc + j, nc + i)].re));
	let b = Mat::from_fn(nc, nl, |i, j| 0.5 * (-pm[(i, nc + j)].im + pm[(nc + j, i)].im));
	// Hermitian PSD test through the real embedding [[Re, -Im], [Im, Re]]
	let mut emb = Mat::zeros(2 * p, 2 * p);
	for i in 0..p {
		for j in 0..p {
			let z = 0.5 * (pm[(i, j)] + pm[(j, i)].conj());
			emb[(i, j)] = z.re;
			emb[(p + i, p + j)] = z.re;
			emb[(i, p + j)] = -z.im;
			emb[(p + i, j)] = z.im;
		}
	}
	let trace = a.trace() + d.trace();
	if trace == 0.0 {
		return Ok(vec![]);
	}
	let (ev, _) = jacobi_eigen(&emb);
	let min = ev.iter().cloned().fold(f64::INFINITY, f64::min);
	if min < -PSD_RTOL * trace {
		return Err(ExtractError::NotPsd { eigenvalue: min });
	}
	let drop = RESIDUE_RANK_RTOL * trace;
	let factor = |m: &Mat| -> (Mat, Mat) {
		let (vals, vecs) = jacobi_eigen(m);
		let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > drop).collect();
		let f = Mat::from_fn(m.nrows(), keep.len(), |r, k| vecs[(r, keep[k])] * vals[keep[k]].sqrt());
		let pinv = Mat::from_fn(keep.len(), m.nrows(), |k, r| vecs[(r, keep[k])] / vals[keep[k]].sqrt());
		(f, pinv)
	};
	let (uc, uc_pinv) = factor(&a);
	let (ul, ul_pinv) = factor(&d);
	let x = &uc_pinv * &b * ul_pinv.transpose();
	let mut out: Vec<(Vector, Vector)> = vec![];
	let (mut yk, mut zk) = (Mat::zeros(uc.ncols(), 0), Mat::zeros(ul.ncols(), 0));
	if x.nrows() > 0 && x.ncols() > 0 {
		let svd = x.clone().svd(true, true);
		let (y, zt) = (svd.u.unwrap(), svd.v_t.unwrap());
		yk = y.clone();
		zk = zt.transpose();
		for (nu, &dv) in svd.singular_values.iter().enumerate() {
			let d2 = dv * dv;
			if d2 > 1.0 + 1e-6 {
				return Err(ExtractError::SingularValue { d2 });
			}
			let cv = &uc * y.column(nu);
			let lv = &ul * zt.row(nu).transpose();
			out.push((&cv * dv.min(1.0), lv));
			let xi2 = 1.0 - d2;
			if xi2 > RESIDUE_RANK_RTOL {
				out.push((cv * xi2.sqrt(), Vector::zeros(nl)));
			}
		}
	}
	// directions of A or D not reached by the singular vectors
	let rest = |f: &Mat, basis: &Mat| -> Vec<Vector> {
		let proj = Mat::identity(f.ncols(), f.ncols()) - basis * basis.transpose();
		let m = f * proj * f.transpose();
		let (f2, _) = factor(&m);
		(0..f2.ncols()).map(|k| f2.column(k).into_owned()).collect()
	};
	for v in rest(&uc, &yk) {
		out.push((v, Vector::zeros(nl)));
	}
	for v in rest(&ul, &zk) {
		out.push((Vector::zeros(nc), v));
	}
	let scale = trace.sqrt();
	out.retain(|(c, l)| c.norm_squared() + l.norm_squared() > drop && (c.norm() + l.norm()) > 1e-300 * scale);
	for (c, l) in out.iter_mut() {
		let lead = c.iter().chain(l.iter()).find(|x| x.abs() > 1e-12 * scale).cloned().unwrap_or(1.0);
		if lead < 0.0 {
			*c = -&*c;
			*l = -&*l;
		}
	}
	Ok(out)
}

/// Residue matrix of one pole term at `s = iω`.
pub fn residue_matrix(a: &Mat, b: &Mat, d: &Mat, omega: f64) -> CMat {
	let (c, l) = (a.nrows(), d.nrows());
	let f = 0.5 * omega * omega;
	let mut k = CMat::zeros(c + l, c + l);
	for i in 0..c {
		for j in 0..c {
			k[(i, j)] = Complex64::new(f * a[(i, j)], 0.0);
		}
		for j in 0..l {
			k[(i, c + j)] = Complex64::new(0.0, -f * b[(i, j)]);
			k[(c + j, i)] = Complex64::new(0.0, f * b[(i, j)]);
		}
	}
	for i in 0..l {
		for j in 0..l {
			k[(c + i, c + j)] = Complex64::new(f * d[(i, j)], 0.0);
		}
	}
	k
}

struct LinearFit {
	total_cc: Mat,
	total_ll: Mat,
	dc: Mat,
	a: Vec<Mat>,
	b: Vec<Mat>,
	d: Vec<Mat>,
	residual: f64,
}

/// Least squares `Φ X ≈ Y` with column equilibration.
fn lstsq(phi: &Mat, y: &Mat) -> (Mat, f64) {
	let scales: Vec<f64> = (0..phi.ncols()).map(|j| phi.column(j).norm().max(1e-300)).collect();
	let scaled = Mat::from_fn(phi.nrows(), phi.ncols(), |i, j| phi[(i, j)] / scales[j]);
	let svd = scaled.svd(true, true);
	let smax = svd.singular_values.max();
	let sol = svd.solve(y, 1e-14 * smax).unwrap_or_else(|_| Mat::zeros(phi.ncols(), y.ncols()));
	let x = Mat::from_fn(sol.nrows(), sol.ncols(), |i, j| sol[(i, j)] / scales[i]);
	let yn = y.norm();
	let r = if yn == 0.0 { 0.0 } else { (phi * &x - y).norm() / yn };
	(x, r)
}

struct BlockData {
	omegas: Vec<f64>,
	cc: Mat,
	ll: Mat,
	cl: Mat,
	nc: usize,
	nl: usize,
}

fn block_data(s: &HybridSamples) -> BlockData {
	let (c, l) = (s.nc(), s.nl());
	let m = s.len();
	let mut cc = Mat::zeros(m, c * c);
	let mut ll = Mat::zeros(m, l * l);
	let mut cl = Mat::zeros(m, c * l);
	for (k, h) in s.values.iter().enumerate() {
		for i in 0..c {
			for j in 0..c {
				cc[(k, i * c + j)] = 0.5 * (h[(i, j)].im + h[(j, i)].im);
			}
			for j in 0..l {
				cl[(k, i * l + j)] = 0.5 * (-h[(i, c + j)].re + h[(c + j, i)].re);
			}
		}
		for i in 0..l {
			for j in 0..l {
				ll[(k, i * l + j)] = 0.5 * (h[(c + i, c + j)].im + h[(c + j, c + i)].im);
			}
		}
	}
	BlockData { omegas: s.omegas.clone(), cc, ll, cl, nc: c, nl: l }
}

fn linear_fit(data: &BlockData, poles: &[f64]) -> LinearFit {
	let m = data.omegas.len();
	let r = poles.len();
	let reactive = Mat::from_fn(m, 1 + r, |k, j| {
		let w = data.omegas[k];
		if j == 0 { w } else { w * w * w / (poles[j - 1] * poles[j - 1] - w * w) }
	});
	let coupling = Mat::from_fn(m, 1 + r, |k, j| {
		let w = data.omegas[k];
		if j == 0 {
			1.0
		} else {
			let p = poles[j - 1];
			-w * w * p / (p * p - w * w)
		}
	});
	let (xc, rc) = lstsq(&reactive, &data.cc);
	let (xl, rl) = lstsq(&reactive, &data.ll);
	let (xo, ro) = lstsq(&coupling, &data.cl);
	let (c, l) = (data.nc, data.nl);
	let unpack = |x: &Mat, row: usize, a: usize, b: usize| Mat::from_fn(a, b, |i, j| x[(row, i * b + j)]);
	let sym = |m: Mat| 0.5 * (&m + m.transpose());
	LinearFit {
		total_cc: sym(unpack(&xc, 0, c, c)),
		total_ll: sym(unpack(&xl, 0, l, l)),
		dc: unpack(&xo, 0, c, l),
		a: (0..r).map(|k| sym(unpack(&xc, 1 + k, c, c))).collect(),
		b: (0..r).map(|k| unpack(&xo, 1 + k, c, l)).collect(),
		d: (0..r).map(|k| sym(unpack(&xl, 1 + k, l, l))).collect(),
		residual: (rc * rc + rl * rl + ro * ro).sqrt(),
	}
}

/// Intervals between consecutive samples where some diagonal entry of
/// `H(iω)/i` drops. Lossless diagonal responses increase with `ω` except
/// across a pole, so each drop brackets one. Sorted by drop size.
fn pole_brackets(s: &HybridSamples) -> Vec<(f64, f64, f64)> {
	let p = s.nc() + s.nl();
	let scale: Vec<f64> = (0..p).map(|i| s.values.iter().map(|h| h[(i, i)].im.abs()).fold(0.0, f64::max).max(1e-300)).collect();
	let mut out = vec![];
	for k in 0..s.len().saturating_sub(1) {
		let (h0, h1) = (&s.values[k], &s.values[k + 1]);
		let drop = (0..p).map(|i| (h0[(i, i)].im - h1[(i, i)].im) / scale[i]).fold(0.0, f64::max);
		if drop > 0.0 {
			out.push((s.omegas[k], s.omegas[k + 1], drop));
		}
	}
	out.sort_by(|a, b| b.2.total_cmp(&a.2));
	out
}

fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
	let g = (5f64.sqrt() - 1.0) / 2.0;
	let (mut a, mut b) = (a, b);
	let mut x1 = b - g * (b - a);
	let mut x2 = a + g * (b - a);
	let (mut f1, mut f2) = (f(x1), f(x2));
	for _ in 0..200 {
		if (b - a) <= 1e-15 * b.abs() {
			break;
		}
		if f1 <= f2 {
			b = x2;
			x2 = x1;
			f2 = f1;
			x1 = b - g * (b - a);
			f1 = f(x1);
		} else {
			a = x1;
			x1 = x2;
			f1 = f2;
			x2 = a + g * (b - a);
			f2 = f(x2);
		}
	}
	if f1 <= f2 { x1 } else { x2 }
}

/// Fitted model plus diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
	pub model: PoleResidueModel,
	pub residual: f64,
	pub dc_residual: f64,
}

/// Locate `pole_count` poles by scanning for drops of the diagonal
/// response and refining each by golden section on the linear fit
/// residual, then fit and factor the residues.
pub fn fit_pole_residue(samples: &HybridSamples, pole_count: usize) -> Result<FitReport> {
	let needed = 4 * (pole_count + 1);
	if samples.len() < needed {
		return Err(ExtractError::TooFewSamples { needed, got: samples.len() });
	}
	require_lpr(samples)?;
	let brackets = pole_brackets(samples);
	if brackets.len() < pole_count {
		return Err(ExtractError::PoleScan { found: brackets.len(), expected: pole_count });
	}
	let mut brackets: Vec<(f64, f64)> = brackets.into_iter().take(pole_count).map(|(a, b, _)| (a, b)).collect();
	brackets.sort_by(|x, y| x.0.total_cmp(&y.0));
	let data = block_data(samples);
	let mut poles: Vec<f64> = brackets.iter().map(|(a, b)| 0.5 * (a + b)).collect();
	// coordinate descent; each later search is confined near the last move
	let mut step: Vec<f64> = brackets.iter().map(|(a, b)| b - a).collect();
	for _sweep in 0..60 {
		let mut moved: f64 = 0.0;
		for k in 0..poles.len() {
			let (a, b) = brackets[k];
			let half = (4.0 * step[k]).max(1e-13 * poles[k]);
			let (lo, hi) = ((poles[k] - half).max(a), (poles[k] + half).min(b));
			let w = golden_section(
				|x| {
					let mut trial = poles.clone();
					trial[k] = x;
					linear_fit(&data, &trial).residual
				},
				lo,
				hi,
			);
			step[k] = (w - poles[k]).abs();
			moved = moved.max(step[k] / w);
			poles[k] = w;
		}
		if moved < 1e-14 {
			break;
		}
	}
	fit_with_poles(samples, &poles)
}

fn require_lpr(samples: &HybridSamples) -> Result<()> {
	samples.validate()?;
	let rep = check_lpr(samples);
	if !rep.passed {
		let (l, s) = rep.worst();
		return Err(ExtractError::NotLpr(format!("lossless residual {l:e}, symmetry residual {s:e}")));
	}
	Ok(())
}

/// Residue fit for externally supplied pole frequencies.
pub fn fit_with_poles(samples: &HybridSamples, poles: &[f64]) -> Result<FitReport> {
	require_lpr(samples)?;
	for &p in poles {
		if !(p > 0.0) {
			return Err(ExtractError::InvalidModel("pole frequencies must be positive".into()));
		}
		if let Some(&w) = samples.omegas.iter().find(|&&w| (w - p).abs() <= POLE_GUARD * p) {
			return Err(ExtractError::PoleAdjacent { omega: w });
		}
	}
	let data = block_data(samples);
	let fit = linear_fit(&data, poles);
	if !(fit.residual <= FIT_TOL) {
		return Err(ExtractError::FitResidual { residual: fit.residual });
	}
	let dc = round_unit(&fit.dc)?;
	let (c, l) = (samples.nc(), samples.nl());
	let mut k_cc = fit.total_cc.clone();
	let mut k_ll = fit.total_ll.clone();
	let mut terms = vec![];
	for (k, &w) in poles.iter().enumerate() {
		let res = residue_matrix(&fit.a[k], &fit.b[k], &fit.d[k], w);
		for (r_c, r_l) in decompose_residues(&res, w, c)? {
			k_cc -= &r_c * r_c.transpose();
			k_ll -= &r_l * r_l.transpose();
			terms.push(PoleTerm { omega: w, r_c, r_l });
		}
	}
	let model = PoleResidueModel {
		c_ports: samples.c_ports.clone(),
		l_ports: samples.l_ports.clone(),
		omega_e: dc.omega_e,
		k_cc: 0.5 * (&k_cc + k_cc.transpose()),
		k_ll: 0.5 * (&k_ll + k_ll.transpose()),
		poles: terms,
	};
	debug_assert_eq!(model.k_cc.nrows(), c);
	debug_assert_eq!(model.k_ll.nrows(), l);
	model.validate()?;
	Ok(FitReport { model, residual: fit.residual, dc_residual: dc.residual })
}

/// Junction across a capacitive port, optionally with extra shunt capacitance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortJunction {
	pub port: String,
	pub ej: f64,
	#[serde(default)]
	pub extra_capacitance: f64,
}

/// Phase slip along an inductive port, optionally with extra series inductance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortSlip {
	pub port: String,
	pub es: f64,
	#[serde(default)]
	pub extra_inductance: f64,
}

/// Charge offset `q_ext` on a capacitive port or flux offset `phi_ext` on an
/// inductive port.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortDrive {
	pub port: String,
	pub value: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PortElements {
	#[serde(default)]
	pub junctions: Vec<PortJunction>,
	#[serde(default)]
	pub slips: Vec<PortSlip>,
	#[serde(default)]
	pub drives: Vec<PortDrive>,
}

/// Topology in edge variables after reinsertion; junction ports lead the
/// rows and slip ports lead the columns.
#[derive(Debug, Clone)]
pub struct Reinserted {
	pub topology: CircuitTopology,
	pub node_labels: Vec<String>,
	pub loop_labels: Vec<String>,
}

pub fn reinsert_elements(circuit: &SynthesizedCircuit, elements: &PortElements) -> Result<Reinserted> {
	let (c, l) = (circuit.nc(), circuit.nl());
	let (n, m) = (circuit.cap.nrows(), circuit.ind.nrows());
	let find = |name: &str, want_c: bool| -> Result<usize> {
		if let Some(i) = circuit.c_ports.iter().position(|p| p == name) {
			return if want_c { Ok(i) } else { Err(ExtractError::WrongPortKind(name.into(), "inductive")) };
		}
		if let Some(i) = circuit.l_ports.iter().position(|p| p == name) {
			return if want_c { Err(ExtractError::WrongPortKind(name.into(), "capacitive")) } else { Ok(i) };
		}
		Err(ExtractError::UnknownPort(name.into()))
	};
	let jports = elements.junctions.iter().map(|j| find(&j.port, true)).collect::<Result<Vec<_>>>()?;
	let sports = elements.slips.iter().map(|s| find(&s.port, false)).collect::<Result<Vec<_>>>()?;
	let dup = |v: &[usize]| (1..v.len()).any(|i| v[..i].contains(&v[i]));
	if dup(&jports) || dup(&sports) {
		return Err(ExtractError::InvalidModel("one tunneling element per port".into()));
	}
	let mut rows: Vec<usize> = jports.clone();
	rows.extend((0..n).filter(|i| !jports.contains(i)));
	let mut cols: Vec<usize> = sports.clone();
	cols.extend((0..m).filter(|i| !sports.contains(i)));
	let mut cap = Mat::from_fn(n, n, |i, j| circuit.cap[(rows[i], rows[j])]);
	let mut ind = Mat::from_fn(m, m, |i, j| circuit.ind[(cols[i], cols[j])]);
	for (k, j) in elements.junctions.iter().enumerate() {
		cap[(k, k)] += j.extra_capacitance;
	}
	for (k, s) in elements.slips.iter().enumerate() {
		ind[(k, k)] += s.extra_inductance;
	}
	let omega = IntMatrix::from_fn(n, m, |i, j| circuit.omega.get(rows[i], cols[j]));
	let a_j = IntMatrix::from_fn(n, jports.len(), |i, j| (i == j) as i64);
	let b_s = IntMatrix::from_fn(m, sports.len(), |i, j| (i == j) as i64);
	let e_j = elements.junctions.iter().map(|j| j.ej).collect();
	let e_s = elements.slips.iter().map(|s| s.es).collect();
	let mut topo = CircuitTopology::new(cap, ind, a_j, b_s, omega, e_j, e_s);
	for d in &elements.drives {
		if let Some(i) = circuit.c_ports.iter().position(|p| *p == d.port) {
			let row = rows.iter().position(|&r| r == i).unwrap_or(i);
			topo.q_ext[row] += d.value;
		} else if let Some(i) = circuit.l_ports.iter().position(|p| *p == d.port) {
			let col = cols.iter().position(|&r| r == i).unwrap_or(i);
			topo.phi_ext[col] += d.value;
		} else {
			return Err(ExtractError::UnknownPort(d.port.clone()));
		}
	}
	let label = |i: usize, ports: &[String], k: usize| if i < k { ports[i].clone() } else { format!("r{}", i - k + 1) };
	let node_labels = rows.iter().map(|&i| label(i, &circuit.c_ports, c)).collect();
	let loop_labels = cols.iter().map(|&i| label(i, &circuit.l_ports, l)).collect();
	Ok(Reinserted { topology: topo, node_labels, loop_labels })
}

/// Two capacitive and two inductive ports, one resonance; the first
/// capacitive and first inductive port share a loop.
pub fn fluxonium_drive_model() -> PoleResidueModel {
	PoleResidueModel {
		c_ports: vec!["C1".into(), "C2".into()],
		l_ports: vec!["L1".into(), "L2".into()],
		omega_e: IntMatrix::from_rows(&[vec![1, 0], vec![0, 0]]),
		k_cc: Mat::from_row_slice(2, 2, &[5.0e-15, 0.4e-15, 0.4e-15, 2.0e-15]),
		k_ll: Mat::from_row_slice(2, 2, &[300.0e-9, 2.0e-9, 2.0e-9, 1.0e-9]),
		poles: vec![PoleTerm {
			omega: 2.0 * std::f64::consts::PI * 7.5e9,
			r_c: Vector::from_vec(vec![3.0e-8, 1.2e-8]),
			r_l: Vector::from_vec(vec![4.0e-5, 0.8e-5]),
		}],
	}
}

#[cfg(test)]
mod tests {
	use super::*;
	use proptest::prelude::*;
	use rand::{Rng, SeedableRng};
	use rand_chacha::ChaCha8Rng;

	fn iw(w: f64) -> Complex64 {
		Complex64::new(0.0, w)
	}

	/// Per-block relative difference.
	fn block_rel(a: &CMat, b: &CMat, c: usize) -> f64 {
		let p = a.nrows();
		let mut worst: f64 = 0.0;
		for &(r0, r1) in &[(0, c), (c, p)] {
			for &(c0, c1) in &[(0, c), (c, p)] {
				if r1 == r0 || c1 == c0 {
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

	fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
		(0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
	}

	/// Response of a single resonator coupled capacitively and inductively,
	/// solved by hand from its two internal equations.
	#[test]
	fn single_resonator_hand_solution() {
		let model = PoleResidueModel {
			c_ports: vec![],
			l_ports: vec![],
			omega_e: IntMatrix::from_rows(&[vec![1]]),
			k_cc: Mat::from_element(1, 1, 2.0),
			k_ll: Mat::from_element(1, 1, 3.0),
			poles: vec![PoleTerm { omega: 2.0, r_c: Vector::from_element(1, 0.5), r_l: Vector::from_element(1, 0.7) }],
		};
		let circ = synthesize(&model).unwrap();
		let (c_rr, l_rr) = (circ.resonators[0].c_rr, circ.resonators[0].l_rr);
		assert!((c_rr - 0.25).abs() < 1e-15 && (c_rr * l_rr - 0.25).abs() < 1e-15);
		let s = Complex64::new(0.3, 1.1);
		// internal node: 0 = s c V + s C_rr v - i ; loop: 0 = s l J + s L_rr i + v
		let (cc, ll) = (circ.cap[(0, 1)], circ.ind[(0, 1)]);
		let (v, jv) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
		let det = s * c_rr * s * l_rr + 1.0;
		let vr = (-(s * cc * v) * s * l_rr + (s * ll * jv)) / det;
		let ir = s * cc * v + s * c_rr * vr;
		let i_port = s * circ.cap[(0, 0)] * v + s * cc * vr - jv;
		let v_port = s * circ.ind[(0, 0)] * jv + s * ll * ir + v;
		let h = eval_circuit(&circ, s).unwrap();
		assert!((h[(0, 0)] - i_port).norm() < 1e-12 * i_port.norm());
		assert!((h[(1, 0)] - v_port).norm() < 1e-12 * v_port.norm());
		let hm = eval_model(&model, s).unwrap();
		assert!(block_rel(&h, &hm, 1) < 1e-12);
	}

	#[test]
	fn pure_capacitor_port() {
		let model = PoleResidueModel {
			c_ports: vec![],
			l_ports: vec![],
			omega_e: IntMatrix::zeros(1, 0),
			k_cc: Mat::from_element(1, 1, 1e-12),
			k_ll: Mat::zeros(0, 0),
			poles: vec![],
		};
		let h = eval_model(&model, iw(1e9)).unwrap();
		assert!((h[(0, 0)] - Complex64::new(0.0, 1e-3)).norm() < 1e-18);
		let circ = synthesize(&model).unwrap();
		assert_eq!(eval_circuit(&circ, iw(1e9)).unwrap(), h);
		let s = sample(Response::Model(&model), &grid(1e8, 1e10, 20)).unwrap();
		assert!(check_lpr(&s).passed);
	}

	#[test]
	fn lossy_samples_fail_lpr() {
		let model = fluxonium_drive_model();
		let mut s = sample(Response::Model(&model), &grid(1e8, 2e10, 30)).unwrap();
		assert!(check_lpr(&s).passed);
		for h in s.values.iter_mut() {
			h[(0, 0)] += Complex64::new(1e-6, 0.0);
		}
		let rep = check_lpr(&s);
		assert!(!rep.passed);
		assert!(rep.worst().0 > LPR_TOL);
		assert!(matches!(fit_pole_residue(&s, 1), Err(ExtractError::NotLpr(_))));
	}

	#[test]
	fn zero_frequency_examples() {
		let lc = PoleResidueModel {
			c_ports: vec![],
			l_ports: vec![],
			omega_e: IntMatrix::from_rows(&[vec![1]]),
			k_cc: Mat::from_element(1, 1, 1e-12),
			k_ll: Mat::from_element(1, 1, 1e-9),
			poles: vec![],
		};
		let s = sample(Response::Model(&lc), &grid(1e8, 1e9, 10)).unwrap();
		assert_eq!(extract_zero_freq(&s).unwrap().omega_e, IntMatrix::from_rows(&[vec![1]]));
		let mut dec = lc.clone();
		dec.omega_e = IntMatrix::from_rows(&[vec![0]]);
		let s = sample(Response::Model(&dec), &grid(0.0, 1e9, 10)).unwrap();
		assert_eq!(extract_zero_freq(&s).unwrap().omega_e, IntMatrix::from_rows(&[vec![0]]));

		let model = fluxonium_drive_model();
		let w = model.poles[0].omega;
		let s = sample(Response::Model(&model), &grid(w / 50.0, 2.0 * w, 60)).unwrap();
		let z = extract_zero_freq(&s).unwrap();
		assert_eq!(z.omega_e, IntMatrix::from_rows(&[vec![1, 0], vec![0, 0]]));
		assert!(z.residual < 1e-6);
	}

	#[test]
	fn zero_frequency_errors() {
		let mut s = sample(Response::Model(&fluxonium_drive_model()), &grid(1e8, 1e9, 10)).unwrap();
		for h in s.values.iter_mut() {
			h[(0, 2)] += Complex64::new(-0.3, 0.0);
			h[(2, 0)] += Complex64::new(0.3, 0.0);
		}
		assert!(matches!(extract_zero_freq(&s), Err(ExtractError::NonTreeCotreePorts { .. })));
		// series capacitor seen from a capacitive port: -i/(ωC)
		let omegas = grid(1e8, 1e9, 10);
		let values = omegas.iter().map(|w| CMat::from_element(1, 1, Complex64::new(0.0, -1.0 / (w * 1e-12)))).collect();
		let s = HybridSamples::new(vec!["a".into()], vec![], omegas, values).unwrap();
		assert!(matches!(extract_zero_freq(&s), Err(ExtractError::ZeroFrequencyPole)));
	}

	#[test]
	fn model_dc_block() {
		let model = fluxonium_drive_model();
		let h = eval_model(&model, Complex64::new(0.0, 0.0)).unwrap();
		let expected = [[0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]];
		for i in 0..4 {
			for j in 0..4 {
				assert_eq!(h[(i, j)], Complex64::new(expected[i][j], 0.0));
			}
		}
		let circ = synthesize(&model).unwrap();
		let hc = eval_circuit(&circ, Complex64::new(0.0, 0.0)).unwrap();
		for i in 0..4 {
			for j in 0..4 {
				assert!((hc[(i, j)] - h[(i, j)]).norm() <= 1e-12);
			}
		}
	}

	/// Synthesized matrices against the matching conditions written out by
	/// hand for the two-port-pair example.
	#[test]
	fn fluxonium_drive_synthesis() {
		let model = fluxonium_drive_model();
		let circ = synthesize(&model).unwrap();
		let p = &model.poles[0];
		let (rc, rl) = (&p.r_c, &p.r_l);
		let c_rr = rc[0] * rc[0] + rc[1] * rc[1];
		let l_rr = 1.0 / (p.omega * p.omega * c_rr);
		let expect_c = Mat::from_row_slice(
			3,
			3,
			&[
				model.k_cc[(0, 0)] + rc[0] * rc[0],
				model.k_cc[(0, 1)] + rc[0] * rc[1],
				c_rr.sqrt() * rc[0],
				model.k_cc[(1, 0)] + rc[1] * rc[0],
				model.k_cc[(1, 1)] + rc[1] * rc[1],
				c_rr.sqrt() * rc[1],
				c_rr.sqrt() * rc[0],
				c_rr.sqrt() * rc[1],
				c_rr,
			],
		);
		let expect_l = Mat::from_row_slice(
			3,
			3,
			&[
				model.k_ll[(0, 0)] + rl[0] * rl[0],
				model.k_ll[(0, 1)] + rl[0] * rl[1],
				l_rr.sqrt() * rl[0],
				model.k_ll[(1, 0)] + rl[1] * rl[0],
				model.k_ll[(1, 1)] + rl[1] * rl[1],
				l_rr.sqrt() * rl[1],
				l_rr.sqrt() * rl[0],
				l_rr.sqrt() * rl[1],
				l_rr,
			],
		);
		assert!((&circ.cap - &expect_c).amax() <= 1e-12 * expect_c.amax());
		assert!((&circ.ind - &expect_l).amax() <= 1e-12 * expect_l.amax());
		assert_eq!(circ.omega, IntMatrix::from_rows(&[vec![1, 0, 0], vec![0, 0, 0], vec![0, 0, 1]]));
		let r = &circ.resonators[0];
		assert!((r.c_rr * r.l_rr * p.omega * p.omega - 1.0).abs() < 1e-12);
		// Schur complements recover the high-frequency blocks
		let sc = crate::numeric::schur_complement(&circ.cap, &[0, 1]).unwrap();
		let sl = crate::numeric::schur_complement(&circ.ind, &[0, 1]).unwrap();
		assert!((&sc - &model.k_cc).amax() <= 1e-10 * model.k_cc.amax());
		assert!((&sl - &model.k_ll).amax() <= 1e-10 * model.k_ll.amax());
	}

	#[test]
	fn zero_poles_is_core_circuit() {
		let mut model = fluxonium_drive_model();
		model.poles.clear();
		let circ = synthesize(&model).unwrap();
		assert_eq!(circ.cap, model.k_cc);
		assert_eq!(circ.ind, model.k_ll);
		assert_eq!(circ.omega, model.omega_e);
	}

	#[test]
	fn residue_factorization_examples() {
		let z = CMat::zeros(3, 3);
		assert!(decompose_residues(&z, 1.0, 2).unwrap().is_empty());

		let (rc, rl) = (Vector::from_vec(vec![0.6]), Vector::from_vec(vec![-0.2]));
		let a = &rc * rc.transpose();
		let b = &rc * rl.transpose();
		let d = &rl * rl.transpose();
		let k = residue_matrix(&a, &b, &d, 3.0);
		let v = decompose_residues(&k, 3.0, 1).unwrap();
		assert_eq!(v.len(), 1);
		assert!((v[0].0[0] - 0.6).abs() < 1e-12 && (v[0].1[0] + 0.2).abs() < 1e-12);

		// block-diagonal residue splits into one-sided vectors
		let a = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
		let d = Mat::from_element(1, 1, 0.3);
		let k = residue_matrix(&a, &Mat::zeros(2, 1), &d, 2.0);
		let v = decompose_residues(&k, 2.0, 2).unwrap();
		let mut sa = Mat::zeros(2, 2);
		let mut sd = Mat::zeros(1, 1);
		for (c, l) in &v {
			assert!(c.norm() == 0.0 || l.norm() == 0.0);
			sa += c * c.transpose();
			sd += l * l.transpose();
		}
		assert!((sa - a).amax() < 1e-12 && (sd - d).amax() < 1e-12);

		let mut bad = residue_matrix(&Mat::from_element(1, 1, 1.0), &Mat::from_element(1, 1, 2.0), &Mat::from_element(1, 1, 1.0), 1.0);
		assert!(matches!(decompose_residues(&bad, 1.0, 1), Err(ExtractError::NotPsd { .. })));
		bad[(0, 0)] = Complex64::new(-1.0, 0.0);
		assert!(decompose_residues(&bad, 1.0, 1).is_err());
	}

	pub(super) fn random_model(rng: &mut ChaCha8Rng, c: usize, l: usize, r: usize) -> PoleResidueModel {
		let omega_e = loop {
			let e: Vec<i64> = (0..c * l).map(|_| rng.gen_range(-1..=1)).collect();
			let m = IntMatrix::from_fn(c, l, |i, j| e[i * l + j]);
			if crate::intlin::check_tu_exhaustive(&m) {
				break m;
			}
		};
		let pd = |rng: &mut ChaCha8Rng, n: usize, scale: f64| {
			let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
			(&g * g.transpose() + Mat::identity(n, n) * 0.5) * scale
		};
		let mut freqs: Vec<f64> = vec![];
		while freqs.len() < r {
			let w = 2.0 * std::f64::consts::PI * rng.gen_range(3.0e9..12.0e9);
			if freqs.iter().all(|f| (f - w).abs() > 0.05 * w) {
				freqs.push(w);
			}
		}
		freqs.sort_by(f64::total_cmp);
		let poles = freqs
			.into_iter()
			.map(|omega| {
				let mut r_c = Vector::from_fn(c, |_, _| rng.gen_range(-1.0..1.0) * 3e-8);
				let mut r_l = Vector::from_fn(l, |_, _| rng.gen_range(-1.0..1.0) * 3e-5);
				let lead = r_c.iter().chain(r_l.iter()).cloned().find(|x| *x != 0.0).unwrap_or(1.0);
				if lead < 0.0 {
					r_c = -r_c;
					r_l = -r_l;
				}
				PoleTerm { omega, r_c, r_l }
			})
			.collect();
		PoleResidueModel { c_ports: vec![], l_ports: vec![], omega_e, k_cc: pd(rng, c, 1e-15), k_ll: pd(rng, l, 1e-9), poles }
	}

	#[test]
	fn pole_count_zero_recovers_matrices() {
		let mut rng = ChaCha8Rng::seed_from_u64(5);
		let m = random_model(&mut rng, 2, 2, 0);
		let s = sample(Response::Model(&m), &grid(1e8, 1e11, 40)).unwrap();
		let fit = fit_pole_residue(&s, 0).unwrap();
		assert!((&fit.model.k_cc - &m.k_cc).amax() <= 1e-9 * m.k_cc.amax());
		assert!((&fit.model.k_ll - &m.k_ll).amax() <= 1e-9 * m.k_ll.amax());
		assert_eq!(fit.model.omega_e, m.omega_e);
	}

	#[test]
	fn one_resonator_round_trip() {
		let model = fluxonium_drive_model();
		let circ = synthesize(&model).unwrap();
		let w = model.poles[0].omega;
		let s = sample(Response::Circuit(&circ), &grid(w / 100.0, 2.03 * w, 200)).unwrap();
		assert!(check_lpr(&s).passed);
		let fit = fit_pole_residue(&s, 1).unwrap();
		assert_eq!(fit.model.poles.len(), 1);
		let got = &fit.model.poles[0];
		assert!((got.omega - w).abs() <= 1e-6 * w);
		assert!((&got.r_c - &model.poles[0].r_c).amax() <= 1e-6 * model.poles[0].r_c.amax());
		assert!((&got.r_l - &model.poles[0].r_l).amax() <= 1e-6 * model.poles[0].r_l.amax());
		let back = synthesize(&fit.model).unwrap();
		assert!((&back.cap - &circ.cap).amax() <= 1e-6 * circ.cap.amax());
		assert!((&back.ind - &circ.ind).amax() <= 1e-6 * circ.ind.amax());
		assert_eq!(back.omega, circ.omega);
	}

	#[test]
	fn multi_pole_round_trip() {
		for seed in 0..6u64 {
			let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
			let (c, l, r) = (1 + seed as usize % 3, 1 + (seed as usize / 3) % 2, 1 + seed as usize % 3);
			let m = random_model(&mut rng, c, l, r);
			let circ = synthesize(&m).unwrap();
			let wmax = m.poles.last().unwrap().omega;
			let s = sample(Response::Circuit(&circ), &grid(wmax / 97.0, 1.61 * wmax, 200)).unwrap();
			let fit = fit_pole_residue(&s, r).unwrap();
			assert_eq!(fit.model.omega_e, m.omega_e);
			assert_eq!(fit.model.poles.len(), r, "seed {seed}");
			for (a, b) in fit.model.poles.iter().zip(&m.poles) {
				assert!((a.omega - b.omega).abs() <= 1e-6 * b.omega, "seed {seed}: {} vs {}", a.omega, b.omega);
			}
			let back = synthesize(&fit.model).unwrap();
			let rel = |x: &Mat, y: &Mat| (x - y).amax() / y.amax();
			assert!(rel(&back.cap, &circ.cap) <= 1e-6, "seed {seed}: {}", rel(&back.cap, &circ.cap));
			assert!(rel(&back.ind, &circ.ind) <= 1e-6, "seed {seed}: {}", rel(&back.ind, &circ.ind));
		}
	}

	#[test]
	fn fit_error_paths() {
		let model = fluxonium_drive_model();
		let w = model.poles[0].omega;
		let s = sample(Response::Model(&model), &grid(w / 100.0, 2.0 * w, 7)).unwrap();
		assert!(matches!(fit_pole_residue(&s, 1), Err(ExtractError::TooFewSamples { .. })));
		let s = sample(Response::Model(&model), &grid(w / 100.0, 0.9 * w, 50)).unwrap();
		assert!(matches!(fit_pole_residue(&s, 1), Err(ExtractError::PoleScan { .. })));
		let mut omegas = grid(w / 100.0, 2.03 * w, 50);
		omegas[24] = w * (1.0 + 1e-12);
		assert!(matches!(sample(Response::Model(&model), &omegas), Err(ExtractError::AtPole)));
		let s = sample(Response::Model(&model), &grid(w / 100.0, 2.0 * w, 50)).unwrap();
		assert!(matches!(fit_with_poles(&s, &[s.omegas[20]]), Err(ExtractError::PoleAdjacent { .. })));
		assert!(matches!(sample(Response::Model(&model), &[w]), Err(ExtractError::AtPole)));
	}

	#[test]
	fn csv_round_trip() {
		let model = fluxonium_drive_model();
		let s = sample(Response::Model(&model), &grid(1e8, 1e10, 5)).unwrap();
		let mut buf = vec![];
		s.write_csv(&mut buf).unwrap();
		let back = HybridSamples::read_csv(buf.as_slice()).unwrap();
		assert_eq!(back.c_ports, s.c_ports);
		assert_eq!(back.l_ports, s.l_ports);
		assert_eq!(back.omegas, s.omegas);
		assert_eq!(back.values, s.values);
	}

	#[test]
	fn model_json_round_trip() {
		let m = fluxonium_drive_model();
		let back: PoleResidueModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
		assert_eq!(back, m);
	}

	#[test]
	fn reinsertion_examples() {
		let circ = synthesize(&fluxonium_drive_model()).unwrap();
		let lin = reinsert_elements(&circ, &PortElements::default()).unwrap();
		assert_eq!(lin.topology.nj() + lin.topology.ns(), 0);
		let h = crate::quantize::build_hamiltonian(&lin.topology).unwrap();
		assert!(h.cosines.is_empty());

		let el = PortElements {
			junctions: vec![PortJunction { port: "C1".into(), ej: 1e-23, extra_capacitance: 1e-15 }],
			slips: vec![],
			drives: vec![],
		};
		let t = reinsert_elements(&circ, &el).unwrap().topology;
		assert_eq!(t.cap[(0, 0)], circ.cap[(0, 0)] + 1e-15);
		assert_eq!(t.cap[(1, 1)], circ.cap[(1, 1)]);

		let wrong = PortElements { junctions: vec![PortJunction { port: "L1".into(), ej: 1.0, extra_capacitance: 0.0 }], ..Default::default() };
		assert!(matches!(reinsert_elements(&circ, &wrong), Err(ExtractError::WrongPortKind(..))));
		let wrong = PortElements { slips: vec![PortSlip { port: "C2".into(), es: 1.0, extra_inductance: 0.0 }], ..Default::default() };
		assert!(matches!(reinsert_elements(&circ, &wrong), Err(ExtractError::WrongPortKind(..))));
		let missing = PortElements { drives: vec![PortDrive { port: "X".into(), value: 1.0 }], ..Default::default() };
		assert!(matches!(reinsert_elements(&circ, &missing), Err(ExtractError::UnknownPort(_))));
	}

	/// Junction on C1, slip on L1, drives on C2/L2: after free-mode removal
	/// the drive ports leave one extended pair carrying both cosines, with
	/// the charge drive dressed by the capacitive coupling.
	#[test]
	fn fluxonium_pipeline() {
		let circ = synthesize(&fluxonium_drive_model()).unwrap();
		let (qd, fd) = (0.3 * crate::units::COOPER_CHARGE, 0.2 * crate::units::FLUX_QUANTUM);
		let el = PortElements {
			junctions: vec![PortJunction { port: "C1".into(), ej: 2e-24, extra_capacitance: 0.0 }],
			slips: vec![PortSlip { port: "L1".into(), es: 1e-24, extra_inductance: 0.0 }],
			drives: vec![PortDrive { port: "C2".into(), value: qd }, PortDrive { port: "L2".into(), value: fd }],
		};
		let re = reinsert_elements(&circ, &el).unwrap();
		assert_eq!(re.node_labels, vec!["C1", "C2", "r1"]);
		assert_eq!(re.loop_labels, vec!["L1", "L2", "r1"]);
		let h = crate::quantize::build_hamiltonian(&re.topology).unwrap();
		assert_eq!(h.cosines.len(), 2);
		assert_eq!((h.modes.k(), h.modes.j(), h.modes.s()), (2, 0, 0));
		for cos in &h.cosines {
			assert_eq!(cos.continuous.iter().map(|x| x.abs()).sum::<i64>(), 1);
			assert!(cos.compact.is_empty());
		}
		// the drive node and drive loop are free; the remaining variables see
		// offsets dressed by the couplings to them
		let (t1, fm) = crate::quantize::remove_free_modes(&re.topology).unwrap();
		assert_eq!((fm.alpha.len(), fm.beta.len()), (1, 1));
		let (c, l) = (&re.topology.cap, &re.topology.ind);
		let dq = [-c[(0, 1)] / c[(1, 1)] * qd, -c[(2, 1)] / c[(1, 1)] * qd];
		let dp = [-l[(0, 1)] / l[(1, 1)] * fd, -l[(2, 1)] / l[(1, 1)] * fd];
		for i in 0..2 {
			assert!((t1.q_ext[i] - dq[i]).abs() <= 1e-12 * qd);
			assert!((t1.phi_ext[i] - dp[i]).abs() <= 1e-12 * fd);
		}
		assert!(dq.iter().all(|x| *x != 0.0) && dp.iter().all(|x| *x != 0.0));
	}

	proptest! {
		#![proptest_config(ProptestConfig::with_cases(16))]
		#[test]
		fn synthesis_matches_model(seed in 0u64..1_000_000, c in 1usize..=2, l in 1usize..=2, r in 0usize..=3) {
			let mut rng = ChaCha8Rng::seed_from_u64(seed);
			let m = random_model(&mut rng, c, l, r);
			let circ = synthesize(&m).unwrap();
			prop_assert!(cholesky_pd_check(&circ.cap) && cholesky_pd_check(&circ.ind));
			let wmax = m.poles.iter().map(|p| p.omega).fold(2.0 * std::f64::consts::PI * 5e9, f64::max);
			for _ in 0..20 {
				let w = rng.gen_range(0.0..2.0 * wmax);
				if m.poles.iter().any(|p| (p.omega - w).abs() < 1e-3 * p.omega) {
					continue;
				}
				let a = eval_model(&m, iw(w)).unwrap();
				let b = eval_circuit(&circ, iw(w)).unwrap();
				prop_assert!(block_rel(&a, &b, c) <= 1e-9, "rel {}", block_rel(&a, &b, c));
			}
			let s = sample(Response::Circuit(&circ), &grid(1e7, 2.0 * wmax, 25)).unwrap();
			prop_assert!(check_lpr(&s).passed);
		}
	}
}
