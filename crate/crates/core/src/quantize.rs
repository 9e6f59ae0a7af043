//! Quantization pipeline: free-mode removal, reduction of the network
//! matrix to an identity block, classification of modes and emission of
//! the final Hamiltonian as structured data.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_core::{apply_basis_change, CircuitTopology, GraphError};
use crate::intlin::{reduce_to_identity_block, row_echelon, IntError, IntMatrix, UnimodularTransform};
use crate::numeric::{complement, select, select_vec, spd_inverse, symmetrize, Mat, NumericError, Vector};
use crate::units::{COOPER_CHARGE, FLUX_QUANTUM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantizeError {
	#[error(transparent)]
	Graph(#[from] GraphError),
	#[error(transparent)]
	Int(#[from] IntError),
	#[error(transparent)]
	Numeric(#[from] NumericError),
	#[error("free-mode block {which} is singular")]
	SingularFreeBlock { which: &'static str },
	#[error("forbidden zero limit: {0}")]
	ForbiddenLimit(String),
	#[error("missing variable: {0}")]
	MissingVariable(String),
	#[error("discrete variable {name} = {value} is not an integer")]
	NonInteger { name: String, value: f64 },
	#[error("dimension mismatch: {0}")]
	Dimension(String),
}

type Result<T> = std::result::Result<T, QuantizeError>;

/// Bookkeeping of a free-mode elimination. `u`, `w` expose the free rows
/// and columns; `alpha`/`beta` index them in that exposed basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeModeRecord {
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
	pub alpha: Vec<usize>,
	pub beta: Vec<usize>,
	pub kept_nodes: Vec<usize>,
	pub kept_loops: Vec<usize>,
}

impl FreeModeRecord {
	pub fn is_trivial(&self) -> bool {
		self.alpha.is_empty() && self.beta.is_empty()
	}
}

fn hcat(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
	IntMatrix::from_fn(a.nrows(), a.ncols() + b.ncols(), |i, j| if j < a.ncols() { a.get(i, j) } else { b.get(i, j - a.ncols()) })
}

fn free_rows(a: &IntMatrix, omega: &IntMatrix) -> Vec<usize> {
	(0..a.nrows()).filter(|&i| a.row_is_zero(i) && omega.row_is_zero(i)).collect()
}

fn free_cols(b: &IntMatrix, omega: &IntMatrix) -> Vec<usize> {
	(0..b.nrows()).filter(|&i| b.row_is_zero(i) && omega.col_is_zero(i)).collect()
}

/// Basis in which every free island is a zero row of `[A_J | Omega]` and
/// every free loop a zero row of `[B_S | Omega^T]`.
fn expose_free_modes(topo: &CircuitTopology) -> Result<(UnimodularTransform, UnimodularTransform)> {
	let n_alpha = free_rows(&topo.a_j, &topo.omega).len();
	let n_beta = free_cols(&topo.b_s, &topo.omega).len();
	let rank_n = hcat(&topo.a_j, &topo.omega).rank();
	let rank_l = hcat(&topo.b_s, &topo.omega.transpose()).rank();
	if topo.n() - n_alpha == rank_n && topo.l() - n_beta == rank_l {
		return Ok((UnimodularTransform::identity(topo.n()), UnimodularTransform::identity(topo.l())));
	}
	let (_, u) = row_echelon(&hcat(&topo.a_j, &topo.omega))?;
	let omega_u = u.m.mul(&topo.omega)?;
	let (_, w) = row_echelon(&hcat(&topo.b_s, &omega_u.transpose()))?;
	Ok((u, w))
}

/// `X_n - M_na M_aa^{-1} X_a` for a vector attached to the rows of `m`.
fn dress(m: &Mat, kept: &[usize], free: &[usize], x: &Vector, which: &'static str) -> Result<Vector> {
	let xn = select_vec(x, kept);
	if free.is_empty() {
		return Ok(xn);
	}
	let maa = spd_inverse(&select(m, free, free)).map_err(|_| QuantizeError::SingularFreeBlock { which })?;
	Ok(xn - select(m, kept, free) * maa * select_vec(x, free))
}

fn schur(m: &Mat, kept: &[usize], free: &[usize], which: &'static str) -> Result<Mat> {
	let mnn = select(m, kept, kept);
	if free.is_empty() {
		return Ok(mnn);
	}
	let maa = spd_inverse(&select(m, free, free)).map_err(|_| QuantizeError::SingularFreeBlock { which })?;
	let mna = select(m, kept, free);
	Ok(symmetrize(&(mnn - &mna * maa * mna.transpose())))
}

/// Eliminate capacitive islands without junctions or loops and inductive
/// loops without phase slips or nodes, renormalizing `C`, `L`, the external
/// terms and the trapped offsets.
pub fn remove_free_modes(topo: &CircuitTopology) -> Result<(CircuitTopology, FreeModeRecord)> {
	topo.check_shapes()?;
	let (u, w) = expose_free_modes(topo)?;
	let t = apply_basis_change(topo, &u, &w)?;
	let alpha = free_rows(&t.a_j, &t.omega);
	let beta = free_cols(&t.b_s, &t.omega);
	let kept_nodes = complement(t.n(), &alpha);
	let kept_loops = complement(t.l(), &beta);
	let all_j: Vec<usize> = (0..t.nj()).collect();
	let all_s: Vec<usize> = (0..t.ns()).collect();
	let out = CircuitTopology {
		cap: schur(&t.cap, &kept_nodes, &alpha, "C_aa")?,
		ind: schur(&t.ind, &kept_loops, &beta, "L_bb")?,
		a_j: t.a_j.select(&kept_nodes, &all_j),
		b_s: t.b_s.select(&kept_loops, &all_s),
		omega: t.omega.select(&kept_nodes, &kept_loops),
		q_ext: dress(&t.cap, &kept_nodes, &alpha, &t.q_ext, "C_aa")?,
		phi_ext: dress(&t.ind, &kept_loops, &beta, &t.phi_ext, "L_bb")?,
		n0: dress(&t.cap, &kept_nodes, &alpha, &t.n0, "C_aa")?,
		m0: dress(&t.ind, &kept_loops, &beta, &t.m0, "L_bb")?,
		e_j: t.e_j.clone(),
		e_s: t.e_s.clone(),
		junction_offset: t.junction_offset.clone(),
		slip_offset: t.slip_offset.clone(),
	};
	Ok((out, FreeModeRecord { u, w, alpha, beta, kept_nodes, kept_loops }))
}

/// Index sets of the three mode kinds after reduction. Node rows are
/// ordered `k` then `j`, loop rows `k` then `s`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePartition {
	pub k_indices: Vec<usize>,
	pub j_indices: Vec<usize>,
	pub s_indices: Vec<usize>,
	/// Number of doubly-discrete pairs dropped from the Hamiltonian.
	pub removed_doubly_discrete: usize,
}

impl ModePartition {
	pub fn k(&self) -> usize {
		self.k_indices.len()
	}
	pub fn j(&self) -> usize {
		self.j_indices.len()
	}
	pub fn s(&self) -> usize {
		self.s_indices.len()
	}
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reduced {
	pub topo: CircuitTopology,
	pub modes: ModePartition,
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
}

/// Row-echelon the rows `k..` of `a` and reduce rows `..k` against them.
/// Only operations that keep `[[I_k,0],[0,0]]` fixed are used.
fn tidy_tail(a: &IntMatrix, k: usize) -> Result<UnimodularTransform> {
	let n = a.nrows();
	let tail: Vec<usize> = (k..n).collect();
	let cols: Vec<usize> = (0..a.ncols()).collect();
	let (ech, t) = row_echelon(&a.select(&tail, &cols))?;
	let mut u = IntMatrix::identity(n);
	for i in 0..n - k {
		for j in 0..n - k {
			u.set(k + i, k + j, t.m.get(i, j));
		}
	}
	let mut cur = u.mul(a)?;
	for r in 0..ech.nrows() {
		let Some(c) = (0..ech.ncols()).find(|&c| ech.get(r, c) != 0) else { continue };
		let p = ech.get(r, c);
		for i in 0..k {
			let q = cur.get(i, c).div_euclid(p);
			if q != 0 {
				u.add_row_multiple(i, k + r, -q)?;
				cur.add_row_multiple(i, k + r, -q)?;
			}
		}
	}
	Ok(UnimodularTransform::new(u)?)
}

/// Bring `Omega` to `[[I_k,0],[0,0]]` and split `A_J`, `B_S` accordingly.
pub fn classify_and_reduce(topo: &CircuitTopology) -> Result<Reduced> {
	topo.check_shapes()?;
	let red = reduce_to_identity_block(&topo.omega)?;
	let k = red.rank;
	let t1 = apply_basis_change(topo, &red.u, &red.w)?;
	let u2 = tidy_tail(&t1.a_j, k)?;
	let w2 = tidy_tail(&t1.b_s, k)?;
	let t2 = apply_basis_change(&t1, &u2, &w2)?;
	let modes = ModePartition {
		k_indices: (0..k).collect(),
		j_indices: (k..t2.n()).collect(),
		s_indices: (k..t2.l()).collect(),
		removed_doubly_discrete: k,
	};
	Ok(Reduced { topo: t2, modes, u: red.u.then(&u2)?, w: red.w.then(&w2)? })
}

/// `½ (x - offset)^T inverse (x - offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
	#[serde(with = "crate::matser::mat")]
	pub inverse: Mat,
	#[serde(with = "crate::matser::vector")]
	pub offset: Vector,
	/// Name of each component of `x`.
	pub variables: Vec<String>,
}

/// `-energy * cos(2π/scale * continuous·x + compact·θ + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cosine {
	pub element: String,
	pub energy: f64,
	/// Coefficients on the extended variable (`P_k` for junctions, `Q_k`
	/// for phase slips), in units of `2π/Φ0` or `2π/2e`.
	pub continuous: Vec<i64>,
	/// Coefficients on the compact angles (`φ_j` or `q_s`).
	pub compact: Vec<i64>,
	pub phase: f64,
}

/// Composite change of variables from the input topology to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTransforms {
	pub free_modes: FreeModeRecord,
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianModel {
	pub schema: String,
	pub modes: ModePartition,
	pub quadratic_capacitive: Quadratic,
	pub quadratic_inductive: Quadratic,
	pub cosines: Vec<Cosine>,
	/// Number of junction terms at the head of `cosines`.
	pub n_junctions: usize,
	/// When set, the extended inductive variables are `Φ_k = -P_k`.
	pub standard_notation: bool,
	pub transforms: ModelTransforms,
}

pub const HAMILTONIAN_SCHEMA: &str = "supercircuit.hamiltonian/1";

fn frac(x: f64) -> f64 {
	x - x.round()
}

fn transpose_row(m: &IntMatrix, col: usize, rows: std::ops::Range<usize>, sign: i64) -> Vec<i64> {
	rows.map(|r| sign * m.get(r, col)).collect()
}

/// Run the whole pipeline and emit the final Hamiltonian.
pub fn build_hamiltonian(topo: &CircuitTopology) -> Result<HamiltonianModel> {
	let (t1, free) = remove_free_modes(topo)?;
	let red = classify_and_reduce(&t1)?;
	let t = &red.topo;
	let k = red.modes.k();
	let (n, l) = (t.n(), t.l());
	let q_off = Vector::from_fn(n, |i, _| t.q_ext[i] - COOPER_CHARGE * frac(t.n0[i]));
	let p_off = Vector::from_fn(l, |i, _| t.phi_ext[i] - FLUX_QUANTUM * frac(t.m0[i]));
	let names = |head: &str, tail: &str, m: usize| -> Vec<String> {
		(0..m).map(|i| if i < k { format!("{head}{i}") } else { format!("{tail}{}", i - k) }).collect()
	};
	let mut cosines = Vec::new();
	for c in 0..t.nj() {
		cosines.push(Cosine {
			element: format!("J{c}"),
			energy: t.e_j[c],
			continuous: transpose_row(&t.a_j, c, 0..k, -1),
			compact: transpose_row(&t.a_j, c, k..n, 1),
			phase: TAU / FLUX_QUANTUM * t.junction_offset[c],
		});
	}
	for c in 0..t.ns() {
		cosines.push(Cosine {
			element: format!("S{c}"),
			energy: t.e_s[c],
			continuous: transpose_row(&t.b_s, c, 0..k, 1),
			compact: transpose_row(&t.b_s, c, k..l, 1),
			phase: TAU / COOPER_CHARGE * t.slip_offset[c],
		});
	}
	Ok(HamiltonianModel {
		schema: HAMILTONIAN_SCHEMA.into(),
		modes: red.modes.clone(),
		quadratic_capacitive: Quadratic { inverse: spd_inverse(&t.cap)?, offset: q_off, variables: names("Q_k", "2e*n_j", n) },
		quadratic_inductive: Quadratic { inverse: spd_inverse(&t.ind)?, offset: p_off, variables: names("P_k", "Phi0*m_s", l) },
		cosines,
		n_junctions: t.nj(),
		standard_notation: false,
		transforms: ModelTransforms { free_modes: free, u: red.u, w: red.w },
	})
}

/// Relabel `Φ_k = -P_k` so the inductive quadratic reads `(Φ + Φ_ext)`.
pub fn to_standard_notation(model: &HamiltonianModel) -> HamiltonianModel {
	if model.standard_notation {
		return model.clone();
	}
	let mut m = model.clone();
	let k = m.modes.k();
	let q = &mut m.quadratic_inductive;
	let l = q.offset.len();
	let d = Vector::from_fn(l, |i, _| if i < k { -1.0 } else { 1.0 });
	q.inverse = Mat::from_fn(l, l, |i, j| d[i] * d[j] * q.inverse[(i, j)]);
	for i in 0..k {
		q.offset[i] = -q.offset[i];
		q.variables[i] = format!("Phi_k{i}");
	}
	for c in m.cosines.iter_mut().take(m.n_junctions) {
		for x in c.continuous.iter_mut() {
			*x = -*x;
		}
	}
	m.standard_notation = true;
	m
}

/// Values for every dynamical variable of a model. Discrete entries
/// (`n_j`, `m_s`) must be integers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
	pub q_k: Vec<f64>,
	/// `P_k`, or `Φ_k` for a model in standard notation.
	pub p_k: Vec<f64>,
	pub n_j: Vec<f64>,
	pub phi_j: Vec<f64>,
	pub m_s: Vec<f64>,
	pub q_s: Vec<f64>,
}

impl HamiltonianModel {
	/// Names of all dynamical variables.
	pub fn variables(&self) -> Vec<String> {
		let mut v = Vec::new();
		for i in 0..self.modes.k() {
			v.push(format!("Q_k{i}"));
			v.push(format!("P_k{i}"));
		}
		for i in 0..self.modes.j() {
			v.push(format!("n_j{i}"));
			v.push(format!("phi_j{i}"));
		}
		for i in 0..self.modes.s() {
			v.push(format!("m_s{i}"));
			v.push(format!("q_s{i}"));
		}
		v
	}

	pub fn zero_point(&self) -> PhasePoint {
		let (k, j, s) = (self.modes.k(), self.modes.j(), self.modes.s());
		PhasePoint { q_k: vec![0.0; k], p_k: vec![0.0; k], n_j: vec![0.0; j], phi_j: vec![0.0; j], m_s: vec![0.0; s], q_s: vec![0.0; s] }
	}
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
	if v.len() != n {
		return Err(QuantizeError::MissingVariable(format!("{name}: expected {n} values, got {}", v.len())));
	}
	Ok(())
}

fn check_integers(name: &str, v: &[f64]) -> Result<()> {
	for (i, &x) in v.iter().enumerate() {
		if (x - x.round()).abs() > 1e-9 || !x.is_finite() {
			return Err(QuantizeError::NonInteger { name: format!("{name}{i}"), value: x });
		}
	}
	Ok(())
}

fn quad(q: &Quadratic, x: &Vector) -> f64 {
	let d = x - &q.offset;
	0.5 * d.dot(&(&q.inverse * &d))
}

/// Classical value of the model at a phase-space point [J].
pub fn evaluate_hamiltonian(model: &HamiltonianModel, p: &PhasePoint) -> Result<f64> {
	let (k, j, s) = (model.modes.k(), model.modes.j(), model.modes.s());
	check_len("Q_k", &p.q_k, k)?;
	check_len("P_k", &p.p_k, k)?;
	check_len("n_j", &p.n_j, j)?;
	check_len("phi_j", &p.phi_j, j)?;
	check_len("m_s", &p.m_s, s)?;
	check_len("q_s", &p.q_s, s)?;
	check_integers("n_j", &p.n_j)?;
	check_integers("m_s", &p.m_s)?;
	let xc = Vector::from_iterator(k + j, p.q_k.iter().cloned().chain(p.n_j.iter().map(|n| COOPER_CHARGE * n)));
	let xl = Vector::from_iterator(k + s, p.p_k.iter().cloned().chain(p.m_s.iter().map(|m| FLUX_QUANTUM * m)));
	let mut e = quad(&model.quadratic_capacitive, &xc) + quad(&model.quadratic_inductive, &xl);
	for (idx, c) in model.cosines.iter().enumerate() {
		let (ext, ang, scale) = if idx < model.n_junctions { (&p.p_k, &p.phi_j, FLUX_QUANTUM) } else { (&p.q_k, &p.q_s, COOPER_CHARGE) };
		let mut arg = c.phase;
		for (a, x) in c.continuous.iter().zip(ext) {
			arg += TAU / scale * (*a as f64) * x;
		}
		for (a, x) in c.compact.iter().zip(ang) {
			arg += (*a as f64) * x;
		}
		e -= c.energy * arg.cos();
	}
	Ok(e)
}

/// A classical configuration of the integrated equations of motion: node
/// fluxes, loop charges and the tunnelled Cooper-pair and fluxon counts.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedState {
	pub phi_n: Vector,
	pub q_l: Vector,
	pub n_tunnel: Vec<i64>,
	pub m_tunnel: Vec<i64>,
}

/// Velocities `(dΦ_n/dt, dQ_l/dt)` fixed by the integrated equations of motion.
pub fn integrated_velocities(topo: &CircuitTopology, st: &IntegratedState) -> Result<(Vector, Vector)> {
	let nj = Vector::from_iterator(st.n_tunnel.len(), st.n_tunnel.iter().map(|&x| x as f64));
	let ms = Vector::from_iterator(st.m_tunnel.len(), st.m_tunnel.iter().map(|&x| x as f64));
	if nj.len() != topo.nj() || ms.len() != topo.ns() || st.phi_n.len() != topo.n() || st.q_l.len() != topo.l() {
		return Err(QuantizeError::Dimension("state does not match topology".into()));
	}
	let om = topo.omega.to_f64();
	let rhs_c = &om * &st.q_l - &topo.q_ext - topo.a_j.to_f64() * nj * COOPER_CHARGE + &topo.n0 * COOPER_CHARGE;
	let rhs_l = -&topo.phi_ext + topo.b_s.to_f64() * ms * FLUX_QUANTUM - om.transpose() * &st.phi_n + &topo.m0 * FLUX_QUANTUM;
	Ok((spd_inverse(&topo.cap)? * rhs_c, spd_inverse(&topo.ind)? * rhs_l))
}

/// Model variables corresponding to an on-shell classical state of the
/// topology the model was built from.
pub fn phase_point(model: &HamiltonianModel, topo: &CircuitTopology, st: &IntegratedState) -> Result<PhasePoint> {
	let (dphi, dq) = integrated_velocities(topo, st)?;
	let tr = &model.transforms;
	let fm = &tr.free_modes;
	let to_nodes = |v: &Vector| -> Vector {
		let v1 = fm.u.m_inv.transpose().to_f64() * v;
		tr.u.m_inv.transpose().to_f64() * select_vec(&v1, &fm.kept_nodes)
	};
	let to_loops = |v: &Vector| -> Vector {
		let v1 = fm.w.m_inv.transpose().to_f64() * v;
		tr.w.m_inv.transpose().to_f64() * select_vec(&v1, &fm.kept_loops)
	};
	let (phi, q) = (to_nodes(&st.phi_n), to_loops(&st.q_l));
	let cap = spd_inverse(&model.quadratic_capacitive.inverse)?;
	let ind_inv = if model.standard_notation {
		let m = to_standard_notation(model);
		let mut back = m.quadratic_inductive.inverse.clone();
		let k = model.modes.k();
		for i in 0..back.nrows() {
			for j in 0..back.ncols() {
				if (i < k) != (j < k) {
					back[(i, j)] = -back[(i, j)];
				}
			}
		}
		back
	} else {
		model.quadratic_inductive.inverse.clone()
	};
	let ind = spd_inverse(&ind_inv)?;
	let x = cap * to_nodes(&dphi) + unstandard_offset(model, true);
	let p = ind * to_loops(&dq) + unstandard_offset(model, false);
	let k = model.modes.k();
	let sign = if model.standard_notation { -1.0 } else { 1.0 };
	Ok(PhasePoint {
		q_k: x.rows(0, k).iter().cloned().collect(),
		p_k: p.rows(0, k).iter().map(|v| sign * v).collect(),
		n_j: x.rows(k, x.len() - k).iter().map(|v| (v / COOPER_CHARGE).round()).collect(),
		phi_j: phi.rows(k, phi.len() - k).iter().map(|v| TAU / FLUX_QUANTUM * v).collect(),
		m_s: p.rows(k, p.len() - k).iter().map(|v| (v / FLUX_QUANTUM).round()).collect(),
		q_s: q.rows(k, q.len() - k).iter().map(|v| TAU / COOPER_CHARGE * v).collect(),
	})
}

fn unstandard_offset(model: &HamiltonianModel, capacitive: bool) -> Vector {
	if capacitive {
		return model.quadratic_capacitive.offset.clone();
	}
	let mut o = model.quadratic_inductive.offset.clone();
	if model.standard_notation {
		for i in 0..model.modes.k() {
			o[i] = -o[i];
		}
	}
	o
}

/// What `apply_zero_limits` did: the block assignment of the transformed
/// rows and columns, the gauge matrices and the constrained variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
	/// Retained capacitive rows.
	pub nodes: Vec<usize>,
	/// Retained inductive columns.
	pub loops: Vec<usize>,
	/// Zero-capacitance rows paired with finite-inductance columns.
	pub charge_constrained: Vec<(usize, usize)>,
	/// Finite-capacitance rows paired with zero-inductance columns.
	pub flux_constrained: Vec<(usize, usize)>,
	/// Pairs where both sides vanish; they drop out.
	pub dropped: Vec<(usize, usize)>,
	#[serde(with = "crate::matser::mat")]
	pub gamma: Mat,
	#[serde(with = "crate::matser::mat")]
	pub lambda: Mat,
	/// Loop charges fixed by zero-capacitance nodes [C].
	#[serde(with = "crate::matser::vector")]
	pub fixed_charge: Vector,
	/// Node fluxes fixed by zero-inductance loops are minus these [Wb].
	#[serde(with = "crate::matser::vector")]
	pub fixed_flux_drive: Vector,
}

struct Ops {
	a: IntMatrix,
	u: IntMatrix,
	r: IntMatrix,
	zero_row: Vec<bool>,
	zero_col: Vec<bool>,
}

impl Ops {
	fn row_pivot(&mut self, i: usize, j: usize) -> Result<()> {
		let p = self.a.get(i, j);
		for r in 0..self.a.nrows() {
			let v = self.a.get(r, j);
			if r == i || v == 0 {
				continue;
			}
			if !self.zero_row[i] && self.zero_row[r] {
				return Err(QuantizeError::ForbiddenLimit(format!("finite-capacitance row {i} would feed zero-capacitance row {r}")));
			}
			let q = v * p;
			self.a.add_row_multiple(r, i, -q)?;
			self.u.add_row_multiple(r, i, -q)?;
		}
		Ok(())
	}

	fn col_pivot(&mut self, i: usize, j: usize) -> Result<()> {
		let p = self.a.get(i, j);
		for c in 0..self.a.ncols() {
			let v = self.a.get(i, c);
			if c == j || v == 0 {
				continue;
			}
			if !self.zero_col[j] && self.zero_col[c] {
				return Err(QuantizeError::ForbiddenLimit(format!("finite-inductance column {j} would feed zero-inductance column {c}")));
			}
			let q = v * p;
			self.a.add_col_multiple(c, j, -q)?;
			self.r.add_col_multiple(c, j, -q)?;
		}
		Ok(())
	}
}

/// Take the capacitance of `zero_cap_nodes` and the inductance of
/// `zero_ind_loops` to zero. Constrained fluxes and charges become drives
/// and are moved into the cosine arguments where possible.
pub fn apply_zero_limits(
	topo: &CircuitTopology,
	zero_cap_nodes: &[usize],
	zero_ind_loops: &[usize],
) -> Result<(CircuitTopology, ConstraintRecord)> {
	topo.check_shapes()?;
	let (n, l) = (topo.n(), topo.l());
	let mut t = topo.clone();
	for &i in zero_cap_nodes {
		if i >= n {
			return Err(QuantizeError::Dimension(format!("node {i} out of range")));
		}
		if !t.a_j.row_is_zero(i) {
			return Err(QuantizeError::ForbiddenLimit(format!("node {i} carries a junction")));
		}
		t.cap.row_mut(i).fill(0.0);
		t.cap.column_mut(i).fill(0.0);
	}
	for &i in zero_ind_loops {
		if i >= l {
			return Err(QuantizeError::Dimension(format!("loop {i} out of range")));
		}
		if !t.b_s.row_is_zero(i) {
			return Err(QuantizeError::ForbiddenLimit(format!("loop {i} carries a phase slip")));
		}
		t.ind.row_mut(i).fill(0.0);
		t.ind.column_mut(i).fill(0.0);
	}
	let mut ops = Ops {
		a: t.omega.clone(),
		u: IntMatrix::identity(n),
		r: IntMatrix::identity(l),
		zero_row: (0..n).map(|i| zero_cap_nodes.contains(&i)).collect(),
		zero_col: (0..l).map(|i| zero_ind_loops.contains(&i)).collect(),
	};
	let mut row_used = vec![false; n];
	let mut col_used = vec![false; l];
	let mut pairs: [Vec<(usize, usize)>; 3] = [vec![], vec![], vec![]];
	// (row is zero-C, col is zero-L) per phase
	for (phase, (zr, zc)) in [(true, true), (true, false), (false, true)].into_iter().enumerate() {
		loop {
			let found = (0..n)
				.filter(|&i| !row_used[i] && ops.zero_row[i] == zr)
				.flat_map(|i| (0..l).map(move |j| (i, j)))
				.find(|&(i, j)| !col_used[j] && ops.zero_col[j] == zc && ops.a.get(i, j) != 0);
			let Some((i, j)) = found else { break };
			if ops.a.get(i, j).abs() != 1 {
				return Err(QuantizeError::Int(IntError::NonUnitPivot { row: i, col: j, value: ops.a.get(i, j) }));
			}
			ops.col_pivot(i, j)?;
			ops.row_pivot(i, j)?;
			if ops.a.get(i, j) < 0 {
				ops.a.negate_row(i);
				ops.u.negate_row(i);
			}
			row_used[i] = true;
			col_used[j] = true;
			pairs[phase].push((i, j));
		}
		if phase == 1 {
			if let Some(i) = (0..n).find(|&i| ops.zero_row[i] && !row_used[i]) {
				return Err(QuantizeError::ForbiddenLimit(format!("zero-capacitance node {i} is not fixed by any loop")));
			}
		}
	}
	if let Some(j) = (0..l).find(|&j| ops.zero_col[j] && !col_used[j]) {
		return Err(QuantizeError::ForbiddenLimit(format!("zero-inductance loop {j} is not fixed by any node")));
	}
	let u = UnimodularTransform::new(ops.u)?;
	let w = UnimodularTransform::new(ops.r.transpose())?;
	let tt = apply_basis_change(&t, &u, &w)?;
	debug_assert_eq!(tt.omega, ops.a);
	let [dropped, charge_constrained, flux_constrained] = pairs;
	let b1: Vec<usize> = (0..n).filter(|&i| !row_used[i]).collect();
	let b2: Vec<usize> = (0..l).filter(|&j| !col_used[j]).collect();
	let b3_rows: Vec<usize> = charge_constrained.iter().map(|p| p.0).collect();
	let b3_cols: Vec<usize> = charge_constrained.iter().map(|p| p.1).collect();
	let b4_rows: Vec<usize> = flux_constrained.iter().map(|p| p.0).collect();
	let b4_cols: Vec<usize> = flux_constrained.iter().map(|p| p.1).collect();
	for i in 0..n {
		for j in 0..l {
			let inside = b1.contains(&i) && b2.contains(&j);
			let paired = [&dropped, &charge_constrained, &flux_constrained].iter().any(|ps| ps.contains(&(i, j)));
			if !inside && !paired && tt.omega.get(i, j) != 0 {
				return Err(QuantizeError::ForbiddenLimit(format!("residual coupling at ({i},{j})")));
			}
		}
	}
	let c11 = select(&tt.cap, &b1, &b1);
	let l22 = select(&tt.ind, &b2, &b2);
	let gamma = spd_inverse(&c11)? * select(&tt.cap, &b1, &b4_rows);
	let lambda = spd_inverse(&l22)? * select(&tt.ind, &b2, &b3_cols);
	let q3 = select_vec(&tt.q_ext, &b3_rows) - select_vec(&tt.n0, &b3_rows) * COOPER_CHARGE;
	let f4 = select_vec(&tt.phi_ext, &b4_cols) - select_vec(&tt.m0, &b4_cols) * FLUX_QUANTUM;
	let all_j: Vec<usize> = (0..t.nj()).collect();
	let all_s: Vec<usize> = (0..t.ns()).collect();
	let a1 = tt.a_j.select(&b1, &all_j).to_f64();
	let a4 = tt.a_j.select(&b4_rows, &all_j).to_f64();
	let bs2 = tt.b_s.select(&b2, &all_s).to_f64();
	let bs3 = tt.b_s.select(&b3_cols, &all_s).to_f64();
	let omega12 = tt.omega.select(&b1, &b2);
	let o12 = omega12.to_f64();
	let out = CircuitTopology {
		cap: c11,
		ind: l22,
		a_j: tt.a_j.select(&b1, &all_j),
		b_s: tt.b_s.select(&b2, &all_s),
		omega: omega12,
		q_ext: select_vec(&tt.q_ext, &b1) + &o12 * &lambda * &q3,
		phi_ext: select_vec(&tt.phi_ext, &b2) + o12.transpose() * &gamma * &f4,
		n0: select_vec(&tt.n0, &b1),
		m0: select_vec(&tt.m0, &b2),
		e_j: tt.e_j.clone(),
		e_s: tt.e_s.clone(),
		junction_offset: &tt.junction_offset + a1.transpose() * &gamma * &f4 - a4.transpose() * &f4,
		slip_offset: &tt.slip_offset - bs2.transpose() * &lambda * &q3 + bs3.transpose() * &q3,
	};
	out.check_shapes()?;
	Ok((
		out,
		ConstraintRecord {
			u,
			w,
			nodes: b1,
			loops: b2,
			charge_constrained,
			flux_constrained,
			dropped,
			gamma,
			lambda,
			fixed_charge: q3,
			fixed_flux_drive: f4,
		},
	))
}
