//! Edge-basis circuits, structure-preserving pivots, the fundamental
//! decomposition and classification signatures.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_core::{apply_basis_change, CircuitTopology, GraphError, TreeCotree};
use crate::intlin::{check_tu_exhaustive, check_tu_sampled, IntError, IntMatrix, UnimodularTransform, TU_EXHAUSTIVE_LIMIT};
use crate::quantize::{remove_free_modes, FreeModeRecord, QuantizeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
	#[error("illegal step: {0}")]
	Illegal(String),
	#[error("inconsistent incidence matrix: {0}")]
	Inconsistent(String),
	#[error("unsupported size: {0}")]
	Unsupported(String),
	#[error(transparent)]
	Int(#[from] IntError),
	#[error(transparent)]
	Graph(#[from] GraphError),
	#[error(transparent)]
	Quantize(#[from] QuantizeError),
}

type Result<T> = std::result::Result<T, DecomposeError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
	Junction,
	Capacitor,
	PhaseSlip,
	Inductor,
}

/// Identity of a row or column: its kind, the index it had when the edge
/// basis was built, and its orientation relative to that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeLabel {
	pub kind: EdgeKind,
	pub id: usize,
	pub sign: i8,
}

impl EdgeLabel {
	fn flipped(self) -> Self {
		Self { sign: -self.sign, ..self }
	}

	pub fn name(&self) -> String {
		let p = match self.kind {
			EdgeKind::Junction => "J",
			EdgeKind::Capacitor => "C",
			EdgeKind::PhaseSlip => "S",
			EdgeKind::Inductor => "L",
		};
		format!("{}{}{}", if self.sign < 0 { "-" } else { "" }, p, self.id + 1)
	}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
	FlipRow { row: usize },
	FlipCol { col: usize },
	SwapRows { a: usize, b: usize },
	SwapCols { a: usize, b: usize },
	RowPivot { row: usize, col: usize },
	ColPivot { row: usize, col: usize },
	/// `row dst += k * row src`
	RowAdd { dst: usize, src: usize, k: i64 },
	/// `col dst += k * col src`
	ColAdd { dst: usize, src: usize, k: i64 },
}

/// A circuit in the edge basis: junction rows first, then linear capacitor
/// rows; phase-slip columns first, then linear inductor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSystem {
	pub topo: CircuitTopology,
	pub rows: Vec<EdgeLabel>,
	pub cols: Vec<EdgeLabel>,
	/// Accumulated transforms from the node-loop variables.
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
	pub history: Vec<Step>,
	/// Set once free modes were eliminated; `u`, `w` then act before it.
	pub free_modes: Option<FreeModeRecord>,
}

impl EdgeSystem {
	pub fn omega(&self) -> &IntMatrix {
		&self.topo.omega
	}
	pub fn nj(&self) -> usize {
		self.topo.nj()
	}
	pub fn ns(&self) -> usize {
		self.topo.ns()
	}
	fn is_cap_row(&self, i: usize) -> bool {
		i >= self.nj() && i < self.topo.n()
	}
	fn is_ind_col(&self, j: usize) -> bool {
		j >= self.ns() && j < self.topo.l()
	}

	/// Row labels as text, e.g. `["J1", "J2", "C1"]`.
	pub fn row_names(&self) -> Vec<String> {
		self.rows.iter().map(|l| l.name()).collect()
	}
	pub fn col_names(&self) -> Vec<String> {
		self.cols.iter().map(|l| l.name()).collect()
	}
}

fn upper_identity(m: &IntMatrix) -> bool {
	(0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m.get(i, j) == (i == j) as i64))
}

/// Change to edge variables: tree-edge fluxes and cotree-edge charges.
pub fn to_edge_basis(topo: &CircuitTopology, tc: &TreeCotree) -> Result<EdgeSystem> {
	if tc.a_ct.shape() != (topo.n(), topo.n()) || tc.b_lt.shape() != (topo.l(), topo.l()) {
		return Err(DecomposeError::Inconsistent("tree/cotree does not match topology".into()));
	}
	let u = UnimodularTransform::new(tc.a_ct.clone())?.inverse();
	let w = UnimodularTransform::new(tc.b_lt.clone())?.inverse();
	let t = apply_basis_change(topo, &u, &w)?;
	if !upper_identity(&t.a_j) || !upper_identity(&t.b_s) {
		return Err(DecomposeError::Inconsistent("tree does not start with the junction edges".into()));
	}
	let (nj, ns) = (t.nj(), t.ns());
	let label = |i: usize, split: usize, a: EdgeKind, b: EdgeKind| {
		if i < split {
			EdgeLabel { kind: a, id: i, sign: 1 }
		} else {
			EdgeLabel { kind: b, id: i - split, sign: 1 }
		}
	};
	let rows = (0..t.n()).map(|i| label(i, nj, EdgeKind::Junction, EdgeKind::Capacitor)).collect();
	let cols = (0..t.l()).map(|j| label(j, ns, EdgeKind::PhaseSlip, EdgeKind::Inductor)).collect();
	Ok(EdgeSystem { topo: t, rows, cols, u, w, history: vec![], free_modes: None })
}

fn entries_ok(m: &IntMatrix) -> bool {
	(0..m.nrows()).all(|i| (0..m.ncols()).all(|j| m.get(i, j).abs() <= 1))
}

/// Apply `U` on rows and `W` on columns, then relabel so that `A_J` and
/// `B_S` return to upper-identity form.
fn transform(es: &EdgeSystem, u: IntMatrix, w: IntMatrix, step: Step) -> Result<EdgeSystem> {
	let u = UnimodularTransform::new(u)?;
	let w = UnimodularTransform::new(w)?;
	let mut t = apply_basis_change(&es.topo, &u, &w)?;
	let mut rows = es.rows.clone();
	let mut cols = es.cols.clone();
	// A_J is now a signed permutation on the junction rows.
	let nj = t.nj();
	let a = t.a_j.clone();
	let mut perm = vec![0; nj];
	let mut sign = vec![1i64; nj];
	for c in 0..nj {
		let r = (0..nj).find(|&r| a.get(r, c) != 0).ok_or_else(|| DecomposeError::Illegal("junction column lost".into()))?;
		perm[r] = c;
		sign[r] = a.get(r, c);
	}
	t.a_j = IntMatrix::from_fn(t.n(), nj, |i, j| (i == j) as i64);
	t.e_j = (0..nj).map(|r| es.topo.e_j[perm[r]]).collect();
	t.junction_offset = crate::numeric::Vector::from_fn(nj, |r, _| sign[r] as f64 * es.topo.junction_offset[perm[r]]);
	let ns = t.ns();
	let b = t.b_s.clone();
	let mut sperm = vec![0; ns];
	let mut ssign = vec![1i64; ns];
	for c in 0..ns {
		let r = (0..ns).find(|&r| b.get(r, c) != 0).ok_or_else(|| DecomposeError::Illegal("phase-slip column lost".into()))?;
		sperm[r] = c;
		ssign[r] = b.get(r, c);
	}
	t.b_s = IntMatrix::from_fn(t.l(), ns, |i, j| (i == j) as i64);
	t.e_s = (0..ns).map(|r| es.topo.e_s[sperm[r]]).collect();
	t.slip_offset = crate::numeric::Vector::from_fn(ns, |r, _| ssign[r] as f64 * es.topo.slip_offset[sperm[r]]);
	// Row and column labels follow the transform when it is a signed permutation.
	let relabel = |labels: &mut Vec<EdgeLabel>, m: &IntMatrix| {
		let old = labels.clone();
		for (i, label) in labels.iter_mut().enumerate().take(m.nrows()) {
			let nz: Vec<usize> = (0..m.ncols()).filter(|&j| m.get(i, j) != 0).collect();
			if nz.len() == 1 {
				let l = old[nz[0]];
				*label = if m.get(i, nz[0]) < 0 { l.flipped() } else { l };
			}
		}
	};
	relabel(&mut rows, &u.m);
	relabel(&mut cols, &w.m);
	if !entries_ok(&t.omega) {
		return Err(DecomposeError::Illegal(format!("{step:?} leaves entries outside {{-1,0,1}}")));
	}
	let mut history = es.history.clone();
	history.push(step);
	Ok(EdgeSystem { topo: t, rows, cols, u: es.u.then(&u)?, w: es.w.then(&w)?, history, free_modes: es.free_modes.clone() })
}

/// Apply one structure-preserving operation. Pivots and additions may only
/// use linear capacitor rows and linear inductor columns as their source.
pub fn structure_preserving_step(es: &EdgeSystem, op: Step) -> Result<EdgeSystem> {
	let (n, l) = (es.topo.n(), es.topo.l());
	let om = es.omega();
	let mut u = IntMatrix::identity(n);
	let mut w = IntMatrix::identity(l);
	let bad = |s: String| Err(DecomposeError::Illegal(s));
	match op {
		Step::FlipRow { row } => {
			if row >= n {
				return bad(format!("row {row} out of range"));
			}
			u.set(row, row, -1);
		}
		Step::FlipCol { col } => {
			if col >= l {
				return bad(format!("column {col} out of range"));
			}
			w.set(col, col, -1);
		}
		Step::SwapRows { a, b } => {
			if a >= n || b >= n || (a < es.nj()) != (b < es.nj()) {
				return bad(format!("rows {a} and {b} are not of the same kind"));
			}
			u.swap_rows(a, b);
		}
		Step::SwapCols { a, b } => {
			if a >= l || b >= l || (a < es.ns()) != (b < es.ns()) {
				return bad(format!("columns {a} and {b} are not of the same kind"));
			}
			w.swap_rows(a, b);
		}
		Step::RowPivot { row, col } => {
			if !es.is_cap_row(row) || col >= l {
				return bad(format!("row pivot needs a linear capacitor row, got ({row},{col})"));
			}
			let p = om.get(row, col);
			if p.abs() != 1 {
				return bad(format!("pivot entry ({row},{col}) is {p}"));
			}
			for r in (0..n).filter(|&r| r != row) {
				u.set(r, row, -om.get(r, col) * p);
			}
		}
		Step::ColPivot { row, col } => {
			if !es.is_ind_col(col) || row >= n {
				return bad(format!("column pivot needs a linear inductor column, got ({row},{col})"));
			}
			let p = om.get(row, col);
			if p.abs() != 1 {
				return bad(format!("pivot entry ({row},{col}) is {p}"));
			}
			for c in (0..l).filter(|&c| c != col) {
				w.set(c, col, -om.get(row, c) * p);
			}
		}
		Step::RowAdd { dst, src, k } => {
			if !es.is_cap_row(src) || dst >= n || dst == src {
				return bad(format!("row {src} cannot be added to row {dst}"));
			}
			u.set(dst, src, k);
		}
		Step::ColAdd { dst, src, k } => {
			if !es.is_ind_col(src) || dst >= l || dst == src {
				return bad(format!("column {src} cannot be added to column {dst}"));
			}
			w.set(dst, src, k);
		}
	}
	transform(es, u, w, op)
}

/// Block structure of a fundamentally decomposed edge network matrix.
/// Indices refer to rows and columns of the decomposed system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalForm {
	pub j: usize,
	pub s: usize,
	pub f: usize,
	pub p: usize,
	pub r: usize,
	pub alpha: usize,
	pub beta: usize,
	pub junction_rows: Vec<usize>,
	pub p_rows: Vec<usize>,
	pub harmonic_rows: Vec<usize>,
	pub slip_cols: Vec<usize>,
	pub f_cols: Vec<usize>,
	pub harmonic_cols: Vec<usize>,
	pub omega_js: IntMatrix,
	pub omega_jf: IntMatrix,
	pub omega_ps: IntMatrix,
	pub free_modes_removed: bool,
}

impl FundamentalForm {
	/// Check the block shape against `omega`: harmonic pairs are unit
	/// entries, every other block outside the three named ones is zero.
	pub fn verify(&self, omega: &IntMatrix) -> bool {
		let rows: Vec<&[usize]> = vec![&self.junction_rows, &self.p_rows, &self.harmonic_rows];
		let cols: Vec<&[usize]> = vec![&self.slip_cols, &self.f_cols, &self.harmonic_cols];
		for (bi, rs) in rows.iter().enumerate() {
			for (bj, cs) in cols.iter().enumerate() {
				for (a, &i) in rs.iter().enumerate() {
					for (b, &j) in cs.iter().enumerate() {
						let v = omega.get(i, j);
						let ok = match (bi, bj) {
							(0, 0) => v == self.omega_js.get(a, b),
							(0, 1) => v == self.omega_jf.get(a, b),
							(1, 0) => v == self.omega_ps.get(a, b),
							(2, 2) => v == (a == b) as i64,
							_ => v == 0,
						};
						if !ok {
							return false;
						}
					}
				}
			}
		}
		self.f <= self.j && self.p <= self.s && self.omega_jf.rank() == self.f && self.omega_ps.rank() == self.p
	}
}

fn find_nonzero(om: &IntMatrix, rows: &[usize], cols: &[usize]) -> Option<(usize, usize)> {
	rows.iter().flat_map(|&i| cols.iter().map(move |&j| (i, j))).find(|&(i, j)| om.get(i, j) != 0)
}

/// Integer coefficients `x` with `target = Σ x_q basis_q`, or `None`.
fn express(basis: &[Vec<i64>], target: &[i64]) -> Option<Vec<i64>> {
	let k = basis.len();
	if k == 0 {
		return target.iter().all(|&v| v == 0).then(Vec::new);
	}
	let m = IntMatrix::from_fn(k, target.len(), |i, j| basis[i][j]);
	// a k x k nonsingular minor; entries of its inverse are integers for
	// totally unimodular input
	let mut chosen = Vec::new();
	for c in 0..target.len() {
		let mut trial = chosen.clone();
		trial.push(c);
		let rows: Vec<usize> = (0..k).collect();
		if m.select(&rows, &trial).rank() == trial.len() {
			chosen = trial;
		}
		if chosen.len() == k {
			break;
		}
	}
	if chosen.len() < k {
		return None;
	}
	let rows: Vec<usize> = (0..k).collect();
	let sq = m.select(&rows, &chosen);
	let inv = crate::intlin::invert_unimodular(&sq).ok()?;
	let rhs = IntMatrix::from_fn(1, k, |_, j| target[chosen[j]]);
	let x = rhs.mul(&inv).ok()?;
	let coeffs: Vec<i64> = (0..k).map(|i| x.get(0, i)).collect();
	let back: Vec<i64> = (0..target.len()).map(|c| (0..k).map(|i| coeffs[i] * basis[i][c]).sum()).collect();
	(back == target).then_some(coeffs)
}

fn greedy_independent(vectors: &[Vec<i64>]) -> Vec<usize> {
	let mut keep: Vec<usize> = Vec::new();
	for i in 0..vectors.len() {
		let mut trial = keep.clone();
		trial.push(i);
		let width = vectors[i].len();
		let m = IntMatrix::from_fn(trial.len(), width, |a, b| vectors[trial[a]][b]);
		if m.rank() == trial.len() {
			keep = trial;
		}
	}
	keep
}

fn pivot_needed_row(om: &IntMatrix, i: usize, j: usize) -> bool {
	(0..om.nrows()).any(|r| r != i && om.get(r, j) != 0)
}

fn pivot_needed_col(om: &IntMatrix, i: usize, j: usize) -> bool {
	(0..om.ncols()).any(|c| c != j && om.get(i, c) != 0)
}

/// Separate harmonic pairs, capacitor-only cutsets and inductor-only loops.
/// Rows and columns keep their positions; the returned form lists them.
pub fn fundamental_decomposition(es: &EdgeSystem) -> Result<(EdgeSystem, FundamentalForm)> {
	let mut cur = es.clone();
	let (nj, ns) = (cur.nj(), cur.ns());
	let mut used_rows: Vec<usize> = Vec::new();
	let mut used_cols: Vec<usize> = Vec::new();
	// harmonic pairs
	loop {
		let rows: Vec<usize> = (nj..cur.topo.n()).filter(|i| !used_rows.contains(i)).collect();
		let cols: Vec<usize> = (ns..cur.topo.l()).filter(|j| !used_cols.contains(j)).collect();
		let Some((i, j)) = find_nonzero(cur.omega(), &rows, &cols) else { break };
		if pivot_needed_col(cur.omega(), i, j) {
			cur = structure_preserving_step(&cur, Step::ColPivot { row: i, col: j })?;
		}
		if pivot_needed_row(cur.omega(), i, j) {
			cur = structure_preserving_step(&cur, Step::RowPivot { row: i, col: j })?;
		}
		used_rows.push(i);
		used_cols.push(j);
	}
	// dependent rows of the capacitor/phase-slip block and dependent columns
	// of the junction/inductor block are zeroed against an independent set
	let kappa: Vec<usize> = (nj..cur.topo.n()).filter(|i| !used_rows.contains(i)).collect();
	let lambda: Vec<usize> = (ns..cur.topo.l()).filter(|j| !used_cols.contains(j)).collect();
	let row_vecs: Vec<Vec<i64>> = kappa.iter().map(|&i| (0..ns).map(|c| cur.omega().get(i, c)).collect()).collect();
	let indep_rows = greedy_independent(&row_vecs);
	for (pos, &i) in kappa.iter().enumerate() {
		if indep_rows.contains(&pos) || row_vecs[pos].iter().all(|&v| v == 0) {
			continue;
		}
		let basis: Vec<Vec<i64>> = indep_rows.iter().map(|&q| row_vecs[q].clone()).collect();
		let x = express(&basis, &row_vecs[pos]).ok_or_else(|| DecomposeError::Illegal(format!("row {i} has no integer expansion")))?;
		for (q, &k) in indep_rows.iter().zip(&x) {
			if k != 0 {
				cur = structure_preserving_step(&cur, Step::RowAdd { dst: i, src: kappa[*q], k: -k })?;
			}
		}
	}
	let col_vecs: Vec<Vec<i64>> = lambda.iter().map(|&j| (0..nj).map(|r| cur.omega().get(r, j)).collect()).collect();
	let indep_cols = greedy_independent(&col_vecs);
	for (pos, &j) in lambda.iter().enumerate() {
		if indep_cols.contains(&pos) || col_vecs[pos].iter().all(|&v| v == 0) {
			continue;
		}
		let basis: Vec<Vec<i64>> = indep_cols.iter().map(|&q| col_vecs[q].clone()).collect();
		let x = express(&basis, &col_vecs[pos]).ok_or_else(|| DecomposeError::Illegal(format!("column {j} has no integer expansion")))?;
		for (q, &k) in indep_cols.iter().zip(&x) {
			if k != 0 {
				cur = structure_preserving_step(&cur, Step::ColAdd { dst: j, src: lambda[*q], k: -k })?;
			}
		}
	}
	// signs: unit harmonic entries, first nonzero of each inductor column positive
	for (&i, &j) in used_rows.iter().zip(&used_cols) {
		if cur.omega().get(i, j) < 0 {
			cur = structure_preserving_step(&cur, Step::FlipRow { row: i })?;
		}
	}
	for j in ns..cur.topo.l() {
		if used_cols.contains(&j) {
			continue;
		}
		if let Some(i) = (0..cur.topo.n()).find(|&i| cur.omega().get(i, j) != 0) {
			if cur.omega().get(i, j) < 0 {
				cur = structure_preserving_step(&cur, Step::FlipCol { col: j })?;
			}
		}
	}
	// free modes: zero linear rows and columns
	let om = cur.omega().clone();
	let alpha: Vec<usize> = (nj..cur.topo.n()).filter(|&i| om.row_is_zero(i)).collect();
	let beta: Vec<usize> = (ns..cur.topo.l()).filter(|&j| om.col_is_zero(j)).collect();
	let mut free_modes_removed = false;
	if !alpha.is_empty() || !beta.is_empty() {
		let (t, rec) = remove_free_modes(&cur.topo)?;
		if rec.alpha != alpha || rec.beta != beta || rec.u.m != IntMatrix::identity(cur.topo.n()) || rec.w.m != IntMatrix::identity(cur.topo.l()) {
			return Err(DecomposeError::Illegal("free modes did not separate cleanly".into()));
		}
		cur.rows = rec.kept_nodes.iter().map(|&i| cur.rows[i]).collect();
		cur.cols = rec.kept_loops.iter().map(|&j| cur.cols[j]).collect();
		let remap = |v: &[usize], kept: &[usize]| -> Vec<usize> { v.iter().map(|x| kept.iter().position(|k| k == x).unwrap()).collect() };
		used_rows = remap(&used_rows, &rec.kept_nodes);
		used_cols = remap(&used_cols, &rec.kept_loops);
		cur.topo = t;
		cur.free_modes = Some(rec);
		free_modes_removed = true;
	}
	let om = cur.omega();
	let junction_rows: Vec<usize> = (0..nj).collect();
	let slip_cols: Vec<usize> = (0..ns).collect();
	let p_rows: Vec<usize> = (nj..cur.topo.n()).filter(|i| !used_rows.contains(i)).collect();
	let f_cols: Vec<usize> = (ns..cur.topo.l()).filter(|j| !used_cols.contains(j)).collect();
	let ff = FundamentalForm {
		j: nj,
		s: ns,
		f: f_cols.len(),
		p: p_rows.len(),
		r: used_rows.len(),
		alpha: alpha.len(),
		beta: beta.len(),
		omega_js: om.select(&junction_rows, &slip_cols),
		omega_jf: om.select(&junction_rows, &f_cols),
		omega_ps: om.select(&p_rows, &slip_cols),
		junction_rows,
		p_rows,
		harmonic_rows: used_rows,
		slip_cols,
		f_cols,
		harmonic_cols: used_cols,
		free_modes_removed,
	};
	if !ff.verify(om) {
		return Err(DecomposeError::Illegal("decomposition did not reach the block form".into()));
	}
	Ok((cur, ff))
}

/// Classification key of a fundamental form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassSignature {
	pub j: usize,
	pub s: usize,
	pub f: usize,
	pub p: usize,
	pub r: usize,
	/// Canonical `[[Ω_JS, Ω_Jf], [Ω_pS, 0]]`, reduced to `Ω_Jf` when `s = 0`.
	pub matrix: Vec<Vec<i64>>,
}

pub const SIGNATURE_MAX: usize = 3;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Block {
	data: Vec<i64>,
}

struct Shape {
	j: usize,
	p: usize,
	s: usize,
	f: usize,
}

impl Shape {
	fn rows(&self) -> usize {
		self.j + self.p
	}
	fn cols(&self) -> usize {
		self.s + self.f
	}
	fn get(&self, b: &Block, i: usize, c: usize) -> i64 {
		b.data[i * self.cols() + c]
	}

	fn neighbours(&self, b: &Block) -> Vec<Block> {
		let (nr, nc) = (self.rows(), self.cols());
		let mut out = Vec::new();
		let at = |d: &Vec<i64>, i: usize, c: usize| d[i * nc + c];
		// row groups: junction rows, capacitor rows; column groups: slips, inductors
		for (lo, hi) in [(0, self.j), (self.j, nr)] {
			for i in lo..hi {
				let mut d = b.data.clone();
				for c in 0..nc {
					d[i * nc + c] = -d[i * nc + c];
				}
				out.push(Block { data: d });
				if i + 1 < hi {
					let mut d = b.data.clone();
					for c in 0..nc {
						d.swap(i * nc + c, (i + 1) * nc + c);
					}
					out.push(Block { data: d });
				}
			}
		}
		for (lo, hi) in [(0, self.s), (self.s, nc)] {
			for c in lo..hi {
				let mut d = b.data.clone();
				for i in 0..nr {
					d[i * nc + c] = -d[i * nc + c];
				}
				out.push(Block { data: d });
				if c + 1 < hi {
					let mut d = b.data.clone();
					for i in 0..nr {
						d.swap(i * nc + c, i * nc + c + 1);
					}
					out.push(Block { data: d });
				}
			}
		}
		// row pivots on the capacitor/phase-slip block
		for i in self.j..nr {
			for c in 0..self.s {
				let p = at(&b.data, i, c);
				if p == 0 {
					continue;
				}
				let mut d = b.data.clone();
				for r in (0..nr).filter(|&r| r != i) {
					let k = at(&b.data, r, c) * p;
					for cc in 0..nc {
						d[r * nc + cc] -= k * at(&b.data, i, cc);
					}
				}
				out.push(Block { data: d });
			}
		}
		// column pivots on the junction/inductor block
		for i in 0..self.j {
			for c in self.s..nc {
				let p = at(&b.data, i, c);
				if p == 0 {
					continue;
				}
				let mut d = b.data.clone();
				for cc in (0..nc).filter(|&cc| cc != c) {
					let k = at(&b.data, i, cc) * p;
					for r in 0..nr {
						d[r * nc + cc] -= k * at(&b.data, r, c);
					}
				}
				out.push(Block { data: d });
			}
		}
		// single additions of a capacitor row or an inductor column; these
		// make the relation symmetric, since a pivot has no pivot inverse
		for i in self.j..nr {
			for r in (0..nr).filter(|&r| r != i) {
				for k in [-1, 1] {
					let mut d = b.data.clone();
					for cc in 0..nc {
						d[r * nc + cc] += k * at(&b.data, i, cc);
					}
					out.push(Block { data: d });
				}
			}
		}
		for c in self.s..nc {
			for cc in (0..nc).filter(|&cc| cc != c) {
				for k in [-1, 1] {
					let mut d = b.data.clone();
					for r in 0..nr {
						d[r * nc + cc] += k * at(&b.data, r, c);
					}
					out.push(Block { data: d });
				}
			}
		}
		out.retain(|x| x.data.iter().all(|v| v.abs() <= 1) && check_tu_exhaustive(&IntMatrix::from_fn(nr, nc, |i, c| x.data[i * nc + c])));
		out
	}

	fn columns_lead_positive(&self, b: &Block) -> bool {
		(0..self.cols()).all(|c| (0..self.rows()).map(|i| self.get(b, i, c)).find(|&v| v != 0).is_none_or(|v| v > 0))
	}
}

fn canonical_block(shape: &Shape, start: Block) -> Block {
	let mut seen: BTreeSet<Block> = BTreeSet::new();
	let mut queue = VecDeque::from([start.clone()]);
	seen.insert(start);
	while let Some(b) = queue.pop_front() {
		for nb in shape.neighbours(&b) {
			if seen.insert(nb.clone()) {
				queue.push_back(nb);
			}
		}
	}
	seen.into_iter().find(|b| shape.columns_lead_positive(b)).expect("orbit is closed under column flips")
}

/// Orbit representative under relabelling, reorientation, legal pivots and
/// single legal row/column additions that keep the matrix totally unimodular:
/// the lexicographically smallest member (row-major) whose columns each
/// start with a positive entry.
pub fn canonical_signature(ff: &FundamentalForm) -> Result<ClassSignature> {
	if [ff.j, ff.s, ff.f, ff.p].iter().any(|&x| x > SIGNATURE_MAX) {
		return Err(DecomposeError::Unsupported(format!(
			"orbit enumeration is limited to {SIGNATURE_MAX} junctions, slips and extra edges (J={}, S={}, f={}, p={})",
			ff.j, ff.s, ff.f, ff.p
		)));
	}
	let shape = Shape { j: ff.j, p: ff.p, s: ff.s, f: ff.f };
	let mut data = Vec::with_capacity(shape.rows() * shape.cols());
	for i in 0..shape.rows() {
		for c in 0..shape.cols() {
			data.push(match (i < ff.j, c < ff.s) {
				(true, true) => ff.omega_js.get(i, c),
				(true, false) => ff.omega_jf.get(i, c - ff.s),
				(false, true) => ff.omega_ps.get(i - ff.j, c),
				(false, false) => 0,
			});
		}
	}
	let b = canonical_block(&shape, Block { data });
	let matrix = (0..shape.rows()).map(|i| (0..shape.cols()).map(|c| shape.get(&b, i, c)).collect()).collect();
	Ok(ClassSignature { j: ff.j, s: ff.s, f: ff.f, p: ff.p, r: ff.r, matrix })
}

/// Fundamental form with junction rows and extra inductive columns only.
pub fn junction_only_form(omega_jf: IntMatrix) -> FundamentalForm {
	let (j, f) = omega_jf.shape();
	FundamentalForm {
		j,
		s: 0,
		f,
		p: 0,
		r: 0,
		alpha: 0,
		beta: 0,
		junction_rows: (0..j).collect(),
		p_rows: vec![],
		harmonic_rows: vec![],
		slip_cols: vec![],
		f_cols: (j..j + f).collect(),
		harmonic_cols: vec![],
		omega_js: IntMatrix::zeros(j, 0),
		omega_jf,
		omega_ps: IntMatrix::zeros(0, 0),
		free_modes_removed: true,
	}
}

/// All classes of junction-only circuits with `j` junctions: every
/// totally unimodular `j x f` matrix with `f ≤ j`, full column rank and no
/// zero column, up to equivalence.
pub fn enumerate_junction_classes(j: usize) -> Result<Vec<ClassSignature>> {
	if j > SIGNATURE_MAX {
		return Err(DecomposeError::Unsupported(format!("enumeration is limited to {SIGNATURE_MAX} junctions")));
	}
	let mut classes: Vec<ClassSignature> = Vec::new();
	for f in 0..=j {
		let cells = j * f;
		let total = 3usize.pow(cells as u32);
		for code in 0..total {
			let m = IntMatrix::from_fn(j, f, |r, c| ((code / 3usize.pow((r * f + c) as u32)) % 3) as i64 - 1);
			if (0..f).any(|c| m.col_is_zero(c)) || m.rank() != f || !check_tu_exhaustive(&m) {
				continue;
			}
			let sig = canonical_signature(&junction_only_form(m))?;
			if !classes.contains(&sig) {
				classes.push(sig);
			}
		}
	}
	Ok(classes)
}

/// Return to node fluxes with a new capacitive incidence matrix (and
/// optionally a new loop matrix), `Ω' = A Ω_E Bᵀ`.
pub fn to_node_basis(es: &EdgeSystem, a_new: &IntMatrix, b_new: Option<&IntMatrix>) -> Result<CircuitTopology> {
	let (n, l) = (es.topo.n(), es.topo.l());
	if a_new.shape() != (n, n) {
		return Err(DecomposeError::Inconsistent(format!("incidence matrix must be {n}x{n}")));
	}
	let incidence_like = |m: &IntMatrix| {
		(0..m.ncols()).all(|c| {
			let col: Vec<i64> = (0..m.nrows()).map(|r| m.get(r, c)).collect();
			col.iter().all(|v| v.abs() <= 1) && col.iter().filter(|&&v| v == 1).count() <= 1 && col.iter().filter(|&&v| v == -1).count() <= 1
		})
	};
	if !incidence_like(a_new) {
		return Err(DecomposeError::Inconsistent("columns must hold at most one +1 and one -1".into()));
	}
	let u = UnimodularTransform::new(a_new.clone()).map_err(|e| DecomposeError::Inconsistent(e.to_string()))?;
	let w = match b_new {
		Some(b) => {
			if b.shape() != (l, l) {
				return Err(DecomposeError::Inconsistent(format!("loop matrix must be {l}x{l}")));
			}
			UnimodularTransform::new(b.clone()).map_err(|e| DecomposeError::Inconsistent(e.to_string()))?
		}
		None => UnimodularTransform::identity(l),
	};
	let t = apply_basis_change(&es.topo, &u, &w)?;
	let tu = if n.min(l) <= TU_EXHAUSTIVE_LIMIT { check_tu_exhaustive(&t.omega) } else { check_tu_sampled(&t.omega, 2000, 7) };
	if !entries_ok(&t.omega) || !tu {
		return Err(DecomposeError::Inconsistent("resulting network matrix is not totally unimodular".into()));
	}
	Ok(t)
}

/// JSON report of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
	pub steps: Vec<ReportStep>,
	pub fundamental_form: FundamentalForm,
	pub signature: Option<ClassSignature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStep {
	pub step: Step,
	pub omega: IntMatrix,
}

/// Replay the history of `done` from `start`, recording `Ω_E` after each step.
pub fn replay(start: &EdgeSystem, done: &EdgeSystem) -> Result<Vec<ReportStep>> {
	let mut cur = start.clone();
	let mut out = Vec::new();
	for &s in &done.history[start.history.len()..] {
		cur = structure_preserving_step(&cur, s)?;
		out.push(ReportStep { step: s, omega: cur.omega().clone() });
	}
	Ok(out)
}

pub fn report(start: &EdgeSystem) -> Result<(EdgeSystem, DecompositionReport)> {
	let (done, ff) = fundamental_decomposition(start)?;
	let steps = replay(start, &done)?;
	let signature = canonical_signature(&ff).ok();
	Ok((done, DecompositionReport { steps, fundamental_form: ff, signature }))
}
