//! Branch netlists, the node/loop system they induce, tree-cotree
//! selection, validation and integer basis changes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intlin::{IntError, IntMatrix, UnimodularTransform};
use crate::numeric::{cholesky, Mat, NumericError, Vector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
	/// Some capacitive nodes have no capacitive path to ground.
	#[error("capacitive network has more than one ground; unreachable nodes {0:?}")]
	MultiGround(Vec<String>),
	#[error("branch {index}: {reason}")]
	InvalidBranch { index: usize, reason: String },
	#[error("{matrix} is degenerate at {labels:?}")]
	Degenerate { matrix: &'static str, labels: Vec<String> },
	#[error("no admissible tree/cotree: {0}")]
	Infeasible(String),
	#[error("dimension mismatch: {0}")]
	Dimension(String),
	#[error(transparent)]
	Int(#[from] IntError),
	#[error(transparent)]
	Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Branch {
	Capacitor {
		from: usize,
		to: usize,
		value: f64,
	},
	Josephson {
		from: usize,
		to: usize,
		ej: f64,
		cj: f64,
	},
	Inductor {
		from: usize,
		to: usize,
		value: f64,
		#[serde(default)]
		phi_ext: f64,
		#[serde(default)]
		m0: f64,
	},
	PhaseSlip {
		from: usize,
		to: usize,
		es: f64,
		ls: f64,
		#[serde(default)]
		phi_ext: f64,
		#[serde(default)]
		m0: f64,
	},
	/// Mutual inductance between two inductive branches (by branch index).
	Mutual {
		a: usize,
		b: usize,
		value: f64,
	},
}

impl Branch {
	fn ends(&self) -> Option<(usize, usize)> {
		match *self {
			Branch::Capacitor { from, to, .. }
			| Branch::Josephson { from, to, .. }
			| Branch::Inductor { from, to, .. }
			| Branch::PhaseSlip { from, to, .. } => Some((from, to)),
			Branch::Mutual { .. } => None,
		}
	}

	fn is_capacitive(&self) -> bool {
		matches!(self, Branch::Capacitor { .. } | Branch::Josephson { .. })
	}

	fn is_inductive(&self) -> bool {
		matches!(self, Branch::Inductor { .. } | Branch::PhaseSlip { .. })
	}
}

/// External charge and trapped Cooper-pair counts, keyed by node label.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct External {
	#[serde(default)]
	pub q_ext: BTreeMap<String, f64>,
	#[serde(default)]
	pub n0: BTreeMap<String, f64>,
}

/// Circuit given as branches between labelled nodes; node 0 is ground.
/// External flux and trapped fluxons are attached to inductive branches
/// and summed around each loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchNetlist {
	pub nodes: Vec<String>,
	pub branches: Vec<Branch>,
	#[serde(default)]
	pub external: External,
}

/// Node/loop description: every symbol of the equations of motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRepr", into = "TopologyRepr")]
pub struct CircuitTopology {
	pub cap: Mat,
	pub ind: Mat,
	pub a_j: IntMatrix,
	pub b_s: IntMatrix,
	pub omega: IntMatrix,
	pub q_ext: Vector,
	pub phi_ext: Vector,
	pub n0: Vector,
	pub m0: Vector,
	pub e_j: Vec<f64>,
	pub e_s: Vec<f64>,
	/// Constant added to each junction flux inside its cosine.
	pub junction_offset: Vector,
	/// Constant added to each phase-slip charge inside its cosine.
	pub slip_offset: Vector,
}

impl CircuitTopology {
	/// Topology with zero offsets and zero trapped integers.
	pub fn new(cap: Mat, ind: Mat, a_j: IntMatrix, b_s: IntMatrix, omega: IntMatrix, e_j: Vec<f64>, e_s: Vec<f64>) -> Self {
		let (n, l) = (cap.nrows(), ind.nrows());
		let (nj, ns) = (a_j.ncols(), b_s.ncols());
		Self {
			cap,
			ind,
			a_j,
			b_s,
			omega,
			q_ext: Vector::zeros(n),
			phi_ext: Vector::zeros(l),
			n0: Vector::zeros(n),
			m0: Vector::zeros(l),
			e_j,
			e_s,
			junction_offset: Vector::zeros(nj),
			slip_offset: Vector::zeros(ns),
		}
	}

	pub fn n(&self) -> usize {
		self.cap.nrows()
	}

	pub fn l(&self) -> usize {
		self.ind.nrows()
	}

	pub fn nj(&self) -> usize {
		self.a_j.ncols()
	}

	pub fn ns(&self) -> usize {
		self.b_s.ncols()
	}

	pub fn check_shapes(&self) -> Result<(), GraphError> {
		let (n, l, nj, ns) = (self.n(), self.l(), self.nj(), self.ns());
		let bad = |what: &str| Err(GraphError::Dimension(what.to_string()));
		if self.cap.ncols() != n || self.ind.ncols() != l {
			return bad("C and L must be square");
		}
		if self.a_j.nrows() != n || self.omega.shape() != (n, l) || self.b_s.nrows() != l {
			return bad("A_J, B_S, Omega inconsistent with C, L");
		}
		if self.q_ext.len() != n || self.n0.len() != n || self.phi_ext.len() != l || self.m0.len() != l {
			return bad("offset vectors inconsistent with C, L");
		}
		if self.e_j.len() != nj || self.junction_offset.len() != nj {
			return bad("junction data inconsistent with A_J");
		}
		if self.e_s.len() != ns || self.slip_offset.len() != ns {
			return bad("phase-slip data inconsistent with B_S");
		}
		Ok(())
	}
}

#[derive(Serialize, Deserialize)]
struct TopologyRepr {
	cap: Vec<Vec<f64>>,
	ind: Vec<Vec<f64>>,
	a_j: Vec<Vec<i64>>,
	b_s: Vec<Vec<i64>>,
	omega: Vec<Vec<i64>>,
	#[serde(default)]
	q_ext: Option<Vec<f64>>,
	#[serde(default)]
	phi_ext: Option<Vec<f64>>,
	#[serde(default)]
	n0: Option<Vec<f64>>,
	#[serde(default)]
	m0: Option<Vec<f64>>,
	#[serde(default)]
	e_j: Vec<f64>,
	#[serde(default)]
	e_s: Vec<f64>,
	#[serde(default)]
	junction_offset: Option<Vec<f64>>,
	#[serde(default)]
	slip_offset: Option<Vec<f64>>,
}

pub(crate) fn mat_rows(m: &Mat) -> Vec<Vec<f64>> {
	(0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

pub(crate) fn rows_mat(rows: &[Vec<f64>], n: usize) -> Result<Mat, String> {
	if rows.len() != n || rows.iter().any(|r| r.len() != n) {
		return Err(format!("expected a {n}x{n} matrix"));
	}
	Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

fn int_rows(rows: Vec<Vec<i64>>, r: usize, c: usize, name: &str) -> Result<IntMatrix, String> {
	if rows.is_empty() && (r == 0 || c == 0) {
		return Ok(IntMatrix::zeros(r, c));
	}
	let m = IntMatrix::try_from(rows).map_err(|e| e.to_string())?;
	if m.nrows() != r || (m.ncols() != c && !(c == 0 && m.ncols() == 0)) {
		return Err(format!("{name} must be {r}x{c}"));
	}
	Ok(IntMatrix::from_fn(r, c, |i, j| m.get(i, j)))
}

impl TryFrom<TopologyRepr> for CircuitTopology {
	type Error = String;
	fn try_from(r: TopologyRepr) -> Result<Self, String> {
		let n = r.cap.len();
		let l = r.ind.len();
		let nj = r.e_j.len();
		let ns = r.e_s.len();
		let vec_or = |v: Option<Vec<f64>>, k: usize, name: &str| -> Result<Vector, String> {
			match v {
				None => Ok(Vector::zeros(k)),
				Some(v) if v.len() == k => Ok(Vector::from_vec(v)),
				Some(_) => Err(format!("{name} must have length {k}")),
			}
		};
		let t = CircuitTopology {
			cap: rows_mat(&r.cap, n)?,
			ind: rows_mat(&r.ind, l)?,
			a_j: int_rows(r.a_j, n, nj, "a_j")?,
			b_s: int_rows(r.b_s, l, ns, "b_s")?,
			omega: int_rows(r.omega, n, l, "omega")?,
			q_ext: vec_or(r.q_ext, n, "q_ext")?,
			phi_ext: vec_or(r.phi_ext, l, "phi_ext")?,
			n0: vec_or(r.n0, n, "n0")?,
			m0: vec_or(r.m0, l, "m0")?,
			e_j: r.e_j,
			e_s: r.e_s,
			junction_offset: vec_or(r.junction_offset, nj, "junction_offset")?,
			slip_offset: vec_or(r.slip_offset, ns, "slip_offset")?,
		};
		t.check_shapes().map_err(|e| e.to_string())?;
		Ok(t)
	}
}

impl From<CircuitTopology> for TopologyRepr {
	fn from(t: CircuitTopology) -> Self {
		let v = |x: &Vector| Some(x.iter().cloned().collect::<Vec<_>>());
		TopologyRepr {
			cap: mat_rows(&t.cap),
			ind: mat_rows(&t.ind),
			a_j: t.a_j.to_rows(),
			b_s: t.b_s.to_rows(),
			omega: t.omega.to_rows(),
			q_ext: v(&t.q_ext),
			phi_ext: v(&t.phi_ext),
			n0: v(&t.n0),
			m0: v(&t.m0),
			junction_offset: v(&t.junction_offset),
			slip_offset: v(&t.slip_offset),
			e_j: t.e_j,
			e_s: t.e_s,
		}
	}
}

/// One fundamental loop: the cotree branch that defines it and the signed
/// branches it traverses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopInfo {
	pub cotree_branch: usize,
	pub branches: Vec<(usize, i64)>,
}

/// How a netlist was mapped onto nodes and loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopBasis {
	/// Netlist node index of each topology node.
	pub node_of_row: Vec<usize>,
	pub node_labels: Vec<String>,
	pub loops: Vec<LoopInfo>,
	pub capacitive_tree: Vec<usize>,
	/// Inductive branches used to reach nodes without capacitance.
	pub inductive_tree: Vec<usize>,
	/// Netlist index of each junction column and phase-slip column.
	pub junctions: Vec<usize>,
	pub phase_slips: Vec<usize>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
	fn new(n: usize) -> Self {
		Self((0..n).collect())
	}
	fn find(&mut self, x: usize) -> usize {
		let mut r = x;
		while self.0[r] != r {
			r = self.0[r];
		}
		let mut y = x;
		while self.0[y] != r {
			let next = self.0[y];
			self.0[y] = r;
			y = next;
		}
		r
	}
	fn union(&mut self, a: usize, b: usize) -> bool {
		let (ra, rb) = (self.find(a), self.find(b));
		if ra == rb {
			return false;
		}
		self.0[ra.max(rb)] = ra.min(rb);
		true
	}
}

fn check_branches(net: &BranchNetlist) -> Result<(), GraphError> {
	let nn = net.nodes.len();
	if nn == 0 {
		return Err(GraphError::Dimension("netlist has no nodes (node 0 must be ground)".into()));
	}
	let bad = |index: usize, reason: &str| Err(GraphError::InvalidBranch { index, reason: reason.to_string() });
	for (i, b) in net.branches.iter().enumerate() {
		if let Some((f, t)) = b.ends() {
			if f >= nn || t >= nn {
				return bad(i, "endpoint out of range");
			}
		}
		let ok = |x: f64| x.is_finite() && x > 0.0;
		match *b {
			Branch::Capacitor { value, from, to } => {
				if !ok(value) {
					return bad(i, "capacitance must be positive");
				}
				if from == to {
					return bad(i, "capacitor endpoints coincide");
				}
			}
			Branch::Josephson { ej, cj, from, to } => {
				if !ok(cj) {
					return bad(i, "junction needs a positive intrinsic capacitance");
				}
				if !(ej.is_finite() && ej >= 0.0) {
					return bad(i, "E_J must be non-negative");
				}
				if from == to {
					return bad(i, "junction endpoints coincide");
				}
			}
			Branch::Inductor { value, phi_ext, m0, .. } => {
				if !ok(value) {
					return bad(i, "inductance must be positive");
				}
				if !phi_ext.is_finite() || !m0.is_finite() {
					return bad(i, "non-finite offset");
				}
			}
			Branch::PhaseSlip { es, ls, phi_ext, m0, .. } => {
				if !ok(ls) {
					return bad(i, "phase slip needs a positive intrinsic inductance");
				}
				if !(es.is_finite() && es >= 0.0) {
					return bad(i, "E_S must be non-negative");
				}
				if !phi_ext.is_finite() || !m0.is_finite() {
					return bad(i, "non-finite offset");
				}
			}
			Branch::Mutual { a, b: bb, value } => {
				let ind = |k: usize| net.branches.get(k).is_some_and(|x| x.is_inductive());
				if !ind(a) || !ind(bb) || a == bb {
					return bad(i, "mutual must reference two distinct inductive branches");
				}
				if !value.is_finite() {
					return bad(i, "non-finite mutual inductance");
				}
			}
		}
	}
	Ok(())
}

/// Signed branch path between two nodes of a forest given by `tree` edges.
fn tree_path(net: &BranchNetlist, tree: &[usize], start: usize, goal: usize) -> Option<Vec<(usize, i64)>> {
	let nn = net.nodes.len();
	let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nn];
	for &b in tree {
		let (f, t) = net.branches[b].ends().unwrap();
		adj[f].push((t, b));
		adj[t].push((f, b));
	}
	let mut prev: Vec<Option<(usize, usize)>> = vec![None; nn];
	let mut seen = vec![false; nn];
	let mut queue = std::collections::VecDeque::from([start]);
	seen[start] = true;
	while let Some(x) = queue.pop_front() {
		if x == goal {
			break;
		}
		for &(y, b) in &adj[x] {
			if !seen[y] {
				seen[y] = true;
				prev[y] = Some((x, b));
				queue.push_back(y);
			}
		}
	}
	if !seen[goal] {
		return None;
	}
	let mut path = Vec::new();
	let mut y = goal;
	while y != start {
		let (x, b) = prev[y].unwrap();
		let (f, _) = net.branches[b].ends().unwrap();
		path.push((b, if f == x { 1 } else { -1 }));
		y = x;
	}
	path.reverse();
	Some(path)
}

/// Assemble `C`, `L`, `A_J`, `B_S`, `Omega` and the offsets from a branch
/// netlist. One loop is created per inductive cotree branch (phase slips
/// first, then inductors, netlist order), closed through the tree.
pub fn build_topology(net: &BranchNetlist) -> Result<(CircuitTopology, LoopBasis), GraphError> {
	check_branches(net)?;
	let nn = net.nodes.len();
	let br = &net.branches;

	let mut capacitive_node = vec![false; nn];
	capacitive_node[0] = true;
	for b in br.iter().filter(|b| b.is_capacitive()) {
		let (f, t) = b.ends().unwrap();
		capacitive_node[f] = true;
		capacitive_node[t] = true;
	}

	let mut cap_order: Vec<usize> = (0..br.len()).filter(|&i| matches!(br[i], Branch::Josephson { .. })).collect();
	cap_order.extend((0..br.len()).filter(|&i| matches!(br[i], Branch::Capacitor { .. })));
	let mut uf = UnionFind::new(nn);
	let mut capacitive_tree = Vec::new();
	for &i in &cap_order {
		let (f, t) = br[i].ends().unwrap();
		if uf.union(f, t) {
			capacitive_tree.push(i);
		}
	}
	let stranded: Vec<String> =
		(1..nn).filter(|&v| capacitive_node[v] && uf.find(v) != uf.find(0)).map(|v| net.nodes[v].clone()).collect();
	if !stranded.is_empty() {
		return Err(GraphError::MultiGround(stranded));
	}

	let mut ind_order: Vec<usize> = (0..br.len()).filter(|&i| matches!(br[i], Branch::Inductor { .. })).collect();
	ind_order.extend((0..br.len()).filter(|&i| matches!(br[i], Branch::PhaseSlip { .. })));
	let mut inductive_tree = Vec::new();
	let mut cotree = Vec::new();
	for &i in &ind_order {
		let (f, t) = br[i].ends().unwrap();
		if uf.union(f, t) {
			inductive_tree.push(i);
		} else {
			cotree.push(i);
		}
	}
	cotree.sort_by_key(|&i| (!matches!(br[i], Branch::PhaseSlip { .. }), i));

	let forest: Vec<usize> = capacitive_tree.iter().chain(inductive_tree.iter()).cloned().collect();
	let mut loops = Vec::new();
	for &e in &cotree {
		let (f, t) = br[e].ends().unwrap();
		let mut branches = vec![(e, 1)];
		if f != t {
			let back = tree_path(net, &forest, t, f)
				.ok_or_else(|| GraphError::Infeasible(format!("branch {e} does not close a loop")))?;
			branches.extend(back);
		}
		loops.push(LoopInfo { cotree_branch: e, branches });
	}

	let node_of_row: Vec<usize> = (1..nn).filter(|&v| capacitive_node[v]).collect();
	let mut row_of_node = vec![usize::MAX; nn];
	for (r, &v) in node_of_row.iter().enumerate() {
		row_of_node[v] = r;
	}
	let n = node_of_row.len();
	let l = loops.len();

	let incidence = |from: usize, to: usize| -> Vec<(usize, i64)> {
		let mut v = Vec::new();
		if row_of_node[to] != usize::MAX {
			v.push((row_of_node[to], 1));
		}
		if row_of_node[from] != usize::MAX {
			v.push((row_of_node[from], -1));
		}
		v
	};

	let mut cap = Mat::zeros(n, n);
	for b in br.iter() {
		let (c, (f, t)) = match *b {
			Branch::Capacitor { value, from, to } => (value, (from, to)),
			Branch::Josephson { cj, from, to, .. } => (cj, (from, to)),
			_ => continue,
		};
		let inc = incidence(f, t);
		for &(i, si) in &inc {
			for &(j, sj) in &inc {
				cap[(i, j)] += c * (si * sj) as f64;
			}
		}
	}

	let junctions: Vec<usize> = (0..br.len()).filter(|&i| matches!(br[i], Branch::Josephson { .. })).collect();
	let phase_slips: Vec<usize> = (0..br.len()).filter(|&i| matches!(br[i], Branch::PhaseSlip { .. })).collect();
	let mut a_j = IntMatrix::zeros(n, junctions.len());
	let mut e_j = Vec::new();
	for (c, &i) in junctions.iter().enumerate() {
		let (f, t) = br[i].ends().unwrap();
		for (r, s) in incidence(f, t) {
			a_j.set(r, c, a_j.get(r, c) + s);
		}
		if let Branch::Josephson { ej, .. } = br[i] {
			e_j.push(ej);
		}
	}

	let inductive: Vec<usize> = (0..br.len()).filter(|&i| br[i].is_inductive()).collect();
	let col_of = |b: usize| inductive.iter().position(|&x| x == b).unwrap();
	let ni = inductive.len();
	let mut lb = Mat::zeros(ni, ni);
	let mut phi_b = Vector::zeros(ni);
	let mut m0_b = Vector::zeros(ni);
	for (k, &i) in inductive.iter().enumerate() {
		match br[i] {
			Branch::Inductor { value, phi_ext, m0, .. } => {
				lb[(k, k)] = value;
				phi_b[k] = phi_ext;
				m0_b[k] = m0;
			}
			Branch::PhaseSlip { ls, phi_ext, m0, .. } => {
				lb[(k, k)] = ls;
				phi_b[k] = phi_ext;
				m0_b[k] = m0;
			}
			_ => unreachable!(),
		}
	}
	for b in br.iter() {
		if let Branch::Mutual { a, b, value } = *b {
			let (x, y) = (col_of(a), col_of(b));
			lb[(x, y)] += value;
			lb[(y, x)] += value;
		}
	}
	if ni > 0 {
		if let Err(NumericError::NotPositiveDefinite { index, .. }) = cholesky(&lb) {
			return Err(GraphError::Degenerate { matrix: "branch inductance", labels: vec![format!("branch {}", inductive[index])] });
		}
	}

	let mut b_l = Mat::zeros(l, ni);
	let mut b_li = IntMatrix::zeros(l, ni);
	for (r, lp) in loops.iter().enumerate() {
		for &(b, s) in &lp.branches {
			if br[b].is_inductive() {
				let c = col_of(b);
				b_li.set(r, c, b_li.get(r, c) + s);
				b_l[(r, c)] += s as f64;
			}
		}
	}
	let ind = crate::numeric::symmetrize(&(&b_l * &lb * b_l.transpose()));
	let mut a_l = IntMatrix::zeros(n, ni);
	for (c, &i) in inductive.iter().enumerate() {
		let (f, t) = br[i].ends().unwrap();
		for (r, s) in incidence(f, t) {
			a_l.set(r, c, a_l.get(r, c) + s);
		}
	}
	let omega = a_l.mul(&b_li.transpose())?;
	let mut b_s = IntMatrix::zeros(l, phase_slips.len());
	let mut e_s = Vec::new();
	for (c, &i) in phase_slips.iter().enumerate() {
		let k = col_of(i);
		for r in 0..l {
			b_s.set(r, c, b_li.get(r, k));
		}
		if let Branch::PhaseSlip { es, .. } = br[i] {
			e_s.push(es);
		}
	}

	let node_labels: Vec<String> = node_of_row.iter().map(|&v| net.nodes[v].clone()).collect();
	let lookup = |map: &BTreeMap<String, f64>, what: &str| -> Result<Vector, GraphError> {
		let mut v = Vector::zeros(n);
		for (k, x) in map {
			let r = node_labels.iter().position(|s| s == k).ok_or_else(|| GraphError::InvalidBranch {
				index: usize::MAX,
				reason: format!("{what} names `{k}`, which is not a capacitive node"),
			})?;
			v[r] = *x;
		}
		Ok(v)
	};
	let mut topo = CircuitTopology::new(cap, ind, a_j, b_s, omega, e_j, e_s);
	topo.q_ext = lookup(&net.external.q_ext, "q_ext")?;
	topo.n0 = lookup(&net.external.n0, "n0")?;
	topo.phi_ext = &b_l * phi_b;
	topo.m0 = &b_l * m0_b;

	if n > 0 {
		if let Err(NumericError::NotPositiveDefinite { index, .. }) = cholesky(&topo.cap) {
			return Err(GraphError::Degenerate { matrix: "C", labels: vec![node_labels[index].clone()] });
		}
	}
	if l > 0 {
		if let Err(NumericError::NotPositiveDefinite { index, .. }) = cholesky(&topo.ind) {
			return Err(GraphError::Degenerate { matrix: "L", labels: vec![format!("loop {index}")] });
		}
	}
	let basis = LoopBasis { node_of_row, node_labels, loops, capacitive_tree, inductive_tree, junctions, phase_slips };
	Ok((topo, basis))
}

/// A constraint violated by a topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
	/// Junctions closing a loop made only of junctions.
	JunctionOnlyLoop { junctions: Vec<usize>, rank: usize },
	/// Phase slips forming a cutset made only of phase slips.
	PhaseSlipOnlyCutset { phase_slips: Vec<usize>, rank: usize },
	CapacitanceNotPositiveDefinite { index: usize },
	InductanceNotPositiveDefinite { index: usize },
	NonUnitEntries { matrix: String },
	Shape { reason: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
	pub violations: Vec<Violation>,
}

impl Diagnostics {
	pub fn ok(&self) -> bool {
		self.violations.is_empty()
	}
}

/// Columns that do not increase the rank when added left to right.
fn dependent_columns(m: &IntMatrix) -> (usize, Vec<usize>) {
	let mut kept: Vec<usize> = Vec::new();
	let mut dep = Vec::new();
	let rows: Vec<usize> = (0..m.nrows()).collect();
	for c in 0..m.ncols() {
		let mut trial = kept.clone();
		trial.push(c);
		if m.select(&rows, &trial).rank() == trial.len() {
			kept = trial;
		} else {
			dep.push(c);
		}
	}
	(kept.len(), dep)
}

fn symmetric(m: &Mat) -> bool {
	let scale = m.iter().fold(0.0f64, |a, b| a.max(b.abs()));
	(m - m.transpose()).iter().all(|x| x.abs() <= 1e-12 * scale)
}

/// Check the physical constraints of a topology.
pub fn validate(topo: &CircuitTopology) -> Diagnostics {
	let mut v = Vec::new();
	if let Err(e) = topo.check_shapes() {
		v.push(Violation::Shape { reason: e.to_string() });
		return Diagnostics { violations: v };
	}
	for (name, m) in [("A_J", &topo.a_j), ("B_S", &topo.b_s), ("Omega", &topo.omega)] {
		if !m.unit_entries() {
			v.push(Violation::NonUnitEntries { matrix: name.into() });
		}
	}
	let (rank, dep) = dependent_columns(&topo.a_j);
	if !dep.is_empty() {
		v.push(Violation::JunctionOnlyLoop { junctions: dep, rank });
	}
	let (rank, dep) = dependent_columns(&topo.b_s);
	if !dep.is_empty() {
		v.push(Violation::PhaseSlipOnlyCutset { phase_slips: dep, rank });
	}
	if topo.n() > 0 {
		if !symmetric(&topo.cap) {
			v.push(Violation::CapacitanceNotPositiveDefinite { index: 0 });
		} else if let Err(e) = cholesky(&topo.cap) {
			let index = if let NumericError::NotPositiveDefinite { index, .. } = e { index } else { 0 };
			v.push(Violation::CapacitanceNotPositiveDefinite { index });
		}
	}
	if topo.l() > 0 {
		if !symmetric(&topo.ind) {
			v.push(Violation::InductanceNotPositiveDefinite { index: 0 });
		} else if let Err(e) = cholesky(&topo.ind) {
			let index = if let NumericError::NotPositiveDefinite { index, .. } = e { index } else { 0 };
			v.push(Violation::InductanceNotPositiveDefinite { index });
		}
	}
	Diagnostics { violations: v }
}

/// Capacitive spanning tree and inductive cotree in matrix form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCotree {
	/// Columns: junction edges, then linear capacitor edges.
	pub a_ct: IntMatrix,
	/// Columns: phase-slip edges, then linear inductor edges.
	pub b_lt: IntMatrix,
	pub n_capacitor_edges: usize,
	pub n_inductor_edges: usize,
}

/// Choose a capacitive tree containing every junction and an inductive
/// cotree containing every phase slip. Linear capacitor edges are read off
/// the sparsity of `C` (ground edges first, then couplings, index order);
/// linear inductor edges are the loops' own inductive edges.
pub fn find_tree_cotree(topo: &CircuitTopology) -> Result<TreeCotree, GraphError> {
	topo.check_shapes()?;
	let n = topo.n();
	let l = topo.l();
	let scale = topo.cap.iter().fold(0.0f64, |a, b| a.max(b.abs()));
	let mut candidates: Vec<Vec<i64>> = Vec::new();
	for i in 0..n {
		let s: f64 = topo.cap.row(i).sum();
		if s.abs() > 1e-12 * scale {
			let mut c = vec![0; n];
			c[i] = 1;
			candidates.push(c);
		}
	}
	for i in 0..n {
		for j in i + 1..n {
			if topo.cap[(i, j)].abs() > 1e-12 * scale {
				let mut c = vec![0; n];
				c[i] = -1;
				c[j] = 1;
				candidates.push(c);
			}
		}
	}
	let a_ct = complete_basis(&topo.a_j, &candidates, n)
		.map_err(|e| GraphError::Infeasible(format!("capacitive tree: {e}")))?;
	let units: Vec<Vec<i64>> = (0..l).map(|i| (0..l).map(|k| (k == i) as i64).collect()).collect();
	let b_lt =
		complete_basis(&topo.b_s, &units, l).map_err(|e| GraphError::Infeasible(format!("inductive cotree: {e}")))?;
	Ok(TreeCotree { a_ct, b_lt, n_capacitor_edges: n - topo.nj(), n_inductor_edges: l - topo.ns() })
}

fn complete_basis(first: &IntMatrix, candidates: &[Vec<i64>], n: usize) -> Result<IntMatrix, String> {
	let mut cols: Vec<Vec<i64>> = (0..first.ncols()).map(|c| (0..n).map(|r| first.get(r, c)).collect()).collect();
	let as_matrix = |cols: &[Vec<i64>]| IntMatrix::from_fn(n, cols.len(), |r, c| cols[c][r]);
	if as_matrix(&cols).rank() < cols.len() {
		return Err("fixed edges are dependent".into());
	}
	for cand in candidates {
		if cols.len() == n {
			break;
		}
		let mut trial = cols.clone();
		trial.push(cand.clone());
		if as_matrix(&trial).rank() == trial.len() {
			cols = trial;
		}
	}
	if cols.len() < n {
		return Err("edges do not span".into());
	}
	let m = as_matrix(&cols);
	let det = m.determinant().map_err(|e| e.to_string())?;
	if det.abs() != 1 {
		return Err(format!("determinant {det}"));
	}
	Ok(m)
}

fn transform_vec(u: &IntMatrix, v: &Vector) -> Vector {
	u.to_f64() * v
}

/// Congruence by integer transforms on node fluxes (`U`) and loop charges (`W`).
pub fn apply_basis_change(
	topo: &CircuitTopology,
	u: &UnimodularTransform,
	w: &UnimodularTransform,
) -> Result<CircuitTopology, GraphError> {
	topo.check_shapes()?;
	if u.dim() != topo.n() || w.dim() != topo.l() {
		return Err(GraphError::Dimension(format!(
			"U is {}x{}, W is {}x{} for n={}, l={}",
			u.dim(),
			u.dim(),
			w.dim(),
			w.dim(),
			topo.n(),
			topo.l()
		)));
	}
	let uf = u.m.to_f64();
	let wf = w.m.to_f64();
	Ok(CircuitTopology {
		cap: crate::numeric::symmetrize(&(&uf * &topo.cap * uf.transpose())),
		ind: crate::numeric::symmetrize(&(&wf * &topo.ind * wf.transpose())),
		a_j: u.m.mul(&topo.a_j)?,
		b_s: w.m.mul(&topo.b_s)?,
		omega: u.m.mul(&topo.omega)?.mul(&w.m.transpose())?,
		q_ext: transform_vec(&u.m, &topo.q_ext),
		phi_ext: transform_vec(&w.m, &topo.phi_ext),
		n0: transform_vec(&u.m, &topo.n0),
		m0: transform_vec(&w.m, &topo.m0),
		e_j: topo.e_j.clone(),
		e_s: topo.e_s.clone(),
		junction_offset: topo.junction_offset.clone(),
		slip_offset: topo.slip_offset.clone(),
	})
}
