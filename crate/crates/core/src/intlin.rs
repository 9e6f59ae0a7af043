//! Exact integer matrices with overflow-checked arithmetic, unimodular
//! transforms, pivots and reduction of a network matrix to `[[I,0],[0,0]]`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Mat;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntError {
	#[error("integer overflow")]
	Overflow,
	#[error("pivot entry ({0},{1}) is zero")]
	ZeroPivot(usize, usize),
	#[error("pivot entry ({row},{col}) = {value} does not divide its line")]
	NonUnitPivot { row: usize, col: usize, value: i64 },
	#[error("matrix is not unimodular (determinant {0})")]
	NotUnimodular(i128),
	#[error("dimension mismatch: {0}")]
	Dimension(String),
	#[error("invariant factor {0} is not a unit; no unimodular reduction to identity block exists")]
	NonUnitInvariant(i64),
}

/// Dense row-major integer matrix. Serialized as an array of rows.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<i64>>", into = "Vec<Vec<i64>>")]
pub struct IntMatrix {
	rows: usize,
	cols: usize,
	data: Vec<i64>,
}

impl fmt::Debug for IntMatrix {
	fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
		write!(f, "IntMatrix{:?}", self.to_rows())
	}
}

impl TryFrom<Vec<Vec<i64>>> for IntMatrix {
	type Error = IntError;
	fn try_from(rows: Vec<Vec<i64>>) -> Result<Self, IntError> {
		let cols = rows.first().map_or(0, |r| r.len());
		if rows.iter().any(|r| r.len() != cols) {
			return Err(IntError::Dimension("ragged rows".into()));
		}
		Ok(Self { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() })
	}
}

impl From<IntMatrix> for Vec<Vec<i64>> {
	fn from(m: IntMatrix) -> Self {
		m.to_rows()
	}
}

fn ck_add(a: i64, b: i64) -> Result<i64, IntError> {
	a.checked_add(b).ok_or(IntError::Overflow)
}

fn ck_mul(a: i64, b: i64) -> Result<i64, IntError> {
	a.checked_mul(b).ok_or(IntError::Overflow)
}

impl IntMatrix {
	pub fn zeros(rows: usize, cols: usize) -> Self {
		Self { rows, cols, data: vec![0; rows * cols] }
	}

	pub fn identity(n: usize) -> Self {
		let mut m = Self::zeros(n, n);
		for i in 0..n {
			m.set(i, i, 1);
		}
		m
	}

	/// Build from nested rows; panics on ragged input (use `try_from` for data).
	pub fn from_rows(rows: &[Vec<i64>]) -> Self {
		Self::try_from(rows.to_vec()).expect("ragged rows")
	}

	/// Explicit shape is needed for matrices with zero columns.
	pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> i64) -> Self {
		let mut m = Self::zeros(rows, cols);
		for i in 0..rows {
			for j in 0..cols {
				m.set(i, j, f(i, j));
			}
		}
		m
	}

	pub fn nrows(&self) -> usize {
		self.rows
	}

	pub fn ncols(&self) -> usize {
		self.cols
	}

	pub fn shape(&self) -> (usize, usize) {
		(self.rows, self.cols)
	}

	#[inline]
	pub fn get(&self, i: usize, j: usize) -> i64 {
		self.data[i * self.cols + j]
	}

	#[inline]
	pub fn set(&mut self, i: usize, j: usize, v: i64) {
		self.data[i * self.cols + j] = v;
	}

	pub fn to_rows(&self) -> Vec<Vec<i64>> {
		(0..self.rows).map(|i| self.data[i * self.cols..(i + 1) * self.cols].to_vec()).collect()
	}

	pub fn to_f64(&self) -> Mat {
		Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j) as f64)
	}

	pub fn transpose(&self) -> Self {
		Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
	}

	pub fn is_zero(&self) -> bool {
		self.data.iter().all(|&x| x == 0)
	}

	pub fn unit_entries(&self) -> bool {
		self.data.iter().all(|x| (-1..=1).contains(x))
	}

	pub fn row_is_zero(&self, i: usize) -> bool {
		(0..self.cols).all(|j| self.get(i, j) == 0)
	}

	pub fn col_is_zero(&self, j: usize) -> bool {
		(0..self.rows).all(|i| self.get(i, j) == 0)
	}

	pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
		Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
	}

	pub fn mul(&self, rhs: &IntMatrix) -> Result<IntMatrix, IntError> {
		if self.cols != rhs.rows {
			return Err(IntError::Dimension(format!(
				"{}x{} times {}x{}",
				self.rows, self.cols, rhs.rows, rhs.cols
			)));
		}
		let mut out = Self::zeros(self.rows, rhs.cols);
		for i in 0..self.rows {
			for k in 0..self.cols {
				let a = self.get(i, k);
				if a == 0 {
					continue;
				}
				for j in 0..rhs.cols {
					let v = ck_add(out.get(i, j), ck_mul(a, rhs.get(k, j))?)?;
					out.set(i, j, v);
				}
			}
		}
		Ok(out)
	}

	/// `row[dst] += k * row[src]`
	pub fn add_row_multiple(&mut self, dst: usize, src: usize, k: i64) -> Result<(), IntError> {
		if k == 0 {
			return Ok(());
		}
		for j in 0..self.cols {
			let v = ck_add(self.get(dst, j), ck_mul(k, self.get(src, j))?)?;
			self.set(dst, j, v);
		}
		Ok(())
	}

	/// `col[dst] += k * col[src]`
	pub fn add_col_multiple(&mut self, dst: usize, src: usize, k: i64) -> Result<(), IntError> {
		if k == 0 {
			return Ok(());
		}
		for i in 0..self.rows {
			let v = ck_add(self.get(i, dst), ck_mul(k, self.get(i, src))?)?;
			self.set(i, dst, v);
		}
		Ok(())
	}

	pub fn swap_rows(&mut self, a: usize, b: usize) {
		if a != b {
			for j in 0..self.cols {
				self.data.swap(a * self.cols + j, b * self.cols + j);
			}
		}
	}

	pub fn swap_cols(&mut self, a: usize, b: usize) {
		if a != b {
			for i in 0..self.rows {
				self.data.swap(i * self.cols + a, i * self.cols + b);
			}
		}
	}

	pub fn negate_row(&mut self, i: usize) {
		for j in 0..self.cols {
			let v = -self.get(i, j);
			self.set(i, j, v);
		}
	}

	pub fn negate_col(&mut self, j: usize) {
		for i in 0..self.rows {
			let v = -self.get(i, j);
			self.set(i, j, v);
		}
	}

	/// Exact determinant by fraction-free (Bareiss) elimination.
	pub fn determinant(&self) -> Result<i128, IntError> {
		if self.rows != self.cols {
			return Err(IntError::Dimension("determinant of non-square matrix".into()));
		}
		Ok(bareiss(self).0)
	}

	/// Exact rank by fraction-free elimination.
	pub fn rank(&self) -> usize {
		bareiss(self).1
	}
}

/// Bareiss elimination in 128-bit arithmetic. Returns the determinant
/// (meaningful for square input) and the rank.
fn bareiss(m: &IntMatrix) -> (i128, usize) {
	let (r, c) = m.shape();
	let mut a: Vec<Vec<i128>> = (0..r).map(|i| (0..c).map(|j| m.get(i, j) as i128).collect()).collect();
	let mut prev: i128 = 1;
	let mut sign: i128 = 1;
	let mut rank = 0;
	let mut col = 0;
	while rank < r && col < c {
		let Some(p) = (rank..r).find(|&i| a[i][col] != 0) else {
			col += 1;
			continue;
		};
		if p != rank {
			a.swap(p, rank);
			sign = -sign;
		}
		for i in rank + 1..r {
			for j in col + 1..c {
				a[i][j] = (a[rank][col] * a[i][j] - a[i][col] * a[rank][j]) / prev;
			}
			a[i][col] = 0;
		}
		prev = a[rank][col];
		rank += 1;
		col += 1;
	}
	let det = if r == 0 && c == 0 {
		1
	} else if r == c && rank == r {
		sign * a[r - 1][c - 1]
	} else {
		0
	};
	(det, rank)
}

/// An integer matrix together with its exact integer inverse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnimodularTransform {
	pub m: IntMatrix,
	pub m_inv: IntMatrix,
}

impl UnimodularTransform {
	pub fn identity(n: usize) -> Self {
		Self { m: IntMatrix::identity(n), m_inv: IntMatrix::identity(n) }
	}

	pub fn new(m: IntMatrix) -> Result<Self, IntError> {
		let m_inv = invert_unimodular(&m)?;
		Ok(Self { m, m_inv })
	}

	pub fn dim(&self) -> usize {
		self.m.nrows()
	}

	pub fn inverse(&self) -> Self {
		Self { m: self.m_inv.clone(), m_inv: self.m.clone() }
	}

	/// The transform that applies `self` first and then `next`: `next * self`.
	pub fn then(&self, next: &UnimodularTransform) -> Result<Self, IntError> {
		Ok(Self { m: next.m.mul(&self.m)?, m_inv: self.m_inv.mul(&next.m_inv)? })
	}

	pub fn transpose(&self) -> Self {
		Self { m: self.m.transpose(), m_inv: self.m_inv.transpose() }
	}

	pub fn permutation(perm: &[usize]) -> Self {
		let n = perm.len();
		let m = IntMatrix::from_fn(n, n, |i, j| (perm[i] == j) as i64);
		Self { m_inv: m.transpose(), m }
	}

	pub fn check(&self) -> bool {
		let n = self.dim();
		matches!(self.m.mul(&self.m_inv), Ok(p) if p == IntMatrix::identity(n))
	}
}

/// Tracks `A = U * M * R` while elementary operations act on `A`.
struct Tracker {
	a: IntMatrix,
	u: IntMatrix,
	u_inv: IntMatrix,
	r: IntMatrix,
	r_inv: IntMatrix,
}

impl Tracker {
	fn new(a: &IntMatrix) -> Self {
		let (n, l) = a.shape();
		Self {
			a: a.clone(),
			u: IntMatrix::identity(n),
			u_inv: IntMatrix::identity(n),
			r: IntMatrix::identity(l),
			r_inv: IntMatrix::identity(l),
		}
	}

	fn row_add(&mut self, dst: usize, src: usize, k: i64) -> Result<(), IntError> {
		self.a.add_row_multiple(dst, src, k)?;
		self.u.add_row_multiple(dst, src, k)?;
		self.u_inv.add_col_multiple(src, dst, -k)
	}

	fn col_add(&mut self, dst: usize, src: usize, k: i64) -> Result<(), IntError> {
		self.a.add_col_multiple(dst, src, k)?;
		self.r.add_col_multiple(dst, src, k)?;
		self.r_inv.add_row_multiple(src, dst, -k)
	}

	fn row_swap(&mut self, a: usize, b: usize) {
		self.a.swap_rows(a, b);
		self.u.swap_rows(a, b);
		self.u_inv.swap_cols(a, b);
	}

	fn col_swap(&mut self, a: usize, b: usize) {
		self.a.swap_cols(a, b);
		self.r.swap_cols(a, b);
		self.r_inv.swap_rows(a, b);
	}

	fn row_neg(&mut self, i: usize) {
		self.a.negate_row(i);
		self.u.negate_row(i);
		self.u_inv.negate_col(i);
	}
}

/// Result of [`reduce_to_identity_block`]: `U * omega * W^T = [[I_k,0],[0,0]]`.
#[derive(Debug, Clone)]
pub struct Reduction {
	pub u: UnimodularTransform,
	pub w: UnimodularTransform,
	pub rank: usize,
}

/// Unimodular row and column operations bringing `omega` to `[[I_k,0],[0,0]]`.
/// Unit pivots are taken first (smallest row, then column); otherwise a
/// Euclidean reduction is attempted and a non-unit invariant factor errors.
pub fn reduce_to_identity_block(omega: &IntMatrix) -> Result<Reduction, IntError> {
	let (n, l) = omega.shape();
	let mut t = Tracker::new(omega);
	let mut k = 0;
	while k < n.min(l) {
		let unit = (k..n).flat_map(|i| (k..l).map(move |j| (i, j))).find(|&(i, j)| t.a.get(i, j).abs() == 1);
		let (pi, pj) = match unit {
			Some(p) => p,
			None => {
				let nz = (k..n)
					.flat_map(|i| (k..l).map(move |j| (i, j)))
					.filter(|&(i, j)| t.a.get(i, j) != 0)
					.min_by_key(|&(i, j)| (t.a.get(i, j).abs(), i, j));
				match nz {
					None => break,
					Some(p) => p,
				}
			}
		};
		t.row_swap(k, pi);
		t.col_swap(k, pj);
		loop {
			let p = t.a.get(k, k);
			let mut changed = false;
			for i in k + 1..n {
				let q = t.a.get(i, k).div_euclid(p);
				if q != 0 {
					t.row_add(i, k, -q)?;
				}
			}
			for j in k + 1..l {
				let q = t.a.get(k, j).div_euclid(p);
				if q != 0 {
					t.col_add(j, k, -q)?;
				}
			}
			let rem = (k + 1..n)
				.map(|i| (i, k, true))
				.chain((k + 1..l).map(|j| (k, j, false)))
				.filter(|&(i, j, _)| t.a.get(i, j) != 0)
				.min_by_key(|&(i, j, _)| t.a.get(i, j).abs());
			if let Some((i, j, is_row)) = rem {
				if is_row {
					t.row_swap(k, i);
				} else {
					t.col_swap(k, j);
				}
				changed = true;
			}
			if !changed {
				break;
			}
		}
		let p = t.a.get(k, k);
		if p.abs() != 1 {
			return Err(IntError::NonUnitInvariant(p.abs()));
		}
		if p < 0 {
			t.row_neg(k);
		}
		k += 1;
	}
	if !(k..n).all(|i| t.a.row_is_zero(i)) {
		let v = t.a.data.iter().filter(|&&x| x != 0).map(|x| x.abs()).max().unwrap_or(0);
		return Err(IntError::NonUnitInvariant(v));
	}
	Ok(Reduction {
		u: UnimodularTransform { m: t.u, m_inv: t.u_inv },
		w: UnimodularTransform { m: t.r.transpose(), m_inv: t.r_inv.transpose() },
		rank: k,
	})
}

/// Row pivot on `(i, j)`: clears column `j` except the pivot. Returns
/// `(U*M, U)`.
pub fn row_pivot(m: &IntMatrix, i: usize, j: usize) -> Result<(IntMatrix, UnimodularTransform), IntError> {
	let (r, c) = m.shape();
	if i >= r || j >= c {
		return Err(IntError::Dimension(format!("pivot ({i},{j}) outside {r}x{c}")));
	}
	let p = m.get(i, j);
	if p == 0 {
		return Err(IntError::ZeroPivot(i, j));
	}
	let mut u = IntMatrix::identity(r);
	let mut u_inv = IntMatrix::identity(r);
	let mut out = m.clone();
	for k in 0..r {
		let a = m.get(k, j);
		if k == i || a == 0 {
			continue;
		}
		if a % p != 0 {
			return Err(IntError::NonUnitPivot { row: i, col: j, value: p });
		}
		let q = a / p;
		out.add_row_multiple(k, i, -q)?;
		u.set(k, i, -q);
		u_inv.set(k, i, q);
	}
	Ok((out, UnimodularTransform { m: u, m_inv: u_inv }))
}

/// Column pivot on `(i, j)`: clears row `i` except the pivot. Returns
/// `(M*W^T, W)`.
pub fn col_pivot(m: &IntMatrix, i: usize, j: usize) -> Result<(IntMatrix, UnimodularTransform), IntError> {
	let (p_t, w) = row_pivot(&m.transpose(), j, i)?;
	Ok((p_t.transpose(), w))
}

/// Exact inverse of an integer matrix with determinant `±1`.
pub fn invert_unimodular(m: &IntMatrix) -> Result<IntMatrix, IntError> {
	let n = m.nrows();
	if m.ncols() != n {
		return Err(IntError::Dimension("inverse of non-square matrix".into()));
	}
	let det = m.determinant()?;
	if det.abs() != 1 {
		return Err(IntError::NotUnimodular(det));
	}
	let mut a = m.clone();
	let mut inv = IntMatrix::identity(n);
	for k in 0..n {
		loop {
			let piv = (k..n).filter(|&i| a.get(i, k) != 0).min_by_key(|&i| a.get(i, k).abs());
			let Some(p) = piv else {
				return Err(IntError::NotUnimodular(0));
			};
			a.swap_rows(k, p);
			inv.swap_rows(k, p);
			let pv = a.get(k, k);
			let mut done = true;
			for i in k + 1..n {
				let q = a.get(i, k).div_euclid(pv);
				a.add_row_multiple(i, k, -q)?;
				inv.add_row_multiple(i, k, -q)?;
				if a.get(i, k) != 0 {
					done = false;
				}
			}
			if done {
				break;
			}
		}
		if a.get(k, k) < 0 {
			a.negate_row(k);
			inv.negate_row(k);
		}
	}
	for k in (0..n).rev() {
		for i in 0..k {
			let q = a.get(i, k);
			a.add_row_multiple(i, k, -q)?;
			inv.add_row_multiple(i, k, -q)?;
		}
	}
	Ok(inv)
}

/// Size limit (rows + cols) under which every square submatrix is checked.
pub const TU_EXHAUSTIVE_LIMIT: usize = 12;

/// Total-unimodularity test: exhaustive for small matrices, otherwise
/// `trials` random square submatrices drawn with the given seed.
pub fn check_tu_sampled(m: &IntMatrix, trials: usize, seed: u64) -> bool {
	if !m.unit_entries() {
		return false;
	}
	let (r, c) = m.shape();
	if r + c <= TU_EXHAUSTIVE_LIMIT {
		return check_tu_exhaustive(m);
	}
	let mut rng = ChaCha8Rng::seed_from_u64(seed);
	for _ in 0..trials {
		let k = rng.gen_range(1..=r.min(c));
		let rows = rand::seq::index::sample(&mut rng, r, k).into_vec();
		let cols = rand::seq::index::sample(&mut rng, c, k).into_vec();
		let d = m.select(&rows, &cols).determinant().unwrap_or(i128::MAX);
		if d.abs() > 1 {
			return false;
		}
	}
	true
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
	fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
		if cur.len() == k {
			out.push(cur.clone());
			return;
		}
		for i in start..n {
			cur.push(i);
			rec(i + 1, n, k, cur, out);
			cur.pop();
		}
	}
	let mut out = Vec::new();
	rec(0, n, k, &mut Vec::new(), &mut out);
	out
}

/// Checks the determinant of every square submatrix.
pub fn check_tu_exhaustive(m: &IntMatrix) -> bool {
	if !m.unit_entries() {
		return false;
	}
	let (r, c) = m.shape();
	for k in 2..=r.min(c) {
		let rs = subsets(r, k);
		let cs = subsets(c, k);
		for rows in &rs {
			for cols in &cs {
				if m.select(rows, cols).determinant().map_or(true, |d| d.abs() > 1) {
					return false;
				}
			}
		}
	}
	true
}

/// Integer row-echelon form by unimodular row operations. Returns the
/// reduced matrix and `T` with `T * m = echelon`; zero rows come last.
pub fn row_echelon(m: &IntMatrix) -> Result<(IntMatrix, UnimodularTransform), IntError> {
	let (n, c) = m.shape();
	let mut t = Tracker::new(m);
	let mut row = 0;
	for col in 0..c {
		if row >= n {
			break;
		}
		loop {
			let piv = (row..n).filter(|&i| t.a.get(i, col) != 0).min_by_key(|&i| (t.a.get(i, col).abs(), i));
			let Some(p) = piv else { break };
			t.row_swap(row, p);
			let pv = t.a.get(row, col);
			let mut done = true;
			for i in row + 1..n {
				let q = t.a.get(i, col).div_euclid(pv);
				t.row_add(i, row, -q)?;
				if t.a.get(i, col) != 0 {
					done = false;
				}
			}
			if done {
				break;
			}
		}
		if t.a.get(row, col) != 0 {
			if t.a.get(row, col) < 0 {
				t.row_neg(row);
			}
			row += 1;
		}
	}
	Ok((t.a, UnimodularTransform { m: t.u, m_inv: t.u_inv }))
}
