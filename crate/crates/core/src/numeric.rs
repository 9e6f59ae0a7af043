//! Dense real kernels: positive-definiteness checks, Schur complements,
//! a cyclic Jacobi eigensolver and simultaneous diagonalization of a
//! capacitance/inverse-inductance pair.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative pivot floor used by every positive-definiteness decision.
pub const PD_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
	#[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
	NotPositiveDefinite { index: usize, pivot: f64 },
	#[error("matrix is singular")]
	Singular,
	#[error("dimension mismatch: {0}")]
	Dimension(String),
	#[error("non-finite value encountered")]
	NonFinite,
}

/// Lower Cholesky factor with the relative pivot test.
pub fn cholesky(m: &Mat) -> Result<Mat, NumericError> {
	let n = m.nrows();
	if m.ncols() != n {
		return Err(NumericError::Dimension(format!("{}x{} is not square", n, m.ncols())));
	}
	if m.iter().any(|x| !x.is_finite()) {
		return Err(NumericError::NonFinite);
	}
	let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
	let floor = PD_RTOL * max_diag;
	let mut g = Mat::zeros(n, n);
	for j in 0..n {
		let mut d = m[(j, j)];
		for k in 0..j {
			d -= g[(j, k)] * g[(j, k)];
		}
		if !(d > floor) || max_diag == 0.0 {
			return Err(NumericError::NotPositiveDefinite { index: j, pivot: d });
		}
		let d = d.sqrt();
		g[(j, j)] = d;
		for i in j + 1..n {
			let mut s = 0.5 * (m[(i, j)] + m[(j, i)]);
			for k in 0..j {
				s -= g[(i, k)] * g[(j, k)];
			}
			g[(i, j)] = s / d;
		}
	}
	Ok(g)
}

/// True iff the symmetric matrix has a Cholesky factor with every pivot
/// above `1e-14 * max|diag|`. Empty matrices count as positive definite.
pub fn cholesky_pd_check(m: &Mat) -> bool {
	m.nrows() == 0 && m.ncols() == 0 || cholesky(m).is_ok()
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Mat) -> Result<Mat, NumericError> {
	let n = m.nrows();
	if n == 0 {
		return Ok(Mat::zeros(0, 0));
	}
	let g = cholesky(m)?;
	if n == 1 {
		return Ok(Mat::from_element(1, 1, 1.0 / m[(0, 0)]));
	}
	let ginv = lower_inverse(&g);
	let inv = ginv.transpose() * &ginv;
	Ok(symmetrize(&inv))
}

fn lower_inverse(g: &Mat) -> Mat {
	let n = g.nrows();
	let mut inv = Mat::zeros(n, n);
	for c in 0..n {
		for i in c..n {
			let mut s = if i == c { 1.0 } else { 0.0 };
			for k in c..i {
				s -= g[(i, k)] * inv[(k, c)];
			}
			inv[(i, c)] = s / g[(i, i)];
		}
	}
	inv
}

/// General inverse through LU; errors on exact or numerical singularity.
pub fn inverse(m: &Mat) -> Result<Mat, NumericError> {
	if m.nrows() != m.ncols() {
		return Err(NumericError::Dimension("inverse of non-square matrix".into()));
	}
	if m.nrows() == 0 {
		return Ok(Mat::zeros(0, 0));
	}
	m.clone().try_inverse().ok_or(NumericError::Singular)
}

pub fn symmetrize(m: &Mat) -> Mat {
	(m + m.transpose()) * 0.5
}

/// Submatrix with the given row and column index lists.
pub fn select(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
	Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn select_vec(v: &Vector, idx: &[usize]) -> Vector {
	Vector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Indices in `0..n` not contained in `idx`.
pub fn complement(n: usize, idx: &[usize]) -> Vec<usize> {
	(0..n).filter(|i| !idx.contains(i)).collect()
}

/// `M_rr - M_re M_ee^{-1} M_er` where `r` is `retained` and `e` the rest.
pub fn schur_complement(m: &Mat, retained: &[usize]) -> Result<Mat, NumericError> {
	let n = m.nrows();
	if retained.iter().any(|&i| i >= n) {
		return Err(NumericError::Dimension("retained index out of range".into()));
	}
	let elim = complement(n, retained);
	let mrr = select(m, retained, retained);
	if elim.is_empty() {
		return Ok(mrr);
	}
	let mee_inv = spd_inverse(&select(m, &elim, &elim))?;
	let mre = select(m, retained, &elim);
	Ok(symmetrize(&(mrr - &mre * mee_inv * mre.transpose())))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues (unsorted) and orthonormal eigenvectors as columns.
pub fn jacobi_eigen(m: &Mat) -> (Vector, Mat) {
	let n = m.nrows();
	let mut a = symmetrize(m);
	let mut v = Mat::identity(n, n);
	let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
	if scale == 0.0 {
		return (Vector::zeros(n), v);
	}
	for _sweep in 0..100 {
		let mut off = 0.0;
		for p in 0..n {
			for q in p + 1..n {
				off += a[(p, q)] * a[(p, q)];
			}
		}
		if off.sqrt() <= 1e-17 * scale {
			break;
		}
		for p in 0..n {
			for q in p + 1..n {
				let apq = a[(p, q)];
				if apq.abs() <= 1e-300 {
					continue;
				}
				let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
				let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
				let t = if theta == 0.0 { 1.0 } else { t };
				let c = 1.0 / (t * t + 1.0).sqrt();
				let s = t * c;
				for k in 0..n {
					let akp = a[(k, p)];
					let akq = a[(k, q)];
					a[(k, p)] = c * akp - s * akq;
					a[(k, q)] = s * akp + c * akq;
				}
				for k in 0..n {
					let apk = a[(p, k)];
					let aqk = a[(q, k)];
					a[(p, k)] = c * apk - s * aqk;
					a[(q, k)] = s * apk + c * aqk;
				}
				for k in 0..n {
					let vkp = v[(k, p)];
					let vkq = v[(k, q)];
					v[(k, p)] = c * vkp - s * vkq;
					v[(k, q)] = s * vkp + c * vkq;
				}
			}
		}
	}
	(Vector::from_fn(n, |i, _| a[(i, i)]), v)
}

/// Result of diagonalizing `C` and `L^{-1}` together.
#[derive(Debug, Clone)]
pub struct SimDiag {
	/// Columns are mode vectors; `X^T C X = diag(c_d)`.
	pub x: Mat,
	pub c_d: Vector,
	pub l_d: Vector,
	pub omega2: Vector,
}

impl SimDiag {
	pub fn frequencies(&self) -> Vector {
		self.omega2.map(f64::sqrt)
	}
}

/// Find `X` with `X^T C X` and `X^T L^{-1} X` diagonal. Columns of `X` are
/// scaled so their largest-magnitude entry is `+1`, and modes are sorted by
/// ascending frequency (ties broken by lexicographic column order).
pub fn simultaneous_diagonalize(c: &Mat, l: &Mat) -> Result<SimDiag, NumericError> {
	let n = c.nrows();
	if l.nrows() != n || c.ncols() != n || l.ncols() != n {
		return Err(NumericError::Dimension("C and L must be square and equal size".into()));
	}
	let g = cholesky(c)?;
	let linv = spd_inverse(l)?;
	let ginv = lower_inverse(&g);
	let k = symmetrize(&(&ginv * linv * ginv.transpose()));
	let (vals, y) = jacobi_eigen(&k);
	let mut x = ginv.transpose() * y;
	for j in 0..n {
		let mut best = 0usize;
		for i in 0..n {
			if x[(i, j)].abs() > x[(best, j)].abs() * (1.0 + 1e-12) {
				best = i;
			}
		}
		let s = 1.0 / x[(best, j)];
		x.column_mut(j).scale_mut(s);
	}
	let c_d_all: Vec<f64> = (0..n).map(|j| (x.column(j).transpose() * c * x.column(j))[(0, 0)]).collect();
	let mut order: Vec<usize> = (0..n).collect();
	let tie = 1e-12 * vals.iter().fold(0.0f64, |a, b| a.max(b.abs()));
	order.sort_by(|&a, &b| {
		let d = vals[a] - vals[b];
		if d.abs() > tie {
			return d.partial_cmp(&0.0).unwrap();
		}
		for i in 0..n {
			let o = x[(i, a)].partial_cmp(&x[(i, b)]).unwrap();
			if o != std::cmp::Ordering::Equal {
				return o;
			}
		}
		std::cmp::Ordering::Equal
	});
	let xs = Mat::from_fn(n, n, |i, j| x[(i, order[j])]);
	let omega2 = Vector::from_fn(n, |j, _| vals[order[j]]);
	let c_d = Vector::from_fn(n, |j, _| c_d_all[order[j]]);
	let l_d = Vector::from_fn(n, |j, _| 1.0 / (c_d[j] * omega2[j]));
	Ok(SimDiag { x: xs, c_d, l_d, omega2 })
}

/// Largest absolute off-diagonal entry relative to the largest diagonal.
pub fn offdiag_ratio(m: &Mat) -> f64 {
	let n = m.nrows();
	let mut off: f64 = 0.0;
	let mut diag: f64 = 0.0;
	for i in 0..n {
		diag = diag.max(m[(i, i)].abs());
		for j in 0..n {
			if i != j {
				off = off.max(m[(i, j)].abs());
			}
		}
	}
	if diag == 0.0 {
		off
	} else {
		off / diag
	}
}

#[cfg(test)]
mod tests {
	use super::*;
	use approx::assert_relative_eq;
	use proptest::prelude::*;

	fn random_pd(n: usize, seed: &[f64]) -> Mat {
		let a = Mat::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + if i == j { 0.5 } else { 0.0 });
		a.transpose() * &a + Mat::identity(n, n) * 0.1
	}

	#[test]
	fn pd_check_examples() {
		assert!(cholesky_pd_check(&Mat::identity(3, 3)));
		assert!(!cholesky_pd_check(&Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])));
		assert!(!cholesky_pd_check(&Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])));
		assert!(cholesky_pd_check(&Mat::from_row_slice(2, 2, &[1e-12, 0.0, 0.0, 1e-9])));
	}

	#[test]
	fn schur_examples() {
		let m = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
		assert_relative_eq!(schur_complement(&m, &[0]).unwrap()[(0, 0)], 1.5, epsilon = 1e-15);
		let bd = Mat::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
		let s = schur_complement(&bd, &[0]).unwrap();
		assert_eq!(s[(0, 0)], 2.0);
	}

	#[test]
	fn schur_matches_inverse_of_inverse_block() {
		let seed = [0.3, -0.7, 1.1, 0.2, 0.9, -0.4, 0.5, 0.8, -1.3, 0.6, 0.1];
		let m = random_pd(5, &seed);
		let keep = [0usize, 2, 4];
		let s = schur_complement(&m, &keep).unwrap();
		let minv = m.clone().try_inverse().unwrap();
		let oracle = select(&minv, &keep, &keep).try_inverse().unwrap();
		assert!((&s - &oracle).norm() <= 1e-12 * oracle.norm());
		assert!(cholesky_pd_check(&s));
	}

	#[test]
	fn jacobi_reconstructs() {
		let seed = [0.3, -0.7, 1.1, 0.2, 0.9, -0.4, 0.5];
		let m = random_pd(4, &seed);
		let (vals, v) = jacobi_eigen(&m);
		let rec = &v * Mat::from_diagonal(&vals) * v.transpose();
		assert!((rec - &m).norm() < 1e-13 * m.norm());
		assert!((v.transpose() * &v - Mat::identity(4, 4)).norm() < 1e-13);
	}

	#[test]
	fn simdiag_already_diagonal() {
		let c = Mat::from_diagonal(&Vector::from_vec(vec![2e-12, 1e-12]));
		let l = Mat::from_diagonal(&Vector::from_vec(vec![1e-9, 3e-9]));
		let sd = simultaneous_diagonalize(&c, &l).unwrap();
		for j in 0..2 {
			let nz = sd.x.column(j).iter().filter(|v| v.abs() > 1e-12).count();
			assert_eq!(nz, 1);
		}
		let mut w2: Vec<f64> = vec![1.0 / (2e-12 * 1e-9), 1.0 / (1e-12 * 3e-9)];
		w2.sort_by(|a, b| a.partial_cmp(b).unwrap());
		for i in 0..2 {
			assert_relative_eq!(sd.omega2[i], w2[i], max_relative = 1e-12);
		}
		for j in 0..2 {
			let big = sd.x.column(j).iter().cloned().fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
			assert_eq!(big, 1.0);
		}
	}

	#[test]
	fn simdiag_identity_pair() {
		let sd = simultaneous_diagonalize(&Mat::identity(3, 3), &Mat::identity(3, 3)).unwrap();
		for i in 0..3 {
			assert_relative_eq!(sd.omega2[i], 1.0, epsilon = 1e-13);
		}
		let xtx = sd.x.transpose() * &sd.x;
		assert!(offdiag_ratio(&xtx) < 1e-12);
	}

	#[test]
	fn simdiag_coupled_pair_characteristic_polynomial() {
		let c = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]) * 1e-12;
		let l = Mat::identity(2, 2) * 1e-9;
		let sd = simultaneous_diagonalize(&c, &l).unwrap();
		// det(L^-1 - w2 C) = 0 with L^-1 = a I: (a - 2cw)^2 - (cw)^2 = 0
		let a = 1e9;
		let cc = 1e-12;
		let roots = [a / (3.0 * cc), a / cc];
		assert_relative_eq!(sd.omega2[0], roots[0], max_relative = 1e-12);
		assert_relative_eq!(sd.omega2[1], roots[1], max_relative = 1e-12);
		let cd = sd.x.transpose() * &c * &sd.x;
		let ld = sd.x.transpose() * l.try_inverse().unwrap() * &sd.x;
		assert!(offdiag_ratio(&cd) < 1e-10);
		assert!(offdiag_ratio(&ld) < 1e-10);
		for i in 0..2 {
			assert_relative_eq!(sd.l_d[i] * sd.c_d[i] * sd.omega2[i], 1.0, max_relative = 1e-12);
		}
	}

	#[test]
	fn simdiag_rejects_indefinite() {
		let c = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
		assert!(simultaneous_diagonalize(&c, &Mat::identity(2, 2)).is_err());
	}

	fn pd_strategy(max_n: usize) -> impl Strategy<Value = (Mat, Mat)> {
		(1..=max_n).prop_flat_map(|n| {
			(
				proptest::collection::vec(-1.0f64..1.0, n * n),
				proptest::collection::vec(-1.0f64..1.0, n * n),
				Just(n),
			)
				.prop_map(|(a, b, n)| {
					let a = Mat::from_vec(n, n, a);
					let b = Mat::from_vec(n, n, b);
					(
						a.transpose() * &a + Mat::identity(n, n) * 0.05,
						b.transpose() * &b + Mat::identity(n, n) * 0.05,
					)
				})
		})
	}

	proptest! {
		#![proptest_config(ProptestConfig::with_cases(100))]
		#[test]
		fn simdiag_residual_and_pencil((c, l) in pd_strategy(8)) {
			let sd = simultaneous_diagonalize(&c, &l).unwrap();
			let cd = sd.x.transpose() * &c * &sd.x;
			let linv = l.clone().try_inverse().unwrap();
			let ld = sd.x.transpose() * &linv * &sd.x;
			prop_assert!(offdiag_ratio(&cd) <= 1e-10);
			prop_assert!(offdiag_ratio(&ld) <= 1e-10);
			let mut oracle: Vec<f64> = (c.clone().try_inverse().unwrap() * &linv)
				.complex_eigenvalues().iter().map(|z| z.re).collect();
			oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
			for (i, w) in oracle.iter().enumerate() {
				prop_assert!((sd.omega2[i] - w).abs() <= 1e-9 * w.abs());
			}
		}

		#[test]
		fn congruence_preserves_pd(
			(c, _) in pd_strategy(5),
			entries in proptest::collection::vec(-3i64..=3, 25),
		) {
			let n = c.nrows();
			let u = Mat::from_fn(n, n, |i, j| entries[i * 5 + j] as f64);
			prop_assume!(u.determinant().abs() > 0.5);
			prop_assert!(cholesky_pd_check(&(&u * &c * u.transpose())));
		}
	}
}
