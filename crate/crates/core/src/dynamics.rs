//! Classical time-domain integration of the standard equations of motion
//!
//! `C Φ̈ + Q̇_ext + A_J I_J - Ω Q̇ = 0`, `L Q̈ + Φ̇_ext + B_S V_S + Ωᵀ Φ̇ = 0`
//!
//! with fixed-step RK4, used as an oracle for the algebraic pipelines.

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_core::CircuitTopology;
use crate::intlin::{IntMatrix, UnimodularTransform};
use crate::numeric::{spd_inverse, Mat, NumericError, Vector};
use crate::quantize::{integrated_velocities, IntegratedState, QuantizeError};
use crate::units::{COOPER_CHARGE, FLUX_QUANTUM};

#[derive(Debug, Error)]
pub enum DynamicsError {
	#[error("non-finite state at step {step}; reduce the step size")]
	BlowUp { step: usize },
	#[error("time step and duration must be positive and finite")]
	BadStep,
	#[error("dimension mismatch: {0}")]
	Dimension(String),
	#[error("trajectories are sampled on different grids")]
	GridMismatch,
	#[error(transparent)]
	Numeric(#[from] NumericError),
	#[error(transparent)]
	Quantize(#[from] QuantizeError),
	#[error("csv: {0}")]
	Io(String),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Full first-order state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
	#[serde(with = "crate::matser::vector")]
	pub phi: Vector,
	#[serde(with = "crate::matser::vector")]
	pub q: Vector,
	#[serde(with = "crate::matser::vector")]
	pub phi_dot: Vector,
	#[serde(with = "crate::matser::vector")]
	pub q_dot: Vector,
}

/// Initial condition; missing velocities follow from the integrated
/// equations of motion with no tunneling events.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitialState {
	#[serde(default)]
	pub phi: Option<Vec<f64>>,
	#[serde(default)]
	pub q: Option<Vec<f64>>,
	#[serde(default)]
	pub phi_dot: Option<Vec<f64>>,
	#[serde(default)]
	pub q_dot: Option<Vec<f64>>,
}

impl InitialState {
	pub fn resolve(&self, topo: &CircuitTopology) -> Result<State> {
		let (n, l) = (topo.n(), topo.l());
		let vec_or = |v: &Option<Vec<f64>>, len: usize, what: &str| -> Result<Vector> {
			match v {
				Some(x) if x.len() != len => Err(DynamicsError::Dimension(format!("{what} needs {len} entries"))),
				Some(x) => Ok(Vector::from_vec(x.clone())),
				None => Ok(Vector::zeros(len)),
			}
		};
		let phi = vec_or(&self.phi, n, "phi")?;
		let q = vec_or(&self.q, l, "q")?;
		let (dphi, dq) = integrated_velocities(topo, &IntegratedState { phi_n: phi.clone(), q_l: q.clone(), n_tunnel: vec![0; topo.nj()], m_tunnel: vec![0; topo.ns()] })?;
		let phi_dot = match &self.phi_dot {
			Some(_) => vec_or(&self.phi_dot, n, "phi_dot")?,
			None => dphi,
		};
		let q_dot = match &self.q_dot {
			Some(_) => vec_or(&self.q_dot, l, "q_dot")?,
			None => dq,
		};
		Ok(State { phi, q, phi_dot, q_dot })
	}
}

/// Piecewise-linear external charge and flux series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Drive {
	pub times: Vec<f64>,
	pub q_ext: Vec<Vec<f64>>,
	pub phi_ext: Vec<Vec<f64>>,
}

impl Drive {
	fn slope(series: &[Vec<f64>], times: &[f64], t: f64, len: usize) -> Vector {
		if series.is_empty() || times.len() < 2 {
			return Vector::zeros(len);
		}
		let k = match times.iter().position(|&x| x > t) {
			Some(0) | None => return Vector::zeros(len),
			Some(k) => k,
		};
		let dt = times[k] - times[k - 1];
		Vector::from_fn(len, |i, _| (series[k][i] - series[k - 1][i]) / dt)
	}

	/// `(dQ_ext/dt, dΦ_ext/dt)` at time `t`.
	pub fn rates(&self, t: f64, n: usize, l: usize) -> (Vector, Vector) {
		(Self::slope(&self.q_ext, &self.times, t, n), Self::slope(&self.phi_ext, &self.times, t, l))
	}

	fn check(&self, n: usize, l: usize) -> Result<()> {
		let ok = self.times.windows(2).all(|w| w[1] > w[0])
			&& (self.q_ext.is_empty() || (self.q_ext.len() == self.times.len() && self.q_ext.iter().all(|v| v.len() == n)))
			&& (self.phi_ext.is_empty() || (self.phi_ext.len() == self.times.len() && self.phi_ext.iter().all(|v| v.len() == l)));
		if ok { Ok(()) } else { Err(DynamicsError::Dimension("drive series shape".into())) }
	}
}

#[derive(Debug, Clone)]
pub struct StateTrajectory {
	pub times: Vec<f64>,
	pub states: Vec<State>,
	/// `A_Jᵀ Φ_n` per step.
	pub phi_j: Vec<Vector>,
	/// `B_Sᵀ Q_l` per step.
	pub q_s: Vec<Vector>,
}

struct System {
	c_inv: Mat,
	l_inv: Mat,
	omega: Mat,
	a_j: Mat,
	b_s: Mat,
	i0: Vector,
	v0: Vector,
	j_off: Vector,
	s_off: Vector,
}

impl System {
	fn new(topo: &CircuitTopology) -> Result<Self> {
		topo.check_shapes().map_err(|e| DynamicsError::Dimension(e.to_string()))?;
		Ok(Self {
			c_inv: spd_inverse(&topo.cap)?,
			l_inv: spd_inverse(&topo.ind)?,
			omega: topo.omega.to_f64(),
			a_j: topo.a_j.to_f64(),
			b_s: topo.b_s.to_f64(),
			i0: Vector::from_iterator(topo.nj(), topo.e_j.iter().map(|e| TAU * e / FLUX_QUANTUM)),
			v0: Vector::from_iterator(topo.ns(), topo.e_s.iter().map(|e| TAU * e / COOPER_CHARGE)),
			j_off: topo.junction_offset.clone(),
			s_off: topo.slip_offset.clone(),
		})
	}

	fn accel(&self, s: &State, dq_ext: &Vector, dphi_ext: &Vector) -> (Vector, Vector) {
		let arg_j = self.a_j.transpose() * &s.phi + &self.j_off;
		let i_j = Vector::from_fn(arg_j.len(), |i, _| self.i0[i] * (TAU / FLUX_QUANTUM * arg_j[i]).sin());
		let arg_s = self.b_s.transpose() * &s.q + &self.s_off;
		let v_s = Vector::from_fn(arg_s.len(), |i, _| self.v0[i] * (TAU / COOPER_CHARGE * arg_s[i]).sin());
		let fc = &self.omega * &s.q_dot - dq_ext - &self.a_j * i_j;
		let fl = -(self.omega.transpose() * &s.phi_dot) - dphi_ext - &self.b_s * v_s;
		(&self.c_inv * fc, &self.l_inv * fl)
	}

	fn deriv(&self, s: &State, t: f64, drive: Option<&Drive>) -> State {
		let (n, l) = (s.phi.len(), s.q.len());
		let (dq, dp) = drive.map_or_else(|| (Vector::zeros(n), Vector::zeros(l)), |d| d.rates(t, n, l));
		let (a, b) = self.accel(s, &dq, &dp);
		State { phi: s.phi_dot.clone(), q: s.q_dot.clone(), phi_dot: a, q_dot: b }
	}
}

fn axpy(s: &State, h: f64, d: &State) -> State {
	State { phi: &s.phi + &d.phi * h, q: &s.q + &d.q * h, phi_dot: &s.phi_dot + &d.phi_dot * h, q_dot: &s.q_dot + &d.q_dot * h }
}

fn finite(s: &State) -> bool {
	s.phi.iter().chain(s.q.iter()).chain(s.phi_dot.iter()).chain(s.q_dot.iter()).all(|x| x.is_finite())
}

/// Fixed-step RK4 over `round(t_end / dt)` steps.
pub fn integrate(topo: &CircuitTopology, initial: &State, t_end: f64, dt: f64, drive: Option<&Drive>) -> Result<StateTrajectory> {
	if !(dt > 0.0) || !(t_end > 0.0) || !dt.is_finite() || !t_end.is_finite() {
		return Err(DynamicsError::BadStep);
	}
	let sys = System::new(topo)?;
	if initial.phi.len() != topo.n() || initial.phi_dot.len() != topo.n() || initial.q.len() != topo.l() || initial.q_dot.len() != topo.l() {
		return Err(DynamicsError::Dimension("initial state does not match topology".into()));
	}
	if let Some(d) = drive {
		d.check(topo.n(), topo.l())?;
	}
	let steps = (t_end / dt).round().max(1.0) as usize;
	let mut times = Vec::with_capacity(steps + 1);
	let mut states = Vec::with_capacity(steps + 1);
	let mut s = initial.clone();
	times.push(0.0);
	states.push(s.clone());
	for k in 0..steps {
		let t = k as f64 * dt;
		let k1 = sys.deriv(&s, t, drive);
		let k2 = sys.deriv(&axpy(&s, 0.5 * dt, &k1), t + 0.5 * dt, drive);
		let k3 = sys.deriv(&axpy(&s, 0.5 * dt, &k2), t + 0.5 * dt, drive);
		let k4 = sys.deriv(&axpy(&s, dt, &k3), t + dt, drive);
		let h = dt / 6.0;
		s = State {
			phi: &s.phi + (&k1.phi + &k2.phi * 2.0 + &k3.phi * 2.0 + &k4.phi) * h,
			q: &s.q + (&k1.q + &k2.q * 2.0 + &k3.q * 2.0 + &k4.q) * h,
			phi_dot: &s.phi_dot + (&k1.phi_dot + &k2.phi_dot * 2.0 + &k3.phi_dot * 2.0 + &k4.phi_dot) * h,
			q_dot: &s.q_dot + (&k1.q_dot + &k2.q_dot * 2.0 + &k3.q_dot * 2.0 + &k4.q_dot) * h,
		};
		if !finite(&s) {
			return Err(DynamicsError::BlowUp { step: k + 1 });
		}
		times.push((k + 1) as f64 * dt);
		states.push(s.clone());
	}
	Ok(StateTrajectory::observed(times, states, &topo.a_j, &topo.b_s))
}

impl StateTrajectory {
	fn observed(times: Vec<f64>, states: Vec<State>, a_j: &IntMatrix, b_s: &IntMatrix) -> Self {
		let (a, b) = (a_j.to_f64().transpose(), b_s.to_f64().transpose());
		let phi_j = states.iter().map(|s| &a * &s.phi).collect();
		let q_s = states.iter().map(|s| &b * &s.q).collect();
		Self { times, states, phi_j, q_s }
	}

	/// Same states observed through other junction/slip incidence columns.
	pub fn observe(&self, a_j: &IntMatrix, b_s: &IntMatrix) -> Result<Self> {
		let s0 = &self.states[0];
		if a_j.nrows() != s0.phi.len() || b_s.nrows() != s0.q.len() {
			return Err(DynamicsError::Dimension("observation matrices".into()));
		}
		Ok(Self::observed(self.times.clone(), self.states.clone(), a_j, b_s))
	}

	pub fn len(&self) -> usize {
		self.times.len()
	}

	pub fn is_empty(&self) -> bool {
		self.times.is_empty()
	}

	/// CSV with `t`, the state columns and the observables.
	pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
		let mut wr = csv::Writer::from_writer(w);
		let s0 = &self.states[0];
		let mut header = vec!["t".to_string()];
		let names = |p: &'static str, n: usize| (0..n).map(move |i| format!("{p}{i}"));
		header.extend(names("phi", s0.phi.len()));
		header.extend(names("q", s0.q.len()));
		header.extend(names("phi_dot", s0.phi_dot.len()));
		header.extend(names("q_dot", s0.q_dot.len()));
		header.extend(names("phi_j", self.phi_j[0].len()));
		header.extend(names("q_s", self.q_s[0].len()));
		let io = |e: csv::Error| DynamicsError::Io(e.to_string());
		wr.write_record(&header).map_err(io)?;
		for k in 0..self.len() {
			let s = &self.states[k];
			let mut rec = vec![format!("{:e}", self.times[k])];
			for v in [&s.phi, &s.q, &s.phi_dot, &s.q_dot, &self.phi_j[k], &self.q_s[k]] {
				rec.extend(v.iter().map(|x| format!("{x:e}")));
			}
			wr.write_record(&rec).map_err(io)?;
		}
		wr.flush().map_err(|e| DynamicsError::Io(e.to_string()))
	}
}

/// Largest deviations of the junction fluxes and phase-slip charges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
	pub phi_j: f64,
	pub q_s: f64,
	/// Deviations divided by the largest magnitude in the first trajectory.
	pub phi_j_rel: f64,
	pub q_s_rel: f64,
}

impl Deviation {
	pub fn max_rel(&self) -> f64 {
		self.phi_j_rel.max(self.q_s_rel)
	}
}

pub fn compare_observables(a: &StateTrajectory, b: &StateTrajectory) -> Result<Deviation> {
	if a.len() != b.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(y.abs())) {
		return Err(DynamicsError::GridMismatch);
	}
	if a.phi_j.first().map(|v| v.len()) != b.phi_j.first().map(|v| v.len()) || a.q_s.first().map(|v| v.len()) != b.q_s.first().map(|v| v.len()) {
		return Err(DynamicsError::Dimension("observable counts differ".into()));
	}
	let dev = |x: &[Vector], y: &[Vector]| -> (f64, f64) {
		let d = x.iter().zip(y).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max);
		let s = x.iter().map(|u| u.amax()).fold(0.0, f64::max);
		(d, if s > 0.0 { d / s } else { d })
	};
	let (pj, pjr) = dev(&a.phi_j, &b.phi_j);
	let (qs, qsr) = dev(&a.q_s, &b.q_s);
	Ok(Deviation { phi_j: pj, q_s: qs, phi_j_rel: pjr, q_s_rel: qsr })
}

/// Classical energy `½Φ̇ᵀCΦ̇ + ½Q̇ᵀLQ̇ - ΣE_J cos - ΣE_S cos`.
pub fn energy(topo: &CircuitTopology, s: &State) -> f64 {
	let kin = 0.5 * s.phi_dot.dot(&(&topo.cap * &s.phi_dot)) + 0.5 * s.q_dot.dot(&(&topo.ind * &s.q_dot));
	let aj = topo.a_j.to_f64().transpose() * &s.phi + &topo.junction_offset;
	let bs = topo.b_s.to_f64().transpose() * &s.q + &topo.slip_offset;
	let pj: f64 = (0..aj.len()).map(|i| topo.e_j[i] * (TAU / FLUX_QUANTUM * aj[i]).cos()).sum();
	let ps: f64 = (0..bs.len()).map(|i| topo.e_s[i] * (TAU / COOPER_CHARGE * bs[i]).cos()).sum();
	kin - pj - ps
}

/// Shortest oscillation period of the linearization about the origin.
pub fn shortest_period(topo: &CircuitTopology) -> Result<f64> {
	let sys = System::new(topo)?;
	let (n, l) = (topo.n(), topo.l());
	let m = 2 * (n + l);
	let mut a = Mat::zeros(m, m);
	// unknowns scaled to charge/flux-like units so the matrix stays balanced
	let kj = Vector::from_fn(topo.nj(), |i, _| sys.i0[i] * TAU / FLUX_QUANTUM * topo.junction_offset.map(|o| (TAU / FLUX_QUANTUM * o).cos())[i]);
	let ks = Vector::from_fn(topo.ns(), |i, _| sys.v0[i] * TAU / COOPER_CHARGE * topo.slip_offset.map(|o| (TAU / COOPER_CHARGE * o).cos())[i]);
	let stiff_c = &sys.a_j * Mat::from_diagonal(&kj) * sys.a_j.transpose();
	let stiff_l = &sys.b_s * Mat::from_diagonal(&ks) * sys.b_s.transpose();
	for i in 0..n + l {
		a[(i, n + l + i)] = 1.0;
	}
	let pc = -&sys.c_inv * stiff_c;
	let pl = -&sys.l_inv * stiff_l;
	let vc = &sys.c_inv * &sys.omega;
	let vl = -&sys.l_inv * sys.omega.transpose();
	a.view_mut((n + l, 0), (n, n)).copy_from(&pc);
	a.view_mut((n + l + n, n), (l, l)).copy_from(&pl);
	a.view_mut((n + l, n + l + n), (n, l)).copy_from(&vc);
	a.view_mut((n + l + n, n + l), (l, n)).copy_from(&vl);
	let ev: Vec<Complex<f64>> = a.complex_eigenvalues().iter().cloned().collect();
	let w = ev.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
	if !(w > 0.0) || !w.is_finite() {
		return Err(DynamicsError::Dimension("no oscillating mode".into()));
	}
	Ok(TAU / w)
}

/// Map a state through `Φ' = U⁻ᵀΦ`, `Q' = W⁻ᵀQ`.
pub fn transform_state(s: &State, u: &UnimodularTransform, w: &UnimodularTransform) -> State {
	let ut = u.m_inv.to_f64().transpose();
	let wt = w.m_inv.to_f64().transpose();
	State { phi: &ut * &s.phi, q: &wt * &s.q, phi_dot: &ut * &s.phi_dot, q_dot: &wt * &s.q_dot }
}

/// Keep the listed node and loop components.
pub fn restrict_state(s: &State, nodes: &[usize], loops: &[usize]) -> State {
	let pick = |v: &Vector, idx: &[usize]| Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
	State { phi: pick(&s.phi, nodes), q: pick(&s.q, loops), phi_dot: pick(&s.phi_dot, nodes), q_dot: pick(&s.q_dot, loops) }
}
