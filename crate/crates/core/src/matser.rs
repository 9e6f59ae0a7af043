//! Serde adapters writing dense matrices as arrays of rows.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::numeric::{Mat, Vector};

pub mod mat {
	use super::*;

	pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
		let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect();
		rows.serialize(s)
	}

	pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
		let rows = Vec::<Vec<f64>>::deserialize(d)?;
		let n = rows.len();
		let c = rows.first().map_or(0, |r| r.len());
		if rows.iter().any(|r| r.len() != c) {
			return Err(serde::de::Error::custom("ragged matrix"));
		}
		Ok(Mat::from_fn(n, c, |i, j| rows[i][j]))
	}
}

pub mod vector {
	use super::*;

	pub fn serialize<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
		v.iter().cloned().collect::<Vec<f64>>().serialize(s)
	}

	pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector, D::Error> {
		Ok(Vector::from_vec(Vec::<f64>::deserialize(d)?))
	}
}
