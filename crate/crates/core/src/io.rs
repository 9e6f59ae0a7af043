//! Circuit file loading: branch netlists, node/loop topologies, synthesized
//! circuits and extraction reports all resolve to a topology.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::extract::{SynthesizedCircuit, CIRCUIT_SCHEMA};
use crate::graph_core::{build_topology, BranchNetlist, CircuitTopology, GraphError, LoopBasis};

#[derive(Debug, Error)]
pub enum InputError {
	#[error("parse: {0}")]
	Parse(String),
	#[error(transparent)]
	Graph(#[from] GraphError),
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum CircuitInput {
	Netlist(BranchNetlist),
	Topology(CircuitTopology),
	Synthesized(SynthesizedCircuit),
}

pub const EXTRACTION_SCHEMA: &str = "supercircuit.extraction/1";

/// Output of the extraction pipeline; `topology` is ready for quantization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionReport {
	pub schema: String,
	pub topology: CircuitTopology,
	pub node_labels: Vec<String>,
	pub loop_labels: Vec<String>,
	pub circuit: SynthesizedCircuit,
	pub model: crate::extract::PoleResidueModel,
	#[serde(default)]
	pub fit_residual: Option<f64>,
	#[serde(default)]
	pub hamiltonian: Option<crate::quantize::HamiltonianModel>,
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T, InputError> {
	serde_json::from_value(v).map_err(|e| InputError::Parse(e.to_string()))
}

pub fn parse_circuit(text: &str) -> Result<CircuitInput, InputError> {
	let v: Value = serde_json::from_str(text).map_err(|e| InputError::Parse(e.to_string()))?;
	let Some(obj) = v.as_object() else {
		return Err(InputError::Parse("expected a JSON object".into()));
	};
	if obj.contains_key("branches") {
		return Ok(CircuitInput::Netlist(parse(v)?));
	}
	if obj.get("schema").and_then(Value::as_str) == Some(CIRCUIT_SCHEMA) {
		return Ok(CircuitInput::Synthesized(parse(v)?));
	}
	if let Some(t) = obj.get("topology") {
		return Ok(CircuitInput::Topology(parse(t.clone())?));
	}
	if obj.contains_key("cap") {
		return Ok(CircuitInput::Topology(parse(v)?));
	}
	Err(InputError::Parse("unrecognized circuit file: expected `branches`, `cap` or `topology`".into()))
}

impl CircuitInput {
	pub fn topology(&self) -> Result<(CircuitTopology, Option<LoopBasis>), InputError> {
		match self {
			CircuitInput::Netlist(n) => {
				let (t, b) = build_topology(n)?;
				Ok((t, Some(b)))
			}
			CircuitInput::Topology(t) => Ok((t.clone(), None)),
			CircuitInput::Synthesized(c) => Ok((c.to_topology(), None)),
		}
	}
}

#[cfg(test)]
mod tests {
	use super::*;
	use crate::fixtures;

	#[test]
	fn every_form_resolves() {
		let net = fixtures::fluxonium(3e-15, 300e-9, 1e-24, 1e-24);
		let text = serde_json::to_string(&net).unwrap();
		let (t, b) = parse_circuit(&text).unwrap().topology().unwrap();
		assert!(b.is_some());
		let text = serde_json::to_string(&t).unwrap();
		assert_eq!(parse_circuit(&text).unwrap().topology().unwrap().0, t);
		let wrapped = format!("{{\"topology\": {text}}}");
		assert_eq!(parse_circuit(&wrapped).unwrap().topology().unwrap().0, t);
		let circ = crate::extract::synthesize(&crate::extract::fluxonium_drive_model()).unwrap();
		let text = serde_json::to_string(&circ).unwrap();
		assert_eq!(parse_circuit(&text).unwrap().topology().unwrap().0, circ.to_topology());
		assert!(matches!(parse_circuit("[1,2]"), Err(InputError::Parse(_))));
		assert!(matches!(parse_circuit("{\"x\":1}"), Err(InputError::Parse(_))));
		assert!(matches!(parse_circuit("{"), Err(InputError::Parse(_))));
	}
}
