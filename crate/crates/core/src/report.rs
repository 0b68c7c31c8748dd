//! Serializable result record shared by every solver.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Wmmse,
    WmmseCorrelated,
    FourierSvd,
    Spda,
    DenseOptimal,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Wmmse => "wmmse",
            Method::WmmseCorrelated => "wmmse_correlated",
            Method::FourierSvd => "fourier_svd",
            Method::Spda => "spda",
            Method::DenseOptimal => "dense_optimal",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    /// Achievable rate in bits/s/Hz.
    pub rate_bits: f64,
    pub iterations: usize,
    /// Rate before each update, starting from the initial beamformer.
    pub rate_trace: Vec<f64>,
    pub wall_ms: f64,
    pub streams: usize,
    /// Streams carrying non-negligible power.
    pub effective_rank: usize,
    pub max_iter_reached: bool,
    /// Per-stream powers, for methods that allocate them explicitly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_powers: Option<Vec<f64>>,
    /// Echo of the configuration that produced this report.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl SolveReport {
    pub fn new(method: Method, rate_bits: f64, streams: usize) -> Self {
        Self {
            method,
            rate_bits,
            iterations: 0,
            rate_trace: Vec::new(),
            wall_ms: 0.0,
            streams,
            effective_rank: streams,
            max_iter_reached: false,
            stream_powers: None,
            config: serde_json::Value::Null,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut r = SolveReport::new(Method::FourierSvd, 25.2, 4);
        r.stream_powers = Some(vec![0.05, 0.05]);
        r.config = serde_json::json!({ "frequency": 2.4e9 });
        let text = serde_json::to_string(&r).unwrap();
        assert!(text.contains("\"method\":\"fourier_svd\""));
        let back: SolveReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
