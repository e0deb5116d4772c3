use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extra input the first packet waits for beyond its chunk: the
/// subsampling front end needs 70 ms of fbank context for its first output.
pub const LOOKAHEAD_MS: f64 = 30.0;

/// First-packet latency split by stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub chunk_ms: f64,
    pub lookahead_ms: f64,
    pub encoder_ms: f64,
    pub decoder_ms: f64,
    pub vocoder_ms: f64,
    pub total_ms: f64,
    /// Compute for one chunk finishes within the chunk's duration.
    pub realtime_ok: bool,
}

pub fn latency_report(
    chunk_ms: f64,
    encoder_ms: f64,
    decoder_ms: f64,
    vocoder_ms: f64,
) -> Result<LatencyReport> {
    for (name, v) in [
        ("chunk", chunk_ms),
        ("encoder", encoder_ms),
        ("decoder", decoder_ms),
        ("vocoder", vocoder_ms),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} time {v}")));
        }
        if v < 0.0 {
            return Err(Error::NegativeTime(format!("{name} time {v} ms")));
        }
    }
    if chunk_ms <= 0.0 || chunk_ms % 40.0 != 0.0 {
        return Err(Error::InvalidChunk(format!(
            "chunk of {chunk_ms} ms must be a positive multiple of 40 ms"
        )));
    }
    let compute = encoder_ms + decoder_ms + vocoder_ms;
    Ok(LatencyReport {
        chunk_ms,
        lookahead_ms: LOOKAHEAD_MS,
        encoder_ms,
        decoder_ms,
        vocoder_ms,
        total_ms: chunk_ms + LOOKAHEAD_MS + encoder_ms + decoder_ms + vocoder_ms,
        realtime_ok: compute < chunk_ms,
    })
}

/// Real-time factor: compute time over audio duration.
pub fn rtf(compute_seconds: f64, audio_seconds: f64) -> Result<f64> {
    if audio_seconds == 0.0 {
        return Err(Error::ZeroDuration);
    }
    if compute_seconds < 0.0 || audio_seconds < 0.0 {
        return Err(Error::NegativeTime(format!(
            "compute {compute_seconds} s, audio {audio_seconds} s"
        )));
    }
    Ok(compute_seconds / audio_seconds)
}

/// One benchmark row: a chunk size on a device, with its latency split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub model: String,
    pub device_label: String,
    pub chunk_ms: f64,
    pub encoder_ms: f64,
    pub decoder_ms: f64,
    pub vocoder_ms: f64,
    pub total_ms: f64,
    pub realtime_ok: bool,
    pub rtf: f64,
}

impl BenchRecord {
    pub fn new(model: &str, device_label: &str, report: &LatencyReport, rtf: f64) -> Self {
        Self {
            model: model.to_string(),
            device_label: device_label.to_string(),
            chunk_ms: report.chunk_ms,
            encoder_ms: report.encoder_ms,
            decoder_ms: report.decoder_ms,
            vocoder_ms: report.vocoder_ms,
            total_ms: report.total_ms,
            realtime_ok: report.realtime_ok,
            rtf,
        }
    }
}

/// Vocoder speed in the shape of a model-comparison table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocoderSpeedRecord {
    pub model: String,
    pub device_label: String,
    pub audio_seconds: f64,
    pub compute_seconds: f64,
    pub rtf: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals() {
        let r = latency_report(40.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(r.total_ms, 70.0);
        let r = latency_report(40.0, 5.543, 3.886, 3.974).unwrap();
        assert_eq!(format!("{:.3}", r.total_ms), "83.403");
        assert!(r.realtime_ok);
        assert!(
            !latency_report(40.0, 20.879, 23.688, 12.205)
                .unwrap()
                .realtime_ok
        );
    }

    #[test]
    fn rejects_bad_times() {
        assert!(matches!(
            latency_report(40.0, -1.0, 0.0, 0.0),
            Err(Error::NegativeTime(_))
        ));
        assert!(matches!(
            latency_report(50.0, 1.0, 0.0, 0.0),
            Err(Error::InvalidChunk(_))
        ));
    }

    #[test]
    fn rtf_cases() {
        assert_eq!(rtf(0.5, 1.0).unwrap(), 0.5);
        assert_eq!(rtf(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(format!("{:.3}", rtf(0.902, 1.0).unwrap()), "0.902");
        assert!(matches!(rtf(1.0, 0.0), Err(Error::ZeroDuration)));
    }

    #[test]
    fn record_json_round_trip() {
        let r = latency_report(160.0, 40.117, 30.321, 12.205).unwrap();
        let rec = BenchRecord::new("streamvc", "cpu", &r, 0.1);
        let s = serde_json::to_string(&rec).unwrap();
        assert_eq!(serde_json::from_str::<BenchRecord>(&s).unwrap(), rec);
    }
}
