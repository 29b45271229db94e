//! WAV ingestion and intensity-based silence detection.
//!
//! Audio input is WAV, PCM 16-bit, mono. Silence detection follows the
//! frame-RMS convention: 25 ms frames at a 10 ms hop, a frame is silent
//! when its RMS intensity lies more than 18 dB below the loudest frame,
//! and silent runs shorter than 0.35 s are discarded.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fluency::SilenceInterval;

/// Silence detector configuration. Defaults match the documented
/// convention (18 dB below peak, 0.35 s minimum, 25 ms / 10 ms framing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilenceParams {
    /// A frame is silent when more than this many dB below the peak frame.
    pub threshold_db: f64,
    /// Minimum duration for a reported interval, seconds.
    pub min_duration_s: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
}

impl Default for SilenceParams {
    fn default() -> Self {
        SilenceParams {
            threshold_db: 18.0,
            min_duration_s: 0.35,
            frame_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

/// Read a mono 16-bit PCM WAV file into [-1, 1] samples plus the sample
/// rate. Stereo or non-16-bit input is rejected with a clear error.
pub fn read_wav_mono(path: impl AsRef<Path>) -> Result<(Vec<f64>, u32)> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio {
            path: path.to_path_buf(),
            message: format!("expected mono audio, found {} channels", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio {
            path: path.to_path_buf(),
            message: format!(
                "expected PCM 16-bit samples, found {:?} {}-bit",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let samples: std::result::Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((
        samples.iter().map(|&s| f64::from(s) / 32768.0).collect(),
        spec.sample_rate,
    ))
}

/// Detect silence intervals in a PCM signal.
///
/// Frames of `frame_ms` at a `hop_ms` hop are scored by RMS; a frame is
/// silent when strictly more than `threshold_db` below the peak frame RMS.
/// Maximal silent runs become intervals `[first_frame_start,
/// last_frame_end]` (clipped to the signal), overlapping runs are merged,
/// and intervals shorter than `min_duration_s` are dropped. An all-zero
/// signal yields one interval covering the whole duration. Intervals are
/// reported in seconds at hop resolution.
pub fn detect_silences(
    samples: &[f64],
    sample_rate: u32,
    params: &SilenceParams,
) -> Result<Vec<SilenceInterval>> {
    if sample_rate == 0 {
        return Err(Error::invalid("detect_silences: zero sample rate"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("detect_silences: empty signal"));
    }
    if params.threshold_db <= 0.0 || params.frame_ms <= 0.0 || params.hop_ms <= 0.0 {
        return Err(Error::invalid("detect_silences: non-positive parameter"));
    }
    let sr = f64::from(sample_rate);
    let total_s = samples.len() as f64 / sr;
    let frame_len = ((sr * params.frame_ms / 1000.0).round() as usize).max(1);
    let hop = ((sr * params.hop_ms / 1000.0).round() as usize).max(1);

    // Frame starts; a signal shorter than one frame is scored whole.
    let mut rms = Vec::new();
    if samples.len() < frame_len {
        rms.push(frame_rms(samples));
    } else {
        let mut start = 0;
        while start + frame_len <= samples.len() {
            rms.push(frame_rms(&samples[start..start + frame_len]));
            start += hop;
        }
    }
    let peak = rms.iter().cloned().fold(0.0f64, f64::max);
    if peak == 0.0 {
        // No energy anywhere: the whole signal is silent.
        let whole = SilenceInterval {
            start_s: 0.0,
            end_s: total_s,
        };
        return Ok(if total_s >= params.min_duration_s {
            vec![whole]
        } else {
            Vec::new()
        });
    }

    let cutoff = peak * 10f64.powf(-params.threshold_db / 20.0);
    let silent: Vec<bool> = rms.iter().map(|&r| r < cutoff).collect();

    let frame_s = frame_len as f64 / sr;
    let hop_s = hop as f64 / sr;
    let mut intervals: Vec<SilenceInterval> = Vec::new();
    let mut i = 0;
    while i < silent.len() {
        if !silent[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i + 1 < silent.len() && silent[i + 1] {
            i += 1;
        }
        let start_s = run_start as f64 * hop_s;
        let end_s = (i as f64 * hop_s + frame_s).min(total_s);
        match intervals.last_mut() {
            Some(last) if last.end_s >= start_s => last.end_s = last.end_s.max(end_s),
            _ => intervals.push(SilenceInterval { start_s, end_s }),
        }
        i += 1;
    }
    intervals.retain(|iv| iv.end_s - iv.start_s >= params.min_duration_s - 1e-9);
    Ok(intervals)
}

fn frame_rms(frame: &[f64]) -> f64 {
    (frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64).sqrt()
}
