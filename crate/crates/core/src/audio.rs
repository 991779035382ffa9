//! Mono PCM audio decoding and encoding.
//!
//! Decoding accepts 16-bit PCM RIFF/WAVE and 16-bit FLAC. Integer samples are
//! mapped to `[-1, 1)` by dividing by 32768. Encoding always produces 16-bit
//! PCM WAV, quantizing with `round(x * 32768)` clamped to `±32767`, so that
//! every decoded value `k / 32768` with `|k| <= 32767` is written back as `k`.

use std::path::Path;

use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;
const PCM16_MAX: f64 = 32767.0;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_id: String,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32, source_id: impl Into<String>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Audio(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            source_id: source_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same metadata, different samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            source_id: self.source_id.clone(),
        }
    }
}

fn utterance_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a mono 16-bit WAV or FLAC file. The container is chosen by
/// extension (`.flac` for FLAC, anything else is parsed as WAV).
pub fn read_audio(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let is_flac = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("flac"))
        .unwrap_or(false);
    let (ints, sample_rate) = if is_flac {
        read_flac(path)?
    } else {
        read_wav(path)?
    };
    if ints.is_empty() {
        return Err(Error::Audio(format!("empty audio: {}", path.display())));
    }
    let samples = ints.into_iter().map(|v| v as f64 / PCM16_SCALE).collect();
    AudioBuffer::new(samples, sample_rate, utterance_id(path))
}

fn read_wav(path: &Path) -> Result<(Vec<i32>, u32)> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Audio(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "{}: unsupported codec ({:?}, {} bits); expected 16-bit PCM",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let ints = reader
        .into_samples::<i16>()
        .map(|s| s.map(i32::from))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_error(path, e))?;
    Ok((ints, spec.sample_rate))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() != std::io::ErrorKind::UnexpectedEof => {
            Error::io(path, io)
        }
        other => Error::Audio(format!("{}: {other}", path.display())),
    }
}

fn read_flac(path: &Path) -> Result<(Vec<i32>, u32)> {
    let mut reader = claxon::FlacReader::open(path)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    let info = reader.streaminfo();
    if info.channels != 1 {
        return Err(Error::Audio(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            info.channels
        )));
    }
    if info.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "{}: unsupported bit depth {}; expected 16",
            path.display(),
            info.bits_per_sample
        )));
    }
    let ints = reader
        .samples()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))?;
    Ok((ints, info.sample_rate))
}

/// Quantizes one sample to PCM16.
pub fn quantize_pcm16(x: f64) -> i16 {
    (x * PCM16_SCALE).round().clamp(-PCM16_MAX, PCM16_MAX) as i16
}

/// Writes a mono 16-bit PCM WAV file.
pub fn write_audio(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    if let Some((i, x)) = buffer
        .samples
        .iter()
        .enumerate()
        .find(|(_, x)| !x.is_finite() || x.abs() > 1.0)
    {
        return Err(Error::Audio(format!(
            "sample {i} = {x} outside [-1, 1]; refusing to write {}",
            path.display()
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &x in &buffer.samples {
        writer
            .write_sample(quantize_pcm16(x))
            .map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Resolves utterance ids to audio.
pub trait AudioSource: Sync {
    fn load(&self, utterance_id: &str) -> Result<AudioBuffer>;
}

/// Files named `<id>.flac` or `<id>.wav` under a root directory, also looked
/// up in a `flac/` or `wav/` subdirectory.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    pub root: std::path::PathBuf,
}

impl DirectorySource {
    pub fn new(root: impl Into<std::path::PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn resolve(&self, utterance_id: &str) -> Option<std::path::PathBuf> {
        ["", "flac", "wav"]
            .iter()
            .flat_map(|sub| {
                ["flac", "wav"]
                    .iter()
                    .map(move |ext| self.root.join(sub).join(format!("{utterance_id}.{ext}")))
            })
            .find(|p| p.is_file())
    }
}

impl AudioSource for DirectorySource {
    fn load(&self, utterance_id: &str) -> Result<AudioBuffer> {
        let path = self.resolve(utterance_id).ok_or_else(|| {
            Error::Audio(format!(
                "no audio for '{utterance_id}' under {}",
                self.root.display()
            ))
        })?;
        read_audio(path)
    }
}

/// In-memory audio keyed by utterance id.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub buffers: std::collections::HashMap<String, AudioBuffer>,
}

impl AudioSource for MemorySource {
    fn load(&self, utterance_id: &str) -> Result<AudioBuffer> {
        self.buffers
            .get(utterance_id)
            .cloned()
            .ok_or_else(|| Error::Audio(format!("no audio for '{utterance_id}'")))
    }
}
