//! On-disk formats: the `IMPN` binary trace file and the TOML parameter file.
//!
//! A trace file is a 24-byte little-endian header followed by the samples:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `IMPN`                   |
//! | 4      | 2    | version, currently 1           |
//! | 6      | 2    | flags, must be 0               |
//! | 8      | 8    | sampling rate in Hz, `f64`     |
//! | 16     | 8    | sample count, `u64`            |
//! | 24     | 4·n  | samples, `f32`                 |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    generate_bg, generate_class_a, BaselineError, BgMemoryParams, ClassAParams,
};
use crate::chain::{build_chain, generate, ChainConfig, ChainError};
use crate::detect::{MomentAccumulator, SampleMoments};
use crate::trace::NoiseTrace;

pub const MAGIC: [u8; 4] = *b"IMPN";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 24;
const SAMPLE_LEN: u64 = 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not a trace file: magic {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("trace file version {0} is not supported")]
    VersionUnsupported(u16),
    #[error("trace file ends early at byte offset {offset}")]
    TruncatedFile { offset: u64 },
    #[error("invalid trace header: {0}")]
    InvalidHeader(String),
    #[error("unexpected data after the last sample at byte offset {offset}")]
    TrailingData { offset: u64 },
    #[error("unknown model kind {0:?}")]
    UnknownModelKind(String),
    #[error("malformed parameter file: {0}")]
    Params(String),
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FormatError {
    pub fn code(&self) -> &'static str {
        match self {
            FormatError::BadMagic { .. } => "BadMagic",
            FormatError::VersionUnsupported(_) => "VersionUnsupported",
            FormatError::TruncatedFile { .. } => "TruncatedFile",
            FormatError::InvalidHeader(_) => "InvalidHeader",
            FormatError::TrailingData { .. } => "TrailingData",
            FormatError::UnknownModelKind(_) => "UnknownModelKind",
            FormatError::Params(_) => "MalformedParams",
            FormatError::InvalidModel(_) => "InvalidParams",
            FormatError::Io(_) => "IoError",
        }
    }
}

impl From<ChainError> for FormatError {
    fn from(e: ChainError) -> Self {
        FormatError::InvalidModel(e.to_string())
    }
}

impl From<BaselineError> for FormatError {
    fn from(e: BaselineError) -> Self {
        FormatError::InvalidModel(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHeader {
    pub sampling_rate_hz: f64,
    pub sample_count: u64,
}

impl TraceHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&VERSION.to_le_bytes());
        b[6..8].copy_from_slice(&0u16.to_le_bytes());
        b[8..16].copy_from_slice(&self.sampling_rate_hz.to_le_bytes());
        b[16..24].copy_from_slice(&self.sample_count.to_le_bytes());
        b
    }
}

/// Fills `buf` as far as the reader allows and returns the byte count.
fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Incremental trace reader; samples are pulled in caller-sized chunks so a
/// file never has to be held in memory at once.
pub struct TraceReader<R> {
    inner: R,
    header: TraceHeader,
    remaining: u64,
    bytes: Vec<u8>,
}

impl TraceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FormatError> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut inner: R) -> Result<Self, FormatError> {
        let mut raw = [0u8; HEADER_LEN as usize];
        let got = read_up_to(&mut inner, &mut raw)?;
        if got >= 4 && raw[0..4] != MAGIC {
            return Err(FormatError::BadMagic {
                found: raw[0..4].try_into().expect("four bytes"),
            });
        }
        if got < raw.len() {
            if got < 4 {
                let mut found = [0u8; 4];
                found[..got].copy_from_slice(&raw[..got]);
                return Err(FormatError::BadMagic { found });
            }
            return Err(FormatError::TruncatedFile { offset: got as u64 });
        }
        let version = u16::from_le_bytes([raw[4], raw[5]]);
        if version != VERSION {
            return Err(FormatError::VersionUnsupported(version));
        }
        let flags = u16::from_le_bytes([raw[6], raw[7]]);
        if flags != 0 {
            return Err(FormatError::InvalidHeader(format!(
                "unknown flags {flags:#06x}"
            )));
        }
        let sampling_rate_hz = f64::from_le_bytes(raw[8..16].try_into().expect("eight bytes"));
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(FormatError::InvalidHeader(format!(
                "sampling rate {sampling_rate_hz} is not positive"
            )));
        }
        let sample_count = u64::from_le_bytes(raw[16..24].try_into().expect("eight bytes"));
        Ok(Self {
            inner,
            header: TraceHeader {
                sampling_rate_hz,
                sample_count,
            },
            remaining: sample_count,
            bytes: Vec::new(),
        })
    }

    pub fn header(&self) -> TraceHeader {
        self.header
    }

    /// Byte offset of the next unread sample.
    fn offset(&self) -> u64 {
        HEADER_LEN + (self.header.sample_count - self.remaining) * SAMPLE_LEN
    }

    /// Appends up to `max` samples to `out` and returns how many were read;
    /// zero once every declared sample has been consumed.
    pub fn read_chunk(&mut self, out: &mut Vec<f32>, max: usize) -> Result<usize, FormatError> {
        let want = self.remaining.min(max as u64) as usize;
        self.bytes.resize(want * SAMPLE_LEN as usize, 0);
        let got = read_up_to(&mut self.inner, &mut self.bytes)?;
        let whole = got / SAMPLE_LEN as usize;
        out.extend(
            self.bytes[..whole * SAMPLE_LEN as usize]
                .chunks_exact(SAMPLE_LEN as usize)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))),
        );
        self.remaining -= whole as u64;
        if whole < want {
            return Err(FormatError::TruncatedFile {
                offset: self.offset() + (got % SAMPLE_LEN as usize) as u64,
            });
        }
        Ok(whole)
    }

    /// Reads the remaining samples and checks nothing follows them.
    pub fn into_trace(mut self) -> Result<NoiseTrace, FormatError> {
        let mut samples = Vec::with_capacity(self.remaining.min(1 << 28) as usize);
        while self.read_chunk(&mut samples, 1 << 16)? > 0 {}
        let mut probe = [0u8; 1];
        if read_up_to(&mut self.inner, &mut probe)? > 0 {
            return Err(FormatError::TrailingData {
                offset: self.offset(),
            });
        }
        Ok(NoiseTrace::new(samples, self.header.sampling_rate_hz))
    }
}

impl<R: Read> TraceReader<R> {
    /// Even moments of the remaining samples, read one chunk at a time.
    pub fn moments(mut self) -> Result<SampleMoments, FormatError> {
        let mut acc = MomentAccumulator::new();
        let mut chunk = Vec::with_capacity(1 << 16);
        loop {
            chunk.clear();
            if self.read_chunk(&mut chunk, 1 << 16)? == 0 {
                return Ok(acc.finish());
            }
            acc.extend(chunk.iter().map(|&x| f64::from(x)));
        }
    }
}

pub fn read_trace_from(reader: impl Read) -> Result<NoiseTrace, FormatError> {
    TraceReader::new(reader)?.into_trace()
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<NoiseTrace, FormatError> {
    TraceReader::open(path)?.into_trace()
}

pub fn write_trace_to(mut writer: impl Write, trace: &NoiseTrace) -> Result<(), FormatError> {
    let header = TraceHeader {
        sampling_rate_hz: trace.sampling_rate_hz(),
        sample_count: trace.len() as u64,
    };
    writer.write_all(&header.to_bytes())?;
    let mut buf = Vec::with_capacity(1 << 16);
    for chunk in trace.samples().chunks(1 << 14) {
        buf.clear();
        buf.extend(chunk.iter().flat_map(|x| x.to_le_bytes()));
        writer.write_all(&buf)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_trace(path: impl AsRef<Path>, trace: &NoiseTrace) -> Result<(), FormatError> {
    write_trace_to(BufWriter::new(File::create(path)?), trace)
}

/// Any of the three noise models, as stored in a parameter file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Chain(ChainConfig),
    BgMemory(BgMemoryParams),
    ClassA(ClassAParams),
}

impl ModelParams {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::Chain(_) => "partitioned-chain",
            ModelParams::BgMemory(_) => "bg-memory",
            ModelParams::ClassA(_) => "class-a",
        }
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        match self {
            ModelParams::Chain(c) => c.sampling_rate_hz,
            ModelParams::BgMemory(p) => p.sampling_rate_hz,
            ModelParams::ClassA(p) => p.sampling_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        match self {
            ModelParams::Chain(c) => c.validate()?,
            ModelParams::BgMemory(p) => p.validate()?,
            ModelParams::ClassA(p) => p.validate()?,
        }
        Ok(())
    }

    /// Draws `n` samples; the same seed always gives the same trace.
    pub fn generate(&self, n: usize, seed: u64) -> Result<NoiseTrace, FormatError> {
        Ok(match self {
            ModelParams::Chain(c) => generate(&build_chain(c.clone())?, n, seed).0,
            ModelParams::BgMemory(p) => generate_bg(p, n, seed)?,
            ModelParams::ClassA(p) => generate_class_a(p, n, seed)?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawParamsFile {
    kind: String,
    toolkit_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    chain: Option<ChainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bg_memory: Option<BgMemoryParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_a: Option<ClassAParams>,
}

/// A parameter file: the model plus the toolkit version that wrote it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFile {
    pub toolkit_version: String,
    pub model: ModelParams,
}

impl ParamsFile {
    pub fn new(model: ModelParams) -> Self {
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            model,
        }
    }

    pub fn to_toml(&self) -> Result<String, FormatError> {
        let mut raw = RawParamsFile {
            kind: self.model.kind().to_string(),
            toolkit_version: self.toolkit_version.clone(),
            chain: None,
            bg_memory: None,
            class_a: None,
        };
        match &self.model {
            ModelParams::Chain(c) => raw.chain = Some(c.clone()),
            ModelParams::BgMemory(p) => raw.bg_memory = Some(p.clone()),
            ModelParams::ClassA(p) => raw.class_a = Some(p.clone()),
        }
        toml::to_string(&raw).map_err(|e| FormatError::Params(e.to_string()))
    }

    /// Parses and validates a parameter document.
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let raw: RawParamsFile =
            toml::from_str(text).map_err(|e| FormatError::Params(e.to_string()))?;
        let missing = |section: &str| {
            FormatError::Params(format!("kind {:?} needs a [{section}] table", raw.kind))
        };
        let model = match raw.kind.as_str() {
            "partitioned-chain" => {
                ModelParams::Chain(raw.chain.clone().ok_or_else(|| missing("chain"))?)
            }
            "bg-memory" => {
                ModelParams::BgMemory(raw.bg_memory.clone().ok_or_else(|| missing("bg_memory"))?)
            }
            "class-a" => {
                ModelParams::ClassA(raw.class_a.clone().ok_or_else(|| missing("class_a"))?)
            }
            other => return Err(FormatError::UnknownModelKind(other.to_string())),
        };
        model.validate()?;
        Ok(Self {
            toolkit_version: raw.toolkit_version,
            model,
        })
    }
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamsFile, FormatError> {
    ParamsFile::from_toml(&std::fs::read_to_string(path)?)
}

pub fn write_params(path: impl AsRef<Path>, params: &ParamsFile) -> Result<(), FormatError> {
    std::fs::write(path, params.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::tests::sample_config;

    fn bytes_of(trace: &NoiseTrace) -> Vec<u8> {
        let mut out = Vec::new();
        write_trace_to(&mut out, trace).unwrap();
        out
    }

    #[test]
    fn header_layout() {
        let t = NoiseTrace::new(vec![1.5, -2.0], 5e9);
        let b = bytes_of(&t);
        assert_eq!(b.len(), 24 + 8);
        assert_eq!(&b[0..4], b"IMPN");
        assert_eq!(&b[4..8], &[1, 0, 0, 0]);
        assert_eq!(f64::from_le_bytes(b[8..16].try_into().unwrap()), 5e9);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 2);
        assert_eq!(f32::from_le_bytes(b[24..28].try_into().unwrap()), 1.5);
    }

    #[test]
    fn streamed_moments_match_in_memory() {
        let t = NoiseTrace::new(
            (0..200_000)
                .map(|i| ((i % 97) as f32 - 48.0) / 7.0)
                .collect(),
            1.0,
        );
        let streamed = TraceReader::new(bytes_of(&t).as_slice())
            .unwrap()
            .moments()
            .unwrap();
        assert_eq!(streamed, SampleMoments::of(&t));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let samples: Vec<f32> = (0..1_000_000u32)
            .map(|i| f32::from_bits(i.wrapping_mul(2_654_435_761) & 0x7f7f_ffff))
            .collect();
        let t = NoiseTrace::new(samples, 5e9);
        let back = read_trace_from(bytes_of(&t).as_slice()).unwrap();
        assert_eq!(
            back.sampling_rate_hz().to_bits(),
            t.sampling_rate_hz().to_bits()
        );
        assert!(back
            .samples()
            .iter()
            .zip(t.samples())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.len(), t.len());
    }

    #[test]
    fn wrong_magic() {
        let mut b = bytes_of(&NoiseTrace::new(vec![0.0], 1.0));
        b[0] = b'X';
        assert!(matches!(
            read_trace_from(b.as_slice()),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            read_trace_from(&b"IM"[..]),
            Err(FormatError::BadMagic { .. })
        ));
    }

    #[test]
    fn short_file_reports_offset() {
        let mut b = bytes_of(&NoiseTrace::new(vec![0.25; 100], 1.0));
        b.truncate(b.len() - 4);
        match read_trace_from(b.as_slice()) {
            Err(FormatError::TruncatedFile { offset }) => assert_eq!(offset, 24 + 99 * 4),
            other => panic!("{other:?}"),
        }
        b.truncate(26);
        assert!(matches!(
            read_trace_from(b.as_slice()),
            Err(FormatError::TruncatedFile { offset: 26 })
        ));
        b.truncate(10);
        assert!(matches!(
            read_trace_from(b.as_slice()),
            Err(FormatError::TruncatedFile { offset: 10 })
        ));
    }

    #[test]
    fn header_checks() {
        let b = bytes_of(&NoiseTrace::new(vec![0.0], 1.0));
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(
            read_trace_from(v.as_slice()),
            Err(FormatError::VersionUnsupported(2))
        ));
        let mut v = b.clone();
        v[8..16].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(matches!(
            read_trace_from(v.as_slice()),
            Err(FormatError::InvalidHeader(_))
        ));
        let mut v = b;
        v.push(0);
        assert!(matches!(
            read_trace_from(v.as_slice()),
            Err(FormatError::TrailingData { offset: 28 })
        ));
    }

    #[test]
    fn streaming_chunks() {
        let t = NoiseTrace::new((0..1000).map(|i| i as f32).collect(), 1.0);
        let b = bytes_of(&t);
        let mut r = TraceReader::new(b.as_slice()).unwrap();
        assert_eq!(r.header().sample_count, 1000);
        let mut out = Vec::new();
        let mut sizes = Vec::new();
        loop {
            let n = r.read_chunk(&mut out, 300).unwrap();
            if n == 0 {
                break;
            }
            sizes.push(n);
        }
        assert_eq!(sizes, vec![300, 300, 300, 100]);
        assert_eq!(out, t.samples());
    }

    fn all_models() -> Vec<ModelParams> {
        vec![
            ModelParams::Chain(sample_config()),
            ModelParams::BgMemory(BgMemoryParams {
                background_stay_prob: 0.9999,
                impulse_stay_prob: 0.95,
                background_variance: 1.0,
                impulse_variance: 30.0,
                sampling_rate_hz: 5e9,
            }),
            ModelParams::ClassA(ClassAParams::new(0.1, 0.01, 2.5, 5e9)),
        ]
    }

    #[test]
    fn params_round_trip_byte_identical() {
        for model in all_models() {
            let file = ParamsFile::new(model);
            let text = file.to_toml().unwrap();
            let back = ParamsFile::from_toml(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn unknown_kind() {
        let text = ParamsFile::new(all_models().remove(2)).to_toml().unwrap();
        let text = text.replace("kind = \"class-a\"", "kind = \"class-b\"");
        assert!(
            matches!(ParamsFile::from_toml(&text), Err(FormatError::UnknownModelKind(k)) if k == "class-b")
        );
    }

    #[test]
    fn invalid_model_rejected() {
        let mut c = sample_config();
        c.stay_prob = 1.5;
        let text = ParamsFile::new(ModelParams::Chain(c)).to_toml().unwrap();
        assert!(matches!(
            ParamsFile::from_toml(&text),
            Err(FormatError::InvalidModel(_))
        ));
        assert!(matches!(
            ParamsFile::from_toml("kind = 3"),
            Err(FormatError::Params(_))
        ));
    }

    #[test]
    fn generation_dispatch_is_deterministic() {
        for model in all_models() {
            let a = model.generate(10_000, 3).unwrap();
            assert_eq!(a, model.generate(10_000, 3).unwrap());
            assert_eq!(a.len(), 10_000);
            assert_eq!(a.sampling_rate_hz(), model.sampling_rate_hz());
        }
    }
}
