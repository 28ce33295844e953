//! Readers and writers for Kaldi-style binary archives and the text formats
//! around them: trials, scores, RTTM, VAD lab files and utt2spk.
//!
//! Binary archive entry layout (float32, little-endian):
//!
//! ```text
//! <key> 0x20 0x00 'B' "FV " 0x04 <i32 dim> <dim x f32>
//! <key> 0x20 0x00 'B' "FM " 0x04 <i32 rows> 0x04 <i32 cols> <rows*cols x f32, row-major>
//! ```
//!
//! An scp line `key path:offset` points at the `0x00` byte right after the
//! key and its separator.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::types::{
    is_token, Diarization, EmbeddingSet, Label, ScoreList, ScoredTrial, Segment, SpeakerMap, Trial,
    TrialList,
};

const BINARY_MARKER: &[u8; 2] = b"\0B";
const VECTOR_TOKEN: &[u8; 3] = b"FV ";
const MATRIX_TOKEN: &[u8; 3] = b"FM ";
const INT32_SIZE: u8 = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Vector(Vec<f32>),
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArkEntry {
    pub key: String,
    pub payload: Payload,
}

/// One line of an scp index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScpEntry {
    pub key: String,
    pub path: PathBuf,
    pub offset: u64,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// File offset of `bytes[0]`, so errors report absolute positions.
    base: u64,
}

impl<'a> Cursor<'a> {
    fn offset(&self) -> u64 {
        self.base + self.pos as u64
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.offset(),
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("unexpected end of data reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn expect(&mut self, token: &[u8], what: &str) -> Result<()> {
        let at = self.offset();
        let got = self.take(token.len(), what)?;
        if got != token {
            return Err(Error::Format {
                offset: at,
                msg: format!("expected {what} {token:?}, found {got:?}"),
            });
        }
        Ok(())
    }

    fn size(&mut self, what: &str) -> Result<usize> {
        let at = self.offset();
        let marker = self.take(1, what)?[0];
        if marker != INT32_SIZE {
            return Err(Error::Format {
                offset: at,
                msg: format!("expected int32 size marker 0x04 before {what}, found {marker:#04x}"),
            });
        }
        let at = self.offset();
        let raw = self.take(4, what)?;
        let v = i32::from_le_bytes(raw.try_into().unwrap());
        if v <= 0 {
            return Err(Error::Format {
                offset: at,
                msg: format!("{what} must be positive, found {v}"),
            });
        }
        Ok(v as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4, "float32 data")?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    /// Parses the binary header and payload that follow `key `.
    fn payload(&mut self) -> Result<Payload> {
        self.expect(BINARY_MARKER, "binary marker")?;
        let at = self.offset();
        let token = self.take(3, "type token")?;
        if token == VECTOR_TOKEN {
            let dim = self.size("vector dimension")?;
            Ok(Payload::Vector(self.floats(dim)?))
        } else if token == MATRIX_TOKEN {
            let rows = self.size("matrix rows")?;
            let cols = self.size("matrix cols")?;
            let data = self.floats(rows * cols)?;
            Ok(Payload::Matrix { rows, cols, data })
        } else {
            Err(Error::Format {
                offset: at,
                msg: format!("unsupported type token {token:?} (only FV/FM float32)"),
            })
        }
    }

    fn key(&mut self) -> Result<String> {
        let start = self.pos;
        let rel = self.bytes[start..]
            .iter()
            .position(|&b| b == b' ')
            .ok_or_else(|| self.err("unterminated key"))?;
        let raw = &self.bytes[start..start + rel];
        let key = std::str::from_utf8(raw)
            .ok()
            .filter(|k| is_token(k))
            .ok_or_else(|| self.err(format!("invalid key bytes {raw:?}")))?
            .to_owned();
        self.pos = start + rel + 1;
        Ok(key)
    }
}

/// Parses a complete binary archive held in memory.
pub fn parse_ark(bytes: &[u8]) -> Result<Vec<ArkEntry>> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        base: 0,
    };
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let key = cur.key()?;
        let payload = cur.payload()?;
        out.push(ArkEntry { key, payload });
    }
    Ok(out)
}

/// Reads every entry of a binary archive, in file order.
pub fn read_ark_entries(path: impl AsRef<Path>) -> Result<Vec<ArkEntry>> {
    parse_ark(&read_file(path.as_ref())?)
}

fn entries_to_set(entries: impl IntoIterator<Item = ArkEntry>) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::new();
    for e in entries {
        match e.payload {
            Payload::Vector(v) => set.insert(e.key, v)?,
            Payload::Matrix { rows, cols, .. } => {
                return Err(Error::Dimension {
                    key: e.key,
                    expected: set.dim(),
                    found: rows * cols,
                })
            }
        }
    }
    Ok(set)
}

/// Reads a vector archive as an [`EmbeddingSet`]. Every entry must be a
/// vector of the same dimension and keys must be unique.
pub fn read_ark(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    entries_to_set(read_ark_entries(path)?)
}

fn encode_payload(payload: &Payload, buf: &mut Vec<u8>) {
    buf.extend_from_slice(BINARY_MARKER);
    let data = match payload {
        Payload::Vector(v) => {
            buf.extend_from_slice(VECTOR_TOKEN);
            buf.push(INT32_SIZE);
            buf.extend_from_slice(&(v.len() as i32).to_le_bytes());
            v
        }
        Payload::Matrix { rows, cols, data } => {
            buf.extend_from_slice(MATRIX_TOKEN);
            buf.push(INT32_SIZE);
            buf.extend_from_slice(&(*rows as i32).to_le_bytes());
            buf.push(INT32_SIZE);
            buf.extend_from_slice(&(*cols as i32).to_le_bytes());
            data
        }
    };
    for x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Writes archive entries and, optionally, the matching scp index. The scp
/// refers to the archive by `ark_path` exactly as passed in.
pub fn write_ark_entries<'a>(
    entries: impl IntoIterator<Item = (&'a str, &'a Payload)>,
    ark_path: impl AsRef<Path>,
    scp_path: Option<&Path>,
) -> Result<()> {
    let ark_path = ark_path.as_ref();
    let file = File::create(ark_path).map_err(|e| Error::io(ark_path, e))?;
    let mut ark = BufWriter::new(file);
    let mut scp = String::new();
    let mut offset = 0u64;
    let mut buf = Vec::new();
    for (key, payload) in entries {
        if !is_token(key) {
            return Err(Error::InvalidArgument(format!("invalid key token {key:?}")));
        }
        buf.clear();
        buf.extend_from_slice(key.as_bytes());
        buf.push(b' ');
        let header = offset + buf.len() as u64;
        encode_payload(payload, &mut buf);
        ark.write_all(&buf).map_err(|e| Error::io(ark_path, e))?;
        offset += buf.len() as u64;
        scp.push_str(&format!("{key} {}:{header}\n", ark_path.display()));
    }
    ark.flush().map_err(|e| Error::io(ark_path, e))?;
    if let Some(scp_path) = scp_path {
        write_text(scp_path, &scp)?;
    }
    Ok(())
}

/// Writes an [`EmbeddingSet`] as a vector archive.
pub fn write_ark(
    set: &EmbeddingSet,
    ark_path: impl AsRef<Path>,
    scp_path: Option<&Path>,
) -> Result<()> {
    let payloads: Vec<(&str, Payload)> = set
        .iter()
        .map(|(k, v)| (k, Payload::Vector(v.to_vec())))
        .collect();
    write_ark_entries(payloads.iter().map(|(k, p)| (*k, p)), ark_path, scp_path)
}

pub fn read_scp(path: impl AsRef<Path>) -> Result<Vec<ScpEntry>> {
    let text = read_text(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_owned(),
        };
        let (key, rest) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err("expected 'key path:offset'"))?;
        let (file, offset) = rest
            .trim()
            .rsplit_once(':')
            .ok_or_else(|| parse_err("missing ':offset'"))?;
        let offset = offset
            .parse::<u64>()
            .map_err(|_| parse_err("offset is not a nonnegative integer"))?;
        out.push(ScpEntry {
            key: key.to_owned(),
            path: PathBuf::from(file),
            offset,
        });
    }
    Ok(out)
}

/// Resolves an archive path named in an scp file: as given (relative to the
/// working directory, the Kaldi convention), else relative to the scp's own
/// directory.
fn resolve_ark(scp_path: &Path, ark: &Path) -> PathBuf {
    if ark.is_absolute() || ark.exists() {
        return ark.to_path_buf();
    }
    match scp_path.parent() {
        Some(dir) if dir.join(ark).exists() => dir.join(ark),
        _ => ark.to_path_buf(),
    }
}

/// Random-access reader over archive files referenced from an scp.
#[derive(Default)]
pub struct ArkRandomReader {
    files: HashMap<PathBuf, File>,
}

impl ArkRandomReader {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads the payload whose binary header starts at `offset` in `path`.
    pub fn read_at(&mut self, path: &Path, offset: u64) -> Result<Payload> {
        if !self.files.contains_key(path) {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            self.files.insert(path.to_path_buf(), f);
        }
        let f = self.files.get_mut(path).unwrap();
        let len = f.metadata().map_err(|e| Error::io(path, e))?.len();
        if offset >= len {
            return Err(Error::Format {
                offset,
                msg: format!("offset beyond end of {}", path.display()),
            });
        }
        f.seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(path, e))?;
        // Header first, then exactly the payload bytes it announces.
        let mut head = vec![0u8; ((len - offset) as usize).min(20)];
        f.read_exact(&mut head).map_err(|e| Error::io(path, e))?;
        let needed = {
            let mut cur = Cursor {
                bytes: &head,
                pos: 0,
                base: offset,
            };
            cur.expect(BINARY_MARKER, "binary marker")?;
            let tok = cur.take(3, "type token")?;
            let n = if tok == VECTOR_TOKEN {
                cur.size("vector dimension")?
            } else if tok == MATRIX_TOKEN {
                cur.size("matrix rows")? * cur.size("matrix cols")?
            } else {
                return Err(Error::Format {
                    offset: offset + 2,
                    msg: format!("unsupported type token {tok:?} (only FV/FM float32)"),
                });
            };
            cur.pos + n * 4
        };
        let mut bytes = Vec::with_capacity(needed);
        f.seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(path, e))?;
        Read::by_ref(f)
            .take(needed as u64)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        Cursor {
            bytes: &bytes,
            pos: 0,
            base: offset,
        }
        .payload()
    }
}

/// Loads every entry listed in an scp through random access.
pub fn read_scp_entries(path: impl AsRef<Path>) -> Result<Vec<ArkEntry>> {
    let path = path.as_ref();
    let mut reader = ArkRandomReader::new();
    read_scp(path)?
        .into_iter()
        .map(|e| {
            let ark = resolve_ark(path, &e.path);
            Ok(ArkEntry {
                payload: reader.read_at(&ark, e.offset)?,
                key: e.key,
            })
        })
        .collect()
}

pub fn read_scp_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    entries_to_set(read_scp_entries(path)?)
}

/// Loads embeddings from an `.scp` index or directly from an archive.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "scp") {
        read_scp_embeddings(path)
    } else {
        read_ark(path)
    }
}

fn parse_label(s: &str) -> Option<Label> {
    match s {
        "target" | "1" => Some(Label::Target),
        "nontarget" | "0" => Some(Label::Nontarget),
        _ => None,
    }
}

pub fn parse_trials(text: &str) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let label = match fields.len() {
            0 => continue,
            2 => Label::Unknown,
            3 => parse_label(fields[2])
                .ok_or_else(|| err(format!("invalid trial label '{}'", fields[2])))?,
            n => return Err(err(format!("expected 2 or 3 fields, found {n}"))),
        };
        trials.push(Trial::new(fields[0], fields[1], label));
    }
    Ok(TrialList::new(trials))
}

pub fn read_trials(path: impl AsRef<Path>) -> Result<TrialList> {
    parse_trials(&read_text(path.as_ref())?)
}

pub fn format_trials(trials: &TrialList) -> String {
    let mut out = String::new();
    for t in &trials.trials {
        match t.label {
            Label::Target => out.push_str(&format!("{} {} target\n", t.enroll, t.test)),
            Label::Nontarget => out.push_str(&format!("{} {} nontarget\n", t.enroll, t.test)),
            Label::Unknown => out.push_str(&format!("{} {}\n", t.enroll, t.test)),
        }
    }
    out
}

pub fn write_trials(trials: &TrialList, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_trials(trials))
}

pub fn parse_scores(text: &str) -> Result<ScoreList> {
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let score: f64 = fields[2]
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| err(format!("invalid score '{}'", fields[2])))?;
        scores.push(ScoredTrial {
            enroll: fields[0].to_owned(),
            test: fields[1].to_owned(),
            score,
        });
    }
    Ok(ScoreList { scores })
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<ScoreList> {
    parse_scores(&read_text(path.as_ref())?)
}

pub fn format_scores(scores: &ScoreList) -> String {
    let mut out = String::new();
    for s in &scores.scores {
        out.push_str(&format!("{} {} {:.6}\n", s.enroll, s.test, s.score));
    }
    out
}

pub fn write_scores(scores: &ScoreList, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_scores(scores))
}

fn parse_seconds(s: &str, line: usize, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            line,
            msg: format!("invalid {what} '{s}'"),
        })
}

/// Parses RTTM text. Only `SPEAKER` records are used; everything else,
/// including `;` comments, is skipped. Zero-duration records are dropped.
pub fn parse_rttm(text: &str) -> Result<Diarization> {
    let mut d = Diarization::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.first() != Some(&"SPEAKER") {
            continue;
        }
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "SPEAKER record needs at least 8 fields, found {}",
                    fields.len()
                ),
            });
        }
        let start = parse_seconds(fields[3], line_no, "start")?;
        let dur = parse_seconds(fields[4], line_no, "duration")?;
        if dur < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("negative duration {dur}"),
            });
        }
        if start < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("negative start {start}"),
            });
        }
        if dur == 0.0 {
            continue;
        }
        d.push(Segment {
            recording_id: fields[1].to_owned(),
            start,
            end: start + dur,
            speaker: fields[7].to_owned(),
        });
    }
    Ok(d)
}

pub fn read_rttm(path: impl AsRef<Path>) -> Result<Diarization> {
    parse_rttm(&read_text(path.as_ref())?)
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Formats RTTM with millisecond resolution. The duration is taken between
/// the rounded start and end so that neither endpoint drifts by more than
/// half a millisecond.
pub fn format_rttm(d: &Diarization) -> String {
    let mut out = String::new();
    for s in d.segments() {
        let start = round_ms(s.start);
        let dur = round_ms(s.end) - start;
        let spk = if s.speaker.is_empty() {
            "<NA>"
        } else {
            &s.speaker
        };
        out.push_str(&format!(
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>\n",
            s.recording_id, start, dur, spk
        ));
    }
    out
}

pub fn write_rttm(d: &Diarization, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &format_rttm(d))
}

/// Parses VAD lab lines `start end [label]` into speakerless segments,
/// sorted by start time.
pub fn parse_lab(text: &str, recording_id: &str) -> Result<Vec<Segment>> {
    let mut segs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: "expected 'start end [label]'".into(),
            });
        }
        let start = parse_seconds(fields[0], line_no, "start")?;
        let end = parse_seconds(fields[1], line_no, "end")?;
        if end <= start || start < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("segment [{start}, {end}] must satisfy 0 <= start < end"),
            });
        }
        segs.push(Segment {
            recording_id: recording_id.to_owned(),
            start,
            end,
            speaker: String::new(),
        });
    }
    segs.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    Ok(segs)
}

pub fn read_lab(path: impl AsRef<Path>, recording_id: &str) -> Result<Vec<Segment>> {
    parse_lab(&read_text(path.as_ref())?, recording_id)
}

pub fn parse_utt2spk(text: &str) -> Result<SpeakerMap> {
    let mut map = SpeakerMap::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        match fields.len() {
            0 => continue,
            2 => map.insert(fields[0], fields[1])?,
            n => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected 'utt spk', found {n} fields"),
                })
            }
        }
    }
    Ok(map)
}

pub fn read_utt2spk(path: impl AsRef<Path>) -> Result<SpeakerMap> {
    parse_utt2spk(&read_text(path.as_ref())?)
}

pub fn write_utt2spk(map: &SpeakerMap, path: impl AsRef<Path>) -> Result<()> {
    let text: String = map.iter().map(|(u, s)| format!("{u} {s}\n")).collect();
    write_text(path.as_ref(), &text)
}
