//! File formats for event streams, coincidence pairs and binned matrices.
//!
//! Every file begins with a comment line
//! `# ionhbt scene_hash=<hex> seed=<n>`. Event streams come in a binary form
//! (13-byte little-endian records `det u8, x u16, y u16, t_ps u64` after the
//! comment line) and a CSV form with header `det,x,y,t_ps`. Pair files are
//! CSV `x1,y1,t1_ps,x2,y2,t2_ps` (start on detector 0, stop on detector 1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::BinnedG2;
use crate::model::Pixel;
use crate::sim::{CoincidencePair, DetectorEvent};

const RECORD_LEN: usize = 13;

/// Provenance carried by the first line of every file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHeader {
    pub scene_hash: String,
    pub seed: u64,
}

impl FileHeader {
    pub fn new(scene_hash: impl Into<String>, seed: u64) -> Self {
        Self { scene_hash: scene_hash.into(), seed }
    }

    pub fn line(&self) -> String {
        format!("# ionhbt scene_hash={} seed={}", self.scene_hash, self.seed)
    }

    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.trim().strip_prefix('#')?.trim().strip_prefix("ionhbt")?;
        let mut hash = None;
        let mut seed = None;
        for token in rest.split_whitespace() {
            match token.split_once('=') {
                Some(("scene_hash", v)) => hash = Some(v.to_string()),
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self { scene_hash: hash?, seed: seed? })
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => parse_err(line, format!("{kind:?}")),
    }
}

/// Splits off the leading `# ionhbt ...` line, if any.
fn split_header(bytes: &[u8]) -> (Option<FileHeader>, &[u8]) {
    if bytes.first() == Some(&b'#') {
        let end = bytes.iter().position(|&b| b == b'\n').map_or(bytes.len(), |p| p + 1);
        let line = String::from_utf8_lossy(&bytes[..end]);
        (FileHeader::parse(&line), &bytes[end..])
    } else {
        (None, bytes)
    }
}

fn pixel(x: u16, y: u16) -> Pixel {
    Pixel::new(x, y)
}

pub fn write_stream_binary<W: Write>(mut w: W, header: &FileHeader, events: &[DetectorEvent]) -> Result<()> {
    writeln!(w, "{}", header.line())?;
    let mut buf = Vec::with_capacity(events.len() * RECORD_LEN);
    for e in events {
        buf.push(e.detector_id);
        buf.extend_from_slice(&e.pixel.x.to_le_bytes());
        buf.extend_from_slice(&e.pixel.y.to_le_bytes());
        buf.extend_from_slice(&e.timestamp.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_stream_binary<R: Read>(mut r: R) -> Result<(Option<FileHeader>, Vec<DetectorEvent>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (header, body) = split_header(&bytes);
    if body.len() % RECORD_LEN != 0 {
        return Err(parse_err(body.len() / RECORD_LEN + 1, format!("truncated record: {} trailing bytes", body.len() % RECORD_LEN)));
    }
    let events = body
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let detector_id = rec[0];
            if detector_id > 1 {
                return Err(parse_err(i + 1, format!("detector id {detector_id}")));
            }
            let x = u16::from_le_bytes([rec[1], rec[2]]);
            let y = u16::from_le_bytes([rec[3], rec[4]]);
            let timestamp = u64::from_le_bytes(rec[5..13].try_into().expect("8 bytes"));
            Ok(DetectorEvent { detector_id, pixel: pixel(x, y), timestamp })
        })
        .collect::<Result<_>>()?;
    Ok((header, events))
}

#[derive(Serialize, Deserialize)]
struct EventRow {
    det: u8,
    x: u16,
    y: u16,
    t_ps: u64,
}

#[derive(Serialize, Deserialize)]
struct PairRow {
    x1: u16,
    y1: u16,
    t1_ps: u64,
    x2: u16,
    y2: u16,
    t2_ps: u64,
}

fn csv_reader(body: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(body)
}

pub fn write_stream_csv<W: Write>(mut w: W, header: &FileHeader, events: &[DetectorEvent]) -> Result<()> {
    writeln!(w, "{}", header.line())?;
    let mut out = csv::Writer::from_writer(w);
    for e in events {
        out.serialize(EventRow { det: e.detector_id, x: e.pixel.x, y: e.pixel.y, t_ps: e.timestamp })
            .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_stream_csv<R: Read>(mut r: R) -> Result<(Option<FileHeader>, Vec<DetectorEvent>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (header, body) = split_header(&bytes);
    let mut reader = csv_reader(body);
    let mut events = Vec::new();
    for row in reader.deserialize::<EventRow>() {
        let row = row.map_err(csv_err)?;
        if row.det > 1 {
            return Err(parse_err(events.len() + 2, format!("detector id {}", row.det)));
        }
        events.push(DetectorEvent { detector_id: row.det, pixel: pixel(row.x, row.y), timestamp: row.t_ps });
    }
    Ok((header, events))
}

pub fn write_pairs_csv<W: Write>(mut w: W, header: &FileHeader, pairs: &[CoincidencePair]) -> Result<()> {
    writeln!(w, "{}", header.line())?;
    let mut out = csv::Writer::from_writer(w);
    for p in pairs {
        out.serialize(PairRow {
            x1: p.start.pixel.x,
            y1: p.start.pixel.y,
            t1_ps: p.start.timestamp,
            x2: p.stop.pixel.x,
            y2: p.stop.pixel.y,
            t2_ps: p.stop.timestamp,
        })
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pairs_csv<R: Read>(mut r: R) -> Result<(Option<FileHeader>, Vec<CoincidencePair>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let (header, body) = split_header(&bytes);
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(parse_err(1, "no pair records"));
    }
    let mut reader = csv_reader(body);
    let pairs = reader
        .deserialize::<PairRow>()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(CoincidencePair::new(
                DetectorEvent { detector_id: 0, pixel: pixel(row.x1, row.y1), timestamp: row.t1_ps },
                DetectorEvent { detector_id: 1, pixel: pixel(row.x2, row.y2), timestamp: row.t2_ps },
            ))
        })
        .collect::<Result<_>>()?;
    Ok((header, pairs))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

/// Matrix as `n_bins` CSV rows of integers, preceded by `# key=value` lines.
pub fn write_binned_csv<W: Write>(mut w: W, header: &FileHeader, g2: &BinnedG2) -> Result<()> {
    writeln!(w, "{}", header.line())?;
    writeln!(w, "# phi_deg={} total_pairs={} n_bins={}", g2.rotation_angle, g2.total_pairs, g2.n_bins)?;
    writeln!(w, "# start_edges={}", join(&g2.start_edges))?;
    writeln!(w, "# stop_edges={}", join(&g2.stop_edges))?;
    writeln!(w, "# start_envelope={}", join(&g2.start_envelope))?;
    writeln!(w, "# stop_envelope={}", join(&g2.stop_envelope))?;
    for i in 0..g2.n_bins {
        let row: Vec<String> = g2.row(i).iter().map(u64::to_string).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binned_csv<R: Read>(r: R) -> Result<BinnedG2> {
    let mut text = String::new();
    BufReader::new(r).read_to_string(&mut text)?;
    let mut meta = std::collections::HashMap::new();
    let mut counts = Vec::new();
    let mut rows = 0usize;
    let mut width = None;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if comment.starts_with("start_") || comment.starts_with("stop_") {
                // Vector-valued: `key=v0 v1 ...`.
                if let Some((k, v)) = comment.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            } else if !comment.starts_with("ionhbt") {
                for (k, v) in comment.split_whitespace().filter_map(|t| t.split_once('=')) {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row: Vec<u64> = line
            .split(',')
            .map(|c| c.trim().parse::<u64>().map_err(|e| parse_err(ln + 1, format!("`{c}`: {e}"))))
            .collect::<Result<_>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(parse_err(ln + 1, "ragged matrix row"));
        }
        counts.extend(row);
        rows += 1;
    }
    let floats = |key: &str| -> Result<Vec<f64>> {
        let v = meta.get(key).ok_or_else(|| parse_err(0, format!("missing `{key}` header")))?;
        v.split_whitespace()
            .map(|x| x.parse::<f64>().map_err(|e| parse_err(0, format!("{key}: {e}"))))
            .collect()
    };
    let scalar = |key: &str| -> Result<f64> {
        meta.get(key)
            .ok_or_else(|| parse_err(0, format!("missing `{key}` header")))?
            .parse::<f64>()
            .map_err(|e| parse_err(0, format!("{key}: {e}")))
    };
    let n = rows;
    if width != Some(n) || n < 8 {
        return Err(parse_err(0, format!("expected a square matrix with n >= 8, got {n} rows")));
    }
    let g2 = BinnedG2 {
        n_bins: n,
        total_pairs: counts.iter().sum(),
        counts,
        start_edges: floats("start_edges")?,
        stop_edges: floats("stop_edges")?,
        rotation_angle: scalar("phi_deg")?,
        start_envelope: floats("start_envelope")?,
        stop_envelope: floats("stop_envelope")?,
    };
    if g2.start_edges.len() != n + 1 || g2.stop_edges.len() != n + 1 {
        return Err(parse_err(0, "bin edge count does not match matrix size"));
    }
    if g2.start_envelope.len() != n || g2.stop_envelope.len() != n {
        return Err(parse_err(0, "envelope length does not match matrix size"));
    }
    if scalar("total_pairs")? as u64 != g2.total_pairs {
        return Err(parse_err(0, "total_pairs header disagrees with matrix sum"));
    }
    Ok(g2)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes an event stream, CSV if the extension is `.csv`, binary otherwise.
pub fn save_stream(path: &Path, header: &FileHeader, events: &[DetectorEvent]) -> Result<()> {
    let w = BufWriter::new(File::create(path)?);
    if is_csv(path) {
        write_stream_csv(w, header, events)
    } else {
        write_stream_binary(w, header, events)
    }
}

pub fn load_stream(path: &Path) -> Result<(Option<FileHeader>, Vec<DetectorEvent>)> {
    let r = BufReader::new(File::open(path)?);
    if is_csv(path) {
        read_stream_csv(r)
    } else {
        read_stream_binary(r)
    }
}

pub fn save_pairs(path: &Path, header: &FileHeader, pairs: &[CoincidencePair]) -> Result<()> {
    write_pairs_csv(BufWriter::new(File::create(path)?), header, pairs)
}

pub fn load_pairs(path: &Path) -> Result<(Option<FileHeader>, Vec<CoincidencePair>)> {
    read_pairs_csv(BufReader::new(File::open(path)?))
}
