//! File formats: I/Q captures, real matrices, PCA models, PGM previews and
//! the CSV tables emitted by the pipeline.
//!
//! All binary formats are little-endian.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ShapeBuilder};
use num_complex::Complex32;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ethogram::{ClassId, DecodedTimeline, Node, ReconcileReport};
use crate::features::{ConfusionMatrix, FeatureModel, Snippet};
use crate::pbc::{MotionSegment, SegmentSource};
use crate::radon::{MotionKind, Timeline};
use crate::rdmap::{ImageKind, RadarImage};
use crate::sim::{BasebandMatrix, Direction, RadarParams};

const IQF_MAGIC: &[u8; 4] = b"IQF1";
const RDM_MAGIC: &[u8; 4] = b"RDM1";
const PCA_MAGIC: &[u8; 4] = b"PCA2";

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut b = [0u8; K];
        self.inner.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.bytes::<4>()?;
        if &got != want {
            return Err(Error::Format(format!(
                "expected magic {:?}, found {:?}",
                String::from_utf8_lossy(want),
                String::from_utf8_lossy(&got)
            )));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut raw = vec![0u8; n * 4];
        self.inner.read_exact(&mut raw).map_err(truncated)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let v = self.f32s(rows * cols)?;
        Ok(
            Array2::from_shape_vec((rows, cols), v.into_iter().map(f64::from).collect())
                .expect("length matches"),
        )
    }

    fn end(&mut self) -> Result<()> {
        let mut extra = [0u8; 1];
        match self.inner.read(&mut extra)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn put_f32s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format(format!("{what} {n} does not fit in u32")))
}

/// Writes an I/Q capture: header then interleaved (I, Q) f32 pairs, PRI by PRI.
pub fn write_iqf_to<W: Write>(mut w: W, bb: &BasebandMatrix) -> Result<()> {
    bb.validate()?;
    let p = &bb.params;
    w.write_all(IQF_MAGIC)?;
    w.write_all(&dim_u32(p.n_fast, "N")?.to_le_bytes())?;
    w.write_all(&dim_u32(p.m_slow, "M")?.to_le_bytes())?;
    w.write_all(&p.fc.to_le_bytes())?;
    w.write_all(&p.bandwidth.to_le_bytes())?;
    w.write_all(&p.pri.to_le_bytes())?;
    let mut buf = Vec::with_capacity(p.n_fast * 8);
    for col in bb.data.columns() {
        buf.clear();
        for z in col {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an I/Q capture. Parameters not stored in the header take their defaults.
pub fn read_iqf_from<R: Read>(r: R) -> Result<BasebandMatrix> {
    let mut r = Reader { inner: r };
    r.magic(IQF_MAGIC)?;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let params = RadarParams {
        fc: r.f64()?,
        bandwidth: r.f64()?,
        pri: r.f64()?,
        n_fast: n,
        m_slow: m,
        ..RadarParams::default()
    };
    params
        .validate()
        .map_err(|e| Error::Format(format!("IQF1 header: {e}")))?;
    let flat = r.f32s(2 * n * m)?;
    r.end()?;
    let samples: Vec<Complex32> = flat
        .chunks_exact(2)
        .map(|c| Complex32::new(c[0], c[1]))
        .collect();
    let data = Array2::from_shape_vec((n, m).f(), samples).expect("length matches");
    Ok(BasebandMatrix { data, params })
}

pub fn write_iqf(path: &Path, bb: &BasebandMatrix) -> Result<()> {
    write_iqf_to(BufWriter::new(File::create(path)?), bb)
}

pub fn read_iqf(path: &Path) -> Result<BasebandMatrix> {
    read_iqf_from(BufReader::new(File::open(path)?))
}

pub fn write_rdm_to<W: Write>(mut w: W, img: &RadarImage) -> Result<()> {
    w.write_all(RDM_MAGIC)?;
    w.write_all(&dim_u32(img.rows(), "rows")?.to_le_bytes())?;
    w.write_all(&dim_u32(img.cols(), "cols")?.to_le_bytes())?;
    w.write_all(&[img.kind.code()])?;
    w.write_all(&img.row_step.to_le_bytes())?;
    w.write_all(&img.col_step.to_le_bytes())?;
    put_f32s(&mut w, img.pixels.iter().copied())?;
    w.flush()?;
    Ok(())
}

pub fn read_rdm_from<R: Read>(r: R) -> Result<RadarImage> {
    let mut r = Reader { inner: r };
    r.magic(RDM_MAGIC)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let kind = ImageKind::from_code(r.u8()?)?;
    let row_step = r.f64()?;
    let col_step = r.f64()?;
    let pixels = r.matrix(rows, cols)?;
    r.end()?;
    RadarImage::new(pixels, row_step, col_step, kind)
}

pub fn write_rdm(path: &Path, img: &RadarImage) -> Result<()> {
    write_rdm_to(BufWriter::new(File::create(path)?), img)
}

pub fn read_rdm(path: &Path) -> Result<RadarImage> {
    read_rdm_from(BufReader::new(File::open(path)?))
}

/// Serialized 2-D PCA model.
///
/// Layout after the magic: u32 η, d_MD, d_RM, train count; means (η×η each),
/// Φ_MD (η×d_MD), Φ_RM (η×d_RM), eigenvalues (η each), then per training
/// vector its f32 entries and a u8 class number. Values are f32.
pub fn write_model_to<W: Write>(mut w: W, m: &FeatureModel) -> Result<()> {
    w.write_all(PCA_MAGIC)?;
    for n in [m.eta, m.d_md, m.d_rm, m.train_set.len()] {
        w.write_all(&dim_u32(n, "model size")?.to_le_bytes())?;
    }
    for a in [&m.mean_md, &m.mean_rm, &m.phi_md, &m.phi_rm] {
        put_f32s(&mut w, a.iter().copied())?;
    }
    put_f32s(&mut w, m.eigvals_md.iter().copied())?;
    put_f32s(&mut w, m.eigvals_rm.iter().copied())?;
    for (v, label) in &m.train_set {
        put_f32s(&mut w, v.iter().copied())?;
        w.write_all(&[label.number()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_model_from<R: Read>(r: R) -> Result<FeatureModel> {
    let mut r = Reader { inner: r };
    r.magic(PCA_MAGIC)?;
    let eta = r.u32()? as usize;
    let d_md = r.u32()? as usize;
    let d_rm = r.u32()? as usize;
    let count = r.u32()? as usize;
    if d_md > eta || d_rm > eta || d_md == 0 || d_rm == 0 {
        return Err(Error::Format(format!(
            "PCA2 dims {d_md}/{d_rm} invalid for eta {eta}"
        )));
    }
    let mean_md = r.matrix(eta, eta)?;
    let mean_rm = r.matrix(eta, eta)?;
    let phi_md = r.matrix(eta, d_md)?;
    let phi_rm = r.matrix(eta, d_rm)?;
    let eigvals_md = r.f32s(eta)?.into_iter().map(f64::from).collect();
    let eigvals_rm = r.f32s(eta)?.into_iter().map(f64::from).collect();
    let len = eta * (d_md + d_rm);
    let mut train_set = Vec::with_capacity(count);
    for _ in 0..count {
        let v = r.f32s(len)?.into_iter().map(f64::from).collect();
        let label = ClassId::from_number(r.u8()?)?;
        train_set.push((v, label));
    }
    r.end()?;
    Ok(FeatureModel {
        eta,
        d_md,
        d_rm,
        mean_md,
        mean_rm,
        phi_md,
        phi_rm,
        eigvals_md,
        eigvals_rm,
        train_set,
    })
}

pub fn write_model(path: &Path, m: &FeatureModel) -> Result<()> {
    write_model_to(BufWriter::new(File::create(path)?), m)
}

pub fn read_model(path: &Path) -> Result<FeatureModel> {
    read_model_from(BufReader::new(File::open(path)?))
}

/// Sidecar path holding the PGM scaling, `<file>.scale`.
pub fn scale_path(pgm: &Path) -> PathBuf {
    let mut s = pgm.as_os_str().to_owned();
    s.push(".scale");
    PathBuf::from(s)
}

/// Min-max scaling to 0..=255. A constant image maps to all zeros.
pub fn to_gray(pixels: &Array2<f64>) -> (Array2<u8>, f64, f64) {
    let min = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if pixels.is_empty() {
        return (Array2::zeros(pixels.dim()), 0.0, 0.0);
    }
    let span = max - min;
    let gray = pixels.mapv(|v| {
        if span > 0.0 {
            ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    });
    (gray, min, max)
}

/// Writes a binary 8-bit PGM plus a `.scale` sidecar with the min and max.
pub fn write_pgm(path: &Path, pixels: &Array2<f64>) -> Result<()> {
    let (gray, min, max) = to_gray(pixels);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", gray.ncols(), gray.nrows())?;
    w.write_all(&gray.iter().copied().collect::<Vec<u8>>())?;
    w.flush()?;
    fs::write(scale_path(path), format!("min {min:e}\nmax {max:e}\n"))?;
    Ok(())
}

fn pgm_token<R: Read>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte).map_err(truncated)?;
        let c = byte[0] as char;
        if c == '#' {
            while byte[0] != b'\n' {
                r.read_exact(&mut byte).map_err(truncated)?;
            }
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(c);
    }
}

/// Reads a binary 8-bit PGM.
pub fn read_pgm(path: &Path) -> Result<Array2<u8>> {
    let mut r = BufReader::new(File::open(path)?);
    if pgm_token(&mut r)? != "P5" {
        return Err(Error::Format("not a binary PGM".into()));
    }
    let parse = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field `{s}`")))
    };
    let cols = parse(pgm_token(&mut r)?)?;
    let rows = parse(pgm_token(&mut r)?)?;
    if parse(pgm_token(&mut r)?)? != 255 {
        return Err(Error::Format("only 8-bit PGM is supported".into()));
    }
    let mut data = vec![0u8; rows * cols];
    r.read_exact(&mut data).map_err(truncated)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format("trailing bytes after PGM raster".into()));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length matches"))
}

/// Reads the `(min, max)` sidecar of a PGM.
pub fn read_scale(pgm: &Path) -> Result<(f64, f64)> {
    let text = fs::read_to_string(scale_path(pgm))?;
    let mut min = None;
    let mut max = None;
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let (Some(key), Some(v)) = (it.next(), it.next()) else {
            continue;
        };
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Format(format!("bad scale value `{v}`")))?;
        match key {
            "min" => min = Some(v),
            "max" => max = Some(v),
            _ => {}
        }
    }
    match (min, max) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Format("scale sidecar needs min and max".into())),
    }
}

fn opt_dir(d: Option<Direction>) -> String {
    d.map(|d| d.to_string()).unwrap_or_default()
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SegmentRow {
    onset_s: f64,
    offset_s: f64,
    kind: String,
    direction: String,
    source: String,
    capture_start_s: f64,
    capture_end_s: f64,
}

pub fn write_segments_csv<W: Write>(w: W, segments: &[MotionSegment]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in segments {
        out.serialize(SegmentRow {
            onset_s: s.onset,
            offset_s: s.offset,
            kind: s.kind.to_string(),
            direction: opt_dir(s.direction),
            source: s.source.to_string(),
            capture_start_s: s.capture.0,
            capture_end_s: s.capture.1,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_segments_csv<R: Read>(r: R) -> Result<Vec<MotionSegment>> {
    csv::Reader::from_reader(r)
        .deserialize::<SegmentRow>()
        .map(|row| {
            let row = row?;
            Ok(MotionSegment {
                onset: row.onset_s,
                offset: row.offset_s,
                kind: row.kind.parse::<MotionKind>()?,
                direction: parse_opt(&row.direction)?,
                source: row.source.parse::<SegmentSource>()?,
                capture: (row.capture_start_s, row.capture_end_s),
            })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TimelineRow {
    onset_s: f64,
    offset_s: f64,
    kind: String,
    direction: String,
    source: String,
}

/// Radon intervals; `source` is always `radon`.
pub fn write_timeline_csv<W: Write>(w: W, timeline: &Timeline) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for iv in &timeline.intervals {
        out.serialize(TimelineRow {
            onset_s: iv.onset,
            offset_s: iv.offset,
            kind: iv.kind.to_string(),
            direction: opt_dir(iv.direction),
            source: SegmentSource::Radon.to_string(),
        })?;
    }
    out.flush()?;
    Ok(())
}

/// `(onset, offset, kind, direction)` of one timeline interval.
pub type TimelineEntry = (f64, f64, MotionKind, Option<Direction>);

pub fn read_timeline_csv<R: Read>(r: R) -> Result<Vec<TimelineEntry>> {
    csv::Reader::from_reader(r)
        .deserialize::<TimelineRow>()
        .map(|row| {
            let row = row?;
            Ok((
                row.onset_s,
                row.offset_s,
                row.kind.parse()?,
                parse_opt(&row.direction)?,
            ))
        })
        .collect()
}

/// One PBC sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PbcRow {
    pub t_s: f64,
    pub pc: f64,
    pub pcf: f64,
    pub active: u8,
}

pub fn write_pbc_csv<W: Write>(w: W, rows: &[PbcRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pbc_csv<R: Read>(r: R) -> Result<Vec<PbcRow>> {
    Ok(csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

/// One row of a decoded timeline table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedRow {
    pub segment: usize,
    pub onset_s: f64,
    pub offset_s: f64,
    pub fwd_label: String,
    pub bwd_label: String,
    pub state_after: String,
    pub margin: f64,
}

fn label_str(l: Option<ClassId>) -> String {
    l.map(|l| l.to_string()).unwrap_or_default()
}

fn node_str(n: Option<Node>) -> String {
    n.map(|n| n.to_string()).unwrap_or_default()
}

/// Rows for one or two decoded timelines over the same segment list.
/// `margin` is the forward margin when a forward pass is present.
pub fn decoded_rows(
    fwd: Option<&DecodedTimeline>,
    bwd: Option<&DecodedTimeline>,
) -> Vec<DecodedRow> {
    let mut segs: Vec<usize> = fwd
        .into_iter()
        .chain(bwd)
        .flat_map(|t| t.events.iter().map(|e| e.segment))
        .collect();
    segs.sort();
    segs.dedup();
    segs.into_iter()
        .map(|s| {
            let f = fwd.and_then(|t| t.event_for(s));
            let b = bwd.and_then(|t| t.event_for(s));
            let any = f.or(b).expect("segment came from a timeline");
            DecodedRow {
                segment: s,
                onset_s: any.onset,
                offset_s: any.offset,
                fwd_label: label_str(f.and_then(|e| e.label)),
                bwd_label: label_str(b.and_then(|e| e.label)),
                state_after: node_str(any.state_after),
                margin: any.margin,
            }
        })
        .collect()
}

pub fn write_decoded_csv<W: Write>(w: W, rows: &[DecodedRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_decoded_csv<R: Read>(r: R) -> Result<Vec<DecodedRow>> {
    Ok(csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Serialize)]
struct ReconcileCsvRow {
    segment: usize,
    onset_s: f64,
    offset_s: f64,
    fwd_label: String,
    bwd_label: String,
    agree: u8,
    fwd_margin: f64,
    bwd_margin: f64,
    state_after: String,
}

pub fn write_reconcile_csv<W: Write>(w: W, report: &ReconcileReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &report.rows {
        out.serialize(ReconcileCsvRow {
            segment: r.segment,
            onset_s: r.onset,
            offset_s: r.offset,
            fwd_label: label_str(r.forward),
            bwd_label: label_str(r.backward),
            agree: r.agree as u8,
            fwd_margin: r.forward_margin,
            bwd_margin: r.backward_margin,
            state_after: node_str(r.state_after),
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Confusion matrix in percent, true classes down, predictions across.
pub fn write_confusion_csv<W: Write>(w: W, cm: &ConfusionMatrix) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["cl.".to_string()];
    header.extend(cm.classes.iter().map(|c| format!("({c})")));
    out.write_record(&header)?;
    for (i, c) in cm.classes.iter().enumerate() {
        let mut rec = vec![format!("({c})")];
        rec.extend(cm.rates.row(i).iter().map(|r| format!("{r:.1}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the class order and percent table written by [`write_confusion_csv`].
pub fn read_confusion_csv<R: Read>(r: R) -> Result<(Vec<ClassId>, Array2<f64>)> {
    let mut rd = csv::Reader::from_reader(r);
    let strip = |s: &str| {
        s.trim_start_matches('(')
            .trim_end_matches(')')
            .parse::<ClassId>()
    };
    let classes = rd
        .headers()?
        .iter()
        .skip(1)
        .map(strip)
        .collect::<Result<Vec<_>>>()?;
    let k = classes.len();
    let mut rates = Array2::zeros((k, k));
    let mut n = 0;
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if i >= k || rec.len() != k + 1 {
            return Err(Error::Format("confusion table is not square".into()));
        }
        for j in 0..k {
            rates[[i, j]] = rec[j + 1]
                .parse()
                .map_err(|_| Error::Format(format!("bad rate `{}`", &rec[j + 1])))?;
        }
        n += 1;
    }
    if n != k {
        return Err(Error::Format("confusion table is not square".into()));
    }
    Ok((classes, rates))
}

#[derive(Debug, Serialize, Deserialize)]
struct SnippetIndexRow {
    id: usize,
    label: String,
    md: String,
    rm: String,
}

/// File name of a snippet set's index.
pub const SNIPPET_INDEX: &str = "snippets.csv";

/// Writes snippets as RDM1 pairs plus an index CSV. `ids` name the
/// snippets, typically segment indices.
pub fn write_snippet_set(dir: &Path, ids: &[usize], snippets: &[Snippet]) -> Result<()> {
    if ids.len() != snippets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids for {} snippets",
            ids.len(),
            snippets.len()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut index = csv::Writer::from_path(dir.join(SNIPPET_INDEX))?;
    for (&id, s) in ids.iter().zip(snippets) {
        let md = format!("{id:05}_md.rdm");
        let rm = format!("{id:05}_rm.rdm");
        write_rdm(
            &dir.join(&md),
            &RadarImage::new(s.md.clone(), 1.0, 1.0, ImageKind::Generic)?,
        )?;
        write_rdm(
            &dir.join(&rm),
            &RadarImage::new(s.rm.clone(), 1.0, 1.0, ImageKind::Generic)?,
        )?;
        index.serialize(SnippetIndexRow {
            id,
            label: label_str(s.label),
            md,
            rm,
        })?;
    }
    index.flush()?;
    Ok(())
}

/// Reads a snippet set written by [`write_snippet_set`], in index order.
pub fn read_snippet_set(dir: &Path) -> Result<Vec<(usize, Snippet)>> {
    let mut index = csv::Reader::from_path(dir.join(SNIPPET_INDEX))?;
    index
        .deserialize::<SnippetIndexRow>()
        .map(|row| {
            let row = row?;
            let md = read_rdm(&dir.join(&row.md))?.pixels;
            let rm = read_rdm(&dir.join(&row.rm))?.pixels;
            let s = Snippet {
                md,
                rm,
                label: parse_opt(&row.label)?,
                center_shifted: false,
            };
            s.validate()?;
            Ok((row.id, s))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Dims;
    use crate::radon::TimelineInterval;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn small_params() -> RadarParams {
        RadarParams {
            n_fast: 8,
            m_slow: 5,
            ..RadarParams::default()
        }
    }

    #[test]
    fn iqf_round_trip_is_bit_exact() {
        let mut bb = BasebandMatrix::zeros(small_params());
        for ((i, j), z) in bb.data.indexed_iter_mut() {
            *z = Complex32::new(i as f32 * 0.5 - j as f32, (i * j) as f32 / 3.0);
        }
        let mut buf = Vec::new();
        write_iqf_to(&mut buf, &bb).unwrap();
        assert_eq!(&buf[..4], b"IQF1");
        assert_eq!(buf.len(), 4 + 8 + 24 + 8 * 5 * 8);
        // first PRI is stored first
        let i1 = f32::from_le_bytes(buf[36 + 8..36 + 12].try_into().unwrap());
        assert_eq!(i1, bb.data[[1, 0]].re);
        let back = read_iqf_from(buf.as_slice()).unwrap();
        assert_eq!(back.data, bb.data);
        assert_eq!(back.params.pri, bb.params.pri);
    }

    #[test]
    fn iqf_rejects_bad_input() {
        assert!(matches!(read_iqf_from(&b"IQF2"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        write_iqf_to(&mut buf, &BasebandMatrix::zeros(small_params())).unwrap();
        buf.pop();
        assert!(matches!(
            read_iqf_from(buf.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rdm_round_trip() {
        let px = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 * 0.25);
        let img = RadarImage::new(px, 0.075, 0.001, ImageKind::RangeMap).unwrap();
        let mut buf = Vec::new();
        write_rdm_to(&mut buf, &img).unwrap();
        assert_eq!(buf.len(), 4 + 8 + 1 + 16 + 12 * 4);
        let back = read_rdm_from(buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn model_round_trip_keeps_f32_values() {
        let m = FeatureModel {
            eta: 2,
            d_md: 1,
            d_rm: 2,
            mean_md: Array2::from_elem((2, 2), 0.5),
            mean_rm: Array2::from_elem((2, 2), 0.25),
            phi_md: Array2::from_shape_vec((2, 1), vec![1.0, 0.0]).unwrap(),
            phi_rm: Array2::eye(2),
            eigvals_md: vec![2.0, 1.0],
            eigvals_rm: vec![3.0, 0.0],
            train_set: vec![(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], ClassId::IV)],
        };
        let mut buf = Vec::new();
        write_model_to(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"PCA2");
        let back = read_model_from(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.dims(), Dims { d_md: 1, d_rm: 2 });
    }

    #[test]
    fn pgm_scales_min_to_zero_and_max_to_255() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let px = Array2::from_shape_vec((2, 3), vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        write_pgm(&p, &px).unwrap();
        let g = read_pgm(&p).unwrap();
        assert_eq!(g.dim(), (2, 3));
        assert_eq!(g[[0, 0]], 0);
        assert_eq!(g[[1, 2]], 255);
        assert_eq!(g[[0, 2]], 102);
        assert_eq!(read_scale(&p).unwrap(), (-1.0, 4.0));
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
    }

    #[test]
    fn constant_image_is_black() {
        let (g, lo, hi) = to_gray(&Array2::from_elem((2, 2), 7.0));
        assert!(g.iter().all(|&v| v == 0));
        assert_eq!((lo, hi), (7.0, 7.0));
    }

    fn sample_segments() -> Vec<MotionSegment> {
        vec![
            MotionSegment {
                onset: 0.0,
                offset: 5.03125,
                kind: MotionKind::Translation,
                direction: Some(Direction::Toward),
                source: SegmentSource::Radon,
                capture: (0.0, 5.03125),
            },
            MotionSegment {
                onset: 3.5,
                offset: 5.5,
                kind: MotionKind::InPlace,
                direction: Some(Direction::Toward),
                source: SegmentSource::Merged,
                capture: (3.5, 5.5),
            },
            MotionSegment {
                onset: 7.1,
                offset: 8.0,
                kind: MotionKind::InPlace,
                direction: None,
                source: SegmentSource::Pbc,
                capture: (7.1, 8.0),
            },
        ]
    }

    #[test]
    fn segments_csv_round_trip() {
        let segs = sample_segments();
        let mut buf = Vec::new();
        write_segments_csv(&mut buf, &segs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("onset_s,offset_s,kind,direction,source,capture_start_s,capture_end_s\n"));
        assert_eq!(read_segments_csv(buf.as_slice()).unwrap(), segs);
    }

    #[test]
    fn timeline_csv_round_trip() {
        let tl = Timeline {
            intervals: vec![TimelineInterval {
                onset: 0.0,
                offset: 12.0,
                kind: MotionKind::InPlace,
                direction: None,
                line: 0,
                energy: 3.0,
            }],
            breakpoints: vec![],
        };
        let mut buf = Vec::new();
        write_timeline_csv(&mut buf, &tl).unwrap();
        let rows = read_timeline_csv(buf.as_slice()).unwrap();
        assert_eq!(rows, vec![(0.0, 12.0, MotionKind::InPlace, None)]);
        assert!(String::from_utf8(buf).unwrap().contains(",radon"));
    }

    #[test]
    fn confusion_csv_round_trip() {
        let cm = ConfusionMatrix::from_pairs(
            &[ClassId::I, ClassId::II],
            &[
                (ClassId::I, ClassId::I),
                (ClassId::II, ClassId::I),
                (ClassId::II, ClassId::II),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_confusion_csv(&mut buf, &cm).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "cl.,(I),(II)");
        let (classes, rates) = read_confusion_csv(buf.as_slice()).unwrap();
        assert_eq!(classes, cm.classes);
        assert_eq!(rates[[1, 0]], 50.0);
    }

    #[test]
    fn snippet_set_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = Snippet {
            md: Array2::from_shape_fn((4, 4), |(i, j)| (i + j) as f64 / 8.0),
            rm: Array2::from_elem((4, 4), 0.5),
            label: Some(ClassId::XIII),
            center_shifted: false,
        };
        let mut unlabeled = s.clone();
        unlabeled.label = None;
        write_snippet_set(dir.path(), &[3, 9], &[s.clone(), unlabeled.clone()]).unwrap();
        let back = read_snippet_set(dir.path()).unwrap();
        assert_eq!(back, vec![(3, s), (9, unlabeled)]);
    }

    proptest! {
        #[test]
        fn rdm_round_trip_for_f32_values(rows in 1usize..6, cols in 1usize..6, seed in any::<u32>()) {
            let px = Array2::from_shape_fn((rows, cols), |(i, j)| {
                let h = (seed as f64 + i as f64 * 31.0 + j as f64 * 7.0).sin() * 100.0;
                h as f32 as f64
            });
            let img = RadarImage::new(px, 1.5, 0.25, ImageKind::Spectrogram).unwrap();
            let mut buf = Vec::new();
            write_rdm_to(&mut buf, &img).unwrap();
            prop_assert_eq!(read_rdm_from(buf.as_slice()).unwrap(), img);
        }

        #[test]
        fn pgm_levels_are_monotone(values in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let n = values.len();
            let px = Array2::from_shape_vec((1, n), values.clone()).unwrap();
            let (g, _, _) = to_gray(&px);
            for a in 0..n {
                for b in 0..n {
                    if values[a] < values[b] {
                        prop_assert!(g[[0, a]] <= g[[0, b]]);
                    }
                }
            }
        }
    }
}
