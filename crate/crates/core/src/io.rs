//! Line-oriented text formats for labels, `E0` edge lists and request streams.
//!
//! ```text
//! #preattack-labels v1 k=2          #preattack-edges v1      #preattack-stream v1 new_range=100-199
//! 1,0                               4,1                      1,S,100,1
//! 4,1                               2,1                      2,R,100,2
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{
    ClassLabel, Direction, EdgeEvent, EdgeStream, IdRange, LabelSet, LabeledNetwork,
    NetworkBuilder, UserId,
};

pub const LABELS_MAGIC: &str = "#preattack-labels";
pub const EDGES_MAGIC: &str = "#preattack-edges";
pub const STREAM_MAGIC: &str = "#preattack-stream";
pub const FORMAT_VERSION: &str = "v1";

struct LineReader {
    path: PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl LineReader {
    fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(LineReader {
            path: path.to_path_buf(),
            lines: BufReader::new(f).lines(),
            line_no: 0,
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line_no,
            msg: msg.into(),
        }
    }

    /// Next raw line, `None` at EOF.
    fn next_raw(&mut self) -> Result<Option<String>> {
        match self.lines.next() {
            None => Ok(None),
            Some(Err(e)) => Err(Error::io(&self.path, e)),
            Some(Ok(l)) => {
                self.line_no += 1;
                Ok(Some(l))
            }
        }
    }

    /// Next data line, skipping blanks and `#` comments.
    fn next_data(&mut self) -> Result<Option<String>> {
        while let Some(l) = self.next_raw()? {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            return Ok(Some(t.to_string()));
        }
        Ok(None)
    }

    /// Reads the header line and returns its `key=value` attributes. A
    /// completely empty file yields `None`.
    fn header(&mut self, magic: &str) -> Result<Option<Vec<(String, String)>>> {
        let Some(line) = self.next_raw()? else {
            return Ok(None);
        };
        let mut parts = line.split_whitespace();
        if parts.next() != Some(magic) {
            return Err(self.err(format!("expected header starting with `{magic}`")));
        }
        match parts.next() {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(self.err(format!("unsupported format version `{v}`"))),
            None => return Err(self.err("missing format version")),
        }
        let mut attrs = Vec::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| self.err(format!("malformed header attribute `{p}`")))?;
            attrs.push((k.to_string(), v.to_string()));
        }
        Ok(Some(attrs))
    }

    fn parse_u64(&self, s: &str, what: &str) -> Result<u64> {
        s.trim()
            .parse()
            .map_err(|_| self.err(format!("invalid {what} `{s}`")))
    }
}

fn attr<'a>(attrs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}

fn split_fields<'a>(r: &LineReader, line: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != n {
        return Err(r.err(format!("expected {n} fields, found {}", fields.len())));
    }
    Ok(fields)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let mut r = LineReader::open(path.as_ref())?;
    let attrs = r
        .header(LABELS_MAGIC)?
        .ok_or_else(|| r.err("empty labels file"))?;
    let k: usize = attr(&attrs, "k")
        .ok_or_else(|| r.err("header is missing k=<k>"))?
        .parse()
        .map_err(|_| r.err("invalid k"))?;
    if k < 2 {
        return Err(r.err(format!("k must be at least 2, got {k}")));
    }
    let mut labels = LabelSet::new(k);
    while let Some(line) = r.next_data()? {
        let f = split_fields(&r, &line, 2)?;
        let user = UserId(r.parse_u64(f[0], "user id")?);
        let class = r.parse_u64(f[1], "class index")? as usize;
        if class >= k {
            return Err(r.err(format!("class index {class} out of range for k={k}")));
        }
        labels
            .insert(user, ClassLabel(class as u16))
            .map_err(|e| r.err(e.to_string()))?;
    }
    Ok(labels)
}

/// Builds the labeled network from a labels file and an `E0` edge list in a
/// single pass over the edges.
pub fn ingest_network(
    labels_file: impl AsRef<Path>,
    edges_file: impl AsRef<Path>,
) -> Result<LabeledNetwork> {
    let labels = read_labels(labels_file)?;
    let mut b = NetworkBuilder::new(labels.k);
    for (&u, &l) in &labels.labels {
        b.add_user(u, l)?;
    }
    let mut r = LineReader::open(edges_file.as_ref())?;
    if r.header(EDGES_MAGIC)?.is_none() {
        return Ok(b.finish());
    }
    while let Some(line) = r.next_data()? {
        let f = split_fields(&r, &line, 2)?;
        let src = UserId(r.parse_u64(f[0], "source id")?);
        let dst = UserId(r.parse_u64(f[1], "destination id")?);
        b.add_edge(src, dst).map_err(|e| r.err(e.to_string()))?;
    }
    Ok(b.finish())
}

fn parse_range(r: &LineReader, s: &str) -> Result<IdRange> {
    let (lo, hi) = s
        .split_once('-')
        .ok_or_else(|| r.err(format!("malformed new_range `{s}`")))?;
    let range = IdRange::new(r.parse_u64(lo, "range bound")?, r.parse_u64(hi, "range bound")?);
    if range.lo > range.hi {
        return Err(r.err("new_range lower bound exceeds upper bound"));
    }
    Ok(range)
}

/// Parses a stream file and checks ordering and the new/preexisting split,
/// without consulting a network.
pub fn read_stream(path: impl AsRef<Path>) -> Result<EdgeStream> {
    let mut r = LineReader::open(path.as_ref())?;
    let attrs = r
        .header(STREAM_MAGIC)?
        .ok_or_else(|| r.err("empty stream file"))?;
    let new_range = parse_range(
        &r,
        attr(&attrs, "new_range").ok_or_else(|| r.err("header is missing new_range"))?,
    )?;
    let mut events = Vec::new();
    let mut prev: Option<u64> = None;
    while let Some(line) = r.next_data()? {
        let f = split_fields(&r, &line, 4)?;
        let seq = r.parse_u64(f[0], "seq")?;
        let direction = match f[1] {
            "S" => Direction::Send,
            "R" => Direction::Receive,
            d => return Err(r.err(format!("invalid direction `{d}`, expected S or R"))),
        };
        let ev = EdgeEvent {
            seq,
            direction,
            new_user: UserId(r.parse_u64(f[2], "new user id")?),
            preexisting_user: UserId(r.parse_u64(f[3], "preexisting user id")?),
        };
        if let Some(p) = prev {
            if seq <= p {
                return Err(r.err(Error::OutOfOrder { prev: p, seq }.to_string()));
            }
        }
        prev = Some(seq);
        let single = EdgeStream {
            new_range,
            events: vec![ev],
        };
        single.validate(None).map_err(|e| r.err(e.to_string()))?;
        events.push(ev);
    }
    Ok(EdgeStream { new_range, events })
}

/// Reads a stream and checks every preexisting endpoint against `network`.
pub fn ingest_stream(path: impl AsRef<Path>, network: &LabeledNetwork) -> Result<EdgeStream> {
    let s = read_stream(path)?;
    s.validate(Some(network))?;
    Ok(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "{LABELS_MAGIC} {FORMAT_VERSION} k={}", labels.k)?;
        for (u, l) in &labels.labels {
            writeln!(w, "{u},{l}")?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

pub fn write_edges(edges: &[(UserId, UserId)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(w, "{EDGES_MAGIC} {FORMAT_VERSION}")?;
        for (s, d) in edges {
            writeln!(w, "{s},{d}")?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}

pub fn write_stream(stream: &EdgeStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut go = || -> std::io::Result<()> {
        writeln!(
            w,
            "{STREAM_MAGIC} {FORMAT_VERSION} new_range={}-{}",
            stream.new_range.lo, stream.new_range.hi
        )?;
        for e in &stream.events {
            let d = match e.direction {
                Direction::Send => 'S',
                Direction::Receive => 'R',
            };
            writeln!(w, "{},{d},{},{}", e.seq, e.new_user, e.preexisting_user)?;
        }
        w.flush()
    };
    go().map_err(|e| Error::io(path, e))
}
