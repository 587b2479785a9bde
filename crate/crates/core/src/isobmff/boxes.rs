//! Generic box tree reading and writing, plus small byte helpers shared by
//! the muxers.

use std::fmt;

use super::Mp4Error;

/// Boxes whose payload is parsed as a list of child boxes.
const CONTAINERS: &[&[u8; 4]] = &[
    b"moov", b"trak", b"mdia", b"minf", b"dinf", b"stbl", b"mvex", b"moof", b"traf", b"edts", b"mfra",
];

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct FourCc(pub [u8; 4]);

impl FourCc {
    pub fn as_str(&self) -> String {
        self.0.iter().map(|&b| if b.is_ascii_graphic() || b == b' ' { b as char } else { '.' }).collect()
    }
}

impl fmt::Debug for FourCc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "'{}'", self.as_str())
    }
}

impl fmt::Display for FourCc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.as_str())
    }
}

impl PartialEq<&[u8; 4]> for FourCc {
    fn eq(&self, other: &&[u8; 4]) -> bool {
        &self.0 == *other
    }
}

/// How the size of a box was (or will be) encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeForm {
    Compact,
    /// `size == 1` followed by a 64-bit size.
    Large,
    /// `size == 0`: the box runs to the end of the file.
    ToEnd,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoxContent {
    Leaf(Vec<u8>),
    Children(Vec<Mp4Box>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mp4Box {
    pub fourcc: FourCc,
    pub size_form: SizeForm,
    pub content: BoxContent,
}

impl Mp4Box {
    pub fn leaf(fourcc: &[u8; 4], payload: Vec<u8>) -> Mp4Box {
        Mp4Box { fourcc: FourCc(*fourcc), size_form: SizeForm::Compact, content: BoxContent::Leaf(payload) }
    }

    pub fn container(fourcc: &[u8; 4], children: Vec<Mp4Box>) -> Mp4Box {
        Mp4Box { fourcc: FourCc(*fourcc), size_form: SizeForm::Compact, content: BoxContent::Children(children) }
    }

    pub fn payload(&self) -> Option<&[u8]> {
        match &self.content {
            BoxContent::Leaf(p) => Some(p),
            BoxContent::Children(_) => None,
        }
    }

    pub fn children(&self) -> &[Mp4Box] {
        match &self.content {
            BoxContent::Children(c) => c,
            BoxContent::Leaf(_) => &[],
        }
    }

    pub fn child(&self, fourcc: &[u8; 4]) -> Option<&Mp4Box> {
        self.children().iter().find(|b| b.fourcc == fourcc)
    }

    /// Follow a path of child types, e.g. `[b"mdia", b"minf", b"stbl"]`.
    pub fn path(&self, path: &[&[u8; 4]]) -> Option<&Mp4Box> {
        path.iter().try_fold(self, |b, p| b.child(p))
    }

    fn content_len(&self) -> u64 {
        match &self.content {
            BoxContent::Leaf(p) => p.len() as u64,
            BoxContent::Children(c) => c.iter().map(Mp4Box::size).sum(),
        }
    }

    /// Encoded size including the header.
    pub fn size(&self) -> u64 {
        let header = if self.size_form == SizeForm::Large { 16 } else { 8 };
        header + self.content_len()
    }
}

fn find<'a>(boxes: &'a [Mp4Box], fourcc: &[u8; 4]) -> Option<&'a Mp4Box> {
    boxes.iter().find(|b| b.fourcc == fourcc)
}

/// First top-level box of the given type.
pub fn find_box<'a>(boxes: &'a [Mp4Box], fourcc: &[u8; 4]) -> Option<&'a Mp4Box> {
    find(boxes, fourcc)
}

/// Parse a sequence of boxes covering `data` exactly.
pub fn read_box_tree(data: &[u8]) -> Result<Vec<Mp4Box>, Mp4Error> {
    read_boxes(data, 0)
}

fn read_boxes(data: &[u8], base: u64) -> Result<Vec<Mp4Box>, Mp4Error> {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while pos < data.len() {
        let at = base + pos as u64;
        if data.len() - pos < 8 {
            return Err(Mp4Error::TruncatedBox { offset: at });
        }
        let size32 = u32::from_be_bytes(data[pos..pos + 4].try_into().expect("4 bytes"));
        let fourcc = FourCc(data[pos + 4..pos + 8].try_into().expect("4 bytes"));
        let (size_form, header, total) = match size32 {
            0 => (SizeForm::ToEnd, 8usize, (data.len() - pos) as u64),
            1 => {
                if data.len() - pos < 16 {
                    return Err(Mp4Error::TruncatedBox { offset: at });
                }
                let large = u64::from_be_bytes(data[pos + 8..pos + 16].try_into().expect("8 bytes"));
                if large < 16 {
                    return Err(Mp4Error::SizeOverflow { offset: at, size: large });
                }
                (SizeForm::Large, 16, large)
            }
            s if s < 8 => return Err(Mp4Error::SizeOverflow { offset: at, size: s as u64 }),
            s => (SizeForm::Compact, 8, s as u64),
        };
        if total > (data.len() - pos) as u64 {
            return Err(Mp4Error::TruncatedBox { offset: at });
        }
        let total = total as usize;
        let body = &data[pos + header..pos + total];
        let content = if CONTAINERS.iter().any(|c| fourcc == *c) {
            BoxContent::Children(read_boxes(body, at + header as u64)?)
        } else {
            BoxContent::Leaf(body.to_vec())
        };
        out.push(Mp4Box { fourcc, size_form, content });
        pos += total;
    }
    Ok(out)
}

/// Serialize boxes; the exact inverse of [`read_box_tree`].
pub fn write_box_tree(boxes: &[Mp4Box]) -> Result<Vec<u8>, Mp4Error> {
    let mut out = Vec::with_capacity(boxes.iter().map(|b| b.size() as usize).sum());
    for b in boxes {
        write_one(b, &mut out)?;
    }
    Ok(out)
}

fn write_one(b: &Mp4Box, out: &mut Vec<u8>) -> Result<(), Mp4Error> {
    let size = b.size();
    match b.size_form {
        SizeForm::Compact => {
            let s = u32::try_from(size).map_err(|_| Mp4Error::SizeOverflow { offset: out.len() as u64, size })?;
            out.extend_from_slice(&s.to_be_bytes());
            out.extend_from_slice(&b.fourcc.0);
        }
        SizeForm::Large => {
            out.extend_from_slice(&1u32.to_be_bytes());
            out.extend_from_slice(&b.fourcc.0);
            out.extend_from_slice(&size.to_be_bytes());
        }
        SizeForm::ToEnd => {
            out.extend_from_slice(&0u32.to_be_bytes());
            out.extend_from_slice(&b.fourcc.0);
        }
    }
    match &b.content {
        BoxContent::Leaf(p) => out.extend_from_slice(p),
        BoxContent::Children(c) => {
            for child in c {
                write_one(child, out)?;
            }
        }
    }
    Ok(())
}

/// Indented one-line-per-box listing, for inspection output.
pub fn dump_tree(boxes: &[Mp4Box]) -> String {
    fn go(b: &Mp4Box, depth: usize, out: &mut String) {
        out.push_str(&format!("{}{} ({} bytes)\n", "  ".repeat(depth), b.fourcc, b.size()));
        for c in b.children() {
            go(c, depth + 1, out);
        }
    }
    let mut s = String::new();
    for b in boxes {
        go(b, 0, &mut s);
    }
    s
}

// ---- writing helpers ----

/// Append a box whose body is produced by `body`, patching the size afterwards.
pub(crate) fn put_box(out: &mut Vec<u8>, fourcc: &[u8; 4], body: impl FnOnce(&mut Vec<u8>)) {
    let start = out.len();
    out.extend_from_slice(&[0, 0, 0, 0]);
    out.extend_from_slice(fourcc);
    body(out);
    let size = (out.len() - start) as u32;
    out[start..start + 4].copy_from_slice(&size.to_be_bytes());
}

pub(crate) fn put_full_box(out: &mut Vec<u8>, fourcc: &[u8; 4], version: u8, flags: u32, body: impl FnOnce(&mut Vec<u8>)) {
    put_box(out, fourcc, |o| {
        o.push(version);
        o.extend_from_slice(&flags.to_be_bytes()[1..]);
        body(o);
    });
}

pub(crate) trait PutBe {
    fn u16(&mut self, v: u16);
    fn u32(&mut self, v: u32);
    fn u64(&mut self, v: u64);
    fn i32(&mut self, v: i32);
    fn zeros(&mut self, n: usize);
}

impl PutBe for Vec<u8> {
    fn u16(&mut self, v: u16) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.extend_from_slice(&v.to_be_bytes());
    }
    fn zeros(&mut self, n: usize) {
        self.resize(self.len() + n, 0);
    }
}

/// Bounds-checked big-endian cursor over a box payload.
pub(crate) struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    pub fn new(data: &'a [u8], what: &'static str) -> Self {
        Cursor { data, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], Mp4Error> {
        if self.data.len() - self.pos < n {
            return Err(Mp4Error::Malformed(format!("{} payload too short", self.what)));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, Mp4Error> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4")))
    }
    pub fn u64(&mut self) -> Result<u64, Mp4Error> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().expect("8")))
    }
    pub fn skip(&mut self, n: usize) -> Result<(), Mp4Error> {
        self.take(n).map(|_| ())
    }
    pub fn rest(&mut self) -> &'a [u8] {
        let s = &self.data[self.pos..];
        self.pos = self.data.len();
        s
    }
    /// Version and flags of a full box.
    pub fn full_header(&mut self) -> Result<(u8, u32), Mp4Error> {
        let v = self.u32()?;
        Ok(((v >> 24) as u8, v & 0x00ff_ffff))
    }
}
