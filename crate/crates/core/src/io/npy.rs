//! NPY v1.0 reading and writing.
//!
//! A file is the magic `\x93NUMPY`, version bytes `1 0`, a little-endian
//! `u16` header length, an ASCII Python dict literal with `descr`,
//! `fortran_order` and `shape`, then the raw C-order payload. Only
//! little-endian integer and float element types are supported, and only C
//! order.
//!
//! [`NpyReader`] parses the header and validates the payload length without
//! reading it, so large archives can be read one leading-axis slice at a time.

use std::fs::File;
use std::io::{self, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Error)]
pub enum NpyError {
    #[error("not an npy file (bad magic)")]
    BadMagic,
    #[error("unsupported npy version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("fortran-order arrays are not supported")]
    FortranOrder,
    #[error("malformed npy header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("element type mismatch: expected {expected}, found {found}")]
    TypeMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("slice {start}..{end} out of bounds for leading axis {len}")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    U8,
    I8,
    U16,
    I16,
    U32,
    I32,
    U64,
    I64,
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 | DType::I8 => 1,
            DType::U16 | DType::I16 => 2,
            DType::U32 | DType::I32 | DType::F32 => 4,
            DType::U64 | DType::I64 | DType::F64 => 8,
        }
    }

    pub fn descr(self) -> &'static str {
        match self {
            DType::U8 => "|u1",
            DType::I8 => "|i1",
            DType::U16 => "<u2",
            DType::I16 => "<i2",
            DType::U32 => "<u4",
            DType::I32 => "<i4",
            DType::U64 => "<u8",
            DType::I64 => "<i8",
            DType::F32 => "<f4",
            DType::F64 => "<f8",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::I8 => "i8",
            DType::U16 => "u16",
            DType::I16 => "i16",
            DType::U32 => "u32",
            DType::I32 => "i32",
            DType::U64 => "u64",
            DType::I64 => "i64",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    fn parse(descr: &str) -> Result<Self, NpyError> {
        let unsupported = || NpyError::UnsupportedDtype(descr.to_string());
        let mut chars = descr.chars();
        let order = chars.next().ok_or_else(unsupported)?;
        let rest = chars.as_str();
        let t = match rest {
            "u1" => DType::U8,
            "i1" => DType::I8,
            "b1" => DType::U8,
            "u2" => DType::U16,
            "i2" => DType::I16,
            "u4" => DType::U32,
            "i4" => DType::I32,
            "u8" => DType::U64,
            "i8" => DType::I64,
            "f4" => DType::F32,
            "f8" => DType::F64,
            _ => return Err(unsupported()),
        };
        let ok = match order {
            '<' => true,
            '|' => t.size() == 1,
            _ => false,
        };
        if !ok {
            return Err(unsupported());
        }
        Ok(t)
    }

    pub fn is_integer(self) -> bool {
        !matches!(self, DType::F32 | DType::F64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NpyData {
    U8(Vec<u8>),
    I8(Vec<i8>),
    U16(Vec<u16>),
    I16(Vec<i16>),
    U32(Vec<u32>),
    I32(Vec<i32>),
    U64(Vec<u64>),
    I64(Vec<i64>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

macro_rules! for_each_variant {
    ($data:expr, $v:ident => $body:expr) => {
        match $data {
            NpyData::U8($v) => $body,
            NpyData::I8($v) => $body,
            NpyData::U16($v) => $body,
            NpyData::I16($v) => $body,
            NpyData::U32($v) => $body,
            NpyData::I32($v) => $body,
            NpyData::U64($v) => $body,
            NpyData::I64($v) => $body,
            NpyData::F32($v) => $body,
            NpyData::F64($v) => $body,
        }
    };
}

impl NpyData {
    pub fn dtype(&self) -> DType {
        match self {
            NpyData::U8(_) => DType::U8,
            NpyData::I8(_) => DType::I8,
            NpyData::U16(_) => DType::U16,
            NpyData::I16(_) => DType::I16,
            NpyData::U32(_) => DType::U32,
            NpyData::I32(_) => DType::I32,
            NpyData::U64(_) => DType::U64,
            NpyData::I64(_) => DType::I64,
            NpyData::F32(_) => DType::F32,
            NpyData::F64(_) => DType::F64,
        }
    }

    pub fn len(&self) -> usize {
        for_each_variant!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn decode(dtype: DType, bytes: &[u8]) -> NpyData {
        macro_rules! le {
            ($t:ty, $n:expr) => {
                bytes
                    .chunks_exact($n)
                    .map(|c| <$t>::from_le_bytes(c.try_into().expect("chunk size")))
                    .collect()
            };
        }
        match dtype {
            DType::U8 => NpyData::U8(bytes.to_vec()),
            DType::I8 => NpyData::I8(bytes.iter().map(|&b| b as i8).collect()),
            DType::U16 => NpyData::U16(le!(u16, 2)),
            DType::I16 => NpyData::I16(le!(i16, 2)),
            DType::U32 => NpyData::U32(le!(u32, 4)),
            DType::I32 => NpyData::I32(le!(i32, 4)),
            DType::U64 => NpyData::U64(le!(u64, 8)),
            DType::I64 => NpyData::I64(le!(i64, 8)),
            DType::F32 => NpyData::F32(le!(f32, 4)),
            DType::F64 => NpyData::F64(le!(f64, 8)),
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * self.dtype().size());
        for_each_variant!(self, v => for x in v { out.extend_from_slice(&x.to_le_bytes()) });
        out
    }

    /// Integer elements widened to `i64`; `None` for float data.
    pub fn to_i64(&self) -> Option<Vec<i64>> {
        Some(match self {
            NpyData::U8(v) => v.iter().map(|&x| x as i64).collect(),
            NpyData::I8(v) => v.iter().map(|&x| x as i64).collect(),
            NpyData::U16(v) => v.iter().map(|&x| x as i64).collect(),
            NpyData::I16(v) => v.iter().map(|&x| x as i64).collect(),
            NpyData::U32(v) => v.iter().map(|&x| x as i64).collect(),
            NpyData::I32(v) => v.iter().map(|&x| x as i64).collect(),
            // Values above i64::MAX cannot be valid labels; they saturate and fail range checks.
            NpyData::U64(v) => v.iter().map(|&x| x.min(i64::MAX as u64) as i64).collect(),
            NpyData::I64(v) => v.clone(),
            NpyData::F32(_) | NpyData::F64(_) => return None,
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        for_each_variant!(self, v => v.iter().map(|&x| x as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: NpyData,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: NpyData) -> Result<Self, NpyError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NpyError::Header(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Byte offset of the payload.
    pub data_offset: u64,
}

impl NpyHeader {
    pub fn element_count(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.element_count() * self.dtype.size() as u64
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<NpyHeader, NpyError> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| NpyError::BadMagic)?;
    if &magic != MAGIC {
        return Err(NpyError::BadMagic);
    }
    let mut ver = [0u8; 2];
    r.read_exact(&mut ver)
        .map_err(|_| NpyError::Header("missing version".into()))?;
    if ver != [1, 0] {
        return Err(NpyError::UnsupportedVersion(ver[0], ver[1]));
    }
    let mut len = [0u8; 2];
    r.read_exact(&mut len)
        .map_err(|_| NpyError::Header("missing header length".into()))?;
    let hlen = u16::from_le_bytes(len) as usize;
    let mut text = vec![0u8; hlen];
    r.read_exact(&mut text)
        .map_err(|_| NpyError::Header("header shorter than declared".into()))?;
    let text = String::from_utf8(text).map_err(|_| NpyError::Header("header is not ASCII".into()))?;
    let dict = parse_dict(&text)?;
    if dict.fortran_order {
        return Err(NpyError::FortranOrder);
    }
    Ok(NpyHeader {
        dtype: DType::parse(&dict.descr)?,
        shape: dict.shape,
        data_offset: (10 + hlen) as u64,
    })
}

struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses the restricted Python literal used in npy headers.
fn parse_dict(text: &str) -> Result<HeaderDict, NpyError> {
    let err = |m: &str| NpyError::Header(format!("{m} in {text:?}"));
    let mut p = Cursor {
        s: text.as_bytes(),
        i: 0,
    };
    p.ws();
    if !p.eat(b'{') {
        return Err(err("expected '{'"));
    }
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    loop {
        p.ws();
        if p.eat(b'}') {
            break;
        }
        let key = p.string().ok_or_else(|| err("expected key string"))?;
        p.ws();
        if !p.eat(b':') {
            return Err(err("expected ':'"));
        }
        p.ws();
        match key.as_str() {
            "descr" => descr = Some(p.string().ok_or_else(|| err("descr must be a string"))?),
            "fortran_order" => fortran = Some(p.boolean().ok_or_else(|| err("fortran_order must be a bool"))?),
            "shape" => shape = Some(p.tuple().ok_or_else(|| err("shape must be a tuple of ints"))?),
            _ => return Err(err("unknown key")),
        }
        p.ws();
        if !p.eat(b',') {
            p.ws();
            if p.eat(b'}') {
                break;
            }
            return Err(err("expected ',' or '}'"));
        }
    }
    Ok(HeaderDict {
        descr: descr.ok_or_else(|| err("missing descr"))?,
        fortran_order: fortran.ok_or_else(|| err("missing fortran_order"))?,
        shape: shape.ok_or_else(|| err("missing shape"))?,
    })
}

struct Cursor<'a> {
    s: &'a [u8],
    i: usize,
}

impl Cursor<'_> {
    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn string(&mut self) -> Option<String> {
        let q = *self.s.get(self.i)?;
        if q != b'\'' && q != b'"' {
            return None;
        }
        let start = self.i + 1;
        let end = start + self.s[start..].iter().position(|&c| c == q)?;
        self.i = end + 1;
        String::from_utf8(self.s[start..end].to_vec()).ok()
    }

    fn boolean(&mut self) -> Option<bool> {
        for (word, v) in [("True", true), ("False", false)] {
            if self.s[self.i..].starts_with(word.as_bytes()) {
                self.i += word.len();
                return Some(v);
            }
        }
        None
    }

    fn tuple(&mut self) -> Option<Vec<usize>> {
        if !self.eat(b'(') {
            return None;
        }
        let mut dims = Vec::new();
        loop {
            self.ws();
            if self.eat(b')') {
                return Some(dims);
            }
            let start = self.i;
            while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                self.i += 1;
            }
            if start == self.i {
                return None;
            }
            // Python 2 era writers emit `256L`.
            let digits = std::str::from_utf8(&self.s[start..self.i]).ok()?;
            dims.push(digits.parse().ok()?);
            self.eat(b'L');
            self.ws();
            if !self.eat(b',') {
                self.ws();
                return self.eat(b')').then_some(dims);
            }
        }
    }
}

fn header_bytes(dtype: DType, shape: &[usize]) -> Vec<u8> {
    let dims = match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        dims
    );
    // Pad with spaces so the payload starts on a 64-byte boundary; the
    // header ends with a newline.
    let unpadded = 10 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat(' ').take(pad));
    dict.push('\n');
    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn write_array<W: Write>(array: &NpyArray, out: &mut W) -> Result<(), NpyError> {
    out.write_all(&header_bytes(array.dtype(), &array.shape))?;
    out.write_all(&array.data.encode())?;
    Ok(())
}

pub fn read_array<R: Read>(input: &mut R) -> Result<NpyArray, NpyError> {
    let header = read_header(input)?;
    let expected = header.payload_bytes();
    let mut buf = Vec::with_capacity(expected as usize);
    input.take(expected).read_to_end(&mut buf)?;
    if (buf.len() as u64) < expected {
        return Err(NpyError::Truncated {
            expected,
            found: buf.len() as u64,
        });
    }
    Ok(NpyArray {
        data: NpyData::decode(header.dtype, &buf),
        shape: header.shape,
    })
}

pub fn write_array_file(array: &NpyArray, path: &Path) -> Result<(), NpyError> {
    let mut f = BufWriter::new(File::create(path)?);
    write_array(array, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_array_file(path: &Path) -> Result<NpyArray, NpyError> {
    NpyReader::open(path)?.read_all()
}

/// Random access to an npy file along its leading axis.
#[derive(Debug)]
pub struct NpyReader {
    file: File,
    header: NpyHeader,
}

impl NpyReader {
    pub fn open(path: &Path) -> Result<Self, NpyError> {
        let mut file = File::open(path)?;
        let header = read_header(&mut io::BufReader::new(&mut file))?;
        let found = file.metadata()?.len().saturating_sub(header.data_offset);
        let expected = header.payload_bytes();
        if found < expected {
            return Err(NpyError::Truncated { expected, found });
        }
        Ok(Self { file, header })
    }

    pub fn header(&self) -> &NpyHeader {
        &self.header
    }

    pub fn shape(&self) -> &[usize] {
        &self.header.shape
    }

    pub fn dtype(&self) -> DType {
        self.header.dtype
    }

    /// Length of the leading axis (1 for 0-d arrays).
    pub fn len(&self) -> usize {
        self.header.shape.first().copied().unwrap_or(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn row_elems(&self) -> usize {
        self.header.shape.iter().skip(1).product()
    }

    /// Reads rows `start..start + count` of the leading axis.
    pub fn read_rows(&mut self, start: usize, count: usize) -> Result<NpyArray, NpyError> {
        let end = start + count;
        if self.header.shape.is_empty() || end > self.len() {
            return Err(NpyError::OutOfBounds {
                start,
                end,
                len: self.len(),
            });
        }
        let row_bytes = self.row_elems() * self.header.dtype.size();
        self.file
            .seek(SeekFrom::Start(self.header.data_offset + (start * row_bytes) as u64))?;
        let mut buf = vec![0u8; count * row_bytes];
        self.file.read_exact(&mut buf)?;
        let mut shape = self.header.shape.clone();
        shape[0] = count;
        Ok(NpyArray {
            shape,
            data: NpyData::decode(self.header.dtype, &buf),
        })
    }

    pub fn read_all(&mut self) -> Result<NpyArray, NpyError> {
        self.file.seek(SeekFrom::Start(self.header.data_offset))?;
        let expected = self.header.payload_bytes() as usize;
        let mut buf = vec![0u8; expected];
        self.file.read_exact(&mut buf)?;
        Ok(NpyArray {
            shape: self.header.shape.clone(),
            data: NpyData::decode(self.header.dtype, &buf),
        })
    }
}

/// Writes only a header declaring `shape`; the caller streams the payload.
pub fn write_header<W: Write>(dtype: DType, shape: &[usize], out: &mut W) -> Result<(), NpyError> {
    out.write_all(&header_bytes(dtype, shape))?;
    Ok(())
}
