//! Single-file form container.
//!
//! Layout: the 8 magic bytes `HBCRFORM`, the header length as a little-endian
//! `u64`, the JSON [`FormHeader`], then the payload: little-endian `f64`
//! blocks in the order listed by `header.blocks`.
//!
//! * non-standard form: `A_0, B_0, C_0, A_1, B_1, C_1, …, coarse`
//! * split form: `α_0, β_0, γ_0, …, 𝐚_0, 𝐛_0, 𝐜_0, …, coarse`
//!
//! Matrix blocks are row-major; banded blocks store `2w+1` slots per row
//! (slot `ℓ − k + w`). The header carries the SHA-256 of the payload.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dyadic::GridSpec;
use crate::{Error, Result};

use super::{DiagonalForm, FormMeta, LevelMatrix, ModifiedForm, NonStandardForm, SplitForm, Storage};

const MAGIC: &[u8; 8] = b"HBCRFORM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    /// Matrix side, or vector length for diagonal blocks.
    pub side: usize,
    /// `None` for vectors.
    pub storage: Option<Storage>,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormHeader {
    pub format: String,
    pub version: u32,
    /// `"nsf"` or `"split"`.
    pub kind: String,
    pub grid: GridSpec,
    #[serde(flatten)]
    pub meta: FormMeta,
    pub blocks: Vec<BlockInfo>,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormFile {
    NonStandard(NonStandardForm),
    Split(SplitForm),
}

struct Writer {
    blocks: Vec<BlockInfo>,
    payload: Vec<u8>,
}

impl Writer {
    fn matrix(&mut self, name: String, m: &LevelMatrix) {
        self.blocks.push(BlockInfo {
            name,
            side: m.side(),
            storage: Some(m.storage()),
            len: m.raw().len(),
        });
        self.floats(m.raw());
    }

    fn vector(&mut self, name: String, v: &[f64]) {
        self.blocks.push(BlockInfo { name, side: v.len(), storage: None, len: v.len() });
        self.floats(v);
    }

    fn floats(&mut self, v: &[f64]) {
        self.payload.reserve(v.len() * 8);
        for x in v {
            self.payload.extend_from_slice(&x.to_le_bytes());
        }
    }
}

pub(crate) fn checksum(payload: &[u8]) -> String {
    Sha256::digest(payload).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(form: &FormFile) -> (FormHeader, Vec<u8>) {
    let mut w = Writer { blocks: Vec::new(), payload: Vec::new() };
    let (kind, spec, meta, coarse) = match form {
        FormFile::NonStandard(f) => {
            for j in 0..f.levels() {
                w.matrix(format!("A_{j}"), &f.a[j]);
                w.matrix(format!("B_{j}"), &f.b[j]);
                w.matrix(format!("C_{j}"), &f.c[j]);
            }
            ("nsf", f.spec, f.meta.clone(), &f.coarse)
        }
        FormFile::Split(f) => {
            let s = &f.smooth;
            for j in 0..s.levels() {
                w.matrix(format!("alpha_{j}"), &s.alpha[j]);
                w.matrix(format!("beta_{j}"), &s.beta[j]);
                w.matrix(format!("gamma_{j}"), &s.gamma[j]);
            }
            let d = &f.dyadic;
            for j in 0..d.a.len() {
                w.vector(format!("diag_a_{j}"), &d.a[j]);
                w.vector(format!("diag_b_{j}"), &d.b[j]);
                w.vector(format!("diag_c_{j}"), &d.c[j]);
            }
            ("split", s.spec, f.meta.clone(), &f.coarse)
        }
    };
    w.matrix("coarse".into(), coarse);
    let header = FormHeader {
        format: "haarbcr-form".into(),
        version: VERSION,
        kind: kind.into(),
        grid: spec,
        meta,
        blocks: w.blocks,
        checksum: checksum(&w.payload),
    };
    (header, w.payload)
}

/// Writes `form`; returns the payload checksum.
pub fn write_form_file(path: &Path, form: &FormFile) -> Result<String> {
    let (header, payload) = encode(form);
    let json = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&payload)?;
    out.flush()?;
    Ok(header.checksum)
}

/// Total file size for `form`, without writing it.
pub fn encoded_len(form: &FormFile) -> Result<usize> {
    let (header, payload) = encode(form);
    Ok(16 + serde_json::to_vec(&header)?.len() + payload.len())
}

pub fn read_form_file(path: &Path) -> Result<(FormHeader, FormFile)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<(FormHeader, FormFile)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a form file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: FormHeader = serde_json::from_slice(body)?;
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let payload = &bytes[16 + hlen..];
    let found = checksum(payload);
    if found != header.checksum {
        return Err(Error::Checksum { expected: header.checksum.clone(), found });
    }

    let mut cursor = 0usize;
    let mut blocks = header.blocks.iter();
    let mut next = |name: &str| -> Result<(&BlockInfo, Vec<f64>)> {
        let info = blocks.next().ok_or_else(|| Error::Format(format!("missing block {name}")))?;
        if info.name != name {
            return Err(Error::Format(format!("expected block {name}, found {}", info.name)));
        }
        let end = cursor + info.len * 8;
        let raw = payload.get(cursor..end).ok_or_else(|| Error::Format(format!("block {name} truncated")))?;
        cursor = end;
        let v = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok((info, v))
    };
    let matrix = |(info, v): (&BlockInfo, Vec<f64>)| -> Result<LevelMatrix> {
        let storage = info.storage.ok_or_else(|| Error::Format(format!("{} is not a matrix", info.name)))?;
        LevelMatrix::from_raw(info.side, storage, v).ok_or_else(|| Error::Format(format!("{} has wrong length", info.name)))
    };

    let spec: GridSpec = header.grid;
    let check_side = |m: &LevelMatrix, side: usize| -> Result<()> {
        if m.side() != side {
            return Err(Error::Format(format!("level side {} != {side}", m.side())));
        }
        Ok(())
    };
    let form = match header.kind.as_str() {
        "nsf" => {
            let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
            for j in spec.levels() {
                for (v, n) in [(&mut a, "A"), (&mut b, "B"), (&mut c, "C")] {
                    let m = matrix(next(&format!("{n}_{j}"))?)?;
                    check_side(&m, spec.side(j))?;
                    v.push(m);
                }
            }
            let coarse = matrix(next("coarse")?)?;
            check_side(&coarse, spec.m)?;
            FormFile::NonStandard(NonStandardForm { spec, a, b, c, coarse, meta: header.meta.clone() })
        }
        "split" => {
            let (mut al, mut be, mut ga) = (Vec::new(), Vec::new(), Vec::new());
            for j in spec.levels() {
                for (v, n) in [(&mut al, "alpha"), (&mut be, "beta"), (&mut ga, "gamma")] {
                    let m = matrix(next(&format!("{n}_{j}"))?)?;
                    check_side(&m, spec.side(j))?;
                    v.push(m);
                }
            }
            let mut d = DiagonalForm { spec, a: Vec::new(), b: Vec::new(), c: Vec::new() };
            for j in spec.levels() {
                for (v, n) in [(&mut d.a, "diag_a"), (&mut d.b, "diag_b"), (&mut d.c, "diag_c")] {
                    let (_, vec) = next(&format!("{n}_{j}"))?;
                    if vec.len() != spec.side(j) {
                        return Err(Error::Format(format!("{n}_{j} has wrong length")));
                    }
                    v.push(vec);
                }
            }
            let coarse = matrix(next("coarse")?)?;
            check_side(&coarse, spec.m)?;
            FormFile::Split(SplitForm {
                smooth: ModifiedForm { spec, alpha: al, beta: be, gamma: ga },
                dyadic: d,
                coarse,
                meta: header.meta.clone(),
            })
        }
        other => return Err(Error::Format(format!("unknown form kind `{other}`"))),
    };
    if cursor != payload.len() {
        return Err(Error::Format("trailing bytes after last block".into()));
    }
    Ok((header, form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{kernel_registry_get, KernelParams};
    use crate::nsform::{build_nsform_pyramid, split, BuildOptions};

    #[test]
    fn round_trip_and_corruption() {
        let g = GridSpec::new(2, 4).unwrap();
        let k = kernel_registry_get("truncated-hilbert", &KernelParams::default(), &g).unwrap();
        let nsf = build_nsform_pyramid(&k, &g, &BuildOptions::banded(2)).unwrap();
        let sf = split(&nsf);
        let dir = tempfile::tempdir().unwrap();
        for (name, form) in [("nsf.bin", FormFile::NonStandard(nsf)), ("split.bin", FormFile::Split(sf))] {
            let path = dir.path().join(name);
            write_form_file(&path, &form).unwrap();
            assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, encoded_len(&form).unwrap());
            let (header, back) = read_form_file(&path).unwrap();
            assert_eq!(back, form);
            assert_eq!(header.meta.band, Some(2));

            let mut bytes = std::fs::read(&path).unwrap();
            let last = bytes.len() - 3;
            bytes[last] ^= 0x55;
            std::fs::write(&path, &bytes).unwrap();
            assert!(matches!(read_form_file(&path), Err(Error::Checksum { .. })));
        }
    }
}
