//! Binary container for observed paths.
//!
//! Layout:
//!
//! ```text
//! SDIFFPATH1\n
//! n=<u64>\n
//! p=<u64>\n
//! substeps=<u64>\n
//! covariate_seed=<u64>\n
//! brownian_seed=<u64>\n
//! spec_digest=<16 hex digits>\n
//! \n
//! payload: (n+1) little-endian f64 (x), then p·(n+1) little-endian f64
//!          (z, row-major: covariate 0 at t_0..t_n, covariate 1, ...)
//! checksum: u64 little-endian, the first 8 bytes of SHA-256(payload)
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ObservedPath, PathMeta};

pub const MAGIC: &str = "SDIFFPATH1";

pub fn save_path(path: &ObservedPath, dest: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(dest)?);
    write_path(path, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_path(src: impl AsRef<Path>) -> Result<ObservedPath> {
    let mut bytes = Vec::new();
    File::open(src)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_path<W: Write>(path: &ObservedPath, out: &mut W) -> Result<()> {
    path.validate()?;
    let meta = &path.meta;
    write!(
        out,
        "{MAGIC}\nn={}\np={}\nsubsteps={}\ncovariate_seed={}\nbrownian_seed={}\nspec_digest={:016x}\n\n",
        path.n,
        path.p(),
        meta.substeps,
        meta.covariate_seed,
        meta.brownian_seed,
        meta.spec_digest
    )?;
    let payload = encode_payload(path);
    out.write_all(&payload)?;
    out.write_all(&checksum(&payload).to_le_bytes())?;
    Ok(())
}

pub fn read_path<R: Read>(input: &mut R) -> Result<ObservedPath> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn encode_payload(path: &ObservedPath) -> Vec<u8> {
    let mut buf = Vec::with_capacity(8 * (path.n + 1) * (path.p() + 1));
    for v in &path.x {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..path.p() {
        for k in 0..=path.n {
            buf.extend_from_slice(&path.z[(i, k)].to_le_bytes());
        }
    }
    buf
}

fn checksum(payload: &[u8]) -> u64 {
    let hash = Sha256::digest(payload);
    let mut word = [0u8; 8];
    word.copy_from_slice(&hash[..8]);
    u64::from_le_bytes(word)
}

#[derive(Default)]
struct Header {
    n: Option<usize>,
    p: Option<usize>,
    substeps: Option<usize>,
    covariate_seed: Option<u64>,
    brownian_seed: Option<u64>,
    spec_digest: Option<u64>,
}

fn decode(bytes: &[u8]) -> Result<ObservedPath> {
    let mut lines = LineReader { bytes, pos: 0 };
    match lines.next_line() {
        Some(MAGIC) => {}
        _ => return Err(Error::Format(format!("missing magic string {MAGIC}"))),
    }

    let mut header = Header::default();
    loop {
        let line = lines
            .next_line()
            .ok_or_else(|| Error::Corrupt("header is not terminated".into()))?;
        if line.is_empty() {
            break;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header line `{line}`")))?;
        let bad = |e: &dyn std::fmt::Display| Error::Format(format!("header `{key}`: {e}"));
        match key {
            "n" => header.n = Some(value.parse().map_err(|e| bad(&e))?),
            "p" => header.p = Some(value.parse().map_err(|e| bad(&e))?),
            "substeps" => header.substeps = Some(value.parse().map_err(|e| bad(&e))?),
            "covariate_seed" => header.covariate_seed = Some(value.parse().map_err(|e| bad(&e))?),
            "brownian_seed" => header.brownian_seed = Some(value.parse().map_err(|e| bad(&e))?),
            "spec_digest" => {
                header.spec_digest = Some(u64::from_str_radix(value, 16).map_err(|e| bad(&e))?)
            }
            other => return Err(Error::Format(format!("unknown header key `{other}`"))),
        }
    }
    let missing = |k: &str| Error::Format(format!("header is missing `{k}`"));
    let n = header.n.ok_or_else(|| missing("n"))?;
    let p = header.p.ok_or_else(|| missing("p"))?;
    if n == 0 || p == 0 {
        return Err(Error::Format("n and p must be positive".into()));
    }
    let meta = PathMeta {
        substeps: header.substeps.ok_or_else(|| missing("substeps"))?,
        covariate_seed: header.covariate_seed.ok_or_else(|| missing("covariate_seed"))?,
        brownian_seed: header.brownian_seed.ok_or_else(|| missing("brownian_seed"))?,
        spec_digest: header.spec_digest.ok_or_else(|| missing("spec_digest"))?,
    };

    let values = (n + 1)
        .checked_mul(p + 1)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let payload_len = 8 * values;
    let rest = &bytes[lines.pos..];
    if rest.len() != payload_len + 8 {
        return Err(Error::Corrupt(format!(
            "expected {} payload bytes and an 8-byte checksum, found {} bytes",
            payload_len,
            rest.len()
        )));
    }
    let (payload, tail) = rest.split_at(payload_len);
    let stored = u64::from_le_bytes(tail.try_into().expect("8-byte checksum"));
    if stored != checksum(payload) {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }

    let mut floats = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let x: Vec<f64> = floats.by_ref().take(n + 1).collect();
    let z_row_major: Vec<f64> = floats.collect();
    let z = DMatrix::from_row_slice(p, n + 1, &z_row_major);
    let path = ObservedPath { n, x, z, meta };
    path.validate()?;
    Ok(path)
}

struct LineReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> LineReader<'a> {
    /// Next `\n`-terminated ASCII line, without the terminator.
    fn next_line(&mut self) -> Option<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest.iter().take(256).position(|b| *b == b'\n')?;
        let line = std::str::from_utf8(&rest[..end]).ok()?;
        self.pos += end + 1;
        Some(line)
    }
}
