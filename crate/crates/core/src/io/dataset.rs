use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::reader::{put_complex, read_file, Reader};
use crate::error::{Error, Result};
use crate::harness::{Dims, Sample};

pub const DATASET_MAGIC: &[u8; 6] = b"BIMCE1";
const VERSION: u32 = 1;
const WHAT: &str = "dataset";

fn header(d: &Dims, count: usize) -> Vec<u8> {
    let mut out = DATASET_MAGIC.to_vec();
    for v in [VERSION as usize, d.n_r, d.n_s, d.n_c, d.n_l, d.n_cp, d.n_lp, count] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out
}

fn put_sample(out: &mut Vec<u8>, d: &Dims, s: &Sample) -> Result<()> {
    if s.belief.len() != d.n_r || s.g_true.len() != d.full_len() || s.g_ls_p.len() != d.pilot_len() {
        return Err(Error::dim(WHAT, format!("sample {} does not match header dims", s.seed)));
    }
    out.extend_from_slice(&s.ebno_db.to_le_bytes());
    out.extend_from_slice(&s.seed.to_le_bytes());
    for b in &s.belief {
        out.extend_from_slice(&b.to_le_bytes());
    }
    put_complex(out, &s.g_true);
    put_complex(out, &s.g_ls_p);
    Ok(())
}

pub fn encode_dataset(d: &Dims, samples: &[Sample]) -> Result<Vec<u8>> {
    let mut out = header(d, samples.len());
    for s in samples {
        put_sample(&mut out, d, s)?;
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(Dims, Vec<Sample>)> {
    let mut r = Reader::new(WHAT, bytes);
    r.magic(DATASET_MAGIC)?;
    r.version(VERSION)?;
    let mut f = [0usize; 7];
    for (v, name) in f.iter_mut().zip(["n_r", "n_s", "n_c", "n_l", "n_cp", "n_lp", "count"]) {
        *v = r.u32(name)? as usize;
    }
    let d = Dims {
        n_r: f[0],
        n_s: f[1],
        n_c: f[2],
        n_l: f[3],
        n_cp: f[4],
        n_lp: f[5],
    };
    if d.n_cp > d.n_c || d.n_lp > d.n_l {
        return Err(Error::Malformed {
            what: WHAT,
            detail: format!("pilot grid {}x{} exceeds full grid {}x{}", d.n_cp, d.n_lp, d.n_c, d.n_l),
        });
    }
    let count = f[6];
    let per = 4 + 8 + 4 * d.n_r + 8 * (d.full_len() + d.pilot_len());
    let available = bytes.len().saturating_sub(6 + 4 * 8);
    if per * count > available {
        return Err(Error::Truncated {
            what: WHAT,
            detail: format!("header declares {count} samples of {per} bytes, payload has {available}"),
        });
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let ebno_db = r.f32("ebno_db")?;
        let seed = r.u64("seed")?;
        let belief = (0..d.n_r).map(|_| r.f32("belief")).collect::<Result<_>>()?;
        let g_true = r.complex(d.full_len(), &format!("sample {i} G_true"))?;
        let g_ls_p = r.complex(d.pilot_len(), &format!("sample {i} G_ls_p"))?;
        samples.push(Sample {
            ebno_db,
            seed,
            belief,
            g_true,
            g_ls_p,
        });
    }
    r.finish()?;
    Ok((d, samples))
}

/// Streams samples to disk; the header count is fixed up front.
pub struct DatasetWriter {
    out: BufWriter<File>,
    dims: Dims,
    expected: usize,
    written: usize,
    buf: Vec<u8>,
}

impl DatasetWriter {
    pub fn create(path: &Path, dims: Dims, count: usize) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header(&dims, count))?;
        Ok(Self {
            out,
            dims,
            expected: count,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, s: &Sample) -> Result<()> {
        if self.written == self.expected {
            return Err(Error::Contract(format!("dataset header declares {} samples", self.expected)));
        }
        self.buf.clear();
        put_sample(&mut self.buf, &self.dims, s)?;
        self.out.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::Contract(format!(
                "wrote {} of {} declared samples",
                self.written, self.expected
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_dataset(path: &Path, d: &Dims, samples: &[Sample]) -> Result<()> {
    let mut w = DatasetWriter::create(path, *d, samples.len())?;
    for s in samples {
        w.write(s)?;
    }
    w.finish()
}

pub fn read_dataset(path: &Path) -> Result<(Dims, Vec<Sample>)> {
    decode_dataset(&read_file(path, "generate one with `bimce generate`")?)
}
