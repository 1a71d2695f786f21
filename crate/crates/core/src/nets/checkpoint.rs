//! Checkpoint files: a text manifest terminated by an `end` line, followed by
//! a little-endian f32 blob.

use std::collections::HashMap;
use std::path::Path;

use super::model::Model;
use super::spec::{Backbone, ModelSpec, Placement};
use crate::error::{Error, Result};
use crate::tensor::{Activation, Tensor};

const MAGIC: &str = "BIMCKPT";
const VERSION: u32 = 1;
const WHAT: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub val_nmse_db: f64,
}

impl Default for TrainingMeta {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 0,
            best_epoch: 0,
            val_nmse_db: f64::NAN,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub meta: TrainingMeta,
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed {
        what: WHAT,
        detail: detail.into(),
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| malformed(format!("bad index list {s:?}"))))
        .collect()
}

impl Checkpoint {
    pub fn new(model: Model<f32>, meta: TrainingMeta) -> Self {
        Self { model, meta }
    }

    pub fn spec(&self) -> &ModelSpec {
        self.model.spec()
    }

    pub fn encode(&self) -> Vec<u8> {
        let s = self.model.spec();
        let mut m = format!("{MAGIC}\nversion = {VERSION}\n");
        let mut kv = |k: &str, v: String| m.push_str(&format!("{k} = {v}\n"));
        kv("spec.backbone", s.backbone.name().into());
        kv("spec.placement", s.placement.name().into());
        kv("spec.channels", s.channels.to_string());
        kv("spec.blocks", s.blocks.to_string());
        kv("spec.kernel", s.kernel.to_string());
        kv("spec.n_r", s.n_r.to_string());
        kv("spec.n_c", s.n_c.to_string());
        kv("spec.n_l", s.n_l.to_string());
        kv("spec.pilot_subcarriers", join(&s.pilot_subcarriers));
        kv("spec.pilot_symbols", join(&s.pilot_symbols));
        kv("spec.inner_act", s.inner_act.name().into());
        kv("spec.outer_act", s.outer_act.name().into());
        kv("spec.belief_mean_db", s.belief_norm.0.to_string());
        kv("spec.belief_std_db", s.belief_norm.1.to_string());
        kv("spec.input_scale", s.input_scale.to_string());
        kv("meta.seed", self.meta.seed.to_string());
        kv("meta.epochs", self.meta.epochs.to_string());
        kv("meta.best_epoch", self.meta.best_epoch.to_string());
        kv("meta.val_nmse_db", self.meta.val_nmse_db.to_string());
        let mut offset = 0usize;
        for (name, t) in self.model.named() {
            let bytes = 4 * t.len();
            m.push_str(&format!("tensor {name} {} {offset} {bytes}\n", join(t.shape())));
            offset += bytes;
        }
        m.push_str("end\n");
        let mut out = m.into_bytes();
        out.reserve(offset);
        for (_, t) in self.model.named() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut lines = Vec::new();
        let mut pos = 0;
        loop {
            let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
                if lines.is_empty() {
                    let found = String::from_utf8_lossy(&bytes[..bytes.len().min(MAGIC.len())]).into_owned();
                    return Err(Error::BadMagic {
                        what: WHAT,
                        expected: MAGIC.into(),
                        found,
                    });
                }
                return Err(Error::Truncated {
                    what: WHAT,
                    detail: "manifest has no end line".into(),
                });
            };
            let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| malformed("manifest is not UTF-8"));
            pos += nl + 1;
            if lines.is_empty() {
                let l = line.unwrap_or("");
                if l != MAGIC {
                    return Err(Error::BadMagic {
                        what: WHAT,
                        expected: MAGIC.into(),
                        found: l.chars().take(16).collect(),
                    });
                }
                lines.push(l);
                continue;
            }
            let line = line?;
            if line == "end" {
                break;
            }
            lines.push(line);
        }
        let blob = &bytes[pos..];

        let mut fields = HashMap::new();
        let mut tensors = Vec::new();
        for line in &lines[1..] {
            if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                let [name, shape, offset, len] = parts[..] else {
                    return Err(malformed(format!("bad tensor line {line:?}")));
                };
                let shape = split(shape)?;
                let offset: usize = offset.parse().map_err(|_| malformed(format!("bad offset in {line:?}")))?;
                let len: usize = len.parse().map_err(|_| malformed(format!("bad length in {line:?}")))?;
                if len != 4 * shape.iter().product::<usize>() {
                    return Err(malformed(format!("{name}: byte length {len} disagrees with shape {shape:?}")));
                }
                tensors.push((name.to_string(), shape, offset, len));
            } else if let Some((k, v)) = line.split_once(" = ") {
                fields.insert(k.to_string(), v.to_string());
            } else {
                return Err(malformed(format!("bad line {line:?}")));
            }
        }
        let get = |k: &str| fields.get(k).map(String::as_str).ok_or_else(|| malformed(format!("missing field {k}")));
        let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| malformed(format!("{k} is not an integer"))) };
        let real = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| malformed(format!("{k} is not a number"))) };
        let version: u32 = get("version")?.parse().map_err(|_| malformed("bad version"))?;
        if version != VERSION {
            return Err(Error::BadVersion {
                what: WHAT,
                expected: VERSION,
                found: version,
            });
        }
        let act = |k: &str| -> Result<Activation> {
            Activation::parse(get(k)?).ok_or_else(|| malformed(format!("{k}: unknown activation")))
        };
        let spec = ModelSpec {
            backbone: Backbone::parse(get("spec.backbone")?).ok_or_else(|| malformed("unknown backbone"))?,
            placement: Placement::parse(get("spec.placement")?).ok_or_else(|| malformed("unknown placement"))?,
            channels: num("spec.channels")?,
            blocks: num("spec.blocks")?,
            kernel: num("spec.kernel")?,
            n_r: num("spec.n_r")?,
            n_c: num("spec.n_c")?,
            n_l: num("spec.n_l")?,
            pilot_subcarriers: split(get("spec.pilot_subcarriers")?)?,
            pilot_symbols: split(get("spec.pilot_symbols")?)?,
            inner_act: act("spec.inner_act")?,
            outer_act: act("spec.outer_act")?,
            belief_norm: (real("spec.belief_mean_db")?, real("spec.belief_std_db")?),
            input_scale: real("spec.input_scale")?,
        };
        let meta = TrainingMeta {
            seed: get("meta.seed")?.parse().map_err(|_| malformed("meta.seed"))?,
            epochs: num("meta.epochs")?,
            best_epoch: num("meta.best_epoch")?,
            val_nmse_db: real("meta.val_nmse_db")?,
        };
        let mut named = Vec::with_capacity(tensors.len());
        for (name, shape, offset, len) in tensors {
            let end = offset.checked_add(len).filter(|&e| e <= blob.len()).ok_or_else(|| Error::Truncated {
                what: WHAT,
                detail: format!("{name} needs bytes {offset}..{}, blob has {}", offset + len, blob.len()),
            })?;
            let data = blob[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            named.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self {
            model: Model::from_named(spec, named)?,
            meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read(path) {
            Ok(b) => Self::decode(&b),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingFile {
                path: path.display().to_string(),
                hint: "train a model first (bimce train) or pass --checkpoint".into(),
            }),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PilotPattern;

    fn ckpt() -> Checkpoint {
        let pattern = PilotPattern::with_total(8, 4, 6, &[1, 3], 1).unwrap();
        let mut spec = ModelSpec::new(Backbone::Conv, Placement::All, 2, &pattern);
        spec.channels = 4;
        spec.blocks = 1;
        Checkpoint::new(
            Model::init(spec, 4).unwrap(),
            TrainingMeta {
                seed: u64::MAX - 3,
                epochs: 3,
                best_epoch: 2,
                val_nmse_db: -7.123456789012345,
            },
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let c = ckpt();
        let bytes = c.encode();
        let d = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.encode(), bytes);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = ckpt().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::BadMagic { .. })));
        let text = String::from_utf8_lossy(&ckpt().encode()).replacen("version = 1", "version = 7", 1);
        assert!(matches!(Checkpoint::decode(text.as_bytes()), Err(Error::BadVersion { found: 7, .. })));
    }

    #[test]
    fn truncated_blob() {
        let bytes = ckpt().encode();
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn missing_file_is_actionable() {
        let err = Checkpoint::load(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.ckpt"));
    }
}
