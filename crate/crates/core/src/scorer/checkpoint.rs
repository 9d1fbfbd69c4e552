//! Trained-model checkpoint: a key=value manifest plus a little-endian f32 dump of
//! the parameter buffer (`W1` row-major, `b1`, `W2`, `b2`).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{ScorerParams, Shape};
use crate::data::TimeRange;
use crate::error::{Error, Result};
use crate::text::Variant;

pub const MANIFEST_NAME: &str = "checkpoint.manifest";
pub const PARAMS_NAME: &str = "checkpoint.params";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ScorerParams,
    pub range: TimeRange,
    pub variant: Variant,
    /// Encoder spec the model was trained with, e.g. `hash:0` or `table:emb.bin`.
    pub encoder: String,
    pub seed: u64,
    /// Training configuration echo, written as `config.<key>=<value>`.
    pub config: BTreeMap<String, String>,
}

impl Checkpoint {
    fn render_manifest(&self) -> String {
        let s = self.params.shape();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("format", "temt-checkpoint-1".into());
        kv("text_dim", s.text_dim.to_string());
        kv("time_dim", s.time_dim.to_string());
        kv("hidden", s.hidden.to_string());
        kv("t_min", self.range.min.to_string());
        kv("t_max", self.range.max.to_string());
        kv("variant", self.variant.tag().into());
        kv("encoder", self.encoder.clone());
        kv("seed", self.seed.to_string());
        kv("param_count", s.len().to_string());
        for (k, v) in &self.config {
            kv(&format!("config.{k}"), v.clone());
        }
        out
    }

    /// Writes both files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let manifest = dir.join(MANIFEST_NAME);
        fs::write(&manifest, self.render_manifest())
            .map_err(|e| Error::io(format!("writing {}", manifest.display()), e))?;
        let mut bytes = Vec::with_capacity(self.params.values().len() * 4);
        for &v in self.params.values() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let params = dir.join(PARAMS_NAME);
        fs::write(&params, bytes).map_err(|e| Error::io(format!("writing {}", params.display()), e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&manifest_path)
            .map_err(|e| Error::io(format!("reading {}", manifest_path.display()), e))?;
        let bad = |message: String| Error::Ingestion {
            file: manifest_path.clone(),
            line: 0,
            message,
        };
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Ingestion {
                file: manifest_path.clone(),
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| map.get(k).ok_or_else(|| bad(format!("missing key `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("`{k}` is not a number: {v}"))
        }
        let field = |k: &str| -> Result<String> { get(k).cloned() };
        let shape = Shape {
            text_dim: num("text_dim", &field("text_dim")?).map_err(bad)?,
            time_dim: num("time_dim", &field("time_dim")?).map_err(bad)?,
            hidden: num("hidden", &field("hidden")?).map_err(bad)?,
        };
        let range = TimeRange::new(
            num("t_min", &field("t_min")?).map_err(bad)?,
            num("t_max", &field("t_max")?).map_err(bad)?,
        )?;
        let variant: Variant = field("variant")?.parse()?;
        let encoder = field("encoder")?;
        let seed = num("seed", &field("seed")?).map_err(bad)?;
        let config = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v.clone())))
            .collect();

        let params_path = dir.join(PARAMS_NAME);
        let bytes =
            fs::read(&params_path).map_err(|e| Error::io(format!("reading {}", params_path.display()), e))?;
        if bytes.len() != shape.len() * 4 {
            return Err(Error::Shape {
                what: "checkpoint parameter file (bytes)",
                expected: shape.len() * 4,
                actual: bytes.len(),
            });
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let params = ScorerParams::from_values(shape, values)?;
        if !params.is_finite() {
            return Err(bad("parameters contain non-finite values".into()));
        }
        Ok(Self {
            params,
            range,
            variant,
            encoder,
            seed,
            config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let shape = Shape {
            text_dim: 6,
            time_dim: 4,
            hidden: 3,
        };
        let mut params = ScorerParams::init(shape, &mut ChaCha8Rng::seed_from_u64(2));
        // keep values exactly representable in f32
        for v in params.values_mut() {
            *v = (*v as f32) as f64;
        }
        Checkpoint {
            params,
            range: TimeRange::new(1950, 2020).unwrap(),
            variant: Variant::Names,
            encoder: "hash:3".into(),
            seed: 42,
            config: [("epochs".to_string(), "50".to_string())].into_iter().collect(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ck = sample();
        ck.write(dir.path()).unwrap();
        assert_eq!(Checkpoint::read(dir.path()).unwrap(), ck);
        let size = fs::metadata(dir.path().join(PARAMS_NAME)).unwrap().len();
        assert_eq!(size as usize, ck.params.shape().len() * 4);
    }

    #[test]
    fn truncated_params_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        let p = dir.path().join(PARAMS_NAME);
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(Checkpoint::read(dir.path()), Err(Error::Shape { .. })));
    }

    #[test]
    fn missing_key_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        sample().write(dir.path()).unwrap();
        let m = dir.path().join(MANIFEST_NAME);
        let text = fs::read_to_string(&m).unwrap().replace("hidden=3\n", "");
        fs::write(&m, text).unwrap();
        let err = Checkpoint::read(dir.path()).unwrap_err().to_string();
        assert!(err.contains("hidden"), "{err}");
    }
}
