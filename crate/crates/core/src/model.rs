//! Network description and parameter storage.
//!
//! The surrogate is a fully connected tanh network from `(x, t)` to a
//! scalar. Parameters live in one flat vector with a canonical layout:
//! for each layer, the weight matrix row-major (`w[j][k]` = weight from
//! input `k` to unit `j`) followed by that layer's biases, so optimizer
//! state, checkpoints, and gradient vectors all index the same way.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// RNG identifier recorded in checkpoints and run metadata. All stochastic
/// choices in the crate come from this generator so runs replay exactly.
pub const RNG_ID: &str = "chacha8";

const CKPT_MAGIC: &str = "PINNCKPT v1";

/// Layer widths of the network, input to output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
}

impl ModelSpec {
    /// Widths must start at 2 (x and t), end at 1, and include at least
    /// one hidden layer.
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "model needs at least one hidden layer, got widths {layer_sizes:?}"
            )));
        }
        if layer_sizes[0] != 2 || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArgument(format!(
                "model maps (x, t) to a scalar; widths must run 2 ... 1, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidArgument("zero-width layer".into()));
        }
        Ok(Self { layer_sizes })
    }

    /// Three hidden layers of 64: the width used for full-scale runs.
    pub fn full_scale() -> Self {
        Self::new(vec![2, 64, 64, 64, 1]).unwrap()
    }

    /// Two hidden layers of 32: the reduced width for desk-scale runs.
    pub fn desk_scale() -> Self {
        Self::new(vec![2, 32, 32, 1]).unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Hidden activation; the output layer is linear.
    pub fn activation(&self) -> &'static str {
        "tanh"
    }

    /// Total number of weights and biases in the canonical flat layout.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(weight_offset, bias_offset, n_in, n_out)` per layer, in flat-vector
    /// order.
    pub(crate) fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let entry = (off, off + n_in * n_out, n_in, n_out);
                off += n_in * n_out + n_out;
                entry
            })
            .collect()
    }

    /// Comma-joined layer widths, e.g. `2,32,32,1`.
    pub fn layers_string(&self) -> String {
        self.layer_sizes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Inverse of [`Self::layers_string`].
    pub fn from_layers_string(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad layer list {s:?}: {e}")))?;
        Self::new(sizes)
    }
}

/// Flat parameter vector bound to the spec that shapes it. Construction
/// checks length and finiteness once, so evaluation paths stay infallible.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    spec: ModelSpec,
    entries: Vec<f64>,
}

impl ParameterVector {
    pub fn new(spec: ModelSpec, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != spec.param_count() {
            return Err(Error::ParamCountMismatch {
                expected: spec.param_count(),
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter vector".into(),
            });
        }
        Ok(Self { spec, entries })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// In-place update `w += delta`, the only mutation training performs.
    pub fn apply_delta(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.entries.len() {
            return Err(Error::ParamCountMismatch {
                expected: self.entries.len(),
                got: delta.len(),
            });
        }
        for (w, d) in self.entries.iter_mut().zip(delta) {
            *w += *d;
        }
        if self.entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "parameter update".into(),
            });
        }
        Ok(())
    }

    /// Mutable access for tests and finite-difference probes.
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }
}

/// Uniform draw on the open interval (0, 1): 53 random bits, offset half
/// an ulp so neither endpoint can occur.
pub(crate) fn unit_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Glorot-uniform weights (bound sqrt(6 / (n_in + n_out)) per layer),
/// zero biases. Draw order is the canonical flat layout, so a seed fixes
/// every entry.
pub fn init_params(spec: &ModelSpec, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_rng(spec, &mut rng)
}

/// Initialization drawing from a caller-owned stream, so the training
/// loop can keep spending the same stream on epoch shuffles.
pub fn init_params_rng(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> ParameterVector {
    let mut entries = vec![0.0; spec.param_count()];
    for (w_off, b_off, n_in, n_out) in spec.layer_offsets() {
        let bound = (6.0 / (n_in + n_out) as f64).sqrt();
        for w in &mut entries[w_off..w_off + n_in * n_out] {
            *w = (2.0 * unit_open(rng) - 1.0) * bound;
        }
        // Biases start at zero; the slice is already zeroed.
        let _ = b_off;
    }
    ParameterVector {
        spec: spec.clone(),
        entries,
    }
}

/// Network output at a single point.
pub fn forward(params: &ParameterVector, x: f64, t: f64) -> f64 {
    let mut ws = crate::autodiff::net::NetWorkspace::new(params.spec());
    crate::autodiff::net::forward_into(params.spec(), params.entries(), x, t, &mut ws)
}

/// Write a checkpoint: a text header with the model spec, seed, RNG id and
/// any extra metadata, then one parameter per line at full precision.
/// The format round-trips byte-for-byte.
pub fn save_checkpoint(
    params: &ParameterVector,
    seed: u64,
    extra: &[(String, String)],
    path: &Path,
) -> Result<()> {
    let mut out = String::new();
    out.push_str(CKPT_MAGIC);
    out.push('\n');
    out.push_str(&format!("layers={}\n", params.spec.layers_string()));
    out.push_str(&format!("activation={}\n", params.spec.activation()));
    out.push_str(&format!("seed={seed}\n"));
    out.push_str(&format!("rng={RNG_ID}\n"));
    for (k, v) in extra {
        out.push_str(&format!("{k}={v}\n"));
    }
    out.push_str(&format!("count={}\n", params.len()));
    for v in &params.entries {
        out.push_str(&format!("{v:.16e}\n"));
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Checkpoint contents: parameters plus the header metadata.
pub struct Checkpoint {
    pub params: ParameterVector,
    pub seed: u64,
    pub metadata: BTreeMap<String, String>,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bad = |reason: &str| Error::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let magic = lines.next().ok_or_else(|| bad("empty file"))??;
    if magic != CKPT_MAGIC {
        return Err(bad(&format!("bad magic line {magic:?}")));
    }
    let mut meta = BTreeMap::new();
    let mut count: Option<usize> = None;
    for line in lines.by_ref() {
        let line = line?;
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(&format!("expected key=value, got {line:?}")))?;
        if k == "count" {
            count = Some(
                v.parse()
                    .map_err(|e| bad(&format!("bad count {v:?}: {e}")))?,
            );
            break;
        }
        meta.insert(k.to_string(), v.to_string());
    }
    let count = count.ok_or_else(|| bad("missing count line"))?;
    let layers = meta
        .get("layers")
        .ok_or_else(|| bad("missing layers key"))?;
    let spec = ModelSpec::from_layers_string(layers)?;
    let seed = meta
        .get("seed")
        .ok_or_else(|| bad("missing seed key"))?
        .parse::<u64>()
        .map_err(|e| bad(&format!("bad seed: {e}")))?;
    let mut entries = Vec::with_capacity(count);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        entries.push(
            line.parse::<f64>()
                .map_err(|e| bad(&format!("bad parameter {line:?}: {e}")))?,
        );
    }
    if entries.len() != count {
        return Err(bad(&format!(
            "count says {count} parameters, file has {}",
            entries.len()
        )));
    }
    let params = ParameterVector::new(spec, entries)?;
    Ok(Checkpoint { params, seed, metadata: meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_count_matches_layout() {
        // (2*64+64) + (64*64+64) + (64*64+64) + (64*1+1) = 8577
        assert_eq!(ModelSpec::full_scale().param_count(), 8577);
        // 2*32+32 + 32*32+32 + 32*1+1 = 1185
        assert_eq!(ModelSpec::desk_scale().param_count(), 1185);
    }

    #[test]
    fn spec_rejects_bad_shapes() {
        assert!(ModelSpec::new(vec![2, 1]).is_err());
        assert!(ModelSpec::new(vec![3, 8, 1]).is_err());
        assert!(ModelSpec::new(vec![2, 8, 2]).is_err());
        assert!(ModelSpec::new(vec![2, 0, 1]).is_err());
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let spec = ModelSpec::desk_scale();
        let a = init_params(&spec, 7);
        let b = init_params(&spec, 7);
        let c = init_params(&spec, 8);
        assert_eq!(a.entries(), b.entries());
        assert_ne!(a.entries(), c.entries());

        for (w_off, b_off, n_in, n_out) in spec.layer_offsets() {
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            for &w in &a.entries()[w_off..w_off + n_in * n_out] {
                assert!(w.abs() < bound, "weight {w} outside Glorot bound {bound}");
            }
            for &bv in &a.entries()[b_off..b_off + n_out] {
                assert_eq!(bv, 0.0, "biases must start at zero");
            }
        }
    }

    #[test]
    fn vector_rejects_wrong_length_and_nonfinite() {
        let spec = ModelSpec::new(vec![2, 3, 1]).unwrap();
        assert!(ParameterVector::new(spec.clone(), vec![0.0; 5]).is_err());
        let mut good = vec![0.0; spec.param_count()];
        good[0] = f64::NAN;
        assert!(ParameterVector::new(spec, good).is_err());
    }

    #[test]
    fn checkpoint_round_trips_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let spec = ModelSpec::new(vec![2, 5, 1]).unwrap();
        let params = init_params(&spec, 123);
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        let extra = vec![("pde_hash".to_string(), "deadbeef00112233".to_string())];
        save_checkpoint(&params, 123, &extra, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.params, params);
        assert_eq!(loaded.seed, 123);
        assert_eq!(loaded.metadata.get("pde_hash").unwrap(), "deadbeef00112233");
        save_checkpoint(&loaded.params, loaded.seed, &extra, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ckpt");
        std::fs::write(&p, "PINNCKPT v1\nlayers=2,3,1\nseed=1\ncount=2\n1.0\n").unwrap();
        assert!(load_checkpoint(&p).is_err());
        std::fs::write(&p, "NOTCKPT\n").unwrap();
        assert!(load_checkpoint(&p).is_err());
    }
}
