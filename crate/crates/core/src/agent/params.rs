//! Network configuration, flat parameter storage and checkpoints.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::NetError;
use crate::GymRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub obs_dim: usize,
    pub n_actions: usize,
    pub lstm_units: usize,
    pub fc_units: usize,
    /// Image observations pass through a rectified fully connected layer.
    pub use_fc: bool,
}

impl NetConfig {
    pub fn vector(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            obs_dim,
            n_actions,
            lstm_units: 48,
            fc_units: 64,
            use_fc: false,
        }
    }

    pub fn image(obs_dim: usize, n_actions: usize) -> Self {
        Self {
            use_fc: true,
            ..Self::vector(obs_dim, n_actions)
        }
    }

    pub fn feature_dim(&self) -> usize {
        if self.use_fc {
            self.fc_units
        } else {
            self.obs_dim
        }
    }

    /// LSTM input width: features, one-hot previous action, previous reward.
    pub fn input_dim(&self) -> usize {
        self.feature_dim() + self.n_actions + 1
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let dims = [
            ("obs_dim", self.obs_dim),
            ("n_actions", self.n_actions),
            ("lstm_units", self.lstm_units),
            ("fc_units", self.fc_units),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NetError::Checkpoint(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Named parameter blocks, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    FcW,
    FcB,
    LstmWx,
    LstmWh,
    LstmB,
    PolicyW,
    PolicyB,
    ValueW,
    ValueB,
}

impl Block {
    pub const ALL: [Block; 9] = [
        Block::FcW,
        Block::FcB,
        Block::LstmWx,
        Block::LstmWh,
        Block::LstmB,
        Block::PolicyW,
        Block::PolicyB,
        Block::ValueW,
        Block::ValueB,
    ];

    /// `(rows, cols)`; biases have one column.
    pub fn shape(self, c: &NetConfig) -> (usize, usize) {
        let h = c.lstm_units;
        let fc = if c.use_fc { c.fc_units } else { 0 };
        match self {
            Block::FcW => (fc, if c.use_fc { c.obs_dim } else { 0 }),
            Block::FcB => (fc, 1),
            Block::LstmWx => (4 * h, c.input_dim()),
            Block::LstmWh => (4 * h, h),
            Block::LstmB => (4 * h, 1),
            Block::PolicyW => (c.n_actions, h),
            Block::PolicyB => (c.n_actions, 1),
            Block::ValueW => (1, h),
            Block::ValueB => (1, 1),
        }
    }

    pub fn is_weight(self) -> bool {
        matches!(
            self,
            Block::FcW | Block::LstmWx | Block::LstmWh | Block::PolicyW | Block::ValueW
        )
    }
}

/// Offsets of each block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    offsets: [usize; 10],
}

impl Layout {
    pub fn new(c: &NetConfig) -> Self {
        let mut offsets = [0; 10];
        for (i, b) in Block::ALL.iter().enumerate() {
            let (r, k) = b.shape(c);
            offsets[i + 1] = offsets[i] + r * k;
        }
        Self { offsets }
    }

    pub fn range(&self, b: Block) -> std::ops::Range<usize> {
        let i = Block::ALL.iter().position(|&x| x == b).expect("known block");
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn len(&self) -> usize {
        self.offsets[9]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Block containing flat index `i`.
    pub fn block_of(&self, i: usize) -> Block {
        let k = self.offsets.partition_point(|&o| o <= i) - 1;
        Block::ALL[k.min(8)]
    }
}

/// Flat storage shared by parameters and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    pub config: NetConfig,
    layout: Layout,
    pub data: Vec<f64>,
}

/// All network parameters.
pub type ParamSet = Tensors;
/// Gradients with the same layout as [`ParamSet`].
pub type GradSet = Tensors;

impl Tensors {
    pub fn zeros(config: NetConfig) -> Self {
        let layout = Layout::new(&config);
        Self {
            config,
            layout,
            data: vec![0.0; layout.len()],
        }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn block(&self, b: Block) -> &[f64] {
        &self.data[self.layout.range(b)]
    }

    pub fn block_mut(&mut self, b: Block) -> &mut [f64] {
        let r = self.layout.range(b);
        &mut self.data[r]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.data.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &Tensors) {
        assert_eq!(self.config, other.config, "layout mismatch");
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    /// Flat little-endian `f64` array plus a JSON manifest of block shapes.
    pub fn save(&self, bin_path: &Path, manifest_path: &Path) -> Result<(), NetError> {
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(bin_path, bytes)?;
        let manifest = Manifest {
            config: self.config,
            dtype: "f64-le".into(),
            len: self.len(),
            blocks: Block::ALL
                .iter()
                .map(|&b| {
                    let (rows, cols) = b.shape(&self.config);
                    ManifestBlock {
                        name: b,
                        shape: [rows, cols],
                        offset: self.layout.range(b).start,
                    }
                })
                .collect(),
        };
        fs::write(manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(bin_path: &Path, manifest_path: &Path) -> Result<Self, NetError> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
        let bytes = fs::read(bin_path)?;
        if bytes.len() != manifest.len * 8 {
            return Err(NetError::Checkpoint(format!(
                "{} bytes on disk, manifest expects {} values",
                bytes.len(),
                manifest.len
            )));
        }
        let mut t = Tensors::zeros(manifest.config);
        if t.len() != manifest.len {
            return Err(NetError::Checkpoint(
                "manifest length disagrees with its network configuration".into(),
            ));
        }
        for (dst, chunk) in t.data.iter_mut().zip(bytes.chunks_exact(8)) {
            *dst = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        }
        Ok(t)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: NetConfig,
    dtype: String,
    len: usize,
    blocks: Vec<ManifestBlock>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestBlock {
    name: Block,
    shape: [usize; 2],
    offset: usize,
}

/// Gate order inside the LSTM blocks.
pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero except the forget gate (1.0).
pub fn init_params(rng: &mut GymRng, config: NetConfig) -> ParamSet {
    let mut p = Tensors::zeros(config);
    for b in Block::ALL {
        if !b.is_weight() {
            continue;
        }
        let (_, fan_in) = b.shape(&config);
        if fan_in == 0 {
            continue;
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        for w in p.block_mut(b) {
            *w = rng.gen_range(-bound..=bound);
        }
    }
    let h = config.lstm_units;
    p.block_mut(Block::LstmB)[GATE_FORGET * h..(GATE_FORGET + 1) * h].fill(1.0);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layout_covers_every_block() {
        let c = NetConfig::image(192, 2);
        let l = Layout::new(&c);
        let expected = 64 * 192 + 64 + 192 * (64 + 2 + 1) + 192 * 48 + 192 + 2 * 48 + 2 + 48 + 1;
        assert_eq!(l.len(), expected);
        assert_eq!(l.block_of(0), Block::FcW);
        assert_eq!(l.block_of(l.len() - 1), Block::ValueB);
        let v = NetConfig::vector(3, 2);
        assert_eq!(Layout::new(&v).range(Block::FcW).len(), 0);
        assert_eq!(v.input_dim(), 6);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = NetConfig::image(75, 4);
        let a = init_params(&mut GymRng::seed_from_u64(9), c);
        let b = init_params(&mut GymRng::seed_from_u64(9), c);
        assert_eq!(a, b);
        for blk in Block::ALL.into_iter().filter(|b| b.is_weight()) {
            let bound = 1.0 / (blk.shape(&c).1 as f64).sqrt();
            assert!(a.block(blk).iter().all(|w| w.abs() <= bound));
        }
        let bias = a.block(Block::LstmB);
        assert!(bias[48..96].iter().all(|&v| v == 1.0));
        assert!(bias[..48].iter().chain(&bias[96..]).all(|&v| v == 0.0));
        assert!(a.block(Block::FcB).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = NetConfig::vector(5, 2);
        let p = init_params(&mut GymRng::seed_from_u64(1), c);
        let (bin, json) = (dir.path().join("p.bin"), dir.path().join("p.json"));
        p.save(&bin, &json).unwrap();
        assert_eq!(std::fs::metadata(&bin).unwrap().len() as usize, p.len() * 8);
        assert_eq!(Tensors::load(&bin, &json).unwrap(), p);
        std::fs::write(&bin, [0u8; 3]).unwrap();
        assert!(Tensors::load(&bin, &json).is_err());
    }
}
