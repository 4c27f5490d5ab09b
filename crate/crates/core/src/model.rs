//! Network parameters and the plain (non-differentiated) forward paths.
//!
//! Inputs `(x, y, t, u_inlet, d_y)` are rescaled affinely to `[-1, 1]` with
//! [`INPUT_BOUNDS`] before entering any layer; the Fourier features use the
//! raw time.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use fcpinn_autodiff::{Graph, NodeId};
use fcpinn_datagen::DesignPoint;
use ndarray::{s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::physics::{shedding_frequency, FluidConstants};
use crate::{CoreError, Result};

/// Bounds of `x, y, t, u_inlet, d_y` used for input normalization. They
/// coincide with the collocation box.
pub const INPUT_BOUNDS: [(f64, f64); 5] = [
    (0.0, 1.5),
    (0.0, 0.3),
    (0.0, 5.0),
    (0.8, 1.0),
    (0.08, 0.11),
];

/// Number of frequencies (and phases) produced by the FFM head.
pub const N_FOURIER: usize = 5;

/// Slope of the normalization map for input `k`.
pub fn input_scale(k: usize) -> f64 {
    let (lo, hi) = INPUT_BOUNDS[k];
    2.0 / (hi - lo)
}

pub fn normalize(k: usize, v: f64) -> f64 {
    (v - INPUT_BOUNDS[k].0) * input_scale(k) - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Coordinates and design go straight into the trunk; no Fourier
    /// features.
    NoFfm,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoFfm => "no-ffm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "full" => Some(Variant::Full),
            "no-ffm" | "noffm" => Some(Variant::NoFfm),
            _ => None,
        }
    }
}

/// Layer counts and widths. Hidden layers are followed by one linear output
/// layer in both subnetworks.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub variant: Variant,
    pub ffm_layers: usize,
    pub ffm_width: usize,
    pub trunk_layers: usize,
    pub trunk_width: usize,
    pub dropout: f64,
    /// Start the five frequency biases at the expected angular shedding
    /// frequency of the design-box midpoint.
    pub freq_bias_init: bool,
}

impl Architecture {
    pub fn paper() -> Self {
        Self {
            variant: Variant::Full,
            ffm_layers: 3,
            ffm_width: 120,
            trunk_layers: 10,
            trunk_width: 120,
            dropout: 0.1,
            freq_bias_init: true,
        }
    }

    pub fn desk() -> Self {
        Self {
            ffm_layers: 2,
            ffm_width: 32,
            trunk_layers: 6,
            trunk_width: 64,
            ..Self::paper()
        }
    }

    pub fn trunk_inputs(&self) -> usize {
        match self.variant {
            Variant::Full => 5 + 2 * N_FOURIER,
            Variant::NoFfm => 5,
        }
    }

    fn ffm_shapes(&self) -> Vec<(usize, usize)> {
        if self.variant == Variant::NoFfm {
            return Vec::new();
        }
        let mut v = vec![(2, self.ffm_width)];
        v.extend((1..self.ffm_layers).map(|_| (self.ffm_width, self.ffm_width)));
        v.push((self.ffm_width, 2 * N_FOURIER));
        v
    }

    fn trunk_shapes(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.trunk_inputs(), self.trunk_width)];
        v.extend((1..self.trunk_layers).map(|_| (self.trunk_width, self.trunk_width)));
        v.push((self.trunk_width, 3));
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk_layers == 0 || self.trunk_width == 0 {
            return Err(CoreError::Config("trunk needs at least one hidden layer".into()));
        }
        if self.variant == Variant::Full && (self.ffm_layers == 0 || self.ffm_width == 0) {
            return Err(CoreError::Config("FFM needs at least one hidden layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!(
                "dropout rate {} is outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Angular shedding frequency at the centre of the design box, used to seed
/// the frequency head.
pub fn default_frequency_bias() -> f64 {
    let mid = DesignPoint::new(0.9, 0.095);
    2.0 * PI * shedding_frequency(mid, &FluidConstants::default()).expect("Re = 85.5 is valid")
}

/// Fully connected layer `z = h W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array2::zeros((1, fan_out)),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    fn forward(&self, h: &Array2<f64>) -> Array2<f64> {
        h.dot(&self.w) + &self.b
    }
}

/// Xavier-uniform bound for a layer.
pub fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// All learnable weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateParams {
    pub arch: Architecture,
    pub seed: u64,
    pub ffm: Vec<Dense>,
    pub trunk: Vec<Dense>,
}

/// Frequencies `F` (1/time, angular) and phases `phi` (radians).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierParams {
    pub frequencies: [f64; N_FOURIER],
    pub phases: [f64; N_FOURIER],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowPrediction {
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

/// Whether dropout is active. Training mode draws masks from the given
/// generator.
pub enum Mode<'a> {
    Inference,
    Training(&'a mut ChaCha8Rng),
}

/// Inverted-dropout mask: entries are 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.gen::<f64>() < rate { 0.0 } else { keep })
}

impl SurrogateParams {
    /// Xavier-uniform weights, zero biases (frequency biases optionally
    /// seeded, see [`Architecture::freq_bias_init`]).
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |shapes: Vec<(usize, usize)>| -> Vec<Dense> {
            shapes
                .into_iter()
                .map(|(i, o)| {
                    let lim = xavier_limit(i, o);
                    let mut d = Dense::zeros(i, o);
                    d.w.iter_mut().for_each(|w| *w = rng.gen_range(-lim..=lim));
                    d
                })
                .collect()
        };
        let mut ffm = make(arch.ffm_shapes());
        let trunk = make(arch.trunk_shapes());
        if arch.freq_bias_init {
            if let Some(head) = ffm.last_mut() {
                let f = default_frequency_bias();
                for k in 0..N_FOURIER {
                    head.b[[0, k]] = f;
                }
            }
        }
        Ok(Self {
            arch,
            seed,
            ffm,
            trunk,
        })
    }

    /// Every weight and bias zero.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let ffm = arch.ffm_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        let trunk = arch.trunk_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect();
        Ok(Self {
            arch,
            seed: 0,
            ffm,
            trunk,
        })
    }

    /// Weight and bias tensors in a fixed order (FFM layers, then trunk;
    /// weight before bias).
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.ffm
            .iter()
            .chain(&self.trunk)
            .flat_map(|d| [&d.w, &d.b])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.ffm
            .iter_mut()
            .chain(self.trunk.iter_mut())
            .flat_map(|d| [&mut d.w, &mut d.b])
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for (name, layers) in [("ffm", &self.ffm), ("trunk", &self.trunk)] {
            for (l, d) in layers.iter().enumerate() {
                if d.w.iter().chain(d.b.iter()).any(|v| !v.is_finite()) {
                    return Err(CoreError::PoisonedParameters(format!(
                        "non-finite weight in {name} layer {l}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn trunk_input_arity(&self) -> usize {
        self.trunk.first().map_or(0, Dense::fan_in)
    }
}

/// `[sin(F t + phi) x5, cos(F t + phi) x5]`.
pub fn fourier_features(fp: &FourierParams, t: f64) -> [f64; 2 * N_FOURIER] {
    let mut out = [0.0; 2 * N_FOURIER];
    for k in 0..N_FOURIER {
        let arg = fp.frequencies[k] * t + fp.phases[k];
        out[k] = arg.sin();
        out[N_FOURIER + k] = arg.cos();
    }
    out
}

/// FFM outputs for a batch of raw designs (`n x 2`: `u_inlet, d_y`).
fn ffm_batch(params: &SurrogateParams, designs: ArrayView2<f64>, mode: &mut Mode) -> Array2<f64> {
    let mut h = designs.to_owned();
    for (c, k) in [(0, 3), (1, 4)] {
        h.column_mut(c).mapv_inplace(|v| normalize(k, v));
    }
    let last = params.ffm.len() - 1;
    for (l, layer) in params.ffm.iter().enumerate() {
        let mut z = layer.forward(&h);
        if l == last {
            return z;
        }
        if let Mode::Training(rng) = mode {
            if params.arch.dropout > 0.0 {
                z *= &dropout_mask(rng, z.nrows(), z.ncols(), params.arch.dropout);
            }
        }
        z.mapv_inplace(f64::tanh);
        h = z;
    }
    unreachable!("the FFM always has an output layer")
}

/// Frequencies and phases for one design.
pub fn ffm_forward(params: &SurrogateParams, d: DesignPoint, mut mode: Mode) -> Result<FourierParams> {
    params.check_finite()?;
    if params.arch.variant == Variant::NoFfm {
        return Err(CoreError::Config("the no-ffm variant has no FFM subnetwork".into()));
    }
    let input = Array2::from_shape_vec((1, 2), vec![d.u_inlet, d.d_y]).expect("1 x 2");
    let out = ffm_batch(params, input.view(), &mut mode);
    let fp = FourierParams {
        frequencies: std::array::from_fn(|k| out[[0, k]]),
        phases: std::array::from_fn(|k| out[[0, N_FOURIER + k]]),
    };
    if fp.frequencies.iter().chain(&fp.phases).any(|v| !v.is_finite()) {
        return Err(CoreError::PoisonedParameters("non-finite FFM output".into()));
    }
    Ok(fp)
}

/// Trunk input matrix for raw rows `(x, y, t, u_inlet, d_y)`.
fn trunk_input(params: &SurrogateParams, inputs: ArrayView2<f64>, mode: &mut Mode) -> Array2<f64> {
    let n = inputs.nrows();
    let mut h = Array2::zeros((n, params.arch.trunk_inputs()));
    for k in 0..5 {
        let src = inputs.column(k);
        h.column_mut(k).zip_mut_with(&src, |o, &v| *o = normalize(k, v));
    }
    if params.arch.variant == Variant::Full {
        let out = ffm_batch(params, inputs.slice(s![.., 3..5]), mode);
        for r in 0..n {
            let t = inputs[[r, 2]];
            for k in 0..N_FOURIER {
                let arg = out[[r, k]] * t + out[[r, N_FOURIER + k]];
                h[[r, 5 + k]] = arg.sin();
                h[[r, 5 + N_FOURIER + k]] = arg.cos();
            }
        }
    }
    h
}

/// Forward pass for a batch of raw rows `(x, y, t, u_inlet, d_y)`; returns
/// `n x 3` predictions `(u, v, p)`.
pub fn predict_batch(params: &SurrogateParams, inputs: ArrayView2<f64>, mut mode: Mode) -> Result<Array2<f64>> {
    if inputs.ncols() != 5 {
        return Err(CoreError::Shape(format!(
            "expected 5 input columns (x, y, t, u_inlet, d_y), got {}",
            inputs.ncols()
        )));
    }
    params.check_finite()?;
    let mut h = trunk_input(params, inputs, &mut mode);
    let last = params.trunk.len() - 1;
    for (l, layer) in params.trunk.iter().enumerate() {
        h = layer.forward(&h);
        if l != last {
            h.mapv_inplace(f64::tanh);
        }
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(CoreError::PoisonedParameters("non-finite network output".into()));
    }
    Ok(h)
}

/// Deterministic batched inference.
pub fn batch_forward(params: &SurrogateParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    predict_batch(params, inputs, Mode::Inference)
}

/// Batched inference over `rows` in chunks, to bound memory.
pub fn predict_rows(params: &SurrogateParams, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    const CHUNK: usize = 8192;
    let mut out = Array2::zeros((inputs.nrows(), 3));
    let mut start = 0;
    while start < inputs.nrows() {
        let end = (start + CHUNK).min(inputs.nrows());
        let part = batch_forward(params, inputs.slice(s![start..end, ..]))?;
        out.slice_mut(s![start..end, ..]).assign(&part);
        start = end;
    }
    Ok(out)
}

pub fn predict(
    params: &SurrogateParams,
    x: f64,
    y: f64,
    t: f64,
    d: DesignPoint,
    mode: Mode,
) -> Result<FlowPrediction> {
    let input = Array2::from_shape_vec((1, 5), vec![x, y, t, d.u_inlet, d.d_y]).expect("1 x 5");
    let out = predict_batch(params, input.view(), mode)?;
    Ok(FlowPrediction {
        u: out[[0, 0]],
        v: out[[0, 1]],
        p: out[[0, 2]],
    })
}

fn graph_dense(g: &mut Graph, layer: &Dense, h: &[NodeId], activate: bool) -> Vec<NodeId> {
    (0..layer.fan_out())
        .map(|o| {
            let w: Vec<f64> = layer.w.column(o).to_vec();
            let z = g.affine(&w, h, layer.b[[0, o]]);
            if activate {
                g.tanh(z)
            } else {
                z
            }
        })
        .collect()
}

fn graph_normalize(g: &mut Graph, k: usize, v: NodeId) -> NodeId {
    let lo = g.constant(INPUT_BOUNDS[k].0);
    let shifted = g.sub(v, lo);
    let scaled = g.scale(shifted, input_scale(k));
    let one = g.constant(1.0);
    g.sub(scaled, one)
}

/// Builds the inference network inside `g` on the nodes `x, y, t`, with the
/// design entering as constants. Returns the `(u, v, p)` roots.
pub fn predict_graph(
    params: &SurrogateParams,
    g: &mut Graph,
    x: NodeId,
    y: NodeId,
    t: NodeId,
    d: DesignPoint,
) -> Result<[NodeId; 3]> {
    params.check_finite()?;
    let u_in = g.constant(d.u_inlet);
    let d_in = g.constant(d.d_y);
    let raw = [x, y, t, u_in, d_in];
    let mut h: Vec<NodeId> = raw
        .iter()
        .enumerate()
        .map(|(k, &v)| graph_normalize(g, k, v))
        .collect();
    if params.arch.variant == Variant::Full {
        let mut f = vec![h[3], h[4]];
        let last = params.ffm.len() - 1;
        for (l, layer) in params.ffm.iter().enumerate() {
            f = graph_dense(g, layer, &f, l != last);
        }
        let mut sins = Vec::with_capacity(N_FOURIER);
        let mut coss = Vec::with_capacity(N_FOURIER);
        for k in 0..N_FOURIER {
            let ft = g.mul(f[k], t);
            let arg = g.add(ft, f[N_FOURIER + k]);
            sins.push(g.sin(arg));
            coss.push(g.cos(arg));
        }
        h.extend(sins);
        h.extend(coss);
    }
    let last = params.trunk.len() - 1;
    for (l, layer) in params.trunk.iter().enumerate() {
        h = graph_dense(g, layer, &h, l != last);
    }
    let out = [h[0], h[1], h[2]];
    for &o in &out {
        g.check_finite(o)?;
    }
    Ok(out)
}

/// Fresh graph with tags `x`, `y`, `t` and the network on top of them.
pub fn prediction_graph(
    params: &SurrogateParams,
    x: f64,
    y: f64,
    t: f64,
    d: DesignPoint,
) -> Result<(Graph, [NodeId; 3])> {
    let mut g = Graph::new();
    let xn = g.input("x", x)?;
    let yn = g.input("y", y)?;
    let tn = g.input("t", t)?;
    let out = predict_graph(params, &mut g, xn, yn, tn, d)?;
    Ok((g, out))
}

// Checkpoint layout (little-endian):
//   magic "FCPNNCK\0", u32 version,
//   u8 variant (0 full, 1 no-ffm), f64 dropout, u64 seed, u8 freq_bias_init,
//   u32 ffm layer count, then (u32 rows, u32 cols) per layer,
//   u32 trunk layer count, then (u32 rows, u32 cols) per layer,
//   then per layer (FFM first): weights row-major, then biases, as f64.
const CK_MAGIC: &[u8; 8] = b"FCPNNCK\0";
const CK_VERSION: u32 = 1;

impl SurrogateParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 8 * self.num_params());
        b.extend_from_slice(CK_MAGIC);
        b.extend_from_slice(&CK_VERSION.to_le_bytes());
        b.push(match self.arch.variant {
            Variant::Full => 0,
            Variant::NoFfm => 1,
        });
        b.extend_from_slice(&self.arch.dropout.to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.push(self.arch.freq_bias_init as u8);
        for layers in [&self.ffm, &self.trunk] {
            b.extend_from_slice(&(layers.len() as u32).to_le_bytes());
            for d in layers {
                b.extend_from_slice(&(d.fan_in() as u32).to_le_bytes());
                b.extend_from_slice(&(d.fan_out() as u32).to_le_bytes());
            }
        }
        for d in self.ffm.iter().chain(&self.trunk) {
            for v in d.w.iter().chain(d.b.iter()) {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CoreError::Checkpoint(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("file is truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != CK_MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let u32_of = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let version = u32_of(take(4)?);
        if version != CK_VERSION {
            return Err(CoreError::Checkpoint(format!("unsupported version {version}")));
        }
        let variant = match take(1)?[0] {
            0 => Variant::Full,
            1 => Variant::NoFfm,
            v => return Err(CoreError::Checkpoint(format!("unknown variant code {v}"))),
        };
        let dropout = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
        let freq_bias_init = take(1)?[0] != 0;
        let mut shapes = [Vec::new(), Vec::new()];
        for s in shapes.iter_mut() {
            let n = u32_of(take(4)?) as usize;
            if n > 1024 {
                return Err(bad("implausible layer count"));
            }
            for _ in 0..n {
                let r = u32_of(take(4)?) as usize;
                let c = u32_of(take(4)?) as usize;
                s.push((r, c));
            }
        }
        let [ffm_shapes, trunk_shapes] = shapes;
        if trunk_shapes.len() < 2 {
            return Err(bad("trunk must have a hidden and an output layer"));
        }
        let arch = Architecture {
            variant,
            ffm_layers: ffm_shapes.len().saturating_sub(1),
            ffm_width: ffm_shapes.first().map_or(0, |s| s.1),
            trunk_layers: trunk_shapes.len() - 1,
            trunk_width: trunk_shapes[0].1,
            dropout,
            freq_bias_init,
        };
        if arch.ffm_shapes() != ffm_shapes || arch.trunk_shapes() != trunk_shapes {
            return Err(bad("layer shapes are inconsistent with the architecture"));
        }
        let mut read_layer = |(r, c): (usize, usize)| -> Result<Dense> {
            let mut vals = Vec::with_capacity(r * c + c);
            let raw = take(8 * (r * c + c))?;
            for ch in raw.chunks_exact(8) {
                vals.push(f64::from_le_bytes(ch.try_into().unwrap()));
            }
            let b = Array2::from_shape_vec((1, c), vals.split_off(r * c)).unwrap();
            let w = Array2::from_shape_vec((r, c), vals).unwrap();
            Ok(Dense { w, b })
        };
        let ffm = ffm_shapes.into_iter().map(&mut read_layer).collect::<Result<Vec<_>>>()?;
        let trunk = trunk_shapes.into_iter().map(&mut read_layer).collect::<Result<Vec<_>>>()?;
        drop(read_layer);
        if pos != bytes.len() {
            return Err(bad("trailing bytes after the weights"));
        }
        Ok(Self {
            arch,
            seed,
            ffm,
            trunk,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Errors unless `other` has the same layer shapes.
    pub fn check_compatible(&self, other: &Architecture) -> Result<()> {
        let (a, b) = (&self.arch, other);
        if a.ffm_shapes() != b.ffm_shapes() || a.trunk_shapes() != b.trunk_shapes() {
            return Err(CoreError::Shape(format!(
                "checkpoint architecture {} (trunk {}x{}, ffm {}x{}) does not match configured {} (trunk {}x{}, ffm {}x{})",
                a.variant.name(), a.trunk_layers, a.trunk_width, a.ffm_layers, a.ffm_width,
                b.variant.name(), b.trunk_layers, b.trunk_width, b.ffm_layers, b.ffm_width,
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Architecture {
        Architecture {
            ffm_layers: 1,
            ffm_width: 4,
            trunk_layers: 2,
            trunk_width: 5,
            ..Architecture::paper()
        }
    }

    #[test]
    fn paper_shapes() {
        let p = SurrogateParams::init(Architecture::paper(), 1).unwrap();
        assert_eq!(p.ffm.len(), 4);
        assert_eq!(p.trunk.len(), 11);
        assert_eq!(p.trunk[0].w.dim(), (15, 120));
        assert_eq!(p.ffm[3].w.dim(), (120, 10));
        assert_eq!(p.trunk[10].w.dim(), (120, 3));
        let q = SurrogateParams::init(
            Architecture {
                variant: Variant::NoFfm,
                ..Architecture::paper()
            },
            1,
        )
        .unwrap();
        assert!(q.ffm.is_empty());
        assert_eq!(q.trunk_input_arity(), 5);
    }

    #[test]
    fn frequency_bias_is_seeded() {
        let p = SurrogateParams::init(tiny(), 3).unwrap();
        let head = p.ffm.last().unwrap();
        assert!((head.b[[0, 0]] - 9.43).abs() < 0.01);
        assert_eq!(head.b[[0, 7]], 0.0);
    }

    #[test]
    fn zero_network_predicts_zero() {
        let p = SurrogateParams::zeros(tiny()).unwrap();
        let out = predict(&p, 0.3, 0.1, 2.0, DesignPoint::new(0.9, 0.1), Mode::Inference).unwrap();
        assert_eq!(out, FlowPrediction { u: 0.0, v: 0.0, p: 0.0 });
        let fp = ffm_forward(&p, DesignPoint::new(0.9, 0.1), Mode::Inference).unwrap();
        assert_eq!(fp.frequencies, [0.0; 5]);
        assert_eq!(fp.phases, [0.0; 5]);
    }

    #[test]
    fn poisoned_weights_are_reported() {
        let mut p = SurrogateParams::init(tiny(), 3).unwrap();
        p.trunk[1].w[[0, 0]] = f64::NAN;
        let r = predict(&p, 0.3, 0.1, 2.0, DesignPoint::new(0.9, 0.1), Mode::Inference);
        assert!(matches!(r, Err(CoreError::PoisonedParameters(_))));
    }

    #[test]
    fn arity_mismatch_is_a_shape_error() {
        let p = SurrogateParams::init(tiny(), 3).unwrap();
        let x = Array2::zeros((4, 4));
        assert!(matches!(batch_forward(&p, x.view()), Err(CoreError::Shape(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = SurrogateParams::init(tiny(), 11).unwrap();
        let q = SurrogateParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(p, q);
        let bytes = p.to_bytes();
        assert!(SurrogateParams::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
