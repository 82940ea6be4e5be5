//! Fixed-topology per-cue convolutional networks and the linear fusion layer.
//!
//! Each cue runs `(32x32) -> conv 13x13 x12 -> relu -> pool 2 -> (10x10x12)
//! -> conv 7x7 12->18 -> relu -> pool 2 -> (2x2x18) -> fc 72->8 -> relu -> (8)
//! -> head 8->2`. The fusion layer maps the concatenated 8-D features of all
//! cues (24 values) to the final 2-D confidence vector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cue::{PatchTensor, NUM_CUES, PATCH_AREA};
use crate::error::{Result, TrackError};
use crate::geometry::PATCH_SIDE;
use crate::scalar::Scalar;

pub const CONV1_MAPS: usize = 12;
pub const CONV1_KERNEL: usize = 13;
pub const CONV1_OUT: usize = PATCH_SIDE - CONV1_KERNEL + 1; // 20
pub const POOL1_OUT: usize = CONV1_OUT / 2; // 10
pub const CONV2_MAPS: usize = 18;
pub const CONV2_KERNEL: usize = 7;
pub const CONV2_OUT: usize = POOL1_OUT - CONV2_KERNEL + 1; // 4
pub const POOL2_OUT: usize = CONV2_OUT / 2; // 2
pub const FLAT: usize = CONV2_MAPS * POOL2_OUT * POOL2_OUT; // 72
pub const FEATURES: usize = 8;
pub const OUTPUTS: usize = 2;
pub const FUSION_IN: usize = NUM_CUES * FEATURES; // 24

/// `(height, width, maps)` after conv1, pool1, conv2 and pool2.
pub const STAGE_SHAPES: [(usize, usize, usize); 4] = [
    (CONV1_OUT, CONV1_OUT, CONV1_MAPS),
    (POOL1_OUT, POOL1_OUT, CONV1_MAPS),
    (CONV2_OUT, CONV2_OUT, CONV2_MAPS),
    (POOL2_OUT, POOL2_OUT, CONV2_MAPS),
];

/// Two-dimensional network output: positive score `s1`, negative score `s2`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ScorePair<T> {
    pub s1: T,
    pub s2: T,
}

impl<T: Scalar> ScorePair<T> {
    pub fn new(s1: T, s2: T) -> Self {
        Self { s1, s2 }
    }

    pub fn as_array(&self) -> [T; 2] {
        [self.s1, self.s2]
    }
}

/// Patch score `s1 * exp(s1 - s2)`.
pub fn cnn_score<T: Scalar>(p: ScorePair<T>) -> T {
    p.s1 * (p.s1 - p.s2).exp()
}

/// Weights of one cue channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CueNetWeights<T> {
    /// `[map][row][col]`
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    /// `[out_map][in_map][row][col]`, full 12x18 connectivity (216 kernels).
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    /// `[out][in]`
    pub fc1_w: Vec<T>,
    pub fc1_b: Vec<T>,
    pub head_w: Vec<T>,
    pub head_b: Vec<T>,
}

impl<T: Scalar> CueNetWeights<T> {
    pub fn zeros() -> Self {
        Self {
            conv1_w: vec![T::zero(); CONV1_MAPS * CONV1_KERNEL * CONV1_KERNEL],
            conv1_b: vec![T::zero(); CONV1_MAPS],
            conv2_w: vec![T::zero(); CONV2_MAPS * CONV1_MAPS * CONV2_KERNEL * CONV2_KERNEL],
            conv2_b: vec![T::zero(); CONV2_MAPS],
            fc1_w: vec![T::zero(); FEATURES * FLAT],
            fc1_b: vec![T::zero(); FEATURES],
            head_w: vec![T::zero(); OUTPUTS * FEATURES],
            head_b: vec![T::zero(); OUTPUTS],
        }
    }

    fn blobs(&self) -> [(&'static str, &Vec<T>); 8] {
        [
            ("conv1_w", &self.conv1_w),
            ("conv1_b", &self.conv1_b),
            ("conv2_w", &self.conv2_w),
            ("conv2_b", &self.conv2_b),
            ("fc1_w", &self.fc1_w),
            ("fc1_b", &self.fc1_b),
            ("head_w", &self.head_w),
            ("head_b", &self.head_b),
        ]
    }

    fn blobs_mut(&mut self) -> [&mut Vec<T>; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.head_w,
            &mut self.head_b,
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights<T> {
    /// `[out][in]`, `in` ordered cue-major: columns `8k..8k+8` belong to cue `k`.
    pub w: Vec<T>,
    pub b: Vec<T>,
}

/// All network weights. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel<T> {
    pub cues: Vec<CueNetWeights<T>>,
    pub fusion: FusionWeights<T>,
}

/// A named weight blob with its logical shape.
pub struct Blob<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [T],
}

impl<T: Scalar> CnnModel<T> {
    pub fn zeros() -> Self {
        Self {
            cues: (0..NUM_CUES).map(|_| CueNetWeights::zeros()).collect(),
            fusion: FusionWeights {
                w: vec![T::zero(); OUTPUTS * FUSION_IN],
                b: vec![T::zero(); OUTPUTS],
            },
        }
    }

    /// Weights uniform in `[-range, range]`, biases zero.
    pub fn init(seed: u64, range: f64) -> Self {
        Self::init_with(seed, WeightInit::Uniform { range })
    }

    /// Seeded weights drawn per `scheme`, biases zero.
    pub fn init_with(seed: u64, scheme: WeightInit) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros();
        let mut fill = |v: &mut Vec<T>, fan_in: usize| {
            let range = scheme.range(fan_in);
            for x in v.iter_mut() {
                *x = T::lit(rng.random_range(-range..=range));
            }
        };
        for net in &mut model.cues {
            fill(&mut net.conv1_w, CONV1_KERNEL * CONV1_KERNEL);
            fill(&mut net.conv2_w, CONV1_MAPS * CONV2_KERNEL * CONV2_KERNEL);
            fill(&mut net.fc1_w, FLAT);
            fill(&mut net.head_w, FEATURES);
        }
        fill(&mut model.fusion.w, FUSION_IN);
        model
    }

    /// Set fusion block `k` to cue `k`'s head scaled by `1/K` and the fusion bias to the
    /// mean head bias, so the fused output starts as the average of the cue heads.
    pub fn tie_fusion_to_heads(&mut self) {
        let inv_k = T::one() / T::lit(NUM_CUES as f64);
        for o in 0..OUTPUTS {
            for (k, net) in self.cues.iter().enumerate() {
                for j in 0..FEATURES {
                    self.fusion.w[o * FUSION_IN + k * FEATURES + j] = net.head_w[o * FEATURES + j] * inv_k;
                }
            }
            self.fusion.b[o] = self.cues.iter().map(|n| n.head_b[o]).sum::<T>() * inv_k;
        }
    }

    /// Every weight blob in serialization order.
    pub fn blobs(&self) -> Vec<Blob<'_, T>> {
        let shapes: [Vec<usize>; 8] = [
            vec![CONV1_MAPS, CONV1_KERNEL, CONV1_KERNEL],
            vec![CONV1_MAPS],
            vec![CONV2_MAPS, CONV1_MAPS, CONV2_KERNEL, CONV2_KERNEL],
            vec![CONV2_MAPS],
            vec![FEATURES, FLAT],
            vec![FEATURES],
            vec![OUTPUTS, FEATURES],
            vec![OUTPUTS],
        ];
        let mut out = Vec::new();
        for (k, net) in self.cues.iter().enumerate() {
            for ((name, values), shape) in net.blobs().into_iter().zip(shapes.iter()) {
                out.push(Blob { name: format!("cue{k}.{name}"), shape: shape.clone(), values });
            }
        }
        out.push(Blob { name: "fusion.w".into(), shape: vec![OUTPUTS, FUSION_IN], values: &self.fusion.w });
        out.push(Blob { name: "fusion.b".into(), shape: vec![OUTPUTS], values: &self.fusion.b });
        out
    }

    /// Mutable blobs in the same order as [`CnnModel::blobs`].
    pub fn blobs_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for net in &mut self.cues {
            out.extend(net.blobs_mut());
        }
        out.push(&mut self.fusion.w);
        out.push(&mut self.fusion.b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blobs().iter().map(|b| b.values.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blobs().iter().all(|b| b.values.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, blob by blob.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let src: Vec<&[T]> = other.blobs().into_iter().map(|b| b.values).collect();
        for (dst, src) in self.blobs_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * *s;
            }
        }
    }

    /// Plain SGD step `w -= lr * g`.
    pub fn sgd_step(&mut self, grads: &Self, lr: T) {
        self.add_scaled(grads, -lr);
    }

    pub fn cast<U: Scalar>(&self) -> CnnModel<U> {
        let mut out = CnnModel::<U>::zeros();
        let src: Vec<&[T]> = self.blobs().into_iter().map(|b| b.values).collect();
        for (dst, src) in out.blobs_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::lit(s.as_f64());
            }
        }
        out
    }
}

/// Distribution of the initial weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightInit {
    /// Uniform in `[-range, range]` for every layer.
    Uniform { range: f64 },
    /// Uniform in `[-gain / sqrt(fan_in), gain / sqrt(fan_in)]`.
    FanIn { gain: f64 },
}

impl WeightInit {
    pub fn range(&self, fan_in: usize) -> f64 {
        match *self {
            WeightInit::Uniform { range } => range,
            WeightInit::FanIn { gain } => gain / (fan_in as f64).sqrt(),
        }
    }
}

/// Model initialized with the default weight range.
pub fn init_model<T: Scalar>(seed: u64) -> CnnModel<T> {
    CnnModel::init(seed, 0.05)
}

/// Activations of one cue channel retained for backpropagation.
#[derive(Clone, Debug)]
pub struct CueCache<T> {
    pub input: Vec<T>,
    pub conv1_pre: Vec<T>,
    pub pool1: Vec<T>,
    pool1_arg: Vec<u32>,
    pub conv2_pre: Vec<T>,
    pub pool2: Vec<T>,
    pool2_arg: Vec<u32>,
    pub fc1_pre: Vec<T>,
    pub features: Vec<T>,
    pub head: ScorePair<T>,
}

impl<T: Scalar> CueCache<T> {
    /// ReLU on/off states and max-pool winners; two caches with equal patterns
    /// lie in the same linear region of the network.
    pub fn routing_pattern(&self) -> Vec<u32> {
        let on = |v: &T| u32::from(*v > T::zero());
        self.conv1_pre
            .iter()
            .map(on)
            .chain(self.pool1_arg.iter().copied())
            .chain(self.conv2_pre.iter().map(on))
            .chain(self.pool2_arg.iter().copied())
            .chain(self.fc1_pre.iter().map(on))
            .collect()
    }
}

/// Result of a single-cue forward pass.
#[derive(Clone, Debug)]
pub struct CueOutput<T> {
    pub features: Vec<T>,
    pub head: ScorePair<T>,
    pub cache: CueCache<T>,
}

/// ReLU followed by 2x2 stride-2 max pooling over `maps` square maps of side `side`.
fn relu_pool<T: Scalar>(pre: &[T], maps: usize, side: usize) -> (Vec<T>, Vec<u32>) {
    let half = side / 2;
    let mut out = Vec::with_capacity(maps * half * half);
    let mut arg = Vec::with_capacity(maps * half * half);
    for m in 0..maps {
        let base = m * side * side;
        for py in 0..half {
            for px in 0..half {
                let mut best_i = base + 2 * py * side + 2 * px;
                let mut best = pre[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * py + dy) * side + 2 * px + dx;
                    if pre[i] > best {
                        best = pre[i];
                        best_i = i;
                    }
                }
                out.push(best.max(T::zero()));
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

/// Valid cross-correlation of a `in_maps x in_side^2` input with `out_maps x in_maps x k^2`
/// kernels, lowered to a single matrix product over unrolled input windows.
fn conv_valid<T: Scalar>(
    input: &[T],
    in_maps: usize,
    in_side: usize,
    kernels: &[T],
    bias: &[T],
    k: usize,
) -> Vec<T> {
    let out_side = in_side - k + 1;
    let area = out_side * out_side;
    let out_maps = bias.len();
    let rows = in_maps * k * k;
    // cols[(c, ki, kj)][(y, x)] = input[c][y + ki][x + kj]
    let mut cols = Vec::with_capacity(rows * area);
    for c in 0..in_maps {
        let plane = &input[c * in_side * in_side..(c + 1) * in_side * in_side];
        for ki in 0..k {
            for kj in 0..k {
                for y in 0..out_side {
                    let start = (y + ki) * in_side + kj;
                    cols.extend_from_slice(&plane[start..start + out_side]);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(out_maps * area);
    for &b in bias {
        out.extend(std::iter::repeat(b).take(area));
    }
    T::gemm_acc(out_maps, rows, area, kernels, &cols, &mut out);
    out
}

fn matvec<T: Scalar>(w: &[T], b: &[T], x: &[T]) -> Vec<T> {
    w.chunks_exact(x.len())
        .zip(b)
        .map(|(row, &bias)| bias + row.iter().zip(x).map(|(&a, &v)| a * v).sum::<T>())
        .collect()
}

/// Forward pass of a single cue channel on a 32x32 plane.
pub fn forward_cue<T: Scalar>(net: &CueNetWeights<T>, plane: &[T]) -> CueOutput<T> {
    debug_assert_eq!(plane.len(), PATCH_AREA);
    let conv1_pre = conv_valid(plane, 1, PATCH_SIDE, &net.conv1_w, &net.conv1_b, CONV1_KERNEL);
    let (pool1, pool1_arg) = relu_pool(&conv1_pre, CONV1_MAPS, CONV1_OUT);
    let conv2_pre = conv_valid(&pool1, CONV1_MAPS, POOL1_OUT, &net.conv2_w, &net.conv2_b, CONV2_KERNEL);
    let (pool2, pool2_arg) = relu_pool(&conv2_pre, CONV2_MAPS, CONV2_OUT);
    let fc1_pre = matvec(&net.fc1_w, &net.fc1_b, &pool2);
    let features: Vec<T> = fc1_pre.iter().map(|v| v.max(T::zero())).collect();
    let h = matvec(&net.head_w, &net.head_b, &features);
    let head = ScorePair::new(h[0], h[1]);
    CueOutput {
        features: features.clone(),
        head,
        cache: CueCache {
            input: plane.to_vec(),
            conv1_pre,
            pool1,
            pool1_arg,
            conv2_pre,
            pool2,
            pool2_arg,
            fc1_pre,
            features,
            head,
        },
    }
}

/// Fusion layer applied to a 24-vector of concatenated cue features.
pub fn fuse<T: Scalar>(fusion: &FusionWeights<T>, features: &[T]) -> ScorePair<T> {
    let out = matvec(&fusion.w, &fusion.b, features);
    ScorePair::new(out[0], out[1])
}

#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    pub cues: Vec<CueCache<T>>,
    pub features: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct FullOutput<T> {
    pub fused: ScorePair<T>,
    pub per_cue: [ScorePair<T>; NUM_CUES],
    pub features: Vec<T>,
    pub cache: ForwardCache<T>,
}

pub fn forward_full<T: Scalar>(model: &CnnModel<T>, patch: &PatchTensor<T>) -> FullOutput<T> {
    let mut features = Vec::with_capacity(FUSION_IN);
    let mut per_cue = [ScorePair::default(); NUM_CUES];
    let mut caches = Vec::with_capacity(NUM_CUES);
    for (k, net) in model.cues.iter().enumerate() {
        let out = forward_cue(net, patch.plane(k));
        features.extend_from_slice(&out.features);
        per_cue[k] = out.head;
        caches.push(out.cache);
    }
    let fused = fuse(&model.fusion, &features);
    FullOutput {
        fused,
        per_cue,
        features: features.clone(),
        cache: ForwardCache { cues: caches, features },
    }
}

/// Fused output only; the tracker's scoring path.
pub fn predict<T: Scalar>(model: &CnnModel<T>, patch: &PatchTensor<T>) -> ScorePair<T> {
    forward_full(model, patch).fused
}

/// Which weights receive gradient, and where the upstream gradient enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    /// Upstream is w.r.t. cue `k`'s own 8->2 head output; all of cue `k`'s weights.
    CueHead(usize),
    /// Upstream is w.r.t. the fused output; cue `k`'s conv/fc1 weights through fusion block `k`.
    CueThroughFusion(usize),
    /// Upstream is w.r.t. the fused output; fusion columns `8k..8k+8` and the fusion bias.
    FusionBlock(usize),
    /// Upstream is w.r.t. the fused output; every weight on the fused path.
    All,
}

fn check_cache<T>(cache: &ForwardCache<T>) -> Result<()> {
    if cache.cues.len() != NUM_CUES || cache.features.len() != FUSION_IN {
        return Err(TrackError::Shape(format!(
            "cache has {} cues / {} features",
            cache.cues.len(),
            cache.features.len()
        )));
    }
    for c in &cache.cues {
        let ok = c.input.len() == PATCH_AREA
            && c.conv1_pre.len() == CONV1_MAPS * CONV1_OUT * CONV1_OUT
            && c.pool1.len() == CONV1_MAPS * POOL1_OUT * POOL1_OUT
            && c.conv2_pre.len() == CONV2_MAPS * CONV2_OUT * CONV2_OUT
            && c.pool2.len() == FLAT
            && c.fc1_pre.len() == FEATURES;
        if !ok {
            return Err(TrackError::Shape("cue cache layer sizes".into()));
        }
    }
    Ok(())
}

/// Backpropagate through one cue trunk given `d_features` (and optionally head upstream).
fn backward_cue<T: Scalar>(
    net: &CueNetWeights<T>,
    cache: &CueCache<T>,
    mut d_features: Vec<T>,
    d_head: Option<[T; 2]>,
    grads: &mut CueNetWeights<T>,
) {
    if let Some(dh) = d_head {
        for (o, &g) in dh.iter().enumerate() {
            grads.head_b[o] += g;
            for j in 0..FEATURES {
                grads.head_w[o * FEATURES + j] += g * cache.features[j];
                d_features[j] += g * net.head_w[o * FEATURES + j];
            }
        }
    }
    // fc1
    let mut d_pool2 = vec![T::zero(); FLAT];
    for j in 0..FEATURES {
        if cache.fc1_pre[j] <= T::zero() {
            continue;
        }
        let g = d_features[j];
        if g == T::zero() {
            continue;
        }
        grads.fc1_b[j] += g;
        let row = &net.fc1_w[j * FLAT..(j + 1) * FLAT];
        let grow = &mut grads.fc1_w[j * FLAT..(j + 1) * FLAT];
        for i in 0..FLAT {
            grow[i] += g * cache.pool2[i];
            d_pool2[i] += g * row[i];
        }
    }
    // pool2 + relu -> conv2 pre-activation
    let mut d_conv2 = vec![T::zero(); CONV2_MAPS * CONV2_OUT * CONV2_OUT];
    for (i, &g) in d_pool2.iter().enumerate() {
        let at = cache.pool2_arg[i] as usize;
        if cache.conv2_pre[at] > T::zero() {
            d_conv2[at] += g;
        }
    }
    // conv2
    let area2 = CONV2_OUT * CONV2_OUT;
    let k2 = CONV2_KERNEL * CONV2_KERNEL;
    let p1 = POOL1_OUT * POOL1_OUT;
    let mut d_pool1 = vec![T::zero(); CONV1_MAPS * p1];
    for o in 0..CONV2_MAPS {
        for y in 0..CONV2_OUT {
            for x in 0..CONV2_OUT {
                let g = d_conv2[o * area2 + y * CONV2_OUT + x];
                if g == T::zero() {
                    continue;
                }
                grads.conv2_b[o] += g;
                for c in 0..CONV1_MAPS {
                    let kbase = (o * CONV1_MAPS + c) * k2;
                    for ki in 0..CONV2_KERNEL {
                        let ibase = c * p1 + (y + ki) * POOL1_OUT + x;
                        for kj in 0..CONV2_KERNEL {
                            let ki_idx = kbase + ki * CONV2_KERNEL + kj;
                            grads.conv2_w[ki_idx] += g * cache.pool1[ibase + kj];
                            d_pool1[ibase + kj] += g * net.conv2_w[ki_idx];
                        }
                    }
                }
            }
        }
    }
    // pool1 + relu -> conv1 pre-activation; conv1 kernels
    let area1 = CONV1_OUT * CONV1_OUT;
    let k1 = CONV1_KERNEL * CONV1_KERNEL;
    for (i, &g) in d_pool1.iter().enumerate() {
        if g == T::zero() {
            continue;
        }
        let at = cache.pool1_arg[i] as usize;
        if cache.conv1_pre[at] <= T::zero() {
            continue;
        }
        let o = at / area1;
        let y = (at % area1) / CONV1_OUT;
        let x = at % CONV1_OUT;
        grads.conv1_b[o] += g;
        let gk = &mut grads.conv1_w[o * k1..(o + 1) * k1];
        for ki in 0..CONV1_KERNEL {
            let row = &cache.input[(y + ki) * PATCH_SIDE + x..(y + ki) * PATCH_SIDE + x + CONV1_KERNEL];
            for (gv, &iv) in gk[ki * CONV1_KERNEL..(ki + 1) * CONV1_KERNEL].iter_mut().zip(row) {
                *gv += g * iv;
            }
        }
    }
}

fn fusion_block_input_grad<T: Scalar>(model: &CnnModel<T>, k: usize, upstream: [T; 2]) -> Vec<T> {
    (0..FEATURES)
        .map(|j| {
            (0..OUTPUTS)
                .map(|o| upstream[o] * model.fusion.w[o * FUSION_IN + k * FEATURES + j])
                .sum()
        })
        .collect()
}

/// Accumulate gradients of the selected weights into `grads`.
pub fn accumulate_backward<T: Scalar>(
    model: &CnnModel<T>,
    cache: &ForwardCache<T>,
    upstream: [T; 2],
    target: GradTarget,
    grads: &mut CnnModel<T>,
) -> Result<()> {
    check_cache(cache)?;
    let cue_ok = |k: usize| {
        if k < NUM_CUES {
            Ok(())
        } else {
            Err(TrackError::Shape(format!("cue index {k} out of range")))
        }
    };
    match target {
        GradTarget::CueHead(k) => {
            cue_ok(k)?;
            backward_cue(
                &model.cues[k],
                &cache.cues[k],
                vec![T::zero(); FEATURES],
                Some(upstream),
                &mut grads.cues[k],
            );
        }
        GradTarget::CueThroughFusion(k) => {
            cue_ok(k)?;
            let d = fusion_block_input_grad(model, k, upstream);
            backward_cue(&model.cues[k], &cache.cues[k], d, None, &mut grads.cues[k]);
        }
        GradTarget::FusionBlock(k) => {
            cue_ok(k)?;
            fusion_block_grad(cache, upstream, k, grads);
            // the fusion bias is shared by all blocks and moves with every block step
            fusion_bias_grad(upstream, grads);
        }
        GradTarget::All => {
            fusion_bias_grad(upstream, grads);
            for k in 0..NUM_CUES {
                fusion_block_grad(cache, upstream, k, grads);
                let d = fusion_block_input_grad(model, k, upstream);
                backward_cue(&model.cues[k], &cache.cues[k], d, None, &mut grads.cues[k]);
            }
        }
    }
    Ok(())
}

fn fusion_block_grad<T: Scalar>(cache: &ForwardCache<T>, upstream: [T; 2], k: usize, grads: &mut CnnModel<T>) {
    for (o, &g) in upstream.iter().enumerate() {
        for j in k * FEATURES..(k + 1) * FEATURES {
            grads.fusion.w[o * FUSION_IN + j] += g * cache.features[j];
        }
    }
}

fn fusion_bias_grad<T: Scalar>(upstream: [T; 2], grads: &mut CnnModel<T>) {
    for (b, &g) in grads.fusion.b.iter_mut().zip(&upstream) {
        *b += g;
    }
}

/// Gradients of the selected weight subset; every other entry is exactly zero.
pub fn backward<T: Scalar>(
    model: &CnnModel<T>,
    cache: &ForwardCache<T>,
    upstream: [T; 2],
    target: GradTarget,
) -> Result<CnnModel<T>> {
    let mut grads = CnnModel::zeros();
    accumulate_backward(model, cache, upstream, target, &mut grads)?;
    Ok(grads)
}
