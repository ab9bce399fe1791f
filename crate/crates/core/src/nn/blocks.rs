use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;

use super::{Grads, NnError, ParamStore};
use crate::sparse::{self, MapCache, SparseTensor};
use crate::Scalar;

/// A sparse convolution bound to a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub slot: usize,
}

/// Input of a [`Conv`] kept for its backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: SparseTensor<T>,
}

impl Conv {
    pub fn create<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        path: &str,
        kernel_size: usize,
        dilation: u32,
        cin: usize,
        cout: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self { slot: store.add_conv(path, kernel_size, dilation, cin, cout, rng)? })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, path: &str) -> Result<Self, NnError> {
        Ok(Self { slot: store.slot(path)? })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        x: &SparseTensor<T>,
    ) -> Result<(SparseTensor<T>, ConvCache<T>), NnError> {
        let spec = store.spec(self.slot);
        let map = maps.get(spec.kernel_size, spec.dilation)?;
        let out = sparse::sparse_conv(x, spec, &map)?;
        Ok((out, ConvCache { input: x.clone() }))
    }

    pub fn infer<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        x: &SparseTensor<T>,
    ) -> Result<SparseTensor<T>, NnError> {
        let spec = store.spec(self.slot);
        let map = maps.get(spec.kernel_size, spec.dilation)?;
        Ok(sparse::sparse_conv(x, spec, &map)?)
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        cache: &ConvCache<T>,
        grad: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Result<Array2<T>, NnError> {
        let spec = store.spec(self.slot);
        let map = maps.get(spec.kernel_size, spec.dilation)?;
        let (gx, gw) = sparse::sparse_conv_backward(&cache.input, spec, &map, grad)?;
        grads.accumulate(self.slot, &gw);
        Ok(gx)
    }
}

/// Inception-ResNet unit: three branches of width C/2, C/4, C/4
/// (1x1; k; k then k) concatenated and added to the input.
#[derive(Debug, Clone, Copy)]
pub struct Irn {
    a: Conv,
    b: Conv,
    c1: Conv,
    c2: Conv,
}

#[derive(Debug, Clone)]
pub struct IrnCache<T> {
    a: (ConvCache<T>, SparseTensor<T>),
    b: (ConvCache<T>, SparseTensor<T>),
    c1: (ConvCache<T>, SparseTensor<T>),
    c2: (ConvCache<T>, SparseTensor<T>),
}

impl Irn {
    pub fn create<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        kernel_size: usize,
        dilation: u32,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if channels % 4 != 0 || channels == 0 {
            return Err(NnError::Configuration(format!("channel width {channels} not divisible by 4")));
        }
        let (half, quarter) = (channels / 2, channels / 4);
        Ok(Self {
            a: Conv::create(store, &format!("{prefix}.a"), 1, 1, channels, half, rng)?,
            b: Conv::create(store, &format!("{prefix}.b"), kernel_size, dilation, channels, quarter, rng)?,
            c1: Conv::create(store, &format!("{prefix}.c1"), kernel_size, dilation, channels, quarter, rng)?,
            c2: Conv::create(store, &format!("{prefix}.c2"), kernel_size, dilation, quarter, quarter, rng)?,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            a: Conv::bind(store, &format!("{prefix}.a"))?,
            b: Conv::bind(store, &format!("{prefix}.b"))?,
            c1: Conv::bind(store, &format!("{prefix}.c1"))?,
            c2: Conv::bind(store, &format!("{prefix}.c2"))?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        x: &SparseTensor<T>,
    ) -> Result<(SparseTensor<T>, IrnCache<T>), NnError> {
        let (pa, ca) = self.a.forward(store, maps, x)?;
        let (pb, cb) = self.b.forward(store, maps, x)?;
        let (pc1, cc1) = self.c1.forward(store, maps, x)?;
        let (pc2, cc2) = self.c2.forward(store, maps, &sparse::relu(&pc1))?;
        let branches = concatenate(
            Axis(1),
            &[
                sparse::relu(&pa).features().view(),
                sparse::relu(&pb).features().view(),
                sparse::relu(&pc2).features().view(),
            ],
        )
        .expect("rows agree");
        if branches.ncols() != x.channels() {
            return Err(NnError::Configuration(format!(
                "IRN branches give {} channels for input width {}",
                branches.ncols(),
                x.channels()
            )));
        }
        let out = x.with_features(x.features() + &branches)?;
        Ok((out, IrnCache { a: (ca, pa), b: (cb, pb), c1: (cc1, pc1), c2: (cc2, pc2) }))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        cache: &IrnCache<T>,
        grad: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Result<Array2<T>, NnError> {
        let c = grad.ncols();
        let (half, quarter) = (c / 2, c / 4);
        let ga = grad.slice(s![.., ..half]).to_owned();
        let gb = grad.slice(s![.., half..half + quarter]).to_owned();
        let gc = grad.slice(s![.., half + quarter..]).to_owned();
        let mut gx = grad.clone();
        gx += &self.a.backward(store, maps, &cache.a.0, &sparse::relu_backward(&cache.a.1, &ga), grads)?;
        gx += &self.b.backward(store, maps, &cache.b.0, &sparse::relu_backward(&cache.b.1, &gb), grads)?;
        let g_c1_act =
            self.c2.backward(store, maps, &cache.c2.0, &sparse::relu_backward(&cache.c2.1, &gc), grads)?;
        gx += &self.c1.backward(store, maps, &cache.c1.0, &sparse::relu_backward(&cache.c1.1, &g_c1_act), grads)?;
        Ok(gx)
    }
}

/// Deep feature aggregation: conv, ReLU, three IRN units, conv; width C
/// throughout. With `dilations = [1, 2, 3]` and a large kernel this is the
/// large-scale variant used by the residual model.
#[derive(Debug, Clone, Copy)]
pub struct Dfa {
    conv_in: Conv,
    irns: [Irn; 3],
    conv_out: Conv,
}

#[derive(Debug, Clone)]
pub struct DfaCache<T> {
    conv_in: ConvCache<T>,
    pre: SparseTensor<T>,
    irns: Vec<IrnCache<T>>,
    conv_out: ConvCache<T>,
}

impl Dfa {
    pub fn create<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        kernel_size: usize,
        dilations: [u32; 3],
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let conv_in = Conv::create(store, &format!("{prefix}.conv_in"), kernel_size, 1, channels, channels, rng)?;
        let mut irns = Vec::with_capacity(3);
        for (i, &d) in dilations.iter().enumerate() {
            irns.push(Irn::create(store, &format!("{prefix}.irn{i}"), channels, kernel_size, d, rng)?);
        }
        let conv_out = Conv::create(store, &format!("{prefix}.conv_out"), kernel_size, 1, channels, channels, rng)?;
        Ok(Self { conv_in, irns: [irns[0], irns[1], irns[2]], conv_out })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self, NnError> {
        Ok(Self {
            conv_in: Conv::bind(store, &format!("{prefix}.conv_in"))?,
            irns: [
                Irn::bind(store, &format!("{prefix}.irn0"))?,
                Irn::bind(store, &format!("{prefix}.irn1"))?,
                Irn::bind(store, &format!("{prefix}.irn2"))?,
            ],
            conv_out: Conv::bind(store, &format!("{prefix}.conv_out"))?,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        x: &SparseTensor<T>,
    ) -> Result<(SparseTensor<T>, DfaCache<T>), NnError> {
        let (pre, conv_in) = self.conv_in.forward(store, maps, x)?;
        let mut h = sparse::relu(&pre);
        let mut irns = Vec::with_capacity(3);
        for irn in &self.irns {
            let (next, c) = irn.forward(store, maps, &h)?;
            irns.push(c);
            h = next;
        }
        let (out, conv_out) = self.conv_out.forward(store, maps, &h)?;
        Ok((out, DfaCache { conv_in, pre, irns, conv_out }))
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        cache: &DfaCache<T>,
        grad: &Array2<T>,
        grads: &mut Grads<T>,
    ) -> Result<Array2<T>, NnError> {
        let mut g = self.conv_out.backward(store, maps, &cache.conv_out, grad, grads)?;
        for (irn, c) in self.irns.iter().zip(&cache.irns).rev() {
            g = irn.backward(store, maps, c, &g, grads)?;
        }
        let g = sparse::relu_backward(&cache.pre, &g);
        self.conv_in.backward(store, maps, &cache.conv_in, &g, grads)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// One sigmoid probability per voxel.
    Sigmoid,
    /// Softmax over the eight residual symbols.
    Softmax8,
}

impl HeadKind {
    pub fn outputs(self) -> usize {
        match self {
            HeadKind::Sigmoid => 1,
            HeadKind::Softmax8 => 8,
        }
    }
}

/// Three kernel-1 convs with ReLU between them. Returns logits and the
/// intermediate feature after the second conv.
#[derive(Debug, Clone, Copy)]
pub struct Head {
    c1: Conv,
    c2: Conv,
    c3: Conv,
    pub kind: HeadKind,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    c1: (ConvCache<T>, SparseTensor<T>),
    c2: (ConvCache<T>, SparseTensor<T>),
    c3: ConvCache<T>,
}

impl Head {
    pub fn create<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        kind: HeadKind,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Self {
            c1: Conv::create(store, &format!("{prefix}.c1"), 1, 1, channels, channels, rng)?,
            c2: Conv::create(store, &format!("{prefix}.c2"), 1, 1, channels, channels, rng)?,
            c3: Conv::create(store, &format!("{prefix}.c3"), 1, 1, channels, kind.outputs(), rng)?,
            kind,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str, kind: HeadKind) -> Result<Self, NnError> {
        Ok(Self {
            c1: Conv::bind(store, &format!("{prefix}.c1"))?,
            c2: Conv::bind(store, &format!("{prefix}.c2"))?,
            c3: Conv::bind(store, &format!("{prefix}.c3"))?,
            kind,
        })
    }

    /// `(logits, intermediate feature, cache)`.
    pub fn forward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        x: &SparseTensor<T>,
    ) -> Result<(SparseTensor<T>, SparseTensor<T>, HeadCache<T>), NnError> {
        let (p1, k1) = self.c1.forward(store, maps, x)?;
        let (p2, k2) = self.c2.forward(store, maps, &sparse::relu(&p1))?;
        let feature = sparse::relu(&p2);
        let (logits, k3) = self.c3.forward(store, maps, &feature)?;
        Ok((logits, feature, HeadCache { c1: (k1, p1), c2: (k2, p2), c3: k3 }))
    }

    /// Backward from logit gradients plus an optional gradient on the
    /// intermediate feature.
    pub fn backward<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        maps: &MapCache,
        cache: &HeadCache<T>,
        grad_logits: &Array2<T>,
        grad_feature: Option<&Array2<T>>,
        grads: &mut Grads<T>,
    ) -> Result<Array2<T>, NnError> {
        let mut g = self.c3.backward(store, maps, &cache.c3, grad_logits, grads)?;
        if let Some(gf) = grad_feature {
            g += gf;
        }
        let g = self.c2.backward(store, maps, &cache.c2.0, &sparse::relu_backward(&cache.c2.1, &g), grads)?;
        self.c1.backward(store, maps, &cache.c1.0, &sparse::relu_backward(&cache.c1.1, &g), grads)
    }
}
