//! Built-in predictors and decoders, addressable by name through one registry.
//!
//! The predictors are analytic stand-ins for a trained velocity network; each
//! one isolates a behaviour the sampler has to handle (no motion, a perfect
//! oracle, an error pinned to the seam, a shift-equivariant nonlinearity,
//! arbitrary non-equivariant output).

use std::collections::BTreeMap;

use crate::decode_pad::{Decoder, IdentityDecoder, ReferenceConvDecoder};
use crate::denoise::{Conditioning, DenoiseError, Predictor};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::LatentTensor;

/// Always predicts zero velocity.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroVelocity;

impl Predictor for ZeroVelocity {
    fn name(&self) -> &str {
        "zero"
    }

    fn predict(
        &self,
        latent: &LatentTensor,
        _t: f64,
        _cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError> {
        Ok(LatentTensor::zeros(latent.shape())?)
    }
}

/// Perfect oracle for a known endpoint: `v = (target − z) / (1 − t)`, the
/// velocity of the straight line from the current state to `target`.
/// The target is fixed in the predictor's input frame, so under rotated
/// sampling it is only reached when it does not vary along the width axis.
#[derive(Debug, Clone)]
pub struct ConstantTarget {
    target: LatentTensor,
}

impl ConstantTarget {
    pub fn new(target: LatentTensor) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &LatentTensor {
        &self.target
    }
}

impl Predictor for ConstantTarget {
    fn name(&self) -> &str {
        "constant-target"
    }

    fn predict(
        &self,
        latent: &LatentTensor,
        t: f64,
        _cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError> {
        latent.ensure_same_shape(&self.target)?;
        let remaining = 1.0 - t;
        if remaining <= 1e-12 {
            return Err(DenoiseError::Predictor {
                name: self.name().into(),
                reason: format!("undefined at t = {t}"),
            });
        }
        Ok(LatentTensor::new(
            (self.target.data() - latent.data()) / remaining,
        )?)
    }
}

/// Adds `magnitude` to the predicted velocity at one physical column and zero
/// elsewhere: an error that always lands on the seam of the model's input.
#[derive(Debug, Clone, Copy)]
pub struct SeamImpulse {
    pub column: usize,
    pub magnitude: f64,
}

impl Default for SeamImpulse {
    fn default() -> Self {
        Self {
            column: 0,
            magnitude: 1.0,
        }
    }
}

impl Predictor for SeamImpulse {
    fn name(&self) -> &str {
        "seam-impulse"
    }

    fn predict(
        &self,
        latent: &LatentTensor,
        _t: f64,
        _cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError> {
        let col = self.column % latent.width();
        let m = self.magnitude;
        Ok(LatentTensor::from_fn(latent.shape(), |(_, _, _, x)| {
            if x == col {
                m
            } else {
                0.0
            }
        })?)
    }
}

/// Elementwise `v = tanh(z) − z/2`; commutes with any permutation of columns.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointwiseNonlinear;

impl Predictor for PointwiseNonlinear {
    fn name(&self) -> &str {
        "pointwise-nonlinear"
    }

    fn predict(
        &self,
        latent: &LatentTensor,
        _t: f64,
        _cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError> {
        Ok(LatentTensor::new(
            latent.data().mapv(|z| z.tanh() - 0.5 * z),
        )?)
    }
}

/// Gaussian velocity drawn from a seed mixed with `t`; deterministic, but
/// not shift-equivariant.
#[derive(Debug, Clone, Copy)]
pub struct SeededRandom {
    seed: u64,
}

impl SeededRandom {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl Predictor for SeededRandom {
    fn name(&self) -> &str {
        "seeded-random"
    }

    fn predict(
        &self,
        latent: &LatentTensor,
        t: f64,
        _cond: &Conditioning,
    ) -> Result<LatentTensor, DenoiseError> {
        let seed = rng::mix_seed(self.seed, t.to_bits());
        Ok(LatentTensor::new(rng::gaussian_array(
            latent.shape(),
            seed,
        ))?)
    }
}

/// Everything a factory may need to build a plugin.
#[derive(Debug, Clone)]
pub struct PluginContext {
    pub seed: u64,
    /// Endpoint for oracle predictors.
    pub target: Option<LatentTensor>,
    /// Decoder upsample factor.
    pub upsample: usize,
}

impl Default for PluginContext {
    fn default() -> Self {
        Self {
            seed: 0,
            target: None,
            upsample: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PluginKind {
    Predictor,
    Decoder,
}

impl PluginKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PluginKind::Predictor => "predictor",
            PluginKind::Decoder => "decoder",
        }
    }
}

type PredictorFactory = Box<dyn Fn(&PluginContext) -> Result<Box<dyn Predictor>> + Send + Sync>;
type DecoderFactory = Box<dyn Fn(&PluginContext) -> Result<Box<dyn Decoder>> + Send + Sync>;

enum Factory {
    Predictor(PredictorFactory),
    Decoder(DecoderFactory),
}

/// One namespace for predictor and decoder plugins.
pub struct PluginRegistry {
    entries: BTreeMap<String, Factory>,
}

impl PluginRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding every built-in plugin.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register_predictor("zero", |_| Ok(Box::new(ZeroVelocity)));
        r.register_predictor("constant-target", |ctx| {
            let target = ctx.target.clone().ok_or_else(|| Error::PluginArgs {
                name: "constant-target".into(),
                reason: "needs a target tensor".into(),
            })?;
            Ok(Box::new(ConstantTarget::new(target)))
        });
        r.register_predictor("seam-impulse", |_| Ok(Box::new(SeamImpulse::default())));
        r.register_predictor("pointwise-nonlinear", |_| Ok(Box::new(PointwiseNonlinear)));
        r.register_predictor("seeded-random", |ctx| {
            Ok(Box::new(SeededRandom::new(ctx.seed)))
        });
        r.register_decoder("identity", |ctx| {
            if ctx.upsample != 1 {
                return Err(Error::PluginArgs {
                    name: "identity".into(),
                    reason: "upsample factor must be 1".into(),
                });
            }
            Ok(Box::new(IdentityDecoder))
        });
        r.register_decoder("reference-conv", |ctx| {
            Ok(Box::new(ReferenceConvDecoder::new(
                ReferenceConvDecoder::binomial5(),
                ctx.upsample,
            )?))
        });
        r.register_decoder("reference-conv-circular", |ctx| {
            Ok(Box::new(ReferenceConvDecoder::circular(
                ReferenceConvDecoder::binomial5(),
                ctx.upsample,
            )?))
        });
        r
    }

    /// Registers (or replaces) a predictor factory.
    pub fn register_predictor(
        &mut self,
        name: &str,
        f: impl Fn(&PluginContext) -> Result<Box<dyn Predictor>> + Send + Sync + 'static,
    ) {
        self.entries
            .insert(name.to_string(), Factory::Predictor(Box::new(f)));
    }

    /// Registers (or replaces) a decoder factory.
    pub fn register_decoder(
        &mut self,
        name: &str,
        f: impl Fn(&PluginContext) -> Result<Box<dyn Decoder>> + Send + Sync + 'static,
    ) {
        self.entries
            .insert(name.to_string(), Factory::Decoder(Box::new(f)));
    }

    pub fn kind(&self, name: &str) -> Option<PluginKind> {
        self.entries.get(name).map(|f| match f {
            Factory::Predictor(_) => PluginKind::Predictor,
            Factory::Decoder(_) => PluginKind::Decoder,
        })
    }

    pub fn predictor(&self, name: &str, ctx: &PluginContext) -> Result<Box<dyn Predictor>> {
        match self.entries.get(name) {
            Some(Factory::Predictor(f)) => f(ctx),
            _ => Err(Error::UnknownPlugin(format!("predictor `{name}`"))),
        }
    }

    pub fn decoder(&self, name: &str, ctx: &PluginContext) -> Result<Box<dyn Decoder>> {
        match self.entries.get(name) {
            Some(Factory::Decoder(f)) => f(ctx),
            _ => Err(Error::UnknownPlugin(format!("decoder `{name}`"))),
        }
    }

    /// `(kind, name)` pairs in name order.
    pub fn list(&self) -> Vec<(PluginKind, String)> {
        self.entries
            .keys()
            .map(|n| (self.kind(n).expect("listed"), n.clone()))
            .collect()
    }
}

impl Default for PluginRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
