use hullscan_tensor::nn::{dropout, Linear};
use hullscan_tensor::{impl_module, Ctx, Float, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::densenet::{DenseNet, DenseNetConfig};
use super::stn::{Stn, StnConfig};
use crate::error::{Error, Result};

/// Which parts of the classifier are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfeVariant {
    /// Single general branch feeding all three classifiers.
    NoDfe,
    /// Both branches, trained without the orthogonality term.
    NoRegularizer,
    /// Both branches with the orthogonality term.
    #[default]
    WithRegularizer,
}

impl DfeVariant {
    pub const ALL: [DfeVariant; 3] = [
        DfeVariant::NoDfe,
        DfeVariant::NoRegularizer,
        DfeVariant::WithRegularizer,
    ];

    pub fn has_delamination_branch(self) -> bool {
        self != DfeVariant::NoDfe
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DfeVariant::NoDfe => "no-dfe",
            DfeVariant::NoRegularizer => "no-regularizer",
            DfeVariant::WithRegularizer => "with-regularizer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfeConfig {
    pub stn: StnConfig,
    pub extractor: DenseNetConfig,
    pub general_head: [usize; 2],
    pub delamination_head: [usize; 2],
    pub classifier_hidden: usize,
    pub dropout: f64,
    pub use_stn: bool,
    pub variant: DfeVariant,
}

impl DfeConfig {
    pub fn full() -> Self {
        Self {
            stn: StnConfig::full(),
            extractor: DenseNetConfig::densenet121(),
            general_head: [512, 256],
            delamination_head: [512, 256],
            classifier_hidden: 128,
            dropout: 0.5,
            use_stn: true,
            variant: DfeVariant::WithRegularizer,
        }
    }

    pub fn desk() -> Self {
        Self {
            stn: StnConfig::desk(),
            extractor: DenseNetConfig::desk(),
            general_head: [64, 32],
            delamination_head: [64, 32],
            classifier_hidden: 16,
            dropout: 0.2,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.general_head[1] != self.delamination_head[1] {
            return Err(Error::validation(
                "classifier.delamination_head",
                "both heads must end at the classifier input width",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::validation(
                "classifier.dropout",
                "must lie in [0, 1)",
            ));
        }
        Ok(())
    }
}

/// Linear + ReLU + dropout stack.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub dropout: f64,
}
impl_module!(Mlp { layers });

impl<T: Float> Mlp<T> {
    pub fn new<R: Rng + ?Sized>(dims: &[usize], dropout: f64, rng: &mut R) -> Self {
        let layers = dims
            .windows(2)
            .map(|d| Linear::new(d[0], d[1], rng))
            .collect();
        Self { layers, dropout }
    }

    pub fn in_features(&self) -> usize {
        self.layers[0].in_features()
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let mut y = x.clone();
        for l in &self.layers {
            y = dropout(ctx, &l.forward(ctx, &y).relu(), self.dropout);
        }
        y
    }
}

/// Two-layer per-class classifier ending in a sigmoid.
#[derive(Debug, Clone)]
pub struct ClassHead<T> {
    pub hidden: Mlp<T>,
    pub out: Linear<T>,
}
impl_module!(ClassHead { hidden, out });

impl<T: Float> ClassHead<T> {
    fn new<R: Rng + ?Sized>(c_in: usize, hidden: usize, p: f64, rng: &mut R) -> Self {
        Self {
            hidden: Mlp::new(&[c_in, hidden], p, rng),
            out: Linear::new(hidden, 1, rng),
        }
    }

    fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Var<T> {
        let h = self.hidden.forward(ctx, x);
        self.out.forward(ctx, &h).sigmoid()
    }
}

/// Forward results for a batch.
pub struct DfeOutput<T: Float> {
    /// `[n, 3]` probabilities in corrosion, fouling, delamination order.
    pub probs: Var<T>,
    pub f_g: Var<T>,
    pub f_d: Option<Var<T>>,
    pub theta_g: Option<Var<T>>,
    pub theta_d: Option<Var<T>>,
}

/// Multi-label defect classifier with a general and a delamination branch.
#[derive(Debug, Clone)]
pub struct DfeNet<T> {
    pub stn_g: Option<Stn<T>>,
    pub stn_d: Option<Stn<T>>,
    pub extractor_g: DenseNet<T>,
    pub extractor_d: Option<DenseNet<T>>,
    pub gh: Mlp<T>,
    pub dh: Option<Mlp<T>>,
    pub classifiers: Vec<ClassHead<T>>,
    pub patch: usize,
    pub variant: DfeVariant,
}
impl_module!(DfeNet {
    stn_g,
    stn_d,
    extractor_g,
    extractor_d,
    gh,
    dh,
    classifiers
});

impl<T: Float> DfeNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &DfeConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let dual = cfg.variant.has_delamination_branch();
        let f = cfg.extractor.features();
        let stn_g = cfg.use_stn.then(|| Stn::new(&cfg.stn, rng));
        let stn_d = (cfg.use_stn && dual).then(|| Stn::new(&cfg.stn, rng));
        let extractor_g = DenseNet::new(&cfg.extractor, rng);
        let extractor_d = dual.then(|| DenseNet::new(&cfg.extractor, rng));
        let [g1, g2] = cfg.general_head;
        let [d1, d2] = cfg.delamination_head;
        let gh = Mlp::new(&[f, g1, g2], cfg.dropout, rng);
        let dh = dual.then(|| Mlp::new(&[2 * f, d1, d2], cfg.dropout, rng));
        let classifiers = (0..3)
            .map(|_| ClassHead::new(g2, cfg.classifier_hidden, cfg.dropout, rng))
            .collect();
        let net = Self {
            stn_g,
            stn_d,
            extractor_g,
            extractor_d,
            gh,
            dh,
            classifiers,
            patch: cfg.stn.patch,
            variant: cfg.variant,
        };
        assert_eq!(net.extractor_g.features(), f, "general extractor width");
        assert_eq!(net.gh.in_features(), f, "GH consumes one feature vector");
        if let Some(dh) = &net.dh {
            assert_eq!(dh.in_features(), 2 * f, "DH consumes both feature vectors");
        }
        Ok(net)
    }

    pub fn features(&self) -> usize {
        self.extractor_g.features()
    }

    fn check_patch(&self, x: &Var<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.patch || s[3] != self.patch {
            return Err(Error::Shape(format!(
                "classifier expects [n, 3, {0}, {0}] patches, got {s:?}",
                self.patch
            )));
        }
        Ok(())
    }

    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Result<DfeOutput<T>> {
        self.check_patch(x)?;
        let (xg, theta_g) = match &self.stn_g {
            Some(s) => {
                let (y, t) = s.forward(ctx, x);
                (y, Some(t))
            }
            None => (x.clone(), None),
        };
        let f_g = self.extractor_g.forward(ctx, &xg);
        let g = self.gh.forward(ctx, &f_g);
        let p1 = self.classifiers[0].forward(ctx, &g);
        let p2 = self.classifiers[1].forward(ctx, &g);
        let (p3, f_d, theta_d) = match (&self.extractor_d, &self.dh) {
            (Some(ext), Some(dh)) => {
                let (xd, theta_d) = match &self.stn_d {
                    Some(s) => {
                        let (y, t) = s.forward(ctx, x);
                        (y, Some(t))
                    }
                    None => (x.clone(), None),
                };
                let f_d = ext.forward(ctx, &xd);
                let d = dh.forward(ctx, &Var::concat(&[f_g.clone(), f_d.clone()], 1));
                (self.classifiers[2].forward(ctx, &d), Some(f_d), theta_d)
            }
            _ => (self.classifiers[2].forward(ctx, &g), None, None),
        };
        Ok(DfeOutput {
            probs: Var::concat(&[p1, p2, p3], 1),
            f_g,
            f_d,
            theta_g,
            theta_d,
        })
    }
}

/// Single-branch network with one softmax over the three classes.
#[derive(Debug, Clone)]
pub struct MultiClassNet<T> {
    pub stn: Option<Stn<T>>,
    pub extractor: DenseNet<T>,
    pub head: Mlp<T>,
    pub out: Linear<T>,
    pub patch: usize,
}
impl_module!(MultiClassNet {
    stn,
    extractor,
    head,
    out
});

impl<T: Float> MultiClassNet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &DfeConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let f = cfg.extractor.features();
        let [g1, g2] = cfg.general_head;
        Ok(Self {
            stn: cfg.use_stn.then(|| Stn::new(&cfg.stn, rng)),
            extractor: DenseNet::new(&cfg.extractor, rng),
            head: Mlp::new(&[f, g1, g2], cfg.dropout, rng),
            out: Linear::new(g2, 3, rng),
            patch: cfg.stn.patch,
        })
    }

    /// `[n, 3, p, p] -> [n, 3]` logits.
    pub fn forward(&self, ctx: &mut Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 || s[2] != self.patch || s[3] != self.patch {
            return Err(Error::Shape(format!("multi-class input {s:?}")));
        }
        let x = match &self.stn {
            Some(stn) => stn.forward(ctx, x).0,
            None => x.clone(),
        };
        let f = self.extractor.forward(ctx, &x);
        let h = self.head.forward(ctx, &f);
        Ok(self.out.forward(ctx, &h))
    }
}

/// Row-wise softmax of logits.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest value; ties go to the first.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
