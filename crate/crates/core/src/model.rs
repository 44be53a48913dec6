//! The five end-to-end architectures and the shared classifier head.
//!
//! Every architecture consumes a fixed-length [`Window`] of aligned feature
//! maps and produces a class distribution per time-step through a linear
//! head plus softmax. Streams that run without attention consume the
//! location mean of their map; the attention architecture derives the two
//! subject inputs from the relative attention block instead.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::attention::{attend, AttentionIds};
use crate::cells::{
    coupled_step, lstm_step, tricoupled_step, zero_state, CoupledIds, GateMats, LstmIds,
    PeepholeMode, Peepholes,
};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::sample::{InteractionSample, Window};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Network architecture selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Arch {
    /// Single vanilla cell over the global stream.
    Global,
    /// Three independent vanilla cells, one head each; their class
    /// distributions are averaged.
    NaiveFusion,
    /// Two subject cells sharing hidden states; head on the concatenation.
    Coupled,
    /// Coupled cells plus a global cell feeding both; the global cell is
    /// advanced first each step so its current state is shared.
    Tricoupled,
    /// Tri-coupled with subject inputs produced by relative attention.
    TricoupledAttention,
}

impl Arch {
    pub const ALL: [Arch; 5] = [
        Arch::Global,
        Arch::NaiveFusion,
        Arch::Coupled,
        Arch::Tricoupled,
        Arch::TricoupledAttention,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Global => "global",
            Arch::NaiveFusion => "naive_fusion",
            Arch::Coupled => "coupled",
            Arch::Tricoupled => "tricoupled",
            Arch::TricoupledAttention => "tricoupled_attention",
        }
    }

    pub fn from_name(name: &str) -> Option<Arch> {
        Arch::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// Where the training loss (and the window-level prediction) reads the
/// per-step head outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossMode {
    /// Use the final step of the window.
    LastStep,
    /// Average the per-step losses (and distributions) over the window.
    PerStepMean,
}

#[derive(Debug, Clone)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub arch: Arch,
    /// Hidden units per cell.
    pub hidden: usize,
    /// Number of interaction classes N.
    pub num_classes: usize,
    /// Feature channels K per map location.
    pub channels: usize,
    /// Grid side D; maps carry D^2 locations.
    pub side: usize,
    /// Dropout rate applied to head inputs during training.
    pub dropout_rate: f64,
    pub loss_mode: LossMode,
    pub peephole: PeepholeMode,
}

impl ModelConfig {
    /// Configuration with the conventional defaults: 512 hidden units,
    /// dropout 0.5, last-step loss, full peephole matrices.
    pub fn new(arch: Arch, num_classes: usize, channels: usize, side: usize) -> Self {
        Self {
            arch,
            hidden: 512,
            num_classes,
            channels,
            side,
            dropout_rate: 0.5,
            loss_mode: LossMode::LastStep,
            peephole: PeepholeMode::Full,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.channels == 0 || self.side == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(alloc::format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Head input width: hidden size times the number of concatenated
    /// cell states.
    pub fn feature_dim(&self) -> usize {
        match self.arch {
            Arch::Global | Arch::NaiveFusion => self.hidden,
            Arch::Coupled => 2 * self.hidden,
            Arch::Tricoupled | Arch::TricoupledAttention => 3 * self.hidden,
        }
    }
}

/// Classifier head handles: `w` is `[N, feature_dim]`, `b` is `[N]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadIds {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Debug, Clone)]
enum ArchIds {
    Global {
        g: LstmIds,
        head: HeadIds,
    },
    NaiveFusion {
        s1: LstmIds,
        s2: LstmIds,
        g: LstmIds,
        head_s1: HeadIds,
        head_s2: HeadIds,
        head_g: HeadIds,
    },
    Coupled {
        s1: CoupledIds,
        s2: CoupledIds,
        head: HeadIds,
    },
    Tricoupled {
        g: LstmIds,
        s1: CoupledIds,
        s2: CoupledIds,
        head: HeadIds,
    },
    TricoupledAttention {
        g: LstmIds,
        s1: CoupledIds,
        s2: CoupledIds,
        att1: AttentionIds,
        att2: AttentionIds,
        head: HeadIds,
    },
}

/// Per-subject attention maps collected over a window, one `[D^2]` tensor
/// per step.
#[derive(Debug, Clone)]
pub struct AttentionTrace<F> {
    pub subject1: Vec<Tensor<F>>,
    pub subject2: Vec<Tensor<F>>,
}

/// Output of one window-level forward pass.
#[derive(Debug, Clone)]
pub struct Prediction<F> {
    /// Class distribution for the window.
    pub probs: Tensor<F>,
    /// Per-step distributions, when requested.
    pub per_step_probs: Option<Vec<Tensor<F>>>,
    /// Attention maps, for the attention architecture.
    pub attention: Option<AttentionTrace<F>>,
}

/// Everything the forward pass produced on the tape.
struct StepOut {
    /// Combined class distribution per computed step.
    combined: Vec<Var>,
    /// Per-branch distributions (subject1, subject2, global) when the
    /// architecture trains independent branches.
    branches: Option<[Vec<Var>; 3]>,
    /// Attention weights per step, both subjects.
    attention: Option<(Vec<Var>, Vec<Var>)>,
}

#[derive(Debug, Clone)]
pub struct Model<F: Real> {
    config: ModelConfig,
    params: ParamSet<F>,
    ids: ArchIds,
}

impl<F: Real> Model<F> {
    /// Builds a model with freshly initialized weights. Weight matrices are
    /// drawn uniformly from ±sqrt(6 / (fan_in + fan_out)); biases start at
    /// zero except the forget-gate bias at 1. The draw order is fixed by
    /// the registration order, so a seeded generator gives reproducible
    /// parameters.
    pub fn new(config: ModelConfig, rng: &mut ChaCha12Rng) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let hidden = config.hidden;
        let k = config.channels;
        let locations = config.side * config.side;
        let classes = config.num_classes;
        let feat = config.feature_dim();
        let peep = config.peephole;

        let ids = match config.arch {
            Arch::Global => ArchIds::Global {
                g: register_lstm(&mut params, rng, "g", k, hidden, peep)?,
                head: register_head(&mut params, rng, "head", classes, feat)?,
            },
            Arch::NaiveFusion => ArchIds::NaiveFusion {
                s1: register_lstm(&mut params, rng, "s1", k, hidden, peep)?,
                s2: register_lstm(&mut params, rng, "s2", k, hidden, peep)?,
                g: register_lstm(&mut params, rng, "g", k, hidden, peep)?,
                head_s1: register_head(&mut params, rng, "head_s1", classes, feat)?,
                head_s2: register_head(&mut params, rng, "head_s2", classes, feat)?,
                head_g: register_head(&mut params, rng, "head_g", classes, feat)?,
            },
            Arch::Coupled => ArchIds::Coupled {
                s1: register_coupled(&mut params, rng, "s1", k, hidden, None, peep)?,
                s2: register_coupled(&mut params, rng, "s2", k, hidden, None, peep)?,
                head: register_head(&mut params, rng, "head", classes, feat)?,
            },
            Arch::Tricoupled => ArchIds::Tricoupled {
                g: register_lstm(&mut params, rng, "g", k, hidden, peep)?,
                s1: register_coupled(&mut params, rng, "s1", k, hidden, Some(hidden), peep)?,
                s2: register_coupled(&mut params, rng, "s2", k, hidden, Some(hidden), peep)?,
                head: register_head(&mut params, rng, "head", classes, feat)?,
            },
            Arch::TricoupledAttention => ArchIds::TricoupledAttention {
                g: register_lstm(&mut params, rng, "g", k, hidden, peep)?,
                s1: register_coupled(&mut params, rng, "s1", k, hidden, Some(hidden), peep)?,
                s2: register_coupled(&mut params, rng, "s2", k, hidden, Some(hidden), peep)?,
                att1: register_attention(&mut params, rng, "s1.att", locations, hidden, k)?,
                att2: register_attention(&mut params, rng, "s2.att", locations, hidden, k)?,
                head: register_head(&mut params, rng, "head", classes, feat)?,
            },
        };

        Ok(Self {
            config,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Arch {
        self.config.arch
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    /// Copies every parameter of `source` whose name starts with `prefix`
    /// into the identically named parameter here. Shapes must match and
    /// every prefixed source parameter must exist in this model. Returns
    /// the number of parameters copied.
    pub fn adopt_named(&mut self, source: &ParamSet<F>, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for (_, p) in source.iter() {
            if !p.name().starts_with(prefix) {
                continue;
            }
            let Some(dest) = self.params.id_of(p.name()) else {
                return Err(Error::Config(alloc::format!(
                    "this architecture has no parameter named {:?}",
                    p.name()
                )));
            };
            if self.params.value(dest).shape() != p.value().shape() {
                return Err(Error::Config(alloc::format!(
                    "parameter {:?} has shape {:?} here but {:?} in the source",
                    p.name(),
                    self.params.value(dest).shape(),
                    p.value().shape()
                )));
            }
            *self.params.value_mut(dest) = p.value().clone();
            copied += 1;
        }
        if copied == 0 {
            return Err(Error::Config(alloc::format!(
                "no parameters matched prefix {prefix:?}"
            )));
        }
        Ok(copied)
    }

    /// Freezes or unfreezes every parameter whose name starts with
    /// `prefix`; returns how many were touched.
    pub fn set_trainable_by_prefix(&mut self, prefix: &str, trainable: bool) -> usize {
        let ids: Vec<ParamId> = self
            .params
            .iter()
            .filter(|(_, p)| p.name().starts_with(prefix))
            .map(|(id, _)| id)
            .collect();
        for id in &ids {
            self.params.set_trainable(*id, trainable);
        }
        ids.len()
    }

    /// Inference pass over one window. `want_steps` additionally returns
    /// the distribution at every step; attention maps are returned whenever
    /// the architecture produces them. No dropout is ever applied here.
    pub fn predict(&self, window: &Window<F>) -> Result<Prediction<F>> {
        self.predict_detailed(window, false)
    }

    pub fn predict_detailed(&self, window: &Window<F>, want_steps: bool) -> Result<Prediction<F>> {
        let all_steps = want_steps || matches!(self.config.loss_mode, LossMode::PerStepMean);
        let mut tape = Tape::new();
        let out = self.run(&mut tape, window, all_steps, &mut None)?;
        let probs = self.window_probs(&mut tape, &out.combined)?;
        Ok(Prediction {
            probs: tape.value(probs).clone(),
            per_step_probs: if want_steps {
                Some(
                    out.combined
                        .iter()
                        .map(|v| tape.value(*v).clone())
                        .collect(),
                )
            } else {
                None
            },
            attention: out.attention.map(|(a1, a2)| AttentionTrace {
                subject1: a1.iter().map(|v| tape.value(*v).clone()).collect(),
                subject2: a2.iter().map(|v| tape.value(*v).clone()).collect(),
            }),
        })
    }

    /// Builds the training loss for one window on the caller's tape.
    /// Returns the scalar loss and the window's class distribution (for
    /// accuracy tracking). Dropout, when given, draws one mask per head
    /// application from the supplied generator.
    pub fn training_loss(
        &self,
        tape: &mut Tape<F>,
        window: &Window<F>,
        label: usize,
        mut dropout: Option<(f64, &mut ChaCha12Rng)>,
    ) -> Result<(Var, Var)> {
        if label >= self.config.num_classes {
            return Err(Error::Data(alloc::format!(
                "label {label} out of range for {} classes",
                self.config.num_classes
            )));
        }
        let all_steps = matches!(self.config.loss_mode, LossMode::PerStepMean);
        let out = self.run(tape, window, all_steps, &mut dropout)?;
        let loss = match &out.branches {
            // Independent branches are trained jointly by summing their
            // losses — equivalent to training each branch on its own.
            Some(branches) => {
                let mut total: Option<Var> = None;
                for branch in branches {
                    let branch_loss = self.steps_loss(tape, branch, label)?;
                    total = Some(match total {
                        Some(acc) => tape.add(acc, branch_loss)?,
                        None => branch_loss,
                    });
                }
                total.expect("three branches")
            }
            None => self.steps_loss(tape, &out.combined, label)?,
        };
        let probs = self.window_probs(tape, &out.combined)?;
        Ok((loss, probs))
    }

    /// Collapses per-step distributions into the window-level one.
    fn window_probs(&self, tape: &mut Tape<F>, step_probs: &[Var]) -> Result<Var> {
        match self.config.loss_mode {
            LossMode::LastStep => Ok(*step_probs.last().expect("at least one step")),
            LossMode::PerStepMean => mean_vars(tape, step_probs),
        }
    }

    fn steps_loss(&self, tape: &mut Tape<F>, step_probs: &[Var], label: usize) -> Result<Var> {
        match self.config.loss_mode {
            LossMode::LastStep => tape.nll(*step_probs.last().expect("at least one step"), label),
            LossMode::PerStepMean => {
                let mut acc: Option<Var> = None;
                for &p in step_probs {
                    let term = tape.nll(p, label)?;
                    acc = Some(match acc {
                        Some(a) => tape.add(a, term)?,
                        None => term,
                    });
                }
                let total = acc.expect("at least one step");
                Ok(tape.scale(total, F::one() / F::of(step_probs.len() as f64)))
            }
        }
    }

    fn check_window(&self, window: &Window<F>) -> Result<()> {
        if window.is_empty() {
            return Err(Error::Config("window has no frames".into()));
        }
        let len = window.len();
        if window.subject2.len() != len || window.global.len() != len {
            return Err(Error::Config("window streams are misaligned".into()));
        }
        for (stream, maps) in [
            ("subject1", &window.subject1),
            ("subject2", &window.subject2),
            ("global", &window.global),
        ] {
            for map in maps.iter() {
                if map.side() != self.config.side || map.channels() != self.config.channels {
                    return Err(Error::Config(alloc::format!(
                        "{stream} stream has {}x{}-channel maps but the model expects {}x{}",
                        map.side(),
                        map.channels(),
                        self.config.side,
                        self.config.channels
                    )));
                }
            }
        }
        Ok(())
    }

    fn run(
        &self,
        tape: &mut Tape<F>,
        window: &Window<F>,
        all_steps: bool,
        dropout: &mut Option<(f64, &mut ChaCha12Rng)>,
    ) -> Result<StepOut> {
        self.check_window(window)?;
        let len = window.len();
        let hidden = self.config.hidden;
        let peep = self.config.peephole;
        let params = &self.params;
        let mut combined = Vec::new();

        match &self.ids {
            ArchIds::Global { g, head } => {
                let mut state = zero_state(tape, hidden);
                for t in 0..len {
                    let x = tape.constant(window.global[t].location_mean());
                    state = lstm_step(tape, params, g, peep, x, state)?;
                    if all_steps || t + 1 == len {
                        combined.push(self.head_probs(tape, head, state.h, dropout)?);
                    }
                }
                Ok(StepOut {
                    combined,
                    branches: None,
                    attention: None,
                })
            }
            ArchIds::NaiveFusion {
                s1,
                s2,
                g,
                head_s1,
                head_s2,
                head_g,
            } => {
                let mut st1 = zero_state(tape, hidden);
                let mut st2 = zero_state(tape, hidden);
                let mut stg = zero_state(tape, hidden);
                let mut branches: [Vec<Var>; 3] = [Vec::new(), Vec::new(), Vec::new()];
                for t in 0..len {
                    let x1 = tape.constant(window.subject1[t].location_mean());
                    let x2 = tape.constant(window.subject2[t].location_mean());
                    let xg = tape.constant(window.global[t].location_mean());
                    st1 = lstm_step(tape, params, s1, peep, x1, st1)?;
                    st2 = lstm_step(tape, params, s2, peep, x2, st2)?;
                    stg = lstm_step(tape, params, g, peep, xg, stg)?;
                    if all_steps || t + 1 == len {
                        let p1 = self.head_probs(tape, head_s1, st1.h, dropout)?;
                        let p2 = self.head_probs(tape, head_s2, st2.h, dropout)?;
                        let pg = self.head_probs(tape, head_g, stg.h, dropout)?;
                        branches[0].push(p1);
                        branches[1].push(p2);
                        branches[2].push(pg);
                        combined.push(mean_vars(tape, &[p1, p2, pg])?);
                    }
                }
                Ok(StepOut {
                    combined,
                    branches: Some(branches),
                    attention: None,
                })
            }
            ArchIds::Coupled { s1, s2, head } => {
                let mut st1 = zero_state(tape, hidden);
                let mut st2 = zero_state(tape, hidden);
                for t in 0..len {
                    let x1 = tape.constant(window.subject1[t].location_mean());
                    let x2 = tape.constant(window.subject2[t].location_mean());
                    (st1, st2) = coupled_step(tape, params, s1, s2, peep, x1, x2, st1, st2)?;
                    if all_steps || t + 1 == len {
                        let feat = tape.concat(&[st1.h, st2.h])?;
                        combined.push(self.head_probs(tape, head, feat, dropout)?);
                    }
                }
                Ok(StepOut {
                    combined,
                    branches: None,
                    attention: None,
                })
            }
            ArchIds::Tricoupled { g, s1, s2, head } => {
                let mut stg = zero_state(tape, hidden);
                let mut st1 = zero_state(tape, hidden);
                let mut st2 = zero_state(tape, hidden);
                for t in 0..len {
                    // The global cell advances first: the subject cells
                    // read its state of the current step.
                    let xg = tape.constant(window.global[t].location_mean());
                    stg = lstm_step(tape, params, g, peep, xg, stg)?;
                    let x1 = tape.constant(window.subject1[t].location_mean());
                    let x2 = tape.constant(window.subject2[t].location_mean());
                    (st1, st2) =
                        tricoupled_step(tape, params, s1, s2, peep, x1, x2, st1, st2, stg.h)?;
                    if all_steps || t + 1 == len {
                        let feat = tape.concat(&[st1.h, st2.h, stg.h])?;
                        combined.push(self.head_probs(tape, head, feat, dropout)?);
                    }
                }
                Ok(StepOut {
                    combined,
                    branches: None,
                    attention: None,
                })
            }
            ArchIds::TricoupledAttention {
                g,
                s1,
                s2,
                att1,
                att2,
                head,
            } => {
                let mut stg = zero_state(tape, hidden);
                let mut st1 = zero_state(tape, hidden);
                let mut st2 = zero_state(tape, hidden);
                let mut maps1 = Vec::with_capacity(len);
                let mut maps2 = Vec::with_capacity(len);
                for t in 0..len {
                    let xg = tape.constant(window.global[t].location_mean());
                    stg = lstm_step(tape, params, g, peep, xg, stg)?;
                    // Attention scores use the previous hidden states —
                    // taken before the subject cells advance.
                    let (w1, x1) =
                        attend(tape, params, att1, &window.subject1[t], st1.h, Some(st2.h))?;
                    let (w2, x2) =
                        attend(tape, params, att2, &window.subject2[t], st2.h, Some(st1.h))?;
                    maps1.push(w1);
                    maps2.push(w2);
                    (st1, st2) =
                        tricoupled_step(tape, params, s1, s2, peep, x1, x2, st1, st2, stg.h)?;
                    if all_steps || t + 1 == len {
                        let feat = tape.concat(&[st1.h, st2.h, stg.h])?;
                        combined.push(self.head_probs(tape, head, feat, dropout)?);
                    }
                }
                Ok(StepOut {
                    combined,
                    branches: None,
                    attention: Some((maps1, maps2)),
                })
            }
        }
    }

    /// Applies dropout (training only) and the linear head, returning the
    /// softmax distribution. Dropout uses inverted scaling — kept features
    /// are multiplied by 1/(1-rate) — so inference needs no rescaling.
    fn head_probs(
        &self,
        tape: &mut Tape<F>,
        head: &HeadIds,
        feat: Var,
        dropout: &mut Option<(f64, &mut ChaCha12Rng)>,
    ) -> Result<Var> {
        let mut feat = feat;
        if let Some((rate, rng)) = dropout {
            if *rate > 0.0 {
                let keep = F::one() / F::of(1.0 - *rate);
                let mask: Vec<F> = (0..tape.value(feat).numel())
                    .map(|_| {
                        if rng.random::<f64>() < *rate {
                            F::zero()
                        } else {
                            keep
                        }
                    })
                    .collect();
                let mask = tape.constant(Tensor::vector(mask));
                feat = tape.mul(feat, mask)?;
            }
        }
        let w = tape.param(&self.params, head.w);
        let b = tape.param(&self.params, head.b);
        let logits = tape.matvec(w, feat)?;
        let logits = tape.add(logits, b)?;
        tape.softmax(logits)
    }
}

/// Arithmetic mean of same-shaped variables.
fn mean_vars<F: Real>(tape: &mut Tape<F>, vars: &[Var]) -> Result<Var> {
    let mut acc = *vars.first().expect("mean of at least one variable");
    for &v in &vars[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(tape.scale(acc, F::one() / F::of(vars.len() as f64)))
}

/// Fills the second subject stream with a copy of the first, for samples
/// performed by a single actor. Refuses samples not flagged as such.
pub fn duplicate_single_actor<F: Real>(sample: &mut InteractionSample<F>) -> Result<()> {
    if !sample.single_actor {
        return Err(Error::Data(alloc::format!(
            "sample {} is not flagged single-actor",
            sample.id
        )));
    }
    sample.subject2 = sample.subject1.clone();
    Ok(())
}

fn draw_uniform<F: Real>(rng: &mut ChaCha12Rng, limit: f64) -> F {
    F::of((rng.random::<f64>() * 2.0 - 1.0) * limit)
}

/// Weight matrix drawn uniformly from ±sqrt(6 / (fan_in + fan_out)).
fn glorot_matrix<F: Real>(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Tensor<F> {
    let limit = Float::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols).map(|_| draw_uniform(rng, limit)).collect();
    Tensor::new(vec![rows, cols], data).expect("shape matches data length")
}

/// Weight vector treated as a single-row matrix for the fan computation.
fn glorot_vector<F: Real>(rng: &mut ChaCha12Rng, n: usize, fan_sum: usize) -> Tensor<F> {
    let limit = Float::sqrt(6.0 / fan_sum as f64);
    let data = (0..n).map(|_| draw_uniform(rng, limit)).collect();
    Tensor::vector(data)
}

fn register_gate_weights<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    kind: &str,
    rows: usize,
    cols: usize,
) -> Result<GateMats> {
    let make = |gate: &str, params: &mut ParamSet<F>, rng: &mut ChaCha12Rng| {
        params.register(
            alloc::format!("{prefix}.{kind}_{gate}"),
            glorot_matrix(rng, rows, cols),
        )
    };
    Ok(GateMats {
        i: make("i", params, rng)?,
        f: make("f", params, rng)?,
        c: make("c", params, rng)?,
        o: make("o", params, rng)?,
    })
}

/// Gate biases: zero except the forget gate, which starts at 1 so memory
/// is carried until training decides otherwise.
fn register_gate_biases<F: Real>(
    params: &mut ParamSet<F>,
    prefix: &str,
    hidden: usize,
) -> Result<GateMats> {
    Ok(GateMats {
        i: params.register(alloc::format!("{prefix}.b_i"), Tensor::zeros(vec![hidden]))?,
        f: params.register(
            alloc::format!("{prefix}.b_f"),
            Tensor::full(vec![hidden], F::one()),
        )?,
        c: params.register(alloc::format!("{prefix}.b_c"), Tensor::zeros(vec![hidden]))?,
        o: params.register(alloc::format!("{prefix}.b_o"), Tensor::zeros(vec![hidden]))?,
    })
}

fn register_peepholes<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    hidden: usize,
    mode: PeepholeMode,
) -> Result<Peepholes> {
    let make = |gate: &str, params: &mut ParamSet<F>, rng: &mut ChaCha12Rng| {
        let value = match mode {
            PeepholeMode::Full => glorot_matrix(rng, hidden, hidden),
            PeepholeMode::Diagonal => glorot_vector(rng, hidden, 2 * hidden),
        };
        params.register(alloc::format!("{prefix}.v_{gate}"), value)
    };
    Ok(Peepholes {
        i: make("i", params, rng)?,
        f: make("f", params, rng)?,
        o: make("o", params, rng)?,
    })
}

fn register_lstm<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    input_dim: usize,
    hidden: usize,
    mode: PeepholeMode,
) -> Result<LstmIds> {
    Ok(LstmIds {
        w: register_gate_weights(params, rng, prefix, "w", hidden, input_dim)?,
        u: register_gate_weights(params, rng, prefix, "u", hidden, hidden)?,
        v: register_peepholes(params, rng, prefix, hidden, mode)?,
        b: register_gate_biases(params, prefix, hidden)?,
    })
}

fn register_coupled<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    input_dim: usize,
    hidden: usize,
    global_hidden: Option<usize>,
    mode: PeepholeMode,
) -> Result<CoupledIds> {
    let w = register_gate_weights(params, rng, prefix, "w", hidden, input_dim)?;
    let u_own = register_gate_weights(params, rng, prefix, "u_own", hidden, hidden)?;
    let u_partner = register_gate_weights(params, rng, prefix, "u_partner", hidden, hidden)?;
    let u_global = match global_hidden {
        Some(hg) => Some(register_gate_weights(
            params, rng, prefix, "u_global", hidden, hg,
        )?),
        None => None,
    };
    Ok(CoupledIds {
        w,
        u_own,
        u_partner,
        u_global,
        v: register_peepholes(params, rng, prefix, hidden, mode)?,
        b: register_gate_biases(params, prefix, hidden)?,
    })
}

fn register_attention<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    locations: usize,
    hidden: usize,
    channels: usize,
) -> Result<AttentionIds> {
    Ok(AttentionIds {
        w_h: params.register(
            alloc::format!("{prefix}.w_h"),
            glorot_matrix(rng, locations, hidden),
        )?,
        w_h_partner: params.register(
            alloc::format!("{prefix}.w_h_partner"),
            glorot_matrix(rng, locations, hidden),
        )?,
        w_x: params.register(
            alloc::format!("{prefix}.w_x"),
            glorot_vector(rng, channels, channels + 1),
        )?,
    })
}

fn register_head<F: Real>(
    params: &mut ParamSet<F>,
    rng: &mut ChaCha12Rng,
    prefix: &str,
    classes: usize,
    feature_dim: usize,
) -> Result<HeadIds> {
    Ok(HeadIds {
        w: params.register(
            alloc::format!("{prefix}.w"),
            glorot_matrix(rng, classes, feature_dim),
        )?,
        b: params.register(alloc::format!("{prefix}.b"), Tensor::zeros(vec![classes]))?,
    })
}
