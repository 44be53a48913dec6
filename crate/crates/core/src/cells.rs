//! The three recurrent cell variants.
//!
//! All cells share the same gate structure: peepholes feed the input and
//! forget gates from the previous memory cell and the output gate from the
//! freshly written cell; the candidate path carries no peephole. The
//! coupled variants replace the single recurrent term with a sum of
//! contributions — own stream, partner stream, and optionally the global
//! stream's current hidden state.
//!
//! Gate pre-activations are accumulated in a fixed order (input weights,
//! own recurrence, partner recurrence, global recurrence, peephole, bias),
//! each absent term simply skipped. Since adding an exact-zero vector
//! preserves every bit of the running sum, zeroing a coupling matrix
//! reproduces the simpler cell bit for bit rather than merely approximately.

use alloc::vec;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// One weight per gate, in gate order: input, forget, candidate, output.
#[derive(Debug, Clone, Copy)]
pub struct GateMats {
    pub i: ParamId,
    pub f: ParamId,
    pub c: ParamId,
    pub o: ParamId,
}

/// Peephole weights; the candidate path has none.
#[derive(Debug, Clone, Copy)]
pub struct Peepholes {
    pub i: ParamId,
    pub f: ParamId,
    pub o: ParamId,
}

/// How peephole weights act on the memory cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PeepholeMode {
    /// `[hidden, hidden]` matrices applied as matrix–vector products.
    Full,
    /// `[hidden]` vectors applied elementwise.
    Diagonal,
}

/// Parameter handles of a vanilla cell.
#[derive(Debug, Clone, Copy)]
pub struct LstmIds {
    /// Input weights, `[hidden, input_dim]`.
    pub w: GateMats,
    /// Recurrent weights, `[hidden, hidden]`.
    pub u: GateMats,
    pub v: Peepholes,
    /// Biases, `[hidden]`.
    pub b: GateMats,
}

/// Parameter handles of a coupled cell (one stream's half).
#[derive(Debug, Clone, Copy)]
pub struct CoupledIds {
    pub w: GateMats,
    /// Recurrence from this stream's own previous hidden state.
    pub u_own: GateMats,
    /// Recurrence from the partner stream's previous hidden state.
    pub u_partner: GateMats,
    /// Recurrence from the global stream's current hidden state,
    /// `[hidden, hidden_g]`; present only in the tri-coupled setting.
    pub u_global: Option<GateMats>,
    pub v: Peepholes,
    pub b: GateMats,
}

/// Recurrent state after one step.
#[derive(Debug, Clone, Copy)]
pub struct CellState {
    pub h: Var,
    pub c: Var,
}

/// All-zero initial state.
pub fn zero_state<F: Real>(tape: &mut Tape<F>, hidden: usize) -> CellState {
    CellState {
        h: tape.constant(Tensor::zeros(vec![hidden])),
        c: tape.constant(Tensor::zeros(vec![hidden])),
    }
}

fn affine<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    w: ParamId,
    x: Var,
) -> Result<Var> {
    let wv = tape.param(params, w);
    tape.matvec(wv, x)
}

fn peephole_term<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    mode: PeepholeMode,
    v: ParamId,
    c: Var,
) -> Result<Var> {
    let vv = tape.param(params, v);
    match mode {
        PeepholeMode::Full => tape.matvec(vv, c),
        PeepholeMode::Diagonal => tape.mul(vv, c),
    }
}

/// One step of the vanilla cell.
pub fn lstm_step<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    ids: &LstmIds,
    mode: PeepholeMode,
    x: Var,
    prev: CellState,
) -> Result<CellState> {
    // Input gate: sigmoid(W_i x + U_i h + V_i c + b_i).
    let mut pre = affine(tape, params, ids.w.i, x)?;
    let term = affine(tape, params, ids.u.i, prev.h)?;
    pre = tape.add(pre, term)?;
    let term = peephole_term(tape, params, mode, ids.v.i, prev.c)?;
    pre = tape.add(pre, term)?;
    let bias = tape.param(params, ids.b.i);
    pre = tape.add(pre, bias)?;
    let gate_i = tape.sigmoid(pre);

    // Forget gate: sigmoid(W_f x + U_f h + V_f c + b_f).
    let mut pre = affine(tape, params, ids.w.f, x)?;
    let term = affine(tape, params, ids.u.f, prev.h)?;
    pre = tape.add(pre, term)?;
    let term = peephole_term(tape, params, mode, ids.v.f, prev.c)?;
    pre = tape.add(pre, term)?;
    let bias = tape.param(params, ids.b.f);
    pre = tape.add(pre, bias)?;
    let gate_f = tape.sigmoid(pre);

    // Candidate: tanh(W_c x + U_c h + b_c); no peephole on this path.
    let mut pre = affine(tape, params, ids.w.c, x)?;
    let term = affine(tape, params, ids.u.c, prev.h)?;
    pre = tape.add(pre, term)?;
    let bias = tape.param(params, ids.b.c);
    pre = tape.add(pre, bias)?;
    let candidate = tape.tanh(pre);

    // New memory cell: forget-weighted carry plus input-weighted write.
    let keep = tape.mul(gate_f, prev.c)?;
    let write = tape.mul(gate_i, candidate)?;
    let c_next = tape.add(keep, write)?;

    // Output gate reads the freshly written cell.
    let mut pre = affine(tape, params, ids.w.o, x)?;
    let term = affine(tape, params, ids.u.o, prev.h)?;
    pre = tape.add(pre, term)?;
    let term = peephole_term(tape, params, mode, ids.v.o, c_next)?;
    pre = tape.add(pre, term)?;
    let bias = tape.param(params, ids.b.o);
    pre = tape.add(pre, bias)?;
    let gate_o = tape.sigmoid(pre);

    let c_tanh = tape.tanh(c_next);
    let h_next = tape.mul(gate_o, c_tanh)?;
    Ok(CellState {
        h: h_next,
        c: c_next,
    })
}

/// Gate pre-activation of one coupled stream: input term, own recurrence,
/// partner recurrence, optional global recurrence, optional peephole, bias
/// — folded left in that order.
#[allow(clippy::too_many_arguments)]
fn coupled_pre<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    w: ParamId,
    x: Var,
    u_own: ParamId,
    h_own: Var,
    u_partner: ParamId,
    h_partner: Var,
    global: Option<(ParamId, Var)>,
    peephole: Option<(PeepholeMode, ParamId, Var)>,
    b: ParamId,
) -> Result<Var> {
    let mut pre = affine(tape, params, w, x)?;
    let term = affine(tape, params, u_own, h_own)?;
    pre = tape.add(pre, term)?;
    let term = affine(tape, params, u_partner, h_partner)?;
    pre = tape.add(pre, term)?;
    if let Some((u_g, h_g)) = global {
        let term = affine(tape, params, u_g, h_g)?;
        pre = tape.add(pre, term)?;
    }
    if let Some((mode, v, c)) = peephole {
        let term = peephole_term(tape, params, mode, v, c)?;
        pre = tape.add(pre, term)?;
    }
    let bias = tape.param(params, b);
    tape.add(pre, bias)
}

/// Updates one stream of a coupled pair.
fn coupled_stream_step<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    ids: &CoupledIds,
    mode: PeepholeMode,
    x: Var,
    prev: CellState,
    partner_h: Var,
    h_g: Option<Var>,
) -> Result<CellState> {
    let global = |pick: fn(&GateMats) -> ParamId| {
        ids.u_global.zip(h_g).map(|(g, h)| (pick(&g), h))
    };

    let pre = coupled_pre(
        tape, params, ids.w.i, x, ids.u_own.i, prev.h, ids.u_partner.i, partner_h,
        global(|g| g.i),
        Some((mode, ids.v.i, prev.c)),
        ids.b.i,
    )?;
    let gate_i = tape.sigmoid(pre);

    let pre = coupled_pre(
        tape, params, ids.w.f, x, ids.u_own.f, prev.h, ids.u_partner.f, partner_h,
        global(|g| g.f),
        Some((mode, ids.v.f, prev.c)),
        ids.b.f,
    )?;
    let gate_f = tape.sigmoid(pre);

    let pre = coupled_pre(
        tape, params, ids.w.c, x, ids.u_own.c, prev.h, ids.u_partner.c, partner_h,
        global(|g| g.c),
        None,
        ids.b.c,
    )?;
    let candidate = tape.tanh(pre);

    let keep = tape.mul(gate_f, prev.c)?;
    let write = tape.mul(gate_i, candidate)?;
    let c_next = tape.add(keep, write)?;

    let pre = coupled_pre(
        tape, params, ids.w.o, x, ids.u_own.o, prev.h, ids.u_partner.o, partner_h,
        global(|g| g.o),
        Some((mode, ids.v.o, c_next)),
        ids.b.o,
    )?;
    let gate_o = tape.sigmoid(pre);

    let c_tanh = tape.tanh(c_next);
    let h_next = tape.mul(gate_o, c_tanh)?;
    Ok(CellState {
        h: h_next,
        c: c_next,
    })
}

/// One simultaneous step of the two coupled streams: both updates read the
/// same pair of previous states, so the result does not depend on which
/// stream is computed first.
#[allow(clippy::too_many_arguments)]
pub fn coupled_step<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    ids1: &CoupledIds,
    ids2: &CoupledIds,
    mode: PeepholeMode,
    x1: Var,
    x2: Var,
    prev1: CellState,
    prev2: CellState,
) -> Result<(CellState, CellState)> {
    let next1 = coupled_stream_step(tape, params, ids1, mode, x1, prev1, prev2.h, None)?;
    let next2 = coupled_stream_step(tape, params, ids2, mode, x2, prev2, prev1.h, None)?;
    Ok((next1, next2))
}

/// Coupled step with the third recurrent term: `h_g` must be the global
/// stream's hidden state of the CURRENT time-step, i.e. the global cell is
/// advanced before the subject streams.
#[allow(clippy::too_many_arguments)]
pub fn tricoupled_step<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    ids1: &CoupledIds,
    ids2: &CoupledIds,
    mode: PeepholeMode,
    x1: Var,
    x2: Var,
    prev1: CellState,
    prev2: CellState,
    h_g: Var,
) -> Result<(CellState, CellState)> {
    if ids1.u_global.is_none() || ids2.u_global.is_none() {
        return Err(Error::Config(
            "tri-coupled step needs global coupling weights on both streams".into(),
        ));
    }
    let next1 = coupled_stream_step(tape, params, ids1, mode, x1, prev1, prev2.h, Some(h_g))?;
    let next2 = coupled_stream_step(tape, params, ids2, mode, x2, prev2, prev1.h, Some(h_g))?;
    Ok((next1, next2))
}
