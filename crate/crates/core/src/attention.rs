//! Soft attention over feature-map locations.
//!
//! Each grid location is scored from the own stream's previous hidden
//! state (location-specific weights), optionally the partner stream's
//! previous hidden state (the relative variant), and the location's own
//! feature vector through a weight vector shared across locations. A
//! softmax turns the scores into a convex weighting, and the attended
//! input is the weighted sum of the location vectors.
//!
//! Score terms are accumulated own-hidden, partner-hidden, feature — so
//! zeroed partner weights reproduce the single-stream scores bit for bit.

use crate::error::Result;
use crate::param::{ParamId, ParamSet};
use crate::real::Real;
use crate::sample::FeatureMap;
use crate::tape::{Tape, Var};

/// Parameter handles of one stream's attention block.
///
/// `w_h` and `w_h_partner` are `[D^2, hidden]` — one score row per grid
/// location; `w_x` is a single `[K]` vector applied to every location's
/// feature vector. No bias term is used.
#[derive(Debug, Clone, Copy)]
pub struct AttentionIds {
    pub w_h: ParamId,
    pub w_h_partner: ParamId,
    pub w_x: ParamId,
}

/// Computes attention weights and the attended input for one frame.
///
/// Returns `(weights, x_t)` where `weights` is the `[D^2]` softmax map and
/// `x_t` the `[K]` weighted sum of location vectors. Pass `h_partner` for
/// the relative variant; leaving it out scores locations from the own
/// hidden state alone.
pub fn attend<F: Real>(
    tape: &mut Tape<F>,
    params: &ParamSet<F>,
    ids: &AttentionIds,
    map: &FeatureMap<F>,
    h_own: Var,
    h_partner: Option<Var>,
) -> Result<(Var, Var)> {
    let map_var = tape.constant(map.values().clone());

    let w_h = tape.param(params, ids.w_h);
    let mut scores = tape.matvec(w_h, h_own)?;
    if let Some(h_p) = h_partner {
        let w_hp = tape.param(params, ids.w_h_partner);
        let term = tape.matvec(w_hp, h_p)?;
        scores = tape.add(scores, term)?;
    }
    let w_x = tape.param(params, ids.w_x);
    let term = tape.matvec(map_var, w_x)?;
    scores = tape.add(scores, term)?;

    let weights = tape.softmax(scores)?;
    let x_t = tape.vecmat(weights, map_var)?;
    Ok((weights, x_t))
}
