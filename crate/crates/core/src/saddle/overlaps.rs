//! Overlap updates: the prior side of the saddle point, driven by the
//! spectral law of `FFᵀ/p`.

use crate::error::{state, Result};

use super::params::{Hats, ModelParams, Overlaps};

/// The five overlap updates given the conjugates.
///
/// With `z = (λ + V̂_w)/V̂_s`, `g = g_μ(−z)` and `g' = g'_μ(−z)`. The teacher
/// norm enters as `ρ m̂_s²` wherever the unit-norm equations carry `m̂_s²`.
pub fn overlap_update(h: &Hats, p: &ModelParams) -> Result<Overlaps> {
    let lv = p.lambda + h.vhat_w;
    if !(h.vhat_s > 0.0) || !h.vhat_s.is_finite() {
        return Err(state(format!("vhat_s must be positive, got {}", h.vhat_s)));
    }
    if !(lv > 0.0) || !lv.is_finite() {
        return Err(state(format!("lambda + vhat_w must be positive, got {lv}")));
    }
    let z = lv / h.vhat_s;
    let r = p.spectral.resolvent_moments(z)?;
    let gamma = p.gamma;
    let vs2 = h.vhat_s * h.vhat_s;
    let signal = p.rho * h.mhat_s * h.mhat_s + h.qhat_s;

    // e1 = 1 − zg, e2 = g − zg', e3 = 1 − 2zg + z²g'.
    let v_s = r.e1 / h.vhat_s;
    let m_s = p.rho * h.mhat_s / h.vhat_s * r.e1;
    let q_s = signal / vs2 * r.e3 + h.qhat_w / vs2 * r.e2;
    let v_w = gamma / lv * (1.0 / gamma - 1.0 + z * r.g);
    let q_w = gamma * h.qhat_w / (lv * lv) * (1.0 / gamma - 1.0 + z * z * r.dg) + gamma * signal / vs2 * r.e2;
    Ok(Overlaps {
        v_s,
        q_s,
        m_s,
        v_w,
        q_w,
    })
}
