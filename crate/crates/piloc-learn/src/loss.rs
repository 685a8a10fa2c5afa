//! PPO-clip policy and value losses with their closed-form adjoints.
//!
//! The trainer minimizes
//! `L = -(1/M) sum min(r*A, clip(r)*A) - c_ent * (1/M) sum H + c_v * (1/M) sum Lv`
//! over minibatch samples, where `r = exp(lp_new - lp_old)` and
//! `Lv = max((V - R)^2, (clip(V, V_old +- eps) - R)^2)`.

use piloc_core::perception::ObservationStack;
use piloc_core::scalar::Scalar;

use crate::net::{self, Network};

/// Per-sample clipped surrogate `min(r*A, clip(r, 1-eps, 1+eps)*A)`.
pub fn surrogate<T: Scalar>(ratio: T, advantage: T, eps: T) -> T {
    let clipped = ratio.min(T::one() + eps).max(T::one() - eps);
    (ratio * advantage).min(clipped * advantage)
}

/// Derivative of the surrogate with respect to the new log-probability.
/// Zero exactly when the clipped branch is strictly smaller (the flat
/// plateau); ties take the unclipped branch.
pub fn surrogate_grad_coeff<T: Scalar>(ratio: T, advantage: T, eps: T) -> T {
    let clipped = ratio.min(T::one() + eps).max(T::one() - eps);
    if ratio * advantage <= clipped * advantage {
        // d(r*A)/d lp_new = r * A.
        ratio * advantage
    } else {
        T::zero()
    }
}

/// Per-sample clipped value loss term (the element-wise max of Eq-style
/// unclipped and clipped squared errors).
pub fn value_term<T: Scalar>(v_new: T, v_old: T, ret: T, eps: T) -> T {
    let e1 = v_new - ret;
    let clipped = v_new.min(v_old + eps).max(v_old - eps);
    let e2 = clipped - ret;
    (e1 * e1).max(e2 * e2)
}

/// Derivative of [`value_term`] with respect to `v_new`. When the clipped
/// branch wins strictly, `v_new` was clamped, so the derivative is zero;
/// ties take the unclipped branch.
pub fn value_term_grad<T: Scalar>(v_new: T, v_old: T, ret: T, eps: T) -> T {
    let e1 = v_new - ret;
    let clipped = v_new.min(v_old + eps).max(v_old - eps);
    let e2 = clipped - ret;
    if e1 * e1 >= e2 * e2 {
        T::of(2.0) * e1
    } else {
        T::zero()
    }
}

/// Categorical entropy `-sum p ln p`.
pub fn entropy4<T: Scalar>(probs: &[T; 4]) -> T {
    let mut h = T::zero();
    for &p in probs {
        if p > T::zero() {
            h = h - p * p.ln();
        }
    }
    h
}

/// `dH/d logits` for a softmax categorical: `-p_j (ln p_j + H)`.
pub fn entropy_grad4<T: Scalar>(probs: &[T; 4]) -> [T; 4] {
    let h = entropy4(probs);
    let mut out = [T::zero(); 4];
    for (o, &p) in out.iter_mut().zip(probs) {
        if p > T::zero() {
            *o = -p * (p.ln() + h);
        }
    }
    out
}

/// `d lp(action) / d logits = onehot(action) - probs`.
pub fn log_prob_grad4<T: Scalar>(probs: &[T; 4], action: usize) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for (j, (o, &p)) in out.iter_mut().zip(probs).enumerate() {
        *o = if j == action { T::one() - p } else { -p };
    }
    out
}

/// Batch policy loss `-(1/n) sum min(r A, clip(r) A)` over aligned arrays;
/// the reference form used by tests and metrics.
pub fn policy_loss_batch<T: Scalar>(
    log_probs_new: &[T],
    log_probs_old: &[T],
    advantages: &[T],
    eps: T,
) -> T {
    assert_eq!(log_probs_new.len(), log_probs_old.len());
    assert_eq!(log_probs_new.len(), advantages.len());
    let n = T::of(log_probs_new.len() as f64);
    let mut acc = T::zero();
    for ((&lpn, &lpo), &a) in log_probs_new.iter().zip(log_probs_old).zip(advantages) {
        let ratio = (lpn - lpo).exp();
        acc = acc + surrogate(ratio, a, eps);
    }
    -acc / n
}

/// Batch value loss: mean of [`value_term`] over aligned arrays.
pub fn value_loss_batch<T: Scalar>(v_new: &[T], v_old: &[T], returns: &[T], eps: T) -> T {
    assert_eq!(v_new.len(), v_old.len());
    assert_eq!(v_new.len(), returns.len());
    let n = T::of(v_new.len() as f64);
    let mut acc = T::zero();
    for ((&v, &vo), &r) in v_new.iter().zip(v_old).zip(returns) {
        acc = acc + value_term(v, vo, r, eps);
    }
    acc / n
}

/// One sample of the PPO minibatch objective.
#[derive(Debug, Clone)]
pub struct PpoSample<'a, T> {
    pub obs: &'a ObservationStack<T>,
    pub action: usize,
    pub log_prob_old: T,
    pub value_old: T,
    pub ret: T,
    pub advantage: T,
}

/// Gradient and loss sums accumulated over a sample slice.
#[derive(Debug, Clone)]
pub struct PpoGrads<T> {
    pub grads: Vec<T>,
    /// Sum over samples of `-surrogate` (divide by the minibatch size for
    /// the mean).
    pub policy_loss_sum: T,
    pub value_loss_sum: T,
    pub entropy_sum: T,
    /// Samples dropped for non-finite ratios.
    pub skipped: usize,
}

/// Accumulate the gradient of the minibatch objective
/// `(1/m) sum[-surr - c_ent*H + c_v*Lv]` over `samples`, with `inv_m` the
/// reciprocal of the full minibatch size. This is the one gradient path
/// used by training and by the finite-difference checks.
pub fn accumulate_ppo_grads<T: Scalar>(
    net: &Network<T>,
    samples: &[PpoSample<'_, T>],
    clip: T,
    value_coef: T,
    entropy_coef: T,
    inv_m: T,
) -> PpoGrads<T> {
    let mut out = PpoGrads {
        grads: vec![T::zero(); net.param_count()],
        policy_loss_sum: T::zero(),
        value_loss_sum: T::zero(),
        entropy_sum: T::zero(),
        skipped: 0,
    };
    for s in samples {
        let (nn_out, trace) = net
            .forward_traced(s.obs)
            .expect("observation shapes match the spec");
        let lp_new = net::log_softmax4(&nn_out.logits)[s.action];
        let ratio = (lp_new - s.log_prob_old).exp();
        if !ratio.is_finite() {
            out.skipped += 1;
            continue;
        }
        let surr = surrogate(ratio, s.advantage, clip);
        let coeff = surrogate_grad_coeff(ratio, s.advantage, clip);
        let h = entropy4(&nn_out.probs);
        let dh = entropy_grad4(&nn_out.probs);
        let dlp = log_prob_grad4(&nn_out.probs, s.action);
        let vterm = value_term(nn_out.value, s.value_old, s.ret, clip);
        let dv = value_term_grad(nn_out.value, s.value_old, s.ret, clip);

        out.policy_loss_sum = out.policy_loss_sum - surr;
        out.value_loss_sum = out.value_loss_sum + vterm;
        out.entropy_sum = out.entropy_sum + h;

        let mut d_logits = [T::zero(); 4];
        for j in 0..4 {
            d_logits[j] = inv_m * (-(coeff * dlp[j]) - entropy_coef * dh[j]);
        }
        let d_value = inv_m * value_coef * dv;
        net.backward(&trace, &d_logits, d_value, &mut out.grads);
    }
    out
}

/// The scalar objective [`accumulate_ppo_grads`] differentiates, for
/// finite-difference oracles: mean over the slice of
/// `-surr - c_ent*H + c_v*Lv`.
pub fn ppo_batch_loss<T: Scalar>(
    net: &Network<T>,
    samples: &[PpoSample<'_, T>],
    clip: T,
    value_coef: T,
    entropy_coef: T,
) -> T {
    let mut acc = T::zero();
    for s in samples {
        let nn_out = net.forward(s.obs).expect("shapes match");
        let lp_new = net::log_softmax4(&nn_out.logits)[s.action];
        let ratio = (lp_new - s.log_prob_old).exp();
        let surr = surrogate(ratio, s.advantage, clip);
        let h = entropy4(&nn_out.probs);
        let vterm = value_term(nn_out.value, s.value_old, s.ret, clip);
        acc = acc - surr - entropy_coef * h + value_coef * vterm;
    }
    acc / T::of(samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_binds_for_positive_advantage() {
        // A=1, r=1.5, eps=0.2 -> min(1.5, 1.2) = 1.2.
        let s: f64 = surrogate(1.5, 1.0, 0.2);
        assert!((s - 1.2).abs() < 1e-12);
        // The plateau has zero gradient.
        assert_eq!(surrogate_grad_coeff(1.5, 1.0, 0.2), 0.0);
    }

    #[test]
    fn clip_binds_for_negative_advantage() {
        // A=-1, r=0.5, eps=0.2 -> min(-0.5, -0.8) = -0.8.
        let s: f64 = surrogate(0.5, -1.0, 0.2);
        assert!((s + 0.8).abs() < 1e-12);
        assert_eq!(surrogate_grad_coeff(0.5, -1.0, 0.2), 0.0);
    }

    #[test]
    fn unclipped_branch_passes_gradient() {
        // A=-1, r=1.5: min(-1.5, -1.2) = -1.5 (unclipped side).
        let s: f64 = surrogate(1.5, -1.0, 0.2);
        assert!((s + 1.5).abs() < 1e-12);
        assert!((surrogate_grad_coeff::<f64>(1.5, -1.0, 0.2) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn identity_ratio_gives_mean_advantage() {
        let lp = [-0.5, -1.0, -2.0];
        let adv = [1.0, -1.0, 0.0];
        let loss: f64 = policy_loss_batch(&lp, &lp, &adv, 0.2);
        // r = 1 everywhere: loss = -mean(adv) = 0.
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn surrogate_never_exceeds_clip_bound() {
        // |min(rA, clip(r)A)| <= (1+eps)|A| for r >= 0.
        for &(r, a) in &[(0.01, 2.0), (0.9, -3.0), (1.2, 1.0), (5.0, 0.7), (5.0, -0.7)] {
            let s: f64 = surrogate(r, a, 0.2);
            assert!(
                s <= (1.0 + 0.2) * a.abs() + 1e-12,
                "surrogate {s} above bound for r={r}, a={a}"
            );
        }
    }

    #[test]
    fn value_clip_examples() {
        // V_old=1, V_new=2, R=1, eps=0.2: max((2-1)^2, (1.2-1)^2) = 1.
        let t: f64 = value_term(2.0, 1.0, 1.0, 0.2);
        assert!((t - 1.0).abs() < 1e-12);
        // V_old=1, V_new=1.1, R=2: clip inactive, both 0.81.
        let t: f64 = value_term(1.1, 1.0, 2.0, 0.2);
        assert!((t - 0.81).abs() < 1e-12);
        // Gradient flows on the unclipped branch of the tie.
        let g: f64 = value_term_grad(1.1, 1.0, 2.0, 0.2);
        assert!((g - 2.0 * (1.1 - 2.0)).abs() < 1e-12);
        // Unclipped error dominates the max even past the clip range, so
        // the gradient still flows.
        let g: f64 = value_term_grad(2.0, 1.0, 1.0, 0.2);
        assert!((g - 2.0).abs() < 1e-12);
        // Clipped branch dominating means v was clamped away: zero gradient.
        let g: f64 = value_term_grad(2.0, 1.0, 2.5, 0.2);
        assert_eq!(g, 0.0);
        let t: f64 = value_term(2.0, 1.0, 2.5, 0.2);
        assert!((t - (1.2f64 - 2.5).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn zero_when_everything_matches() {
        let v = [1.0, 2.0];
        let loss: f64 = value_loss_batch(&v, &v, &v, 0.2);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn entropy_of_uniform_is_ln4() {
        let probs = [0.25f64; 4];
        assert!((entropy4(&probs) - 4.0f64.ln()).abs() < 1e-12);
        // Gradient of entropy at the uniform point vanishes.
        for g in entropy_grad4(&probs) {
            assert!(g.abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_grad_matches_finite_difference() {
        let logits = [0.4f64, -0.3, 1.1, 0.0];
        let probs = crate::net::softmax4(&logits);
        let analytic = entropy_grad4(&probs);
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = logits;
            plus[j] += h;
            let mut minus = logits;
            minus[j] -= h;
            let fd = (entropy4(&crate::net::softmax4(&plus))
                - entropy4(&crate::net::softmax4(&minus)))
                / (2.0 * h);
            assert!(
                (analytic[j] - fd).abs() < 1e-6,
                "entropy grad {j}: {} vs {fd}",
                analytic[j]
            );
        }
    }

    #[test]
    fn log_prob_grad_matches_finite_difference() {
        let logits = [0.2f64, 0.9, -1.4, 0.3];
        let probs = crate::net::softmax4(&logits);
        let action = 2;
        let analytic = log_prob_grad4(&probs, action);
        let h = 1e-6;
        for j in 0..4 {
            let mut plus = logits;
            plus[j] += h;
            let mut minus = logits;
            minus[j] -= h;
            let fd = (crate::net::log_softmax4(&plus)[action]
                - crate::net::log_softmax4(&minus)[action])
                / (2.0 * h);
            assert!((analytic[j] - fd).abs() < 1e-6);
        }
    }
}
