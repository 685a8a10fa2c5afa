//! Finite-difference verification of the training gradient: the analytic
//! gradients of the clipped policy + value objective (the exact path used
//! by the trainer) against central differences on a miniature layer spec.

use piloc_core::perception::ObservationStack;
use piloc_learn::loss::{accumulate_ppo_grads, ppo_batch_loss, PpoSample};
use piloc_learn::net::{log_softmax4, sample_action, Network};
use piloc_learn::spec::mini_spec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_obs(rng: &mut ChaCha8Rng) -> ObservationStack<f64> {
    ObservationStack {
        height: 8,
        width: 8,
        window: 5,
        obstacle: (0..64).map(|_| rng.gen()).collect(),
        exploration: (0..64).map(|_| rng.gen()).collect(),
        pheromone: (0..25).map(|_| rng.gen()).collect(),
    }
}

struct Batch {
    observations: Vec<ObservationStack<f64>>,
    actions: Vec<usize>,
    log_probs_old: Vec<f64>,
    values_old: Vec<f64>,
    returns: Vec<f64>,
    advantages: Vec<f64>,
}

impl Batch {
    fn samples(&self) -> Vec<PpoSample<'_, f64>> {
        (0..self.actions.len())
            .map(|i| PpoSample {
                obs: &self.observations[i],
                action: self.actions[i],
                log_prob_old: self.log_probs_old[i],
                value_old: self.values_old[i],
                ret: self.returns[i],
                advantage: self.advantages[i],
            })
            .collect()
    }
}

/// Old log-probs/values come from a different parameter vector so ratios
/// differ from 1 and both clip branches get exercised.
fn make_batch(old_net: &Network<f64>, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = Batch {
        observations: Vec::new(),
        actions: Vec::new(),
        log_probs_old: Vec::new(),
        values_old: Vec::new(),
        returns: Vec::new(),
        advantages: Vec::new(),
    };
    for _ in 0..n {
        let obs = random_obs(&mut rng);
        let out = old_net.forward(&obs).unwrap();
        let (action, _) = sample_action(&out, &mut rng);
        let lp_old = log_softmax4(&out.logits)[action];
        batch.observations.push(obs);
        batch.actions.push(action);
        batch.log_probs_old.push(lp_old);
        batch.values_old.push(out.value);
        batch.returns.push(rng.gen_range(-2.0..2.0));
        batch.advantages.push(rng.gen_range(-2.0..2.0));
    }
    batch
}

fn run_gradcheck(shared_trunk: bool, checks: usize, h: f64, tol: f64) -> (usize, usize) {
    let spec = mini_spec(shared_trunk);
    assert!(spec.param_count() <= 2000);
    let net = Network::<f64>::init(spec.clone(), 3).unwrap();
    let old_net = Network::<f64>::init(spec, 4).unwrap();
    let batch = make_batch(&old_net, 6, 17);
    let samples = batch.samples();

    let (clip, c_v, c_ent) = (0.2, 0.5, 0.01);
    let inv_m = 1.0 / samples.len() as f64;
    let acc = accumulate_ppo_grads(&net, &samples, clip, c_v, c_ent, inv_m);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut failures = 0;
    for _ in 0..checks {
        let idx = rng.gen_range(0..net.param_count());
        let mut plus = net.clone();
        plus.params_mut()[idx] += h;
        let mut minus = net.clone();
        minus.params_mut()[idx] -= h;
        let fd = (ppo_batch_loss(&plus, &samples, clip, c_v, c_ent)
            - ppo_batch_loss(&minus, &samples, clip, c_v, c_ent))
            / (2.0 * h);
        let an = acc.grads[idx];
        let rel = (an - fd).abs() / (an.abs() + fd.abs() + 1e-8);
        if rel >= tol {
            failures += 1;
        }
    }
    (failures, checks)
}

#[test]
fn training_gradient_matches_finite_differences_shared_trunk() {
    let (failures, checks) = run_gradcheck(true, 200, 1e-4, 1e-3);
    assert!(
        failures * 100 <= checks,
        "{failures}/{checks} checks outside tolerance"
    );
}

#[test]
fn training_gradient_matches_finite_differences_split_trunk() {
    let (failures, checks) = run_gradcheck(false, 200, 1e-4, 1e-3);
    assert!(
        failures * 100 <= checks,
        "{failures}/{checks} checks outside tolerance"
    );
}

#[test]
fn gradient_is_zero_on_fully_clipped_batch() {
    // Samples engineered so the clip plateau is active everywhere: large
    // positive advantage with ratios far above 1 + eps.
    let spec = mini_spec(true);
    let net = Network::<f64>::init(spec, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let obs = random_obs(&mut rng);
    let out = net.forward(&obs).unwrap();
    let lp = log_softmax4(&out.logits);
    // Old log-prob far below the current one: ratio >> 1.2.
    let samples = vec![PpoSample {
        obs: &obs,
        action: 0,
        log_prob_old: lp[0] - 3.0,
        value_old: out.value,
        ret: out.value,
        advantage: 1.0,
    }];
    // Entropy off so only the surrogate drives the actor gradient.
    let acc = accumulate_ppo_grads(&net, &samples, 0.2, 0.0, 0.0, 1.0);
    assert!(acc.grads.iter().all(|&g| g == 0.0));
}
