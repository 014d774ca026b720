//! Shared helpers for the integration tests.
#![allow(dead_code)]

use cgraph_core::mcts::{Environment, StepOutcome};
use cgraph_core::VarSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two variables. From `∅` the options are `{0}` (arm 0) and `{1}` (arm 1);
/// each succeeds with its own probability, and the second step to `{0,1}`
/// always succeeds. Every step costs `cost` reward units.
///
/// Outcomes are drawn from the environment's own stream, one draw per
/// first step, so an external simulation can replay them exactly.
pub struct TwoArmEnv {
    pub success: [f64; 2],
    pub cost: f64,
    pub draws: ChaCha8Rng,
    options: [Vec<VarSet>; 4],
}

impl TwoArmEnv {
    pub fn new(success: [f64; 2], cost: f64, seed: u64) -> Self {
        let goal = VarSet::from_bits(0b11);
        TwoArmEnv {
            success,
            cost,
            draws: ChaCha8Rng::seed_from_u64(seed),
            options: [
                vec![VarSet::from_bits(0b01), VarSet::from_bits(0b10)],
                vec![goal],
                vec![goal],
                vec![],
            ],
        }
    }
}

impl Environment for TwoArmEnv {
    fn options(&self, state: VarSet) -> &[VarSet] {
        &self.options[state.bits() as usize]
    }

    fn goal(&self) -> VarSet {
        VarSet::from_bits(0b11)
    }

    fn reset(&mut self) {}

    fn step<R: Rng>(&mut self, from: VarSet, to: VarSet, _rng: &mut R) -> StepOutcome {
        let feasible = if from.is_empty() {
            let arm = if to.bits() == 0b01 { 0 } else { 1 };
            self.draws.gen::<f64>() < self.success[arm]
        } else {
            true
        };
        StepOutcome { feasible, cost: self.cost }
    }
}
