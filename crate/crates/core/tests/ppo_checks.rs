//! Learner correctness: gradients, advantage recursion, densities,
//! checkpoints and the toy learning curve.

mod support;

use support::learner;

#[test]
fn gradient_matches_central_differences() {
    learner::gradient_matches_central_differences();
}

#[test]
fn gae_matches_hand_unrolled_recursion() {
    learner::gae_matches_hand_unrolled_recursion();
}

#[test]
fn log_prob_matches_change_of_variables() {
    learner::log_prob_matches_change_of_variables();
}

#[test]
fn checkpoint_round_trip() {
    learner::checkpoint_round_trip();
}

#[test]
fn toy_learning_curve_is_monotone() {
    learner::toy_learning_curve_is_monotone();
}

#[test]
fn training_is_deterministic() {
    learner::training_is_deterministic();
}
