mod common;

use common::gradcheck::{ckn_gradcheck, embedding_gradcheck, random_ckn_case};
use structckn::ckn::InvSqrtMode;

const TOL: f64 = 1e-4;

#[test]
fn ckn_backward_full_mode_matches_finite_differences() {
    for seed in 0..20 {
        let err = ckn_gradcheck(&random_ckn_case(seed), InvSqrtMode::Full);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn ckn_backward_frozen_mode_matches_finite_differences() {
    for seed in 0..20 {
        let err = ckn_gradcheck(&random_ckn_case(100 + seed), InvSqrtMode::Frozen);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}

#[test]
fn embedding_backward_matches_finite_differences() {
    for seed in 0..20 {
        let err = embedding_gradcheck(seed);
        assert!(err < TOL, "seed {seed}: relative error {err}");
    }
}
