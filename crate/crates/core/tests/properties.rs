mod common;

macro_rules! suite {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = common::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

suite!(
    diffusion_extremum,
    detail_offset_invariance,
    vesselness_range,
    dark_ridge_rejected,
    vesselness_rotation,
    multiscale_is_pointwise_max,
    ncc_properties,
    morphology_properties,
    pca_properties,
    retained_variance_rule,
    warp_exact_on_affine,
    mirror_involution,
);

#[test]
fn blur_matches_dense_convolution() {
    assert!(common::blur_oracle_error() < 1e-6);
}

#[test]
fn diffusion_step_matches_hand_evaluation() {
    assert!(common::diffusion_step_error() < 1e-10);
}

#[test]
fn ridge_vesselness_matches_closed_form() {
    let e = common::ridge_oracle_error();
    assert!(e < 1e-3, "{e}");
}
