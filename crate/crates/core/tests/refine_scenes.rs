use bimodal_mvs::bimodal::collapse;
use bimodal_mvs::eval::{depth_metrics, DEFAULT_BOUNDARY_LAPLACIAN, DEFAULT_ERROR_THRESHOLD};
use bimodal_mvs::grid::{dilate, mask_iou, DepthMap};
use bimodal_mvs::patchmatch::{run, PatchMatchConfig};
use bimodal_mvs::refine::{init_parameters, refine_self_supervised, refine_supervised, upsample_depth, RefineConfig, RefineMode, RefineResult};
use bimodal_mvs::synth::{render_scene, SceneSpec, SyntheticScene, PLANE_SCENE, STEP_SCENE, TWO_PLANE_SCENE};

fn scene(text: &str) -> SyntheticScene {
    render_scene(&SceneSpec::parse(text).unwrap()).unwrap()
}

fn pms_upsampled(s: &SyntheticScene) -> DepthMap {
    let coarse = run(&s.views[0], &s.views[1..], &PatchMatchConfig::default()).unwrap();
    upsample_depth(&coarse, &s.views[0].image).unwrap()
}

fn mae(d: &DepthMap, s: &SyntheticScene) -> f64 {
    depth_metrics(d, &s.gt_depths[0], DEFAULT_ERROR_THRESHOLD, DEFAULT_BOUNDARY_LAPLACIAN).unwrap().mae
}

fn check_contract(res: &RefineResult) {
    let totals = res.totals();
    assert!(totals.iter().all(|t| t.is_finite()));
    for w in totals.windows(51) {
        assert!(w[50] <= w[0], "trace rose across a 50-step window: {} -> {}", w[0], w[50]);
    }
    assert!(res.edge.grid().iter().all(|e| (0.0..=1.0).contains(e)));
    assert_eq!(res.depth, collapse(&res.bimodal));
}

#[test]
fn supervised_reduces_total_on_every_fixture() {
    let config = RefineConfig { steps: 120, ..Default::default() };
    for text in [TWO_PLANE_SCENE, STEP_SCENE, PLANE_SCENE] {
        let s = scene(text);
        let init = init_parameters(&pms_upsampled(&s), &config);
        let res = refine_supervised(&init, &s.gt_depths[0], &config).unwrap();
        check_contract(&res);
        let t = res.totals();
        assert!(t[t.len() - 1] < t[0], "{} !< {}", t[t.len() - 1], t[0]);
    }
}

#[test]
fn self_supervised_plane_is_no_worse_than_patchmatch() {
    let s = scene(PLANE_SCENE);
    let start = pms_upsampled(&s);
    let config = RefineConfig { mode: RefineMode::SelfSupervised, ..Default::default() };
    let res = refine_self_supervised(&init_parameters(&start, &config), &s.views[0], &s.views[1..], &config).unwrap();
    check_contract(&res);
    let (before, after) = (mae(&start, &s), mae(&res.depth, &s));
    assert!(after <= before, "refined MAE {after} > PatchMatch MAE {before}");
}

/// Does not hold with a mean-over-sources NCC data term: PatchMatch fattens
/// the foreground next to occlusions, and that placement is a photometric
/// local minimum, so the edge target drawn from the collapsed depth stays
/// offset from the true outline.
#[test]
#[ignore = "not attained: self-supervised edge IoU on the step scene stays near 0.3"]
fn self_supervised_step_scene_edge_recovery() {
    let s = scene(STEP_SCENE);
    let config = RefineConfig { mode: RefineMode::SelfSupervised, ..Default::default() };
    let res = refine_self_supervised(&init_parameters(&pms_upsampled(&s), &config), &s.views[0], &s.views[1..], &config).unwrap();
    let iou = mask_iou(&dilate(&res.edge.threshold(0.5), 2), &dilate(&s.gt_boundaries[0], 2));
    assert!(iou > 0.6, "IoU {iou}");
}
