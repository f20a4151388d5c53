//! Property tests for the invariants each stage promises.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use nalgebra::Point3;
use proptest::prelude::*;

use stmr::eval::navigation_error;
use stmr::geometry::{
    backproject_pixel, camera_to_world, project_to_pixel, CameraIntrinsics, CameraMount, CameraRig,
    SemanticPoint, SemanticPointCloud, UavPose,
};
use stmr::legend::LabelId;
use stmr::mapping::{project_top_down, VoxelGrid, VoxelKey};
use stmr::perception::{filter_masks, LandmarkSet, PerceivedMask, TfIdfCorpus};
use stmr::plan::{update_plan_state, PlanState, Status, SubGoal};
use stmr::planner::{parse_action, parse_response, serialize_action};
use stmr::stmr::{parse_matrix, pool_to_matrix, serialize_matrix, LocalWindow, StmrMatrix};
use stmr::synth::riverside_scene;
use stmr::world::{apply_action, Action, ActionLimits, ActionVerb, Scene};

use common::{brute_force_projection, grid_from, pool_oracle, riverside_legend};

fn scene() -> &'static Scene {
    static S: OnceLock<Scene> = OnceLock::new();
    S.get_or_init(riverside_scene)
}

fn pose_strategy() -> impl Strategy<Value = UavPose> {
    (-500.0..500.0, -500.0..500.0, 0.0..200.0, -0.5..0.5, -0.5..0.5, -6.3..6.3)
        .prop_map(|(x, y, z, p, r, yaw)| UavPose::new(x, y, z, p, r, yaw))
}

fn voxels_strategy(extent: i64, max: usize) -> impl Strategy<Value = BTreeMap<VoxelKey, LabelId>> {
    prop::collection::btree_map((0..extent, 0..extent, 0..extent), (1u32..=7).prop_map(LabelId), 0..max)
}

fn window_strategy() -> impl Strategy<Value = (LocalWindow, usize)> {
    (1usize..=6, 1usize..=4).prop_flat_map(|(size, n)| {
        let side = size * n;
        (
            prop::collection::vec(0u32..=4, side * side),
            prop::collection::vec(prop::bool::weighted(0.15), side * side),
        )
            .prop_map(move |(labels, trajectory)| {
                (
                    LocalWindow {
                        side,
                        cell_metric: 5.0,
                        labels: labels.into_iter().map(LabelId).collect(),
                        trajectory,
                        north_west: (0.0, 0.0),
                    },
                    size,
                )
            })
    })
}

fn verb_strategy() -> impl Strategy<Value = ActionVerb> {
    prop::sample::select(ActionVerb::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn pixel_round_trip(
        w in 8usize..200, h in 8usize..200, hfov in 0.3..2.5f64, fu in 0.0..1.0f64, fv in 0.0..1.0f64,
        depth in 0.1..500.0f64, tilt in 0.0..1.5f64, pose in pose_strategy(),
    ) {
        let k = CameraIntrinsics::from_fov(w, h, hfov).unwrap();
        let rig = CameraRig::new(k, CameraMount::pitched_down(tilt));
        let (u, v) = (fu * (w as f64 - 1.0), fv * (h as f64 - 1.0));
        let cam = backproject_pixel(u, v, depth, &rig.intrinsics).unwrap();
        let world = camera_to_world(&cam, &pose, &rig.mount).unwrap();
        let back = rig.camera_rotation(&pose).inverse() * (world - pose.position());
        let (pu, pv, z) = project_to_pixel(&back.into(), &rig.intrinsics).unwrap();
        prop_assert!((pu - u).abs() <= 1e-9 * u.abs().max(1.0));
        prop_assert!((pv - v).abs() <= 1e-9 * v.abs().max(1.0));
        prop_assert!((z - depth).abs() <= 1e-9 * depth);
    }

    #[test]
    fn insert_order_does_not_matter(
        pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, 0.0..30.0f64, 1u32..=7), 0..200),
        seed in any::<u64>(),
    ) {
        let legend = riverside_legend();
        let cloud = |v: &[(f64, f64, f64, u32)]| SemanticPointCloud {
            points: v.iter().map(|&(x, y, z, l)| SemanticPoint { position: Point3::new(x, y, z), label: LabelId(l) }).collect(),
        };
        let mut shuffled = pts.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let mut a = VoxelGrid::new(5.0);
        a.insert_points(&cloud(&pts), &legend).unwrap();
        let mut b = VoxelGrid::new(5.0);
        let half = shuffled.len() / 2;
        b.insert_points(&cloud(&shuffled[..half]), &legend).unwrap();
        b.insert_points(&cloud(&shuffled[half..]), &legend).unwrap();
        prop_assert_eq!(a.categories(), b.categories());
    }

    #[test]
    fn projection_matches_column_scan(voxels in voxels_strategy(12, 300), goal in prop::collection::btree_set((1u32..=7).prop_map(LabelId), 0..3)) {
        let map = project_top_down(&grid_from(&voxels, 5.0), &goal);
        let got: BTreeMap<_, _> = map.labels().collect();
        prop_assert_eq!(got, brute_force_projection(&voxels, &goal));
    }

    #[test]
    fn pooling_matches_histogram((window, size) in window_strategy(), goal in prop::collection::btree_set((1u32..=4).prop_map(LabelId), 0..2)) {
        let m = pool_to_matrix(&window, size, &goal, &riverside_legend()).unwrap();
        prop_assert_eq!(m.cells, pool_oracle(&window, size, &goal));
    }

    #[test]
    fn tfidf_symmetric_and_bounded(a in "[a-c ]{1,12}", b in "[a-c ]{1,12}", extra in prop::collection::vec("[a-d ]{1,8}", 0..5)) {
        prop_assume!(a.trim() != "" && b.trim() != "");
        let corpus = TfIdfCorpus::new([a.as_str(), b.as_str()].into_iter().chain(extra.iter().map(String::as_str)));
        let ab = corpus.similarity(&a, &b).unwrap();
        let ba = corpus.similarity(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(corpus.similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn filter_monotone_in_threshold(
        captions in prop::collection::vec("(red|tall|old|road|building|river|bridge)( (red|tall|road|building))?", 1..8),
        t1 in 0.0..1.0f64, t2 in 0.0..1.0f64,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let lms = LandmarkSet::new(["road", "tall building", "river"]);
        let masks: Vec<PerceivedMask> = captions.iter().map(|c| PerceivedMask {
            pixels: vec![], caption: c.clone(), matched_landmark: None, label: None,
        }).collect();
        let low: Vec<String> = filter_masks(masks.clone(), &lms, lo).into_iter().map(|m| m.caption).collect();
        let high: Vec<String> = filter_masks(masks, &lms, hi).into_iter().map(|m| m.caption).collect();
        prop_assert!(high.iter().all(|c| low.contains(c)));
    }

    #[test]
    fn action_round_trip(verb in verb_strategy(), d in 0.0..=15.0f64, m in 0.0..=10.0f64) {
        let a = if verb == ActionVerb::Stop { Action::stop() } else { Action::new(verb, d, m) };
        let text = serialize_action(&a);
        let r = parse_response(&text, &ActionLimits::default()).unwrap();
        prop_assert_eq!(r.action, a);
        prop_assert!(r.notes.is_empty());
    }

    #[test]
    fn action_parse_total(s in "\\PC{0,40}") {
        let limits = ActionLimits::default();
        if let Ok(p) = parse_action(&s, &limits) {
            prop_assert!(p.action.is_valid(&limits));
        }
    }

    #[test]
    fn flight_never_ends_inside_obstacle(
        x in 5.0..635.0f64, y in 5.0..635.0f64, z in 35.0..120.0f64, yaw in 0.0..std::f64::consts::TAU,
        verb in verb_strategy(), d in 0.0..=15.0f64, m in 0.0..=10.0f64,
    ) {
        let s = scene();
        let start = UavPose::at(x, y, z, yaw);
        prop_assume!(!s.is_obstacle(&start.position()));
        let out = apply_action(s, &start, &Action::new(verb, d, m));
        prop_assert!(!s.is_obstacle(&out.pose.position()));
        prop_assert!(out.travelled <= m + 1e-9);
    }

    #[test]
    fn plan_statuses_stay_ordered(
        goals in prop::collection::vec(prop::sample::subsequence(vec!["road", "river", "building", "water"], 0..=2), 1..=5),
        seen in prop::collection::vec(prop::collection::vec(0i32..=7, 9), 1..12),
    ) {
        let legend = riverside_legend();
        let subgoals = goals.iter().enumerate().map(|(i, lms)| SubGoal {
            index: i, text: format!("goal {i}"), landmarks: LandmarkSet::new(lms.iter().copied()), status: Status::Todo,
        }).collect();
        let mut plan = PlanState::new(subgoals);
        let texts: Vec<String> = plan.subgoals().iter().map(|g| g.text.clone()).collect();
        for s in seen {
            let m = matrix_with_patch(&s);
            let next = update_plan_state(&plan, &m, &legend, 0.8);
            prop_assert!(next.statuses_well_formed());
            prop_assert!(next.completed_count() >= plan.completed_count());
            prop_assert_eq!(&update_plan_state(&next, &m, &legend, 0.8), &next);
            let now: Vec<String> = next.subgoals().iter().map(|g| g.text.clone()).collect();
            prop_assert_eq!(&now, &texts);
            plan = next;
        }
    }

    #[test]
    fn ne_is_a_metric(a in (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), b in (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64), c in (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64)) {
        let (a, b, c) = (Point3::new(a.0, a.1, a.2), Point3::new(b.0, b.1, b.2), Point3::new(c.0, c.1, c.2));
        prop_assert_eq!(navigation_error(&a, &b), navigation_error(&b, &a));
        prop_assert_eq!(navigation_error(&a, &a), 0.0);
        prop_assert!(navigation_error(&a, &c) <= navigation_error(&a, &b) + navigation_error(&b, &c) + 1e-9);
    }

    #[test]
    fn rotation_in_place_changes_only_token((window, _) in window_strategy(), x in -100.0..100.0f64, y in -100.0..100.0f64, y1 in -7.0..7.0f64, y2 in -7.0..7.0f64) {
        prop_assume!(window.side % 2 == 0);
        let m = pool_to_matrix(&window, 2, &BTreeSet::new(), &riverside_legend());
        prop_assume!(m.is_ok());
        let m = m.unwrap();
        let a = serialize_matrix(&m, &UavPose::at(x, y, 40.0, y1));
        let b = serialize_matrix(&m, &UavPose::at(x, y, 40.0, y2));
        let c = m.center();
        let cells = |t: &str| -> Vec<Vec<String>> { t.lines().skip(1).map(|l| l.split_whitespace().map(String::from).collect()).collect() };
        let (ca, mut cb) = (cells(&a), cells(&b));
        cb[c.0][c.1] = ca[c.0][c.1].clone();
        prop_assert_eq!(ca, cb);
        prop_assert_eq!(a.lines().next(), b.lines().next());
        prop_assert_eq!(parse_matrix(&a).unwrap().to_text(), a);
    }
}

/// 20x20 matrix whose 3x3 center patch is `patch`, row-major.
fn matrix_with_patch(patch: &[i32]) -> StmrMatrix {
    let n = 20;
    let mut m = StmrMatrix {
        size: n,
        cells: vec![0; n * n],
        legend: riverside_legend(),
        orientation: stmr::stmr::Orientation::from_pose(&UavPose::at(0.0, 0.0, 0.0, 0.0)),
        cell_metric: 5.0,
    };
    for (i, &v) in patch.iter().enumerate() {
        m.set(n / 2 - 1 + i / 3, n / 2 - 1 + i % 3, v);
    }
    m
}
