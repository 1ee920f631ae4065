use ppac_core::adversary::{
    attack_colluding_full_neighborhood, attack_least_squares, attack_sole_neighbor, build_indistinguishability_witness,
    view_discrepancy, AdversaryView, AttackError, LeastSquaresSystem,
};
use ppac_core::graph::{DirectedGraph, NodeId};
use ppac_core::rng::experiment_rng;
use ppac_core::sim::{reference_graph, run_experiment, AdversarySpec, ExperimentConfig, Mode};
use ppac_core::weights::WeightParams;
use rand::seq::SliceRandom;
use rand::Rng;

fn run(graph: DirectedGraph, x0: Vec<f64>, members: Vec<NodeId>, k: usize, seed: u64) -> ppac_core::sim::RunOutput {
    let eps = 0.5 / (graph.max_out_degree() + 1) as f64;
    let mut cfg = ExperimentConfig::new(graph, x0, WeightParams::new(k, eps, 10.0));
    cfg.seed = seed;
    cfg.max_rounds = k + 4;
    cfg.stop_tol = 0.0;
    cfg.adversary = Some(AdversarySpec { members, target: None, attack: None });
    run_experiment(&cfg).unwrap()
}

/// Random graph on `n - 1` nodes plus a target hanging off a single node.
fn pendant_graph(rng: &mut impl Rng, n: usize) -> (DirectedGraph, NodeId, NodeId) {
    let core = DirectedGraph::random_strongly_connected(n - 1, 0.4, rng).unwrap();
    let anchor = rng.gen_range(0..n - 1);
    let target = n - 1;
    let links = core.links().chain([(target, anchor), (anchor, target)]);
    (DirectedGraph::from_links(n, links).unwrap(), target, anchor)
}

#[test]
fn sole_neighbor_recovers_exactly() {
    let mut rng = experiment_rng(11);
    for trial in 0..100 {
        let n = rng.gen_range(2..8);
        let (graph, target, anchor) = if n == 2 {
            (DirectedGraph::from_links(2, [(0, 1), (1, 0)]).unwrap(), 0, 1)
        } else {
            pendant_graph(&mut rng, n)
        };
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let out = run(graph, x0.clone(), vec![anchor], rng.gen_range(0..6), trial);
        let got = attack_sole_neighbor(out.view.as_ref().unwrap(), target).unwrap();
        assert!((got - x0[target]).abs() <= 1e-6 * (1.0 + x0[target].abs()), "trial {trial}");
    }
}

#[test]
fn sole_neighbor_is_specific_to_the_pendant_node() {
    // 0 hangs off 1; node 2 also talks to the honest node 3
    let graph = DirectedGraph::from_links(4, [(0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)]).unwrap();
    let out = run(graph, vec![5.0, 9.0, -3.0, 7.0], vec![1], 1, 3);
    let view = out.view.unwrap();
    assert!((attack_sole_neighbor(&view, 0).unwrap() - 5.0).abs() < 1e-9);
    assert!(matches!(attack_sole_neighbor(&view, 2), Err(AttackError::TopologyConditionUnmet(_))));
    let directed = run(
        DirectedGraph::from_links(3, [(0, 1), (1, 2), (2, 0), (0, 2)]).unwrap(),
        vec![5.0, 9.0, -3.0],
        vec![1],
        1,
        3,
    );
    assert!(matches!(
        attack_sole_neighbor(directed.view.as_ref().unwrap(), 0),
        Err(AttackError::TopologyConditionUnmet(_))
    ));
}

#[test]
fn colluding_neighborhood_recovers_exactly() {
    let mut rng = experiment_rng(12);
    for trial in 0..100 {
        let n = rng.gen_range(3..9);
        let graph = DirectedGraph::random_strongly_connected(n, 0.35, &mut rng).unwrap();
        let target = rng.gen_range(0..n);
        let mut members: Vec<NodeId> = graph.neighborhood(target).into_iter().collect();
        for extra in 0..n {
            if extra != target && !members.contains(&extra) && rng.gen_bool(0.3) {
                members.push(extra);
            }
        }
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let out = run(graph, x0.clone(), members, rng.gen_range(0..6), 1000 + trial);
        let got = attack_colluding_full_neighborhood(out.view.as_ref().unwrap(), target).unwrap();
        assert!((got - x0[target]).abs() <= 1e-6 * (1.0 + x0[target].abs()), "trial {trial}");
    }
}

#[test]
fn least_squares_system_shape_and_rank() {
    for (m, k) in [(10, 1), (25, 3), (40, 9), (100, 1)] {
        let graph = reference_graph();
        let mut cfg = ExperimentConfig::new(graph, vec![40.0, 15.0, 20.0, 25.0, 30.0], WeightParams::new(k, 0.01, 10.0));
        cfg.max_rounds = m + 1;
        cfg.stop_tol = 0.0;
        cfg.adversary = Some(AdversarySpec { members: vec![1, 2, 3], target: Some(0), attack: None });
        let view = run_experiment(&cfg).unwrap().view.unwrap();
        let sys = LeastSquaresSystem::build(&view, 0, m).unwrap();
        assert_eq!(sys.equation_count(), 3 * m - 2 * k + 1);
        assert_eq!(sys.unknown_count(), 4 * m - 2 * k + 3);
        assert_eq!(sys.rank(), sys.equation_count());
        assert!(attack_least_squares(&view, 0, m).unwrap().is_finite());
        assert!(matches!(
            LeastSquaresSystem::build(&view, 0, m + 1),
            Err(AttackError::TraceIncomplete { .. })
        ));
    }
}

#[test]
fn witnesses_are_indistinguishable() {
    let mut rng = experiment_rng(13);
    let mut checked = 0;
    while checked < 40 {
        let n = rng.gen_range(3..8);
        let graph = DirectedGraph::random_strongly_connected(n, 0.4, &mut rng).unwrap();
        let target = rng.gen_range(0..n);
        let mut neighbors: Vec<NodeId> = graph.neighborhood(target).into_iter().collect();
        neighbors.shuffle(&mut rng);
        let helper = neighbors[0];
        let members: Vec<NodeId> =
            (0..n).filter(|&v| v != target && v != helper && rng.gen_bool(0.6)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let alt = rng.gen_range(-80.0..80.0);
        let out = run(graph.clone(), x0.clone(), members.clone(), rng.gen_range(0..4), checked as u64);
        let witness = match build_indistinguishability_witness(&out.trace, &members, target, alt, helper) {
            Ok(w) => w,
            Err(AttackError::DegenerateDenominator { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        assert!((witness.x0.iter().sum::<f64>() - x0.iter().sum::<f64>()).abs() < 1e-9);
        assert_eq!(witness.x0[target], alt);
        let replay = witness.replay(&graph, out.trace.params).unwrap();
        let gap = view_discrepancy(out.view.as_ref().unwrap(), &AdversaryView::collect(&replay, &members));
        assert!(gap <= 1e-9, "gap {gap}");
        assert!(replay.trajectory.last().unwrap().iter().all(|s| s.pi.is_finite()));
        checked += 1;
    }
}

#[test]
fn witness_requires_honest_neighbor() {
    let out = run(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], vec![1, 2, 3], 1, 0);
    assert!(matches!(
        build_indistinguishability_witness(&out.trace, &[1, 2, 3], 0, 12.0, 2),
        Err(AttackError::TopologyConditionUnmet(_))
    ));
    assert!(matches!(
        build_indistinguishability_witness(&out.trace, &[1, 2], 0, 12.0, 2),
        Err(AttackError::TopologyConditionUnmet(_))
    ));
}

#[test]
fn baseline_mode_leaks_where_randomized_mode_does_not() {
    let mut cfg = ExperimentConfig::new(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], WeightParams::default());
    cfg.adversary = Some(AdversarySpec { members: vec![1], target: None, attack: None });
    cfg.mode = Mode::Algorithm0;
    let view = run_experiment(&cfg).unwrap().view.unwrap();
    let leaked = ppac_core::adversary::attack_pushsum_baseline(&view).unwrap();
    assert!((leaked[&0] - 10.0).abs() < 1e-12 && (leaked[&2] - 20.0).abs() < 1e-12);
    cfg.mode = Mode::Algorithm1;
    let view = run_experiment(&cfg).unwrap().view.unwrap();
    let ratios = ppac_core::adversary::attack_pushsum_baseline(&view).unwrap();
    assert!(ratios[&0].is_infinite() || (ratios[&0] - 10.0).abs() > 1e-6);
}
