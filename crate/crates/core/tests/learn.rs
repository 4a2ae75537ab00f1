use backjump::learn::model::{argmax, ModelConfig};
use backjump::learn::tape::softmax;
use backjump::learn::train::{cross_entropy, dataset_loss, example_loss};
use backjump::learn::{
    encode_state, grad_check, il_predict, pf_predict, select_kstar_pf, train, Aggregator, Dataset, Head, HeuristicParams, IlExample,
    PfExample, StateGraph, TrainConfig,
};
use backjump::problem::{ObjectKind, ObjectSpec, Pose2};
use backjump::Error;
use proptest::prelude::*;

fn objects(n: usize) -> Vec<ObjectSpec> {
    (0..n)
        .map(|id| ObjectSpec {
            id,
            w: 0.1 + 0.02 * id as f64,
            h: 0.15 - 0.01 * id as f64,
            kind: if id + 1 == n { ObjectKind::Target } else { ObjectKind::Movable },
            pose: Pose2::xy(1.0 + id as f64, 0.3),
        })
        .collect()
}

fn state(n: usize, shift: f64) -> Vec<Pose2> {
    (0..n).map(|i| Pose2::new(0.1 * i as f64 + shift, 0.2 + 0.05 * i as f64, 0.3 * i as f64 - shift)).collect()
}

fn il_data(n: usize, k_d: usize, k_star: usize) -> Dataset {
    let objs = objects(n);
    let graphs = (0..k_d).map(|k| StateGraph::new(&state(n, 0.1 * k as f64), &objs).unwrap()).collect();
    Dataset::Il(vec![IlExample { graphs, object: objs[k_d % n], k_star }])
}

fn pf_data(n: usize, feasible: bool) -> Dataset {
    let objs = objects(n);
    Dataset::Pf(vec![PfExample {
        graph: StateGraph::new(&state(n, 0.2), &objs).unwrap(),
        future: vec![objs[1], objs[2]],
        feasible,
    }])
}

fn config(head: Head, agg: Aggregator) -> ModelConfig {
    let mut c = ModelConfig::tiny(head, 6);
    c.aggregator = agg;
    c
}

#[test]
fn gradients_match_central_differences() {
    for agg in [Aggregator::Rnn, Aggregator::MeanPool] {
        let il = HeuristicParams::init(&config(Head::Il, agg), 3).unwrap();
        let err = grad_check(&il, &il_data(4, 3, 1), 0, 11).unwrap();
        assert!(err < 1e-4, "IL {agg:?}: relative error {err}");
        let pf = HeuristicParams::init(&config(Head::Pf, agg), 4).unwrap();
        let err = grad_check(&pf, &pf_data(4, true), 0, 12).unwrap();
        assert!(err < 1e-4, "PF {agg:?}: relative error {err}");
    }
}

#[test]
fn loss_matches_direct_cross_entropy() {
    let objs = objects(3);
    let params = HeuristicParams::init(&config(Head::Il, Aggregator::Rnn), 9).unwrap();
    let traj: Vec<_> = (0..3).map(|k| state(3, 0.1 * k as f64)).collect();
    let p = il_predict(&traj, &objs, &objs[0], &params).unwrap();
    let data = il_data(3, 3, 2);
    let direct = -p[2].ln();
    assert!((example_loss(&params, &data, 0) - direct).abs() < 1e-10);
    let z = [0.3, -1.2, 2.0];
    let q = softmax(&z);
    assert!((cross_entropy(&z, 1) + q[1].ln()).abs() < 1e-12);
}

#[test]
fn single_example_is_memorized() {
    let data = il_data(4, 4, 2);
    let cfg = TrainConfig { learning_rate: 1e-2, batch_size: 1, epochs: 200, seed: 5, ..TrainConfig::default() };
    let (params, report) = train(&data, &config(Head::Il, Aggregator::Rnn), &cfg).unwrap();
    assert!(dataset_loss(&params, &data) < 1e-3, "final loss {:?}", report.epoch_losses.last());

    let data = pf_data(4, false);
    let (params, _) = train(&data, &config(Head::Pf, Aggregator::Rnn), &cfg).unwrap();
    assert!(dataset_loss(&params, &data) < 1e-3);
}

#[test]
fn training_is_deterministic() {
    let data = il_data(3, 3, 0);
    let cfg = TrainConfig { learning_rate: 1e-3, batch_size: 2, epochs: 5, seed: 1, ..TrainConfig::default() };
    let a = train(&data, &config(Head::Il, Aggregator::MeanPool), &cfg).unwrap().0;
    let b = train(&data, &config(Head::Il, Aggregator::MeanPool), &cfg).unwrap().0;
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn empty_dataset_and_wrong_head_are_rejected() {
    let cfg = TrainConfig::default();
    let err = train(&Dataset::Il(vec![]), &config(Head::Il, Aggregator::Rnn), &cfg).unwrap_err();
    assert!(matches!(err, Error::EmptyDataset(_)));
    let err = train(&pf_data(3, true), &config(Head::Il, Aggregator::Rnn), &cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn parameters_round_trip_bit_exact() {
    let params = HeuristicParams::init(&ModelConfig::desk(Head::Pf), 21).unwrap();
    let json = params.to_json().unwrap();
    let back = HeuristicParams::from_json(&json).unwrap();
    assert_eq!(back.tensors, params.tensors);
    let objs = objects(5);
    let s = state(5, 0.0);
    let a = pf_predict(&s, &objs, &objs[2..], &params).unwrap();
    let b = pf_predict(&s, &objs, &objs[2..], &back).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn mismatched_configuration_is_rejected() {
    let params = HeuristicParams::init(&ModelConfig::desk(Head::Il), 2).unwrap();
    let json = params.to_json().unwrap();
    let err = HeuristicParams::from_json_expecting(&json, &ModelConfig::paper(Head::Il)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let tampered = json.replacen("\"width\":32", "\"width\":16", 1);
    assert!(matches!(HeuristicParams::from_json(&tampered), Err(Error::Config(_))));
}

#[test]
fn predictions_check_their_head() {
    let il = HeuristicParams::init(&ModelConfig::desk(Head::Il), 2).unwrap();
    let objs = objects(3);
    assert!(pf_predict(&state(3, 0.0), &objs, &objs[1..], &il).is_err());
    assert!(il_predict(&[], &objs, &objs[0], &il).is_err());
}

#[test]
fn threshold_selection_examples() {
    assert_eq!(select_kstar_pf(&[0.9, 0.8, 0.2, 0.1]).unwrap(), 2);
    assert_eq!(select_kstar_pf(&[0.1, 0.9]).unwrap(), 0);
    // All equal: nothing falls below the midpoint, so resume one level up.
    assert_eq!(select_kstar_pf(&[0.5, 0.5, 0.5]).unwrap(), 2);
    assert!(select_kstar_pf(&[]).is_err());
    assert_eq!(select_kstar_pf(&[0.9, 0.2, 0.8]).unwrap(), 1);
    assert_eq!(select_kstar_pf(&[0.9, 0.7, 0.1]).unwrap(), 2);
}

#[test]
fn state_encoding_ignores_object_order() {
    let n = 5;
    let objs = objects(n);
    let poses = state(n, 0.3);
    let perm = [3, 0, 4, 2, 1];
    let p_objs: Vec<_> = perm.iter().map(|&i| objs[i]).collect();
    let p_poses: Vec<_> = perm.iter().map(|&i| poses[i]).collect();
    for agg in [Aggregator::Rnn, Aggregator::MeanPool] {
        let params = HeuristicParams::init(&config(Head::Pf, agg), 5).unwrap();
        let a = encode_state(&StateGraph::new(&poses, &objs).unwrap(), &params).unwrap();
        let b = encode_state(&StateGraph::new(&p_poses, &p_objs).unwrap(), &params).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9), "{a:?} vs {b:?}");
        let f = pf_predict(&poses, &objs, &objs[1..3], &params).unwrap();
        let g = pf_predict(&p_poses, &p_objs, &objs[1..3], &params).unwrap();
        assert!((f - g).abs() < 1e-9);
    }
}

proptest! {
    #[test]
    fn il_output_is_a_distribution(k_d in 1usize..6, n in 2usize..6, seed in 0u64..1000) {
        let params = HeuristicParams::init(&config(Head::Il, Aggregator::Rnn), seed).unwrap();
        let objs = objects(n);
        let traj: Vec<_> = (0..k_d).map(|k| state(n, 0.07 * k as f64)).collect();
        let p = il_predict(&traj, &objs, &objs[0], &params).unwrap();
        prop_assert_eq!(p.len(), k_d);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!(argmax(&p) < k_d);
    }

    #[test]
    fn threshold_selection_is_in_range(p in prop::collection::vec(0.0f64..1.0, 1..12)) {
        let k = select_kstar_pf(&p).unwrap();
        prop_assert!(k < p.len());
        let eps = (p.iter().copied().fold(0.0, f64::max) + p.iter().copied().fold(1.0, f64::min)) / 2.0;
        if k + 1 < p.len() || p[k] < eps {
            prop_assert!(p[k] < eps);
            prop_assert!(p[..k].iter().all(|&v| v >= eps));
        }
    }
}
