use std::collections::BTreeSet;

use num_rational::Ratio;
use proptest::prelude::*;

use ertl_core::dataset_io::{block, undersample_balanced, BlockConfig, ClassRatio, DatasetHandle, Labeled, Record};
use ertl_core::embedding::{collect_contexts, estimate_frequencies, infer_oov, EmbeddingStore, FrequencyTable};
use ertl_core::encoder::{encode_simple, encode_sif, similarity_vector, sif_weight, TupleDoc, TupleVector};
use ertl_core::learners::{fit, LearnerKind, LearnerSpec, Params};
use ertl_core::scalar::dot;
use ertl_core::seed;
use ertl_core::source_select::{estimate_da, select_source};
use ertl_core::synth::{generate_synthetic, ShiftSpec, SyntheticData};
use ertl_core::transfer::{
    extract_block, fit_domain_separator, instance_weight, phi_source, phi_target, phi_unlabeled, train, Scenario,
    ScenarioConfig, SourceData, TargetData,
};

fn vec_in(d: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, d)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn words() -> Vec<String> {
    ["alpha", "beta", "gamma", "delta", "eps", "zeta"].map(String::from).to_vec()
}

fn store(dim: usize, seed_: u64) -> EmbeddingStore<f64> {
    use rand::Rng as _;
    let mut rng = seed::rng(seed_);
    let mut s = EmbeddingStore::new(dim, "mem").unwrap();
    for w in words() {
        s.insert(&w, (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap();
    }
    s
}

fn stream() -> impl Strategy<Value = Vec<String>> {
    let mut vocab = words();
    vocab.push("unseen".into());
    proptest::collection::vec(proptest::sample::select(vocab), 1..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_identities(d in 1usize..8, n in 1usize..4, seed_ in any::<u64>()) {
        use rand::Rng as _;
        let mut rng = seed::rng(seed_);
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let xy = dot(&x, &y);
        for i in 1..=n {
            let si = phi_source(&x, i, n).unwrap();
            prop_assert!(close(dot(&si, &phi_source(&y, i, n).unwrap()), 2.0 * xy, 1e-12));
            prop_assert!(close(dot(&si, &phi_target(&y, n)), xy, 1e-12));
            for j in (1..=n).filter(|&j| j != i) {
                prop_assert!(close(dot(&si, &phi_source(&y, j, n).unwrap()), xy, 1e-12));
            }
        }
        prop_assert!(close(dot(&phi_target(&x, n), &phi_target(&y, n)), 2.0 * xy, 1e-12));
        prop_assert!(close(dot(&phi_unlabeled(&x, n), &phi_unlabeled(&y, n)), 2.0 * xy, 1e-12));
    }

    #[test]
    fn transforms_are_linear_and_recoverable(x in vec_in(5), y in vec_in(5), a in -3.0f64..3.0, n in 1usize..4) {
        let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        for i in 1..=n {
            let lhs = phi_source(&combo, i, n).unwrap();
            let px = phi_source(&x, i, n).unwrap();
            let py = phi_source(&y, i, n).unwrap();
            for k in 0..lhs.len() {
                prop_assert!(close(lhs[k], a * px[k] + py[k], 1e-12));
            }
            prop_assert_eq!(extract_block(&px, 0, 5).unwrap(), &x[..]);
            prop_assert_eq!(extract_block(&px, i, 5).unwrap(), &x[..]);
        }
        let t = phi_target(&x, n);
        prop_assert_eq!(extract_block(&t, 0, 5).unwrap(), &x[..]);
        prop_assert_eq!(extract_block(&t, n + 1, 5).unwrap(), &x[..]);
    }

    #[test]
    fn instance_weights_strictly_decrease(p in 1e-6f64..0.999_998, dp in 1e-7f64..1e-3) {
        let q = (p + dp).min(1.0 - 1e-6);
        prop_assume!(q > p);
        prop_assert!(instance_weight(q) < instance_weight(p));
    }

    #[test]
    fn inferred_vectors_stay_in_the_context_box(streams in proptest::collection::vec(stream(), 1..4), k in 1usize..4) {
        let s = store(4, 9);
        let ctx = collect_contexts(&streams, "unseen", k).unwrap();
        let occurrences = streams.iter().flatten().filter(|t| *t == "unseen").count();
        prop_assert_eq!(ctx.windows.len(), occurrences);
        let known: Vec<&[f64]> = ctx.windows.iter().flatten().filter_map(|w| s.lookup(w)).collect();
        match infer_oov(&s, &ctx) {
            Ok(v) => {
                prop_assert_eq!(v.len(), 4);
                for (c, &vc) in v.iter().enumerate() {
                    let lo = known.iter().map(|u| u[c]).fold(f64::INFINITY, f64::min);
                    let hi = known.iter().map(|u| u[c]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(vc >= lo - 1e-12 && vc <= hi + 1e-12);
                }
            }
            Err(_) => prop_assert!(known.is_empty()),
        }
    }

    #[test]
    fn frequencies_sum_to_one(streams in proptest::collection::vec(stream(), 1..5)) {
        let f: FrequencyTable = estimate_frequencies(&streams).unwrap();
        let total: Ratio<u64> = f.iter().map(|(w, _)| f.ratio(w)).sum();
        prop_assert_eq!(total, Ratio::from_integer(1));
    }

    #[test]
    fn similarity_is_nonnegative_and_zero_only_on_equal(a in vec_in(6), b in vec_in(6)) {
        let tv = |v: &Vec<f64>, id: &str| TupleVector { tuple_id: id.into(), vec: v.clone() };
        let x = similarity_vector(&tv(&a, "a"), &tv(&b, "b")).unwrap().x;
        prop_assert!(x.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(x.iter().all(|&v| v == 0.0), a == b);
    }

    #[test]
    fn sif_with_uniform_frequencies_is_scaled_mean(tokens in proptest::collection::vec(proptest::sample::select(words()), 1..12)) {
        let s = store(3, 4);
        let corpus: Vec<Vec<String>> = vec![words()];
        let freqs = estimate_frequencies(&corpus).unwrap();
        let doc = TupleDoc { tuple_id: "t".into(), tokens, origin: String::new() };
        let a = 1e-3;
        let w: f64 = sif_weight(a, 1.0 / 6.0);
        let sif = encode_sif(&doc, &s, &freqs, a).unwrap();
        let mean = encode_simple(&doc, &s).unwrap();
        for (p, q) in sif.vec.iter().zip(&mean.vec) {
            prop_assert!(close(*p, w * q, 1e-12));
        }
    }

    #[test]
    fn blocking_is_monotone_in_threshold(seed_ in 0u64..1000) {
        use rand::Rng as _;
        let mut rng = seed::rng(seed_);
        let vocab = ["red", "blue", "green", "cyan", "pink", "gold", "gray", "teal"];
        let mut rel = |name: &str| {
            let mut ds = DatasetHandle::new(name, vec!["text".into()], "id").unwrap();
            for i in 0..12 {
                let text: Vec<&str> = (0..4).map(|_| vocab[rng.random_range(0..vocab.len())]).collect();
                ds.insert(format!("{name}{i}"), Record::from([("text".to_string(), Some(text.join(" ")))])).unwrap();
            }
            ds
        };
        let (l, r) = (rel("l"), rel("r"));
        let mut prev: Option<BTreeSet<(String, String)>> = None;
        for m in (1..=4).rev() {
            let cfg = BlockConfig { min_shared_tokens: m, stop_tokens: 0 };
            let cur: BTreeSet<_> = block(&l, &r, &cfg).unwrap().pairs.into_iter().collect();
            if let Some(p) = &prev {
                prop_assert!(p.is_subset(&cur));
            }
            prev = Some(cur);
        }
    }

    #[test]
    fn undersampling_hits_the_ratio(pos in 50usize..200, neg in 150usize..600, budget in 4usize..200, seed_ in any::<u64>()) {
        #[derive(Clone)]
        struct Item(u8);
        impl Labeled for Item {
            fn label(&self) -> Option<u8> { Some(self.0) }
        }
        let mut items = vec![Item(1); pos];
        items.extend(vec![Item(0); neg]);
        let ratio = ClassRatio::default();
        let out = undersample_balanced(&items, budget, ratio, &mut seed::rng(seed_)).unwrap();
        let p = out.iter().filter(|i| i.0 == 1).count();
        prop_assert_eq!(out.len(), budget);
        prop_assert_eq!(p, ratio.positives_for(budget));
    }

    #[test]
    fn probabilities_lie_in_unit_interval(kind in proptest::sample::select(vec![
        LearnerKind::LogisticRegression, LearnerKind::DecisionTree, LearnerKind::RandomForest, LearnerKind::LinearSvm,
    ]), seed_ in 0u64..50, probe in vec_in(3)) {
        let (x, y, w) = toy(seed_, 40);
        let mut spec = LearnerSpec::new(kind).with_seed(seed_);
        spec.n_trees = 4;
        let m = fit(&spec, &x, &y, &w).unwrap();
        let p = m.predict_proba(&probe).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn raising_the_threshold_never_adds_positives(kind in proptest::sample::select(vec![
        LearnerKind::LogisticRegression, LearnerKind::RandomForest,
    ]), seed_ in 0u64..50, probes in proptest::collection::vec(vec_in(3), 1..20), t in 0.01f64..0.5, dt in 0.0f64..0.49) {
        let (x, y, w) = toy(seed_, 40);
        let mut spec = LearnerSpec::new(kind).with_seed(seed_);
        spec.n_trees = 4;
        let m = fit(&spec, &x, &y, &w).unwrap();
        let count = |th: f64| probes.iter().map(|p| u32::from(m.predict(p, th).unwrap())).sum::<u32>();
        for p in &probes {
            prop_assert!(m.predict(p, t + dt).unwrap() <= m.predict(p, t).unwrap());
        }
        prop_assert!(count(t + dt) <= count(t));
    }
}

fn toy(seed_: u64, n: usize) -> (Vec<Vec<f64>>, Vec<u8>, Vec<f64>) {
    use rand::Rng as _;
    let mut rng = seed::rng(seed_);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = u8::from(i % 3 == 0);
        let shift = if label == 1 { 0.2 } else { 0.6 };
        x.push((0..3).map(|_| shift + 0.3 * (rng.random::<f64>() - 0.5)).collect());
        y.push(label);
    }
    let w = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    (x, y, w)
}

fn linear_params(p: &Params<f64>) -> Vec<f64> {
    match p {
        Params::Linear { weights, intercept } | Params::Svm { weights, intercept, .. } => {
            let mut v = weights.clone();
            v.push(*intercept);
            v
        }
        _ => unreachable!("linear learners only"),
    }
}

#[test]
fn weight_scaling_leaves_linear_optima_unchanged() {
    for kind in [LearnerKind::LogisticRegression, LearnerKind::LinearSvm] {
        for s in 0..5 {
            let (x, y, w) = toy(s, 60);
            let spec = LearnerSpec::new(kind).with_seed(s);
            let base = linear_params(&fit(&spec, &x, &y, &w).unwrap().params);
            for c in [1e-3, 0.5, 7.0, 1e4] {
                let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
                let other = linear_params(&fit(&spec, &x, &y, &scaled).unwrap().params);
                for (a, b) in base.iter().zip(&other) {
                    assert!((a - b).abs() <= 1e-8, "{kind} seed {s} scale {c}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn duplicating_a_row_equals_doubling_its_weight() {
    let (x, y, w) = toy(3, 30);
    let spec = LearnerSpec::logistic();
    let mut w2 = w.clone();
    w2[4] *= 2.0;
    let doubled = linear_params(&fit(&spec, &x, &y, &w2).unwrap().params);
    let mut xd = x.clone();
    let mut yd = y.clone();
    let mut wd = w.clone();
    xd.push(x[4].clone());
    yd.push(y[4]);
    wd.push(w[4]);
    let duplicated = linear_params(&fit(&spec, &xd, &yd, &wd).unwrap().params);
    for (a, b) in doubled.iter().zip(&duplicated) {
        assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
    }
}

fn xs(pairs: &[ertl_core::PairF64]) -> Vec<Vec<f64>> {
    pairs.iter().map(|p| p.x.clone()).collect()
}

#[test]
fn separator_weights_ignore_source_order() {
    let data: SyntheticData<f64> = generate_synthetic(&ShiftSpec::preset("covariate", 5).unwrap()).unwrap();
    let source = xs(&data.source[..300]);
    let target = xs(&data.target[..300]);
    let mut order: Vec<usize> = (0..source.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng(1));
    let shuffled: Vec<Vec<f64>> = order.iter().map(|&i| source[i].clone()).collect();
    let a = fit_domain_separator(&source, &target, 11).unwrap();
    let b = fit_domain_separator(&shuffled, &target, 11).unwrap();
    for (k, &i) in order.iter().enumerate() {
        let wa = instance_weight(a.predict_proba(&source[i]).unwrap());
        let wb = instance_weight(b.predict_proba(&shuffled[k]).unwrap());
        assert!(close(wa, wb, 1e-8), "pair {i}: {wa} vs {wb}");
    }
}

#[test]
fn trainers_are_deterministic_per_seed() {
    let data: SyntheticData<f64> = generate_synthetic(&ShiftSpec::preset("conditional", 2).unwrap()).unwrap();
    let sources = [SourceData::new("s", data.source[..400].to_vec())];
    let unlabeled: Vec<_> = data.target[100..400]
        .iter()
        .cloned()
        .map(|mut p| {
            p.label = None;
            p
        })
        .collect();
    for scenario in Scenario::ALL {
        let target = TargetData {
            labeled: if scenario.uses_target_labels() { data.target[..100].to_vec() } else { Vec::new() },
            unlabeled: unlabeled.clone(),
        };
        let cfg = ScenarioConfig::new(scenario, 8);
        let a = train(&cfg, &sources, &target).unwrap();
        let b = train(&cfg, &sources, &target).unwrap();
        assert_eq!(a.model.to_text().unwrap(), b.model.to_text().unwrap(), "{scenario}");
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn self_distance_concentrates_near_zero() {
    let das: Vec<f64> = (0..10)
        .map(|s| {
            let d: SyntheticData<f64> = generate_synthetic(&ShiftSpec::preset("none", 30 + s).unwrap()).unwrap();
            estimate_da(&xs(&d.source), &xs(&d.target), 10, s).unwrap().da
        })
        .collect();
    let mean = das.iter().sum::<f64>() / das.len() as f64;
    assert!(mean < 0.15, "mean d_A {mean}");
}

#[test]
fn ranking_is_deterministic() {
    let a: SyntheticData<f64> = generate_synthetic(&ShiftSpec::preset("none", 1).unwrap()).unwrap();
    let b: SyntheticData<f64> = generate_synthetic(&ShiftSpec::preset("prior", 1).unwrap()).unwrap();
    let cands = vec![("a".to_string(), xs(&a.source)), ("b".to_string(), xs(&b.source))];
    let r1 = select_source(&cands, &xs(&a.target), 4, 3).unwrap();
    let r2 = select_source(&cands, &xs(&a.target), 4, 3).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn embedding_text_round_trip() {
    let s = store(5, 12);
    let mut buf = Vec::new();
    s.write_to(&mut buf).unwrap();
    let back: EmbeddingStore<f64> = EmbeddingStore::parse(&buf[..], None, "mem").unwrap();
    assert_eq!(back.dim(), s.dim());
    assert_eq!(back.words(), s.words());
    for w in s.words() {
        assert_eq!(back.lookup(w), s.lookup(w));
    }
}
