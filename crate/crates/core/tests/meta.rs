use mignn::encoders::{forward, Arch, EncoderSpec};
use mignn::gradcore::Tape;
use mignn::graphdata::{sample_episode, synth_collection, GraphCollection, NodeLabel};
use mignn::harness::{evaluate, fit, test_episodes, Method, MethodOptions, Splits};
use mignn::meta::{
    checkpoint, decide, episode_gradient, episode_value, film_factors, predict, support_loss,
    train, train_logged, Episode, GraphPrior, HyperParams, MetaConfig, MetaState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> (GraphCollection<f64>, MetaConfig) {
    let data = synth_collection::<f64>(10, (8, 12), 4, 3, 0.9, 7);
    let hp = HyperParams {
        alpha: 0.05,
        max_epochs: 4,
        patience: 3,
        film_hidden: 6,
        batch_size: 4,
        ..HyperParams::default()
    };
    (data, MetaConfig::new(EncoderSpec::new(Arch::Sgc, 4, 3), hp, false))
}

fn episode(data: &GraphCollection<f64>, i: usize, seed: u64) -> Episode<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let split = sample_episode(&data.graphs[i], 0.5, &mut rng).unwrap();
    Episode::from_split(&split, data.num_categories)
}

#[test]
fn first_and_second_order_agree_without_inner_steps() {
    let (data, mut cfg) = small();
    cfg.hp.inner_steps = 0;
    let state = MetaState::<f64>::init(&cfg, 3);
    let ep = episode(&data, 0, 1);
    let second = episode_gradient(&data.graphs[0], &ep, &state.theta, &state.prior, &cfg).unwrap();
    cfg.hp.second_order = false;
    let first = episode_gradient(&data.graphs[0], &ep, &state.theta, &state.prior, &cfg).unwrap();
    assert_eq!(first.theta, second.theta);
    assert_eq!(first.phi, second.phi);
    assert_eq!(first.objective, second.objective);
}

#[test]
fn second_order_terms_matter_with_inner_steps() {
    let (data, cfg) = small();
    let state = MetaState::<f64>::init(&cfg, 3);
    let ep = episode(&data, 0, 1);
    let second = episode_gradient(&data.graphs[0], &ep, &state.theta, &state.prior, &cfg).unwrap();
    let mut fo = cfg.clone();
    fo.hp.second_order = false;
    let first = episode_gradient(&data.graphs[0], &ep, &state.theta, &state.prior, &fo).unwrap();
    assert_eq!(first.objective, second.objective);
    assert_ne!(first.theta, second.theta);
}

#[test]
fn objective_grows_by_lambda_times_film_norm() {
    let (data, mut cfg) = small();
    let state = MetaState::<f64>::init(&cfg, 5);
    let ep = episode(&data, 2, 9);
    cfg.hp.lambda = 0.0;
    let (base, q0, norm) = episode_value(&data.graphs[2], &ep, &state.theta, &state.prior, &cfg).unwrap();
    assert_eq!(base, q0);
    assert!(norm > 0.0);
    for lambda in [0.5, 100.0] {
        cfg.hp.lambda = lambda;
        let (v, q, n) = episode_value(&data.graphs[2], &ep, &state.theta, &state.prior, &cfg).unwrap();
        assert_eq!((q, n), (q0, norm));
        assert!((v - base - lambda * norm).abs() <= 1e-12 * v.abs());
    }
}

#[test]
fn zero_epochs_return_the_initial_state() {
    let (data, mut cfg) = small();
    cfg.hp.max_epochs = 0;
    let (state, log) = train_logged(&data, &data, &cfg, 11).unwrap();
    assert!(log.is_empty());
    assert_eq!(state, MetaState::init(&cfg, 11));
    assert_eq!(state.epoch, 0);
}

#[test]
fn training_is_deterministic() {
    let (data, cfg) = small();
    let splits = Splits::partition(&data, 0).unwrap();
    let a = train(&splits.train, &splits.val, &cfg, 4).unwrap();
    let b = train(&splits.train, &splits.val, &cfg, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(checkpoint::to_bytes(&a), checkpoint::to_bytes(&b));
    let c = train(&splits.train, &splits.val, &cfg, 5).unwrap();
    assert_ne!(a.theta, c.theta);
}

#[test]
fn learns_a_fully_homophilous_collection() {
    let data = synth_collection::<f64>(30, (12, 18), 6, 3, 1.0, 2);
    let hp = HyperParams { alpha: 0.05, max_epochs: 60, patience: 15, film_hidden: 8, ..HyperParams::default() };
    let cfg = MetaConfig::new(EncoderSpec::new(Arch::Sgc, 6, 3), hp, false);
    let splits = Splits::partition(&data, 0).unwrap();
    let state = train(&splits.train, &splits.val, &cfg, 0).unwrap();
    let eps = test_episodes(&splits.test, cfg.hp.support_fraction, 0).unwrap();
    let (acc, f1) = evaluate(&state, &splits.test, &eps).unwrap();
    assert!(acc >= 0.9, "accuracy {acc}");
    assert_eq!(acc, f1);
}

#[test]
fn predict_follows_film_then_gradient_steps() {
    let (data, cfg) = small();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut state = MetaState::<f64>::init(&cfg, 8);
    // nonzero FiLM factors
    state.prior = GraphPrior::init(state.prior.layout, &mut rng);
    let g = &data.graphs[1];
    let split = sample_episode(g, 0.5, &mut rng).unwrap();
    let got = predict(g, &split.support, &split.query, &state).unwrap();

    let (gamma, beta) = film_factors(g, &state.prior).unwrap();
    let mut theta = state.theta.data.hadamard(&gamma.add_scalar(1.0)).unwrap().add(&beta).unwrap();
    let ep = Episode::for_prediction(&split.support, &split.query, 3);
    for _ in 0..cfg.hp.inner_steps {
        let tape = Tape::new();
        let t = tape.var(theta.clone());
        let grad = tape.grad(support_loss(g, &ep, t, &cfg).unwrap(), &[t]).unwrap().remove(0);
        theta = theta.sub(&grad.scale(cfg.hp.alpha)).unwrap();
    }
    let mut adapted = state.theta.clone();
    adapted.data = theta;
    let logits = forward(&cfg.spec, g, &adapted).unwrap().gather_rows(&split.query).unwrap();
    let want = decide(&logits, false);
    assert_eq!(got, want);
    assert!(want.iter().all(|l| matches!(l, NodeLabel::Class(c) if *c < 3)));
}

#[test]
fn checkpoint_round_trip_keeps_predictions() {
    let (data, cfg) = small();
    let splits = Splits::partition(&data, 0).unwrap();
    let state = train(&splits.train, &splits.val, &cfg, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.bin");
    checkpoint::save(&state, &path).unwrap();
    let back: MetaState<f64> = checkpoint::load(&path).unwrap();
    assert_eq!(back, state);
    let eps = test_episodes(&splits.test, 0.5, 1).unwrap();
    assert_eq!(evaluate(&back, &splits.test, &eps).unwrap(), evaluate(&state, &splits.test, &eps).unwrap());
}

#[test]
fn every_method_fits_and_predicts() {
    let (data, cfg) = small();
    let splits = Splits::partition(&data, 0).unwrap();
    let eps = test_episodes(&splits.test, 0.5, 0).unwrap();
    for m in Method::ALL {
        let (model, _) = fit(m, &splits.train, &splits.val, &cfg, &MethodOptions::default(), 0).unwrap();
        for (g, ep) in splits.test.graphs.iter().zip(&eps) {
            assert_eq!(model.predict(g, ep).unwrap().len(), ep.query.len(), "{m}");
        }
    }
}
