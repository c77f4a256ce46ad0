use cascade_core::metrics::auroc_macro_ovr;
use cascade_core::pipeline::{evaluate_method, Method, StageObjectives};
use cascade_core::synthetic::{ensemble_gain_experiment, generate, SyntheticConfig};
use cascade_core::{compose_scores, stratified_kfold_split, FinalLabel, SplitRatios, Stage};

#[test]
fn class_frequencies_follow_priors() {
    let cfg = SyntheticConfig::new(100_000, 1, 1, 0.5, 0.0, 17);
    let (labels, _) = generate(&cfg).unwrap();
    let counts = labels.counts();
    let n = cfg.n_images as f64;
    for (c, p) in counts.iter().zip(cfg.class_priors) {
        let sigma = (n * p * (1.0 - p)).sqrt();
        assert!((*c as f64 - n * p).abs() <= 3.0 * sigma, "{counts:?}");
    }
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn skill_orders_solo_auroc() {
    let skills: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let cfg = SyntheticConfig { model_skill: skills.clone(), ..SyntheticConfig::new(3000, 10, 1, 0.0, 0.3, 5) };
    let (labels, table) = generate(&cfg).unwrap();
    let mut aurocs = Vec::new();
    for m in 0..10 {
        let mut scores = Vec::new();
        let mut truth = Vec::new();
        for (image, (_, label)) in labels.iter().enumerate() {
            let Some(t) = label.final_label() else { continue };
            let pr = table.get(image, m, 1, Stage::Stage1).unwrap()[0];
            let ph = table.get(image, m, 1, Stage::Stage2).unwrap()[0];
            scores.push(compose_scores(pr, ph));
            truth.push(t);
        }
        aurocs.push(auroc_macro_ovr(&scores, &truth).unwrap());
    }
    let rho = pearson(&ranks(&skills), &ranks(&aurocs));
    assert!(rho > 0.9, "{aurocs:?}");
    assert!((aurocs[0] - 50.0).abs() < 3.0);
}

#[test]
fn perfect_skill_is_near_perfect() {
    let cfg = SyntheticConfig::new(2000, 3, 5, 1.0, 0.5, 2);
    let (labels, table) = generate(&cfg).unwrap();
    let folds = stratified_kfold_split(&labels, 5, SplitRatios::DEFAULT, 2).unwrap();
    let evals = evaluate_method(&table, &labels, &folds, &Method::Ensemble, StageObjectives::default()).unwrap();
    for e in &evals {
        assert!(e.metrics.macro_f1 > 99.0, "{:?}", e.metrics);
    }
}

#[test]
fn single_model_has_no_gain() {
    let cfg = SyntheticConfig::new(400, 1, 3, 0.5, 0.5, 3);
    let s = ensemble_gain_experiment(&cfg, 3).unwrap();
    assert!(s.gains.iter().all(|&g| g == 0.0));
    assert_eq!(s.gain.mean, 0.0);
}

#[test]
fn identical_models_have_no_gain() {
    let cfg = SyntheticConfig::new(300, 3, 3, 0.6, 1.0, 6);
    let s = ensemble_gain_experiment(&cfg, 50).unwrap();
    assert!(s.gain.mean.abs() < 0.2, "{:?}", s.gain);
}

#[test]
fn same_seed_same_world() {
    let cfg = SyntheticConfig::new(300, 2, 3, 0.4, 0.2, 77);
    assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
    let other = SyntheticConfig { seed: 78, ..cfg.clone() };
    assert_ne!(generate(&cfg).unwrap().1, generate(&other).unwrap().1);
}

#[test]
fn rubbish_images_carry_no_stage2_signal() {
    let cfg = SyntheticConfig::new(4000, 1, 1, 0.7, 0.0, 9);
    let (labels, table) = generate(&cfg).unwrap();
    let mut sum = 0.0;
    let mut n = 0.0;
    for (image, (_, label)) in labels.iter().enumerate() {
        if label.final_label() == Some(FinalLabel::Rubbish) {
            sum += table.get(image, 0, 1, Stage::Stage2).unwrap()[0];
            n += 1.0;
        }
    }
    assert!((sum / n - 0.5).abs() < 0.02);
}
