use audsae::data::SplitData;
use audsae::numerics::Rng;
use audsae::probe::{layer_sweep, multi_seed_test_accuracy, train_and_test, LayerInput};
use audsae::{train_probe, ProbeConfig, Tensor};

fn gaussian(m: usize, p: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(m, p, (0..m * p).map(|_| rng.normal() as f32).collect()).unwrap()
}

fn split(x: Tensor, labels: Vec<usize>) -> SplitData {
    SplitData {
        ids: (0..labels.len()).map(|i| format!("u{i}")).collect(),
        labels,
        x,
    }
}

#[test]
fn random_labels_stay_near_chance() {
    let mut rng = Rng::new(1);
    let train = split(gaussian(500, 16, &mut rng), (0..500).map(|_| rng.below(10) as usize).collect());
    let test = split(gaussian(500, 16, &mut rng), (0..500).map(|_| rng.below(10) as usize).collect());
    let (_, report) = train_and_test(&train, &test, 10, &ProbeConfig::default()).unwrap();
    let acc = report.test_accuracy().unwrap();
    assert!((0.02..=0.25).contains(&acc), "test accuracy {acc}");
    let t = report.test.unwrap();
    assert_eq!(t.confusion.iter().flatten().sum::<usize>(), 500);
}

/// Layer "a" holds the label in a few directions; layer "b" is noise.
fn two_layers(seed: u64) -> [(SplitData, SplitData); 2] {
    let mut rng = Rng::new(seed);
    let mut make = |m: usize| {
        let labels: Vec<usize> = (0..m).map(|_| rng.below(4) as usize).collect();
        let mut a = gaussian(m, 12, &mut rng);
        for (i, &y) in labels.iter().enumerate() {
            a.row_mut(i)[y] += 3.0;
        }
        let b = gaussian(m, 12, &mut rng);
        (split(a, labels.clone()), split(b, labels))
    };
    let (a_train, b_train) = make(400);
    let (a_test, b_test) = make(200);
    [(a_train, a_test), (b_train, b_test)]
}

#[test]
fn layer_sweep_ranks_informative_layer_first() {
    let [(a_tr, a_te), (b_tr, b_te)] = two_layers(2);
    let cfg = ProbeConfig {
        max_epochs: 60,
        ..ProbeConfig::default()
    };
    let sweep = layer_sweep(
        &[
            LayerInput { name: "noise", train: &b_tr, test: &b_te },
            LayerInput { name: "signal", train: &a_tr, test: &a_te },
        ],
        4,
        &cfg,
    )
    .unwrap();
    assert_eq!(sweep.rows.len(), 2);
    assert_eq!(sweep.selected, 1);
    assert_eq!(sweep.ranking, vec![1, 0]);
    assert!(sweep.rows[1].test_acc > sweep.rows[0].test_acc + 0.3);

    let single = layer_sweep(&[LayerInput { name: "only", train: &b_tr, test: &b_te }], 4, &cfg).unwrap();
    assert_eq!((single.rows.len(), single.selected), (1, 0));
    assert_eq!(single.rows[0].layer, "only");
    assert!(layer_sweep(&[], 4, &cfg).is_err());
}

#[test]
fn shifting_inputs_keeps_the_trajectory() {
    // Dyadic values so that centering is exact in both runs.
    let mut rng = Rng::new(3);
    let (m, p) = (80, 6);
    let labels: Vec<usize> = (0..m).map(|_| rng.below(3) as usize).collect();
    let mut data: Vec<f32> = (0..m * p).map(|_| (rng.below(512) as f32 - 256.0) / 64.0).collect();
    for (i, &y) in labels.iter().enumerate() {
        data[i * p + y] += 2.0;
    }
    let x = Tensor::matrix(m, p, data.clone()).unwrap();
    let shift = [3.0f32, -5.5, 0.25, 100.0, -0.125, 7.0];
    let shifted: Vec<f32> = data.iter().enumerate().map(|(i, v)| v + shift[i % p]).collect();
    let xs = Tensor::matrix(m, p, shifted).unwrap();
    let cfg = ProbeConfig {
        seed: 4,
        max_epochs: 50,
        ..ProbeConfig::default()
    };
    let (_, r1) = train_probe(&x, &labels, 3, &cfg).unwrap();
    let (_, r2) = train_probe(&xs, &labels, 3, &cfg).unwrap();
    assert_eq!(r1.n_train, 64);
    let acc = |r: &audsae::ProbeReport| r.epochs.iter().map(|e| e.val_accuracy).collect::<Vec<_>>();
    assert_eq!(acc(&r1), acc(&r2));
    assert_eq!(r1.best_val_accuracy, r2.best_val_accuracy);
    assert_eq!(r1.best_epoch, r2.best_epoch);
}

#[test]
fn multi_seed_summary() {
    let [(a_tr, a_te), _] = two_layers(5);
    let cfg = ProbeConfig {
        max_epochs: 30,
        ..ProbeConfig::default()
    };
    let (mean, std) = multi_seed_test_accuracy(&a_tr, &a_te, 4, &cfg, &[1, 2, 3]).unwrap();
    assert!(mean > 0.5 && (0.0..0.2).contains(&std), "{mean} {std}");
    assert!(multi_seed_test_accuracy(&a_tr, &a_te, 4, &cfg, &[]).is_err());
}
