use plasmanet_core::dataset::{build_dataset, DatasetKind, DatasetRequest};
use plasmanet_core::GridSpec;
use plasmanet_net::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use plasmanet_net::rf::{empirical_rf, receptive_field};
use plasmanet_net::train::TrainingData;
use plasmanet_net::{infer, train_on, Architecture, LossWeights, NetConfig, Network, Tensor, TrainConfig};
use proptest::prelude::*;

fn small_data(dir: &std::path::Path) -> TrainingData {
    let g = GridSpec::square(17, 0.01).unwrap();
    let m = build_dataset(&DatasetRequest::new(DatasetKind::Random { c: 4 }, 24, g, 3), dir).unwrap();
    TrainingData::from_manifest(&m).unwrap()
}

#[test]
fn training_reduces_loss_and_checkpoint_reproduces_inference() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let mut cfg = NetConfig::new(Architecture::UNet, vec![1, 2], 3);
    cfg.base_width = 4;
    let net = Network::build(&cfg, 1).unwrap();
    let tc = TrainConfig {
        epochs: 6,
        batch_size: 4,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    };
    let w = LossWeights {
        dirichlet: 1e3,
        ..LossWeights::laplacian_dirichlet()
    };
    let (trained, h) = train_on(net, &data, w, &tc).unwrap();
    assert_eq!(h.records.len(), 7);
    assert!(h.last().val_loss < h.first().val_loss);

    let path = dir.path().join("m.pnet");
    let ck = Checkpoint {
        network: trained.clone(),
        normalization: data.normalization,
        delta_nn: data.grid.dx(),
    };
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    let rhs = &data.validation[0].rhs;
    let a = infer(&trained, rhs, data.normalization, data.grid.dx()).unwrap().0;
    let b = infer(&back.network, rhs, back.normalization, back.delta_nn).unwrap().0;
    assert_eq!(a, b);
}

#[test]
fn single_branch_rf_matches_formula() {
    for (arch, depth) in [(Architecture::UNet, 3), (Architecture::MSNet, 5)] {
        let mut cfg = NetConfig::new(arch, vec![depth], 3);
        cfg.base_width = 2;
        let net = Network::build(&cfg, 0).unwrap();
        let rf = receptive_field(&cfg).total;
        assert_eq!(empirical_rf(&net, 3 * rf, 3 * rf).unwrap(), rf);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // Bias-free ReLU networks are positively homogeneous.
    #[test]
    fn networks_are_positively_homogeneous(seed in 0u64..1000, scale in 0.1f64..10.0, h in 5usize..14, w in 5usize..14) {
        let mut cfg = NetConfig::new(Architecture::MSNet, vec![1, 1, 1], 3);
        cfg.base_width = 3;
        let net = Network::build(&cfg, seed).unwrap();
        let x = Tensor::from_vec([1, 1, h, w], (0..h * w).map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0).collect()).unwrap();
        let y = net.predict(&x).unwrap();
        let xs = Tensor::from_vec(x.shape, x.data.iter().map(|v| v * scale).collect()).unwrap();
        let ys = net.predict(&xs).unwrap();
        prop_assert_eq!(y.shape, [1, 1, h, w]);
        for (a, b) in y.data.iter().zip(&ys.data) {
            prop_assert!((a * scale - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}
