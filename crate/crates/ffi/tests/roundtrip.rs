//! Full pipeline through the C ABI: load datasets, pretrain, adapt,
//! save/load an encoder, and evaluate.

use std::ffi::CString;
use std::ptr;

use smcr_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn make_datasets(root: &std::path::Path) {
    use smcr_core::data::{generate_domain, save_dataset, DomainSpec, DomainTag, DomainTransform};
    let spec = |tag, seed| DomainSpec {
        num_identities: 6,
        samples_per_identity: 2,
        num_cameras: 2,
        input_dim: 16,
        identity_spread: 0.3,
        camera_shift_scale: 0.2,
        transform: DomainTransform::identity(16),
        rng_seed: seed,
        domain: tag,
    };
    for (name, tag, seed) in [
        ("synthetic", DomainTag::Synthetic, 31u64),
        ("source", DomainTag::Source, 32),
        ("target", DomainTag::Target, 33),
    ] {
        let ds = generate_domain(&spec(tag, seed)).unwrap();
        save_dataset(&ds, &root.join(name)).unwrap();
    }
}

#[test]
fn pipeline_roundtrip_through_c_abi() {
    let root = tempfile::tempdir().unwrap();
    make_datasets(root.path());

    unsafe {
        let mut cfg: *mut SmcrConfig = ptr::null_mut();
        assert_eq!(smcr_config_new(&mut cfg), SmcrStatus::Ok);
        for (k, v) in [
            ("epochs", "2"),
            ("pretrain_epochs", "2"),
            ("batch_p", "4"),
            ("batch_k", "2"),
            ("base_lr", "0.01"),
            ("hidden_dims", "16"),
            ("output_dim", "8"),
            ("min_pts", "3"),
            ("cluster_eps", "0.7"),
            ("seed", "4"),
        ] {
            assert_eq!(
                smcr_config_set(cfg, c(k).as_ptr(), c(v).as_ptr()),
                SmcrStatus::Ok,
                "setting {k}={v}"
            );
        }

        let load = |name: &str| -> *mut SmcrDataset {
            let mut ds: *mut SmcrDataset = ptr::null_mut();
            let path = root.path().join(name);
            assert_eq!(
                smcr_dataset_load(c(path.to_str().unwrap()).as_ptr(), &mut ds),
                SmcrStatus::Ok
            );
            ds
        };
        let synthetic = load("synthetic");
        let source = load("source");
        let target = load("target");
        assert_eq!(smcr_dataset_len(synthetic), 24);
        assert_eq!(smcr_dataset_dim(synthetic), 16);

        let mut pre: *mut SmcrEncoder = ptr::null_mut();
        assert_eq!(
            smcr_pretrain(cfg, synthetic, source, &mut pre),
            SmcrStatus::Ok
        );

        let mut b1: *mut SmcrEncoder = ptr::null_mut();
        let mut b2: *mut SmcrEncoder = ptr::null_mut();
        let mut metrics = SmcrMetrics::default();
        assert_eq!(
            smcr_adapt(cfg, pre, source, target, &mut b1, &mut b2, &mut metrics),
            SmcrStatus::Ok
        );
        assert!(metrics.map_fused > 0.0 && metrics.map_fused <= 1.0);
        assert!(metrics.cmc1_fused <= metrics.cmc5_fused);

        // Save, reload, and confirm evaluation is unchanged.
        let enc_path = root.path().join("b1.txt");
        assert_eq!(
            smcr_encoder_save(b1, c(enc_path.to_str().unwrap()).as_ptr()),
            SmcrStatus::Ok
        );
        let mut b1_reloaded: *mut SmcrEncoder = ptr::null_mut();
        assert_eq!(
            smcr_encoder_load(c(enc_path.to_str().unwrap()).as_ptr(), &mut b1_reloaded),
            SmcrStatus::Ok
        );
        let mut m1 = SmcrMetrics::default();
        let mut m2 = SmcrMetrics::default();
        assert_eq!(smcr_evaluate(b1, b2, target, 0.5, &mut m1), SmcrStatus::Ok);
        assert_eq!(
            smcr_evaluate(b1_reloaded, b2, target, 0.5, &mut m2),
            SmcrStatus::Ok
        );
        assert_eq!(m1.map_fused, m2.map_fused);

        smcr_encoder_free(b1_reloaded);
        smcr_encoder_free(b1);
        smcr_encoder_free(b2);
        smcr_encoder_free(pre);
        smcr_dataset_free(synthetic);
        smcr_dataset_free(source);
        smcr_dataset_free(target);
        smcr_config_free(cfg);
    }
}
