use nextframe::data::{chrono_split, make_windows, synth_sequence, SynthKind};
use nextframe::error::Error;
use nextframe::exec::set_single_threaded;
use nextframe::layers::Mode;
use nextframe::loss::{loss, LossKind};
use nextframe::model::{
    build_model, fit, load_checkpoint, load_weights, model_forward, predict_all, predict_next,
    save_checkpoint, Architecture, Model, ModelConfig,
};
use nextframe::{Tensor, WindowedDataset};

fn tiny(arch: Architecture) -> ModelConfig {
    let mut c = ModelConfig::new(arch).with_width(4);
    c.resolution = 8;
    c.timestep = 3;
    c.conv_filters = 2;
    c.epochs = 3;
    c.seed = 7;
    c
}

fn data(cfg: &ModelConfig, frames: usize) -> (WindowedDataset, WindowedDataset) {
    let seq = synth_sequence(SynthKind::MovingSquare, frames, cfg.resolution, 1).unwrap();
    chrono_split(&make_windows(&seq, cfg.timestep).unwrap(), 0.8).unwrap()
}

#[test]
fn report_lengths_follow_epochs() {
    for arch in Architecture::ALL {
        let cfg = tiny(arch);
        let (train, valid) = data(&cfg, 14);
        let mut m: Model<f32> = build_model(&cfg).unwrap();
        let r = fit(&mut m, &train, &valid).unwrap();
        assert_eq!(r.train_loss.len(), 3);
        assert_eq!(r.valid_loss.len(), 3);
        assert_eq!(r.epoch_seconds.len(), 3);
        assert!(r.epoch_seconds.iter().all(|&s| s >= 0.0));
        assert_eq!(r.config, cfg);
        assert_eq!(m.mode(), Mode::Eval);
    }
}

#[test]
fn default_report_has_one_hundred_epochs() {
    let mut cfg = tiny(Architecture::StackLstm);
    cfg.epochs = ModelConfig::new(Architecture::StackLstm).epochs;
    let (train, valid) = data(&cfg, 10);
    let mut m: Model<f32> = build_model(&cfg).unwrap();
    let r = fit(&mut m, &train, &valid).unwrap();
    assert_eq!(r.train_loss.len(), 100);
}

#[test]
fn validation_runs_in_eval_mode() {
    let cfg = tiny(Architecture::ConvLstm);
    let (train, valid) = data(&cfg, 14);
    let mut m: Model<f32> = build_model(&cfg).unwrap();
    let r = fit(&mut m, &train, &valid).unwrap();
    let pred = predict_all(&m, &valid, valid.len()).unwrap();
    let direct = loss(cfg.loss, &pred, &valid.y).unwrap() as f64;
    assert_eq!(*r.valid_loss.last().unwrap(), direct);
}

#[test]
fn identical_seeds_identical_curves() {
    set_single_threaded(true);
    for arch in Architecture::ALL {
        let mut cfg = tiny(arch);
        cfg.loss = LossKind::Rmse;
        cfg.batch_size = Some(4);
        let (train, valid) = data(&cfg, 16);
        let run = || {
            let mut m: Model<f32> = build_model(&cfg).unwrap();
            fit(&mut m, &train, &valid).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.valid_loss, b.valid_loss);
    }
}

#[test]
fn predict_next_matches_eval_forward() {
    for arch in Architecture::ALL {
        let cfg = tiny(arch);
        let mut m: Model<f32> = build_model(&cfg).unwrap();
        let seq = synth_sequence(SynthKind::DiffusingBlob, 6, 8, 3).unwrap();
        let window = seq.tail(3).unwrap();
        let a = predict_next(&m, &window).unwrap();
        let b = model_forward(&mut m, &window.to_tensor(), Mode::Eval).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dims(), &[8, 8, 1]);
        assert!(predict_next(&m, &seq.tail(2).unwrap()).is_err());
    }
}

#[test]
fn output_shape_at_both_resolutions() {
    for res in [64, 128] {
        for arch in Architecture::ALL {
            let mut cfg = ModelConfig::new(arch).with_width(2);
            cfg.resolution = res;
            cfg.conv_filters = 2;
            let m: Model<f32> = build_model(&cfg).unwrap();
            let x = Tensor::full(&[1, 5, res, res, 1], 0.5).unwrap();
            assert_eq!(m.predict(&x).unwrap().dims(), &[1, res, res, 1]);
        }
    }
}

#[test]
fn checkpoint_restores_eval_behaviour_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for arch in Architecture::ALL {
        let cfg = tiny(arch);
        let (train, valid) = data(&cfg, 14);
        let mut m: Model<f32> = build_model(&cfg).unwrap();
        fit(&mut m, &train, &valid).unwrap();
        let path = dir.path().join(arch.name());
        save_checkpoint(&m, &path).unwrap();
        let back: Model<f32> = load_checkpoint(&path).unwrap();
        for (a, b) in m.state().iter().zip(back.state()) {
            assert_eq!(a.0, b.0);
            assert!(a.1.data().iter().zip(b.1.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(m.predict(&valid.x).unwrap(), back.predict(&valid.x).unwrap());

        let mut other = cfg.clone();
        other.seed += 1;
        let mut fresh: Model<f32> = build_model(&other).unwrap();
        assert!(load_weights(&mut fresh, &path).is_err());
    }
}

#[test]
fn divergence_is_reported_with_epoch() {
    let cfg = tiny(Architecture::StackLstm);
    let (train, valid) = data(&cfg, 10);
    let mut broken = train.clone();
    broken.y.data_mut()[0] = f32::NAN;
    let mut m: Model<f32> = build_model(&cfg).unwrap();
    match fit(&mut m, &broken, &valid) {
        Err(Error::NonFinite { epoch, .. }) => assert_eq!(epoch, 0),
        other => panic!("expected a non-finite loss error, got {other:?}"),
    }
}

#[test]
fn unknown_architecture_is_rejected() {
    assert!("gru".parse::<Architecture>().is_err());
}

#[test]
fn memorizable_loss_trends_down() {
    set_single_threaded(true);
    for arch in Architecture::ALL {
        let mut cfg = ModelConfig::new(arch).with_width(8);
        cfg.resolution = 16;
        cfg.conv_filters = 4;
        cfg.epochs = 120;
        // Dropout makes the train-mode loss a noisy estimate.
        cfg.dropout = 0.0;
        let (train, valid) = data(&cfg, 30);
        let mut m: Model<f32> = build_model(&cfg).unwrap();
        let r = fit(&mut m, &train, &valid).unwrap();
        for start in 20..=cfg.epochs - 50 {
            let ups = r.train_loss[start..start + 50]
                .windows(2)
                .filter(|w| w[1] > w[0])
                .count();
            assert!(ups <= 5, "{arch}: {ups} upward epochs from epoch {start}");
        }
    }
}
