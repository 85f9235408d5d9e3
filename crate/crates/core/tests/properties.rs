use nextframe::data::{chrono_split, make_windows, preprocess, FrameSequence};
use nextframe::loss::{loss, LossKind};
use nextframe::metrics::{ssim, SsimConsts};
use nextframe::tensor::{read_tensor, write_tensor};
use nextframe::Tensor;
use proptest::prelude::*;

fn frames(n: usize, h: usize, w: usize, seed: u64) -> FrameSequence<f32> {
    let frames = (0..n)
        .map(|i| {
            Tensor::from_fn(&[h, w, 1], |j| {
                (((i as u64 * 131 + j as u64 * 17 + seed) % 97) as f32) / 96.0
            })
            .unwrap()
        })
        .collect();
    FrameSequence::new(frames, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_are_index_slices(n in 2usize..40, t_frac in 0.0f64..1.0, seed in 0u64..1000) {
        let t = 1 + ((n - 1) as f64 * t_frac) as usize % (n - 1);
        let seq = frames(n, 3, 2, seed);
        let ds = make_windows(&seq, t).unwrap();
        prop_assert_eq!(ds.len(), n - t);
        for i in 0..ds.len() {
            let (x, y) = ds.sample(i).unwrap();
            for j in 0..t {
                prop_assert_eq!(x.outer(j).unwrap(), seq.frame(i + j).clone());
            }
            prop_assert_eq!(&y, seq.frame(i + t));
        }
    }

    #[test]
    fn split_is_chronological(n in 2usize..60, f in 0.05f64..0.95) {
        let ds = make_windows(&frames(n + 1, 2, 2, 0), 1).unwrap();
        if let Ok((a, b)) = chrono_split(&ds, f) {
            prop_assert_eq!(a.len() + b.len(), ds.len());
            prop_assert_eq!(a.concat(&b).unwrap(), ds);
        }
    }

    #[test]
    fn fct1_roundtrip_is_bitwise(dims in proptest::collection::vec(1usize..5, 1..6), seed in any::<u32>()) {
        let t = Tensor::<f32>::from_fn(&dims, |i| f32::from_bits((seed ^ (i as u32).wrapping_mul(2_654_435_761)) & 0x7f7f_ffff)).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        let back: Tensor<f32> = read_tensor(&buf[..]).unwrap();
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back.dims(), t.dims());
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(a in proptest::collection::vec(0.0f64..1.0, 16), b in proptest::collection::vec(0.0f64..1.0, 16)) {
        let x = Tensor::from_vec(&[4, 4, 1], a).unwrap();
        let y = Tensor::from_vec(&[4, 4, 1], b).unwrap();
        let k = SsimConsts::default();
        let s = ssim(&x, &y, k).unwrap();
        prop_assert!((s - ssim(&y, &x, k).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((ssim(&x, &x, k).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn losses_order_and_vanish(a in proptest::collection::vec(-2.0f64..2.0, 1..30)) {
        let p = Tensor::from_vec(&[a.len()], a.clone()).unwrap();
        let o = p.map(|v| v * 0.5 + 0.1);
        let mae = loss(LossKind::Mae, &p, &o).unwrap();
        let rmse = loss(LossKind::Rmse, &p, &o).unwrap();
        prop_assert!(rmse + 1e-12 >= mae);
        prop_assert_eq!(loss(LossKind::Mae, &p, &p).unwrap(), 0.0);
        prop_assert_eq!(loss(LossKind::Rmse, &p, &p).unwrap(), 0.0);
    }

    #[test]
    fn preprocess_lands_in_unit_range(n in 1usize..4, h in 1usize..12, w in 1usize..12, target in 1usize..10) {
        let raw: Vec<Tensor<f32>> = (0..n)
            .map(|i| Tensor::from_fn(&[h, w, 1], |j| ((i * 7 + j * 13) % 256) as f32).unwrap())
            .collect();
        let seq = FrameSequence::new(raw, 255.0).unwrap();
        let out = preprocess(&seq, target).unwrap();
        prop_assert_eq!(out.frame(0).dims(), &[target, target, 1]);
        prop_assert!(out.frames().iter().all(|f| f.data().iter().all(|&v| (0.0..=1.0).contains(&v))));
    }
}
