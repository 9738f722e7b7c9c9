use duetlite_ckks::PlainMatrix;
use duetlite_core::flow::{LayerTrace, ResultBundle};
use duetlite_core::model::{chain_with_scale, mnist_cnn, GUARD_BITS};
use duetlite_core::{
    chain_for_depth, gen_weights, required_depth, split_at, Conv2d, Dense, DuetError, LayerShape, Model64, Tensor,
    Tensor32,
};
use proptest::prelude::*;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn shape_strategy() -> impl Strategy<Value = LayerShape> {
    prop_oneof![
        Just(LayerShape::Square),
        Just(LayerShape::Flatten),
        (1usize..300, 1usize..300).prop_map(|(rows, cols)| LayerShape::Dense { rows, cols }),
        (1usize..4, 1usize..4, 1usize..4).prop_map(|(i, o, k)| LayerShape::Conv {
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: 1,
            padding: 0,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_wire_roundtrip(dims in proptest::collection::vec(1usize..6, 1..4), seed: u64) {
        let n: usize = dims.iter().product();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.next_u32() & 0x7f7f_ffff)).collect();
        let t = Tensor32::new(dims.clone(), data).unwrap();
        let wire = t.to_wire_f32();
        prop_assert_eq!(wire.len(), 6 + 4 * dims.len() + 4 * n);
        let back = Tensor32::from_wire_f32(&wire).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        let same_bits = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
        prop_assert!(Tensor32::from_wire_f32(&wire[..wire.len() - 1]).is_err());
    }

    #[test]
    fn split_concatenates_to_original(index in 0usize..10, seed in 0u64..4) {
        let m = gen_weights(seed);
        let shapes = m.shapes();
        let valid = index > 0 && index < shapes.len() && shapes[index..].iter().all(LayerShape::he_evaluable);
        match split_at(&m, index) {
            Ok(s) => {
                prop_assert!(valid);
                prop_assert_eq!(s.client.len(), index);
                prop_assert_eq!(s.rejoin(), m);
            }
            Err(e) => {
                prop_assert!(!valid);
                prop_assert!(matches!(e, DuetError::Split(_)));
            }
        }
    }

    #[test]
    fn chain_layout(depth in 0usize..12, scale in 20u32..40) {
        let c = chain_with_scale(depth, scale);
        prop_assert_eq!(c.len(), depth + 2);
        prop_assert_eq!(c.iter().sum::<u32>(), 2 * (scale + GUARD_BITS) + depth as u32 * scale);
        prop_assert_eq!(c[0], c[c.len() - 1]);
        prop_assert!(c[1..c.len() - 1].iter().all(|&b| b == scale));
        let deeper = chain_with_scale(depth + 1, scale);
        prop_assert!(deeper.iter().sum::<u32>() > c.iter().sum::<u32>());
        prop_assert_eq!(chain_for_depth(depth), chain_with_scale(depth, 26));
    }

    #[test]
    fn depth_counts_dense_and_square(shapes in proptest::collection::vec(shape_strategy(), 0..12)) {
        let evaluable = shapes.iter().all(LayerShape::he_evaluable);
        match required_depth(&shapes) {
            Ok(d) => {
                prop_assert!(evaluable);
                prop_assert_eq!(d, shapes.len());
            }
            Err(_) => prop_assert!(!evaluable),
        }
    }

    #[test]
    fn result_bundle_roundtrip(
        load_ns: u64,
        trace in proptest::collection::vec(("[A-Za-z. ]{0,20}", any::<u64>(), any::<u64>(), any::<u64>(), any::<u8>()), 0..5),
        logical_len: u32,
        ciphertext in proptest::collection::vec(any::<u8>(), 0..200),
    ) {
        let b = ResultBundle {
            load_ns,
            trace: trace
                .into_iter()
                .map(|(name, compute_ns, serialize_ns, bytes, level)| LayerTrace { name, compute_ns, serialize_ns, bytes, level })
                .collect(),
            logical_len,
            ciphertext,
        };
        let enc = b.encode();
        prop_assert_eq!(ResultBundle::decode(&enc).unwrap(), b.clone());
        let head = enc.len() - b.ciphertext.len() - 4;
        for cut in 0..head {
            prop_assert!(ResultBundle::decode(&enc[..cut]).is_err());
        }
    }

    #[test]
    fn conv_is_linear_in_input(
        c in 1usize..3, o in 1usize..3, h in 3usize..8, k in 1usize..4, s in 1usize..3, p in 0usize..2, seed: u64,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut r = || (rng.next_u32() as f64 / u32::MAX as f64) * 2.0 - 1.0;
        let conv = Conv2d {
            in_channels: c,
            out_channels: o,
            kernel: k,
            stride: s,
            padding: p,
            weights: (0..o * c * k * k).map(|_| r()).collect(),
            bias: vec![0.0; o],
        };
        let x: Vec<f64> = (0..c * h * h).map(|_| r()).collect();
        let y: Vec<f64> = (0..c * h * h).map(|_| r()).collect();
        let f = |v: Vec<f64>| conv.forward(&Tensor::new(vec![c, h, h], v).unwrap()).unwrap().into_data();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let (fx, fy, fs) = (f(x), f(y), f(sum));
        let side = (h + 2 * p - k) / s + 1;
        prop_assert_eq!(fs.len(), o * side * side);
        for i in 0..fs.len() {
            prop_assert!((fs[i] - fx[i] - fy[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_matches_row_dot_products(rows in 1usize..20, cols in 1usize..20, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut r = || (rng.next_u32() as f64 / u32::MAX as f64) - 0.5;
        let w: Vec<f64> = (0..rows * cols).map(|_| r()).collect();
        let b: Vec<f64> = (0..rows).map(|_| r()).collect();
        let x: Vec<f64> = (0..cols).map(|_| r()).collect();
        let d = Dense { weights: PlainMatrix::new(rows, cols, w.clone()).unwrap(), bias: b.clone() };
        let y = d.forward(&Tensor::new(vec![cols], x.clone()).unwrap()).unwrap();
        for i in 0..rows {
            let want = b[i] + (0..cols).map(|j| w[i * cols + j] * x[j]).sum::<f64>();
            prop_assert!((y.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_file_preserves_every_bit(seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let m: Model64 = mnist_cnn(|| loop {
            let v = f64::from_bits(rng.next_u64());
            if v.is_finite() {
                break v;
            }
        });
        let bytes = m.to_bytes();
        let back = Model64::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.parameter_count(), m.parameter_count());
    }
}
