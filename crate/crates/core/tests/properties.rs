use nvv_core::codec::{
    build_freq_table, decode_grid, encode_grid, range_decode, range_encode, read_stream, write_stream, FrameKind,
    FrameRecord, Stream, TensorKind,
};
use nvv_core::eval::{bd_rate, Quality, RdCurve, RdPoint};
use nvv_core::grid::{apply_residual, sawtooth, BasisPyramid, Grid3D, ResidualPyramid};
use nvv_core::model::{FieldShapes, LevelSpec};
use nvv_core::rate::{bin_mass, rate_loss, rounded_bits, LaplaceModel, TensorBundle};
use nvv_core::render::composite;
use nvv_core::rng::seeded;
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = Grid3D> {
    (2usize..5, 2usize..5, 2usize..5, 1usize..4).prop_flat_map(|(x, y, z, c)| {
        proptest::collection::vec(-50.0f64..50.0, x * y * z * c)
            .prop_map(move |v| Grid3D::from_values([x, y, z], c, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compositing_conserves_weight(
        samples in proptest::collection::vec((0.0f64..200.0, 0.0f64..0.1), 1..64),
    ) {
        let sig: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let del: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let col = vec![[0.3, 0.6, 0.9]; sig.len()];
        let c = composite(&col, &sig, &del, [1.0; 3]).unwrap();
        let total: f64 = c.weights.iter().sum::<f64>() + c.residual;
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(c.weights.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn more_density_never_lowers_opacity(
        samples in proptest::collection::vec((0.0f64..50.0, 0.001f64..0.1), 2..32),
        pick in any::<prop::sample::Index>(),
        extra in 0.0f64..20.0,
    ) {
        let sig: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let del: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let col = vec![[0.5; 3]; sig.len()];
        let before = composite(&col, &sig, &del, [0.0; 3]).unwrap();
        let mut more = sig.clone();
        more[pick.index(sig.len())] += extra;
        let after = composite(&col, &more, &del, [0.0; 3]).unwrap();
        prop_assert!(after.residual <= before.residual + 1e-15);
    }

    #[test]
    fn sawtooth_is_periodic_and_in_range(x in 0.0f64..1.0, f in 1u32..64, k in 0u32..64) {
        let k = k % f;
        let s = sawtooth([x, x, x], f)[0];
        prop_assert!((0.0..1.0).contains(&s));
        let shifted = x * f as f64 - (x * f as f64).floor();
        let y = (k as f64 + shifted) / f as f64;
        let t = sawtooth([y, y, y], f)[0];
        let d = (s - t).abs();
        prop_assert!(d.min(1.0 - d) < 1e-9, "{} vs {}", s, t);
    }

    #[test]
    fn sampling_is_exact_at_nodes(g in grid_strategy(), pick in any::<prop::sample::Index>()) {
        let [nx, ny, nz] = g.dims();
        let i = pick.index(nx * ny * nz);
        let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
        let p = [x as f64 / (nx - 1) as f64, y as f64 / (ny - 1) as f64, z as f64 / (nz - 1) as f64];
        let mut out = vec![0.0; g.channels()];
        g.sample_point(p, &mut out);
        let o = g.offset(x, y, z);
        for (c, v) in out.iter().enumerate() {
            prop_assert!((v - g.values()[o + c]).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_application_leaves_inputs_alone(g in grid_strategy(), r in -5.0f64..5.0) {
        let prev = BasisPyramid::zeros(&[(g.dims(), g.channels(), 2)]).unwrap();
        let mut prev = prev;
        prev.levels_mut()[0].grid = g.clone();
        let mut res_grid = g.clone();
        res_grid.values_mut().iter_mut().for_each(|v| *v = r);
        let res = ResidualPyramid::new(vec![res_grid]);
        let (p0, r0) = (prev.clone(), res.clone());
        let out = apply_residual(&prev, &res).unwrap();
        prop_assert_eq!(&prev, &p0);
        prop_assert_eq!(&res, &r0);
        for (o, v) in out.levels()[0].grid.values().iter().zip(g.values()) {
            prop_assert_eq!(*o, v + r);
        }
    }

    #[test]
    fn range_coder_is_lossless(
        values in proptest::collection::vec(-300i32..300, 0..2000),
        mu in -20.0f64..20.0,
        log_b in -5.0f64..6.0,
    ) {
        let (vmin, vmax) = values.iter().fold((0, 0), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let table = build_freq_table(mu, log_b.exp(), vmin, vmax).unwrap();
        let bytes = range_encode(&values, &table).unwrap();
        prop_assert_eq!(range_decode(&bytes, &table, values.len()).unwrap(), values);
    }

    #[test]
    fn adversarial_tensors_round_trip(
        v in -100_000i32..100_000,
        span in 0i32..65_000,
        n in 1usize..3000,
        mu in -1e5f64..1e5,
        b in 0.001f64..100.0,
    ) {
        // constant runs and two-value tensors at the ends of the symbol range
        let constant = vec![v; n];
        let table = build_freq_table(mu, b, v, v).unwrap();
        let bytes = range_encode(&constant, &table).unwrap();
        prop_assert_eq!(range_decode(&bytes, &table, n).unwrap(), constant);
        let ends: Vec<i32> = (0..n).map(|i| if i % 3 == 0 { v + span } else { v }).collect();
        let table = build_freq_table(mu, b, v, v + span).unwrap();
        let bytes = range_encode(&ends, &table).unwrap();
        prop_assert_eq!(range_decode(&bytes, &table, n).unwrap(), ends);
    }

    #[test]
    fn grid_records_round_trip_through_streams(g in grid_strategy(), mu in -3.0f64..3.0, b in 0.05f64..30.0) {
        let (rec, dec) = encode_grid(TensorKind::Coefficient, 0, &g, &LaplaceModel::new(mu, b)).unwrap();
        prop_assert_eq!(&decode_grid(&rec, g.dims(), g.channels()).unwrap(), &dec);
        let shapes = FieldShapes {
            coef_dims: g.dims(),
            coef_channels: g.channels(),
            levels: vec![LevelSpec { dims: [2; 3], channels: g.channels(), frequency: 1 }],
            hidden: vec![4],
            direction_octaves: 0,
            feature_scale: 1.0,
        };
        let stream = Stream {
            header: shapes.to_header(20, [1.0; 3], 16),
            frames: vec![FrameRecord { kind: FrameKind::Predicted, tensors: vec![rec], mlp: None }],
        };
        let bytes = write_stream(&stream).unwrap();
        prop_assert_eq!(bytes.len(), stream.breakdown().total());
        prop_assert_eq!(read_stream(&bytes).unwrap(), stream);
    }

    #[test]
    fn rate_estimates_are_bounded(
        values in proptest::collection::vec(-1e4f64..1e4, 1..200),
        mu in -10.0f64..10.0,
        b in 1e-6f64..100.0,
        seed in any::<u64>(),
    ) {
        let mut bundle = TensorBundle::default();
        bundle.push("t", &values, LaplaceModel::new(mu, b));
        let r = rate_loss(&bundle, &mut seeded(seed));
        prop_assert!(r.bits_per_entry >= 0.0 && r.bits_per_entry <= 32.0 + 1e-9);
        let rb = rounded_bits(&values, &LaplaceModel::new(mu, b)) / values.len() as f64;
        prop_assert!((0.0..=32.0 + 1e-9).contains(&rb));
    }

    #[test]
    fn bin_masses_sum_to_one(mu in -5.0f64..5.0, b in 0.01f64..20.0) {
        let reach = (40.0 * b).ceil() as i64 + 8;
        let m = mu.round() as i64;
        let total: f64 = (m - reach..=m + reach).map(|y| bin_mass(y as f64, mu, b)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{}", total);
    }

    #[test]
    fn bd_rate_reciprocal_identity(
        start in 500.0f64..5000.0,
        steps in proptest::collection::vec((1.2f64..2.5, 1.0f64..3.0), 3),
        scale in 0.4f64..2.5,
        offset in -0.5f64..0.5,
    ) {
        let mut a = Vec::new();
        let (mut r, mut q) = (start, 30.0);
        a.push((r, q));
        for (dr, dq) in &steps {
            r *= dr;
            q += dq;
            a.push((r, q));
        }
        let curve = |pts: Vec<(f64, f64)>| RdCurve {
            label: String::new(),
            points: pts.into_iter().map(|(r, q)| RdPoint { rate_bits: r, psnr_train: q, psnr_test: q }).collect(),
        };
        let b: Vec<(f64, f64)> = a.iter().map(|(r, q)| (r * scale, q + offset)).collect();
        let (ca, cb) = (curve(a), curve(b));
        let ab = bd_rate(&ca, &cb, Quality::Test).unwrap() / 100.0;
        let ba = bd_rate(&cb, &ca, Quality::Test).unwrap() / 100.0;
        prop_assert!((ab + ba / (1.0 + ba)).abs() * 100.0 < 0.1, "{} {}", ab, ba);
        prop_assert_eq!(bd_rate(&ca, &ca, Quality::Train).unwrap(), 0.0);
    }
}
