mod oracle;

use std::collections::{BTreeSet, HashMap};

use nc_coreset::collapse::{self, class_mean, distance_scores, geometry, ncc_assign};
use nc_coreset::embedding_io::{decode_table, encode_table, EmbeddingRecord};
use nc_coreset::eval_metrics::{eer_roc, mean_average_precision};
use nc_coreset::features::{self, AudioClip, HOP_LENGTH, N_FFT};
use nc_coreset::kmeans::{kmeans, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nc_coreset::sampler::{sample_fake_class, select_class, select_random, OverlapMode, SamplingRule};
use nc_coreset::toy_model::{self, LinearModel};
use nc_coreset::{EmbeddingTable, Error, Label};
use proptest::prelude::*;

fn build(dim: usize, rows: Vec<(bool, u16, Vec<f32>)>) -> EmbeddingTable {
    let records = rows
        .into_iter()
        .enumerate()
        .map(|(i, (fake, alg, emb))| {
            let label = if fake { Label::Fake } else { Label::Real };
            let alg = if fake { alg.max(1) } else { 0 };
            EmbeddingRecord::new(format!("id{i:04}"), label, alg, emb)
        })
        .collect();
    EmbeddingTable::new(dim, records).unwrap()
}

fn any_finite_f32() -> impl Strategy<Value = f32> {
    any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |v| v.is_finite())
}

/// Tables on a dyadic grid so translation by grid vectors is exact.
fn grid_table(max_rows: usize) -> impl Strategy<Value = EmbeddingTable> {
    (1usize..4).prop_flat_map(move |d| {
        let row = (any::<bool>(), 1u16..4, prop::collection::vec((-64i32..64).prop_map(|v| v as f32 / 4.0), d));
        prop::collection::vec(row, 4..max_rows)
            .prop_filter("both classes", |rows| rows.iter().any(|r| r.0) && rows.iter().any(|r| !r.0))
            .prop_map(move |rows| build(d, rows))
    })
}

fn fake_table(max_rows: usize) -> impl Strategy<Value = EmbeddingTable> {
    (1usize..4).prop_flat_map(move |d| {
        let row = (Just(true), 1u16..4, prop::collection::vec(-20.0f32..20.0, d));
        prop::collection::vec(row, 2..max_rows).prop_map(move |rows| build(d, rows))
    })
}

fn ids(m: &nc_coreset::SelectionManifest) -> BTreeSet<String> {
    m.ids().map(str::to_string).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn nceb_round_trip_is_bit_exact(
        d in 1usize..6,
        rows in prop::collection::vec((any::<bool>(), any::<u16>(), prop::collection::vec(any_finite_f32(), 6)), 0..20),
    ) {
        let rows = rows.into_iter().map(|(f, a, mut e)| { e.truncate(d); (f, a, e) }).collect();
        let table = build(d, rows);
        let bytes = encode_table(&table);
        prop_assert_eq!(&encode_table(&table), &bytes);
        let back = decode_table(&bytes).unwrap();
        for (a, b) in back.records().iter().zip(table.records()) {
            let bits = |r: &EmbeddingRecord| r.embedding.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(back, table);
    }

    #[test]
    fn every_truncation_is_rejected(table in grid_table(8), cut in any::<prop::sample::Index>()) {
        let bytes = encode_table(&table);
        let at = cut.index(bytes.len());
        let err = decode_table(&bytes[..at]).unwrap_err();
        prop_assert!(matches!(
            err,
            Error::BadMagic | Error::TruncatedFile { .. } | Error::DimensionMismatch { .. }
        ), "{err:?}");
    }

    #[test]
    fn flipped_label_byte_is_rejected(table in grid_table(8), byte in 2u8..=255) {
        let mut bytes = encode_table(&table);
        bytes[20] = byte;
        prop_assert!(matches!(decode_table(&bytes), Err(Error::InvariantViolation(_))));
    }

    #[test]
    fn class_mean_ignores_record_order(table in grid_table(30), seed in any::<u64>()) {
        let mut records = table.records().to_vec();
        let mut rng = oracle::rng(seed);
        use rand::seq::SliceRandom;
        records.shuffle(&mut rng);
        let shuffled = EmbeddingTable::new(table.dimension(), records).unwrap();
        for label in Label::ALL {
            let a = class_mean(&table, label).unwrap();
            let b = class_mean(&shuffled, label).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn translation_moves_means_and_keeps_distances(
        table in grid_table(30),
        shift in prop::collection::vec((-40i32..40).prop_map(|v| v as f32 / 4.0), 3),
    ) {
        let d = table.dimension();
        let moved = EmbeddingTable::new(
            d,
            table.records().iter().map(|r| {
                let e = r.embedding.iter().zip(&shift).map(|(v, s)| v + s).collect();
                EmbeddingRecord::new(r.sample_id.clone(), r.label, r.algorithm_id, e)
            }).collect(),
        ).unwrap();
        for label in Label::ALL {
            let mu = class_mean(&table, label).unwrap();
            let mu2 = class_mean(&moved, label).unwrap();
            for j in 0..d {
                prop_assert!((mu2[j] - (mu[j] + shift[j] as f64)).abs() <= 1e-9);
            }
            let a = distance_scores(&table, &mu, label).unwrap();
            let b = distance_scores(&moved, &mu2, label).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.distance - y.distance).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn scaling_scales_distances_and_keeps_order(table in grid_table(30), power in -3i32..4) {
        let s = 2f32.powi(power);
        let scaled = EmbeddingTable::new(
            table.dimension(),
            table.records().iter().map(|r| {
                let e = r.embedding.iter().map(|v| v * s).collect();
                EmbeddingRecord::new(r.sample_id.clone(), r.label, r.algorithm_id, e)
            }).collect(),
        ).unwrap();
        for label in Label::ALL {
            let a = distance_scores(&table, &class_mean(&table, label).unwrap(), label).unwrap();
            let b = distance_scores(&scaled, &class_mean(&scaled, label).unwrap(), label).unwrap();
            let order_a: Vec<_> = a.iter().map(|x| &x.sample_id).collect();
            let order_b: Vec<_> = b.iter().map(|x| &x.sample_id).collect();
            prop_assert_eq!(order_a, order_b);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y.distance - s as f64 * x.distance).abs() <= 1e-9 * y.distance.max(1.0));
            }
        }
    }

    #[test]
    fn ncc_assign_survives_rigid_motion(
        f in prop::collection::vec(-10.0f64..10.0, 2),
        real in prop::collection::vec(-10.0f64..10.0, 2),
        fake in prop::collection::vec(-10.0f64..10.0, 2),
        angle in 0.0f64..std::f64::consts::TAU,
        t in prop::collection::vec(-10.0f64..10.0, 2),
    ) {
        let table = EmbeddingTable::new(2, vec![
            EmbeddingRecord::new("r", Label::Real, 0, real.iter().map(|&v| v as f32).collect()),
            EmbeddingRecord::new("f", Label::Fake, 1, fake.iter().map(|&v| v as f32).collect()),
        ]).unwrap();
        let geom = match geometry(&table) { Ok(g) => g, Err(_) => return Ok(()) };
        let (c, s) = (angle.cos(), angle.sin());
        let mv = |p: &[f64]| vec![c * p[0] - s * p[1] + t[0], s * p[0] + c * p[1] + t[1]];
        let mut moved = geom.clone();
        moved.mu_real = mv(&geom.mu_real);
        moved.mu_fake = mv(&geom.mu_fake);
        let before = ncc_assign(&f, &geom).unwrap();
        let dr = collapse::euclidean(&f, &geom.mu_real);
        let df = collapse::euclidean(&f, &geom.mu_fake);
        prop_assume!((dr - df).abs() > 1e-6);
        prop_assert_eq!(ncc_assign(&mv(&f), &moved).unwrap(), before);
    }

    #[test]
    fn within_class_trace_matches_pairwise_formula(table in grid_table(40)) {
        let g = match geometry(&table) { Ok(g) => g, Err(_) => return Ok(()) };
        // sum_i ||x_i - mu||^2 = (1 / 2n) sum_i sum_j ||x_i - x_j||^2
        let mut total = 0.0;
        for label in Label::ALL {
            let pts: Vec<Vec<f64>> = table.class(label).map(|r| collapse::to_f64(&r.embedding)).collect();
            let mut pair = 0.0;
            for a in &pts {
                for b in &pts {
                    pair += collapse::squared_distance(a, b);
                }
            }
            total += pair / (2.0 * pts.len() as f64);
        }
        let brute = total / table.len() as f64;
        prop_assert!((g.tr_sw - brute).abs() <= 1e-9 * brute.max(1e-300), "{} vs {}", g.tr_sw, brute);
    }

    #[test]
    fn lloyd_cost_never_increases(
        points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 3..60),
        k in 1usize..5,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= points.len());
        let c = kmeans(&points, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        for w in c.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{:?}", c.inertia_history);
        }
        prop_assert_eq!(&c, &kmeans(&points, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap());
    }

    #[test]
    fn point_order_only_relabels(
        points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 3..40),
        k in 1usize..4,
        seed in any::<u64>(),
        shuffle_seed in any::<u64>(),
    ) {
        prop_assume!(k <= points.len());
        let distinct: BTreeSet<Vec<u64>> = points.iter().map(|p| p.iter().map(|v| v.to_bits()).collect()).collect();
        prop_assume!(distinct.len() == points.len());
        let mut perm: Vec<usize> = (0..points.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut oracle::rng(shuffle_seed));
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
        let a = kmeans(&points, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let b = kmeans(&shuffled, k, seed, DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let blocks = |assign: &dyn Fn(usize) -> usize| {
            let mut groups: HashMap<usize, BTreeSet<usize>> = HashMap::new();
            for i in 0..points.len() {
                groups.entry(assign(i)).or_default().insert(i);
            }
            groups.into_values().collect::<BTreeSet<_>>()
        };
        // position j of the shuffled input holds original point perm[j]
        let mut b_of_original = vec![0; points.len()];
        for (j, &i) in perm.iter().enumerate() {
            b_of_original[i] = b.assignments[j];
        }
        prop_assert_eq!(blocks(&|i| a.assignments[i]), blocks(&|i| b_of_original[i]));
        prop_assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn thresholds_select_nested_sets(table in grid_table(40), fake in any::<bool>()) {
        let label = if fake { Label::Fake } else { Label::Real };
        let scores = distance_scores(&table, &class_mean(&table, label).unwrap(), label).unwrap();
        let max = scores.last().unwrap().distance;
        let mut previous = BTreeSet::new();
        for step in 0..20 {
            let t = if step == 19 { max } else { max * step as f64 / 19.0 };
            let m = select_class(&table, label, SamplingRule::Threshold(t)).unwrap();
            for row in m.rows() {
                prop_assert!(row.distance <= t);
            }
            let now = ids(&m);
            prop_assert!(previous.is_subset(&now));
            previous = now;
        }
        let all: BTreeSet<String> = table.class(label).map(|r| r.sample_id.clone()).collect();
        prop_assert_eq!(&previous, &all);
        let frac = select_class(&table, label, SamplingRule::TopFraction(1.0)).unwrap();
        prop_assert_eq!(ids(&frac), all);
        let by_max = select_class(&table, label, SamplingRule::Threshold(max)).unwrap();
        let key = |m: &nc_coreset::SelectionManifest| {
            m.rows().iter().map(|r| (r.sample_id.clone(), r.distance.to_bits())).collect::<Vec<_>>()
        };
        prop_assert_eq!(key(&frac), key(&by_max));
    }

    #[test]
    fn single_cluster_reduces_to_class_selection(table in fake_table(30), p in 0.05f64..=1.0, seed in any::<u64>()) {
        let rule = SamplingRule::TopFraction(p);
        for mode in [OverlapMode::Exclude, OverlapMode::MergedConsensus] {
            let a = sample_fake_class(&table, rule, 1, seed, mode).unwrap();
            let b = select_class(&table, Label::Fake, rule).unwrap();
            prop_assert_eq!(a.rows(), b.rows());
        }
    }

    #[test]
    fn random_selection_repeats_per_seed(table in grid_table(40), seed in any::<u64>()) {
        let n = table.count(Label::Real).min(table.count(Label::Fake));
        let a = select_random(&table, n, seed).unwrap();
        let again = select_random(&table, n, seed).unwrap();
        prop_assert_eq!(a.rows(), again.rows());
        prop_assert_eq!(a.count(Label::Real), n);
        prop_assert_eq!(a.count(Label::Fake), n);
    }

    #[test]
    fn increasing_transforms_keep_metrics(seed in any::<u64>(), n in 2usize..200) {
        let rows = oracle::random_scores(&mut oracle::rng(seed), n);
        let base = oracle::table(&rows);
        let transformed: Vec<_> = rows.iter().map(|&(l, s)| (l, (3.0 * s).exp() - 7.0)).collect();
        let t = oracle::table(&transformed);
        prop_assert_eq!(eer_roc(&base).unwrap().to_bits(), eer_roc(&t).unwrap().to_bits());
        prop_assert_eq!(
            mean_average_precision(&base).unwrap().to_bits(),
            mean_average_precision(&t).unwrap().to_bits()
        );
    }

    #[test]
    fn negating_scores_and_swapping_labels_keeps_eer(seed in any::<u64>(), n in 2usize..200) {
        let rows = oracle::random_scores(&mut oracle::rng(seed), n);
        let mirrored: Vec<_> = rows.iter().map(|&(l, s)| (l.other(), -s)).collect();
        let a = eer_roc(&oracle::table(&rows)).unwrap();
        let b = eer_roc(&oracle::table(&mirrored)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    #[test]
    fn frame_count_formula(n in 512usize..200_000) {
        let clip = AudioClip::new(vec![0.0; n]);
        let power = features::stft_power(&clip).unwrap();
        prop_assert_eq!(power.ncols(), 1 + (n - N_FFT) / HOP_LENGTH);
        prop_assert_eq!(features::frame_count(n), power.ncols());
    }

    #[test]
    fn louder_clips_never_lose_energy(seed in any::<u64>(), s in 1.0001f64..8.0) {
        use rand::Rng;
        let mut rng = oracle::rng(seed);
        let samples: Vec<f64> = (0..4_000).map(|_| rng.random::<f64>() - 0.5).collect();
        let quiet = features::log_mel(&features::stft_power(&AudioClip::new(samples.clone())).unwrap(), 1e-10).unwrap();
        let loud_clip = AudioClip::new(samples.iter().map(|v| v * s).collect());
        let loud = features::log_mel(&features::stft_power(&loud_clip).unwrap(), 1e-10).unwrap();
        for (q, l) in quiet.values.iter().zip(loud.values.iter()) {
            if *q > 1e-10f64.ln() {
                prop_assert!(l >= q);
            }
        }
    }

    #[test]
    fn repeated_clip_shares_leading_frames(seed in any::<u64>(), n in 512usize..3_000) {
        use rand::Rng;
        let mut rng = oracle::rng(seed);
        let samples: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let once = features::stft_power(&AudioClip::new(samples.clone())).unwrap();
        let twice = features::stft_power(&AudioClip::new([samples.clone(), samples].concat())).unwrap();
        for f in 0..once.ncols() {
            prop_assert_eq!(once.column(f), twice.column(f));
        }
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), d in 1usize..8, n in 4usize..60) {
        use rand::Rng;
        let mut rng = oracle::rng(seed);
        let rows = (0..n)
            .map(|i| (i % 2 == 0, 1, (0..d).map(|_| rng.random_range(-3.0f32..3.0)).collect()))
            .collect();
        let table = build(d, rows);
        let model = LinearModel {
            weights: (0..d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: rng.random_range(-1.0..1.0),
            training_log: Vec::new(),
        };
        let err = toy_model::grad_check(&model, &table, toy_model::DEFAULT_EPSILON).unwrap();
        prop_assert!(err < 1e-4, "{err}");
    }
}

#[test]
fn filterbank_shape_rules() {
    let bank = features::mel_filterbank();
    let edges = features::mel_points_hz();
    let mut last_peak = -1.0;
    for m in 0..bank.nrows() {
        let row = bank.row(m);
        assert!(row.iter().all(|&w| w >= 0.0));
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        for k in 0..row.len() {
            let f = features::bin_hz(k);
            if f <= edges[m] || f >= edges[m + 2] {
                assert_eq!(row[k], 0.0, "band {m} bin {k}");
            }
            if k > 0 && k <= peak {
                assert!(row[k] >= row[k - 1], "band {m} rises to its peak");
            }
            if k > peak {
                assert!(row[k] <= row[k - 1], "band {m} falls after its peak");
            }
        }
        assert!(edges[m + 1] > last_peak);
        last_peak = edges[m + 1];
    }
}

#[test]
fn default_learning_rate_descends_on_default_generator() {
    let table = toy_model::generate_synthetic(&toy_model::SyntheticConfig::default()).unwrap();
    let lr = toy_model::safe_learning_rate(&table);
    let model = toy_model::train_linear(&table, 100, lr).unwrap();
    assert_eq!(model.training_log.len(), 101);
    for w in model.training_log.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn perfect_scores_keep_everything() {
    let table = build(
        1,
        vec![(false, 0, vec![-2.0]), (false, 0, vec![-1.0]), (true, 1, vec![1.0]), (true, 2, vec![3.0])],
    );
    let model = LinearModel {
        weights: vec![10.0],
        bias: 0.0,
        training_log: Vec::new(),
    };
    let scores = toy_model::predict_scores(&model, &table).unwrap();
    let kept = collapse::samples_of_interest(&table, &scores, collapse::DEFAULT_DECISION_THRESHOLD).unwrap();
    assert_eq!(kept, table);
}

fn cluster_check(table: &EmbeddingTable, rule: SamplingRule, mode: OverlapMode, seed: u64) {
    use nc_coreset::sampler::sample_fake_class_detailed;
    let (manifest, sel) = sample_fake_class_detailed(table, rule, 3, seed, mode).unwrap();
    if sel.clustering.k == 1 {
        return;
    }
    let points: Vec<(String, Vec<f64>)> = table
        .class(Label::Fake)
        .map(|r| (r.sample_id.clone(), collapse::to_f64(&r.embedding)))
        .collect();
    let (threshold, keep): (Option<f64>, Box<dyn Fn(usize) -> usize>) = match rule {
        SamplingRule::Threshold(t) => (Some(t), Box::new(|n| n)),
        SamplingRule::TopFraction(p) => (None, Box::new(move |n| ((p * n as f64).ceil() as usize).min(n))),
        SamplingRule::TopCount(m) => (None, Box::new(move |n| m.min(n))),
    };
    let expected = oracle::cluster_selection_reference(
        &points,
        &sel.clustering.assignments,
        &|a, b| sel.overlap.overlaps(a, b),
        sel.clustering.k,
        &*keep,
        threshold,
        mode == OverlapMode::Exclude,
    );
    assert_eq!(ids(&manifest), expected, "{rule:?} {mode:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cluster_selection_matches_reference(
        centres in prop::collection::vec((-6.0f32..6.0, -6.0f32..6.0), 2..4),
        jitter in prop::collection::vec((-2.0f32..2.0, -2.0f32..2.0), 12..40),
        seed in any::<u64>(),
        t in 0.2f64..3.0,
        p in 0.1f64..=1.0,
        m in 1usize..10,
    ) {
        let rows = jitter
            .iter()
            .enumerate()
            .map(|(i, &(dx, dy))| {
                let (cx, cy) = centres[i % centres.len()];
                (true, (i % centres.len()) as u16 + 1, vec![cx + dx, cy + dy])
            })
            .collect();
        let table = build(2, rows);
        for rule in [SamplingRule::Threshold(t), SamplingRule::TopFraction(p), SamplingRule::TopCount(m)] {
            for mode in [OverlapMode::Exclude, OverlapMode::MergedConsensus] {
                cluster_check(&table, rule, mode, seed);
            }
        }
    }
}
