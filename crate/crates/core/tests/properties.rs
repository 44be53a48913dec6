//! Randomized invariant checks over the numerical core: softmax geometry,
//! cell reductions, window enumeration, truncation arithmetic and
//! distribution validity of full forward passes.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use tcra_core::cells::{lstm_step, tricoupled_step, zero_state, PeepholeMode};
use tcra_core::eval::{truncate_len, window_starts};
use tcra_core::model::{Arch, LossMode, Model, ModelConfig};
use tcra_core::sample::{FeatureMap, Window};
use tcra_core::{ParamSet, Tape, Tensor};

fn rand_tensor(rng: &mut ChaCha12Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    Tensor::new(shape, data).unwrap()
}

fn bits(t: &Tensor<f64>) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #[test]
    fn softmax_outputs_are_a_distribution(values in prop::collection::vec(-50.0..50.0f64, 1..16)) {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::vector(values));
        let y = tape.softmax(x).unwrap();
        let out = tape.value(y);
        let sum: f64 = out.data().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(out.data().iter().all(|&p| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn softmax_is_permutation_equivariant(
        values in prop::collection::vec(-30.0..30.0f64, 2..12),
        seed in any::<u64>(),
    ) {
        let n = values.len();
        let mut perm: Vec<usize> = (0..n).collect();
        // Seeded Fisher-Yates so the permutation is a pure function of the
        // proptest inputs.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }

        let softmax = |v: Vec<f64>| -> Vec<f64> {
            let mut tape: Tape<f64> = Tape::new();
            let x = tape.constant(Tensor::vector(v));
            let y = tape.softmax(x).unwrap();
            tape.value(y).data().to_vec()
        };
        let base = softmax(values.clone());
        let permuted_in: Vec<f64> = perm.iter().map(|&i| values[i]).collect();
        let permuted_out = softmax(permuted_in);
        for (k, &i) in perm.iter().enumerate() {
            // The normalizing sum accumulates in permuted order, so the
            // denominators can differ in the last bit; anything beyond
            // ulp-level disagreement is a real equivariance failure.
            prop_assert!(
                (permuted_out[k] - base[i]).abs() <= 1e-14,
                "{} vs {}", permuted_out[k], base[i]
            );
        }
    }

    /// The gradient of -ln(softmax(z)[k]) with respect to the logits is
    /// softmax(z) - onehot(k).
    // Logits are kept in ±5 so every class probability stays well above
    // the 1e-12 loss floor; the floor scales the true gradient by
    // p/(p+1e-12), which for tiny p would dominate the tolerance.
    #[test]
    fn nll_gradient_through_softmax_is_probs_minus_onehot(
        logits in prop::collection::vec(-5.0..5.0f64, 2..8),
        class_pick in any::<u32>(),
    ) {
        let n = logits.len();
        let class = class_pick as usize % n;
        let mut params: ParamSet<f64> = ParamSet::new();
        let z = params.register("z", Tensor::vector(logits)).unwrap();
        let mut tape = Tape::new();
        let zv = tape.param(&params, z);
        let probs = tape.softmax(zv).unwrap();
        let probs_out = tape.value(probs).data().to_vec();
        let loss = tape.nll(probs, class).unwrap();
        tape.backward(loss, &mut params).unwrap();
        for (i, &g) in params.grad(z).data().iter().enumerate() {
            let expected = probs_out[i] - if i == class { 1.0 } else { 0.0 };
            prop_assert!((g - expected).abs() <= 1e-6, "component {}: {} vs {}", i, g, expected);
        }
    }

    #[test]
    fn window_enumeration_matches_brute_force(
        frames in 0usize..200,
        window in 1usize..30,
        stride in 1usize..20,
    ) {
        let brute: Vec<usize> = (0..frames)
            .filter(|s| s % stride == 0 && s + window <= frames)
            .collect();
        prop_assert_eq!(window_starts(frames, window, stride), brute);
    }

    #[test]
    fn truncation_is_monotone_and_bounded(
        frames in 1usize..300,
        a in 0.001..1.0f64,
        b in 0.001..1.0f64,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(truncate_len(frames, lo) <= truncate_len(frames, hi));
        let len = truncate_len(frames, lo);
        prop_assert!((1..=frames).contains(&len));
        prop_assert_eq!(truncate_len(frames, 1.0), frames);
    }

    /// Zeroing every coupling matrix turns a tri-coupled step into two
    /// independent vanilla steps, bit for bit: the gate sums skip nothing,
    /// they just add exact zeros.
    #[test]
    fn zeroed_couplings_reduce_to_vanilla_cells(seed in any::<u64>()) {
        let hidden = 3;
        let input = 2;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut shared = ParamSet::<f64>::new();

        // One vanilla cell and one tri-coupled stream sharing identical
        // weight values, the latter with zeroed partner/global couplings.
        let gates = |set: &mut ParamSet<f64>, rng: &mut ChaCha12Rng, p: &str, k: &str, r: usize, c: usize| {
            tcra_core::cells::GateMats {
                i: set.register(format!("{p}.{k}_i"), rand_tensor(rng, vec![r, c])).unwrap(),
                f: set.register(format!("{p}.{k}_f"), rand_tensor(rng, vec![r, c])).unwrap(),
                c: set.register(format!("{p}.{k}_c"), rand_tensor(rng, vec![r, c])).unwrap(),
                o: set.register(format!("{p}.{k}_o"), rand_tensor(rng, vec![r, c])).unwrap(),
            }
        };
        let zero_gates = |set: &mut ParamSet<f64>, p: &str, k: &str, r: usize, c: usize| {
            tcra_core::cells::GateMats {
                i: set.register(format!("{p}.{k}_i"), Tensor::zeros(vec![r, c])).unwrap(),
                f: set.register(format!("{p}.{k}_f"), Tensor::zeros(vec![r, c])).unwrap(),
                c: set.register(format!("{p}.{k}_c"), Tensor::zeros(vec![r, c])).unwrap(),
                o: set.register(format!("{p}.{k}_o"), Tensor::zeros(vec![r, c])).unwrap(),
            }
        };

        let lstm = tcra_core::cells::LstmIds {
            w: gates(&mut shared, &mut rng, "v", "w", hidden, input),
            u: gates(&mut shared, &mut rng, "v", "u", hidden, hidden),
            v: tcra_core::cells::Peepholes {
                i: shared.register("v.v_i", rand_tensor(&mut rng, vec![hidden, hidden])).unwrap(),
                f: shared.register("v.v_f", rand_tensor(&mut rng, vec![hidden, hidden])).unwrap(),
                o: shared.register("v.v_o", rand_tensor(&mut rng, vec![hidden, hidden])).unwrap(),
            },
            b: tcra_core::cells::GateMats {
                i: shared.register("v.b_i", rand_tensor(&mut rng, vec![hidden])).unwrap(),
                f: shared.register("v.b_f", rand_tensor(&mut rng, vec![hidden])).unwrap(),
                c: shared.register("v.b_c", rand_tensor(&mut rng, vec![hidden])).unwrap(),
                o: shared.register("v.b_o", rand_tensor(&mut rng, vec![hidden])).unwrap(),
            },
        };
        // Rebuild the same values under the coupled naming by copying.
        let copy = |set: &mut ParamSet<f64>, from: &str, to: &str| {
            let src = set.id_of(from).unwrap();
            let value = set.value(src).clone();
            set.register(to.to_string(), value).unwrap()
        };
        let coupled = tcra_core::cells::CoupledIds {
            w: tcra_core::cells::GateMats {
                i: copy(&mut shared, "v.w_i", "c.w_i"),
                f: copy(&mut shared, "v.w_f", "c.w_f"),
                c: copy(&mut shared, "v.w_c", "c.w_c"),
                o: copy(&mut shared, "v.w_o", "c.w_o"),
            },
            u_own: tcra_core::cells::GateMats {
                i: copy(&mut shared, "v.u_i", "c.u_i"),
                f: copy(&mut shared, "v.u_f", "c.u_f"),
                c: copy(&mut shared, "v.u_c", "c.u_c"),
                o: copy(&mut shared, "v.u_o", "c.u_o"),
            },
            u_partner: zero_gates(&mut shared, "c", "up", hidden, hidden),
            u_global: Some(zero_gates(&mut shared, "c", "ug", hidden, hidden)),
            v: tcra_core::cells::Peepholes {
                i: copy(&mut shared, "v.v_i", "c.v_i"),
                f: copy(&mut shared, "v.v_f", "c.v_f"),
                o: copy(&mut shared, "v.v_o", "c.v_o"),
            },
            b: tcra_core::cells::GateMats {
                i: copy(&mut shared, "v.b_i", "c.b_i"),
                f: copy(&mut shared, "v.b_f", "c.b_f"),
                c: copy(&mut shared, "v.b_c", "c.b_c"),
                o: copy(&mut shared, "v.b_o", "c.b_o"),
            },
        };

        let mut tape = Tape::new();
        let x1 = tape.constant(rand_tensor(&mut rng, vec![input]));
        let x2 = tape.constant(rand_tensor(&mut rng, vec![input]));
        let h_g = tape.constant(rand_tensor(&mut rng, vec![hidden]));
        let mut ref1 = zero_state(&mut tape, hidden);
        let mut ref2 = zero_state(&mut tape, hidden);
        let mut tri1 = zero_state(&mut tape, hidden);
        let mut tri2 = zero_state(&mut tape, hidden);
        for _ in 0..3 {
            ref1 = lstm_step(&mut tape, &shared, &lstm, PeepholeMode::Full, x1, ref1).unwrap();
            ref2 = lstm_step(&mut tape, &shared, &lstm, PeepholeMode::Full, x2, ref2).unwrap();
            (tri1, tri2) = tricoupled_step(
                &mut tape, &shared, &coupled, &coupled, PeepholeMode::Full,
                x1, x2, tri1, tri2, h_g,
            ).unwrap();
            prop_assert_eq!(bits(tape.value(tri1.h)), bits(tape.value(ref1.h)));
            prop_assert_eq!(bits(tape.value(tri2.h)), bits(tape.value(ref2.h)));
            prop_assert_eq!(bits(tape.value(tri1.c)), bits(tape.value(ref1.c)));
            // Hidden states stay inside the tanh image.
            prop_assert!(tape.value(tri1.h).data().iter().all(|h| h.abs() < 1.0));
        }
    }
}

fn tiny_config(arch: Arch) -> ModelConfig {
    ModelConfig {
        arch,
        hidden: 3,
        num_classes: 4,
        channels: 2,
        side: 2,
        dropout_rate: 0.0,
        loss_mode: LossMode::LastStep,
        peephole: PeepholeMode::Full,
    }
}

fn window_from_seed(seed: u64, len: usize) -> Window<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut stream = || -> Vec<FeatureMap<f64>> {
        (0..len)
            .map(|_| FeatureMap::new(2, 2, rand_tensor(&mut rng, vec![4, 2])).unwrap())
            .collect()
    };
    Window {
        subject1: stream(),
        subject2: stream(),
        global: stream(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn every_arch_outputs_valid_distributions(
        arch_pick in 0usize..5,
        seed in any::<u64>(),
        len in 1usize..6,
    ) {
        let arch = Arch::ALL[arch_pick];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let model: Model<f64> = Model::new(tiny_config(arch), &mut rng).unwrap();
        let window = window_from_seed(seed.wrapping_add(1), len);
        let pred = model.predict(&window).unwrap();
        let sum: f64 = pred.probs.data().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6, "{:?}: sum {}", arch, sum);
        prop_assert!(pred.probs.data().iter().all(|&p| p > 0.0));
    }

    /// Adding the same constant to every head bias shifts all logits
    /// equally, which softmax cancels: the predicted class is unchanged.
    #[test]
    fn argmax_is_invariant_under_uniform_bias_shift(
        seed in any::<u64>(),
        shift in -3.0..3.0f64,
    ) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut model: Model<f64> = Model::new(tiny_config(Arch::Coupled), &mut rng).unwrap();
        let window = window_from_seed(seed.wrapping_add(2), 4);
        let before = model.predict(&window).unwrap().probs;
        let head_b = model.params().id_of("head.b").unwrap();
        for v in model.params_mut().value_mut(head_b).data_mut() {
            *v += shift;
        }
        let after = model.predict(&window).unwrap().probs;
        prop_assert_eq!(
            tcra_core::eval::argmax_lowest(before.data()),
            tcra_core::eval::argmax_lowest(after.data())
        );
    }
}
