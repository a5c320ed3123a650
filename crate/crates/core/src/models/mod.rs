//! Fusion architectures, unimodal baselines, a linear late-fusion combiner
//! and the Cox training loop.

mod arch;
mod checkpoint;
mod model;
mod spec;
mod train;

pub use arch::{build_graph, parameter_count, ArchGraph, INPUT_A, INPUT_B};
pub use checkpoint::{load_checkpoint, save_checkpoint, MANIFEST_FILE, WEIGHTS_FILE};
pub use model::{Hyperparams, TrainedModel};
pub use spec::{ArchitectureKind, ArchitectureSpec, Preset};
pub use train::train;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{rng, Mode};
    use crate::Matrix;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::stream(seed, &[99]);
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.5..1.5)).collect()).unwrap()
    }

    fn desk(kind: ArchitectureKind) -> ArchitectureSpec {
        ArchitectureSpec::preset(kind, Preset::Desk, [8, 8])
    }

    #[test]
    fn paper_scale_parameter_counts() {
        let early = ArchitectureSpec::paper(ArchitectureKind::EarlyMlp);
        assert_eq!(early.hidden, vec![2048, 200]);
        let expected = 4096 * 2048 + 2048 + 2048 * 200 + 200 + 200 + 1;
        assert_eq!(expected, 8_800_657);
        assert_eq!(parameter_count(&early).unwrap(), expected);

        let bil = ArchitectureSpec::paper(ArchitectureKind::Bilinear);
        let g = build_graph(&bil).unwrap().graph;
        let core: usize = g
            .params()
            .iter()
            .filter(|d| d.name.starts_with("bilinear."))
            .map(|d| d.len())
            .sum();
        assert_eq!(core, 262_144);
    }

    #[test]
    fn same_seed_same_initial_parameters() {
        for kind in ArchitectureKind::ALL {
            let a = TrainedModel::build(&desk(kind), 5).unwrap().flat_params();
            let b = TrainedModel::build(&desk(kind), 5).unwrap().flat_params();
            let c = TrainedModel::build(&desk(kind), 6).unwrap().flat_params();
            assert_eq!(a, b, "{kind}");
            assert_ne!(a, c, "{kind}");
        }
    }

    #[test]
    fn invalid_specs_and_inputs_are_rejected() {
        let mut s = desk(ArchitectureKind::EarlyMlp);
        s.dims = [0, 8];
        assert!(TrainedModel::build(&s, 1).is_err());
        let mut s = desk(ArchitectureKind::CrossAttention);
        s.dims = [10, 8];
        assert!(TrainedModel::build(&s, 1).is_err());
        let m = TrainedModel::build(&desk(ArchitectureKind::Gated), 1).unwrap();
        assert!(m.predict(&random(3, 7, 1), &random(3, 8, 2)).is_err());
        assert!(m.predict(&random(3, 8, 1), &random(4, 8, 2)).is_err());
    }

    #[test]
    fn predictions_do_not_depend_on_batch_composition() {
        for kind in ArchitectureKind::ALL {
            let m = TrainedModel::build(&desk(kind), 3).unwrap();
            let (a, b) = (random(6, 8, 1), random(6, 8, 2));
            let all = m.predict(&a, &b).unwrap();
            let one = m.predict(&a.select_rows(&[4]), &b.select_rows(&[4])).unwrap();
            assert_eq!(all[4], one[0], "{kind}");
        }
    }

    #[test]
    fn late_linear_output_is_weighted_sum_of_branches() {
        let mut m = TrainedModel::build(&desk(ArchitectureKind::LateLinear), 11).unwrap();
        m.set_param("combine.a", Matrix::filled(1, 1, 0.7)).unwrap();
        m.set_param("combine.b", Matrix::filled(1, 1, -1.3)).unwrap();
        m.set_param("combine.bias", Matrix::filled(1, 1, 0.2)).unwrap();
        let (a, b) = (random(5, 8, 1), random(5, 8, 2));
        let probes = m.inspect(&a, &b).unwrap();
        let out = m.predict(&a, &b).unwrap();
        for i in 0..5 {
            let expected = 0.7 * probes["risk_a"].get(i, 0) + -1.3 * probes["risk_b"].get(i, 0) + 0.2;
            assert_eq!(out[i], expected);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn late_linear_is_additive(seed in any::<u64>(), s in 0u64..1000) {
            let m = TrainedModel::build(&desk(ArchitectureKind::LateLinear), seed).unwrap();
            let (a, b) = (random(4, 8, s), random(4, 8, s + 1));
            let (a0, b0) = (random(4, 8, s + 2), random(4, 8, s + 3));
            let ab = m.predict(&a, &b).unwrap();
            let a_b0 = m.predict(&a, &b0).unwrap();
            let a0_b = m.predict(&a0, &b).unwrap();
            let a0_b0 = m.predict(&a0, &b0).unwrap();
            for i in 0..4 {
                let d = ab[i] - a_b0[i] - a0_b[i] + a0_b0[i];
                prop_assert!(d.abs() < 1e-12, "{}", d);
            }
        }

        #[test]
        fn gated_fusion_is_channelwise_convex(seed in any::<u64>(), s in 0u64..1000) {
            let m = TrainedModel::build(&desk(ArchitectureKind::Gated), seed).unwrap();
            let p = m.inspect(&random(4, 8, s), &random(4, 8, s + 1)).unwrap();
            let (alpha, f, g, z) = (&p["alpha"], &p["branch_a"], &p["branch_b"], &p["fused"]);
            for (k, &zk) in z.as_slice().iter().enumerate() {
                let (fk, gk, ak) = (f.as_slice()[k], g.as_slice()[k], alpha.as_slice()[k]);
                prop_assert!(ak > 0.0 && ak < 1.0);
                prop_assert!(zk >= fk.min(gk) - 1e-12 && zk <= fk.max(gk) + 1e-12);
            }
        }
    }

    #[test]
    fn saturated_gate_passes_only_modality_a_branch() {
        let spec = desk(ArchitectureKind::Gated);
        let mut m = TrainedModel::build(&spec, 4).unwrap();
        let h = spec.hidden[0];
        m.set_param("gate.weight", Matrix::zeros(16, h)).unwrap();
        m.set_param("gate.bias", Matrix::filled(1, h, 50.0)).unwrap();
        let (a, b) = (random(6, 8, 1), random(6, 8, 2));
        let p = m.inspect(&a, &b).unwrap();
        let decls = m.param_decls();
        let find = |name: &str| &m.params()[decls.iter().position(|d| d.name == name).unwrap()];
        let w = find("head.out.weight");
        let c = find("head.out.bias").get(0, 0);
        let out = m.predict(&a, &b).unwrap();
        for i in 0..6 {
            let head_f: f64 = (0..h).map(|k| p["branch_a"].get(i, k) * w.get(k, 0)).sum::<f64>() + c;
            assert!((out[i] - head_f).abs() < 1e-12);
        }
        // Changing B alone leaves the output untouched.
        let out2 = m.predict(&a, &random(6, 8, 77)).unwrap();
        for i in 0..6 {
            assert!((out[i] - out2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_attention_attends_uniformly_over_identical_tokens() {
        let mut spec = ArchitectureSpec::preset(ArchitectureKind::CrossAttention, Preset::Desk, [4, 4]);
        spec.tokens = 2;
        spec.attention_dim = 2;
        let m = TrainedModel::build(&spec, 8).unwrap();
        // B has two identical tokens (1.0, -0.5); A has distinct tokens.
        let a = Matrix::from_rows(&[vec![0.3, 1.2, -0.7, 0.4]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, -0.5, 1.0, -0.5]]).unwrap();
        let p = m.inspect(&a, &b).unwrap();
        for &w in p["attention_a_to_b"].as_slice() {
            assert!((w - 0.5).abs() < 1e-15);
        }
        let decls = m.param_decls();
        let wv = &m.params()[decls.iter().position(|d| d.name == "attn_a_to_b.value").unwrap()];
        let expected = Matrix::from_rows(&[vec![1.0, -0.5]]).unwrap().matmul(wv).unwrap();
        assert!(p["pooled_a_to_b"].max_abs_diff(&expected) < 1e-14);
    }

    /// Central differences of `Σ w_i · out_i` against the graph gradient.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        for kind in ArchitectureKind::ALL {
            let mut spec = desk(kind);
            spec.dropout = 0.0;
            let m = TrainedModel::build(&spec, 21).unwrap();
            let (a, b) = (random(5, 8, 3), random(5, 8, 4));
            let w = random(5, 1, 9);
            let mut g = m.graph().fresh();
            let inputs = [(INPUT_A, &a), (INPUT_B, &b)];
            g.forward(&inputs, m.params(), Mode::Eval).unwrap();
            let grads = g.backward(&w).unwrap();
            let objective = |params: &[Matrix]| -> f64 {
                let mut g = m.graph().fresh();
                let out = g.forward(&inputs, params, Mode::Eval).unwrap();
                out.as_slice().iter().zip(w.as_slice()).map(|(o, w)| o * w).sum()
            };
            let mut params = m.params().to_vec();
            let mut r = rng::stream(1, &[kind as u64]);
            for (pi, grad) in grads.iter().enumerate() {
                for _ in 0..6 {
                    let k = r.random_range(0..grad.len());
                    let orig = params[pi].as_slice()[k];
                    let h = 1e-6 * orig.abs().max(1.0);
                    params[pi].as_mut_slice()[k] = orig + h;
                    let up = objective(&params);
                    params[pi].as_mut_slice()[k] = orig - h;
                    let down = objective(&params);
                    params[pi].as_mut_slice()[k] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = grad.as_slice()[k];
                    let err = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-3);
                    assert!(err < 1e-5, "{kind} {} [{k}]: fd {fd} vs {an}", m.param_decls()[pi].name);
                }
            }
        }
    }

    #[test]
    fn flat_round_trip_and_checkpoint() {
        let m = TrainedModel::build(&desk(ArchitectureKind::Bilinear), 2).unwrap();
        let flat = m.flat_params();
        assert_eq!(flat.len(), m.parameter_count());
        let n = TrainedModel::from_flat(&m.spec, 0, &flat).unwrap();
        assert_eq!(n.flat_params(), flat);
        assert!(TrainedModel::from_flat(&m.spec, 0, &flat[1..]).is_err());

        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&m, dir.path()).unwrap();
        let loaded = load_checkpoint(dir.path()).unwrap();
        assert_eq!(loaded.flat_params(), flat);
        assert_eq!(loaded.spec, m.spec);
        let bytes = std::fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
        assert_eq!(&bytes[..8], &flat[0].to_le_bytes());

        std::fs::write(dir.path().join(WEIGHTS_FILE), &bytes[..bytes.len() - 8]).unwrap();
        assert!(load_checkpoint(dir.path()).is_err());
    }
}
