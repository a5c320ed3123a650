//! Graph construction for each fusion architecture.
//!
//! Every graph reads two inputs, `a` (n × d_a) and `b` (n × d_b), and emits an
//! `n × 1` log-risk. Rows never interact, so a patient's output does not
//! depend on which other patients share the batch.

use std::collections::BTreeMap;

use super::spec::{ArchitectureKind, ArchitectureSpec};
use crate::error::Result;
use crate::numcore::{Init, NodeId};
use crate::{Graph, GraphBuilder};

pub const INPUT_A: &str = "a";
pub const INPUT_B: &str = "b";

/// A built graph plus named intermediate nodes for inspection.
#[derive(Clone, Debug)]
pub struct ArchGraph {
    pub graph: Graph,
    pub probes: BTreeMap<String, NodeId>,
}

struct Builder {
    g: GraphBuilder,
    probes: BTreeMap<String, NodeId>,
}

impl Builder {
    fn probe(&mut self, name: &str, node: NodeId) -> NodeId {
        self.probes.insert(name.to_string(), node);
        node
    }

    /// Hidden ReLU layers with dropout, then a linear layer to one output.
    fn mlp(&mut self, mut x: NodeId, prefix: &str, fan_in: usize, hidden: &[usize], dropout: f64) -> NodeId {
        let mut width = fan_in;
        for (l, &h) in hidden.iter().enumerate() {
            let z = self.g.linear(x, &format!("{prefix}.fc{l}"), width, h, Init::KaimingUniform);
            let r = self.g.relu(z);
            x = self.g.dropout(r, dropout);
            width = h;
        }
        self.g.linear(x, &format!("{prefix}.out"), width, 1, Init::XavierUniform)
    }

    /// One direction of single-head token attention, pooled over query tokens.
    fn attend(&mut self, queries: NodeId, keys: NodeId, spec: &ArchitectureSpec, q_dim: usize, kv_dim: usize, tag: &str) -> NodeId {
        let t = spec.tokens;
        let d = spec.attention_dim;
        let wq = self.g.param(&format!("attn_{tag}.query"), q_dim, d, Init::XavierUniform);
        let wk = self.g.param(&format!("attn_{tag}.key"), kv_dim, d, Init::XavierUniform);
        let wv = self.g.param(&format!("attn_{tag}.value"), kv_dim, d, Init::XavierUniform);
        let q = self.g.matmul(queries, wq);
        let k = self.g.matmul(keys, wk);
        let v = self.g.matmul(keys, wv);
        let scores = self.g.group_matmul_nt(q, k, t, t);
        let scaled = self.g.scale(scores, 1.0 / (d as f64).sqrt());
        let probs = self.g.softmax_rows(scaled);
        self.probe(&format!("attention_{tag}"), probs);
        let out = self.g.group_matmul(probs, v, t, t);
        let pooled = self.g.group_mean(out, t);
        self.probe(&format!("pooled_{tag}"), pooled)
    }
}

pub fn build_graph(spec: &ArchitectureSpec) -> Result<ArchGraph> {
    spec.validate()?;
    let mut b = Builder {
        g: GraphBuilder::new(),
        probes: BTreeMap::new(),
    };
    let a = b.g.input(INPUT_A);
    let x_b = b.g.input(INPUT_B);
    let [da, db] = spec.dims;
    let p = spec.dropout;

    let out = match spec.kind {
        ArchitectureKind::EarlyMlp => {
            let x = b.g.concat(a, x_b);
            b.mlp(x, "mlp", da + db, &spec.hidden, p)
        }
        ArchitectureKind::UnimodalA => b.mlp(a, "mlp", da, &spec.hidden, p),
        ArchitectureKind::UnimodalB => b.mlp(x_b, "mlp", db, &spec.hidden, p),
        ArchitectureKind::LateLinear => {
            let ha = b.mlp(a, "branch_a", da, &spec.hidden, p);
            let hb = b.mlp(x_b, "branch_b", db, &spec.hidden, p);
            b.probe("risk_a", ha);
            b.probe("risk_b", hb);
            let wa = b.g.param("combine.a", 1, 1, Init::Constant(1.0));
            let wb = b.g.param("combine.b", 1, 1, Init::Constant(1.0));
            let c = b.g.param("combine.bias", 1, 1, Init::Constant(0.0));
            let sa = b.g.matmul(ha, wa);
            let sb = b.g.matmul(hb, wb);
            let s = b.g.add(sa, sb);
            b.g.add_row_bias(s, c)
        }
        ArchitectureKind::Bilinear => {
            let w1 = b.g.param("bilinear.w1", da, spec.rank, Init::XavierUniform);
            let w2 = b.g.param("bilinear.w2", db, spec.rank, Init::XavierUniform);
            let pa = b.g.matmul(a, w1);
            let pb = b.g.matmul(x_b, w2);
            let z = b.g.mul(pa, pb);
            b.probe("fused", z);
            b.mlp(z, "head", spec.rank, &spec.hidden, p)
        }
        ArchitectureKind::Gated => {
            let h = spec.hidden[0];
            let both = b.g.concat(a, x_b);
            let pre = b.g.linear(both, "gate", da + db, h, Init::XavierUniform);
            let alpha = b.g.sigmoid(pre);
            let fa = b.g.linear(a, "branch_a", da, h, Init::KaimingUniform);
            let f = b.g.relu(fa);
            let gb = b.g.linear(x_b, "branch_b", db, h, Init::KaimingUniform);
            let g = b.g.relu(gb);
            // z = α ⊙ f + (1 − α) ⊙ g = g + α ⊙ (f − g)
            let neg_g = b.g.scale(g, -1.0);
            let diff = b.g.add(f, neg_g);
            let gated = b.g.mul(alpha, diff);
            let z = b.g.add(g, gated);
            b.probe("alpha", alpha);
            b.probe("branch_a", f);
            b.probe("branch_b", g);
            b.probe("fused", z);
            let z = b.g.dropout(z, p);
            b.g.linear(z, "head.out", h, 1, Init::XavierUniform)
        }
        ArchitectureKind::CrossAttention => {
            let ta = b.g.reshape(a, da / spec.tokens);
            let tb = b.g.reshape(x_b, db / spec.tokens);
            let a_to_b = b.attend(ta, tb, spec, da / spec.tokens, db / spec.tokens, "a_to_b");
            let b_to_a = b.attend(tb, ta, spec, db / spec.tokens, da / spec.tokens, "b_to_a");
            let h = b.g.concat(a_to_b, b_to_a);
            b.mlp(h, "head", 2 * spec.attention_dim, &spec.hidden, p)
        }
    };
    b.probe("output", out);
    Ok(ArchGraph {
        graph: b.g.finish(out),
        probes: b.probes,
    })
}

/// Number of trainable parameters implied by `spec`.
pub fn parameter_count(spec: &ArchitectureSpec) -> Result<usize> {
    Ok(build_graph(spec)?.graph.parameter_count())
}
