//! Static computation graphs with reverse-mode differentiation.
//!
//! A graph is declared once with [`GraphBuilder`] and evaluated many times.
//! Nodes are appended in topological order, so the forward pass is a single
//! sweep over the node list and the backward pass is the same sweep in
//! reverse. Parameters are declared on the builder and supplied by the caller
//! at every forward call; [`Graph::backward`] returns one gradient per
//! parameter in declaration order.

use std::sync::Arc;

use rand::Rng;

use super::matrix::matmul_into;
use super::rng::StreamRng;
use super::{Matrix, Scalar};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Parameter initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, for layers followed by ReLU.
    KaimingUniform,
    /// `U(-sqrt(6/(fan_in+fan_out)), ...)`.
    XavierUniform,
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct ParamDecl {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl ParamDecl {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn initialise<T: Scalar>(&self, rng: &mut StreamRng) -> Matrix<T> {
        let bound = match self.init {
            Init::KaimingUniform => (6.0 / self.rows as f64).sqrt(),
            Init::XavierUniform => (6.0 / (self.rows + self.cols) as f64).sqrt(),
            Init::Constant(c) => return Matrix::filled(self.rows, self.cols, T::lit(c)),
        };
        let data = (0..self.len())
            .map(|_| T::lit(rng.random_range(-bound..bound)))
            .collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("declared shape")
    }
}

#[derive(Clone, Debug)]
pub enum Op<T> {
    Input(String),
    Param(usize),
    Const(Matrix<T>),
    MatMul(NodeId, NodeId),
    /// Same-shape addition.
    Add(NodeId, NodeId),
    /// `(n × c) + (1 × c)` broadcast over rows; the only broadcast supported.
    AddRowBias(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// Column concatenation.
    Concat(NodeId, NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    SoftmaxRows(NodeId),
    /// Inverted dropout; identity in evaluation mode.
    Dropout { input: NodeId, rate: f64 },
    /// Mean over consecutive blocks of `group` rows.
    GroupMean { input: NodeId, group: usize },
    Scale(NodeId, T),
    /// Row-major reinterpretation with a fixed column count.
    Reshape { input: NodeId, cols: usize },
    /// Blockwise `A_k · B_kᵀ` for row blocks of sizes `group_a` and `group_b`.
    GroupMatMulNT {
        a: NodeId,
        b: NodeId,
        group_a: usize,
        group_b: usize,
    },
    /// Blockwise `A_k · B_k`; `A` has `group_b` columns.
    GroupMatMul {
        a: NodeId,
        b: NodeId,
        group_a: usize,
        group_b: usize,
    },
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Mul(..) => "mul",
            Op::Concat(..) => "concat",
            Op::Relu(_) => "relu",
            Op::Sigmoid(_) => "sigmoid",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Dropout { .. } => "dropout",
            Op::GroupMean { .. } => "group_mean",
            Op::Scale(..) => "scale",
            Op::Reshape { .. } => "reshape",
            Op::GroupMatMulNT { .. } => "group_matmul_nt",
            Op::GroupMatMul { .. } => "group_matmul",
        }
    }

    fn operands(&self) -> Vec<NodeId> {
        match *self {
            Op::Input(_) | Op::Param(_) | Op::Const(_) => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRowBias(a, b)
            | Op::Mul(a, b)
            | Op::Concat(a, b)
            | Op::GroupMatMulNT { a, b, .. }
            | Op::GroupMatMul { a, b, .. } => vec![a, b],
            Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::SoftmaxRows(a)
            | Op::Scale(a, _)
            | Op::Dropout { input: a, .. }
            | Op::GroupMean { input: a, .. }
            | Op::Reshape { input: a, .. } => vec![a],
        }
    }
}

#[derive(Debug)]
struct GraphDef<T> {
    nodes: Vec<Op<T>>,
    params: Vec<ParamDecl>,
    output: NodeId,
}

/// Declares nodes in topological order.
#[derive(Debug)]
pub struct GraphBuilder<T> {
    nodes: Vec<Op<T>>,
    params: Vec<ParamDecl>,
}

impl<T: Scalar> Default for GraphBuilder<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GraphBuilder<T> {
    pub fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<T>) -> NodeId {
        for operand in op.operands() {
            assert!(operand < self.nodes.len(), "operand {operand} not yet declared");
        }
        self.nodes.push(op);
        self.nodes.len() - 1
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.push(Op::Input(name.to_string()))
    }

    pub fn param(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> NodeId {
        self.params.push(ParamDecl {
            name: name.to_string(),
            rows,
            cols,
            init,
        });
        let idx = self.params.len() - 1;
        self.push(Op::Param(idx))
    }

    pub fn constant(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Const(value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Add(a, b))
    }

    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        self.push(Op::AddRowBias(a, bias))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Mul(a, b))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push(Op::Concat(a, b))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sigmoid(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        self.push(Op::SoftmaxRows(a))
    }

    pub fn dropout(&mut self, a: NodeId, rate: f64) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0,1)");
        self.push(Op::Dropout { input: a, rate })
    }

    pub fn group_mean(&mut self, a: NodeId, group: usize) -> NodeId {
        assert!(group > 0);
        self.push(Op::GroupMean { input: a, group })
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        self.push(Op::Scale(a, c))
    }

    pub fn reshape(&mut self, a: NodeId, cols: usize) -> NodeId {
        assert!(cols > 0);
        self.push(Op::Reshape { input: a, cols })
    }

    pub fn group_matmul_nt(&mut self, a: NodeId, b: NodeId, group_a: usize, group_b: usize) -> NodeId {
        self.push(Op::GroupMatMulNT {
            a,
            b,
            group_a,
            group_b,
        })
    }

    pub fn group_matmul(&mut self, a: NodeId, b: NodeId, group_a: usize, group_b: usize) -> NodeId {
        self.push(Op::GroupMatMul {
            a,
            b,
            group_a,
            group_b,
        })
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: NodeId, name: &str, fan_in: usize, fan_out: usize, init: Init) -> NodeId {
        let w = self.param(&format!("{name}.weight"), fan_in, fan_out, init);
        let b = self.param(&format!("{name}.bias"), 1, fan_out, Init::Constant(0.0));
        let xw = self.matmul(x, w);
        self.add_row_bias(xw, b)
    }

    pub fn finish(self, output: NodeId) -> Graph<T> {
        assert!(output < self.nodes.len());
        let n = self.nodes.len();
        Graph {
            def: Arc::new(GraphDef {
                nodes: self.nodes,
                params: self.params,
                output,
            }),
            values: vec![None; n],
            masks: vec![None; n],
            adjoints: vec![None; n],
            evaluated: false,
        }
    }
}

/// Forward-pass mode.
pub enum Mode<'a> {
    Eval,
    /// Training mode draws dropout masks from the given stream.
    Train(&'a mut StreamRng),
}

/// A declared graph plus its per-evaluation buffers.
///
/// Cloning shares the declaration and copies the buffers; use
/// [`Graph::fresh`] to get an instance with empty buffers for a new
/// evaluation context.
#[derive(Clone, Debug)]
pub struct Graph<T> {
    def: Arc<GraphDef<T>>,
    values: Vec<Option<Matrix<T>>>,
    masks: Vec<Option<Matrix<T>>>,
    adjoints: Vec<Option<Matrix<T>>>,
    evaluated: bool,
}

fn dims<T: Scalar>(m: &Matrix<T>) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

impl<T: Scalar> Graph<T> {
    pub fn fresh(&self) -> Self {
        let n = self.def.nodes.len();
        Graph {
            def: Arc::clone(&self.def),
            values: vec![None; n],
            masks: vec![None; n],
            adjoints: vec![None; n],
            evaluated: false,
        }
    }

    pub fn params(&self) -> &[ParamDecl] {
        &self.def.params
    }

    pub fn parameter_count(&self) -> usize {
        self.def.params.iter().map(ParamDecl::len).sum()
    }

    pub fn node_count(&self) -> usize {
        self.def.nodes.len()
    }

    pub fn output_node(&self) -> NodeId {
        self.def.output
    }

    /// Value computed for `node` by the last forward pass.
    pub fn value(&self, node: NodeId) -> Option<&Matrix<T>> {
        self.values.get(node).and_then(Option::as_ref)
    }

    /// Adjoint of `node` after the last backward pass.
    pub fn adjoint(&self, node: NodeId) -> Option<&Matrix<T>> {
        self.adjoints.get(node).and_then(Option::as_ref)
    }

    /// Initial parameter values in declaration order.
    pub fn init_params(&self, rng: &mut StreamRng) -> Vec<Matrix<T>> {
        self.def.params.iter().map(|p| p.initialise(rng)).collect()
    }

    fn shape_err(&self, node: NodeId, expected: String, actual: String) -> Error {
        Error::Shape {
            node,
            op: self.def.nodes[node].name(),
            expected,
            actual,
        }
    }

    fn val(&self, id: NodeId) -> &Matrix<T> {
        self.values[id].as_ref().expect("topological order")
    }

    /// Evaluates the graph and caches every intermediate value.
    pub fn forward(
        &mut self,
        inputs: &[(&str, &Matrix<T>)],
        params: &[Matrix<T>],
        mut mode: Mode<'_>,
    ) -> Result<&Matrix<T>> {
        let def = Arc::clone(&self.def);
        if params.len() != def.params.len() {
            return Err(Error::LengthMismatch(format!(
                "graph declares {} parameters, {} supplied",
                def.params.len(),
                params.len()
            )));
        }
        self.evaluated = false;
        for a in self.adjoints.iter_mut() {
            *a = None;
        }
        for (id, op) in def.nodes.iter().enumerate() {
            self.masks[id] = None;
            let value = match op {
                Op::Input(name) => {
                    let m = inputs
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, m)| *m)
                        .ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    (*m).clone()
                }
                Op::Param(i) => {
                    let decl = &def.params[*i];
                    let p = &params[*i];
                    if p.shape() != (decl.rows, decl.cols) {
                        return Err(self.shape_err(
                            id,
                            format!("{}x{} for `{}`", decl.rows, decl.cols, decl.name),
                            dims(p),
                        ));
                    }
                    p.clone()
                }
                Op::Const(m) => m.clone(),
                &Op::MatMul(a, b) => {
                    let (x, y) = (self.val(a), self.val(b));
                    if x.cols() != y.rows() {
                        return Err(self.shape_err(
                            id,
                            format!("rhs with {} rows", x.cols()),
                            dims(y),
                        ));
                    }
                    x.matmul(y)?
                }
                &Op::Add(a, b) => {
                    let (x, y) = (self.val(a), self.val(b));
                    if x.shape() != y.shape() {
                        return Err(self.shape_err(id, dims(x), dims(y)));
                    }
                    x.add(y)?
                }
                &Op::AddRowBias(a, b) => {
                    let (x, bias) = (self.val(a), self.val(b));
                    if bias.rows() != 1 || bias.cols() != x.cols() {
                        return Err(self.shape_err(id, format!("1x{}", x.cols()), dims(bias)));
                    }
                    let mut out = x.clone();
                    let bs = bias.as_slice();
                    for r in 0..out.rows() {
                        for (o, &bv) in out.row_mut(r).iter_mut().zip(bs) {
                            *o = *o + bv;
                        }
                    }
                    out
                }
                &Op::Mul(a, b) => {
                    let (x, y) = (self.val(a), self.val(b));
                    if x.shape() != y.shape() {
                        return Err(self.shape_err(id, dims(x), dims(y)));
                    }
                    x.hadamard(y)?
                }
                &Op::Concat(a, b) => {
                    let (x, y) = (self.val(a), self.val(b));
                    if x.rows() != y.rows() {
                        return Err(self.shape_err(
                            id,
                            format!("{} rows", x.rows()),
                            dims(y),
                        ));
                    }
                    x.hconcat(y)?
                }
                &Op::Relu(a) => self.val(a).map(|x| if x > T::zero() { x } else { T::zero() }),
                &Op::Sigmoid(a) => self.val(a).map(sigmoid),
                &Op::SoftmaxRows(a) => softmax_rows(self.val(a)),
                &Op::Dropout { input, rate } => {
                    let x = self.val(input);
                    match &mut mode {
                        Mode::Train(rng) if rate > 0.0 => {
                            let keep = T::lit(1.0 / (1.0 - rate));
                            let data = (0..x.len())
                                .map(|_| {
                                    if rng.random::<f64>() < rate {
                                        T::zero()
                                    } else {
                                        keep
                                    }
                                })
                                .collect();
                            let mask = Matrix::from_vec(x.rows(), x.cols(), data)?;
                            let out = x.hadamard(&mask)?;
                            self.masks[id] = Some(mask);
                            out
                        }
                        _ => x.clone(),
                    }
                }
                &Op::GroupMean { input, group } => {
                    let x = self.val(input);
                    if !x.rows().is_multiple_of(group) {
                        return Err(self.shape_err(
                            id,
                            format!("rows divisible by {group}"),
                            dims(x),
                        ));
                    }
                    let g = x.rows() / group;
                    let inv = T::one() / T::from_usize_lossy(group);
                    let mut out = Matrix::zeros(g, x.cols());
                    for r in 0..x.rows() {
                        let dst = out.row_mut(r / group);
                        for (o, &v) in dst.iter_mut().zip(x.row(r)) {
                            *o = *o + v;
                        }
                    }
                    out.map(|v| v * inv)
                }
                &Op::Scale(a, c) => self.val(a).scale(c),
                &Op::Reshape { input, cols } => {
                    let x = self.val(input);
                    if !x.len().is_multiple_of(cols) {
                        return Err(self.shape_err(
                            id,
                            format!("length divisible by {cols}"),
                            dims(x),
                        ));
                    }
                    x.reshape(x.len() / cols, cols)?
                }
                &Op::GroupMatMulNT {
                    a,
                    b,
                    group_a,
                    group_b,
                } => {
                    let (x, y) = (self.val(a), self.val(b));
                    let g = self.check_groups(id, x, y, group_a, group_b)?;
                    if x.cols() != y.cols() {
                        return Err(self.shape_err(id, format!("{} cols", x.cols()), dims(y)));
                    }
                    let mut out = Matrix::zeros(g * group_a, group_b);
                    for k in 0..g {
                        for i in 0..group_a {
                            let xr = x.row(k * group_a + i);
                            for j in 0..group_b {
                                let yr = y.row(k * group_b + j);
                                let mut acc = T::zero();
                                for (&p, &q) in xr.iter().zip(yr) {
                                    acc = acc + p * q;
                                }
                                out.set(k * group_a + i, j, acc);
                            }
                        }
                    }
                    out
                }
                &Op::GroupMatMul {
                    a,
                    b,
                    group_a,
                    group_b,
                } => {
                    let (x, y) = (self.val(a), self.val(b));
                    let g = self.check_groups(id, x, y, group_a, group_b)?;
                    if x.cols() != group_b {
                        return Err(self.shape_err(id, format!("{group_b} cols"), dims(x)));
                    }
                    let m = y.cols();
                    let mut out = Matrix::zeros(g * group_a, m);
                    for k in 0..g {
                        let xs = &x.as_slice()[k * group_a * group_b..(k + 1) * group_a * group_b];
                        let ys = &y.as_slice()[k * group_b * m..(k + 1) * group_b * m];
                        let os = &mut out.as_mut_slice()[k * group_a * m..(k + 1) * group_a * m];
                        matmul_into(xs, ys, os, group_a, group_b, m);
                    }
                    out
                }
            };
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("node {id} ({})", op.name())));
            }
            self.values[id] = Some(value);
        }
        self.evaluated = true;
        Ok(self.val(def.output))
    }

    fn check_groups(
        &self,
        id: NodeId,
        x: &Matrix<T>,
        y: &Matrix<T>,
        group_a: usize,
        group_b: usize,
    ) -> Result<usize> {
        if group_a == 0 || group_b == 0 || !x.rows().is_multiple_of(group_a) || !y.rows().is_multiple_of(group_b) {
            return Err(self.shape_err(
                id,
                format!("row blocks of {group_a} and {group_b}"),
                format!("{} and {}", dims(x), dims(y)),
            ));
        }
        let g = x.rows() / group_a;
        if y.rows() / group_b != g {
            return Err(self.shape_err(
                id,
                format!("{g} blocks on both operands"),
                format!("{} blocks", y.rows() / group_b),
            ));
        }
        Ok(g)
    }

    fn accumulate(&mut self, id: NodeId, delta: Matrix<T>) {
        match &mut self.adjoints[id] {
            Some(acc) => acc.add_assign(&delta).expect("adjoint shape equals value shape"),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Propagates `output_adjoint` (dLoss/dOutput) to every node and returns
    /// one gradient per declared parameter.
    pub fn backward(&mut self, output_adjoint: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        if !self.evaluated {
            return Err(Error::NotEvaluated);
        }
        let def = Arc::clone(&self.def);
        let out_val = self.val(def.output);
        if out_val.shape() != output_adjoint.shape() {
            return Err(self.shape_err(def.output, dims(out_val), dims(output_adjoint)));
        }
        for a in self.adjoints.iter_mut() {
            *a = None;
        }
        self.adjoints[def.output] = Some(output_adjoint.clone());

        for id in (0..def.nodes.len()).rev() {
            let Some(dy) = self.adjoints[id].take() else {
                continue;
            };
            match &def.nodes[id] {
                Op::Input(_) | Op::Param(_) | Op::Const(_) => {}
                &Op::MatMul(a, b) => {
                    let da = dy.matmul_nt(self.val(b))?;
                    let db = self.val(a).matmul_tn(&dy)?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                &Op::Add(a, b) => {
                    self.accumulate(a, dy.clone());
                    self.accumulate(b, dy.clone());
                }
                &Op::AddRowBias(a, b) => {
                    let mut db = Matrix::zeros(1, dy.cols());
                    for r in 0..dy.rows() {
                        for (o, &v) in db.as_mut_slice().iter_mut().zip(dy.row(r)) {
                            *o = *o + v;
                        }
                    }
                    self.accumulate(a, dy.clone());
                    self.accumulate(b, db);
                }
                &Op::Mul(a, b) => {
                    let da = dy.hadamard(self.val(b))?;
                    let db = dy.hadamard(self.val(a))?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                &Op::Concat(a, b) => {
                    let ca = self.val(a).cols();
                    let cb = self.val(b).cols();
                    let mut da = Matrix::zeros(dy.rows(), ca);
                    let mut db = Matrix::zeros(dy.rows(), cb);
                    for r in 0..dy.rows() {
                        let row = dy.row(r);
                        da.row_mut(r).copy_from_slice(&row[..ca]);
                        db.row_mut(r).copy_from_slice(&row[ca..]);
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                &Op::Relu(a) => {
                    let dx = dy.zip_map(self.val(a), |g, x| if x > T::zero() { g } else { T::zero() })?;
                    self.accumulate(a, dx);
                }
                &Op::Sigmoid(a) => {
                    let dx = dy.zip_map(self.val(id), |g, s| g * s * (T::one() - s))?;
                    self.accumulate(a, dx);
                }
                &Op::SoftmaxRows(a) => {
                    let y = self.val(id);
                    let mut dx = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let (yr, gr) = (y.row(r), dy.row(r));
                        let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    self.accumulate(a, dx);
                }
                &Op::Dropout { input, .. } => {
                    let dx = match &self.masks[id] {
                        Some(mask) => dy.hadamard(mask)?,
                        None => dy.clone(),
                    };
                    self.accumulate(input, dx);
                }
                &Op::GroupMean { input, group } => {
                    let x = self.val(input);
                    let inv = T::one() / T::from_usize_lossy(group);
                    let mut dx = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        for (o, &g) in dx.row_mut(r).iter_mut().zip(dy.row(r / group)) {
                            *o = g * inv;
                        }
                    }
                    self.accumulate(input, dx);
                }
                &Op::Scale(a, c) => self.accumulate(a, dy.scale(c)),
                &Op::Reshape { input, .. } => {
                    let (r, c) = self.val(input).shape();
                    self.accumulate(input, dy.reshape(r, c)?);
                }
                &Op::GroupMatMulNT {
                    a,
                    b,
                    group_a,
                    group_b,
                } => {
                    let (x, y) = (self.val(a), self.val(b));
                    let g = x.rows() / group_a;
                    let d = x.cols();
                    let mut dx = Matrix::zeros(x.rows(), d);
                    let mut dyb = Matrix::zeros(y.rows(), d);
                    for k in 0..g {
                        for i in 0..group_a {
                            let ri = k * group_a + i;
                            for j in 0..group_b {
                                let rj = k * group_b + j;
                                let gij = dy.get(ri, j);
                                if gij == T::zero() {
                                    continue;
                                }
                                for t in 0..d {
                                    let xv = x.get(ri, t);
                                    let yv = y.get(rj, t);
                                    dx.set(ri, t, dx.get(ri, t) + gij * yv);
                                    dyb.set(rj, t, dyb.get(rj, t) + gij * xv);
                                }
                            }
                        }
                    }
                    self.accumulate(a, dx);
                    self.accumulate(b, dyb);
                }
                &Op::GroupMatMul {
                    a,
                    b,
                    group_a,
                    group_b,
                } => {
                    let (x, y) = (self.val(a), self.val(b));
                    let g = x.rows() / group_a;
                    let m = y.cols();
                    let mut dx = Matrix::zeros(x.rows(), group_b);
                    let mut dyb = Matrix::zeros(y.rows(), m);
                    for k in 0..g {
                        for i in 0..group_a {
                            let ri = k * group_a + i;
                            for j in 0..group_b {
                                let rj = k * group_b + j;
                                let mut acc = T::zero();
                                let xij = x.get(ri, j);
                                for t in 0..m {
                                    let gv = dy.get(ri, t);
                                    acc = acc + gv * y.get(rj, t);
                                    dyb.set(rj, t, dyb.get(rj, t) + xij * gv);
                                }
                                dx.set(ri, j, acc);
                            }
                        }
                    }
                    self.accumulate(a, dx);
                    self.accumulate(b, dyb);
                }
            }
            self.adjoints[id] = Some(dy);
        }

        let mut grads = Vec::with_capacity(def.params.len());
        let mut param_nodes = vec![None; def.params.len()];
        for (id, op) in def.nodes.iter().enumerate() {
            if let Op::Param(i) = op {
                param_nodes[*i] = Some(id);
            }
        }
        for (i, decl) in def.params.iter().enumerate() {
            let g = param_nodes[i]
                .and_then(|id| self.adjoints[id].clone())
                .unwrap_or_else(|| Matrix::zeros(decl.rows, decl.cols));
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of `{}`", decl.name)));
            }
            grads.push(g);
        }
        Ok(grads)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softmax_rows<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}
