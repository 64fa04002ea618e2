//! Forward pass: graph encoder, path aggregator and pointer scorer, all
//! recorded on a [`Tape`].

use std::rc::Rc;

use mcroute_core::{DecisionContext, NetworkGraph, NodeId};
use ndarray::Array2;

use crate::autodiff::{smoothed_probs, Float, RowMask, Tape, Var};
use crate::config::{Aggregator, Encoder, ModelConfig, Reencode, Scorer};
use crate::error::{GpnError, Result};
use crate::features::node_features;
use crate::params::ModelParams;

/// Attention mask: neighbours plus the node itself.
pub fn neighbourhood_mask(graph: &NetworkGraph) -> Array2<bool> {
    let n = graph.node_count();
    let mut m = Array2::from_elem((n, n), false);
    for v in 0..n {
        m[[v, v]] = true;
        for &(w, _) in graph.neighbors(v) {
            m[[v, w]] = true;
        }
    }
    m
}

/// `D^-1/2 (A + I) D^-1/2`.
pub fn normalized_adjacency<T: Float>(graph: &NetworkGraph) -> Array2<T> {
    let mask = neighbourhood_mask(graph);
    let deg: Vec<f64> = mask.rows().into_iter().map(|r| r.iter().filter(|&&b| b).count() as f64).collect();
    Array2::from_shape_fn(mask.raw_dim(), |(i, j)| {
        if mask[[i, j]] {
            T::of(1.0 / (deg[i] * deg[j]).sqrt())
        } else {
            T::zero()
        }
    })
}

/// Parameters bound to a tape.
pub struct Bound<'p, T> {
    params: &'p ModelParams<T>,
    vars: Vec<Var>,
}

impl<'p, T: Float> Bound<'p, T> {
    pub fn new(tape: &mut Tape<T>, params: &'p ModelParams<T>, trainable: bool) -> Self {
        let vars = params
            .tensors()
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        Bound { params, vars }
    }

    pub fn var(&self, name: &str) -> Var {
        let i = self.params.index(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.vars[i]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }
}

/// Per-graph constants used by the encoder.
pub struct GraphConsts<T> {
    pub mask: Rc<RowMask>,
    pub norm_adj: Option<Rc<Array2<T>>>,
}

impl<T: Float> GraphConsts<T> {
    pub fn new(graph: &NetworkGraph, config: &ModelConfig) -> Self {
        GraphConsts {
            mask: Rc::new(RowMask::from_dense(&neighbourhood_mask(graph))),
            norm_adj: (config.encoder == Encoder::Gcn).then(|| Rc::new(normalized_adjacency(graph))),
        }
    }
}

fn check_finite<T: Float>(tape: &Tape<T>, v: Var, what: impl FnOnce() -> String) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(GpnError::NonFinite(what()))
    }
}

/// Node embeddings (n × H).
pub fn encode<T: Float>(tape: &mut Tape<T>, p: &Bound<'_, T>, g: &GraphConsts<T>, features: Var) -> Result<Var> {
    let cfg = p.config().clone();
    let n = tape.value(features).nrows();
    if tape.value(features).ncols() != cfg.features || g.mask.len() != n {
        return Err(GpnError::Shape(format!(
            "feature matrix {:?} does not fit {} features on a {}-node graph",
            tape.value(features).dim(),
            cfg.features,
            g.mask.len()
        )));
    }
    let d = cfg.hidden / cfg.heads;
    let slope = T::of(cfg.leaky_slope);
    let mut x = features;
    for l in 0..cfg.layers {
        let pre = match cfg.encoder {
            Encoder::Gat => {
                let w = p.var(&format!("gat{l}.W"));
                let src = p.var(&format!("gat{l}.att_src"));
                let dst = p.var(&format!("gat{l}.att_dst"));
                let z = tape.matmul(x, w);
                let mut heads = Vec::with_capacity(cfg.heads);
                for h in 0..cfg.heads {
                    let zh = tape.slice_cols(z, h * d, (h + 1) * d);
                    let a_src = tape.slice_cols(src, h, h + 1);
                    let a_dst = tape.slice_cols(dst, h, h + 1);
                    let s = tape.matmul(zh, a_src);
                    let t = tape.matmul(zh, a_dst);
                    let t = tape.transpose(t);
                    let e = tape.broadcast_sum(s, t);
                    let e = tape.leaky_relu(e, slope);
                    let alpha = tape.masked_softmax_rows(e, g.mask.clone());
                    heads.push(tape.matmul(alpha, zh));
                }
                if heads.len() == 1 {
                    heads[0]
                } else {
                    tape.concat_cols(&heads)
                }
            }
            Encoder::Gcn => {
                let w = p.var(&format!("gcn{l}.W"));
                let adj = g.norm_adj.clone().expect("gcn constants present");
                let ax = tape.const_matmul_left(adj, x);
                tape.matmul(ax, w)
            }
        };
        x = if l + 1 == cfg.layers {
            tape.relu(pre)
        } else {
            tape.leaky_relu(pre, slope)
        };
        check_finite(tape, x, || format!("encoder layer {l}"))?;
    }
    Ok(x)
}

/// One LSTM step; `state` is `None` for the zero initial state.
pub fn lstm_step<T: Float>(tape: &mut Tape<T>, p: &Bound<'_, T>, input_proj: Var, state: Option<(Var, Var)>) -> (Var, Var) {
    let h = p.config().hidden;
    let gates = match state {
        None => input_proj,
        Some((hp, _)) => {
            let wh = p.var("lstm.Wh");
            let rec = tape.matmul(hp, wh);
            tape.add(input_proj, rec)
        }
    };
    let i = tape.slice_cols(gates, 0, h);
    let f = tape.slice_cols(gates, h, 2 * h);
    let gg = tape.slice_cols(gates, 2 * h, 3 * h);
    let o = tape.slice_cols(gates, 3 * h, 4 * h);
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let gg = tape.tanh(gg);
    let o = tape.sigmoid(o);
    let ig = tape.mul(i, gg);
    let c = match state {
        None => ig,
        Some((_, cp)) => {
            let fc = tape.mul(f, cp);
            tape.add(fc, ig)
        }
    };
    let tc = tape.tanh(c);
    let hn = tape.mul(o, tc);
    (hn, c)
}

/// Summary of the partial path: final LSTM hidden and cell state, or the
/// current node's embedding when the aggregator is disabled.
pub fn aggregate<T: Float>(tape: &mut Tape<T>, p: &Bound<'_, T>, emb: Var, path: &[NodeId]) -> Result<(Var, Option<Var>)> {
    let last = *path.last().ok_or_else(|| GpnError::Shape("empty path".into()))?;
    if p.config().aggregator == Aggregator::None {
        return Ok((tape.gather_rows(emb, &[last]), None));
    }
    let seq = tape.gather_rows(emb, path);
    let wx = p.var("lstm.Wx");
    let b = p.var("lstm.b");
    let proj = tape.matmul(seq, wx);
    let proj = tape.add_row(proj, b);
    let mut state = None;
    for t in 0..path.len() {
        let row = tape.gather_rows(proj, &[t]);
        state = Some(lstm_step(tape, p, row, state));
    }
    let (h, c) = state.expect("non-empty path");
    check_finite(tape, h, || "path aggregator".into())?;
    Ok((h, Some(c)))
}

/// Scaled logits (1 × k) over candidate nodes.
pub fn pointer_logits<T: Float>(tape: &mut Tape<T>, p: &Bound<'_, T>, emb: Var, h: Var, candidates: &[NodeId]) -> Result<Var> {
    if candidates.is_empty() {
        return Err(GpnError::Shape("every candidate is masked".into()));
    }
    let cfg = p.config();
    let xc = tape.gather_rows(emb, candidates);
    let scores = match cfg.scorer {
        Scorer::Attention => {
            let a = tape.matmul(xc, p.var("W2"));
            let b = tape.matmul(h, p.var("W3"));
            let t = tape.add_row(a, b);
            let t = tape.tanh(t);
            let ht = tape.transpose(h);
            tape.matmul(t, ht)
        }
        Scorer::Mlp => {
            let a = tape.matmul(xc, p.var("mlp.W_node"));
            let b = tape.matmul(h, p.var("mlp.W_ctx"));
            let b = tape.add(b, p.var("mlp.b"));
            let hid = tape.add_row(a, b);
            let hid = tape.tanh(hid);
            tape.matmul(hid, p.var("mlp.w_out"))
        }
    };
    let row = tape.transpose(scores);
    let logits = tape.scale(row, T::of(cfg.logit_scale));
    check_finite(tape, logits, || "pointer decoder".into())?;
    Ok(logits)
}

/// Runs decisions for one rollout on a single tape.
///
/// With `trainable` the whole rollout stays on the tape for a later
/// backward pass; otherwise the tape is cut back after every decision.
pub struct Forward<'p, T: Float> {
    pub tape: Tape<T>,
    bound: Bound<'p, T>,
    consts: Option<GraphConsts<T>>,
    trainable: bool,
    base_len: usize,
    cached: Option<(usize, Var, usize)>,
}

impl<'p, T: Float> Forward<'p, T> {
    pub fn new(params: &'p ModelParams<T>, trainable: bool) -> Self {
        let mut tape = Tape::new();
        let bound = Bound::new(&mut tape, params, trainable);
        let base_len = tape.len();
        Forward {
            tape,
            bound,
            consts: None,
            trainable,
            base_len,
            cached: None,
        }
    }

    pub fn bound(&self) -> &Bound<'p, T> {
        &self.bound
    }

    pub fn config(&self) -> &ModelConfig {
        self.bound.config()
    }

    /// Logits over `ctx.actions`.
    pub fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Var> {
        let cfg = self.bound.config().clone();
        if self.consts.is_none() {
            self.consts = Some(GraphConsts::new(&ctx.instance.graph, &cfg));
        }
        let reuse = match self.cached {
            Some((rank, emb, len)) if cfg.reencode == Reencode::PerEpisode && rank == ctx.user_rank => Some((emb, len)),
            _ => None,
        };
        let emb = match reuse {
            Some((emb, len)) => {
                if !self.trainable {
                    self.tape.truncate(len);
                }
                emb
            }
            None => {
                if !self.trainable {
                    self.tape.truncate(self.base_len);
                }
                let f = self.tape.constant(node_features::<T>(ctx, cfg.max_user));
                let emb = encode(&mut self.tape, &self.bound, self.consts.as_ref().expect("set above"), f)?;
                self.cached = Some((ctx.user_rank, emb, self.tape.len()));
                emb
            }
        };
        let (h, _) = aggregate(&mut self.tape, &self.bound, emb, ctx.path)?;
        pointer_logits(&mut self.tape, &self.bound, emb, h, ctx.actions)
    }

    /// Smoothed action probabilities for the logits from [`Self::decide`].
    pub fn probs(&self, logits: Var) -> Vec<f64> {
        smoothed_probs(self.tape.value(logits), T::of(self.config().epsilon))
            .into_iter()
            .map(Float::to_f64)
            .collect()
    }
}

/// Plain-array encoder output, for inspection and tests.
pub fn encode_values<T: Float>(params: &ModelParams<T>, graph: &NetworkGraph, features: Array2<T>) -> Result<Array2<T>> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, false);
    let consts = GraphConsts::new(graph, &params.config);
    let f = tape.constant(features);
    let emb = encode(&mut tape, &bound, &consts, f)?;
    Ok(tape.value(emb).clone())
}

/// LSTM over a sequence of input rows from zero state; returns `(h, c)`.
pub fn lstm_values<T: Float>(params: &ModelParams<T>, inputs: &Array2<T>) -> Result<(Array2<T>, Array2<T>)> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, false);
    let emb = tape.constant(inputs.clone());
    let path: Vec<usize> = (0..inputs.nrows()).collect();
    let (h, c) = aggregate(&mut tape, &bound, emb, &path)?;
    let c = c.ok_or_else(|| GpnError::Config("aggregator is disabled".into()))?;
    Ok((tape.value(h).clone(), tape.value(c).clone()))
}

/// Smoothed pointer probabilities over `candidates` for a given context
/// vector `h` (1 × H).
pub fn pointer_probs<T: Float>(params: &ModelParams<T>, emb: &Array2<T>, h: &Array2<T>, candidates: &[NodeId]) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, params, false);
    let e = tape.constant(emb.clone());
    let hv = tape.constant(h.clone());
    let logits = pointer_logits(&mut tape, &bound, e, hv, candidates)?;
    Ok(smoothed_probs(tape.value(logits), T::of(params.config.epsilon)))
}
