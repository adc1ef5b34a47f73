//! Adam and the mini-batch training loop shared by the CNN and the MLP.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{self, Cnn};
use crate::dataset::Dataset;
use crate::embeddings::{EmbeddingMode, EmbeddingTable, SentenceMatrix};
use crate::error::{Error, Result};
use crate::mlp::{self, Mlp};
use crate::numerics::{axpy, Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every parameter tensor, plus lazily created moments
/// for embedding rows touched in tuned mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    rows: BTreeMap<usize, (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn moment_shapes(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }

    pub fn row_moments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().map(|(&r, (m, _))| (r, m.len()))
    }

    fn corrections(&self, hyper: &AdamHyper) -> (f64, f64) {
        let t = self.t as i32;
        (1.0 - hyper.beta1.powi(t), 1.0 - hyper.beta2.powi(t))
    }

    /// Updates the embedding rows in `row_grads` with the current step's bias
    /// correction. Rows absent from the batch keep their moments untouched.
    pub fn step_rows(
        &mut self,
        table: &mut EmbeddingTable,
        row_grads: &BTreeMap<usize, Vec<f64>>,
        hyper: &AdamHyper,
    ) {
        let (c1, c2) = self.corrections(hyper);
        let dim = table.dim();
        for (&row, g) in row_grads {
            let (m, v) = self
                .rows
                .entry(row)
                .or_insert_with(|| (vec![0.0; dim], vec![0.0; dim]));
            update(table.row_mut(row), g, m, v, hyper, c1, c2);
        }
    }
}

fn update(
    theta: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    h: &AdamHyper,
    c1: f64,
    c2: f64,
) {
    for i in 0..theta.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= h.lr * m_hat / (v_hat.sqrt() + h.eps);
    }
}

/// One Adam step over a set of tensors. Moments are allocated on first use.
pub fn adam_step<G: AsRef<[f64]>>(
    state: &mut AdamState,
    params: &mut [&mut [f64]],
    grads: &[G],
    hyper: &AdamHyper,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            format!("{} gradient tensors", params.len()),
            grads.len(),
        ));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.len() != g.as_ref().len() {
            return Err(Error::shape(p.len(), g.as_ref().len()));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        state.v = state.m.clone();
    } else if state.moment_shapes() != params.iter().map(|p| p.len()).collect::<Vec<_>>() {
        return Err(Error::shape(
            "tensors matching the Adam state",
            "different shapes",
        ));
    }
    state.t += 1;
    let (c1, c2) = state.corrections(hyper);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        update(
            p,
            g.as_ref(),
            &mut state.m[i],
            &mut state.v[i],
            hyper,
            c1,
            c2,
        );
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mini-batch gradient steps.
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamHyper,
}

impl TrainConfig {
    /// 1001 steps with batches of 50.
    pub fn cnn_default(seed: u64) -> Self {
        TrainConfig {
            iterations: 1001,
            batch_size: 50,
            seed,
            adam: AdamHyper::default(),
        }
    }

    /// 3001 steps with batches of 50.
    pub fn mlp_default(seed: u64) -> Self {
        TrainConfig {
            iterations: 3001,
            ..TrainConfig::cnn_default(seed)
        }
    }
}

/// A trainable classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
pub enum Model {
    Cnn(Cnn),
    Mlp(Mlp),
}

/// Loss and gradients of one training example.
#[derive(Debug, Clone)]
pub struct ExampleGrad {
    pub loss: f64,
    /// Same order as [`Model::tensors_mut`].
    pub params: Vec<Vec<f64>>,
    pub input: Option<Matrix>,
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Cnn(_) => "cnn",
            Model::Mlp(_) => "mlp",
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            Model::Cnn(m) => m.config.classes,
            Model::Mlp(m) => m.config.classes,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::Cnn(m) => m.config.dim,
            Model::Mlp(m) => m.config.dim,
        }
    }

    pub fn embedding_mode(&self) -> EmbeddingMode {
        match self {
            Model::Cnn(m) => m.config.embedding_mode,
            Model::Mlp(m) => m.config.embedding_mode,
        }
    }

    pub fn predict(&self, sm: &SentenceMatrix) -> Result<usize> {
        match self {
            Model::Cnn(m) => m.predict(sm),
            Model::Mlp(m) => m.predict(sm),
        }
    }

    /// Class probabilities without dropout.
    pub fn probs(&self, sm: &SentenceMatrix) -> Result<Vec<f64>> {
        Ok(match self {
            Model::Cnn(m) => m.forward(sm, None)?.probs,
            Model::Mlp(m) => m.forward(sm, None)?.probs,
        })
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Model::Cnn(m) => m.params.tensors(),
            Model::Mlp(m) => m.params.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Cnn(m) => m.params.tensors_mut(),
            Model::Mlp(m) => m.params.tensors_mut(),
        }
    }

    /// Forward and backward for one example, with dropout if `rng` is given.
    pub fn example_grad(
        &self,
        sm: &SentenceMatrix,
        gold: usize,
        rng: Option<&mut SeededRng>,
    ) -> Result<ExampleGrad> {
        let to_vecs = |ts: Vec<&[f64]>| ts.into_iter().map(<[f64]>::to_vec).collect();
        match self {
            Model::Cnn(m) => {
                let trace = m.forward(sm, rng)?;
                let loss = cnn::loss(&trace, gold, &m.params, &m.config)?;
                let g = cnn::backward(&trace, gold, &m.params, &m.config)?;
                Ok(ExampleGrad {
                    loss,
                    params: to_vecs(g.params.tensors()),
                    input: g.input,
                })
            }
            Model::Mlp(m) => {
                let trace = m.forward(sm, rng)?;
                let loss = mlp::mlp_loss(&trace, gold, &m.params, &m.config)?;
                let g = mlp::mlp_backward(&trace, gold, &m.params, &m.config)?;
                Ok(ExampleGrad {
                    loss,
                    params: to_vecs(g.params.tensors()),
                    input: g.input,
                })
            }
        }
    }
}

/// One example's cross-entropy and factored data gradient.
enum Factored {
    Cnn(cnn::CnnExampleGrad),
    Mlp(mlp::MlpExampleGrad),
}

impl Factored {
    fn input(&self) -> Option<&Matrix> {
        match self {
            Factored::Cnn(g) => g.input.as_ref(),
            Factored::Mlp(g) => g.input.as_ref(),
        }
    }
}

/// Batch gradient buffer shaped like the model's parameters.
enum GradBuf {
    Cnn(cnn::CnnParams),
    Mlp(mlp::MlpParams),
}

impl GradBuf {
    fn tensors(&self) -> Vec<&[f64]> {
        match self {
            GradBuf::Cnn(p) => p.tensors(),
            GradBuf::Mlp(p) => p.tensors(),
        }
    }

    fn add(&mut self, g: &Factored, scale: f64) {
        match (self, g) {
            (GradBuf::Cnn(buf), Factored::Cnn(g)) => g.accumulate(buf, scale),
            (GradBuf::Mlp(buf), Factored::Mlp(g)) => g.accumulate(buf, scale),
            _ => unreachable!("gradient kind matches the model"),
        }
    }
}

impl Model {
    fn factored_grad(
        &self,
        sm: &SentenceMatrix,
        gold: usize,
        rng: &mut SeededRng,
    ) -> Result<(f64, Factored)> {
        match self {
            Model::Cnn(m) => {
                let trace = m.forward(sm, Some(rng))?;
                let ce = crate::numerics::cross_entropy(&trace.probs, gold)?;
                Ok((
                    ce,
                    Factored::Cnn(cnn::example_gradient(&trace, gold, &m.params, &m.config)?),
                ))
            }
            Model::Mlp(m) => {
                let trace = m.forward(sm, Some(rng))?;
                let ce = crate::numerics::cross_entropy(&trace.probs, gold)?;
                Ok((
                    ce,
                    Factored::Mlp(mlp::mlp_example_gradient(
                        &trace, gold, &m.params, &m.config,
                    )?),
                ))
            }
        }
    }

    /// Zero gradients plus the L2 term, scaled once for the whole batch.
    fn l2_grads(&self) -> GradBuf {
        match self {
            Model::Cnn(m) => {
                let mut g = cnn::CnnParams::zeros(&m.config);
                cnn::add_l2_gradient(&m.params, &m.config, &mut g, 1.0);
                GradBuf::Cnn(g)
            }
            Model::Mlp(m) => {
                let mut g = mlp::MlpParams::zeros(&m.config);
                mlp::mlp_add_l2_gradient(&m.params, &m.config, &mut g, 1.0);
                GradBuf::Mlp(g)
            }
        }
    }

    /// `λ ‖θ‖²` over the penalized tensors.
    fn penalty(&self) -> f64 {
        match self {
            Model::Cnn(m) => m.config.l2_lambda * m.params.penalized_norm_sq(),
            Model::Mlp(m) => m.config.l2_lambda * m.params.penalized_norm_sq(),
        }
    }
}

/// Per-step training losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub losses: Vec<f64>,
    /// Dropout-free accuracy on the training data after the last step.
    pub train_accuracy: f64,
}

impl History {
    pub fn steps(&self) -> usize {
        self.losses.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Runs `cfg.iterations` Adam steps over seeded, epoch-reshuffled mini-batches.
///
/// Unknown tokens are materialized in `table` up front in dataset order. In
/// tuned mode the embedding rows used by each batch are updated as well; in
/// static mode the table is only read.
pub fn train(
    model: &mut Model,
    data: &Dataset,
    table: &mut EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<History> {
    table.warm(data.instances.iter().map(|i| &i.tokens));
    if model.embedding_mode() == EmbeddingMode::Tuned {
        run_training(model, data, TableAccess::Mut(table), cfg)
    } else {
        run_training(model, data, TableAccess::Shared(table), cfg)
    }
}

/// Static-mode training against a shared table in which every training token
/// is already materialized (see [`EmbeddingTable::warm`]).
pub fn train_static(
    model: &mut Model,
    data: &Dataset,
    table: &EmbeddingTable,
    cfg: &TrainConfig,
) -> Result<History> {
    if model.embedding_mode() == EmbeddingMode::Tuned {
        return Err(Error::Config(
            "tuned embeddings need a mutable table".into(),
        ));
    }
    run_training(model, data, TableAccess::Shared(table), cfg)
}

enum TableAccess<'a> {
    Shared(&'a EmbeddingTable),
    Mut(&'a mut EmbeddingTable),
}

impl TableAccess<'_> {
    fn get(&self) -> &EmbeddingTable {
        match self {
            TableAccess::Shared(t) => t,
            TableAccess::Mut(t) => t,
        }
    }
}

fn run_training(
    model: &mut Model,
    data: &Dataset,
    mut table: TableAccess<'_>,
    cfg: &TrainConfig,
) -> Result<History> {
    if cfg.iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(Error::Empty("training data".into()));
    }
    if data.num_classes() != model.classes() {
        return Err(Error::shape(
            format!("{} classes", model.classes()),
            format!("label set of {}", data.num_classes()),
        ));
    }
    if table.get().dim() != model.dim() {
        return Err(Error::shape(
            format!("embedding dim {}", model.dim()),
            table.get().dim(),
        ));
    }
    let golds = data.class_indices();
    let tuned = matches!(table, TableAccess::Mut(_));
    let frozen: Vec<SentenceMatrix> = if tuned {
        Vec::new()
    } else {
        data.instances
            .iter()
            .map(|i| table.get().embed_existing(&i.tokens))
            .collect::<Result<_>>()?
    };

    let n = data.len();
    let mut order_rng = SeededRng::derive(cfg.seed, &[1]);
    let mut order: Vec<usize> = (0..n).collect();
    order_rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut state = AdamState::new();
    let mut losses = Vec::with_capacity(cfg.iterations);

    for step in 0..cfg.iterations {
        let end = (cursor + cfg.batch_size).min(n);
        let batch: Vec<usize> = order[cursor..end].to_vec();
        cursor = end;
        if cursor == n {
            order_rng.shuffle(&mut order);
            cursor = 0;
        }

        let sentences: Vec<SentenceMatrix> = if tuned {
            batch
                .iter()
                .map(|&i| table.get().embed_existing(&data.instances[i].tokens))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let shared: &Model = model;
        let results: Vec<(f64, Factored)> = batch
            .par_iter()
            .enumerate()
            .map(|(pos, &i)| {
                let sm = if tuned { &sentences[pos] } else { &frozen[i] };
                let mut rng = SeededRng::derive(cfg.seed, &[2, step as u64, pos as u64]);
                shared.factored_grad(sm, golds[i], &mut rng)
            })
            .collect::<Result<_>>()?;

        // Reduced in batch order, so the sum does not depend on scheduling.
        let scale = 1.0 / batch.len() as f64;
        let mut grads = model.l2_grads();
        let mut row_grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut ce = 0.0;
        for (pos, (l, g)) in results.iter().enumerate() {
            ce += l;
            grads.add(g, scale);
            if let Some(dx) = g.input() {
                let rows = &sentences[pos].table_rows;
                for (k, &row) in rows.iter().enumerate() {
                    let acc = row_grads.entry(row).or_insert_with(|| vec![0.0; dx.cols()]);
                    axpy(scale, dx.row(k), acc);
                }
            }
        }
        let loss = ce * scale + model.penalty();
        adam_step(
            &mut state,
            &mut model.tensors_mut(),
            &grads.tensors(),
            &cfg.adam,
        )?;
        if let TableAccess::Mut(t) = &mut table {
            state.step_rows(t, &row_grads, &cfg.adam);
        }
        losses.push(loss);
    }

    let train_accuracy = accuracy_existing(model, data, table.get())?;
    Ok(History {
        losses,
        train_accuracy,
    })
}

/// Dropout-free accuracy of `model` on `data`.
pub fn accuracy_on(model: &Model, data: &Dataset, table: &mut EmbeddingTable) -> Result<f64> {
    table.warm(data.instances.iter().map(|i| &i.tokens));
    accuracy_existing(model, data, table)
}

fn accuracy_existing(model: &Model, data: &Dataset, table: &EmbeddingTable) -> Result<f64> {
    let golds = data.class_indices();
    let correct = data
        .instances
        .par_iter()
        .zip(golds.par_iter())
        .map(|(inst, &g)| -> Result<usize> {
            let sm = table.embed_existing(&inst.tokens)?;
            Ok(usize::from(model.predict(&sm)? == g))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / data.len() as f64)
}

/// Predicted class index of every instance, without dropout.
pub fn predict_all(
    model: &Model,
    data: &Dataset,
    table: &mut EmbeddingTable,
) -> Result<Vec<usize>> {
    table.warm(data.instances.iter().map(|i| &i.tokens));
    predict_existing(model, data, table)
}

/// [`predict_all`] against a table that already holds every token.
pub fn predict_existing(
    model: &Model,
    data: &Dataset,
    table: &EmbeddingTable,
) -> Result<Vec<usize>> {
    data.instances
        .par_iter()
        .map(|inst| model.predict(&table.embed_existing(&inst.tokens)?))
        .collect()
}
