use log::{debug, info};
use ndarray::Array2;
use rand::seq::SliceRandom;

use super::model::{forward, loss_and_grad};
use super::optim::{adjust_temperature, optimizer_step, TrainState};
use super::params::init_params;
use super::sample::{full_subgraph, sample_neighborhood};
use super::{EmbeddingMeta, GnnConfig, NodeEmbeddings};
use crate::error::{Error, Result};
use crate::graph::CooccurrenceGraph;
use crate::rng;

/// Per-epoch trace of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Epoch-mean total loss, one entry per epoch with at least one usable batch.
    pub loss_history: Vec<f64>,
    /// Temperature in effect during each epoch.
    pub tau_history: Vec<f64>,
    pub steps: usize,
    pub skipped_batches: usize,
}

/// Train on `graph` with node features taken from `codebook` rows and
/// return embeddings for every vocabulary token.
pub fn train(
    graph: &CooccurrenceGraph,
    codebook: &Array2<f32>,
    config: &GnnConfig,
) -> Result<(NodeEmbeddings, TrainReport)> {
    config.validate()?;
    if graph.n_edges() == 0 {
        return Err(Error::EdgelessGraph);
    }
    if codebook.nrows() != graph.vocab_size {
        return Err(Error::DimensionMismatch {
            expected: graph.vocab_size,
            found: codebook.nrows(),
        });
    }
    if codebook.ncols() != config.d_codebook {
        return Err(Error::DimensionMismatch {
            expected: config.d_codebook,
            found: codebook.ncols(),
        });
    }

    let adjacency = graph.adjacency();
    let n = graph.vocab_size;
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let mut params = init_params(config, config.seed)?;
    let mut state = TrainState::new(&params, config, config.epochs * batches_per_epoch);
    let mut shuffle_rng = rng::stream(config.seed, "gnn/shuffle");
    let mut sample_rng = rng::stream(config.seed, "gnn/sample");
    let mut dropout_rng = rng::stream(config.seed, "gnn/dropout");
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut report = TrainReport {
        epochs_run: 0,
        loss_history: Vec::new(),
        tau_history: Vec::new(),
        steps: 0,
        skipped_batches: 0,
    };

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut pos_sum, mut neg_sum, mut used) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let sub = sample_neighborhood(&adjacency, batch, &config.neighbor_sizes, &mut sample_rng);
            let edges = sub.batch_edges(&adjacency);
            let result = loss_and_grad(
                &params,
                config,
                &sub,
                codebook,
                &edges,
                state.tau,
                config.beta,
                Some(&mut dropout_rng),
            );
            let (obj, mut grads) = match result {
                Ok(v) => v,
                Err(Error::NoPositivePairs) => {
                    report.skipped_batches += 1;
                    continue;
                }
                Err(Error::NonFiniteActivation { .. } | Error::NonFiniteGradient) => {
                    return Err(Error::DivergedTraining {
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            if !obj.total.is_finite() {
                return Err(Error::DivergedTraining {
                    epoch,
                    loss: obj.total,
                });
            }
            optimizer_step(&mut state, &mut params, &mut grads, config);
            loss_sum += obj.total;
            pos_sum += obj.mean_pos_sim;
            neg_sum += obj.mean_neg_sim;
            used += 1;
        }
        report.epochs_run = epoch + 1;
        report.tau_history.push(state.tau);
        if used == 0 {
            state.epochs_since_best += 1;
        } else {
            let k = used as f64;
            let loss = loss_sum / k;
            report.loss_history.push(loss);
            debug!(
                "epoch {epoch}: loss {loss:.6} tau {:.4} pos {:.4} neg {:.4}",
                state.tau,
                pos_sum / k,
                neg_sum / k
            );
            if loss <= state.best_loss - config.min_improvement {
                state.best_loss = loss;
                state.epochs_since_best = 0;
            } else {
                state.epochs_since_best += 1;
            }
            state.tau = adjust_temperature(state.tau, pos_sum / k, neg_sum / k, config);
        }
        if state.epochs_since_best >= config.patience {
            info!("early stop after epoch {epoch}");
            break;
        }
    }
    report.steps = state.step;

    let fwd = forward(&params, config, &full_subgraph(&adjacency), codebook, None)
        .map_err(|_| Error::DivergedTraining {
            epoch: report.epochs_run,
            loss: f64::NAN,
        })?;
    let matrix = fwd.output.mapv(|v| v as f32);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedTraining {
            epoch: report.epochs_run,
            loss: f64::INFINITY,
        });
    }
    let embeddings = NodeEmbeddings {
        matrix,
        meta: EmbeddingMeta {
            config_hash: config.digest(),
            seed: config.seed,
            epochs_run: report.epochs_run,
            final_tau: state.tau,
            loss_history: report.loss_history.clone(),
        },
    };
    Ok((embeddings, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};
    use crate::gnn::loss::mean_cosine;
    use crate::graph::{build_graph, count_cooccurrences, CountParams, Edge};

    fn small_config() -> GnnConfig {
        GnnConfig {
            d_codebook: 8,
            d_hidden: 32,
            d_out: 16,
            epochs: 15,
            ..GnnConfig::default()
        }
    }

    fn planted() -> (CooccurrenceGraph, Array2<f32>) {
        let (corpus, _, codebook) = generate_synthetic_corpus(&SyntheticSpec::default(), 7).unwrap();
        let counts = count_cooccurrences(&corpus, &CountParams::default()).unwrap();
        (build_graph(&counts, 0.2).unwrap(), codebook.matrix)
    }

    #[test]
    fn edgeless_graph_is_rejected() {
        let g = CooccurrenceGraph {
            vocab_size: 4,
            edges: vec![],
        };
        let cb = Array2::zeros((4, 8));
        assert!(matches!(train(&g, &cb, &small_config()), Err(Error::EdgelessGraph)));
    }

    #[test]
    fn training_progresses_and_separates() {
        let (graph, cb) = planted();
        let (emb, report) = train(&graph, &cb, &small_config()).unwrap();
        let first = report.loss_history[0];
        let last = *report.loss_history.last().unwrap();
        assert!(last < first, "{first} -> {last}");

        let h = emb.matrix.mapv(f64::from);
        let pos: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.i as usize, e.j as usize)).collect();
        let connected: std::collections::HashSet<_> = pos.iter().copied().collect();
        let neg: Vec<(usize, usize)> = (0..graph.vocab_size)
            .flat_map(|i| (i + 1..graph.vocab_size).map(move |j| (i, j)))
            .filter(|p| !connected.contains(p))
            .step_by(7)
            .collect();
        assert!(mean_cosine(h.view(), &pos) > mean_cosine(h.view(), &neg));
    }

    #[test]
    fn runs_are_reproducible() {
        let g = CooccurrenceGraph {
            vocab_size: 6,
            edges: vec![
                Edge { i: 0, j: 1, weight: 1.0 },
                Edge { i: 1, j: 2, weight: 0.5 },
                Edge { i: 3, j: 4, weight: 0.8 },
            ],
        };
        let cb = Array2::from_shape_fn((6, 8), |(i, j)| ((i * 8 + j) as f32 * 0.37).sin());
        let cfg = GnnConfig {
            epochs: 5,
            ..small_config()
        };
        let (a, ra) = train(&g, &cb, &cfg).unwrap();
        let (b, rb) = train(&g, &cb, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ra, rb);
        assert_eq!(a.matrix.dim(), (6, 16));
    }
}
