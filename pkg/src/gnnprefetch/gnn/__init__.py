"""From-scratch GNN encoder, training loop and embedding analysis."""

from .layers import NormAdjacency, gcn_layer, mean_aggregator, normalize_adjacency, sage_layer
from .model import (GraphOperators, ModelParams, backward, forward, init_params,
                    linkpred_loss)
from .optim import Adam
from .pca import pca_2d
from .train import TrainConfig, TrainHistory, TrainingError, evaluate_topk, train

__all__ = [
    "Adam", "GraphOperators", "ModelParams", "NormAdjacency", "TrainConfig", "TrainHistory",
    "TrainingError", "backward", "evaluate_topk", "forward", "gcn_layer", "init_params",
    "linkpred_loss", "mean_aggregator", "normalize_adjacency", "pca_2d", "sage_layer", "train",
]
