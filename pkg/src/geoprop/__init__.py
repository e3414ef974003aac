"""Geolocation of social-network users by Modified Adsorption over collapsed @-mention graphs."""

__version__ = "0.1.0"

from .dataset import Dataset, GeoPoint, UserRecord, extract_mentions, load_dataset, write_dataset
from .discretizer import Discretizer, assign_cell, build_kdtree, cell_to_point
from .graph import MentionGraph, build_collapsed_graph, graph_stats, sweep_threshold
from .madsolver import MadParams, SeedSet, SolveResult, attach_dongles, predict, run_mad
from .metrics import Metrics, evaluate, haversine_km
from .textprior import TextModel, Vocabulary, featurize, predict_prior, train_text_model

__all__ = [
    "Dataset", "GeoPoint", "UserRecord", "extract_mentions", "load_dataset", "write_dataset",
    "Discretizer", "assign_cell", "build_kdtree", "cell_to_point",
    "MentionGraph", "build_collapsed_graph", "graph_stats", "sweep_threshold",
    "MadParams", "SeedSet", "SolveResult", "attach_dongles", "predict", "run_mad",
    "Metrics", "evaluate", "haversine_km",
    "TextModel", "Vocabulary", "featurize", "predict_prior", "train_text_model",
]
