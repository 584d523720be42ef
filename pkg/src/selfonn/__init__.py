"""1D Self-ONN: generative-neuron networks for R-peak detection in Holter ECG."""

from .errors import FormatError, InvalidArgumentError, InvalidStateError, ParseError
from .layer import GenerativeLayerParams, backward, forward_naive, forward_vectorized, init_params
from .network import Model, NetworkConfig, build_model, gradcheck, model_backward, model_forward, predict, train
from .pipeline import MatchCounts, Metrics, Signal1D, compute_metrics, extract_peaks, match_peaks

__all__ = [
    "FormatError", "InvalidArgumentError", "InvalidStateError", "ParseError",
    "GenerativeLayerParams", "backward", "forward_naive", "forward_vectorized", "init_params",
    "Model", "NetworkConfig", "build_model", "gradcheck", "model_backward", "model_forward", "predict", "train",
    "MatchCounts", "Metrics", "Signal1D", "compute_metrics", "extract_peaks", "match_peaks",
]
