"""Federated learning simulator: quantized variance-reduced training over
heterogeneous wireless edge networks, with FedAvg and SCAFFOLD baselines."""

__version__ = "0.1.0"
