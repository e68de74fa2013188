"""
From-scratch numpy networks: layers, the VAE and latent predictor, losses,
Adam and gradient verification
"""
from app.neuralnet.layers import BatchNorm, Dense, Parameter, ReLU, Sequential, Sigmoid
from app.neuralnet.losses import LossResult, dnn_loss, kl_divergence, vae_loss
from app.neuralnet.networks import LatentGaussian, Network, PredictorDnn, VaeModel, build_network
from app.neuralnet.optim import Adam, AdamState, adam_step

__all__ = [
    "Adam", "AdamState", "BatchNorm", "Dense", "LatentGaussian", "LossResult", "Network",
    "Parameter", "PredictorDnn", "ReLU", "Sequential", "Sigmoid", "VaeModel",
    "adam_step", "build_network", "dnn_loss", "kl_divergence", "vae_loss",
]
