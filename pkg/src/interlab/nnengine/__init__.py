from interlab.nnengine.data import Dataset, DatasetSpec, load_dataset, make_blobs, read_idx, write_idx
from interlab.nnengine.model import (
    LOSS_KINDS,
    Activation,
    Dense,
    LossKind,
    Model,
    Residual,
    backward_batch,
    forward,
    forward_batch,
    full_hessian,
    hessian_fd,
    hessian_probe,
    input_gradient,
    input_gradient_batch,
    linear,
    loss,
    loss_batch,
    margin_from_logits,
    mlp,
    residual_mlp,
)
from interlab.nnengine.serialize import load_model, save_model
from interlab.nnengine.train import accuracy, train

__all__ = [
    "Activation", "Dataset", "DatasetSpec", "Dense", "LOSS_KINDS", "LossKind", "Model", "Residual",
    "accuracy", "backward_batch", "forward", "forward_batch", "full_hessian", "hessian_fd",
    "hessian_probe", "input_gradient", "input_gradient_batch", "linear", "load_dataset", "load_model",
    "loss", "loss_batch", "make_blobs", "margin_from_logits", "mlp", "read_idx", "residual_mlp",
    "save_model", "train", "write_idx",
]
