from ._backend import BACKEND, available
from .model import (
    FORMAT_VERSION,
    Forest,
    Hyperparams,
    Tree,
    fit,
    fit_arrays,
    load_model,
    logistic_loss,
    predict,
    predict_proba,
    save_model,
    sigmoid,
)

__all__ = [
    "BACKEND", "FORMAT_VERSION", "Forest", "Hyperparams", "Tree", "available", "fit",
    "fit_arrays", "load_model", "logistic_loss", "predict", "predict_proba", "save_model", "sigmoid",
]
