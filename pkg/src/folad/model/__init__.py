from .network import EgoPredictor, HiddenState, ModelConfig, ModelParams, ego_predict, fol_decode, fol_encode
from .training import Batch, forward_backward, loss, train

__all__ = ["Batch", "EgoPredictor", "HiddenState", "ModelConfig", "ModelParams", "ego_predict",
           "fol_decode", "fol_encode", "forward_backward", "loss", "train"]
