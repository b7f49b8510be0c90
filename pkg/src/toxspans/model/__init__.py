from .checkpoint import ModelCheckpoint
from .crf import CRF
from .gradcheck import gradient_check
from .losses import Batch, collate, compute_loss, loss_crf, loss_msp, loss_sp, loss_sptc, loss_tc, loss_word
from .network import EncoderConfig, TaggerModel
from .training import TrainConfig, TrainingDiverged, metrics_log, select_checkpoints, train

__all__ = [
    "Batch", "CRF", "EncoderConfig", "ModelCheckpoint", "TaggerModel", "TrainConfig", "TrainingDiverged",
    "collate", "compute_loss", "gradient_check", "loss_crf", "loss_msp", "loss_sp", "loss_sptc", "loss_tc",
    "loss_word", "metrics_log", "select_checkpoints", "train",
]
