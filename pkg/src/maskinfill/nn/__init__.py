from .checkpoint import CheckpointError, load_module, load_tensors, save_module, save_tensors
from .gradcheck import gradient_check
from .layers import DTYPE, AcmlmNet, CnnClassifier, EncoderBlock, InvalidInput, embed_tokens, softmax_temperature
from .util import batches, derive_seed, pad_batch, seeded

__all__ = [
    "AcmlmNet", "CheckpointError", "CnnClassifier", "DTYPE", "EncoderBlock", "InvalidInput", "batches",
    "derive_seed", "embed_tokens", "gradient_check", "load_module", "load_tensors", "pad_batch", "save_module",
    "save_tensors", "seeded", "softmax_temperature",
]
