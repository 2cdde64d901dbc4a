from .data import MinibatchSampler, read_idx_images, synthetic_images, train_test_split, write_idx_images
from .model import (
    AutoencoderParams,
    NonFiniteActivation,
    Shape,
    batch_loss,
    batch_loss_and_grad,
    flatten,
    forward,
    glorot_init,
    kink_distance,
    pearlmutter_hvp,
    unflatten,
)
from .objective import autoencoder_objective, estimate_meta, minibatch_oracle
