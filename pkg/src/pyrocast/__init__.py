"""pyrocast: surrogate emulators for monthly burnt-area dynamics.

Two model families forecast gridded monthly fields autoregressively: a
per-variable convolutional autoencoder feeding a latent sequence-to-sequence
recurrent network, and a joint convolutional-recurrent network operating
directly in field space.  A deterministic synthetic scenario generator makes
the whole pipeline testable at desk scale without external data.
"""

__version__ = "0.1.0"
