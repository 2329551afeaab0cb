"""Privacy-preserving face editing pipeline.

Masks the identity-sensitive facial region on-device, delegates the edit
to an untrusted generative backend, reintegrates the original face locally
(piecewise affine warp + Poisson blending), and quantifies the
privacy/utility trade-off.
"""

__version__ = "0.1.0"
