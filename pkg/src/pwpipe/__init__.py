"""Plane-wave ultrasound enhancement pipeline.

Library layout:

- ``acquisition``: synthetic RF channel data from point-scatterer phantoms,
  plus the PWRF file format.
- ``beamform``: delay-and-sum plane-wave beamforming with dynamic receive
  focusing and coherent compounding.
- ``imgproc``: envelope detection, log compression, bicubic upsampling,
  histogram matching and unsharp masking (the classical enhancement path),
  plus the PWIM/PGM image formats.
- ``nn``: a small NHWC tensor engine, the U-Net generator and PatchGAN
  discriminator graphs, and the PWNN weight format.
- ``train``: per-layer backpropagation, ADAM, adversarial/cycle losses and
  desk-scale training harnesses.
- ``metrics``: normalized RMSE, SSIM, CNR and ROI statistics.
- ``stats``: reader-score aggregation, Friedman ANOVA, Nemenyi post-hoc and
  the power-analysis sample size search.
- ``pipeline``: end-to-end orchestration, the streaming loop and the frame
  rate benchmark; ``cli`` exposes it all as subcommands.
"""

__version__ = "0.1.0"

from . import (  # noqa: E402,F401
    acquisition,
    beamform,
    config,
    imgproc,
    metrics,
    nn,
    pipeline,
    report,
    stats,
    train,
)
