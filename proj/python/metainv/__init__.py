"""Sparse-view CT reconstruction toolkit.

C++ core exposed through the `_core` extension: a matched forward/back
projector pair, Ram-Lak FBP, the HQS-CG reconstructor, and the unrolled
variant with a learned CG warm start, plus phantoms, noise simulation and
image-quality metrics.
"""

from ._core import (
    Beam,
    ScanGeometry,
    back_project,
    fbp,
    forward_project,
    frame_highpass,
    frame_highpass_adjoint,
    hqs_cg,
    load_tensor,
    make_geometry,
    metainv_reconstruct,
    ms_ssim,
    psnr,
    ramlak_filter,
    random_phantom,
    save_tensor,
    shepp_logan,
    simulate_sinogram,
    ssim,
)

__all__ = [
    "Beam",
    "ScanGeometry",
    "back_project",
    "fbp",
    "forward_project",
    "frame_highpass",
    "frame_highpass_adjoint",
    "hqs_cg",
    "load_tensor",
    "make_geometry",
    "metainv_reconstruct",
    "ms_ssim",
    "psnr",
    "ramlak_filter",
    "random_phantom",
    "save_tensor",
    "shepp_logan",
    "simulate_sinogram",
    "ssim",
]
