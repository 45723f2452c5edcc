"""End-to-end steps shared by the command line, the scripts and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .evalreport import EvalSummary, ParamMapping, evaluate_reconstruction
from .hypervolume import HyperVolumeCoeffs
from .imaging import CircleStack, ImageStack, add_noise, polar_fourier_batch
from .phantom import phantom_projection_image, phantom_to_hypervolume
from .reconstruct import ReconResult, reconstruct
from .sphharm import Rotation, random_euler


def simulate(cfg: RunConfig, noisy: bool = True) -> ImageStack:
    """Projection images of the configured phantom at Haar-random rotations and uniform ``t``.

    Labels (Euler angles, ``t``) and the noise are drawn from one generator
    seeded by ``(1, cfg.seed)``; the reconstruction uses a separate stream.
    """
    ph = cfg.make_phantom()
    rng = np.random.default_rng([1, cfg.seed])
    eulers = random_euler(rng, cfg.images)
    ts = rng.uniform(0.0, 1.0, cfg.images)
    imgs = np.empty((cfg.images, cfg.N, cfg.N))
    for i, (e, t) in enumerate(zip(eulers, ts)):
        imgs[i] = phantom_projection_image(ph, Rotation(*e), t, cfg.N, cfg.h)
    stack = ImageStack(imgs, cfg.h, eulers, ts)
    if noisy:
        stack = add_noise(stack, cfg.snr, rng)
    return stack


def truth_volume(cfg: RunConfig) -> HyperVolumeCoeffs:
    return phantom_to_hypervolume(cfg.make_phantom(), cfg.grid(), cfg.basis_spec())


def preprocess(stack: ImageStack, cfg: RunConfig) -> CircleStack:
    return polar_fourier_batch(stack.images, cfg.grid(), stack.pixel_size)


def run_reconstruction(circles: CircleStack, cfg: RunConfig, callback=None) -> ReconResult:
    return reconstruct(circles, cfg.recon_config(), callback=callback)


@dataclass
class RunOutcome:
    config: RunConfig
    truth: HyperVolumeCoeffs
    result: ReconResult
    t_true: np.ndarray
    summary: EvalSummary


def run_experiment(cfg: RunConfig, callback=None) -> RunOutcome:
    """Simulate, preprocess, reconstruct and evaluate one configuration."""
    stack = simulate(cfg)
    circles = preprocess(stack, cfg)
    result = run_reconstruction(circles, cfg, callback)
    truth = truth_volume(cfg)
    t_est = np.array([a.t for a in result.assignments])
    summary = evaluate_reconstruction(result.hv, truth, ParamMapping(stack.ts, t_est))
    return RunOutcome(cfg, truth, result, stack.ts, summary)
