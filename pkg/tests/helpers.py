"""Shared test utilities: independent dense oracles and scenario builders."""

import numpy as np

from needlesim.beam import BeamProperties, element_stiffness, foundation_element_matrices
from needlesim.sim import BevelSpec, NeedleSpec, Pose, Simulator, StepInputs
from needlesim.tissue import Boundary, OgdenLayer, TissueDomain

DEFAULT_PROPS = BeamProperties.from_tube(80e9, 1.27e-3, 1.0e-3)


def band_matvec(ab, x):
    """y = A x for upper-banded symmetric storage (independent reimplementation)."""
    u = ab.shape[0] - 1
    y = ab[u] * x
    for d in range(1, u + 1):
        y[:-d] += ab[u - d, d:] * x[d:]
        y[d:] += ab[u - d, d:] * x[:-d]
    return y


def default_needle(length=0.15, h=1e-3):
    return NeedleSpec(length, h, DEFAULT_PROPS)


def single_layer_domain(mu=2e5, alpha=1.0, gamma=0.0, thickness=0.04, entry_x=0.0):
    layer = OgdenLayer(0, mu, alpha, gamma, thickness,
                       Boundary((entry_x, -0.04), (entry_x, 0.04)))
    return TissueDomain([layer])


def make_sim(mu=2e5, alpha=1.0, bevel=0.085e-3, direction=1, tip_gap=0.0,
             needle=None, domain=None, **kwargs):
    """Simulator with the tip `tip_gap` metres before a vertical entry at x=0."""
    needle = needle or default_needle()
    domain = domain or single_layer_domain(mu=mu, alpha=alpha)
    pose = Pose(-needle.length - tip_gap, 0.0, 0.0)
    return Simulator(needle, domain, BevelSpec(bevel, direction), pose, **kwargs)


def insertion_script(n_steps, dh=1e-3):
    return [StepInputs(advance=dh) for _ in range(n_steps)]
