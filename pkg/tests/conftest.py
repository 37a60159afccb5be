"""Shared fixtures: expensive trajectory runs reused across test modules."""

import pytest

from jcblink import model
from jcblink.mcwf import TrajectoryConfig, run_trajectory


@pytest.fixture(scope="session")
def blinking_record():
    """g=50 workpoint telegraph run: blinks between ~0 and ~50 photons.

    Long enough (1600/kappa) for a handful of complete dwell periods.  The
    cutoff sits in the narrow window that both clears the transient
    excursions of switch-on cascades (>= 116 over this span) and keeps the
    spectral propagator's eigenbasis well conditioned (<= 116 at this drive).
    """
    p = model.ModelParams(g=50.0, delta=-5.0, eta=12.5, cutoff=116)
    cfg = TrajectoryConfig(seed=1, t_final=1600.0, burn_in=0.0)
    return run_trajectory(p, cfg)
