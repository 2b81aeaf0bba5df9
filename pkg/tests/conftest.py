import os
import tempfile

import numpy as np
import pytest

from tailslab.evolution import (GaussianBump, NonlinearCoefficient,
                                OutputPlan, ProblemSpec, evolve)
from tailslab.geometry import build_metric


@pytest.fixture(scope="session")
def flat_metric():
    return build_metric("minkowski_hyperboloidal", 0, None)


@pytest.fixture(scope="session")
def small_linear_run(flat_metric):
    """Flat linear Gaussian run, n=400, t=60: shared by several tests."""
    spec = ProblemSpec(metric=flat_metric, power=3,
                       nonlin=NonlinearCoefficient(0.0),
                       data=GaussianBump(amplitude=0.1, width=0.5),
                       symmetry="spherical")
    plan = OutputPlan(n=400, probe_radii=(1.0, 5.0), trace_dt=0.02,
                      t_dense=60.0, snapshot_dt=0.5, snapshot_until=30.0)
    return evolve(spec, 60.0, plan)


@pytest.fixture(scope="session")
def small_cubic_run(flat_metric):
    """Flat cubic small-data run, n=400, t=300: radiation/coefficient tests."""
    spec = ProblemSpec(metric=flat_metric, power=3,
                       nonlin=NonlinearCoefficient(1.0),
                       data=GaussianBump(amplitude=0.1, width=0.5),
                       symmetry="spherical")
    plan = OutputPlan(n=400, probe_radii=(1.0, 5.0, 20.0), trace_dt=0.02,
                      t_dense=80.0, trace_dt_coarse=0.5,
                      snapshot_dt=0.1, snapshot_until=40.0)
    return evolve(spec, 300.0, plan)


@pytest.fixture()
def tmp_out(monkeypatch):
    d = tempfile.mkdtemp(prefix="tailslab-test-")
    monkeypatch.setenv("TAILSLAB_OUT", d)
    return d
