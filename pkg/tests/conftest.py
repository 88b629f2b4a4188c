"""Shared helpers for the test suite."""

import pytest

from cpdptw import instance


def make_case(n=2, n_depots=1, seed=0, n_uav=1, n_adr=1):
    """Small random instance plus a default mixed fleet parked at depot 0."""
    inst = instance.generate(n_customers=n, n_depots=n_depots, seed=seed)
    fleet = instance.default_fleet(n_uav, n_adr, inst.depot_nodes()[0])
    return inst, fleet


@pytest.fixture
def small_case():
    return make_case()
