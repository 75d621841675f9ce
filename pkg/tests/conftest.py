from pathlib import Path

import numpy as np
import pytest

from dpeflow.network import (
    Commodity,
    Network,
    Scenario,
    block_inflow,
    import_tntp,
    random_commodities,
)
from dpeflow.simulation import run

DATA = Path(__file__).parent.parent / "data"

PREDICTOR_CYCLE = (
    {"kind": "zero"},
    {"kind": "constant"},
    {"kind": "linear"},
    {"kind": "reg_linear"},
    {"kind": "regression"},
)


def random_scenario(seed: int) -> Scenario:
    """Seeded random instance: small network, a few block-inflow commodities.

    Transit times stay >= 0.5 and inflows end well before the horizon so
    every instance is comfortably simulable at step 0.5.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 10))
    nodes = [f"n{i}" for i in range(n)]
    edges = []
    for i in range(n - 1):  # spine keeps everything connected
        edges.append((nodes[i], nodes[i + 1],
                      float(rng.uniform(0.5, 3.0)),
                      float(rng.uniform(0.5, 3.0))))
    for _ in range(int(rng.integers(n, 3 * n))):
        a, b = rng.integers(0, n, 2)
        if a == b:
            continue
        edges.append((nodes[a], nodes[b],
                      float(rng.uniform(0.5, 3.0)),
                      float(rng.uniform(0.5, 3.0))))
    net = Network(nodes, edges)

    n_comm = int(rng.integers(1, 4))
    comms = []
    for ci in range(n_comm):
        source = nodes[int(rng.integers(0, n - 1))]
        reachable = sorted(net.reachable_from(source) - {source})
        sink = reachable[int(rng.integers(0, len(reachable)))]
        rate = float(rng.uniform(0.3, 4.0))
        duration = float(rng.uniform(3.0, 10.0))
        spec = PREDICTOR_CYCLE[int(rng.integers(0, 4))]  # no regression here
        comms.append(Commodity(ci, source, sink,
                               block_inflow(rate, duration), dict(spec)))
    return Scenario(network=net, commodities=tuple(comms),
                    prediction_step=0.5,
                    horizon=float(rng.uniform(20.0, 30.0)),
                    seed=seed)


@pytest.fixture(scope="session")
def sioux_network():
    return import_tntp(DATA / "sioux_falls_net.tntp")


@pytest.fixture(scope="session")
def sioux_scenario(sioux_network):
    commodities = random_commodities(
        sioux_network, 12, seed=12, inflow_factor=0.5, inflow_cutoff=25.0,
        predictor_kinds=PREDICTOR_CYCLE)
    return Scenario(network=sioux_network, commodities=commodities,
                    prediction_step=1.0, horizon=100.0, seed=12)


@pytest.fixture(scope="session")
def sioux_training_corpus(sioux_network):
    """Constant-predictor traces over re-drawn commodities, the training corpus."""
    states = []
    for seed in (12, 13, 14):
        comms = random_commodities(
            sioux_network, 12, seed=seed, inflow_factor=0.5,
            inflow_cutoff=25.0, predictor_kinds=({"kind": "constant"},))
        scenario = Scenario(network=sioux_network, commodities=comms,
                            prediction_step=1.0, horizon=100.0, seed=seed)
        states.append(run(scenario, record_rounds=False).state)
    return states
