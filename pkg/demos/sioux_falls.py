"""End-to-end pipeline on the Sioux Falls network.

Imports the TNTP file, draws random commodities, generates a training
trace with everyone on the constant predictor, fits the regression model,
and then measures the predictors against each other: five probe
commodities with negligible inflow share the source and sink of the first
commodity, one probe per predictor, while the bulk traffic keeps using the
constant predictor and builds the same queues the model was trained on.
"""

import tempfile
from pathlib import Path

from dpeflow import (
    Commodity,
    Scenario,
    block_inflow,
    compute_metrics,
    import_tntp,
    random_commodities,
    run,
    train_regression,
)

DATA = Path(__file__).resolve().parents[1] / "data"

KINDS = ("zero", "constant", "linear", "reg_linear", "regression")


def main():
    net = import_tntp(DATA / "sioux_falls_net.tntp")
    print(f"imported {net}")

    comms = random_commodities(net, 12, seed=12, inflow_factor=0.5,
                               inflow_cutoff=25.0,
                               predictor_kinds=({"kind": "constant"},))
    scenario = Scenario(network=net, commodities=comms, prediction_step=1.0,
                        horizon=100.0, seed=12)
    print("simulating the all-constant training run ...")
    trace = run(scenario, record_rounds=False).state

    model = train_regression(trace, lags=10, samples=10, sample_step=1.0,
                             neighborhood_radius=5, grid_step=0.5, seed=3)
    scores = sorted(model.scores.values())
    print(f"trained {len(model.coefficients)} per-edge coefficient sets")
    print(f"holdout R^2: median {scores[len(scores) // 2]:.3f}, "
          f"min {scores[0]:.3f}, max {scores[-1]:.3f}")

    out = Path(tempfile.mkdtemp()) / "sioux_model.json"
    model.save(out)
    print(f"model written to {out}")

    probes = []
    base = comms[0]
    for j, kind in enumerate(KINDS):
        spec = {"kind": kind}
        if kind == "regression":
            spec["model"] = str(out)
        probes.append(Commodity(len(comms) + j, base.source, base.sink,
                                block_inflow(0.05, 25.0), spec))
    eval_scenario = Scenario(network=net, commodities=comms + tuple(probes),
                             prediction_step=1.0, horizon=100.0, seed=12)
    print(f"\nsimulating with probe commodities {base.source} -> {base.sink} ...")
    report = compute_metrics(run(eval_scenario, record_rounds=False))

    print(f"{'predictor':>12} {'avg travel time':>16}")
    for row in report.rows[len(comms):]:
        print(f"{row.predictor:>12} {row.avg_tt:>16.4f}")


if __name__ == "__main__":
    main()
