"""Average travel time per predictor over a grid of network inflows.

Replays the two-route scenario once per (inflow, predictor) pair.  At
inflow 2 no queue ever forms, every forecast is correct, and all
predictors tie at the free-flow cost of 3.  Just above that the curves
separate: the adaptive predictors chase the momentarily cheaper route and
leave a bottleneck idle now and then, while the oblivious even split keeps
both sink edges busy, so the zero predictor wins on this network.  Far
above saturation the ranking collapses again, because every choice leaves
the sink cut saturated over the same interval and the average travel time
depends only on that.
"""

from pathlib import Path

from dpeflow import load_scenario, run_sweep

DATA = Path(__file__).resolve().parents[1] / "data"

KINDS = ("zero", "constant", "linear", "reg_linear", "regression")


def main():
    scenario = load_scenario(DATA / "two_routes.scenario.json")
    totals = [2.0, 2.25, 2.5, 2.75, 3.0, 3.5, 4.0, 6.0, 10.0]
    rows = run_sweep(scenario, totals, KINDS)

    table = {(t, k): avg for t, k, avg in rows}
    print(f"{'inflow':>8} " + " ".join(f"{k:>10}" for k in KINDS))
    for t in totals:
        cells = " ".join(f"{table[t, k]:>10.4f}" for k in KINDS)
        print(f"{t:>8.2f} {cells}")


if __name__ == "__main__":
    main()
