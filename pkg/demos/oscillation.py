"""A predictor that breaks equilibrium existence.

Two parallel edges from s to t: the short one (transit 1, capacity 1) and
a wide one (transit 2, capacity 2).  The commodity forecasts the short
edge's queue with a threshold rule: report the true length while it is
below 1, report 2 the moment it reaches 1.  Once the short queue hits 1
the forecast jumps, all inflow swerves to the wide edge, the queue drains
below 1, the forecast snaps back, and the inflow swerves again.  No
continuous-time flow can satisfy such a predictor; the discretization
shows it by flipping the route choice at every single decision round.
"""

from dpeflow import run_counterexample_demo


def main():
    epsilon, horizon = 0.25, 50.0
    demo = run_counterexample_demo(epsilon, horizon)

    print(f"round length {epsilon}, horizon {horizon}")
    print(f"rounds simulated:        {demo['rounds']}")
    print(f"route flips after t=1:   {demo['flips']}")
    print(f"short-edge queue at t=1: {demo['short_queue_at_1']:.12f}")

    print("\nshort-edge queue at the first rounds after t=1:")
    for t, q in demo["queue_trace"]:
        if 1.0 <= t <= 4.0:
            print(f"  t={t:5.2f}  q={q:.4f}")
    print("the queue bounces between 1.0 and 0.75 forever; refining the")
    print("round length only makes it bounce faster.")


if __name__ == "__main__":
    main()
