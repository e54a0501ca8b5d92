#!/usr/bin/env python3
"""Walk the verdict decision table and the alert debouncer.

Hand-built class distributions are pushed through classify_window to
show each branch of the table: low confidence means novelty, a
confident malicious class is non-grata, a confident mismatch with the
declared name is masquerade, and everything else is normal.  A noisy
verdict stream then shows the debouncer holding fire until a finding
repeats n times in a row.
"""
import argparse

import numpy as np

from sccv import (AlertDebouncer, Thresholds, VerdictKind, classify_window,
                  format_alert_line)
from sccv.ml.model import Prediction

CLASSES = ["web-server", "database", "cryptominer"]
MALICIOUS = {"cryptominer"}


def pred(probs):
    probs = np.asarray(probs, dtype=np.float64)
    arg = int(np.argmax(probs))
    return Prediction(probs=probs, argmax=arg, confidence=float(probs[arg]))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tau-low", type=float, default=0.5)
    parser.add_argument("--tau-high", type=float, default=0.9)
    parser.add_argument("--debounce", type=int, default=3)
    args = parser.parse_args()

    th = Thresholds(args.tau_low, args.tau_high)
    print(f"thresholds: tau_low={th.tau_low} tau_high={th.tau_high}, "
          f"malicious classes: {sorted(MALICIOUS)}\n")

    cases = [
        ("confident, matches declared", [0.95, 0.03, 0.02], "web-server"),
        ("low confidence", [0.40, 0.35, 0.25], "web-server"),
        ("confident malicious", [0.02, 0.03, 0.95], "web-server"),
        ("confident mismatch", [0.04, 0.94, 0.02], "web-server"),
        ("confident malicious, even if declared", [0.01, 0.01, 0.98],
         "cryptominer"),
        ("mid band, mismatch", [0.20, 0.75, 0.05], "web-server"),
    ]
    for label, probs, declared in cases:
        v = classify_window(pred(probs), CLASSES, declared, th, MALICIOUS)
        print(f"  {label:<38} declared={declared:<12} "
              f"predicted={v.predicted_name:<12} conf={v.confidence:.2f} "
              f"-> {v.kind.value}")

    print(f"\ndebouncer (n={args.debounce}): a finding must repeat "
          f"{args.debounce} consecutive windows")
    seq = (["masquerade"] * 2 + ["normal"]
           + ["masquerade"] * args.debounce + ["masquerade"])
    deb = AlertDebouncer(args.debounce)
    NS = 1_000_000_000
    fired = None
    for i, want in enumerate(seq):
        if want == "normal":
            probs = [0.95, 0.03, 0.02]
        else:
            probs = [0.04, 0.94, 0.02]
        v = classify_window(pred(probs), CLASSES, "web-server", th,
                            MALICIOUS, host_id="web-3", pid=4242,
                            interval_start=i * NS, interval_len=NS)
        alert = deb.feed(v)
        note = ""
        if alert is not None:
            fired = alert
            note = f"  << ALERT (run of {alert.run_length})"
        print(f"  t={i}s {v.kind.value:<10}{note}")
    print("\nthe two leading masquerade verdicts never fire: the normal "
          "window resets\nthe run, and once fired the run must rebuild "
          "from zero before it can fire\nagain.")
    print("\nwire format of that alert "
          "(interval, host, pid, kind, predicted, declared, conf):")
    print(f"  {format_alert_line(fired)}")


if __name__ == "__main__":
    main()
