#!/usr/bin/env python3
"""Show why temporal order matters: the twin-process experiment.

The twin profiles share one stationary syscall mix to working precision
but cycle through their states in opposite orders.  Any classifier that
only sees one interval at a time faces identical class-conditional
marginals and can do no better than chance plus noise; a recurrent model
reading the rows in order separates them almost perfectly.
"""
import argparse

import numpy as np

from sccv import default_table, generate_dataset, stationary_mix, twin_profiles
from sccv.ml import (ModelConfig, evaluate_macro, predict_windows, train,
                     train_baseline)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--windows-per-class", type=int, default=240)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    table = default_table()
    twins = twin_profiles(table)
    gap = float(np.abs(stationary_mix(twins[0])
                       - stationary_mix(twins[1])).max())
    print(f"profiles: {twins[0].name} vs {twins[1].name}")
    print(f"stationary mixes agree to {gap:.1e}; the per-interval feature "
          f"distribution\ncarries (almost) no label information.\n")

    train_ds, test_ds = generate_dataset(twins, args.windows_per_class,
                                         seed=args.seed)
    print(f"dataset: {len(train_ds)} train / {len(test_ds)} test windows, "
          f"W={train_ds.window}\n")

    rows, row_labels = train_ds.rows()
    baseline = train_baseline(rows, row_labels, 2, seed=args.seed)
    base_m = evaluate_macro(test_ds.y, baseline.predict_windows(test_ds.X), 2)
    print(f"logistic baseline + majority vote: macro recall "
          f"{base_m.macro_recall:.3f}  (close to the 0.5 coin flip)")

    config = ModelConfig(variant="simple", D=train_ds.dim, H=64, C=2,
                         epochs=args.epochs, seed=args.seed)
    result = train(config, train_ds, val_data=test_ds)
    preds, _ = predict_windows(result.params, config, test_ds.X)
    m = evaluate_macro(test_ds.y, preds, 2)
    print(f"simple LSTM ({args.epochs} epochs):   macro recall "
          f"{m.macro_recall:.3f}")

    print(f"\nconfusion (rows = truth {twins[0].name}/{twins[1].name}):")
    for name, row in zip((twins[0].name, twins[1].name), m.confusion):
        print(f"  {name:<10} {row.tolist()}")
    print("\nsame inputs, same split, same budget style; the only edge the "
          "LSTM has\nis memory across the window's rows.")


if __name__ == "__main__":
    main()
