"""Null calibration at desk scale: the Rice test is uniform, the plain
spacing ratio is not.

200 replications keep this under half a minute; the full-scale runs (2000
reps, f_c up to 7) live in the acceptance suite and the `srknots calibrate`
command.
"""

import os

from srknots import (
    ExperimentConfig,
    ecdf_multi,
    emit_svg,
    empirical_level,
    ks_uniform,
    run_experiment,
)

F_C = 3
REPS = 200
SEED = 515
OUT = "out/demo_rice_calibration.svg"


def main():
    config = ExperimentConfig(
        f_c=F_C, reps=REPS, seed=SEED, statistics=("rice", "spacing")
    )
    table = run_experiment(config)
    print("f_c = %d, %d null replications (excluded: %d)"
          % (F_C, REPS, table.n_excluded))
    for name in config.statistics:
        values = table.values[name]
        print("%-8s KS to U[0,1] = %.4f   level at 0.05 = %.3f"
              % (name, ks_uniform(values), empirical_level(values, 0.05)))
    print("(99%% KS band at %d reps: %.4f)" % (REPS, 1.63 / REPS**0.5))

    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    emit_svg(ecdf_multi(table.values), OUT, title="null ECDFs, f_c = %d" % F_C)
    print("wrote %s" % OUT)


if __name__ == "__main__":
    main()
