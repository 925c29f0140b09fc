"""Karhunen-Loeve variance estimators and the studentized Rice test.

At a fixed point z the whitened residual quadratic forms give
(2N-1) s2_z ~ chi2(2N-1) and (2N-3) s2_cond ~ chi2(2N-3); the demo checks
the first two moments empirically, then runs the T-variant of the Rice test
on a single observation without using the true noise level.
"""

import numpy as np

from srknots import (
    AtomicMeasure,
    RngStream,
    compute_certificate,
    rice_unknown,
    sigma_hat_cond,
    sigma_hat_grid,
    synthesize,
)

F_C = 3
REPS = 200
SEED = 515
Z = (0.0, 0.0)


def main():
    n = 2 * F_C + 1
    s2_grid = np.empty(REPS)
    s2_cond = np.empty(REPS)
    for rep in range(REPS):
        obs = synthesize(AtomicMeasure.empty(), F_C, 1.0, RngStream(SEED, rep))
        s2_grid[rep] = sigma_hat_grid(obs, Z).value
        s2_cond[rep] = sigma_hat_cond(obs, Z).value

    for name, s2, dof in (("s2_z", s2_grid, 2 * n - 1), ("s2_cond", s2_cond, 2 * n - 3)):
        scaled = dof * s2
        print("%-8s dof = %2d   mean(dof * s2) = %6.3f (expect %d)   "
              "var = %6.2f (expect %d)"
              % (name, dof, scaled.mean(), dof, scaled.var(ddof=1), 2 * dof))

    obs = synthesize(AtomicMeasure.empty(), F_C, 1.0, RngStream(SEED, 0))
    cert = compute_certificate(obs)
    report = rice_unknown(cert, sigma_hat_cond(obs, cert.z_hat), obs.context())
    print("t_rice on one draw: value = %.6f, sigma_hat = %.4f, dof = %d"
          % (report.value, report.aux["sigma_hat"], report.aux["dof"]))


if __name__ == "__main__":
    main()
