"""Central finite-difference gradient oracle used across the test suite.

The oracle re-evaluates the forward function with perturbed inputs and never
touches the analytic backward path it checks.
"""

import numpy as np

STEP = 1e-5


def numeric_grads(fn, arrays, step=STEP):
    """Central differences of scalar fn() w.r.t. each array, perturbed in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn()
            flat[i] = orig - step
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def rel_error(analytic, numeric):
    """Max absolute difference, normalized by the numeric gradient's scale."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = max(float(np.max(np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / denom


def assert_grads_match(analytic_list, numeric_list, tol):
    assert len(analytic_list) == len(numeric_list)
    for analytic, numeric in zip(analytic_list, numeric_list):
        err = rel_error(analytic, numeric)
        assert err <= tol, f"gradient mismatch: rel error {err:.3e} > {tol:.0e}"
