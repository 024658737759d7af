"""Shared test oracles: finite differences, relative error, a traced tree."""

import numpy as np

# A nested constituency tree over eight EDUs whose dependency form was
# traced by hand, arc by arc: each internal node's head is the leftmost
# nucleus descent, and every non-head child attaches to that head under
# the internal node's relation.
EIGHT_EDU_TREE = """
(Concession
  (S (Justify
       (N (edu 0))
       (S (Elaboration (N (edu 1)) (S (edu 2))))
       (S (edu 3))
       (S (Justify (N (edu 4)) (S (edu 5)) (S (edu 6))))))
  (N (edu 7)))
"""
EIGHT_EDU_HEADS = [7, 0, 1, 0, 0, 4, 4, -1]
EIGHT_EDU_RELATIONS = ["Concession", "Justify", "Elaboration",
                       "Justify", "Justify", "Justify", "Justify", None]


def fd_grad(forward, arr, eps=1e-5):
    """Central-difference gradient of a scalar function w.r.t. arr.

    forward() must recompute the scalar from scratch; arr is perturbed
    in place one element at a time and restored.
    """
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        hi = forward()
        arr[idx] = orig - eps
        lo = forward()
        arr[idx] = orig
        g[idx] = (hi - lo) / (2.0 * eps)
        it.iternext()
    return g


def rel_err(a, b, floor=1e-4):
    """Largest elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))
