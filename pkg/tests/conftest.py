"""Shared helpers for the test suite."""

import numpy as np


def random_pseudometric(n, rng, scale=1.0, embed_dim=3):
    """Pairwise Euclidean distances of random points.

    Constructing the matrix this way gives symmetry, a zero diagonal, and the
    triangle inequality for free, so it is a valid pseudometric by build.
    """
    pts = rng.uniform(0.0, scale, size=(n, embed_dim))
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    np.fill_diagonal(d, 0.0)
    return d


def pessimism_mdp_tables(k=1.0):
    """Hand-built 3-state, 2-action example used across the suite.

    State 0 reaches state 1 under action 0 (reward k) and the sink state 2
    under action 1; state 1 mirrors it with the action labels swapped. The
    sink self-loops with zero reward. The optimal values of states 0 and 1
    coincide, yet the action-labeled metric separates them by k/(1-gamma).
    """
    next_state = np.array([[1, 2], [2, 0], [2, 2]])
    reward = np.array([[k, 0.0], [0.0, k], [0.0, 0.0]])
    return next_state, reward
