"""Shared test utilities: rank correlations and ball sampling."""
import numpy as np


def pearson(x, y) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])


def spearman(x, y) -> float:
    def ranks(v):
        return np.argsort(np.argsort(v))

    return pearson(ranks(np.asarray(x, float)), ranks(np.asarray(y, float)))


def ball_batch(rng, n, d, c=1.0, max_radius=0.95) -> np.ndarray:
    """Random points with uniform directions and radii spread inside the ball."""
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    radii = max_radius * rng.random((n, 1)) ** (1.0 / d) / np.sqrt(c)
    return x * radii
