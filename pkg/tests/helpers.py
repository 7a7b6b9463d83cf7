"""
Statistical assertion helpers shared by the test suites
"""

import numpy as np


def assert_within_mcse(draws, expected, k=4.0):
    """Sample mean within k Monte Carlo standard errors of the expected value"""
    draws = np.asarray(draws, dtype=float)
    mcse = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - expected) <= k * mcse + 1e-12, (
        f"mean {draws.mean():.6g} vs expected {expected:.6g} (mcse {mcse:.3g})"
    )


def assert_proportion(hits, total, p, k=4.0):
    """Observed proportion within k binomial standard errors of p"""
    se = np.sqrt(p * (1 - p) / total)
    observed = hits / total
    assert abs(observed - p) <= k * se + 1e-12, f"proportion {observed:.4f} vs {p:.4f} (se {se:.3g})"


def total_variation(samples, grid, density):
    """Binned TV distance between samples and a density evaluated on an equally spaced grid"""
    edges = np.concatenate([grid - np.diff(grid)[0] / 2, [grid[-1] + np.diff(grid)[0] / 2]])
    counts, _ = np.histogram(samples, bins=edges)
    p_hat = counts / len(samples)
    p = density / density.sum()
    return 0.5 * np.abs(p_hat - p).sum()
