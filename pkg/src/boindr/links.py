"""Link functions mapping toxicity probabilities to the linear-predictor scale.

Three links are supported: ``logit``, ``loglog`` and ``cloglog``.  Forward maps
take a probability in (0, 1) to the real line; inverses clamp their output to
``[PROB_CLAMP, 1 - PROB_CLAMP]`` so downstream log-likelihoods never see 0 or 1.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import UnsupportedFamilyError

LINKS = ("logit", "loglog", "cloglog")

# Inverse-link outputs are clamped away from {0, 1} to keep log terms finite.
PROB_CLAMP = 1e-12


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


def link_forward(link: str, p):
    """Map probability ``p`` through the named link. ``p`` must lie in (0, 1)."""
    p = _as_array(p)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("link_forward requires probabilities strictly inside (0, 1)")
    if link == "logit":
        out = np.log(p) - np.log1p(-p)
    elif link == "loglog":
        out = -np.log(-np.log(p))
    elif link == "cloglog":
        out = np.log(-np.log1p(-p))
    else:
        raise UnsupportedFamilyError(f"unknown link: {link!r}")
    return out if out.shape else float(out)


def link_inverse(link: str, x):
    """Invert the named link, clamping the result to [PROB_CLAMP, 1 - PROB_CLAMP]."""
    x = _as_array(x)
    # saturating tails overflow the inner exp; the clamp below absorbs them
    with np.errstate(over="ignore"):
        if link == "logit":
            p = expit(x)
        elif link == "loglog":
            p = np.exp(-np.exp(-x))
        elif link == "cloglog":
            # 1 - exp(-exp(x)) computed via expm1 for small exp(x)
            p = -np.expm1(-np.exp(x))
        else:
            raise UnsupportedFamilyError(f"unknown link: {link!r}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return p if p.shape else float(p)
