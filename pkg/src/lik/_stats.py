import numpy as np

# A row whose spread is below this fraction of its magnitude counts as constant.
ZERO_VAR_RTOL = 1e-12


def center_rows(A, w=None):
    """Center each row (optionally with normalized row weights ``w``).

    Returns ``(centered, norm, flat)`` where ``norm`` is the (weighted) root sum
    of squares of the centered row and ``flat`` marks numerically constant rows.
    """
    if w is None:
        mean = A.mean(axis=-1, keepdims=True)
        Ac = A - mean
        norm = np.sqrt(np.sum(Ac * Ac, axis=-1))
        scale = np.sqrt(np.sum(A * A, axis=-1))
    else:
        mean = np.sum(w * A, axis=-1, keepdims=True)
        Ac = A - mean
        norm = np.sqrt(np.sum(w * Ac * Ac, axis=-1))
        scale = np.sqrt(np.sum(w * A * A, axis=-1))
    flat = norm <= ZERO_VAR_RTOL * scale
    return Ac, norm, flat


def rowwise_corr(A, B, w=None):
    """Pearson correlation of matching rows; constant rows give 0 and are flagged."""
    Ac, na, fa = center_rows(A, w)
    Bc, nb, fb = center_rows(B, w)
    prod = Ac * Bc if w is None else w * Ac * Bc
    flagged = fa | fb
    denom = np.where(flagged, 1.0, na * nb)
    corr = np.where(flagged, 0.0, np.sum(prod, axis=-1) / denom)
    return corr, flagged
