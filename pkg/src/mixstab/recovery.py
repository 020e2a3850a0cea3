"""Local recovery maps and Markov-length estimation.

Recovery undoes a layered process one gate at a time, newest first. The
map for a gate on patch ``S`` reads the patch and a collar of sites at
graph distance ``1..r`` and resamples the patch from the Bayes posterior of
the pre-gate distribution restricted to patch and collar.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import PreconditionError
from .gibbs import DiscreteDistribution, cmi, marginal, total_variation
from .graph import annulus_tripartition, graph_distance
from .noise import apply_channel, apply_process

CMI_FLOOR = 1e-14


def collar(g, patch, radius):
    """Sites at graph distance 1..radius from ``patch``."""
    dist = g.bfs_distances(g.region(patch))
    return tuple(v for v in range(g.n_vertices) if 1 <= dist[v] <= radius)


def build_patch_recovery(p_before, ch, collar_sites):
    """Recovery table ``R[x_S, y_S, y_col]`` for gate ``ch`` given the pre-gate distribution.

    Where the posterior denominator vanishes the map copies ``y_S``.
    """
    s = list(ch.support)
    col = [v for v in collar_sites if v not in set(s)]
    joint = marginal(p_before, s + col).ordered(s + col).table
    k = math.prod(ch.dims)
    col_shape = joint.shape[len(s):]
    joint = joint.reshape(k, -1)
    # numer[x, y, c] = P(x, c) T(y | x)
    numer = ch.matrix.T[:, :, None] * joint[:, None, :]
    denom = numer.sum(axis=0, keepdims=True)
    eye = np.broadcast_to(np.eye(k)[:, :, None], numer.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, numer / np.where(denom > 0, denom, 1.0), eye)
    return r.reshape((k, k) + col_shape), tuple(col)


def _apply_recovery(p, ch, table, col):
    """Replace the patch by a draw from ``table`` given the patch and collar values."""
    s = list(ch.support)
    k = math.prod(ch.dims)
    axes = p.axes(s + list(col))
    order = axes + [a for a in range(len(p.variables)) if a not in axes]
    t = np.transpose(p.table, order)
    rest = t.shape[len(axes):]
    ncol = int(np.prod(t.shape[len(s):len(axes)], dtype=int))
    t = t.reshape(k, ncol, -1)
    r = table.reshape(k, k, ncol)
    out = np.einsum("xyc,ycr->xcr", r, t)
    out = out.reshape(tuple(ch.dims) + tuple(p.table.shape[a] for a in axes[len(s):]) + rest)
    out = np.transpose(out, np.argsort(order))
    return DiscreteDistribution(p.variables, np.clip(out, 0.0, None), normalize=True)


class PatchRecovery(BaseEstimator, TransformerMixin):
    """Gate-by-gate local recovery of a noisy distribution.

    Parameters
    ----------
    graph : Hypergraph
        Interaction graph defining collar distances.
    radius : int
        Collar radius r >= 0.
    """

    def __init__(self, graph=None, radius=1):
        self.graph = graph
        self.radius = radius

    def fit(self, p_clean, process):
        """Compute recovery maps from the clean distribution and the process."""
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if self.graph is None:
            raise PreconditionError("PatchRecovery needs a graph")
        steps = []
        p = p_clean
        for _, ch in process.gates():
            col = collar(self.graph, ch.support, self.radius)
            table, col = build_patch_recovery(p, ch, col)
            steps.append((ch, table, col))
            p = apply_channel(p, ch)
        self.steps_ = steps
        self.noisy_ = p
        return self

    def transform(self, p_noisy):
        check_is_fitted(self, "steps_")
        p = p_noisy
        for ch, table, col in reversed(self.steps_):
            p = _apply_recovery(p, ch, table, col)
        return p


def build_recoveries(g, p_clean, process, radii):
    return {r: PatchRecovery(g, r).fit(p_clean, process) for r in radii}


def recovery_error(g, p_clean, process, radius):
    """(TV after recovery, TV with no recovery)."""
    rec = PatchRecovery(g, radius).fit(p_clean, process)
    noisy = rec.noisy_
    return total_variation(rec.transform(noisy), p_clean), total_variation(noisy, p_clean)


class MarkovLength(BaseEstimator):
    """Exponential fit ``I(d) <= c exp(-d / xi)`` of CMI against separation.

    ``fit`` regresses ``log I`` on ``d`` by least squares. ``xi_`` is
    ``-1 / slope`` (infinite when the slope is not negative). ``c_`` is the
    smallest prefactor for which every sample lies under the fitted decay;
    the least-squares intercept and its RMS residual are kept alongside.
    """

    def __init__(self, floor=CMI_FLOOR):
        self.floor = floor

    def fit(self, distances, cmis):
        d = np.asarray(distances, dtype=float)
        y = np.asarray(cmis, dtype=float)
        if d.shape != y.shape or d.ndim != 1:
            raise ValueError("distances and cmis must be equal-length vectors")
        keep = y > self.floor
        if keep.sum() < 2:
            raise PreconditionError("need at least two CMI samples above the floor")
        slope, intercept = np.polyfit(d[keep], np.log(y[keep]), 1)
        resid = np.log(y[keep]) - (slope * d[keep] + intercept)
        self.slope_ = float(slope)
        self.intercept_ = float(intercept)
        self.residual_ = float(np.sqrt(np.mean(resid**2)))
        self.xi_ = -1.0 / self.slope_ if self.slope_ < 0 else math.inf
        if math.isfinite(self.xi_):
            self.c_ = float(np.max(y * np.exp(d / self.xi_)))
        else:
            self.c_ = float(np.max(y))
        self.distances_ = d
        self.cmis_ = y
        return self

    def predict(self, distances):
        check_is_fitted(self, "xi_")
        d = np.asarray(distances, dtype=float)
        if not math.isfinite(self.xi_):
            return np.full(d.shape, self.c_)
        return self.c_ * np.exp(-d / self.xi_)

    def bound_holds(self, rtol=1e-9):
        return bool(np.all(self.cmis_ <= self.predict(self.distances_) * (1 + rtol)))


def cmi_profile(g, p, center, radii):
    """[(radius, d_AC, CMI)] over annulus tripartitions around ``center``."""
    rows = []
    for r in radii:
        t = annulus_tripartition(g, center, r)
        if not t.C:
            break
        rows.append((r, graph_distance(g, t.A, t.C), cmi(p, t)))
    return rows


def fit_markov_length(g, p, center, radii):
    rows = cmi_profile(g, p, center, radii)
    return MarkovLength().fit([d for _, d, _ in rows], [c for _, _, c in rows]), rows


def noisy_distribution(p, process):
    return apply_process(p, process)
