"""Hierarchical cluster summation for the pairwise kernel sums.

Sums U_i = sum_j q_j phi(x_i, y_j) are evaluated by particle-cluster
interactions: sources are organized in a 2^d-way spatial bisection tree; a
cluster c with center y_c (box midpoint) and radius r_c = max_j |y_c - y_j| is
admissible for target x when r_c / |x - y_c| <= theta (the multipole
acceptance criterion), in which case the kernel is replaced by its Taylor
expansion about y_c contracted with the cluster moments
m_c^k = sum_j q_j (y_j - y_c)^k up to total order p. Inadmissible leaves fall
back to direct summation, so the singular collision kernel is never expanded
at short range.

Taylor coefficients a^k = (1/k!) D_y^k phi are generated by recurrences:
  Gaussian   eps k_s a^k + u_s a^(k-e_s) + a^(k-2e_s) = 0
  |u|^beta   |u|^2 a^k + (2-(2+beta)/k_s) u_s a^(k-e_s)
                + (1-(2+beta)/k_s) a^(k-2e_s)
                + sum_(t != s) [2 u_t a^(k-e_t) + a^(k-2e_t)] = 0
with u = y_c - x, valid for any s with k_s >= 1, both derived by Leibniz
differentiation of |u|^2 d_s f = (radial exponent) u_s f. The collision-matrix
components assemble from the beta = gamma and beta = gamma + 2 families:
A_rr = B (|u|^(gamma+2) - u_r^2 |u|^gamma), A_rs = -B u_r u_s |u|^gamma,
via Taylor products with the quadratic monomial prefactors.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Z_FLOOR
from .particles import velocity_field_direct

_MAX_DEPTH = 48


class NearFieldError(ValueError):
    """Raised when a singular-kernel expansion is requested at near-zero range."""


@dataclass(frozen=True)
class TreecodeParams:
    """MAC opening angle theta in [0, 1), expansion order p >= 0, leaf size.

    theta = 0 disables every expansion: the sum degenerates to direct
    summation.
    """

    theta: float = 0.5
    order: int = 6
    leaf_capacity: int = 64

    def __post_init__(self):
        if not (0.0 <= self.theta < 1.0):
            raise ValueError(f"theta must lie in [0, 1), got {self.theta}")
        if self.order < 0:
            raise ValueError("order must be >= 0")
        if self.leaf_capacity < 1:
            raise ValueError("leaf_capacity must be >= 1")


# ---------------------------------------------------------------------------
# multi-index bookkeeping

_INDEX_CACHE = {}


def multi_indices(order, dim):
    """All multi-indices with |k| <= order in graded lexicographic order."""
    out = []
    for total in range(order + 1):
        grade = []

        def rec(prefix, remaining, slots):
            if slots == 1:
                grade.append(prefix + (remaining,))
                return
            for first in range(remaining, -1, -1):
                rec(prefix + (first,), remaining - first, slots - 1)

        rec((), total, dim)
        out.extend(sorted(grade, reverse=True))
    return out


def _index_tables(order, dim):
    """Lookup tables for the recurrences; cached per (order, dim).

    Returns (indices, pivot, im1, im2, imrs) where im1[i, s] / im2[i, s] are
    the positions of k - e_s / k - 2 e_s (-1 if out of range) and
    imrs[i, r, s] the position of k - e_r - e_s.
    """
    key = (order, dim)
    if key in _INDEX_CACHE:
        return _INDEX_CACHE[key]
    idx = multi_indices(order, dim)
    pos = {k: i for i, k in enumerate(idx)}
    p_count = len(idx)
    pivot = np.zeros(p_count, dtype=int)
    im1 = np.full((p_count, dim), -1, dtype=int)
    im2 = np.full((p_count, dim), -1, dtype=int)
    imrs = np.full((p_count, dim, dim), -1, dtype=int)

    def shifted(k, deltas):
        shifted_k = list(k)
        for s, amount in deltas:
            shifted_k[s] -= amount
            if shifted_k[s] < 0:
                return -1
        return pos[tuple(shifted_k)]

    for i, k in enumerate(idx):
        pivot[i] = int(np.argmax(k))
        for s in range(dim):
            im1[i, s] = shifted(k, [(s, 1)])
            im2[i, s] = shifted(k, [(s, 2)])
            for r in range(dim):
                if r == s:
                    imrs[i, r, s] = im2[i, s]
                else:
                    imrs[i, r, s] = shifted(k, [(r, 1), (s, 1)])
    tables = (idx, pivot, im1, im2, imrs)
    _INDEX_CACHE[key] = tables
    return tables


def _gaussian_coeff_table(u, eps, order):
    """Taylor coefficients of psi_eps(x - y) in y about y_c, u = y_c - x.

    u has shape (T, d); returns (P, T).
    """
    t_count, dim = u.shape
    idx, pivot, im1, im2, _ = _index_tables(order, dim)
    norm = (2.0 * math.pi * eps) ** (-0.5 * dim)
    b = np.empty((len(idx), t_count))
    r2 = np.einsum("td,td->t", u, u)
    b[0] = norm * np.exp(-r2 / (2.0 * eps))
    for i in range(1, len(idx)):
        s = pivot[i]
        ks = idx[i][s]
        val = u[:, s] * b[im1[i, s]]
        if im2[i, s] >= 0:
            val = val + b[im2[i, s]]
        b[i] = val / (-eps * ks)
    return b


def _radial_coeff_table(u, r2, beta, order):
    """Taylor coefficients of |w - x|^beta in w about y_c, u = y_c - x."""
    t_count, dim = u.shape
    idx, pivot, im1, im2, _ = _index_tables(order, dim)
    b = np.empty((len(idx), t_count))
    b[0] = r2 ** (0.5 * beta)
    for i in range(1, len(idx)):
        s = pivot[i]
        ks = idx[i][s]
        acc = (2.0 - (2.0 + beta) / ks) * u[:, s] * b[im1[i, s]]
        if im2[i, s] >= 0:
            acc = acc + (1.0 - (2.0 + beta) / ks) * b[im2[i, s]]
        for t in range(dim):
            if t == s or idx[i][t] == 0:
                continue
            acc = acc + 2.0 * u[:, t] * b[im1[i, t]]
            if im2[i, t] >= 0:
                acc = acc + b[im2[i, t]]
        b[i] = acc / (-r2)
    return b


_SHIFT_CACHE = {}


def _shift_tables(order, dim):
    """Moment reindexing maps for the contracted far-field path.

    For each shift sigma in {0} U {e_r} U {e_r + e_s, r <= s}, fwd[sigma][i]
    is the position of k_i + sigma (or P, pointing at a zero pad row, when the
    shifted index exceeds the order). Shifting the moments this way turns
    sum_p a^(p - sigma) m^p into a plain contraction against the radial table.
    """
    key = (order, dim)
    if key in _SHIFT_CACHE:
        return _SHIFT_CACHE[key]
    idx = multi_indices(order, dim)
    pos = {k: i for i, k in enumerate(idx)}
    p_count = len(idx)
    shifts = [tuple(0 for _ in range(dim))]
    shifts += [tuple(int(t == r) for t in range(dim)) for r in range(dim)]
    shifts += [
        tuple(int(t == r) + int(t == s) for t in range(dim))
        for r in range(dim)
        for s in range(r, dim)
    ]
    fwd = {}
    for sh in shifts:
        table = np.full(p_count, p_count, dtype=int)
        for i, k in enumerate(idx):
            shifted = tuple(k[t] + sh[t] for t in range(dim))
            if sum(shifted) <= order:
                table[i] = pos[shifted]
        fwd[sh] = table
    _SHIFT_CACHE[key] = fwd
    return fwd


def _unit(dim, *axes):
    return tuple(sum(int(t == a) for a in axes) for t in range(dim))


def component_pairs(dim):
    """Index pairs of the independent collision-matrix entries (diagonal first)."""
    return [(r, r) for r in range(dim)] + [
        (r, s) for r in range(dim) for s in range(r + 1, dim)
    ]


class GaussianProvider:
    """Channel phi(x, y) = psi_eps(x - y)."""

    def __init__(self, mol):
        self.mol = mol
        self.n_outputs = 1

    def coeffs(self, targets, center, order):
        u = center[None, :] - targets
        return _gaussian_coeff_table(u, self.mol.eps, order)[None, :, :]

    def far_contribution(self, targets, center, node_moments, order):
        u = center[None, :] - targets
        table = _gaussian_coeff_table(u, self.mol.eps, order)
        return (node_moments @ table)[None, :, :]

    def direct_sum(self, targets, sources, charges, out=None):
        norm = (2.0 * math.pi * self.mol.eps) ** (-0.5 * self.mol.dim)
        diff = targets[:, None, :] - sources[None, :, :]
        psi = norm * np.exp(
            -np.einsum("tsd,tsd->ts", diff, diff) / (2.0 * self.mol.eps)
        )
        return np.einsum("ts,cs->ct", psi, charges)[None, :, :]


class GaussianGradProvider:
    """Channels phi_s(x, y) = d_s psi_eps evaluated at x - y, s = 1..d."""

    def __init__(self, mol):
        self.mol = mol
        self.n_outputs = mol.dim

    def coeffs(self, targets, center, order):
        dim = self.mol.dim
        eps = self.mol.eps
        u = center[None, :] - targets
        base = _gaussian_coeff_table(u, eps, order)
        _, _, im1, _, _ = _index_tables(order, dim)
        padded = np.vstack([base, np.zeros((1, base.shape[1]))])
        out = np.empty((dim, base.shape[0], base.shape[1]))
        for s in range(dim):
            gather = np.where(im1[:, s] >= 0, im1[:, s], base.shape[0])
            # d_s psi(x-y) = ((y_s - x_s)/eps) psi(x-y); Taylor product with the
            # linear factor u_s + delta_s
            out[s] = (u[:, s][None, :] * base + padded[gather]) / eps
        return out

    def far_contribution(self, targets, center, node_moments, order):
        dim = self.mol.dim
        u = center[None, :] - targets
        table = _gaussian_coeff_table(u, self.mol.eps, order)
        fwd = _shift_tables(order, dim)
        mom_pad = np.concatenate(
            [node_moments, np.zeros((node_moments.shape[0], 1))], axis=1
        )
        s0 = node_moments @ table  # (C, F)
        out = np.empty((dim, node_moments.shape[0], targets.shape[0]))
        for s in range(dim):
            s1 = mom_pad[:, fwd[_unit(dim, s)]] @ table
            out[s] = (u[:, s][None, :] * s0 + s1) / self.mol.eps
        return out

    def direct_sum(self, targets, sources, charges, out=None):
        dim = self.mol.dim
        norm = (2.0 * math.pi * self.mol.eps) ** (-0.5 * self.mol.dim)
        diff = targets[:, None, :] - sources[None, :, :]
        psi = norm * np.exp(
            -np.einsum("tsd,tsd->ts", diff, diff) / (2.0 * self.mol.eps)
        )
        vals = -(diff / self.mol.eps) * psi[:, :, None]  # (T, S, d)
        return np.einsum("tsd,cs->dct", vals, charges)


class KernelMatrixProvider:
    """Channels: the independent components of A(x - y), diagonal entries first."""

    def __init__(self, spec):
        self.spec = spec
        self.pairs = component_pairs(spec.dim)
        self.n_outputs = len(self.pairs)

    def coeffs(self, targets, center, order):
        spec = self.spec
        dim = spec.dim
        u = center[None, :] - targets
        r2 = np.einsum("td,td->t", u, u)
        if np.any(r2 <= Z_FLOOR * Z_FLOOR):
            raise NearFieldError(
                "collision-matrix expansion requested at near-zero range; "
                "near-field pairs must use direct summation"
            )
        bg = _radial_coeff_table(u, r2, spec.gamma, order)
        bg2 = _radial_coeff_table(u, r2, spec.gamma + 2.0, order)
        p_count = bg.shape[0]
        _, _, im1, _, imrs = _index_tables(order, dim)
        pad_g = np.vstack([bg, np.zeros((1, bg.shape[1]))])

        def g_shift(table_row):
            return pad_g[np.where(table_row >= 0, table_row, p_count)]

        out = np.empty((self.n_outputs, p_count, u.shape[0]))
        for c, (r, s) in enumerate(self.pairs):
            if r == s:
                ur = u[:, r][None, :]
                out[c] = bg2 - (
                    ur * ur * bg
                    + 2.0 * ur * g_shift(im1[:, r])
                    + g_shift(imrs[:, r, r])
                )
            else:
                ur = u[:, r][None, :]
                us = u[:, s][None, :]
                out[c] = -(
                    ur * us * bg
                    + us * g_shift(im1[:, r])
                    + ur * g_shift(im1[:, s])
                    + g_shift(imrs[:, r, s])
                )
        out *= self.spec.prefactor
        return out

    def far_contribution(self, targets, center, node_moments, order):
        """Moment-contracted expansion sums, shape (n_comp, C, F).

        Works with moments shifted by the monomial prefactors so that only the
        two radial coefficient tables are formed per cluster; the contraction
        over multi-indices is a single matmul.
        """
        spec = self.spec
        dim = spec.dim
        u = center[None, :] - targets
        r2 = np.einsum("td,td->t", u, u)
        if np.any(r2 <= Z_FLOOR * Z_FLOOR):
            raise NearFieldError(
                "collision-matrix expansion requested at near-zero range; "
                "near-field pairs must use direct summation"
            )
        bg = _radial_coeff_table(u, r2, spec.gamma, order)
        bg2 = _radial_coeff_table(u, r2, spec.gamma + 2.0, order)
        fwd = _shift_tables(order, dim)
        n_ch = node_moments.shape[0]
        mom_pad = np.concatenate([node_moments, np.zeros((n_ch, 1))], axis=1)
        shifts = list(fwd.keys())
        stacked = np.concatenate([mom_pad[:, fwd[sh]] for sh in shifts], axis=0)
        sums_g = (stacked @ bg).reshape(len(shifts), n_ch, -1)
        s_of = {sh: i for i, sh in enumerate(shifts)}
        s0 = sums_g[s_of[_unit(dim)]]
        s2 = node_moments @ bg2  # only the unshifted moments pair with bg2
        out = np.empty((self.n_outputs, n_ch, targets.shape[0]))
        for c, (r, s) in enumerate(self.pairs):
            ur = u[:, r][None, :]
            if r == s:
                out[c] = s2 - (
                    ur * ur * s0
                    + 2.0 * ur * sums_g[s_of[_unit(dim, r)]]
                    + sums_g[s_of[_unit(dim, r, r)]]
                )
            else:
                us = u[:, s][None, :]
                out[c] = -(
                    ur * us * s0
                    + us * sums_g[s_of[_unit(dim, r)]]
                    + ur * sums_g[s_of[_unit(dim, s)]]
                    + sums_g[s_of[_unit(dim, r, s)]]
                )
        out *= spec.prefactor
        return out

    def direct_sum(self, targets, sources, charges, out=None):
        spec = self.spec
        diff = targets[:, None, :] - sources[None, :, :]
        r2 = np.einsum("tsd,tsd->ts", diff, diff)
        near = r2 <= Z_FLOOR * Z_FLOOR
        if spec.gamma == 0.0:
            base = np.where(near, 0.0, spec.prefactor)
        else:
            base = spec.prefactor * np.where(near, 1.0, r2) ** (0.5 * spec.gamma)
            base[near] = 0.0
        res = np.empty((self.n_outputs, charges.shape[0], targets.shape[0]))
        for c, (r, s) in enumerate(self.pairs):
            if r == s:
                comp = base * (r2 - diff[:, :, r] * diff[:, :, r])
            else:
                comp = -base * (diff[:, :, r] * diff[:, :, s])
            res[c] = np.einsum("ts,cs->ct", comp, charges)
        return res


def taylor_coeffs_gaussian(x, y_c, mol, order):
    """Taylor coefficients of psi_eps(x - .) about y_c, shape (P,)."""
    x = np.asarray(x, dtype=float)
    y_c = np.asarray(y_c, dtype=float)
    return GaussianProvider(mol).coeffs(x[None, :], y_c, order)[0, :, 0]


def taylor_coeffs_gaussian_grad(x, y_c, mol, order):
    """Coefficients of each component of grad psi_eps(x - .), shape (d, P)."""
    x = np.asarray(x, dtype=float)
    y_c = np.asarray(y_c, dtype=float)
    return GaussianGradProvider(mol).coeffs(x[None, :], y_c, order)[:, :, 0]


def taylor_coeffs_A(x, y_c, spec, order):
    """Coefficients of the independent components of A(x - .), shape (n_comp, P).

    Component order follows component_pairs(spec.dim). Raises NearFieldError
    when |x - y_c| <= Z_FLOOR.
    """
    x = np.asarray(x, dtype=float)
    y_c = np.asarray(y_c, dtype=float)
    return KernelMatrixProvider(spec).coeffs(x[None, :], y_c, order)[:, :, 0]


# ---------------------------------------------------------------------------
# cluster tree

class ClusterNode:
    __slots__ = ("index", "center", "radius", "start", "end", "children")

    def __init__(self, index, center, radius, start, end, children):
        self.index = index
        self.center = center
        self.radius = radius
        self.start = start
        self.end = end
        self.children = children

    @property
    def is_leaf(self):
        return not self.children

    @property
    def size(self):
        return self.end - self.start


class ClusterTree:
    """Spatial bisection tree over a fixed source set.

    Sources are stored in a permuted copy so every node owns a contiguous
    slice [start, end); `permutation` maps permuted positions back to the
    original source indices.
    """

    def __init__(self, sources, params):
        sources = np.ascontiguousarray(sources, dtype=float)
        if sources.ndim != 2 or sources.shape[0] < 1:
            raise ValueError("sources must be a nonempty (N, d) array")
        self.dim = sources.shape[1]
        perm = np.arange(sources.shape[0])
        self.nodes = []
        lo = sources.min(axis=0)
        hi = sources.max(axis=0)
        self.root = self._build(sources, perm, 0, sources.shape[0], lo, hi, 0, params)
        self.permutation = perm
        self.sources = sources[perm]

    def _build(self, sources, perm, start, end, lo, hi, depth, params):
        center = 0.5 * (lo + hi)
        pts = sources[perm[start:end]]
        radius = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
        node = ClusterNode(len(self.nodes), center, radius, start, end, [])
        self.nodes.append(node)
        if end - start <= params.leaf_capacity or depth >= _MAX_DEPTH:
            return node
        octant = np.zeros(end - start, dtype=int)
        for s in range(self.dim):
            octant |= (pts[:, s] > center[s]).astype(int) << s
        order = np.argsort(octant, kind="stable")
        perm[start:end] = perm[start:end][order]
        counts = np.bincount(octant, minlength=2**self.dim)
        offsets = start + np.concatenate([[0], np.cumsum(counts)])
        for code in range(2**self.dim):
            if counts[code] == 0:
                continue
            clo = lo.copy()
            chi = hi.copy()
            for s in range(self.dim):
                if code >> s & 1:
                    clo[s] = center[s]
                else:
                    chi[s] = center[s]
            child = self._build(
                sources, perm, offsets[code], offsets[code + 1], clo, chi,
                depth + 1, params,
            )
            node.children.append(child)
        return node


def build_tree(sources, params):
    """Build the 2^d-way bisection tree over the source points."""
    return ClusterTree(sources, params)


class ClusterMoments:
    """Per-node, per-channel moment tensors m_c^k = sum_j q_j (y_j - y_c)^k."""

    def __init__(self, tree, charges, order):
        charges = np.atleast_2d(np.asarray(charges, dtype=float))
        if charges.shape[1] != tree.sources.shape[0]:
            raise ValueError("one charge per source required in every channel")
        self.order = order
        self.n_channels = charges.shape[0]
        charges_perm = charges[:, tree.permutation]
        self.charges_perm = charges_perm
        idx, pivot, im1, _, _ = _index_tables(order, tree.dim)
        p_count = len(idx)
        self.per_node = [None] * len(tree.nodes)
        for node in tree.nodes:
            offs = tree.sources[node.start : node.end] - node.center
            mono = np.empty((node.size, p_count))
            mono[:, 0] = 1.0
            for i in range(1, p_count):
                s = pivot[i]
                mono[:, i] = mono[:, im1[i, s]] * offs[:, s]
            self.per_node[node.index] = charges_perm[:, node.start : node.end] @ mono


def compute_moments(tree, charges, order):
    """Moments of every cluster for each charge channel, all |k| <= order."""
    return ClusterMoments(tree, charges, order)


def treecode_sum(tree, moments, provider, targets, params, block=2048):
    """Per-target kernel sums, shape (n_outputs, n_channels, T).

    MAC-admissible particle-cluster interactions use the truncated Taylor
    expansion contracted with cluster moments; inadmissible leaves are summed
    directly. theta = 0 evaluates the plain direct sum over all sources.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    t_count = targets.shape[0]
    out = np.zeros((provider.n_outputs, moments.n_channels, t_count))
    if params.theta == 0.0:
        for lo in range(0, t_count, block):
            out[:, :, lo : lo + block] = provider.direct_sum(
                targets[lo : lo + block], tree.sources, moments.charges_perm
            )
        return out
    stack = [(tree.root, np.arange(t_count))]
    while stack:
        node, tidx = stack.pop()
        x = targets[tidx]
        diff = x - node.center
        dist = np.sqrt(np.einsum("td,td->t", diff, diff))
        far = (node.radius <= params.theta * dist) & (dist > Z_FLOOR)
        if np.any(far):
            fidx = tidx[far]
            out[:, :, fidx] += provider.far_contribution(
                targets[fidx], node.center, moments.per_node[node.index],
                params.order,
            )
        if not np.all(far):
            nidx = tidx[~far]
            if node.is_leaf:
                out[:, :, nidx] += provider.direct_sum(
                    targets[nidx],
                    tree.sources[node.start : node.end],
                    moments.charges_perm[:, node.start : node.end],
                )
            else:
                for child in node.children:
                    stack.append((child, nidx))
    return out


def treecode_velocity_field(ens, scores, spec, params):
    """Treecode evaluation of U_i = -sum_j w_j A(v_i - v_j)[F_i - F_j].

    Charge channels are {w_j} and {w_j F_j,s}; the independent components of A
    share one tree and one traversal. theta = 0 routes to the direct engine
    (no expansion can be admitted), giving bit-identical results.
    """
    if params.theta == 0.0:
        return velocity_field_direct(ens, scores, spec)
    f = np.asarray(scores, dtype=float)
    dim = ens.dim
    if f.shape != (ens.size, dim):
        raise ValueError("scores must be evaluated at the particle locations")
    tree = build_tree(ens.velocities, params)
    charges = np.empty((dim + 1, ens.size))
    charges[0] = ens.weights
    charges[1:] = (ens.weights[:, None] * f).T
    moments = compute_moments(tree, charges, params.order)
    provider = KernelMatrixProvider(spec)
    sums = treecode_sum(tree, moments, provider, ens.velocities, params)
    pairs = component_pairs(dim)
    comp_of = {}
    for c, (r, s) in enumerate(pairs):
        comp_of[(r, s)] = c
        comp_of[(s, r)] = c
    out = np.empty((ens.size, dim))
    for r in range(dim):
        acc = np.zeros(ens.size)
        for s in range(dim):
            c = comp_of[(r, s)]
            # sum_j w_j A_rs(v_i - v_j) F_i,s  minus  sum_j w_j A_rs F_j,s
            acc += sums[c, 0] * f[:, s] - sums[c, 1 + s]
        out[:, r] = -acc
    return out
