"""Exact combinatorial engine: forest interpolation formulas, Mayer weakening,
Gaussian pairing identity, and the log-derivative partition coefficients.

Everything here is exact.  Polynomials carry Fraction coefficients, the
interpolation integrals over link weights are done in closed form on ordering
simplices (on each simplex every min-over-path is a single coordinate, so
terms are monomials), and Gaussian moments come from a recursive Wick
evaluator.  Floating point enters only when a caller converts results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations
import math

import numpy as np

# --------------------------------------------------------------------------
# objects, forests, interpolation
# --------------------------------------------------------------------------


def _pair(i: int, j: int) -> tuple[int, int]:
    if i == j:
        raise ValueError("no self-links")
    return (i, j) if i < j else (j, i)


@dataclass
class ObjectSet:
    """n abstract objects with an allowed-link predicate and optional 2-typing."""

    n: int
    allowed: frozenset | None = None       # None means the complete link set
    types: tuple | None = None             # per-object labels in {1, 2}

    def __post_init__(self):
        if self.allowed is not None:
            self.allowed = frozenset(_pair(*p) for p in self.allowed)
        if self.types is not None:
            self.types = tuple(self.types)
            if len(self.types) != self.n or not set(self.types) <= {1, 2}:
                raise ValueError("types must label every object with 1 or 2")

    def pairs(self) -> list[tuple[int, int]]:
        if self.allowed is None:
            return [(i, j) for i in range(self.n) for j in range(i + 1, self.n)]
        return sorted(self.allowed)

    def type_of(self, i: int) -> int:
        return 1 if self.types is None else self.types[i]


MAX_OBJECTS = 8


def enumerate_forests(objects: ObjectSet) -> list[tuple]:
    """All loop-free subsets of allowed links, including the empty forest."""
    if objects.n > MAX_OBJECTS:
        # forests on K_n are bounded by (n+1)^(n-1)
        raise ValueError(
            f"refusing n={objects.n} objects: forest count can reach about "
            f"{(objects.n + 1) ** (objects.n - 1):,}")
    links = objects.pairs()
    out = [()]

    def grow(start: int, chosen: list, parent: dict):
        for idx in range(start, len(links)):
            i, j = links[idx]
            ri, rj = _find(parent, i), _find(parent, j)
            if ri == rj:
                continue
            parent2 = dict(parent)
            parent2[ri] = rj
            chosen2 = chosen + [links[idx]]
            out.append(tuple(chosen2))
            grow(idx + 1, chosen2, parent2)

    grow(0, [], {i: i for i in range(objects.n)})
    return out


def _find(parent: dict, i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def _components(n: int, links) -> list[set]:
    parent = {i: i for i in range(n)}
    for i, j in links:
        parent[_find(parent, i)] = _find(parent, j)
    comps: dict[int, set] = {}
    for i in range(n):
        comps.setdefault(_find(parent, i), set()).add(i)
    return list(comps.values())


def _forest_paths(n: int, links) -> dict:
    """Map every connected pair to the tuple of links on its unique path."""
    adj: dict[int, list] = {i: [] for i in range(n)}
    for l in links:
        adj[l[0]].append((l[1], l))
        adj[l[1]].append((l[0], l))
    paths = {}
    for start in range(n):
        stack = [(start, [])]
        seen = {start}
        while stack:
            node, trail = stack.pop()
            if node != start:
                paths[_pair(start, node)] = tuple(trail)
            for nxt, link in adj[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, trail + [link]))
    return paths


def interpolation_matrix(n: int, links, weights: dict) -> np.ndarray:
    """s(w): min weight along the unique forest path, 0 across components, 1 on
    the diagonal."""
    paths = _forest_paths(n, links)
    s = np.zeros((n, n))
    np.fill_diagonal(s, 1.0)
    for (i, j), path in paths.items():
        s[i, j] = s[j, i] = min(float(weights[l]) for l in path)
    return s


# --------------------------------------------------------------------------
# polynomials with exact coefficients
# --------------------------------------------------------------------------


class Poly:
    """Multivariate polynomial, variables are arbitrary hashable keys.

    terms: {((var, power), ...) sorted: Fraction}; the empty key is the
    constant term.
    """

    __slots__ = ("terms",)

    def __init__(self, terms: dict | None = None):
        self.terms = {}
        for key, c in (terms or {}).items():
            c = Fraction(c)
            if c:
                self.terms[key] = c

    @classmethod
    def constant(cls, c) -> "Poly":
        return cls({(): Fraction(c)})

    @classmethod
    def variable(cls, var) -> "Poly":
        return cls({((var, 1),): Fraction(1)})

    def __add__(self, other):
        other = other if isinstance(other, Poly) else Poly.constant(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, Fraction(0)) + c
        return Poly(out)

    __radd__ = __add__

    def __neg__(self):
        return Poly({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        other = other if isinstance(other, Poly) else Poly.constant(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly({k: c * Fraction(other) for k, c in self.terms.items()})
        out: dict = {}
        for k1, c1 in self.terms.items():
            d1 = dict(k1)
            for k2, c2 in other.terms.items():
                d = dict(d1)
                for v, p in k2:
                    d[v] = d.get(v, 0) + p
                key = tuple(sorted(d.items(), key=repr))
                out[key] = out.get(key, Fraction(0)) + c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def deriv(self, var) -> "Poly":
        out: dict = {}
        for key, c in self.terms.items():
            d = dict(key)
            p = d.get(var, 0)
            if p == 0:
                continue
            if p == 1:
                del d[var]
            else:
                d[var] = p - 1
            k = tuple(sorted(d.items(), key=repr))
            out[k] = out.get(k, Fraction(0)) + c * p
        return Poly(out)

    def degree_in(self, var) -> int:
        return max((dict(k).get(var, 0) for k in self.terms), default=0)

    def variables(self) -> set:
        return {v for k in self.terms for v, _ in k}

    def eval(self, assignment) -> Fraction:
        """assignment: mapping var -> Fraction-like; missing vars are errors."""
        total = Fraction(0)
        for key, c in self.terms.items():
            val = c
            for v, p in key:
                val *= Fraction(assignment[v]) ** p
            total += val
        return total

    def eval_at_one(self) -> Fraction:
        return sum(self.terms.values(), Fraction(0))

    def is_zero(self) -> bool:
        return not self.terms


def random_pair_polynomial(objects: ObjectSet, rng: np.random.Generator,
                           degree: int = 3, n_terms: int = 8) -> Poly:
    """Random polynomial in the pair variables with small rational coefficients."""
    pairs = objects.pairs()
    terms: dict = {}
    for _ in range(n_terms):
        n_vars = int(rng.integers(0, min(3, len(pairs)) + 1))
        chosen = rng.choice(len(pairs), size=n_vars, replace=False) if n_vars else []
        d: dict = {}
        for idx in np.atleast_1d(chosen):
            d[pairs[int(idx)]] = int(rng.integers(1, degree + 1))
        if sum(d.values()) > degree * max(len(d), 1):
            continue
        key = tuple(sorted(d.items(), key=repr))
        coeff = Fraction(int(rng.integers(-6, 7)), int(rng.integers(1, 5)))
        terms[key] = terms.get(key, Fraction(0)) + coeff
    return Poly(terms) + Poly.constant(Fraction(int(rng.integers(-3, 4))))


# --------------------------------------------------------------------------
# forest formula
# --------------------------------------------------------------------------

_DISCONNECTED = -1
_UNIT = -2


def _ordered_simplex_integral(exps: list[int]) -> Fraction:
    """Integral of prod_r w_r^{exps[r]} over 0 < w_0 < ... < w_{L-1} < 1."""
    total = 0
    out = Fraction(1)
    for e in exps:
        total += e + 1
        out /= total
    return out


def _integrate_forest(poly: Poly, n: int, links, rank_of_pair) -> Fraction:
    """Exact integral over the link weights of poly evaluated at s(w).

    rank_of_pair(pair, ranks) must return the w-rank whose coordinate realizes
    the min over the path, _UNIT for pairs fixed at 1, _DISCONNECTED for 0.
    """
    L = len(links)
    if L == 0:
        assign = {}
        for var in poly.variables():
            k = rank_of_pair(var, {})
            assign[var] = Fraction(1) if k == _UNIT else Fraction(0)
        return poly.eval(assign)
    total = Fraction(0)
    for order in permutations(range(L)):
        ranks = {links[idx]: r for r, idx in enumerate(order)}
        for key, coeff in poly.terms.items():
            exps = [0] * L
            dead = False
            for var, p in key:
                k = rank_of_pair(var, ranks)
                if k == _UNIT:
                    continue
                if k == _DISCONNECTED:
                    dead = True
                    break
                exps[k] += p
            if dead:
                continue
            total += coeff * _ordered_simplex_integral(exps)
    return total


def bkar_sum(F: Poly, objects: ObjectSet) -> Fraction:
    """Forest interpolation sum; equals F at all-ones couplings."""
    for var in F.variables():
        if F.degree_in(var) > 6:
            raise ValueError("per-variable degree capped at 6")
    total = Fraction(0)
    for links in enumerate_forests(objects):
        G = F
        for l in links:
            G = G.deriv(l)
            if G.is_zero():
                break
        if G.is_zero() and links:
            continue
        paths = _forest_paths(objects.n, links)

        def rank_of(pair, ranks, paths=paths):
            if pair[0] == pair[1]:
                return _UNIT
            path = paths.get(_pair(*pair))
            if path is None:
                return _DISCONNECTED
            return min(ranks[l] for l in path)

        total += _integrate_forest(G, objects.n, links, rank_of)
    return total


def _restricted(objects: ObjectSet, links) -> bool:
    """Each component may contain at most one type-2 object."""
    for comp in _components(objects.n, links):
        if sum(1 for i in comp if objects.type_of(i) == 2) > 1:
            return False
    return True


def bkar2_sum(F: Poly, objects: ObjectSet) -> Fraction:
    """Restricted 2-type forest sum with all roots merged into one vertex.

    Components are either trees of type-1 objects or rooted trees whose only
    type-2 object is the root; path minima are taken in the root-merged
    forest, so pairs of type-2 objects stay at coupling 1.
    """
    if objects.types is not None and not any(t == 1 for t in objects.types):
        raise ValueError("at least one type-1 object required")
    for var in F.variables():
        if F.degree_in(var) > 6:
            raise ValueError("per-variable degree capped at 6")
    total = Fraction(0)
    for links in enumerate_forests(objects):
        if not _restricted(objects, links):
            continue
        G = F
        for l in links:
            G = G.deriv(l)
            if G.is_zero():
                break
        if G.is_zero() and links:
            continue
        paths = _forest_paths(objects.n, links)
        comps = _components(objects.n, links)
        comp_of = {}
        root_of = {}
        for ci, comp in enumerate(comps):
            roots = [i for i in comp if objects.type_of(i) == 2]
            for i in comp:
                comp_of[i] = ci
                if roots:
                    root_of[ci] = roots[0]

        def rank_of(pair, ranks, paths=paths, comp_of=comp_of, root_of=root_of):
            i, j = pair
            if i == j:
                return _UNIT
            ci, cj = comp_of[i], comp_of[j]
            if ci == cj:
                return min(ranks[l] for l in paths[_pair(i, j)])
            if ci in root_of and cj in root_of:
                # path through the merged super-root
                legs = []
                for node, c in ((i, ci), (j, cj)):
                    r = root_of[c]
                    if node != r:
                        legs.extend(paths[_pair(node, r)])
                if not legs:
                    return _UNIT          # two merged roots
                return min(ranks[l] for l in legs)
            return _DISCONNECTED

        total += _integrate_forest(G, objects.n, links, rank_of)
    return total


# --------------------------------------------------------------------------
# Mayer weakening of the non-overlap constraint
# --------------------------------------------------------------------------


@dataclass
class MayerSystem:
    """Weakened non-overlap indicator over a family of polymers.

    NonOverlap(S) = prod_{n<m} (1 - S_{nm})^{c_nm} where c_nm counts the
    coinciding box pairs outside the external-by-external block; each
    S-derivative therefore brings a factor -1 per forced coincidence.
    """

    boxes: list
    external: list
    coincidences: dict           # pair (n, m) -> count

    @property
    def n(self) -> int:
        return len(self.boxes)

    def object_set(self) -> ObjectSet:
        types = tuple(1 if len(e) <= 2 else 2 for e in self.external)
        return ObjectSet(n=self.n, types=types)

    def evaluate(self, S: dict) -> Fraction:
        out = Fraction(1)
        for pair, c in self.coincidences.items():
            out *= (1 - Fraction(S.get(pair, 0))) ** c
        return out

    def nonoverlap_at_one(self) -> int:
        return 1 if all(c == 0 for c in self.coincidences.values()) else 0

    def as_polynomial(self) -> Poly:
        poly = Poly.constant(1)
        for pair, c in self.coincidences.items():
            factor = Poly.constant(1) - Poly.variable(pair)
            for _ in range(c):
                poly = poly * factor
        return poly

    def derivative_terms(self, pair) -> tuple[int, int]:
        """(sign, multiplicity) of d/dS_pair at S = 0: -c_nm from the
        coincidence count (one -1 per forced equality)."""
        c = self.coincidences.get(pair, 0)
        return (-1, c)


def mayer_weaken(polymers) -> MayerSystem:
    """polymers: iterable of (boxes, external_boxes); boxes are hashables.

    External boxes may never coincide across polymers (those constraints are
    kept hard); such input is rejected.
    """
    boxes = [frozenset(b) for b, _ in polymers]
    ext = [frozenset(e) for _, e in polymers]
    for b, e in zip(boxes, ext):
        if not e <= b:
            raise ValueError("external boxes must belong to their polymer")
    for i, j in combinations(range(len(boxes)), 2):
        if ext[i] & ext[j]:
            raise ValueError(f"external boxes of polymers {i} and {j} overlap")
    coinc = {}
    for i, j in combinations(range(len(boxes)), 2):
        coinc[(i, j)] = len(boxes[i] & boxes[j])
    return MayerSystem(boxes=boxes, external=ext, coincidences=coinc)


# --------------------------------------------------------------------------
# Gaussian interpolation derivative identity (Wick evaluator)
# --------------------------------------------------------------------------


class Poly1:
    """Dense univariate polynomial with Fraction coefficients (in s)."""

    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = [Fraction(x) for x in coeffs]
        while len(self.c) > 1 and self.c[-1] == 0:
            self.c.pop()

    def __add__(self, other):
        n = max(len(self.c), len(other.c))
        a = self.c + [Fraction(0)] * (n - len(self.c))
        b = other.c + [Fraction(0)] * (n - len(other.c))
        return Poly1([x + y for x, y in zip(a, b)])

    def __mul__(self, other):
        if isinstance(other, Poly1):
            out = [Fraction(0)] * (len(self.c) + len(other.c) - 1)
            for i, x in enumerate(self.c):
                for j, y in enumerate(other.c):
                    out[i + j] += x * y
            return Poly1(out)
        return Poly1([x * Fraction(other) for x in self.c])

    __rmul__ = __mul__

    def deriv(self) -> "Poly1":
        if len(self.c) == 1:
            return Poly1([0])
        return Poly1([k * x for k, x in enumerate(self.c)][1:])

    def __eq__(self, other):
        n = max(len(self.c), len(other.c))
        a = self.c + [Fraction(0)] * (n - len(self.c))
        b = other.c + [Fraction(0)] * (n - len(other.c))
        return a == b

    def __repr__(self):
        return f"Poly1({self.c})"


def _wick_moment(indices: tuple, cov, memo: dict) -> Poly1:
    """Gaussian moment E[x_{i0} ... x_{ik}] with covariance entries cov(i, j)."""
    if len(indices) == 0:
        return Poly1([1])
    if len(indices) % 2:
        return Poly1([0])
    key = tuple(sorted(indices))
    if key in memo:
        return memo[key]
    first, rest = key[0], key[1:]
    total = Poly1([0])
    for pos in range(len(rest)):
        pair_cov = cov(first, rest[pos])
        sub = rest[:pos] + rest[pos + 1:]
        total = total + pair_cov * _wick_moment(sub, cov, memo)
    memo[key] = total
    return total


@dataclass
class DsIdentityReport:
    lhs: Poly1
    rhs: Poly1
    exact: bool
    max_coeff_gap: float


def gaussian_ds_identity_check(C0: np.ndarray, C1: np.ndarray, F: Poly,
                               psd_samples: int = 9) -> DsIdentityReport:
    """Verify d/ds <F>_s = sum_{i<j} C1[i,j] <d_i d_j F>_s for C(s) = C0 + s C1.

    Both sides are computed exactly as polynomials in s via the Wick
    evaluator; C1 must vanish on the diagonal and C(s) must stay positive
    semidefinite on [0, 1].
    """
    C0 = np.asarray(C0)
    C1 = np.asarray(C1)
    if np.any(np.diag(C1) != 0):
        raise ValueError("C1 must be zero on the diagonal")
    for s in np.linspace(0.0, 1.0, psd_samples):
        w = np.linalg.eigvalsh(C0.astype(float) + s * C1.astype(float))
        if w.min() < -1e-10:
            raise ValueError(f"C(s) not positive semidefinite at s={s:.3f}")

    def cov(i, j):
        return Poly1([Fraction(C0[i, j]).limit_denominator(10 ** 12),
                      Fraction(C1[i, j]).limit_denominator(10 ** 12)])

    memo: dict = {}

    def expectation(poly: Poly) -> Poly1:
        out = Poly1([0])
        for key, coeff in poly.terms.items():
            idx = []
            for v, p in key:
                idx.extend([v] * p)
            out = out + coeff * _wick_moment(tuple(idx), cov, memo)
        return out

    lhs = expectation(F).deriv()
    nvars = C0.shape[0]
    rhs = Poly1([0])
    for i in range(nvars):
        for j in range(i + 1, nvars):
            if C1[i, j] == 0:
                continue
            rhs = rhs + Fraction(C1[i, j]).limit_denominator(10 ** 12) * \
                expectation(F.deriv(i).deriv(j))
    gap = 0.0
    n = max(len(lhs.c), len(rhs.c))
    a = lhs.c + [Fraction(0)] * (n - len(lhs.c))
    b = rhs.c + [Fraction(0)] * (n - len(rhs.c))
    for x, y in zip(a, b):
        gap = max(gap, abs(float(x - y)))
    return DsIdentityReport(lhs=lhs, rhs=rhs, exact=(lhs == rhs), max_coeff_gap=gap)


# --------------------------------------------------------------------------
# log-derivative partition coefficients
# --------------------------------------------------------------------------


def set_partitions(items) -> list[tuple]:
    """All set partitions in canonical (restricted growth) order; blocks are
    sorted tuples, partitions are tuples of blocks sorted by first element."""
    items = list(items)
    if not items:
        return [()]
    out = []

    def rec(idx: int, blocks: list):
        if idx == len(items):
            out.append(tuple(tuple(sorted(b)) for b in blocks))
            return
        x = items[idx]
        for b in blocks:
            b.append(x)
            rec(idx + 1, blocks)
            b.pop()
        blocks.append([x])
        rec(idx + 1, blocks)
        blocks.pop()

    rec(0, [])
    return [tuple(sorted(p, key=lambda b: b[0])) for p in out]


def log_derivative_coeffs(n: int) -> dict:
    """Coefficient of each set partition of {1..n} in the n-fold derivative of
    log w: a partition into m blocks carries (-1)^(m-1) (m-1)!."""
    if n > 8:
        raise ValueError("n capped at 8")
    out = {}
    for part in set_partitions(range(1, n + 1)):
        m = len(part)
        out[part] = (-1) ** (m - 1) * math.factorial(m - 1)
    return out


def product_log_coefficient(partitions_per_factor) -> int:
    """Composition rule for derivatives of a product of logs: the coefficient
    of a joint term factorizes over the per-factor partitions."""
    coeff = 1
    for part in partitions_per_factor:
        m = len(part)
        coeff *= (-1) ** (m - 1) * math.factorial(m - 1)
    return coeff
