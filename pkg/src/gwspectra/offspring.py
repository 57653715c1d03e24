"""Offspring-distribution algebra for branching-process experiments.

An OffspringLaw is one of Dirac / Poisson / Binomial / Empirical, optionally
conditioned on being at least k and/or truncated at a cap (N -> min(N, cap)).
Every law is materialized once as a finite probability vector (Poisson tails
below 1e-14 of mass are folded into the last atom), and all moments, MGFs,
sampling, size-biasing, extinction probabilities and skeleton decompositions
are computed from that vector, so samplers and analytic values agree exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import stats

__all__ = [
    "OffspringLaw",
    "SkeletonSplitLaw",
    "ControlParams",
    "skeleton_split",
    "control_params",
    "bennett_h",
    "bennett_tail",
    "progeny_tail_bound",
    "extinct_progeny_tail_bound",
    "extinction_frequency_mc",
    "sample_total_progeny",
    "law_to_json",
    "law_from_json",
]

_POISSON_TAIL = 1e-14
_REJECTION_CAP = 10**6


@dataclass(frozen=True)
class OffspringLaw:
    """Discrete law on {0, 1, 2, ...} with finite materialized support."""

    kind: str
    params: tuple
    conditioned_at_least: int = 0
    truncation_cap: int | None = None

    # -- constructors ------------------------------------------------------

    @staticmethod
    def dirac(value: int, conditioned_at_least: int = 0) -> "OffspringLaw":
        if value < 0:
            raise ValueError("dirac value must be a non-negative integer")
        return OffspringLaw("dirac", (int(value),), conditioned_at_least)

    @staticmethod
    def poisson(mean: float, conditioned_at_least: int = 0) -> "OffspringLaw":
        if not 0.0 < mean < 700.0:
            raise ValueError("poisson mean must lie in (0, 700)")
        return OffspringLaw("poisson", (float(mean),), conditioned_at_least)

    @staticmethod
    def binomial(n: int, p: float, conditioned_at_least: int = 0) -> "OffspringLaw":
        if n < 1 or not 0.0 < p <= 1.0:
            raise ValueError("binomial needs n >= 1 and p in (0, 1]")
        return OffspringLaw("binomial", (int(n), float(p)), conditioned_at_least)

    @staticmethod
    def empirical(weights, conditioned_at_least: int = 0) -> "OffspringLaw":
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0):
            raise ValueError("weights must be a non-negative 1-d vector")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        return OffspringLaw("empirical", tuple(float(x) for x in w), conditioned_at_least)

    def conditioned(self, k: int) -> "OffspringLaw":
        return replace(self, conditioned_at_least=int(k))

    def truncated(self, cap: int) -> "OffspringLaw":
        """Law of min(N, cap)."""
        if cap < max(1, self.conditioned_at_least):
            raise ValueError("cap below the conditioning threshold")
        return replace(self, truncation_cap=int(cap))

    def __post_init__(self):
        if self.kind not in ("dirac", "poisson", "binomial", "empirical"):
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.conditioned_at_least < 0:
            raise ValueError("conditioned_at_least must be >= 0")
        _pmf_vector(self)  # validates conditioning mass and materializability

    # -- materialized view --------------------------------------------------

    @property
    def pmf(self) -> np.ndarray:
        return _pmf_vector(self)

    @property
    def cdf(self) -> np.ndarray:
        return _cdf_vector(self)

    def mean(self) -> float:
        w = self.pmf
        return float(np.dot(np.arange(len(w)), w))

    def moment(self, m: int) -> float:
        if m < 0:
            raise ValueError("moment order must be >= 0")
        w = self.pmf
        return float(np.dot(np.arange(len(w), dtype=np.float64) ** m, w))

    def ratio_moment(self, m: int) -> float:
        """E[(N/d + d/N)^m]; requires P(N = 0) = 0."""
        w = self.pmf
        if w[0] > 0.0:
            raise ValueError("ratio_moment needs P(N = 0) = 0")
        d = self.mean()
        k = np.arange(len(w), dtype=np.float64)
        k[0] = 1.0  # zero-weight slot, avoids 0-division
        return float(np.dot((k / d + d / k) ** m, w))

    def mgf(self, x):
        """E[x^N] for x >= 0 (entire in x since the support is finite)."""
        w = self.pmf
        xs = np.asarray(x, dtype=np.float64)
        out = np.polynomial.polynomial.polyval(xs, w)
        return float(out) if out.ndim == 0 else out

    def mgf_prime(self, x):
        """d/dx E[x^N]."""
        w = self.pmf
        coef = w[1:] * np.arange(1, len(w))
        out = np.polynomial.polynomial.polyval(np.asarray(x, dtype=np.float64), coef)
        return float(out) if out.ndim == 0 else out

    def prob_at_most(self, k: int) -> float:
        w = self.pmf
        return float(w[: k + 1].sum()) if k >= 0 else 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-cdf sampling from the materialized vector."""
        u = rng.random(size)
        return np.searchsorted(self.cdf, u, side="right").astype(np.int64)

    # -- transforms ----------------------------------------------------------

    def size_bias(self) -> "OffspringLaw":
        """Law of the offspring count seen from a uniform edge:
        P(k) = (k+1) P_star(k+1) / mean. Closed-form for the named families,
        exact weight transform otherwise."""
        d = self.mean()
        if d <= 0.0:
            raise ValueError("size_bias needs a positive mean")
        if self.truncation_cap is None:
            c = max(self.conditioned_at_least - 1, 0)
            if self.kind == "dirac":
                return OffspringLaw.dirac(self.params[0] - 1, c)
            if self.kind == "poisson":
                return OffspringLaw.poisson(self.params[0], c)
            if self.kind == "binomial":
                n, p = self.params
                if n >= 2:
                    return OffspringLaw.binomial(n - 1, p, c)
        w = self.pmf
        new = np.arange(1, len(w)) * w[1:] / d
        new = new / new.sum()
        return OffspringLaw.empirical(tuple(new))

    def extinction_probability(self) -> float:
        """Smallest fixed point of the MGF on [0, 1]: monotone iteration from 0,
        then a bisection polish. Subcritical and critical laws return 1
        (except laws with P(N = 0) = 0, which never die out)."""
        w = self.pmf
        if w[0] == 0.0:
            return 0.0
        if self.mean() <= 1.0:
            return 1.0
        x = 0.0
        for _ in range(100_000):
            x_new = self.mgf(x)
            if abs(x_new - x) <= 1e-13:
                x = x_new
                break
            x = x_new
        # polish: the MGF crosses the diagonal from above at the smallest root
        lo, hi = x, 1.0 - 1e-12
        if self.mgf(lo) - lo <= 0.0:
            return float(lo)
        if self.mgf(hi) - hi >= 0.0:
            return float(x)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.mgf(mid) - mid >= 0.0:
                lo = mid
            else:
                hi = mid
        return float(0.5 * (lo + hi))


@lru_cache(maxsize=512)
def _pmf_vector(law: OffspringLaw) -> np.ndarray:
    if law.kind == "dirac":
        v = law.params[0]
        w = np.zeros(v + 1)
        w[v] = 1.0
    elif law.kind == "poisson":
        mean = law.params[0]
        hi = int(mean + 12.0 * np.sqrt(mean) + 30.0)
        w = stats.poisson.pmf(np.arange(hi + 1), mean)
        tail = 1.0 - np.cumsum(w)
        keep = np.nonzero(tail >= _POISSON_TAIL)[0]
        k_last = int(keep[-1]) + 1 if keep.size else len(w) - 1
        w = w[: k_last + 1].copy()
        w[k_last] += max(0.0, 1.0 - w.sum())
    elif law.kind == "binomial":
        n, p = law.params
        w = stats.binom.pmf(np.arange(n + 1), n, p)
    else:
        w = np.asarray(law.params, dtype=np.float64).copy()

    if law.truncation_cap is not None and law.truncation_cap < len(w) - 1:
        cap = law.truncation_cap
        folded = w[: cap + 1].copy()
        folded[cap] += w[cap + 1 :].sum()
        w = folded

    k0 = law.conditioned_at_least
    if k0 > 0:
        if k0 >= len(w) or w[k0:].sum() <= 0.0:
            raise ValueError("conditioning event has zero probability")
        w = w.copy()
        w[:k0] = 0.0
    total = w.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError("law weights do not sum to 1")
    w = w / total
    w.setflags(write=False)
    return w


@lru_cache(maxsize=512)
def _cdf_vector(law: OffspringLaw) -> np.ndarray:
    c = np.cumsum(_pmf_vector(law))
    c[-1] = 1.0
    c.setflags(write=False)
    return c


# -- skeleton decomposition --------------------------------------------------


@dataclass(frozen=True)
class SkeletonSplitLaw:
    """Joint law of (N^s, N^e): children with infinite / finite subtrees,
    conditioned on at least one infinite child. extinction_prob is the
    extinction probability of the size-biased bulk law, which governs the
    Bernoulli thinning marks for every non-root vertex."""

    base: OffspringLaw
    extinction_prob: float

    def __post_init__(self):
        if not 0.0 <= self.extinction_prob < 1.0:
            raise ValueError("extinction_prob must lie in [0, 1)")

    @property
    def d_s(self) -> float:
        """Skeleton scale phi'(1 - pi_e) used to normalize the operator."""
        return self.base.mgf_prime(1.0 - self.extinction_prob)

    def mean_skeleton_offspring(self) -> float:
        """Exact E[N^s] from the joint table (equals the base mean when the
        thinning marks use the base's own extinction probability)."""
        j = self.joint_pmf()
        return float(np.dot(np.arange(j.shape[0]), j.sum(axis=1)))

    def joint_mgf(self, x, y) -> float:
        pe = self.extinction_prob
        phi = self.base.mgf
        num = phi((1.0 - pe) * x + pe * y) - phi(pe * y)
        den = 1.0 - phi(pe * y)
        return float(num / den)

    def joint_pmf(self) -> np.ndarray:
        return _joint_pmf(self.base, self.extinction_prob)

    def skeleton_law(self) -> OffspringLaw:
        """Marginal law of N^s as an empirical law (support starts at 1)."""
        w = self.joint_pmf().sum(axis=1)
        return OffspringLaw.empirical(tuple(w / w.sum()))

    def extinct_offspring_law(self) -> OffspringLaw:
        """Offspring law inside a pending (extinct) subtree, with MGF
        phi(pi_e x)/pi_e; subcritical whenever the base is supercritical."""
        pe = self.extinction_prob
        if pe <= 0.0:
            raise ValueError("no extinct subtrees: extinction probability is 0")
        w = self.base.pmf * pe ** np.arange(len(self.base.pmf), dtype=np.float64)
        w = w / w.sum()
        return OffspringLaw.empirical(tuple(w))

    def conditional_extinct_cdf(self) -> np.ndarray:
        """Row a: cdf of N^e given N^s = a (rows with zero mass left at 1)."""
        j = self.joint_pmf()
        rows = j.sum(axis=1, keepdims=True)
        cond = np.divide(j, rows, out=np.zeros_like(j), where=rows > 0)
        c = np.cumsum(cond, axis=1)
        c[rows[:, 0] > 0, -1] = 1.0
        c[rows[:, 0] == 0.0] = 1.0
        return c

    def sample_pair(self, rng: np.random.Generator, size: int):
        """Sample (N^s, N^e) by drawing N from the base, thinning each child
        with an independent extinction mark, and rejecting N^s = 0."""
        pe = self.extinction_prob
        ns = np.empty(size, dtype=np.int64)
        ne = np.empty(size, dtype=np.int64)
        need = np.arange(size)
        attempts = 0
        while need.size:
            attempts += need.size
            if attempts > _REJECTION_CAP + size:
                raise RuntimeError("rejection cap exceeded while conditioning N^s >= 1")
            n = self.base.sample(rng, need.size)
            marks_e = np.zeros(need.size, dtype=np.int64)
            if pe > 0.0 and n.sum() > 0:
                flat = rng.random(int(n.sum())) < pe
                stops = np.cumsum(n)
                marks_e = np.add.reduceat(flat, np.r_[0, stops[:-1]])
                marks_e[n == 0] = 0
            s = n - marks_e
            ok = s >= 1
            ns[need[ok]] = s[ok]
            ne[need[ok]] = marks_e[ok]
            need = need[~ok]
        return ns, ne

    def root_variant(self, p_star: OffspringLaw) -> "SkeletonSplitLaw":
        """Same extinction marks, base replaced by the root law."""
        return SkeletonSplitLaw(p_star, self.extinction_prob)


@lru_cache(maxsize=128)
def _joint_pmf(base: OffspringLaw, pe: float) -> np.ndarray:
    w = base.pmf
    kmax = len(w) - 1
    j = np.zeros((kmax + 1, kmax + 1))
    if pe == 0.0:
        j[1:, 0] = w[1:]
    else:
        from scipy.special import comb

        for k in range(1, kmax + 1):
            if w[k] == 0.0:
                continue
            a = np.arange(k + 1)
            j[a, k - a] += w[k] * comb(k, a) * (1.0 - pe) ** a * pe ** (k - a)
        j[0, :] = 0.0
    total = j.sum()
    if total <= 0.0:
        raise ValueError("skeleton split undefined: P(N^s >= 1) = 0")
    j /= total
    j.setflags(write=False)
    return j


def skeleton_split(p: OffspringLaw) -> SkeletonSplitLaw:
    """Skeleton/pending decomposition of a supercritical offspring law."""
    pe = p.extinction_probability()
    if pe >= 1.0:
        raise ValueError("skeleton split needs a supercritical law")
    return SkeletonSplitLaw(p, pe)


# -- control parameters --------------------------------------------------------


@dataclass(frozen=True)
class ControlParams:
    """Concentration controls at threshold lam and exponent p. alpha weights
    the complement of {|v| < lam, N >= 2, N/d in (1-lam, 1+lam)}; beta the
    complement of the root event {|v|/rho < lam, N/d in (1-lam, 1+lam)}."""

    lam: float
    p: float
    alpha: float
    beta: float
    alpha_se: float = 0.0
    beta_se: float = 0.0
    holder_bound: float | None = None


def _event_weight(n, v_abs, d, p, rho, lam, root_event):
    n = np.asarray(n, dtype=np.float64)
    v_abs = np.asarray(v_abs, dtype=np.float64)
    ratio = n / d
    with np.errstate(divide="ignore"):
        inv = np.where(n > 0, d / np.where(n > 0, n, 1.0), np.inf)
    if root_event:
        in_event = (v_abs / rho < lam) & (ratio > 1.0 - lam) & (ratio < 1.0 + lam)
        w = (1.0 + v_abs / rho) ** (2.0 * p) * (ratio + inv) ** p
    else:
        in_event = (v_abs < lam) & (n >= 2) & (ratio > 1.0 - lam) & (ratio < 1.0 + lam)
        w = (1.0 + v_abs) ** (2.0 * p) * (ratio + inv) ** p
    return np.where(in_event, 0.0, w)


def control_params(
    law: OffspringLaw,
    lam: float,
    p: float = 2.0,
    *,
    v_of_n=None,
    v_sampler=None,
    rho: float = 1.0,
    trials: int = 200_000,
    rng: np.random.Generator | None = None,
) -> ControlParams:
    """Estimate the concentration controls alpha_p(lam) and beta_p(lam).

    With no potential, or a deterministic potential v_of_n(k), the sums are
    exact over the law's support (zero standard error). With a random
    potential give v_sampler(rng, n_array) returning one draw per entry; the
    estimate is Monte-Carlo with a standard-error report. The Hoelder upper
    bound sqrt(P(event^c)) * E[(1+|v|)^12]^(1/3) * E[(N/d+d/N)^12]^(1/6) is
    attached for p = 2 when 12th moments are computable.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    d = law.mean()
    w = law.pmf
    k = np.arange(len(w), dtype=np.float64)

    if v_sampler is None:
        v_abs = np.abs(v_of_n(k)) if v_of_n is not None else np.zeros_like(k)
        wa = _event_weight(k, v_abs, d, p, rho, lam, root_event=False)
        wb = _event_weight(k, v_abs, d, p, rho, lam, root_event=True)
        alpha = float(np.dot(w, np.where(np.isfinite(wa), wa, 0.0)))
        beta = float(np.dot(w, np.where(np.isfinite(wb), wb, 0.0)))
        if np.any((w > 0) & ~np.isfinite(wa)):
            alpha = np.inf
        if np.any((w > 0) & ~np.isfinite(wb)):
            beta = np.inf
        alpha_se = beta_se = 0.0
        v12 = np.dot(w, (1.0 + v_abs) ** 12)
    else:
        if rng is None:
            raise ValueError("Monte-Carlo estimation needs an rng")
        n = law.sample(rng, trials)
        v_abs = np.abs(v_sampler(rng, n))
        wa = _event_weight(n, v_abs, d, p, rho, lam, root_event=False)
        wb = _event_weight(n, v_abs, d, p, rho, lam, root_event=True)
        alpha = float(np.mean(wa))
        beta = float(np.mean(wb))
        alpha_se = float(np.std(wa) / np.sqrt(trials))
        beta_se = float(np.std(wb) / np.sqrt(trials))
        v12 = float(np.mean((1.0 + v_abs) ** 12))

    holder = None
    if p == 2 and law.pmf[0] == 0.0 and np.isfinite(v12):
        p_out = _prob_event_complement(law, lam, v_abs if v_sampler else None, v_of_n)
        n12 = law.ratio_moment(12)
        holder = float(np.sqrt(p_out) * v12 ** (1.0 / 3.0) * n12 ** (1.0 / 6.0))

    return ControlParams(float(lam), float(p), alpha, beta, alpha_se, beta_se, holder)


def _prob_event_complement(law, lam, v_abs_draws, v_of_n):
    d = law.mean()
    w = law.pmf
    k = np.arange(len(w), dtype=np.float64)
    n_ok = (k >= 2) & (k / d > 1.0 - lam) & (k / d < 1.0 + lam)
    if v_abs_draws is None:
        v_abs = np.abs(v_of_n(k)) if v_of_n is not None else np.zeros_like(k)
        return float(np.dot(w, ~(n_ok & (v_abs < lam))))
    p_v = float(np.mean(v_abs_draws < lam))
    return float(1.0 - np.dot(w, n_ok) * p_v)


# -- tail bounds ----------------------------------------------------------------


def bennett_h(u: float) -> float:
    """(1+u) ln(1+u) - u."""
    return (1.0 + u) * np.log1p(u) - u


def bennett_tail(d: float, lam: float) -> float:
    """Concentration tail 2 exp(-d h(lam)) for a sum with mean d."""
    if d <= 0 or lam <= 0:
        raise ValueError("d and lam must be positive")
    return float(2.0 * np.exp(-d * bennett_h(lam)))


def progeny_tail_bound(q_law: OffspringLaw, rho: float, k: int) -> float:
    """Total-progeny tail of a subcritical branching process:
    P(Z >= k) <= rho (psi(rho)/rho)^k whenever psi(rho) <= rho, rho >= 1."""
    if rho < 1.0:
        raise ValueError("rho must be >= 1")
    psi = q_law.mgf(rho)
    if psi > rho * (1.0 + 1e-12):
        raise ValueError("precondition psi(rho) <= rho violated")
    return float(rho * (psi / rho) ** k)


def extinct_progeny_tail_bound(p_law: OffspringLaw, k: int, n: int = 2) -> float:
    """Tail bound (q^(1/n)/pi_e) (2 q^(1-1/n))^k for the total progeny of a
    tree conditioned on extinction, q = P(N < n). The operative preconditions
    (rho = q^(1/n)/pi_e >= 1 and psi_e(rho) <= min(rho, 2 q^(1-1/n) rho)) are
    checked numerically; the bound can exceed 1 (vacuous) when q is large."""
    if n < 2:
        raise ValueError("n must be >= 2")
    q = p_law.prob_at_most(n - 1)
    pe = p_law.extinction_probability()
    if not 0.0 < pe < 1.0:
        raise ValueError("law must be supercritical with positive extinction probability")
    rho = q ** (1.0 / n) / pe
    if rho < 1.0:
        raise ValueError("precondition rho >= 1 violated")
    delta = 2.0 * q ** (1.0 - 1.0 / n)
    psi_e = skeleton_split(p_law).extinct_offspring_law().mgf(rho)
    if psi_e > rho * (1.0 + 1e-12) or psi_e > delta * rho * (1.0 + 1e-12):
        raise ValueError("precondition on the extinct-law MGF violated")
    return float(rho * delta**k)


# -- Monte-Carlo branching helpers ----------------------------------------------


def extinction_frequency_mc(
    law: OffspringLaw,
    trials: int,
    rng: np.random.Generator,
    survive_at: int = 200,
    max_generations: int = 10_000,
) -> float:
    """Fraction of branching processes that die out, with survival declared
    once the population reaches survive_at (misclassification probability
    pi_e^survive_at)."""
    z = np.ones(trials, dtype=np.int64)
    extinct = np.zeros(trials, dtype=bool)
    active = np.arange(trials)
    for _ in range(max_generations):
        if active.size == 0:
            break
        pop = z[active]
        draws = law.sample(rng, int(pop.sum()))
        stops = np.cumsum(pop)
        sums = np.add.reduceat(draws, np.r_[0, stops[:-1]]) if draws.size else np.zeros_like(pop)
        sums[pop == 0] = 0
        z[active] = sums
        died = sums == 0
        extinct[active[died]] = True
        active = active[~died & (sums < survive_at)]
    return float(np.mean(extinct))


def sample_total_progeny(
    law: OffspringLaw,
    size: int,
    rng: np.random.Generator,
    cap: int = 10**6,
) -> np.ndarray:
    """Total vertex counts of independent branching-process trees (root
    included). Intended for subcritical laws; raises if any tree exceeds cap."""
    z = np.ones(size, dtype=np.int64)
    frontier = np.ones(size, dtype=np.int64)
    active = np.arange(size)
    while active.size:
        pop = frontier[active]
        draws = law.sample(rng, int(pop.sum()))
        stops = np.cumsum(pop)
        sums = np.add.reduceat(draws, np.r_[0, stops[:-1]]) if draws.size else np.zeros_like(pop)
        sums[pop == 0] = 0
        frontier[active] = sums
        z[active] += sums
        if np.any(z[active] > cap):
            raise RuntimeError("progeny cap exceeded (law close to critical?)")
        active = active[sums > 0]
    return z


# -- serialization ---------------------------------------------------------------


def law_to_json(law: OffspringLaw) -> dict:
    if law.kind == "dirac":
        params = {"value": law.params[0]}
    elif law.kind == "poisson":
        params = {"mean": law.params[0]}
    elif law.kind == "binomial":
        params = {"n": law.params[0], "p": law.params[1]}
    else:
        params = {"weights": list(law.params)}
    doc = {"kind": law.kind, "params": params, "conditioned_at_least": law.conditioned_at_least}
    if law.truncation_cap is not None:
        doc["truncation_cap"] = law.truncation_cap
    return doc


def law_from_json(doc) -> OffspringLaw:
    if isinstance(doc, str):
        doc = json.loads(doc)
    kind = doc["kind"]
    params = doc.get("params", {})
    c = int(doc.get("conditioned_at_least", 0))
    if kind == "dirac":
        law = OffspringLaw.dirac(int(params["value"]), c)
    elif kind == "poisson":
        law = OffspringLaw.poisson(float(params["mean"]), c)
    elif kind == "binomial":
        law = OffspringLaw.binomial(int(params["n"]), float(params["p"]), c)
    elif kind == "empirical":
        law = OffspringLaw.empirical(params["weights"], c)
    else:
        raise ValueError(f"unknown law kind {kind!r}")
    if doc.get("truncation_cap") is not None:
        law = law.truncated(int(doc["truncation_cap"]))
    return law
