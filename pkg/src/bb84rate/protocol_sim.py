"""Monte-Carlo simulation of the asymmetric-basis BB84 protocol.

The channel is classical: on sifted rounds Bob's bit is Alice's bit flipped
independently with probability ``q1`` (bit basis) or ``q2`` (phase basis).
This exercises the statistics behind the key-length formulas; it says
nothing about security against a quantum adversary.

Every trial draws from its own counter-based stream
``Philox(SeedSequence([master_seed, run_index]))``, so trials can run in any
order or in parallel without changing results.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import gf2_hash
from .mathcore import binary_entropy_inverse
from .rate_engine import (
    InconclusiveEstimateError,
    KeyLengthReport,
    Ratios,
    UnestimableSideError,
    allocate,
    finite_key_length,
)

__all__ = [
    "ChannelModel",
    "ProtocolConfig",
    "ProtocolOutcome",
    "SiftedData",
    "Estimate",
    "EnsembleSummary",
    "trial_rng",
    "run_quantum_phase",
    "run_estimation",
    "run_reconciliation",
    "run_privacy_amplification",
    "run_verification",
    "run_protocol",
    "run_ensemble",
    "expected_key_length",
    "outcomes_to_csv",
    "write_outcomes_csv",
    "summary_text",
    "TRIAL_CSV_SCHEMA",
    "TRIAL_CSV_FIELDS",
    "RECONCILERS",
]

TRIAL_CSV_SCHEMA = "bb84rate.trials/v1"
TRIAL_CSV_FIELDS = ("run_index", "n1", "n2", "p1_hat", "p2_hat", "m1", "m2", "m3",
                    "key_len", "verified", "abort_reason")


@dataclass(frozen=True)
class ChannelModel:
    q1: float
    q2: float

    def __post_init__(self):
        for name in ("q1", "q2"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v!r}")


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    ratios: Ratios
    eps: float
    beta: float
    channel: ChannelModel
    master_seed: int = 0
    reconciliation: Union[str, Callable] = "idealized"
    margin: float = 0.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps!r}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta!r}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if isinstance(self.reconciliation, str) and self.reconciliation not in RECONCILERS:
            raise ValueError(f"unknown reconciliation strategy {self.reconciliation!r}")


@dataclass
class ProtocolOutcome:
    run_index: int
    n1: int
    n2: int
    p1_hat: Optional[float]
    p2_hat: Optional[float]
    m1: int = 0
    m2: int = 0
    m3: int = 0
    key_len: int = 0
    verified: bool = False
    abort_reason: Optional[str] = None
    keys_match: bool = True
    reconciliation_failures: int = 0
    report: Optional[KeyLengthReport] = field(default=None, repr=False)
    alice_keys: tuple = field(default=(), repr=False)
    bob_keys: tuple = field(default=(), repr=False)

    def row(self):
        return {
            "run_index": self.run_index,
            "n1": self.n1,
            "n2": self.n2,
            "p1_hat": _fmt(self.p1_hat),
            "p2_hat": _fmt(self.p2_hat),
            "m1": self.m1,
            "m2": self.m2,
            "m3": self.m3,
            "key_len": self.key_len,
            "verified": int(self.verified),
            "abort_reason": self.abort_reason or "",
        }


def _fmt(x):
    return "" if x is None else format(x, ".17g")


def trial_rng(master_seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, run_index])))


# ---------------------------------------------------------------------------
# Protocol steps
# ---------------------------------------------------------------------------

@dataclass
class SiftedData:
    """Alice's and Bob's sifted strings per basis (index 1 = bit, 2 = phase)."""

    alice1: np.ndarray
    bob1: np.ndarray
    alice2: np.ndarray
    bob2: np.ndarray

    @property
    def n1(self):
        return int(self.alice1.size)

    @property
    def n2(self):
        return int(self.alice2.size)


def run_quantum_phase(config: ProtocolConfig, rng: np.random.Generator) -> SiftedData:
    n, r0 = int(config.n), config.ratios.r0
    alice_phase = rng.random(n) < r0
    bob_phase = rng.random(n) < r0
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    flips = rng.random(n)
    matched = alice_phase == bob_phase
    keep1 = matched & ~alice_phase
    keep2 = matched & alice_phase
    a1, a2 = bits[keep1], bits[keep2]
    b1 = a1 ^ (flips[keep1] < config.channel.q1).astype(np.uint8)
    b2 = a2 ^ (flips[keep2] < config.channel.q2).astype(np.uint8)
    return SiftedData(a1, b1, a2, b2)


@dataclass
class Estimate:
    p1_hat: Optional[float]
    p2_hat: Optional[float]
    key_alice1: np.ndarray
    key_bob1: np.ndarray
    key_alice2: np.ndarray
    key_bob2: np.ndarray
    checks1: int
    checks2: int


def _split(alice, bob, checks, rng):
    idx = rng.permutation(alice.size)
    chk, key = idx[:checks], np.sort(idx[checks:])
    p_hat = float(np.mean(alice[chk] != bob[chk])) if checks else None
    return p_hat, alice[key], bob[key]


def run_estimation(data: SiftedData, r1: float, r2: float, rng: np.random.Generator) -> Estimate:
    """Disclose random check bits and estimate each basis' error rate.

    Raises :class:`UnestimableSideError` when one side keeps key bits but the
    other basis has no check bits.
    """
    a = allocate(data.n1, data.n2, r1, r2)
    if a.key1 > 0 and a.check2 < 1:
        raise UnestimableSideError("unestimable side: bit-basis keys without phase-basis checks")
    if a.key2 > 0 and a.check1 < 1:
        raise UnestimableSideError("unestimable side: phase-basis keys without bit-basis checks")
    p1, ka1, kb1 = _split(data.alice1, data.bob1, a.check1, rng)
    p2, ka2, kb2 = _split(data.alice2, data.bob2, a.check2, rng)
    return Estimate(p1, p2, ka1, kb1, ka2, kb2, a.check1, a.check2)


def _reconcile_idealized(alice, bob, beta, rng, margin=0.0):
    out = int(math.floor(beta * alice.size))
    x = alice[:out].copy()
    err = float(np.mean(alice != bob)) if alice.size else 0.0
    threshold = binary_entropy_inverse(1.0 - beta) - margin
    if err <= threshold:
        return x, x.copy()
    # Decoder failure: Bob is left with his uncorrected string.
    return x, bob[:out].copy()


def _reconcile_passthrough(alice, bob, beta, rng, margin=0.0):
    out = int(math.floor(beta * alice.size))
    return alice[:out].copy(), bob[:out].copy()


RECONCILERS = {
    "idealized": _reconcile_idealized,
    "passthrough": _reconcile_passthrough,
}


def run_reconciliation(alice_keep, bob_keep, beta, strategy="idealized", rng=None, margin=0.0):
    """Reconcile one side with a rate-``beta`` code.

    ``strategy`` is a name from :data:`RECONCILERS` or a callable with the
    same signature ``(alice, bob, beta, rng, margin) -> (X, X_hat)``, the
    plug-in point for a real code. Returns ``(X, X_hat, leaked_bits)``.
    """
    if alice_keep.size != bob_keep.size:
        raise ValueError("Alice's and Bob's strings must have equal length")
    fn = RECONCILERS[strategy] if isinstance(strategy, str) else strategy
    x, x_hat = fn(alice_keep, bob_keep, beta, rng, margin)
    return x, x_hat, int(alice_keep.size - x.size)


def run_privacy_amplification(x, x_hat, sacrificed, rng):
    """Compress ``x`` and ``x_hat`` with one shared random modified Toeplitz hash.

    Returns ``(key, key_hat, seed)``; the seed is ``None`` when no bits remain.
    """
    out = x.size - sacrificed
    if out <= 0:
        empty = np.zeros(0, dtype=np.uint8)
        return empty, empty.copy(), None
    seed = gf2_hash.random_bits(rng, x.size - 1)
    h = gf2_hash.make_hash(x.size, out, seed)
    return h(x), h(x_hat), seed


def run_verification(key, key_hat, m3, rng):
    """Compare ``m3``-bit tags of the two keys; on success drop the first ``m3`` bits.

    Returns ``(passed, final_key, final_key_hat)``. A key no longer than
    ``m3`` leaves nothing after the discard and passes trivially.
    """
    if key.size <= m3:
        empty = np.zeros(0, dtype=np.uint8)
        return True, empty, empty.copy()
    seed = gf2_hash.random_bits(rng, key.size - 1)
    h = gf2_hash.make_hash(key.size, m3, seed)
    if not np.array_equal(h(key), h(key_hat)):
        return False, key[:0], key_hat[:0]
    return True, key[m3:], key_hat[m3:]


def run_protocol(config: ProtocolConfig, run_index: int = 0, keep_keys: bool = False) -> ProtocolOutcome:
    rng = trial_rng(config.master_seed, run_index)
    data = run_quantum_phase(config, rng)
    out = ProtocolOutcome(run_index, data.n1, data.n2, None, None)
    r = config.ratios
    try:
        est = run_estimation(data, r.r1, r.r2, rng)
    except UnestimableSideError:
        out.abort_reason = "unestimable"
        return out
    out.p1_hat, out.p2_hat = est.p1_hat, est.p2_hat
    try:
        report = finite_key_length(data.n1, data.n2, r, est.p1_hat, est.p2_hat,
                                   config.eps, config.beta, config.n)
    except InconclusiveEstimateError:
        out.abort_reason = "inconclusive"
        return out
    out.report = report
    out.m1, out.m2, out.m3 = report.sacrificed1, report.sacrificed2, report.verification_bits

    sides = ((est.key_alice1, est.key_bob1, report.sacrificed1),
             (est.key_alice2, est.key_bob2, report.sacrificed2))
    passed_all = True
    alice_keys, bob_keys = [], []
    for alice, bob, m in sides:
        if alice.size == 0:
            alice_keys.append(alice)
            bob_keys.append(bob)
            continue
        x, x_hat, _ = run_reconciliation(alice, bob, config.beta, config.reconciliation, rng,
                                         config.margin)
        if not np.array_equal(x, x_hat):
            out.reconciliation_failures += 1
        k, k_hat, _ = run_privacy_amplification(x, x_hat, m, rng)
        ok, k, k_hat = run_verification(k, k_hat, report.verification_bits, rng)
        passed_all &= ok
        alice_keys.append(k)
        bob_keys.append(k_hat)

    out.keys_match = all(np.array_equal(a, b) for a, b in zip(alice_keys, bob_keys))
    if passed_all:
        out.verified = True
        out.key_len = sum(int(k.size) for k in alice_keys)
    else:
        out.abort_reason = "verification_failed"
    if keep_keys:
        out.alice_keys, out.bob_keys = tuple(alice_keys), tuple(bob_keys)
    return out


# ---------------------------------------------------------------------------
# Ensembles and output
# ---------------------------------------------------------------------------

@dataclass
class EnsembleSummary:
    trials: int
    mean_key_len: float
    std_key_len: float
    abort_rate: float
    mean_n1: float
    mean_n2: float
    std_p2_hat: Optional[float]
    all_verified_keys_match: bool
    reconciliation_failure_rate: float
    histogram: tuple
    outcomes: list = field(repr=False, default_factory=list)

    @property
    def stderr_key_len(self):
        return self.std_key_len / math.sqrt(self.trials)


def _run_one(args):
    config, index = args
    return run_protocol(config, index)


def run_ensemble(config: ProtocolConfig, trials: int, workers: int = 1, bins: int = 20) -> EnsembleSummary:
    """Run ``trials`` independent protocol executions and summarise them.

    Results depend only on ``config`` (including ``master_seed``), not on
    ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    jobs = [(config, i) for i in range(trials)]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, jobs))
    else:
        outcomes = [_run_one(j) for j in jobs]
    return summarise(outcomes, bins=bins)


def _std(values):
    v = np.asarray(values, dtype=float)
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def summarise(outcomes, bins=20) -> EnsembleSummary:
    key = np.array([o.key_len for o in outcomes], dtype=float)
    p2 = [o.p2_hat for o in outcomes if o.p2_hat is not None]
    counts, edges = np.histogram(key, bins=bins)
    return EnsembleSummary(
        trials=len(outcomes),
        mean_key_len=float(key.mean()),
        std_key_len=_std(key),
        abort_rate=float(np.mean([not o.verified for o in outcomes])),
        mean_n1=float(np.mean([o.n1 for o in outcomes])),
        mean_n2=float(np.mean([o.n2 for o in outcomes])),
        std_p2_hat=_std(p2) if p2 else None,
        all_verified_keys_match=all(o.keys_match for o in outcomes if o.verified),
        reconciliation_failure_rate=float(np.mean([o.reconciliation_failures > 0 for o in outcomes])),
        histogram=(counts.tolist(), edges.tolist()),
        outcomes=list(outcomes),
    )


def expected_key_length(config: ProtocolConfig) -> KeyLengthReport:
    """Key length at the expected sifted counts with the channel's true error rates."""
    n, r0 = config.n, config.ratios.r0
    n1 = int(round(n * (1.0 - r0) ** 2))
    n2 = int(round(n * r0 ** 2))
    return finite_key_length(n1, n2, config.ratios, config.channel.q1, config.channel.q2,
                             config.eps, config.beta, n)


def outcomes_to_csv(outcomes) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {TRIAL_CSV_SCHEMA}\n")
    w = csv.DictWriter(buf, fieldnames=TRIAL_CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for o in outcomes:
        w.writerow(o.row())
    return buf.getvalue()


def write_outcomes_csv(outcomes, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(outcomes_to_csv(outcomes))


def summary_text(summary: EnsembleSummary, predicted: Optional[float] = None) -> str:
    """Render the summary as ``key = value`` lines."""
    lines = [
        f"schema = {TRIAL_CSV_SCHEMA}",
        f"trials = {summary.trials}",
        f"mean_key_len = {summary.mean_key_len:.6g}",
        f"std_key_len = {summary.std_key_len:.6g}",
        f"abort_rate = {summary.abort_rate:.6g}",
        f"mean_n1 = {summary.mean_n1:.6g}",
        f"mean_n2 = {summary.mean_n2:.6g}",
        f"std_p2_hat = {'' if summary.std_p2_hat is None else format(summary.std_p2_hat, '.6g')}",
        f"reconciliation_failure_rate = {summary.reconciliation_failure_rate:.6g}",
        f"verified_keys_identical = {str(summary.all_verified_keys_match).lower()}",
    ]
    if predicted is not None:
        se = summary.stderr_key_len
        z = (summary.mean_key_len - predicted) / se if se > 0 else float("nan")
        lines.append(f"predicted_key_len = {predicted:.6g}")
        lines.append(f"predicted vs empirical mean, z-score = {predicted:.6g} vs "
                     f"{summary.mean_key_len:.6g}, z = {z:.3g}")
    return "\n".join(lines) + "\n"
