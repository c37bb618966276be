"""Monte-Carlo propagation of GKP shifts through repeater chains.

Only shifts are tracked.  The q and p shifts of a mode evolve independently:
a correction in one quadrature, or an outer-stabilizer measurement, only
feeds Gaussian back-action into the other one.  Each quadrature is therefore
simulated on its own, as a batch of trials times modes, by a small program
compiled once per configuration from the station schedules.

One elementary link of a concatenated chain is a type-A station followed by
``m`` type-B stations and ``m + 1`` fiber segments.  The simulation of a
quadrature starts just after the outer correction of that quadrature at the
first type-A station and ends just after the same point ``links`` stations
later, where a virtual perfect GKP correction and a minimum-weight outer
correction classify what is left as a logical flip or not.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .codes import OuterCode, build_code, candidate_errors, min_weight_table
from .quadrature import (
    SQRT_PI,
    FiberParams,
    RandomStream,
    centered_mod,
    likelihood_unchecked,
    loss_to_sigma,
    odd_error_aggregate,
    transmissivity,
)
from .rescaling import DEFAULT_DIGITS, periodic_chain
from .schedule import OTHER, build_schedule

ENGINE_VERSION = "1.0"
LINKS = 100
BLOCK = 10_000
DEFAULT_BUDGET = 10_000_000
KINDS = ("gkp", "c4", "steane7")
QUAD_KEY = {"q": 0, "p": 1}
# stabilizer type whose measurement reveals shifts of each quadrature
STYPE_OF = {"q": "Z", "p": "X"}


# ---------------------------------------------------------------- primitives

@dataclass
class ModeState:
    """Residual shifts of a block of modes; arrays share a shape, modes on the last axis."""

    dq: np.ndarray
    dp: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "ModeState":
        return cls(np.zeros(shape), np.zeros(shape))

    def quad(self, name: str) -> np.ndarray:
        return self.dq if name == "q" else self.dp


@dataclass
class SyndromeRecord:
    analog_value: np.ndarray
    effective_sigma: float
    likelihood: np.ndarray
    link_position: int = 0
    qubit_index: int = 0
    quadrature: str = "q"


def gkp_correct(state: ModeState, quadrature: str, c: float, sigma_gkp: float, stream: RandomStream,
                mode=slice(None), sigma_data: float = 0.0, link_position: int = 0) -> SyndromeRecord:
    """Measure the GKP stabilizer of ``mode`` in ``quadrature`` and feed back ``c`` times the syndrome.

    ``sigma_data`` is the spread of the shift entering the correction; it only
    enters the likelihood attached to the record.
    """
    x = state.quad(quadrature)
    other = state.quad(OTHER[quadrature])
    shape = np.shape(x[..., mode])
    syn = centered_mod(x[..., mode] + stream.normal(sigma_gkp, shape), SQRT_PI)
    x[..., mode] = x[..., mode] - c * syn
    other[..., mode] = other[..., mode] - stream.normal(sigma_gkp, shape)
    sigma = math.sqrt(sigma_data ** 2 + sigma_gkp ** 2)
    lik = likelihood_unchecked(sigma, syn)
    qubit = mode if isinstance(mode, int) else -1
    return SyndromeRecord(syn, sigma, lik, link_position, qubit, quadrature)


def measure_outer_stabilizer(state: ModeState, support: Sequence[int], quadrature: str,
                             sigma_gkp: float, stream: RandomStream):
    """Analog outcome of a multi-mode stabilizer on ``support`` (0-based), with back-action."""
    cols = sorted(support)
    x = state.quad(quadrature)
    other = state.quad(OTHER[quadrature])
    batch = np.shape(x)[:-1]
    q0 = centered_mod(x[..., cols].sum(axis=-1) + stream.normal(sigma_gkp, batch or None), 2 * SQRT_PI)
    kick = stream.normal(sigma_gkp, batch or None)
    other[..., cols] = other[..., cols] - np.asarray(kick)[..., None]
    return q0


def stabilizer_bits(q0sl):
    """1 where the stabilizer reads -1; the boundary |q0| = sqrt(pi)/2 counts as -1."""
    return (np.abs(q0sl) >= SQRT_PI / 2).astype(np.uint8)


def infer_stabilizer(q0sl, sigma: float | None = None):
    """Stabilizer value (+1/-1) and the likelihood that the reading is wrong."""
    value = 1 - 2 * stabilizer_bits(q0sl).astype(int)
    if sigma is None:
        return value, None
    return value, likelihood_unchecked(sigma, centered_mod(q0sl, SQRT_PI))


@dataclass
class StabilizerRounds:
    """Readings of one stabilizer in one station: bits (1 means -1), flip likelihoods, step times."""

    values: tuple[int, ...]
    flip_likelihood: tuple[float, ...]
    times: tuple[int, ...]
    support: frozenset[int]


def decode_step1(rounds: Sequence[StabilizerRounds], intermediate) -> list[int]:
    """Reconcile repeated stabilizer readings into one syndrome.

    ``intermediate`` maps a qubit to ``(time, likelihood)`` pairs for the GKP
    corrections it received while the stabilizers were being measured.  When
    two readings disagree, the likelier of "round 1 was misread", "round 2 was
    misread" and "a GKP correction in between flipped a qubit" wins.  At most
    one such intermediate flip is assumed; it is placed at the correction of
    that qubit best matching the set of disagreeing stabilizers, stabilizers
    straddling it take their second reading, and stabilizers completed before
    it are flipped so the syndrome describes the block as it is now.
    """
    values: list[int] = []
    flagged: dict[int, tuple[int, float]] = {}
    for i, r in enumerate(rounds):
        if len(r.values) == 1 or r.values[0] == r.values[1]:
            values.append(int(r.values[0]))
            continue
        t1, t2 = r.times
        per_qubit = {}
        for j in sorted(r.support):
            keep = 1.0
            for t, p in intermediate.get(j, ()):
                if t1 < t < t2:
                    keep *= 1.0 - p
            per_qubit[j] = 1.0 - keep
        keep_all = 1.0
        for v in per_qubit.values():
            keep_all *= 1.0 - v
        p_between = 1.0 - keep_all
        pm1, pm2 = r.flip_likelihood
        if p_between > max(pm1, pm2):
            j = max(per_qubit, key=lambda q: (per_qubit[q], -q))
            flagged[i] = (j, per_qubit[j])
            values.append(int(r.values[1]))
        elif pm1 >= pm2:
            values.append(int(r.values[1]))
        else:
            values.append(int(r.values[0]))
    if not flagged:
        return values
    lead = max(flagged, key=lambda i: (flagged[i][1], -i))
    e = flagged[lead][0]
    marked = {i for i, (j, _) in flagged.items() if j == e}
    containing = [i for i, r in enumerate(rounds) if e in r.support and len(r.times) == 2]
    best = None
    for t, p in intermediate.get(e, ()):
        score = sum((rounds[i].times[0] < t < rounds[i].times[1]) == (i in marked) for i in containing)
        if best is None or (score, p) > best[0]:
            best = ((score, p), t)
    if best is None:
        return values
    t = best[1]
    for i in containing:
        t1, t2 = rounds[i].times
        if t1 < t < t2:
            values[i] = int(rounds[i].values[1])
        elif t > t2:
            values[i] ^= 1
    return values


@lru_cache(maxsize=None)
def _candidate_masks(code_name: str, kind: str) -> np.ndarray:
    code = build_code(code_name)
    m = len(code.stabilizers(kind))
    width = max(len(candidate_errors(code, _bits(s, m), kind)) for s in range(1, 2 ** m))
    out = np.zeros((2 ** m, width, code.n), dtype=bool)
    for s in range(1, 2 ** m):
        for c, sup in enumerate(candidate_errors(code, _bits(s, m), kind)):
            out[s, c, list(sup)] = True
    return out


def _bits(s: int, m: int) -> tuple[int, ...]:
    return tuple((s >> (m - 1 - i)) & 1 for i in range(m))


def _syndrome_to_index(bits: np.ndarray) -> np.ndarray:
    m = bits.shape[-1]
    return bits.astype(np.int64) @ (1 << np.arange(m - 1, -1, -1))


def decode_step2(code: OuterCode, kind: str, syndrome, odd=None, analog: bool = True) -> np.ndarray:
    """Correction support (boolean mask over qubits) for each syndrome in a batch.

    ``odd`` holds, per qubit, the probability that its GKP corrections since
    the last outer correction flipped it an odd number of times.
    """
    syndrome = np.atleast_2d(np.asarray(syndrome, dtype=np.uint8))
    idx = _syndrome_to_index(syndrome)
    if not analog:
        return min_weight_table(code.name, kind)[idx].astype(bool)
    odd = np.atleast_2d(np.asarray(odd, dtype=float))
    if code.name == "c4":
        # each stabilizer with a -1 picks its likeliest flipped member
        out = np.zeros((syndrome.shape[0], code.n), dtype=bool)
        rows = np.arange(syndrome.shape[0])
        for i, stab in enumerate(code.stabilizers(kind)):
            cols = np.array(sorted(stab))
            pick = cols[np.argmax(odd[:, cols], axis=1)]
            hit = syndrome[:, i] == 1
            out[rows[hit], pick[hit]] = True
        return out
    cand = _candidate_masks(code.name, kind)[idx]  # (B, candidates, n)
    o = np.clip(odd, 1e-300, 1.0 - 1e-16)
    ratio = np.log(o) - np.log1p(-o)
    score = np.where(cand, ratio[:, None, :], 0.0).sum(axis=2)
    choice = np.argmax(score, axis=1)
    return cand[np.arange(len(idx)), choice]


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class ChainConfig:
    """A repeater chain: fiber, squeezing and station layout per 10 km.

    For ``code == "gkp"`` every station is a single-mode GKP repeater and
    ``n_all`` sets their density; ``n_multi`` is ignored.
    """

    eta0: float
    sigma_gkp: float
    code: str = "gkp"
    n_multi: int = 1
    n_all: int = 40
    links: int = LINKS
    analog: bool = True
    digits: int = DEFAULT_DIGITS
    lossless: bool = False  # drop fiber noise entirely (bookkeeping checks)

    def __post_init__(self):
        FiberParams(self.eta0)
        if self.sigma_gkp < 0:
            raise ValueError("sigma_gkp must be non-negative")
        if self.code not in KINDS:
            raise ValueError(f"code must be one of {KINDS}")
        if not 1 <= self.n_all <= 40:
            raise ValueError("n_all must lie in [1, 40]")
        if self.code == "gkp":
            object.__setattr__(self, "n_multi", self.n_all)
        elif not (1 <= self.n_multi <= self.n_all and self.n_all % self.n_multi == 0):
            raise ValueError("n_multi must divide n_all")
        if self.links < 1:
            raise ValueError("links must be positive")

    @property
    def spacing_km(self) -> float:
        return 10.0 / self.n_all

    @property
    def sigma_trans(self) -> float:
        if self.lossless:
            return 0.0
        return loss_to_sigma(transmissivity(FiberParams(self.eta0), self.spacing_km))

    @property
    def type_b_per_link(self) -> int:
        return 0 if self.code == "gkp" else self.n_all // self.n_multi - 1

    @property
    def n_modes(self) -> int:
        return {"gkp": 1, "c4": 4, "steane7": 7}[self.code]

    @property
    def link_km(self) -> float:
        return 10.0 / self.n_multi

    @property
    def deterministic(self) -> bool:
        return self.sigma_gkp == 0 and self.sigma_trans == 0

    def key(self) -> dict:
        d = asdict(self)
        d["engine_version"] = ENGINE_VERSION
        return d


# ------------------------------------------------------------- compilation

NOISE, COMMON, CORRECT, MEASURE, DECODE = range(5)


@dataclass
class QuadProgram:
    quad: str
    n: int
    links: int
    sigma_gkp: float
    init_std: np.ndarray
    ops: list
    code: OuterCode | None
    analog: bool
    # per-decode metadata: stabilizer (index, round) -> step time, and window corrections per op id
    meas_times: dict = field(default_factory=dict)
    window_ops: dict = field(default_factory=dict)
    coefficients: dict = field(default_factory=dict)


def _station_events(cfg: ChainConfig, quad: str):
    """Events of one period in time order, ending with the anchor the period starts after."""
    n = cfg.n_modes
    vg = cfg.sigma_gkp ** 2
    vt = cfg.sigma_trans ** 2
    every = tuple(range(n))
    type_b = [("correct", every, None) if g == quad else ("noise", every, vg) for g in ("q", "p")]
    if cfg.code == "gkp":
        ev = [("noise", every, vt)] + type_b
        k = next(i for i, e in enumerate(ev) if e[0] == "correct")
        return ev[k + 1:] + ev[: k + 1]
    sched = build_schedule(cfg.code, "A")
    stype = STYPE_OF[quad]
    last_meas = max(t for seq in sched.ops for t, op in enumerate(seq) if op.kind == "M" and op.stype == stype)
    station = []
    for t in range(sched.steps):
        groups: dict = {}
        for j, seq in enumerate(sched.ops):
            op = seq[t]
            if op.kind == "G" and op.quad == quad:
                groups.setdefault(("correct",), []).append(j)
            elif op.kind == "G":
                groups.setdefault(("noise",), []).append(j)
            elif op.kind == "M" and op.stype == stype:
                groups.setdefault(("measure", op.stab, op.round), []).append(j)
            elif op.kind == "M":
                groups.setdefault(("common", op.stab, op.round), []).append(j)
        for g, cols in groups.items():
            cols = tuple(cols)
            if g[0] == "correct":
                station.append(("correct", cols, t))
            elif g[0] == "noise":
                station.append(("noise", cols, vg))
            elif g[0] == "common":
                station.append(("common", cols, vg))
            else:
                station.append(("measure", cols, (g[1], g[2], t)))
        if t == last_meas:
            station.append(("decode", every, None))
    ev = list(station)
    for _ in range(cfg.type_b_per_link):
        ev.append(("noise", every, vt))
        ev.extend(type_b)
    ev.append(("noise", every, vt))
    k = next(i for i, e in enumerate(ev) if e[0] == "decode")
    return ev[k + 1:] + ev[: k + 1]


def _solve_mode(sigma_gkp: float, chain: tuple, tail: float, digits: int):
    if sigma_gkp == 0:
        return [1.0] * len(chain), [0.0] * len(chain), tail
    cs, v0 = periodic_chain(sigma_gkp, chain, tail, digits=digits)
    return cs.realtime, cs.residuals, v0


@lru_cache(maxsize=64)
def compile_program(cfg: ChainConfig, quad: str) -> QuadProgram:
    events = _station_events(cfg, quad)
    n = cfg.n_modes
    vg = cfg.sigma_gkp ** 2

    # noise reaching each mode between its corrections over one period
    chains: list[list[float]] = [[] for _ in range(n)]
    acc = [0.0] * n
    for kind, cols, arg in events:
        if kind in ("noise", "common"):
            for j in cols:
                acc[j] += arg
        elif kind == "correct":
            for j in cols:
                chains[j].append(acc[j])
                acc[j] = 0.0
    solved = {}
    per_mode = []
    for j in range(n):
        key = (tuple(chains[j]), acc[j])
        if key not in solved:
            solved[key] = _solve_mode(cfg.sigma_gkp, key[0], key[1], cfg.digits)
        per_mode.append(solved[key])

    # second pass: coefficients and the spread of every recorded syndrome
    v = [pm[2] for pm in per_mode]
    pos = [0] * n
    ops = []
    meas_times = {}
    window_ops = {}
    first_meas = None
    for kind, cols, arg in events:
        if kind == "noise":
            for j in cols:
                v[j] += arg
            if arg > 0:
                std = np.zeros(n)
                std[list(cols)] = math.sqrt(arg)
                if ops and ops[-1][0] == NOISE:
                    std = np.sqrt(ops[-1][1] ** 2 + std ** 2)
                    ops[-1] = (NOISE, std, np.flatnonzero(std))
                else:
                    ops.append((NOISE, std, np.flatnonzero(std)))
        elif kind == "common":
            for j in cols:
                v[j] += arg
            if arg > 0:
                ops.append((COMMON, np.array(cols), math.sqrt(arg)))
        elif kind == "correct":
            c = np.empty(len(cols))
            sig = np.empty(len(cols))
            for i, j in enumerate(cols):
                realtime, residuals, _ = per_mode[j]
                sig[i] = math.sqrt(v[j] + vg)
                c[i] = realtime[pos[j]]
                v[j] = residuals[pos[j]]
                pos[j] += 1
            t = arg
            op_id = len(ops)
            if t is not None and first_meas is not None:
                window_ops[op_id] = (t, cols)
            ops.append((CORRECT, _cols(cols, n), c, sig, op_id))
        elif kind == "measure":
            stab, rnd, t = arg
            if first_meas is None:
                first_meas = t
            sig = math.sqrt(sum(v[j] for j in cols) + vg)
            meas_times[(stab, rnd)] = t
            ops.append((MEASURE, np.array(cols), (stab, rnd), sig))
        elif kind == "decode":
            ops.append((DECODE,))
            first_meas = None
    init_std = np.sqrt(np.array([pm[2] for pm in per_mode]))
    code = None if cfg.code == "gkp" else build_code(cfg.code)
    coeffs = {f"mode{j}": {"realtime": list(per_mode[j][0]), "entry_variance": per_mode[j][2]} for j in range(n)}
    return QuadProgram(quad, n, cfg.links, cfg.sigma_gkp, init_std, ops, code, cfg.analog,
                       meas_times, window_ops, coeffs)


def _cols(cols, n):
    return slice(None) if tuple(cols) == tuple(range(n)) else np.array(cols)


# --------------------------------------------------------------- execution

def _reconcile_rows(prog: QuadProgram, meas: dict, kept: dict, rows: np.ndarray, bits: dict) -> np.ndarray:
    """Step-1 decoding for the trials whose repeated readings disagree."""
    code = prog.code
    kind = STYPE_OF[prog.quad]
    stabs = code.stabilizers(kind)
    out = np.empty((len(rows), len(stabs)), dtype=np.uint8)
    pm = {}
    for key, (q0, sig) in meas.items():
        pm[key] = likelihood_unchecked(sig, centered_mod(q0[rows], SQRT_PI))
    for r_i, row in enumerate(rows):
        rounds = []
        for s_i, stab in enumerate(stabs):
            keys = [(s_i, 0), (s_i, 1)] if (s_i, 1) in meas else [(s_i, 0)]
            rounds.append(StabilizerRounds(
                tuple(int(bits[k][row]) for k in keys),
                tuple(float(pm[k][r_i]) for k in keys),
                tuple(prog.meas_times[k] for k in keys),
                stab,
            ))
        inter: dict[int, list] = {}
        for op_id, (t, cols) in prog.window_ops.items():
            p = kept[op_id]
            for c_i, j in enumerate(cols):
                inter.setdefault(j, []).append((t, float(p[row, c_i])))
        out[r_i] = decode_step1(rounds, inter)
    return out


def _decode(prog: QuadProgram, x: np.ndarray, odd, meas: dict, kept: dict):
    code = prog.code
    kind = STYPE_OF[prog.quad]
    stabs = code.stabilizers(kind)
    bits = {k: stabilizer_bits(q0) for k, (q0, _) in meas.items()}
    two = (0, 1) in meas
    last = 1 if two else 0
    syndrome = np.stack([bits[(s, last)] for s in range(len(stabs))], axis=1)
    if two and prog.analog:
        first = np.stack([bits[(s, 0)] for s in range(len(stabs))], axis=1)
        rows = np.flatnonzero((first != syndrome).any(axis=1))
        if len(rows):
            syndrome[rows] = _reconcile_rows(prog, meas, kept, rows, bits)
    mask = decode_step2(code, kind, syndrome, odd, prog.analog)
    if mask.any():
        xs = x[mask]
        x[mask] = xs - SQRT_PI * np.where(xs >= 0, 1.0, -1.0)


def _virtual_flips(prog: QuadProgram, x: np.ndarray) -> np.ndarray:
    """Perfect GKP then minimum-weight outer correction; True where a logical flip remains."""
    f = (np.rint(x / SQRT_PI).astype(np.int64) & 1).astype(np.uint8)
    if prog.code is None:
        return f[:, 0].astype(bool)
    kind = STYPE_OF[prog.quad]
    syn = prog.code.syndrome(kind, f)
    e = f ^ min_weight_table(prog.code.name, kind)[_syndrome_to_index(syn)]
    logical = sorted(prog.code.logical_support(kind))
    return (e[:, logical].sum(axis=1) % 2).astype(bool)


def run_quadrature(prog: QuadProgram, n_trials: int, stream: RandomStream) -> np.ndarray:
    """Simulate ``prog.links`` links for ``n_trials`` trials; returns logical-flip booleans."""
    B, n = n_trials, prog.n
    sg = prog.sigma_gkp
    x = stream.standard_normal((B, n)) * prog.init_std
    track = prog.analog and prog.code is not None
    odd = np.zeros((B, n)) if track else None
    for _ in range(prog.links):
        meas: dict = {}
        kept: dict = {}
        for op in prog.ops:
            kind = op[0]
            if kind == NOISE:
                _, std, nz = op
                if len(nz) == n:
                    x += stream.standard_normal((B, n)) * std
                else:
                    x[:, nz] += stream.standard_normal((B, len(nz))) * std[nz]
            elif kind == CORRECT:
                _, cols, c, sig, op_id = op
                xs = x[:, cols]
                raw = xs + stream.standard_normal(xs.shape) * sg if sg > 0 else xs
                syn = raw - SQRT_PI * np.floor(raw / SQRT_PI + 0.5)
                x[:, cols] = xs - c * syn
                if track:
                    p = likelihood_unchecked(sig, syn)
                    o = odd[:, cols]
                    odd[:, cols] = o + p - 2.0 * o * p
                    if op_id in prog.window_ops:
                        kept[op_id] = p
            elif kind == COMMON:
                _, cols, std = op
                x[:, cols] += (stream.standard_normal(B) * std)[:, None]
            elif kind == MEASURE:
                _, cols, key, sig = op
                total = x[:, cols].sum(axis=1)
                if sg > 0:
                    total = total + stream.standard_normal(B) * sg
                meas[key] = (centered_mod(total, 2 * SQRT_PI), sig)
            else:
                _decode(prog, x, odd, meas, kept)
                if track:
                    odd[:] = 0.0
                meas, kept = {}, {}
    return _virtual_flips(prog, x)


@dataclass
class TrialResult:
    flips_x: np.ndarray
    flips_z: np.ndarray

    @property
    def n(self) -> int:
        return len(self.flips_x)


def run_chain(cfg: ChainConfig, n_trials: int, seed: int = 0, block_start: int = 0) -> TrialResult:
    """Logical X (from q shifts) and Z (from p shifts) flips over ``cfg.links`` links."""
    out = []
    for quad in ("q", "p"):
        prog = compile_program(cfg, quad)
        stream = RandomStream(seed, (QUAD_KEY[quad], block_start))
        out.append(run_quadrature(prog, n_trials, stream))
    return TrialResult(out[0], out[1])


# ----------------------------------------------------------------- sampling

def block_bounds(k: int) -> list[tuple[int, int]]:
    """Fixed partition of trial indices [0, k) into (start, size) blocks."""
    bounds = []
    s = 0
    for edge in (10, 100, 1000, BLOCK):
        if s >= k:
            return bounds
        e = min(edge, k)
        bounds.append((s, e - s))
        s = e
    while s < k:
        e = min(s + BLOCK, k)
        bounds.append((s, e - s))
        s = e
    return bounds


def standard_error(p: float, k: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / k)


def relative_error(p: float, k: int, deterministic: bool = False) -> float:
    se = standard_error(p, k)
    if se == 0 and (p > 0 or deterministic):
        return 0.0
    return se / p if p > 0 else math.inf


@dataclass
class SimEstimate:
    p_x: float
    p_z: float
    se_x: float
    se_z: float
    k: int
    converged: bool
    b: float
    seed: int
    links: int = LINKS
    config: dict = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return not self.converged

    def per_link(self, which: str, scale: float = 1.0) -> float:
        """Flip probability of one elementary link, optionally with p scaled by ``scale``."""
        p = min(max((self.p_x if which == "x" else self.p_z) * scale, 0.0), 0.5)
        return odd_error_aggregate(p, 1.0 / self.links)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flagged"] = self.flagged
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimEstimate":
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in names})


def adaptive_counts(sampler: Callable[[int, int], Sequence[int]], b: float, budget: int = DEFAULT_BUDGET,
                    workers: int = 1, deterministic: bool = False):
    """Grow the sample tenfold from 10 until every rate has relative error below ``b``.

    ``sampler(start, size)`` returns event counts for trials [start, start+size);
    blocks are fixed, so the totals do not depend on ``workers``.  Returns
    ``(counts, k, converged)``.
    """
    if not 0 < b < 1:
        raise ValueError("b must lie in (0, 1)")
    if budget < 10:
        raise ValueError("budget must allow at least 10 trials")
    done: dict[tuple[int, int], Sequence[int]] = {}
    k = 10
    while True:
        todo = [blk for blk in block_bounds(k) if blk not in done]
        if workers > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for blk, res in zip(todo, pool.map(_call_sampler, [(sampler, t) for t in todo])):
                    done[blk] = res
        else:
            for blk in todo:
                done[blk] = sampler(*blk)
        counts = np.sum([done[blk] for blk in block_bounds(k)], axis=0)
        rel = [relative_error(c / k, k, deterministic) for c in counts]
        if deterministic or max(rel) < b:
            return counts, k, True
        if k * 10 > budget:
            return counts, k, False
        k *= 10


def _call_sampler(args):
    sampler, (start, size) = args
    return sampler(start, size)


class ChainSampler:
    """Picklable ``(start, size) -> (x flips, z flips)`` for a chain configuration."""

    def __init__(self, cfg: ChainConfig, seed: int):
        self.cfg = cfg
        self.seed = seed

    def __call__(self, start: int, size: int):
        res = run_chain(self.cfg, size, self.seed, start)
        return np.array([res.flips_x.sum(), res.flips_z.sum()])


def estimate(cfg: ChainConfig, b: float, seed: int = 0, budget: int = DEFAULT_BUDGET,
             workers: int = 1, cache=None) -> SimEstimate:
    """Adaptive estimate of the chain's logical flip rates.

    With a :class:`~gkprepeater.cache.ResultCache`, a stored estimate is reused
    when it converged or was itself limited by at least this ``budget``.
    """
    key = dict(cfg.key(), b=b, seed=seed)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None and (hit["converged"] or hit["budget"] >= budget):
            return SimEstimate.from_dict(hit)
    counts, k, ok = adaptive_counts(ChainSampler(cfg, seed), b, budget, workers, cfg.deterministic)
    px, pz = counts[0] / k, counts[1] / k
    est = SimEstimate(float(px), float(pz), standard_error(px, k), standard_error(pz, k), int(k), ok, b, seed,
                      cfg.links, cfg.key())
    if cache is not None:
        cache.put(key, dict(est.to_dict(), budget=budget))
    return est


TRIAL_RECORD = np.dtype([("trial", "<u8"), ("flips", "u1")])


def write_trial_log(path, cfg: ChainConfig, n_trials: int, seed: int = 0) -> int:
    """Fixed-width binary log: trial index and flip bits (bit 0 X, bit 1 Z) for every trial.

    Trials are regenerated block by block, so the log matches the estimate
    run with the same seed.
    """
    with open(path, "wb") as f:
        for start, size in block_bounds(n_trials):
            res = run_chain(cfg, size, seed, start)
            rec = np.empty(size, dtype=TRIAL_RECORD)
            rec["trial"] = np.arange(start, start + size)
            rec["flips"] = res.flips_x.astype(np.uint8) | (res.flips_z.astype(np.uint8) << 1)
            f.write(rec.tobytes())
    return n_trials


def read_trial_log(path) -> np.ndarray:
    return np.fromfile(path, dtype=TRIAL_RECORD)


# --------------------------------------------------------- single link test

SCHEMES = {
    "gkp-only": (None, True),
    "c4-analog": ("c4", True),
    "steane7-analog": ("steane7", True),
    "steane7-no-analog": ("steane7", False),
}


def single_link_trials(gamma: float, scheme: str, n_trials: int, stream: RandomStream) -> np.ndarray:
    """One lossy link with perfect encoding and perfect ancillas; True where any logical error remains."""
    code_name, analog = SCHEMES[scheme]
    code = build_code(code_name) if code_name else None
    n = code.n if code else 1
    sigma = math.sqrt(gamma)
    any_err = np.zeros(n_trials, dtype=bool)
    for quad in ("q", "p"):
        x = stream.standard_normal((n_trials, n)) * sigma
        syn = centered_mod(x, SQRT_PI)
        f = (np.rint((x - syn) / SQRT_PI).astype(np.int64) & 1).astype(np.uint8)
        if code is None:
            any_err |= f[:, 0].astype(bool)
            continue
        kind = STYPE_OF[quad]
        p = likelihood_unchecked(sigma, syn) if analog else None
        mask = decode_step2(code, kind, code.syndrome(kind, f), p, analog)
        e = f ^ mask.astype(np.uint8)
        logical = sorted(code.logical_support(kind))
        any_err |= (e[:, logical].sum(axis=1) % 2).astype(bool)
    return any_err


class SingleLinkSampler:
    def __init__(self, gamma: float, scheme: str, seed: int):
        self.gamma, self.scheme, self.seed = gamma, scheme, seed

    def __call__(self, start: int, size: int):
        key = (10 + list(SCHEMES).index(self.scheme), int(round(self.gamma * 1e12)), start)
        stream = RandomStream(self.seed, key)
        return np.array([single_link_trials(self.gamma, self.scheme, size, stream).sum()])


@dataclass
class CurvePoint:
    gamma: float
    scheme: str
    p_err: float
    stderr: float
    k: int
    converged: bool


def single_link_experiment(gammas: Sequence[float], scheme: str, b: float = 0.1, seed: int = 0,
                           budget: int = DEFAULT_BUDGET, workers: int = 1) -> list[CurvePoint]:
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {tuple(SCHEMES)}")
    out = []
    for g in gammas:
        if not 0 <= g < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if g == 0:
            out.append(CurvePoint(0.0, scheme, 0.0, 0.0, 10, True))
            continue
        counts, k, ok = adaptive_counts(SingleLinkSampler(g, scheme, seed), b, budget, workers)
        p = counts[0] / k
        out.append(CurvePoint(float(g), scheme, float(p), standard_error(p, k), int(k), ok))
    return out


def default_workers() -> int:
    return os.cpu_count() or 1
