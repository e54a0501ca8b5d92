"""Synthetic workload generation from semi-Markov process profiles.

A profile is a small cycle of states.  Each simulated interval the
process sits in one state, emits Poisson(rate * t) syscalls split
multinomially by the state's syscall mix, and leaves the state with
probability t/dwell (so visit lengths are geometric with the configured
mean and the process is memoryless at interval granularity).  Cycling
visits states in list order.

Because geometric dwell is memoryless, the stationary fraction of
intervals spent in state i is proportional to its mean dwell, which
depends only on the set of states, not their order.  Two profiles with
the same states in different cycle orders therefore produce identical
per-vector marginal statistics; only the transition structure differs.
The builtin "tempo-fwd" / "tempo-rev" pair exercises exactly that.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import SyscallTable, SyscallTableError, TraceEvent, normalize_rows
from .dataset import SequenceDataset

TWIN_NAMES = ("tempo-fwd", "tempo-rev")

DEFAULT_INTERVAL_NS = 1_000_000_000


class ProfileError(ValueError):
    """Invalid profile definition or profile file."""


@dataclass(frozen=True, eq=False)
class ProfileState:
    """One behavioral mode: mean dwell seconds, event rate, syscall mix."""

    name: str
    dwell: float
    rate: float
    mix: np.ndarray  # (D,) probabilities

    def __post_init__(self) -> None:
        if self.dwell <= 0:
            raise ProfileError(f"state {self.name!r}: dwell must be > 0")
        if self.rate < 0:
            raise ProfileError(f"state {self.name!r}: rate must be >= 0")
        mix = np.asarray(self.mix, dtype=np.float64)
        if mix.ndim != 1 or mix.size == 0:
            raise ProfileError(f"state {self.name!r}: mix must be a 1-d vector")
        if (mix < 0).any() or not np.isfinite(mix).all():
            raise ProfileError(f"state {self.name!r}: mix weights must be finite "
                               "and nonnegative")
        total = mix.sum()
        if total <= 0:
            raise ProfileError(f"state {self.name!r}: mix weights sum to zero")
        object.__setattr__(self, "mix", mix / total)


@dataclass(frozen=True, eq=False)
class ProcessProfile:
    """A named workload class: a cycle of states plus a malice flag."""

    name: str
    states: tuple[ProfileState, ...]
    malicious: bool = False

    def __post_init__(self) -> None:
        states = tuple(self.states)
        if not states:
            raise ProfileError(f"profile {self.name!r} has no states")
        D = states[0].mix.size
        if any(s.mix.size != D for s in states):
            raise ProfileError(f"profile {self.name!r}: states disagree on "
                               "syscall dimension")
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].mix.size


def stationary_mix(profile: ProcessProfile, interval_s: float = 1.0) -> np.ndarray:
    """Event-weighted stationary syscall distribution of the cycle.

    pi_i is proportional to the expected intervals per visit of state i;
    the marginal chance that a random emitted call has type j is then
    sum_i pi_i rate_i mix_i[j] normalized.  Order-invariant by construction.
    """
    steps = np.array([max(s.dwell / interval_s, 1.0) for s in profile.states])
    rates = np.array([s.rate for s in profile.states])
    weights = steps * rates
    total = weights.sum()
    if total <= 0:
        return np.full(profile.dim, 1.0 / profile.dim)
    mixes = np.stack([s.mix for s in profile.states])
    return (weights / total) @ mixes


def _state_sequence(profile: ProcessProfile, num_intervals: int, interval_s: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Per-interval state indices; stationary start, geometric dwells."""
    K = len(profile.states)
    steps = np.array([max(s.dwell / interval_s, 1.0) for s in profile.states])
    p_leave = 1.0 / steps
    seq = np.empty(num_intervals, dtype=np.int64)
    # memorylessness makes the residual dwell a fresh geometric draw, so
    # starting a full run in a dwell-weighted state is exactly stationary
    state = int(rng.choice(K, p=steps / steps.sum()))
    pos = 0
    while pos < num_intervals:
        run = min(int(rng.geometric(p_leave[state])), num_intervals - pos)
        seq[pos:pos + run] = state
        pos += run
        state = (state + 1) % K
    return seq


def simulate_counts(profile: ProcessProfile, num_intervals: int,
                    interval_ns: int, rng: np.random.Generator
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Count matrix (num_intervals, D) plus the state index per interval."""
    if num_intervals < 0:
        raise ValueError("num_intervals must be >= 0")
    t_s = interval_ns / 1e9
    D = profile.dim
    seq = _state_sequence(profile, num_intervals, t_s, rng)
    rates = np.array([s.rate for s in profile.states])
    totals = rng.poisson(rates[seq] * t_s)
    counts = np.zeros((num_intervals, D), dtype=np.int64)
    for i, st in enumerate(profile.states):
        idx = np.nonzero(seq == i)[0]
        if idx.size:
            counts[idx] = rng.multinomial(totals[idx], st.mix)
    return counts, seq


def _event_seed(seed: int, host_id: str, pid: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        [int(seed), zlib.crc32(host_id.encode("utf-8")), int(pid)])


def generate_events(profile: ProcessProfile, host_id: str, pid: int,
                    num_intervals: int, interval_ns: int = DEFAULT_INTERVAL_NS,
                    seed: int = 0, start_ns: int = 0,
                    declared_name: str | None = None,
                    return_counts: bool = False):
    """Synthesize a sorted TraceEvent stream for one process.

    Timestamps are uniform within each interval so aggregation at the
    same interval length reproduces the underlying count matrix exactly
    (ask for it with return_counts=True to check).
    """
    ss = _event_seed(seed, host_id, pid)
    counts_rng, time_rng = [np.random.default_rng(s) for s in ss.spawn(2)]
    counts, _ = simulate_counts(profile, num_intervals, interval_ns, counts_rng)
    declared = profile.name if declared_name is None else declared_name
    D = profile.dim
    per_interval = counts.sum(axis=1)
    syscalls = np.repeat(np.tile(np.arange(D), num_intervals), counts.ravel())
    iv = np.repeat(np.arange(num_intervals), per_interval)
    offs = time_rng.random(syscalls.size)
    # sort offsets inside each interval; blocks are already contiguous,
    # so the pairing of sorted times with per-interval syscalls is stable
    order = np.lexsort((offs, iv))
    ts = start_ns + iv * interval_ns + (offs[order] * interval_ns).astype(np.int64)
    events = [TraceEvent(timestamp=int(ts[k]), host_id=host_id, pid=pid,
                         declared_name=declared, syscall=int(syscalls[k]))
              for k in range(syscalls.size)]
    if return_counts:
        return events, counts
    return events


def generate_dataset(profiles: Sequence[ProcessProfile], windows_per_class: int,
                     window: int = 10, interval_ns: int = DEFAULT_INTERVAL_NS,
                     seed: int = 0, train_frac: float = 0.8
                     ) -> tuple[SequenceDataset, SequenceDataset]:
    """Labeled train/test window datasets, split by time block per class.

    Each class is one contiguous simulated stream chopped into tumbling
    windows; the first train_frac of each class's windows become training
    data and the remainder test data, so no window content leaks across
    the split boundary.
    """
    profiles = list(profiles)
    if not profiles:
        raise ProfileError("no profiles given")
    if len({p.name for p in profiles}) != len(profiles):
        raise ProfileError("duplicate profile names")
    D = profiles[0].dim
    if any(p.dim != D for p in profiles):
        raise ProfileError("profiles disagree on syscall dimension")
    if windows_per_class < 2:
        raise ValueError("need at least 2 windows per class to split")
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    n_train = int(round(train_frac * windows_per_class))
    n_train = min(max(n_train, 1), windows_per_class - 1)
    Xtr, ytr, Xte, yte = [], [], [], []
    for label, prof in enumerate(profiles):
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), 0xDA7A, label]))
        counts, _ = simulate_counts(prof, windows_per_class * window,
                                    interval_ns, rng)
        rows = normalize_rows(counts.astype(np.float64))
        wins = rows.reshape(windows_per_class, window, D)
        Xtr.append(wins[:n_train])
        Xte.append(wins[n_train:])
        ytr.append(np.full(n_train, label, dtype=np.int64))
        yte.append(np.full(windows_per_class - n_train, label, dtype=np.int64))
    names = [p.name for p in profiles]
    train = SequenceDataset(np.concatenate(Xtr), np.concatenate(ytr), names,
                            interval_ns)
    test = SequenceDataset(np.concatenate(Xte), np.concatenate(yte), names,
                           interval_ns)
    return train, test


def _mix(table: SyscallTable, specific: dict[str, float],
         common: dict[str, float] | None = None,
         common_frac: float = 0.35) -> np.ndarray:
    """Dense mix vector: common_frac of shared mass plus the specifics."""
    D = table.size
    out = np.zeros(D)
    for name, w in specific.items():
        out[table.index_of(name)] += w
    out *= (1.0 - common_frac) / out.sum() if common else 1.0 / out.sum()
    if common:
        base = np.zeros(D)
        for name, w in common.items():
            base[table.index_of(name)] += w
        out += common_frac * base / base.sum()
    return out


_COMMON = {"read": 0.14, "write": 0.12, "close": 0.08, "futex": 0.12,
           "mmap": 0.07, "brk": 0.04, "rt_sigprocmask": 0.04,
           "clock_gettime": 0.12, "getpid": 0.04, "gettid": 0.04,
           "fcntl": 0.07, "lseek": 0.06, "fstat": 0.06}


def builtin_profiles(table: SyscallTable) -> list[ProcessProfile]:
    """The default ten workload classes.

    Eight generic services plus the temporal twin pair, which always sits
    last in the list in the order given by TWIN_NAMES.
    """
    def st(name: str, dwell: float, rate: float,
           specific: dict[str, float]) -> ProfileState:
        return ProfileState(name, dwell, rate, _mix(table, specific, _COMMON))

    profiles = [
        ProcessProfile("web-server", (
            st("serve", 6, 140, {"accept4": 0.10, "recvfrom": 0.22,
                                 "sendto": 0.22, "epoll_wait": 0.16,
                                 "read": 0.12, "write": 0.10, "close": 0.08}),
            st("idle", 4, 25, {"epoll_wait": 0.50, "clock_gettime": 0.20,
                               "recvfrom": 0.15, "sendto": 0.15}),
        )),
        ProcessProfile("database", (
            st("query", 5, 160, {"pread64": 0.28, "pwrite64": 0.12,
                                 "lseek": 0.15, "futex": 0.15, "read": 0.12,
                                 "write": 0.10, "fsync": 0.08}),
            st("checkpoint", 3, 90, {"pwrite64": 0.38, "fsync": 0.22,
                                     "write": 0.20, "lseek": 0.20}),
        )),
        ProcessProfile("build-farm", (
            st("compile", 7, 180, {"openat": 0.20, "read": 0.24, "mmap": 0.16,
                                   "close": 0.14, "fstat": 0.10, "write": 0.08,
                                   "brk": 0.08}),
            st("spawn", 2, 60, {"clone": 0.12, "execve": 0.10, "wait4": 0.18,
                                "openat": 0.20, "read": 0.20, "mmap": 0.20}),
        )),
        ProcessProfile("file-indexer", (
            st("scan", 6, 130, {"getdents64": 0.30, "openat": 0.22,
                                "newfstatat": 0.20, "close": 0.18,
                                "readlink": 0.10}),
            st("digest", 4, 150, {"read": 0.55, "openat": 0.15, "close": 0.15,
                                  "lseek": 0.15}),
        )),
        ProcessProfile("log-shipper", (
            st("collect", 5, 100, {"read": 0.30, "poll": 0.20, "fstat": 0.15,
                                   "openat": 0.15, "write": 0.20}),
            st("flush", 3, 120, {"sendto": 0.45, "write": 0.20,
                                 "connect": 0.10, "socket": 0.05,
                                 "poll": 0.20}),
        )),
        ProcessProfile("cache-node", (
            st("hot", 6, 170, {"recvfrom": 0.28, "sendto": 0.28,
                               "epoll_wait": 0.20, "futex": 0.14,
                               "madvise": 0.10}),
            st("evict", 2, 80, {"madvise": 0.40, "munmap": 0.25, "mmap": 0.20,
                                "futex": 0.15}),
        )),
        ProcessProfile("cryptominer", (
            st("mine", 12, 70, {"sched_yield": 0.35, "futex": 0.30,
                                "clock_gettime": 0.25, "mmap": 0.10}),
            st("poll-pool", 2, 40, {"sendto": 0.30, "recvfrom": 0.30,
                                    "poll": 0.25, "connect": 0.15}),
        ), malicious=True),
        ProcessProfile("exfil-agent", (
            st("sweep", 4, 120, {"getdents64": 0.25, "openat": 0.25,
                                 "read": 0.30, "close": 0.20}),
            st("push", 3, 140, {"sendto": 0.45, "read": 0.30, "connect": 0.10,
                                "socket": 0.05, "close": 0.10}),
        ), malicious=True),
    ]
    # temporal twins: identical states, opposite cycle order, so their
    # stationary per-vector statistics coincide exactly; short dwell and
    # a high rate keep several crisp transitions inside every window
    def twin_state(name: str, specific: dict[str, float]) -> ProfileState:
        return ProfileState(name, 3, 200, _mix(table, specific, _COMMON, 0.2))

    alpha = twin_state("alpha", {"read": 0.50, "openat": 0.20, "close": 0.20,
                                 "fstat": 0.10})
    beta = twin_state("beta", {"write": 0.50, "sendto": 0.30, "connect": 0.10,
                               "socket": 0.10})
    gamma = twin_state("gamma", {"mmap": 0.35, "munmap": 0.25, "madvise": 0.20,
                                 "brk": 0.20})
    profiles.append(ProcessProfile(TWIN_NAMES[0], (alpha, beta, gamma)))
    profiles.append(ProcessProfile(TWIN_NAMES[1], (gamma, beta, alpha)))
    return profiles


def twin_profiles(table: SyscallTable) -> tuple[ProcessProfile, ProcessProfile]:
    """Just the designated twin pair, forward then reverse."""
    profiles = builtin_profiles(table)
    by_name = {p.name: p for p in profiles}
    return by_name[TWIN_NAMES[0]], by_name[TWIN_NAMES[1]]


def format_profiles(profiles: Iterable[ProcessProfile],
                    table: SyscallTable) -> str:
    """Serialize profiles to the text format parse_profiles reads."""
    lines = []
    for prof in profiles:
        head = f"profile {prof.name}"
        if prof.malicious:
            head += " malicious"
        lines.append(head)
        for stt in prof.states:
            pairs = ",".join(f"{table.name_of(i)}:{float(stt.mix[i])!r}"
                             for i in np.nonzero(stt.mix)[0])
            lines.append(f"state {stt.name} dwell {float(stt.dwell)!r} "
                         f"rate {float(stt.rate)!r} mix {pairs}")
        lines.append("end")
        lines.append("")
    return "\n".join(lines)


def parse_profiles(text: str, table: SyscallTable) -> list[ProcessProfile]:
    """Parse the profile text format.

    Grammar, one directive per line ('#' comments and blanks ignored):

        profile NAME [malicious]
        state NAME dwell FLOAT rate FLOAT mix name:weight,name:weight,...
        end

    Mix weights are normalized to sum 1 on load; names resolve through
    the syscall table and unknown names are an error.
    """
    profiles: list[ProcessProfile] = []
    cur_name: str | None = None
    cur_mal = False
    cur_states: list[ProfileState] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "profile":
            if cur_name is not None:
                raise ProfileError(f"line {lineno}: nested profile block")
            if len(parts) < 2 or len(parts) > 3:
                raise ProfileError(f"line {lineno}: expected "
                                   "'profile NAME [malicious]'")
            if len(parts) == 3 and parts[2] != "malicious":
                raise ProfileError(f"line {lineno}: unknown flag {parts[2]!r}")
            cur_name = parts[1]
            cur_mal = len(parts) == 3
            cur_states = []
        elif kind == "state":
            if cur_name is None:
                raise ProfileError(f"line {lineno}: state outside profile block")
            if len(parts) != 8 or parts[2] != "dwell" or parts[4] != "rate" \
                    or parts[6] != "mix":
                raise ProfileError(f"line {lineno}: expected 'state NAME dwell "
                                   "F rate F mix n:w,...'")
            try:
                dwell = float(parts[3])
                rate = float(parts[5])
            except ValueError as exc:
                raise ProfileError(f"line {lineno}: bad number: {exc}") from exc
            mix = np.zeros(table.size)
            for item in parts[7].split(","):
                if ":" not in item:
                    raise ProfileError(f"line {lineno}: bad mix entry {item!r}")
                name, _, wtext = item.partition(":")
                try:
                    weight = float(wtext)
                except ValueError as exc:
                    raise ProfileError(f"line {lineno}: bad mix weight "
                                       f"{wtext!r}") from exc
                try:
                    idx = table.index_of(name)
                except SyscallTableError as exc:
                    raise ProfileError(f"line {lineno}: unknown syscall "
                                       f"{name!r}") from exc
                mix[idx] += weight
            try:
                cur_states.append(ProfileState(parts[1], dwell, rate, mix))
            except ProfileError as exc:
                raise ProfileError(f"line {lineno}: {exc}") from exc
        elif kind == "end":
            if cur_name is None:
                raise ProfileError(f"line {lineno}: 'end' outside profile block")
            try:
                profiles.append(ProcessProfile(cur_name, tuple(cur_states),
                                               cur_mal))
            except ProfileError as exc:
                raise ProfileError(f"line {lineno}: {exc}") from exc
            cur_name = None
        else:
            raise ProfileError(f"line {lineno}: unknown directive {kind!r}")
    if cur_name is not None:
        raise ProfileError(f"unterminated profile block {cur_name!r}")
    if not profiles:
        raise ProfileError("no profiles in file")
    return profiles
