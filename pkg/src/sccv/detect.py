"""Verdicts and alerting on top of window classifications.

The decision table runs in order and the first matching row wins:

    1. confidence < tau_low                          -> NOVELTY
    2. confidence >= tau_high and predicted class is
       in the malicious set                          -> NON_GRATA
    3. confidence >= tau_high and predicted class
       differs from the declared process name        -> MASQUERADE
    4. otherwise                                     -> NORMAL

Confidences in the middle band [tau_low, tau_high) are deliberately
Normal: the classifier is neither lost nor sure enough to accuse.

Alerts are debounced per identity: a run of n consecutive identical
non-Normal verdicts (same kind, same predicted class) emits exactly one
alert, at the nth verdict, carrying both the run's first interval and
the triggering one.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .ml.model import Prediction


class VerdictKind(enum.Enum):
    NORMAL = "normal"
    NOVELTY = "novelty"
    NON_GRATA = "non-grata"
    MASQUERADE = "masquerade"


@dataclass(frozen=True)
class Thresholds:
    """Confidence cut points; 0 <= tau_low <= tau_high <= 1."""

    tau_low: float = 0.5
    tau_high: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau_low <= self.tau_high <= 1.0:
            raise ValueError("need 0 <= tau_low <= tau_high <= 1, got "
                             f"{self.tau_low}/{self.tau_high}")


@dataclass(frozen=True)
class Verdict:
    """Outcome of classifying one window of one identity."""

    kind: VerdictKind
    host_id: str
    pid: int
    declared_name: str
    predicted_name: str
    confidence: float
    interval_start: int  # ns, start of the window's last interval
    interval_len: int  # ns


@dataclass(frozen=True)
class Alert:
    """A debounced, reportable detection."""

    kind: VerdictKind
    host_id: str
    pid: int
    declared_name: str
    predicted_name: str
    confidence: float
    first_interval_start: int  # ns, where the run began
    interval_start: int  # ns, the nth (triggering) verdict
    interval_len: int
    run_length: int


def classify_window(prediction: Prediction, class_names: Sequence[str],
                    declared_name: str, thresholds: Thresholds,
                    malicious: Iterable[str] = (), *, host_id: str = "",
                    pid: int = 0, interval_start: int = 0,
                    interval_len: int = 0) -> Verdict:
    """Apply the decision table to one prediction."""
    if len(class_names) != prediction.probs.shape[0]:
        raise ValueError("class_names length does not match prediction width")
    predicted = class_names[prediction.argmax]
    conf = float(prediction.confidence)
    malicious_set = set(malicious)
    if conf < thresholds.tau_low:
        kind = VerdictKind.NOVELTY
    elif conf >= thresholds.tau_high and predicted in malicious_set:
        kind = VerdictKind.NON_GRATA
    elif conf >= thresholds.tau_high and predicted != declared_name:
        kind = VerdictKind.MASQUERADE
    else:
        kind = VerdictKind.NORMAL
    return Verdict(kind=kind, host_id=host_id, pid=pid,
                   declared_name=declared_name, predicted_name=predicted,
                   confidence=conf, interval_start=interval_start,
                   interval_len=interval_len)


class AlertDebouncer:
    """Per-identity run tracking with one alert per qualifying run.

    A run is a maximal streak of consecutive verdicts for one identity
    with the same non-Normal kind and predicted class.  The alert fires
    exactly when the streak reaches length n; longer streaks stay silent
    until broken.  Normal verdicts reset the streak.
    """

    def __init__(self, n: int = 3):
        if n < 1:
            raise ValueError("debounce length must be >= 1")
        self.n = n
        # identity -> (kind, predicted, run_length, first_interval_start)
        self._runs: dict[tuple[str, int], tuple[VerdictKind, str, int, int]] = {}

    def feed(self, verdict: Verdict) -> Alert | None:
        ident = (verdict.host_id, verdict.pid)
        if verdict.kind is VerdictKind.NORMAL:
            self._runs.pop(ident, None)
            return None
        run = self._runs.get(ident)
        if run is not None and run[0] is verdict.kind \
                and run[1] == verdict.predicted_name:
            kind, predicted, length, first = run
            length += 1
        else:
            length, first = 1, verdict.interval_start
        self._runs[ident] = (verdict.kind, verdict.predicted_name, length, first)
        if length != self.n:
            return None
        return Alert(kind=verdict.kind, host_id=verdict.host_id,
                     pid=verdict.pid, declared_name=verdict.declared_name,
                     predicted_name=verdict.predicted_name,
                     confidence=verdict.confidence,
                     first_interval_start=first,
                     interval_start=verdict.interval_start,
                     interval_len=verdict.interval_len, run_length=length)

    def reset(self) -> None:
        self._runs.clear()


def alert_stream(verdicts: Iterable[Verdict], n: int = 3) -> Iterator[Alert]:
    """Debounce a verdict iterable into alerts."""
    deb = AlertDebouncer(n)
    for verdict in verdicts:
        alert = deb.feed(verdict)
        if alert is not None:
            yield alert


def format_alert_line(alert: Alert) -> str:
    """One tab-separated alert line.

    Fields: interval_start_ns, host, pid, kind, predicted, declared,
    confidence (6 decimals).
    """
    return "\t".join([str(alert.interval_start), alert.host_id, str(alert.pid),
                      alert.kind.value, alert.predicted_name,
                      alert.declared_name, f"{alert.confidence:.6f}"])
