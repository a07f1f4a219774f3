"""Deterministic synthetic event streams with planted structure.

A hidden regime sequence drives the stream. In unit u, the regime
decides on which of the unit's two days each tactic is used, and the
targets hit in unit u+1 are the regime's target set. Tactics are handed to
events round-robin, so per-unit tactic *counts* do not depend on the regime.
Only the same-day co-occurrence pattern does. Forecasting the next unit's
targets therefore needs graph structure; raw counts carry no signal.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .ingest import EventRecord


@dataclass(frozen=True)
class Regime:
    day1_tactics: tuple[str, ...]
    day2_tactics: tuple[str, ...]
    targets: tuple[str, ...]  # at most 3, listed on every event of the following unit

    @property
    def tactic_schedule(self) -> list[tuple[str, int]]:
        return [(t, 0) for t in self.day1_tactics] + [(t, 1) for t in self.day2_tactics]


@dataclass(frozen=True)
class SynthSpec:
    regimes: tuple[Regime, ...]
    weapons: tuple[str, ...] = ("Explosives", "Firearms", "Incendiary")
    n_units: int = 600
    n_events: int = 5000
    start: dt.date = dt.date(2001, 1, 1)
    switch_prob: float = 0.5  # chance the regime changes between consecutive units
    quiet_prob: float = 0.0  # chance a unit has no events at all
    country: str = "Synthetia"

    @property
    def end(self) -> dt.date:
        return self.start + dt.timedelta(days=2 * self.n_units - 1)

    @property
    def events_per_day(self) -> float:
        return self.n_events / (2 * self.n_units) if self.n_units else 0.0


@dataclass
class Synthesis:
    events: list[EventRecord]
    # regimes[0] is the regime before the first unit; regimes[u + 1] is unit u's regime
    regimes: np.ndarray
    quiet: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))


def planted_rule_spec(n_units: int = 600, n_events: int = 5000, switch_prob: float = 0.5,
                      quiet_prob: float = 0.0) -> SynthSpec:
    """Two regimes with disjoint target pairs, told apart only by co-occurrence."""
    a, b, c, d = ("Bombing/Explosion", "Armed Assault", "Assassination",
                  "Hostage Taking (Kidnapping)")
    return SynthSpec(
        regimes=(
            Regime((a, b, c), (d,), ("Police", "Military")),
            Regime((a,), (b, c, d), ("Business", "Private Citizens & Property")),
        ),
        n_units=n_units, n_events=n_events, switch_prob=switch_prob, quiet_prob=quiet_prob,
    )


def single_event_spec(n_units: int = 20) -> SynthSpec:
    """Every unit: one (Bombing, Explosives, Police) event."""
    return SynthSpec(regimes=(Regime(("Bombing/Explosion",), (), ("Police",)),),
                     weapons=("Explosives",), n_units=n_units, n_events=n_units, switch_prob=0.0)


def _regime_path(rng, spec: SynthSpec) -> np.ndarray:
    k = len(spec.regimes)
    path = np.zeros(spec.n_units + 1, dtype=np.int64)
    path[0] = rng.integers(k)
    for i in range(1, len(path)):
        if k > 1 and rng.random() < spec.switch_prob:
            # move to one of the other regimes
            path[i] = (path[i - 1] + 1 + rng.integers(k - 1)) % k
        else:
            path[i] = path[i - 1]
    return path


def synthesize(spec: SynthSpec, seed: int = 0) -> Synthesis:
    rng = np.random.default_rng(seed)
    regimes = _regime_path(rng, spec)
    quiet = rng.random(spec.n_units) < spec.quiet_prob
    events = []
    for u in range(spec.n_units):
        # spread n_events evenly: unit u gets floor((u+1)N/U) - floor(uN/U)
        count = (u + 1) * spec.n_events // spec.n_units - u * spec.n_events // spec.n_units
        if quiet[u] or count == 0:
            continue
        regime = spec.regimes[regimes[u + 1]]
        targets = spec.regimes[regimes[u]].targets
        schedule = regime.tactic_schedule
        weapons = rng.integers(len(spec.weapons), size=count)
        day0 = spec.start + dt.timedelta(days=2 * u)
        for k in range(count):
            tactic, day = schedule[k % len(schedule)]
            events.append(EventRecord(
                event_id=f"SYN{u:06d}{k:04d}",
                date=day0 + dt.timedelta(days=day),
                country=spec.country,
                tactics=(tactic,),
                weapons=(spec.weapons[weapons[k]],),
                targets=targets,
            ))
    events.sort(key=lambda e: (e.date, e.event_id))
    return Synthesis(events, regimes, quiet)


def generate_synthetic_events(spec: SynthSpec, seed: int = 0) -> list[EventRecord]:
    return synthesize(spec, seed).events
