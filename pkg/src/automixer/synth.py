"""Synthetic BizITObs generator with a known event -> KPI causal structure.

KPI channels follow seasonal + trend + autoregressive noise processes.
Event channels are sparse point processes (counts); each *causal* event
perturbs a configured subset of KPIs through a lagged impulse response,
while *noise* events are independent of everything. The generator returns
the full causal graph (event, kpi, lag, magnitude) so experiments can
check what a model should and should not pick up.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BizITObsFrame, Channel, ChannelSchema
from .errors import ConfigurationError


@dataclass
class SynthSpec:
    n_kpi: int = 4
    n_causal_events: int = 3
    n_noise_events: int = 20
    length: int = 2000
    event_rate: float = 0.02          # occurrence probability per step
    lag_range: tuple = (1, 6)
    impulse_magnitude: float = 2.0
    impulse_decay: float = 0.6
    noise_level: float = 0.3          # std of the AR noise driving KPIs
    ar_coeff: float = 0.7
    season_period: int = 24
    trend_slope: float = 0.0005
    latent_rank: int = 0              # >0: KPIs mix this many latent factors
    kpis_per_event: int = 2

    @property
    def n_channels(self):
        return self.n_kpi + self.n_causal_events + self.n_noise_events


@dataclass
class CausalLink:
    event: str
    kpi: str
    lag: int
    magnitude: float


@dataclass
class GroundTruth:
    links: list = field(default_factory=list)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("event,kpi,lag,magnitude\n")
            for link in self.links:
                fh.write(f"{link.event},{link.kpi},{link.lag},{link.magnitude!r}\n")


def _kpi_base(spec, rng, n_kpi):
    """Seasonal + trend + AR(1) noise base signals, one column per KPI."""
    t = np.arange(spec.length)
    phases = rng.uniform(0, 2 * np.pi, n_kpi)
    amps = rng.uniform(0.5, 1.5, n_kpi)
    base = amps * np.sin(2 * np.pi * t[:, None] / spec.season_period + phases)
    base += spec.trend_slope * t[:, None] * rng.uniform(-1, 1, n_kpi)
    noise = np.zeros((spec.length, n_kpi))
    eps = rng.normal(0, spec.noise_level, (spec.length, n_kpi))
    for i in range(1, spec.length):
        noise[i] = spec.ar_coeff * noise[i - 1] + eps[i]
    return base + noise


def synth_lowrank(channels, rank, length, seed, noise=0.05, season_period=24):
    """Rank-deficient series x = tanh(factors @ mix) + noise, for capacity studies."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    phases = rng.uniform(0, 2 * np.pi, rank)
    periods = season_period * rng.uniform(0.5, 2.0, rank)
    factors = np.sin(2 * np.pi * t[:, None] / periods + phases)
    ar = np.zeros((length, rank))
    eps = rng.normal(0, 0.3, (length, rank))
    for i in range(1, length):
        ar[i] = 0.7 * ar[i - 1] + eps[i]
    factors = factors + ar
    mix = rng.uniform(-1.5, 1.5, (rank, channels))
    values = np.tanh(factors @ mix) + rng.normal(0, noise, (length, channels))
    schema = ChannelSchema([Channel(f"kpi_{i}", "biz-kpi") for i in range(channels)])
    frame = BizITObsFrame(np.arange(length, dtype=np.float64), values, schema)
    return frame, schema


def synth_generate(spec, seed):
    """Generate (frame, schema, ground_truth); identical (spec, seed) -> identical bytes."""
    if spec.n_kpi < 1 or spec.n_causal_events < 0 or spec.n_noise_events < 0:
        raise ConfigurationError("channel counts must be positive")
    if spec.n_causal_events + spec.n_noise_events < 1:
        raise ConfigurationError("need at least one event channel")
    rng = np.random.default_rng(seed)

    kpi_names = [f"kpi_{i}" for i in range(spec.n_kpi)]
    causal_names = [f"event_causal_{i}" for i in range(spec.n_causal_events)]
    noise_names = [f"event_noise_{i}" for i in range(spec.n_noise_events)]

    if spec.latent_rank > 0:
        # low-rank structure: KPIs are mixtures of a few latent factors
        factors = _kpi_base(spec, rng, spec.latent_rank)
        mix = rng.uniform(-1, 1, (spec.latent_rank, spec.n_kpi))
        kpis = np.tanh(factors @ mix)
        kpis += rng.normal(0, spec.noise_level * 0.2, kpis.shape)
    else:
        kpis = _kpi_base(spec, rng, spec.n_kpi)

    n_events = spec.n_causal_events + spec.n_noise_events
    events = (rng.random((spec.length, n_events)) < spec.event_rate).astype(np.float64)
    events *= rng.integers(1, 4, (spec.length, n_events))  # counts 1..3 when present

    truth = GroundTruth()
    for e in range(spec.n_causal_events):
        targets = rng.choice(spec.n_kpi, size=min(spec.kpis_per_event, spec.n_kpi),
                             replace=False)
        lag = int(rng.integers(spec.lag_range[0], spec.lag_range[1] + 1))
        for k in targets:
            magnitude = spec.impulse_magnitude * float(rng.uniform(0.5, 1.5))
            sign = -1.0 if rng.random() < 0.5 else 1.0
            magnitude *= sign
            truth.links.append(CausalLink(causal_names[e], kpi_names[int(k)],
                                          lag, magnitude))
            # decaying impulse response starting `lag` steps after each event
            occurrences = np.where(events[:, e] > 0)[0]
            for t0 in occurrences:
                step = 0
                while True:
                    t = t0 + lag + step
                    pulse = magnitude * (spec.impulse_decay ** step)
                    if t >= spec.length or abs(pulse) < 1e-3:
                        break
                    kpis[t, int(k)] += pulse * events[t0, e]
                    step += 1

    values = np.concatenate([kpis, events], axis=1)
    channels = ([Channel(n, "biz-kpi") for n in kpi_names]
                + [Channel(n, "it-event") for n in causal_names + noise_names])
    schema = ChannelSchema(channels)
    frame = BizITObsFrame(np.arange(spec.length, dtype=np.float64), values, schema)
    return frame, schema, truth
