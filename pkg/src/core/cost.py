"""Adversary cost model and malicious-ratio accounting."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Any

import pandas as pd

from .config import AdversaryModel, CostParams, CostScenario, CostScenarioFile
from .types import AdversaryKind, CostModelKind


def cost_for_counts(n_compromised: int, n_fake: int, p: CostParams) -> float:
    """Cost of fielding n_compromised real and n_fake injected clients.

    Botnet model: buying one device carrying the target app takes
    k = 1/app_prevalence devices, while a fake client needs one device.
    Unit model: n_fake·f + n_compromised·c.
    """
    if n_compromised < 0 or n_fake < 0:
        raise ValueError("client counts must be non-negative")
    if p.model == CostModelKind.UNIT:
        return n_fake * p.fake_unit_cost + n_compromised * p.compromised_unit_cost

    k = 1.0 / p.app_prevalence
    m = n_fake + n_compromised
    if n_compromised == 0:
        return m * p.device_price
    if n_fake == 0:
        return k * n_compromised * p.device_price
    return max(k * n_compromised, m) * p.device_price


def attack_cost(adv: AdversaryModel, p: CostParams) -> float:
    return cost_for_counts(adv.n_compromised, adv.n_fake, p)


def malicious_ratio(adv: AdversaryModel) -> float:
    """(fake + compromised) / whole population."""
    total = adv.n_benign + adv.n_compromised + adv.n_fake
    if total == 0:
        raise ValueError("empty client population")
    return adv.n_malicious / total


def solve_fake_count(n_benign_total: int, n_compromised: int, target_ratio: float) -> int:
    """Smallest fake count reaching target_ratio.

    Args:
        n_benign_total: Real clients, compromised ones included
        n_compromised: Compromised real clients
        target_ratio: Desired malicious ratio in [0, 1)

    Returns:
        Number of fake clients to inject
    """
    if not 0.0 <= target_ratio < 1.0:
        raise ValueError(f"target ratio must be in [0, 1), got {target_ratio}")
    if not 0 <= n_compromised <= n_benign_total:
        raise ValueError("n_compromised must lie in [0, n_benign_total]")
    # exact rational arithmetic: 0.1 must mean 1/10, not its binary neighbour
    r = Fraction(target_ratio).limit_denominator(1_000_000)
    benign = n_benign_total - n_compromised
    needed = math.ceil(r * benign / (1 - r))
    return max(0, needed - n_compromised)


def adversary_cost_row(name: str, adv: AdversaryModel, p: CostParams) -> dict[str, Any]:
    """One cost-table row."""
    # cost scenarios carry no attack, so classify on the counts alone
    if adv.n_malicious == 0:
        kind = AdversaryKind.NONE
    elif adv.n_compromised == 0:
        kind = AdversaryKind.FAKE
    elif adv.n_fake == 0:
        kind = AdversaryKind.COMPROMISED
    else:
        kind = AdversaryKind.HYBRID
    total = adv.n_benign + adv.n_malicious
    return {
        "scenario": name,
        "kind": kind.value,
        "m_prime": adv.n_compromised,
        "n_fake": adv.n_fake,
        "m": adv.n_malicious,
        "malicious_ratio": malicious_ratio(adv) if total > 0 else float("nan"),
        "cost": attack_cost(adv, p),
    }


def resolve_scenario(scenario: CostScenario) -> AdversaryModel:
    """Turn a scenario into counts, solving for the fake count when a ratio is given."""
    n_benign = 0 if scenario.n_total is None else scenario.n_total - scenario.n_compromised
    if n_benign < 0:
        raise ValueError(f"scenario {scenario.name}: n_compromised exceeds n_total")
    n_fake = scenario.n_fake
    if n_fake is None:
        assert scenario.n_total is not None and scenario.target_ratio is not None
        n_fake = solve_fake_count(scenario.n_total, scenario.n_compromised, scenario.target_ratio)
    return AdversaryModel(n_benign=n_benign, n_compromised=scenario.n_compromised, n_fake=n_fake)


def cost_table(doc: CostScenarioFile) -> pd.DataFrame:
    """Cost table over every scenario in the document."""
    rows = [adversary_cost_row(s.name, resolve_scenario(s), doc.params) for s in doc.scenarios]
    return pd.DataFrame(rows, columns=["scenario", "kind", "m_prime", "n_fake", "m", "malicious_ratio", "cost"])
