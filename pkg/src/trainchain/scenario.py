"""Scenario configuration: TOML schema, presets, validation.

See README for the full schema. Compute shares and the requester's stop
threshold are exact rationals written as strings ("1/4"); they must sum to
one across miners (attacker included).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .consensus import RoundConfig
from .errors import ParseError
from .netsim import DelayModel

# Block-interval presets, in simulated milliseconds.
PRESETS = {
    "bitcoin": {"phase1_ms": 600_000, "phase2_ms": 3_000},
    "litecoin": {"phase1_ms": 150_000, "phase2_ms": 3_000},
    "eth-like": {"phase1_ms": 12_000, "phase2_ms": 3_000},
}

STRATEGIES = ("honest", "thief", "overfitter", "inflator")


@dataclass(frozen=True)
class TaskConfig:
    seed: Optional[int] = None  # derived from the scenario seed when unset
    n_train: int = 256
    n_test: int = 512
    input_dim: int = 2
    classes: int = 4
    center_radius: float = 3.0
    noise: float = 1.0
    extra_test_sets: int = 2


@dataclass(frozen=True)
class TrainerConfig:
    hidden: tuple[int, ...] = (64, 64)
    learning_rate: float = 0.01
    checkpoints: int = 4  # held-out evaluations per round, final epoch included

    def layer_sizes(self, input_dim: int, classes: int) -> tuple[int, ...]:
        return (input_dim, *self.hidden, classes)


@dataclass(frozen=True)
class MinerConfig:
    name: str
    strategy: str
    share: Fraction
    overfit_epochs: int = 30
    inflate_by: Fraction = Fraction(1, 20)
    thief_commits: bool = True


@dataclass(frozen=True)
class RequesterConfig:
    stop_window: int = 3
    stop_epsilon: Fraction = Fraction(0)


@dataclass(frozen=True)
class AttackConfig:
    enabled: bool = False
    share: Fraction = Fraction(1, 10)
    fork_height: int = 0
    colluding_full_nodes: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 1
    rounds: int = 8
    name: str = "scenario"
    task: TaskConfig = field(default_factory=TaskConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    round: RoundConfig = field(default_factory=lambda: RoundConfig(600_000, 3_000))
    epoch_budget: int = 2400
    validate_ms: int = 2000
    commit_lead_ms: int = 1000
    reward: int = 50
    transfers_per_block: int = 2
    miners: tuple[MinerConfig, ...] = (MinerConfig("m1", "honest", Fraction(1)),)
    requester: RequesterConfig = field(default_factory=RequesterConfig)
    network: DelayModel = field(default_factory=DelayModel)
    attack: AttackConfig = field(default_factory=AttackConfig)

    def __post_init__(self) -> None:
        if self.rounds < 1:
            raise ParseError("rounds must be >= 1")
        if self.epoch_budget < 1:
            raise ParseError("epoch_budget must be >= 1")
        total = sum((m.share for m in self.miners), Fraction(0))
        if self.attack.enabled:
            total += self.attack.share
        if total != 1:
            raise ParseError(f"compute shares must sum to 1, got {total}")
        for m in self.miners:
            if m.strategy not in STRATEGIES:
                raise ParseError(f"unknown strategy {m.strategy!r} for miner {m.name}")
            if m.share <= 0:
                raise ParseError(f"miner {m.name} share must be positive")
        max_delay = self.network.max_delay()
        if max_delay >= self.commit_lead_ms:
            raise ParseError("network delay must be below commit_lead_ms or commits arrive late")
        # release -> test delivery -> validation -> reveal hop(s); a thief needs
        # one extra hop to observe a reveal and republish before the close
        if 3 * max_delay + self.validate_ms >= self.round.phase2_duration:
            raise ParseError("phase2 too short: submissions cannot arrive before the window closes")
        if self.round.phase1_duration <= self.round.phase2_duration + self.commit_lead_ms:
            raise ParseError("phase1 must exceed phase2 + commit_lead for pipelined rounds")

    def task_seed(self) -> int:
        return self.task.seed if self.task.seed is not None else self.seed * 1_000_003 + 17

    def miner_init_seed(self, index: int) -> int:
        return self.seed * 7_777_777 + 101 * (index + 1)

    def epochs_for(self, share: Fraction) -> int:
        """Round-half-up share of the per-round epoch budget."""
        return int(Fraction(self.epoch_budget) * share + Fraction(1, 2))


def _fraction(value, where: str) -> Fraction:
    try:
        if isinstance(value, str):
            return Fraction(value)
        if isinstance(value, int):
            return Fraction(value)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"{where}: bad rational {value!r}: {exc}") from None
    raise ParseError(f"{where}: rationals must be strings like '1/4', got {value!r}")


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ParseError(f"{where}: unknown keys {sorted(unknown)}")


def load_scenario(
    path: Optional[Path] = None,
    *,
    preset: Optional[str] = None,
    seed_override: Optional[int] = None,
) -> ScenarioConfig:
    """Parse a TOML scenario file; flags override file values."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ParseError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    return scenario_from_dict(raw, preset=preset, seed_override=seed_override)


def scenario_from_dict(
    raw: dict,
    *,
    preset: Optional[str] = None,
    seed_override: Optional[int] = None,
) -> ScenarioConfig:
    _require_keys(
        raw,
        {"scenario", "task", "trainer", "round", "requester", "network", "miners", "attack", "bench"},
        "config",
    )
    sc = dict(raw.get("scenario", {}))
    _require_keys(sc, {"seed", "rounds", "name"}, "[scenario]")

    round_raw = dict(raw.get("round", {}))
    _require_keys(
        round_raw,
        {
            "phase1_ms",
            "phase2_ms",
            "pipeline",
            "epoch_budget",
            "max_model_bytes",
            "claim_in_header",
            "commit_cap",
            "validate_ms",
            "commit_lead_ms",
            "reward",
            "transfers_per_block",
        },
        "[round]",
    )
    if preset is not None:
        if preset not in PRESETS:
            raise ParseError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        round_raw.update(PRESETS[preset])

    try:
        round_cfg = RoundConfig(
            phase1_duration=int(round_raw.get("phase1_ms", 600_000)),
            phase2_duration=int(round_raw.get("phase2_ms", 3_000)),
            max_model_bytes=int(round_raw.get("max_model_bytes", 10 * 1024 * 1024)),
            pipeline_phases=bool(round_raw.get("pipeline", True)),
            claim_in_header=bool(round_raw.get("claim_in_header", False)),
            commit_cap=int(round_raw.get("commit_cap", 1)),
        )
    except ValueError as exc:
        raise ParseError(f"[round]: {exc}") from None

    task_raw = dict(raw.get("task", {}))
    _require_keys(
        task_raw,
        {"seed", "n_train", "n_test", "input_dim", "classes", "center_radius", "noise", "extra_test_sets"},
        "[task]",
    )
    task = TaskConfig(
        seed=task_raw.get("seed"),
        n_train=int(task_raw.get("n_train", 256)),
        n_test=int(task_raw.get("n_test", 512)),
        input_dim=int(task_raw.get("input_dim", 2)),
        classes=int(task_raw.get("classes", 4)),
        center_radius=float(task_raw.get("center_radius", 3.0)),
        noise=float(task_raw.get("noise", 1.0)),
        extra_test_sets=int(task_raw.get("extra_test_sets", 2)),
    )

    trainer_raw = dict(raw.get("trainer", {}))
    _require_keys(trainer_raw, {"hidden", "learning_rate", "checkpoints"}, "[trainer]")
    trainer = TrainerConfig(
        hidden=tuple(int(h) for h in trainer_raw.get("hidden", (64, 64))),
        learning_rate=float(trainer_raw.get("learning_rate", 0.01)),
        checkpoints=int(trainer_raw.get("checkpoints", 4)),
    )

    req_raw = dict(raw.get("requester", {}))
    _require_keys(req_raw, {"stop_window", "stop_epsilon"}, "[requester]")
    requester = RequesterConfig(
        stop_window=int(req_raw.get("stop_window", 3)),
        stop_epsilon=_fraction(req_raw.get("stop_epsilon", "0"), "[requester].stop_epsilon"),
    )

    net_raw = dict(raw.get("network", {}))
    _require_keys(net_raw, {"delay", "delay_ms", "delay_lo", "delay_hi"}, "[network]")
    seed_val = int(sc.get("seed", 1)) if seed_override is None else seed_override
    try:
        network = DelayModel(
            kind=str(net_raw.get("delay", "constant")),
            delay_ms=int(net_raw.get("delay_ms", 5)),
            lo=int(net_raw.get("delay_lo", 1)),
            hi=int(net_raw.get("delay_hi", 50)),
            stream_seed=seed_val,
        )
    except ValueError as exc:
        raise ParseError(f"[network]: {exc}") from None

    miners_raw = raw.get("miners", {})
    miners: list[MinerConfig] = []
    if isinstance(miners_raw, dict):
        for name, mr in miners_raw.items():
            _require_keys(
                dict(mr),
                {"strategy", "share", "overfit_epochs", "inflate_by", "thief_commits"},
                f"[miners.{name}]",
            )
            miners.append(
                MinerConfig(
                    name=str(name),
                    strategy=str(mr.get("strategy", "honest")),
                    share=_fraction(mr.get("share", "1"), f"[miners.{name}].share"),
                    overfit_epochs=int(mr.get("overfit_epochs", 30)),
                    inflate_by=_fraction(mr.get("inflate_by", "1/20"), f"[miners.{name}].inflate_by"),
                    thief_commits=bool(mr.get("thief_commits", True)),
                )
            )
    if not miners:
        miners = [MinerConfig("m1", "honest", Fraction(1))]

    attack_raw = dict(raw.get("attack", {}))
    _require_keys(attack_raw, {"enabled", "share", "fork_height", "colluding_full_nodes"}, "[attack]")
    attack = AttackConfig(
        enabled=bool(attack_raw.get("enabled", False)),
        share=_fraction(attack_raw.get("share", "1/10"), "[attack].share"),
        fork_height=int(attack_raw.get("fork_height", 0)),
        colluding_full_nodes=bool(attack_raw.get("colluding_full_nodes", True)),
    )

    return ScenarioConfig(
        seed=seed_val,
        rounds=int(sc.get("rounds", 8)),
        name=str(sc.get("name", "scenario")),
        task=task,
        trainer=trainer,
        round=round_cfg,
        epoch_budget=int(round_raw.get("epoch_budget", 2400)),
        validate_ms=int(round_raw.get("validate_ms", 2000)),
        commit_lead_ms=int(round_raw.get("commit_lead_ms", 1000)),
        reward=int(round_raw.get("reward", 50)),
        transfers_per_block=int(round_raw.get("transfers_per_block", 2)),
        miners=tuple(miners),
        requester=requester,
        network=network,
        attack=attack,
    )
