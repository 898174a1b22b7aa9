"""Loading, validating and materializing JSON scenario files."""

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .model import DiscreteChannel, DiscreteModel, GaussianLinearChannel, GaussianMixture, GroupCollection, validate
from .posterior import AnnealSchedule, ExactPosterior, FixedStochastic, MapBaseline


class ScenarioError(ValueError):
    """Unreadable, schema-invalid or internally inconsistent scenario."""


def schema():
    return json.loads(resources.files("fairrecon").joinpath("scenarios/scenario.schema.json").read_text())


def bundled(name):
    """Path of a scenario shipped with the package, by file name or stem."""
    stem = name[:-5] if name.endswith(".json") else name
    p = resources.files("fairrecon").joinpath(f"scenarios/{stem}.json")
    return Path(str(p)) if p.is_file() else None


def bundled_names():
    root = resources.files("fairrecon").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json") and p.name != "scenario.schema.json")


def _field(path):
    return "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path) or "<root>"


def load(path):
    """Parse and schema-check a scenario; unknown paths fall back to bundled names."""
    p = Path(path)
    if not p.exists():
        alt = bundled(str(path))
        if alt is None:
            raise ScenarioError(f"{path}: no such file or bundled scenario")
        p = alt
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{p}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{p}: field {_field(e.absolute_path)}: {e.message}" for e in errors]
        raise ScenarioError("\n".join(lines))
    return Scenario(data, p)


@dataclass
class Scenario:
    data: dict
    path: Path

    def _need(self, *keys):
        missing = [k for k in keys if k not in self.data]
        if missing:
            raise ScenarioError(f"{self.path}: this command needs field(s) {', '.join(missing)}")

    def _build(self, key, fn):
        try:
            return fn()
        except (ValueError, KeyError, TypeError) as e:
            raise ScenarioError(f"{self.path}: field .{key}: {e}") from None

    def get(self, key, default=None):
        return self.data.get(key, default)

    def _prior(self, key):
        self._need(key)
        m = self._build(key, lambda: DiscreteModel(self.data[key], self.data.get("states")))
        problems = validate(m)
        if problems:
            raise ScenarioError(f"{self.path}: field .{key}: {'; '.join(problems)}")
        return m

    @property
    def model(self):
        return self._prior("prior")

    @property
    def truth_prior(self):
        return self._prior("truth_prior" if "truth_prior" in self.data else "prior")

    @property
    def groups(self):
        self._need("groups")
        overlapping = self.data.get("overlapping", False)
        g = GroupCollection.from_dict(self.data["groups"], is_partition=not overlapping)
        if "prior" in self.data:
            problems = [q for q in validate(self.model, g) if not q.startswith("prior")]
            if problems:
                raise ScenarioError(f"{self.path}: field .groups: {'; '.join(problems)}")
        return g

    def partitions(self):
        self._need("partitions")
        parts = self.data["partitions"]
        return tuple(GroupCollection.from_dict(parts[k]) for k in ("coarse", "fine"))

    @property
    def channel(self):
        self._need("channel")
        spec = self.data["channel"]
        if spec["type"] == "discrete":
            ch = self._build("channel", lambda: DiscreteChannel(spec["kernel"], spec.get("symbols")))
            if "prior" in self.data and ch.n_inputs != len(self.data["prior"]):
                raise ScenarioError(
                    f"{self.path}: field .channel.kernel: {ch.n_inputs} rows for {len(self.data['prior'])} states"
                )
            return ch
        return self._build(
            "channel",
            lambda: GaussianLinearChannel(spec["A"], spec["sigma"], spec.get("noise_variance_rule", "sigma2")),
        )

    def kernel(self, model, channel):
        spec = self.data.get("kernel", {"type": "exact"})
        kind = spec["type"]
        if kind == "exact":
            return ExactPosterior(model)
        if kind == "map":
            return MapBaseline(model)
        if kind == "uniform":
            return FixedStochastic.uniform(channel.n_symbols, model.n_states)
        return self._build("kernel.matrix", lambda: FixedStochastic(np.asarray(spec["matrix"], dtype=float)))

    @property
    def mixture(self):
        self._need("mixture")
        m = self.data["mixture"]
        return self._build("mixture", lambda: GaussianMixture(m["weights"], m["means"], m["variances"]))

    @property
    def schedule(self):
        self._need("schedule")
        s = {k: v for k, v in self.data["schedule"].items() if k != "likelihood_variance"}
        return self._build("schedule", lambda: AnnealSchedule(**s))

