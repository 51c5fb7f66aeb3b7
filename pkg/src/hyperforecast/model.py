"""Model configuration, parameter store and the end-to-end forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import ahl, interaction, mfe, nhc
from . import tensor as tn
from .mfe import ConfigError, ScaleConfig
from .tensor import Tensor

ABLATION_FLAGS = ("graph_mode", "one_matrix", "predefined", "no_node_constraint",
                  "no_hyper_constraint")


@dataclass(frozen=True)
class ModelConfig:
    input_length: int = 96
    horizon: int = 24
    windows: tuple[int, ...] = (4, 2)
    hidden_width: int = 16
    hyperedges: tuple[int, ...] = (20, 10, 4)
    eta: int = 5
    beta: float = 0.3
    gamma: float = 0.3
    lam: float = 0.5
    heads: int = 1
    aggregation: str = "conv"
    straight_through: bool = True
    graph_mode: bool = False
    one_matrix: bool = False
    predefined: bool = False
    no_node_constraint: bool = False
    no_hyper_constraint: bool = False
    n_variates: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(int(w) for w in self.windows))
        object.__setattr__(self, "hyperedges", tuple(int(m) for m in self.hyperedges))
        self.scales  # validates windows against input_length
        if len(self.hyperedges) != self.n_scales:
            raise ConfigError(f"hyperedges lists {len(self.hyperedges)} counts for {self.n_scales} scales")
        if any(m < 1 for m in self.hyperedges):
            raise ConfigError("every scale needs at least one hyperedge")
        if self.eta < 1:
            raise ConfigError("eta must be >= 1")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError("beta must lie in (0, 1)")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        if self.heads < 1:
            raise ConfigError("heads must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.aggregation not in ("conv", "avg"):
            raise ConfigError(f"aggregation must be 'conv' or 'avg', got {self.aggregation!r}")
        if sum((self.graph_mode, self.one_matrix, self.predefined)) > 1:
            raise ConfigError("graph_mode, one_matrix and predefined are mutually exclusive")

    @property
    def scales(self) -> ScaleConfig:
        return ScaleConfig(self.input_length, self.windows, self.hidden_width)

    @property
    def n_scales(self) -> int:
        return len(self.windows) + 1

    @property
    def node_counts(self) -> tuple[int, ...]:
        return mfe.node_counts(self.input_length, self.windows)

    def group_sizes(self) -> list[tuple[int, int]]:
        """(nodes, hyperedge slots) per hypergraph; one per scale unless ``one_matrix``."""
        counts = self.node_counts
        if self.one_matrix:
            return [(sum(counts), sum(self.hyperedges))]
        if self.predefined:
            return [(n, -(-n // ahl.PREDEFINED_GROUP)) for n in counts]
        if self.graph_mode:
            return [(n, n * min(self.eta, n - 1)) for n in counts]
        return list(zip(counts, self.hyperedges))

    def head_features(self) -> int:
        return (sum(self.node_counts) + sum(m for _, m in self.group_sizes())) * self.hidden_width

    def to_dict(self) -> dict:
        d = asdict(self)
        d["windows"] = list(self.windows)
        d["hyperedges"] = list(self.hyperedges)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**data)

    def with_ablation(self, *flags: str) -> "ModelConfig":
        bad = [f for f in flags if f not in ABLATION_FLAGS]
        if bad:
            raise ConfigError(f"unknown ablation {bad}; choose from {ABLATION_FLAGS}")
        return replace(self, **{f: True for f in flags})


@dataclass
class ForwardOutput:
    prediction: Tensor
    constraint: nhc.ConstraintLossTerms
    structures: list[ahl.IncidenceMatrix]
    enriched: list[list[Tensor]] = field(default_factory=list)


class HypergraphForecaster:
    """Channel-independent multi-scale hypergraph forecaster.

    Parameters live in ``self.params`` under flat dotted names; every
    tensor there is a leaf with ``requires_grad``.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._frozen: list[ahl.FrozenDecisions] | None = None
        self._init_params(np.random.default_rng(config.seed))

    # parameters

    def _uniform(self, rng, name, shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        self.params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)

    def _table(self, rng, name, shape):
        self.params[name] = Tensor(rng.standard_normal(shape), requires_grad=True, name=name)

    def _zeros(self, name, shape):
        self.params[name] = Tensor(np.zeros(shape), requires_grad=True, name=name)

    def _init_params(self, rng):
        cfg = self.config
        d = cfg.hidden_width
        self._uniform(rng, "embed.weight", (1, d), 1)
        self._zeros("embed.bias", (d,))
        if cfg.aggregation == "conv":
            for s, w in enumerate(cfg.windows, start=1):
                self._uniform(rng, f"mfe.kernel.{s}", (w, d, d), w * d)
        self._uniform(rng, "node_map.w1", (d, d), d)
        self._zeros("node_map.b1", (d,))
        self._uniform(rng, "node_map.w2", (d, d), d)
        self._zeros("node_map.b2", (d,))
        for g, (n, m) in enumerate(self.config.group_sizes()):
            if cfg.graph_mode:
                self._table(rng, f"ahl.src.{g}", (n, d))
                self._table(rng, f"ahl.dst.{g}", (n, d))
            elif not cfg.predefined:
                self._table(rng, f"ahl.node.{g}", (n, d))
                self._table(rng, f"ahl.hyper.{g}", (m, d))
            for j in range(cfg.heads):
                self._uniform(rng, f"intra.{g}.{j}.proj", (d, d), d)
                self._uniform(rng, f"intra.{g}.{j}.w_node", (d, 1), 2 * d)
                self._uniform(rng, f"intra.{g}.{j}.w_edge", (d, 1), 2 * d)
                self._zeros(f"intra.{g}.{j}.bias", (1,))
        for name in ("q", "k", "v"):
            self._uniform(rng, f"inter.{name}", (d, d), d)
        feats = cfg.head_features()
        self._uniform(rng, "head.weight", (feats, cfg.horizon), feats)
        self._zeros("head.bias", (cfg.horizon,))

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch; missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    # structure

    def freeze_structure(self) -> None:
        """Pin the current TopK/threshold decisions for subsequent passes."""
        self._frozen = None
        _, decisions = self._learn_structures()
        self._frozen = decisions

    def unfreeze_structure(self) -> None:
        self._frozen = None

    def _learn_structures(self):
        cfg = self.config
        structures, decisions = [], []
        for g, (n, _) in enumerate(cfg.group_sizes()):
            frozen = None if self._frozen is None else self._frozen[g]
            if cfg.predefined:
                inc, dec = ahl.predefined_incidence(n, scale=g), None
            elif cfg.graph_mode:
                inc, dec = ahl.pairwise_incidence(self.params[f"ahl.src.{g}"], self.params[f"ahl.dst.{g}"],
                                                  cfg.eta, cfg.beta, g, cfg.straight_through, frozen)
            else:
                inc, dec = ahl.learn_incidence(self.params[f"ahl.node.{g}"], self.params[f"ahl.hyper.{g}"],
                                               cfg.eta, cfg.beta, g, cfg.straight_through, frozen)
            structures.append(inc)
            decisions.append(dec)
        return structures, decisions

    def structures(self) -> list[ahl.IncidenceMatrix]:
        return self._learn_structures()[0]

    # forward

    def node_features(self, x: Tensor) -> list[Tensor]:
        p = self.params
        cfg = self.config
        x1 = mfe.embed_input(x, p["embed.weight"], p["embed.bias"])
        if cfg.aggregation == "conv":
            kernels = [p[f"mfe.kernel.{s}"] for s in range(1, cfg.n_scales)]
        else:
            kernels = [mfe.average_kernel(w, cfg.hidden_width) for w in cfg.windows]
        stack = mfe.build_pyramid(x1, cfg.scales, kernels)
        feats = []
        for xs in stack.sequences:
            h = tn.elu(tn.add(tn.matmul(xs, p["node_map.w1"]), p["node_map.b1"]))
            feats.append(tn.add(tn.matmul(h, p["node_map.w2"]), p["node_map.b2"]))
        return feats

    def forward(self, x) -> ForwardOutput:
        """Run the model on normalized univariate windows ``x`` of shape ``[B, T]``."""
        cfg = self.config
        p = self.params
        x = tn.as_tensor(x)
        if x.shape[-1] != cfg.input_length:
            raise tn.ShapeError(f"expected input length {cfg.input_length}, got {x.shape[-1]}")
        feats = self.node_features(x)
        groups = [tn.concat(feats, axis=-2)] if cfg.one_matrix else feats
        structures, _ = self._learn_structures()

        node_losses, hyper_losses, updated_nodes, edge_feats, enriched_all = [], [], [], [], []
        for g, (v, inc) in enumerate(zip(groups, structures)):
            h = inc.tensor()
            e = nhc.init_hyperedge_features(v, h)
            node_losses.append(nhc.node_loss(v, e, h, inc.binary))
            hyper_losses.append(nhc.hyperedge_loss(e, cfg.gamma))
            enriched = [interaction.attention_enrich(v, e, h, inc.binary, p[f"intra.{g}.{j}.w_node"],
                                                     p[f"intra.{g}.{j}.w_edge"], p[f"intra.{g}.{j}.bias"])
                        for j in range(cfg.heads)]
            projections = [p[f"intra.{g}.{j}.proj"] for j in range(cfg.heads)]
            updated_nodes.append(interaction.hypergraph_conv(v, enriched, h, projections))
            edge_feats.append(e)
            enriched_all.append(enriched)

        all_edges = tn.concat(edge_feats, axis=-2) if len(edge_feats) > 1 else edge_feats[0]
        mixed = interaction.inter_scale_attention(all_edges, p["inter.q"], p["inter.k"], p["inter.v"])
        slots, start = [], 0
        for inc in structures:
            part = tn.getitem(mixed, (Ellipsis, slice(start, start + inc.n_edges), slice(None)))
            slots.append(interaction.scatter_rows(part, inc.kept, inc.n_edges_total))
            start += inc.n_edges
        hyper_out = tn.concat(slots, axis=-2) if len(slots) > 1 else slots[0]
        pred = interaction.predict(updated_nodes, hyper_out, p["head.weight"], p["head.bias"])

        zeros = [Tensor(0.0)] * len(structures)
        constraint = nhc.combine(zeros if cfg.no_node_constraint else node_losses,
                                 zeros if cfg.no_hyper_constraint else hyper_losses,
                                 cfg.lam, cfg.gamma)
        return ForwardOutput(pred, constraint, structures, enriched_all)

    def forecast(self, windows: np.ndarray) -> np.ndarray:
        """Normalized forecasts ``[count, H, V]`` for normalized windows ``[count, T, V]``."""
        windows = np.asarray(windows, dtype=np.float64)
        count, t, v = windows.shape
        flat = np.transpose(windows, (0, 2, 1)).reshape(count * v, t)
        with tn.no_grad():
            pred = self.forward(Tensor(flat)).prediction.data
        return np.transpose(pred.reshape(count, v, -1), (0, 2, 1))


def mse_loss(prediction: Tensor, target) -> Tensor:
    return tn.mean(tn.square(tn.sub(prediction, target)))
